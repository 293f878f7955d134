#ifndef CCAF_MODEL_HPP
#define CCAF_MODEL_HPP

#include <string>
#include <vector>

#include "ccaf/archive.hpp"
#include "ccaf/autodiff.hpp"
#include "ccaf/data.hpp"
#include "ccaf/rng.hpp"

namespace ccaf {

using NamedParams = std::vector<std::pair<std::string, Var>>;

std::vector<Var> vars_of(const NamedParams& p);
uint64_t checksum_params(const NamedParams& p);

// Small convolutional image encoder: fixed average-pool to a coarse grid,
// one 3x3 conv, 2x2 mean pool, then a linear map to C dims. Input images
// are raw [0,255]; normalization happens here.
class ToyEncoder {
public:
    ToyEncoder() = default;
    ToyEncoder(std::string stream, int C, int grid_h, int grid_w, int conv_f,
               Rng& rng);

    // n_b x C features. with_grad=false runs through detached parameters.
    Var encode(const std::vector<Image>& images, bool with_grad) const;

    NamedParams params() const;
    const std::string& stream() const { return stream_; }
    int feature_dim() const { return C_; }
    bool trainable = true;

    int grid_h() const { return grid_h_; }
    int grid_w() const { return grid_w_; }
    int conv_f() const { return conv_f_; }

private:
    Mat im2col(const std::vector<Image>& images) const;

    std::string stream_;
    int C_ = 0, grid_h_ = 0, grid_w_ = 0, conv_f_ = 0;
    Var conv_w_, conv_b_, fc_w_, fc_b_;
};

// Learnable prompt tokens per identity and per clothes class, stored as
// one row of M concatenated d_tok embeddings per label, plus frozen
// template context vectors.
struct PromptBank {
    int M = 0, d_tok = 0;
    Var identity_tokens;  // K x (M*d_tok)
    Var clothes_tokens;   // K_c x (M*d_tok)
    Mat identity_template;  // 1 x d_tok, frozen ("A photo of a ... person")
    Mat clothes_template;   // 1 x d_tok, frozen ("A photo of ... clothes")

    PromptBank() = default;
    PromptBank(int K, int K_c, int M, int d_tok, Rng& rng);
    NamedParams params() const;
};

enum class PromptKind { kIdentity, kClothes };

// Frozen random affine map from mean-pooled tokens (+ template context)
// to the C-dimensional feature space. Stands in for a text transformer at
// desk scale; only the prompt tokens ever receive gradients.
struct TextEncoderStub {
    Mat W;  // d_tok x C
    Mat b;  // 1 x C

    TextEncoderStub() = default;
    TextEncoderStub(int d_tok, int C, Rng& rng);

    // features for the given labels (one row per label)
    Var encode(const PromptBank& bank, PromptKind kind,
               const std::vector<int>& labels, bool with_grad) const;
    // features for every label of the kind, row l = label l
    Var encode_all(const PromptBank& bank, PromptKind kind, bool with_grad) const;
};

// BNNeck: triplet consumes pre-BN features, cross-entropy consumes the
// post-BN linear logits (no bias).
struct BNNeckHead {
    Var gamma, beta;  // 1 x C
    Var W;            // C x K
    Mat running_mean, running_var;

    BNNeckHead() = default;
    BNNeckHead(int C, int K, Rng& rng);
    Var logits(const Var& features, bool training);
    NamedParams params(const std::string& prefix) const;
};

struct ModelMeta {
    int C = 0, M = 0, d_tok = 0, K = 0, K_c = 0;
    int grid_h = 0, grid_w = 0, conv_f = 0;
    int stage = 0, epoch = 0;
    uint64_t seed = 0;
};

// The full parameter bundle: raw/shielding encoders, text stub, prompt
// bank, clothes projection, and the two BNNeck heads.
struct Model {
    ToyEncoder raw, shield;
    TextEncoderStub text;
    PromptBank prompts;
    Var proj_c;  // C x C
    BNNeckHead head_id, head_id_s;
    ModelMeta meta;

    static Model build_toy(int C, int M, int d_tok, int K, int K_c,
                           uint64_t seed, int grid_h = 16, int grid_w = 8,
                           int conv_f = 8);

    Var project_clothes(const Var& features, bool with_grad) const;

    NamedParams encoder_params() const;  // raw + shield
    NamedParams all_params() const;

    void save(const std::string& path, int stage, int epoch,
              const TensorArchive* optimizer_state = nullptr) const;
    static Model load(const std::string& path, TensorArchive* optimizer_state = nullptr);
};

}  // namespace ccaf

#endif
