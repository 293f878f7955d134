#include "ccaf/model.hpp"

#include <nlohmann/json.hpp>

#include <stdexcept>

namespace ccaf {

using nlohmann::json;

std::vector<Var> vars_of(const NamedParams& p) {
    std::vector<Var> out;
    out.reserve(p.size());
    for (auto& [_, v] : p) out.push_back(v);
    return out;
}

uint64_t checksum_params(const NamedParams& p) {
    uint64_t h = 1469598103934665603ull;
    for (auto& [name, v] : p) {
        h = fnv1a(name.data(), name.size(), h);
        h = fnv1a(v->value.data(), sizeof(double) * v->value.size(), h);
    }
    return h;
}

// ---- ToyEncoder ----

ToyEncoder::ToyEncoder(std::string stream, int C, int grid_h, int grid_w,
                       int conv_f, Rng& rng)
    : stream_(std::move(stream)), C_(C), grid_h_(grid_h), grid_w_(grid_w),
      conv_f_(conv_f) {
    if (C < 4) throw std::invalid_argument("encoder: C must be >= 4");
    if (grid_h % 2 || grid_w % 2)
        throw std::invalid_argument("encoder: grid dims must be even");
    int fc_in = (grid_h / 2) * (grid_w / 2) * conv_f;
    conv_w_ = leaf(rng.normal_mat(27, conv_f, 1.0 / std::sqrt(27.0)));
    conv_b_ = leaf(Mat::Zero(1, conv_f));
    fc_w_ = leaf(rng.normal_mat(fc_in, C, 1.0 / std::sqrt(static_cast<double>(fc_in))));
    fc_b_ = leaf(Mat::Zero(1, C));
}

NamedParams ToyEncoder::params() const {
    return {{"conv_w", conv_w_}, {"conv_b", conv_b_}, {"fc_w", fc_w_}, {"fc_b", fc_b_}};
}

Mat ToyEncoder::im2col(const std::vector<Image>& images) const {
    int n = static_cast<int>(images.size());
    int bh = grid_h_ / 2, bw = grid_w_ / 2;
    Mat cols(n * grid_h_ * grid_w_, 27);
    std::vector<Mat> grid(3);
    int row = 0;
    for (int s = 0; s < n; ++s) {
        const Image& img = images[s];
        int H = static_cast<int>(img[0].rows()), W = static_cast<int>(img[0].cols());
        if (H % grid_h_ || W % grid_w_)
            throw std::invalid_argument("encoder: image size not divisible by grid");
        int ph = H / grid_h_, pw = W / grid_w_;
        for (int c = 0; c < 3; ++c) {
            grid[c] = Mat(grid_h_, grid_w_);
            for (int y = 0; y < grid_h_; ++y)
                for (int x = 0; x < grid_w_; ++x)
                    grid[c](y, x) =
                        img[c].block(y * ph, x * pw, ph, pw).mean() / 255.0 - 0.5;
        }
        // rows grouped by 2x2 pool block so pooling is a consecutive-row mean
        for (int by = 0; by < bh; ++by)
            for (int bx = 0; bx < bw; ++bx)
                for (int dy = 0; dy < 2; ++dy)
                    for (int dx = 0; dx < 2; ++dx) {
                        int y = by * 2 + dy, x = bx * 2 + dx;
                        for (int c = 0; c < 3; ++c)
                            for (int ky = -1; ky <= 1; ++ky)
                                for (int kx = -1; kx <= 1; ++kx) {
                                    int yy = y + ky, xx = x + kx;
                                    double v = (yy < 0 || yy >= grid_h_ || xx < 0 ||
                                                xx >= grid_w_)
                                                   ? 0.0
                                                   : grid[c](yy, xx);
                                    cols(row, c * 9 + (ky + 1) * 3 + (kx + 1)) = v;
                                }
                        ++row;
                    }
    }
    return cols;
}

Var ToyEncoder::encode(const std::vector<Image>& images, bool with_grad) const {
    if (images.empty()) return constant(Mat(0, C_));
    Var cols = constant(im2col(images));
    Var cw = with_grad ? conv_w_ : detach(conv_w_);
    Var cb = with_grad ? conv_b_ : detach(conv_b_);
    Var fw = with_grad ? fc_w_ : detach(fc_w_);
    Var fb = with_grad ? fc_b_ : detach(fc_b_);
    Var h = relu(rowwise_add(matmul(cols, cw), cb));
    h = group_row_mean(h, 4);                                  // 2x2 mean pool
    h = flatten_rows(h, (grid_h_ / 2) * (grid_w_ / 2));        // per-sample vector
    return rowwise_add(matmul(h, fw), fb);
}

// ---- PromptBank ----

PromptBank::PromptBank(int K, int K_c, int M_, int d_tok_, Rng& rng) {
    M = M_;
    d_tok = d_tok_;
    identity_tokens = leaf(rng.normal_mat(K, M * d_tok, 0.02));
    clothes_tokens = leaf(rng.normal_mat(K_c, M * d_tok, 0.02));
    identity_template = rng.normal_mat(1, d_tok, 1.0);
    clothes_template = rng.normal_mat(1, d_tok, 1.0);
}

NamedParams PromptBank::params() const {
    return {{"prompt_bank/identity", identity_tokens},
            {"prompt_bank/clothes", clothes_tokens}};
}

// ---- TextEncoderStub ----

TextEncoderStub::TextEncoderStub(int d_tok, int C, Rng& rng) {
    W = rng.normal_mat(d_tok, C, 1.0 / std::sqrt(static_cast<double>(d_tok)));
    b = rng.normal_mat(1, C, 0.01);
}

static Mat token_mean_matrix(int M, int d_tok) {
    Mat A = Mat::Zero(M * d_tok, d_tok);
    for (int m = 0; m < M; ++m)
        for (int j = 0; j < d_tok; ++j) A(m * d_tok + j, j) = 1.0 / M;
    return A;
}

Var TextEncoderStub::encode_all(const PromptBank& bank, PromptKind kind,
                                bool with_grad) const {
    const Var& tokens =
        kind == PromptKind::kIdentity ? bank.identity_tokens : bank.clothes_tokens;
    const Mat& tmpl =
        kind == PromptKind::kIdentity ? bank.identity_template : bank.clothes_template;
    Var t = with_grad ? tokens : detach(tokens);
    Var pooled = matmul(t, constant(token_mean_matrix(bank.M, bank.d_tok)));
    Var ctx = rowwise_add(pooled, constant(tmpl));
    return rowwise_add(matmul(ctx, constant(W)), constant(b));
}

Var TextEncoderStub::encode(const PromptBank& bank, PromptKind kind,
                            const std::vector<int>& labels, bool with_grad) const {
    int limit = static_cast<int>(
        (kind == PromptKind::kIdentity ? bank.identity_tokens : bank.clothes_tokens)
            ->value.rows());
    for (int l : labels)
        if (l < 0 || l >= limit)
            throw std::out_of_range("prompt label " + std::to_string(l) +
                                    " out of range [0," + std::to_string(limit) + ")");
    return rows_subset(encode_all(bank, kind, with_grad), labels);
}

// ---- BNNeckHead ----

BNNeckHead::BNNeckHead(int C, int K, Rng& rng) {
    gamma = leaf(Mat::Ones(1, C));
    beta = leaf(Mat::Zero(1, C));
    W = leaf(rng.normal_mat(C, K, 1.0 / std::sqrt(static_cast<double>(C))));
    running_mean = Mat::Zero(1, C);
    running_var = Mat::Ones(1, C);
}

Var BNNeckHead::logits(const Var& features, bool training) {
    Var bn = batch_norm(features, gamma, beta, running_mean, running_var, training);
    return matmul(bn, W);
}

NamedParams BNNeckHead::params(const std::string& prefix) const {
    return {{prefix + "/gamma", gamma}, {prefix + "/beta", beta}, {prefix + "/W", W}};
}

// ---- Model ----

Model Model::build_toy(int C, int M, int d_tok, int K, int K_c, uint64_t seed,
                       int grid_h, int grid_w, int conv_f) {
    Model m;
    Rng r_raw = Rng::derive(seed, 1);
    Rng r_shield = Rng::derive(seed, 2);
    Rng r_text = Rng::derive(seed, 3);
    Rng r_prompt = Rng::derive(seed, 4);
    Rng r_heads = Rng::derive(seed, 5);
    m.raw = ToyEncoder("raw", C, grid_h, grid_w, conv_f, r_raw);
    m.shield = ToyEncoder("shielding", C, grid_h, grid_w, conv_f, r_shield);
    m.text = TextEncoderStub(d_tok, C, r_text);
    m.prompts = PromptBank(K, K_c, M, d_tok, r_prompt);
    m.proj_c = leaf(Rng::derive(seed, 6).normal_mat(C, C, 1.0 / std::sqrt(static_cast<double>(C))));
    m.head_id = BNNeckHead(C, K, r_heads);
    m.head_id_s = BNNeckHead(C, K, r_heads);
    m.meta = {C, M, d_tok, K, K_c, grid_h, grid_w, conv_f, 0, 0, seed};
    return m;
}

Var Model::project_clothes(const Var& features, bool with_grad) const {
    if (features->value.cols() != proj_c->value.rows())
        throw std::invalid_argument("project_clothes: dimension mismatch");
    return matmul(features, with_grad ? proj_c : detach(proj_c));
}

static NamedParams prefixed(const std::string& prefix, const NamedParams& p) {
    NamedParams out;
    for (auto& [n, v] : p) out.emplace_back(prefix + "/" + n, v);
    return out;
}

NamedParams Model::encoder_params() const {
    NamedParams out = prefixed("raw_encoder", raw.params());
    for (auto& np : prefixed("shield_encoder", shield.params())) out.push_back(np);
    return out;
}

NamedParams Model::all_params() const {
    NamedParams out = encoder_params();
    for (auto& np : prompts.params()) out.push_back(np);
    out.emplace_back("proj_c", proj_c);
    for (auto& np : head_id.params("head_id")) out.push_back(np);
    for (auto& np : head_id_s.params("head_id_s")) out.push_back(np);
    return out;
}

void Model::save(const std::string& path, int stage, int epoch,
                 const TensorArchive* optimizer_state) const {
    TensorArchive ar;
    for (auto& [n, v] : all_params()) ar.tensors[n] = v->value;
    ar.tensors["text/W"] = text.W;
    ar.tensors["text/b"] = text.b;
    ar.tensors["prompt_bank/identity_template"] = prompts.identity_template;
    ar.tensors["prompt_bank/clothes_template"] = prompts.clothes_template;
    ar.tensors["head_id/running_mean"] = head_id.running_mean;
    ar.tensors["head_id/running_var"] = head_id.running_var;
    ar.tensors["head_id_s/running_mean"] = head_id_s.running_mean;
    ar.tensors["head_id_s/running_var"] = head_id_s.running_var;
    if (optimizer_state)
        for (auto& [n, t] : optimizer_state->tensors) ar.tensors["opt/" + n] = t;
    json j;
    j["C"] = this->meta.C;
    j["M"] = this->meta.M;
    j["d_tok"] = this->meta.d_tok;
    j["K"] = this->meta.K;
    j["K_c"] = this->meta.K_c;
    j["grid_h"] = this->meta.grid_h;
    j["grid_w"] = this->meta.grid_w;
    j["conv_f"] = this->meta.conv_f;
    j["stage"] = stage;
    j["epoch"] = epoch;
    j["seed"] = this->meta.seed;
    ar.metadata_json = j.dump();
    ar.save(path);
}

Model Model::load(const std::string& path, TensorArchive* optimizer_state) {
    TensorArchive ar = TensorArchive::load(path);
    json j = json::parse(ar.metadata_json);
    Model m = build_toy(j["C"], j["M"], j["d_tok"], j["K"], j["K_c"],
                        j["seed"].get<uint64_t>(), j["grid_h"], j["grid_w"],
                        j["conv_f"]);
    m.meta.stage = j["stage"];
    m.meta.epoch = j["epoch"];
    for (auto& [n, v] : m.all_params()) {
        auto it = ar.tensors.find(n);
        if (it == ar.tensors.end())
            throw std::runtime_error("checkpoint: missing tensor " + n);
        if (it->second.rows() != v->value.rows() || it->second.cols() != v->value.cols())
            throw std::runtime_error("checkpoint: shape mismatch for " + n);
        v->value = it->second;
    }
    m.text.W = ar.tensors.at("text/W");
    m.text.b = ar.tensors.at("text/b");
    m.prompts.identity_template = ar.tensors.at("prompt_bank/identity_template");
    m.prompts.clothes_template = ar.tensors.at("prompt_bank/clothes_template");
    m.head_id.running_mean = ar.tensors.at("head_id/running_mean");
    m.head_id.running_var = ar.tensors.at("head_id/running_var");
    m.head_id_s.running_mean = ar.tensors.at("head_id_s/running_mean");
    m.head_id_s.running_var = ar.tensors.at("head_id_s/running_var");
    if (optimizer_state) {
        for (auto& [n, t] : ar.tensors)
            if (n.rfind("opt/", 0) == 0) optimizer_state->tensors[n.substr(4)] = t;
    }
    return m;
}

}  // namespace ccaf
