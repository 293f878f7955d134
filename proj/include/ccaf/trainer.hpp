#ifndef CCAF_TRAINER_HPP
#define CCAF_TRAINER_HPP

#include <map>
#include <optional>
#include <string>

#include "ccaf/config.hpp"
#include "ccaf/data.hpp"
#include "ccaf/losses.hpp"
#include "ccaf/model.hpp"

namespace ccaf {

struct TrainingConfig {
    int stage1_epochs = 120;
    double stage1_lr = 3.5e-4;
    int stage2_epochs = 40;
    double stage2_lr = 5e-6;
    int P = 16, K_p = 4;
    double margin = 0.3;
    double lambda1 = 0.1, lambda2 = 1.0;
    double temperature = 0.07;
    double weight_decay = 0.0;
    uint64_t seed = 0;
    int image_h = 256, image_w = 128;
    bool aug_hflip = true, aug_padcrop = true, aug_erase = true;
    // model dims (toy encoder)
    int C = 32, M = 4, d_tok = 64;
    int grid_h = 16, grid_w = 8, conv_f = 8;
    // ablation toggles
    bool use_i2t = true, use_i2i = true, use_cfm = true;
    int checkpoint_interval = 0;  // epochs between periodic stage-2 saves

    static TrainingConfig from_config(const Config& c);
};

double cosine_lr(double initial, int epoch, int total_epochs);

class Adam {
public:
    Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8,
         double weight_decay = 0.0)
        : beta1_(beta1), beta2_(beta2), eps_(eps), weight_decay_(weight_decay) {}

    void step(const NamedParams& params, double lr);

    TensorArchive state() const;
    void load_state(const TensorArchive& ar);

private:
    double beta1_, beta2_, eps_, weight_decay_;
    int64_t t_ = 0;
    std::map<std::string, Mat> m_, v_;
};

class Trainer {
public:
    Trainer(TrainingConfig cfg, DatasetManifest manifest, std::string run_dir);

    // Stage 1: prompt tokens only; encoders must be marked frozen.
    // Returns the checkpoint path.
    std::string run_stage1(Model& model, int start_epoch = 0,
                           const TensorArchive* opt_state = nullptr);
    // Stage 2: encoders, heads and projection; prompt bank must be frozen.
    std::string run_stage2(Model& model, int start_epoch = 0,
                           const TensorArchive* opt_state = nullptr);

    const TrainingConfig& config() const { return cfg_; }

    // loads a batch's raw/shielding/clothes image triplets with augmentation
    struct BatchImages {
        std::vector<Image> raw, shield, clothes;
        std::vector<int> identities, clothes_ids;
    };
    BatchImages load_batch(const std::vector<int>& indices, int stage, int epoch,
                           int iter);

private:
    void log_metric(int64_t step, const std::string& name, double value);
    const std::pair<Image, ParsingMap>& cached_sample(int index);

    TrainingConfig cfg_;
    DatasetManifest manifest_;
    std::string run_dir_;
    std::map<int, std::pair<Image, ParsingMap>> cache_;
};

// Restores model + optimizer state. Returns (model, optimizer archive, ok).
struct ResumeState {
    Model model;
    TensorArchive optimizer;
};
ResumeState resume(const std::string& ckpt_path, const TrainingConfig& cfg);

}  // namespace ccaf

#endif
