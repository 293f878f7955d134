#include "ccaf/trainer.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>

#include "ccaf/masking.hpp"
#include "ccaf/rng.hpp"

namespace fs = std::filesystem;

namespace ccaf {

TrainingConfig TrainingConfig::from_config(const Config& c) {
    TrainingConfig t;
    t.stage1_epochs = static_cast<int>(c.get_int("stage1.epochs", t.stage1_epochs));
    t.stage1_lr = c.get_double("stage1.lr", t.stage1_lr);
    t.stage2_epochs = static_cast<int>(c.get_int("stage2.epochs", t.stage2_epochs));
    t.stage2_lr = c.get_double("stage2.lr", t.stage2_lr);
    t.P = static_cast<int>(c.get_int("batch.p", t.P));
    t.K_p = static_cast<int>(c.get_int("batch.k_p", t.K_p));
    t.margin = c.get_double("loss.margin", t.margin);
    t.lambda1 = c.get_double("loss.lambda1", t.lambda1);
    t.lambda2 = c.get_double("loss.lambda2", t.lambda2);
    t.temperature = c.get_double("loss.temperature", t.temperature);
    t.weight_decay = c.get_double("optim.weight_decay", t.weight_decay);
    t.seed = static_cast<uint64_t>(c.get_int("run.seed", 0));
    t.image_h = static_cast<int>(c.get_int("data.image_h", t.image_h));
    t.image_w = static_cast<int>(c.get_int("data.image_w", t.image_w));
    t.aug_hflip = c.get_bool("augment.hflip", t.aug_hflip);
    t.aug_padcrop = c.get_bool("augment.padcrop", t.aug_padcrop);
    t.aug_erase = c.get_bool("augment.erase", t.aug_erase);
    t.C = static_cast<int>(c.get_int("model.c", t.C));
    t.M = static_cast<int>(c.get_int("model.m_tokens", t.M));
    t.d_tok = static_cast<int>(c.get_int("model.d_tok", t.d_tok));
    t.grid_h = static_cast<int>(c.get_int("model.grid_h", t.grid_h));
    t.grid_w = static_cast<int>(c.get_int("model.grid_w", t.grid_w));
    t.conv_f = static_cast<int>(c.get_int("model.conv_f", t.conv_f));
    t.use_i2t = c.get_bool("components.i2t", t.use_i2t);
    t.use_i2i = c.get_bool("components.i2i", t.use_i2i);
    t.use_cfm = c.get_bool("components.cfm", t.use_cfm);
    t.checkpoint_interval =
        static_cast<int>(c.get_int("run.checkpoint_interval", t.checkpoint_interval));
    if (t.stage1_epochs < 0 || t.stage2_epochs < 0 || t.stage1_lr <= 0 ||
        t.stage2_lr <= 0 || t.P <= 0 || t.K_p <= 0 || t.temperature <= 0)
        throw std::runtime_error("training config: rates and sizes must be positive");
    return t;
}

double cosine_lr(double initial, int epoch, int total_epochs) {
    if (total_epochs <= 1) return initial;
    double t = static_cast<double>(epoch) / static_cast<double>(total_epochs);
    return initial * 0.5 * (1.0 + std::cos(3.14159265358979323846 * t));
}

void Adam::step(const NamedParams& params, double lr) {
    ++t_;
    double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (auto& [name, p] : params) {
        if (p->grad.size() == 0) continue;
        Mat g = p->grad;
        if (weight_decay_ != 0.0) g += weight_decay_ * p->value;
        auto& m = m_.try_emplace(name, Mat::Zero(g.rows(), g.cols())).first->second;
        auto& v = v_.try_emplace(name, Mat::Zero(g.rows(), g.cols())).first->second;
        m = beta1_ * m + (1.0 - beta1_) * g;
        v = beta2_ * v + (1.0 - beta2_) * g.cwiseProduct(g);
        Mat m_hat = m / bc1;
        Mat v_hat = v / bc2;
        p->value -= lr * (m_hat.array() / (v_hat.array().sqrt() + eps_)).matrix();
    }
}

TensorArchive Adam::state() const {
    TensorArchive ar;
    for (auto& [n, m] : m_) ar.tensors[n + "/m"] = m;
    for (auto& [n, v] : v_) ar.tensors[n + "/v"] = v;
    ar.tensors["t"] = Mat::Constant(1, 1, static_cast<double>(t_));
    return ar;
}

void Adam::load_state(const TensorArchive& ar) {
    m_.clear();
    v_.clear();
    t_ = 0;
    for (auto& [n, t] : ar.tensors) {
        if (n == "t") t_ = static_cast<int64_t>(t(0, 0));
        else if (n.size() > 2 && n.substr(n.size() - 2) == "/m") m_[n.substr(0, n.size() - 2)] = t;
        else if (n.size() > 2 && n.substr(n.size() - 2) == "/v") v_[n.substr(0, n.size() - 2)] = t;
    }
}

// ---- Trainer ----

Trainer::Trainer(TrainingConfig cfg, DatasetManifest manifest, std::string run_dir)
    : cfg_(std::move(cfg)), manifest_(std::move(manifest)), run_dir_(std::move(run_dir)) {
    fs::create_directories(run_dir_);
}

void Trainer::log_metric(int64_t step, const std::string& name, double value) {
    std::ofstream out(fs::path(run_dir_) / "metrics.log", std::ios::app);
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.12g", value);
    out << step << ',' << name << ',' << buf << '\n';
}

const std::pair<Image, ParsingMap>& Trainer::cached_sample(int index) {
    auto it = cache_.find(index);
    if (it == cache_.end()) {
        it = cache_.emplace(index, load_sample(manifest_.records[index], cfg_.image_h,
                                               cfg_.image_w)).first;
    }
    return it->second;
}

namespace {

void hflip(Image& img, ParsingMap& parse) {
    for (auto& ch : img) ch = ch.rowwise().reverse().eval();
    parse = parse.rowwise().reverse().eval();
}

// pad 4 px (replicate image border, background parsing) then random crop
void pad_crop(Image& img, ParsingMap& parse, Rng& rng) {
    const int pad = 4;
    int h = static_cast<int>(img[0].rows()), w = static_cast<int>(img[0].cols());
    int oy = static_cast<int>(rng.next_below(2 * pad + 1));
    int ox = static_cast<int>(rng.next_below(2 * pad + 1));
    Image out;
    ParsingMap pout(h, w);
    for (int c = 0; c < 3; ++c) out[c] = Mat(h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            int sy = std::clamp(y + oy - pad, 0, h - 1);
            int sx = std::clamp(x + ox - pad, 0, w - 1);
            for (int c = 0; c < 3; ++c) out[c](y, x) = img[c](sy, sx);
            int py = y + oy - pad, px = x + ox - pad;
            pout(y, x) = (py < 0 || py >= h || px < 0 || px >= w) ? kBackground
                                                                  : parse(py, px);
        }
    img = out;
    parse = pout;
}

void random_erase(Image& img, Rng& rng) {
    if (rng.uniform() >= 0.5) return;
    int h = static_cast<int>(img[0].rows()), w = static_cast<int>(img[0].cols());
    int eh = std::max(1, static_cast<int>(rng.next_below(h / 4)) + h / 8);
    int ew = std::max(1, static_cast<int>(rng.next_below(w / 4)) + w / 8);
    int y0 = static_cast<int>(rng.next_below(std::max(1, h - eh)));
    int x0 = static_cast<int>(rng.next_below(std::max(1, w - ew)));
    double fill = rng.uniform() * 255.0;
    for (auto& ch : img) ch.block(y0, x0, eh, ew).setConstant(fill);
}

std::vector<int> unique_index(const std::vector<int>& labels,
                              std::vector<int>& pos_index) {
    std::vector<int> uniq;
    std::map<int, int> where;
    pos_index.resize(labels.size());
    for (size_t i = 0; i < labels.size(); ++i) {
        auto it = where.find(labels[i]);
        if (it == where.end()) {
            where[labels[i]] = static_cast<int>(uniq.size());
            uniq.push_back(labels[i]);
            it = where.find(labels[i]);
        }
        pos_index[i] = it->second;
    }
    return uniq;
}

}  // namespace

Trainer::BatchImages Trainer::load_batch(const std::vector<int>& indices, int stage,
                                         int epoch, int iter) {
    BatchImages b;
    for (size_t slot = 0; slot < indices.size(); ++slot) {
        int idx = indices[slot];
        auto [img, parse] = cached_sample(idx);
        Rng rng = Rng::derive(cfg_.seed, (static_cast<uint64_t>(stage) << 40) |
                                             (static_cast<uint64_t>(epoch) << 20) |
                                             static_cast<uint64_t>(iter),
                              slot);
        if (cfg_.aug_hflip && rng.uniform() < 0.5) hflip(img, parse);
        if (cfg_.aug_padcrop) pad_crop(img, parse, rng);
        BinaryMask mask = build_clothes_mask(parse, default_clothes_labels());
        b.shield.push_back(make_shielding_image(img, mask));
        b.clothes.push_back(make_clothes_image(img, mask));
        // erasing interacts with the 255-fill semantics; raw stream only
        if (cfg_.aug_erase) random_erase(img, rng);
        b.raw.push_back(std::move(img));
        b.identities.push_back(manifest_.records[idx].identity);
        b.clothes_ids.push_back(manifest_.records[idx].clothes_id);
    }
    return b;
}

std::string Trainer::run_stage1(Model& model, int start_epoch,
                                const TensorArchive* opt_state) {
    if (model.raw.trainable || model.shield.trainable)
        throw std::runtime_error("stage 1: encoders must be marked frozen");
    uint64_t enc_sum = checksum_params(model.encoder_params());

    Adam opt(0.9, 0.999, 1e-8, cfg_.weight_decay);
    if (opt_state) opt.load_state(*opt_state);
    SimilarityConfig sim{cfg_.temperature};
    NamedParams prompt_params = model.prompts.params();

    bool train_id_prompts = cfg_.use_i2t || cfg_.use_i2i;
    bool train_clothes_prompts = cfg_.use_cfm;

    for (int epoch = start_epoch; epoch < cfg_.stage1_epochs; ++epoch) {
        double lr = cosine_lr(cfg_.stage1_lr, epoch, cfg_.stage1_epochs);
        auto batches = make_pk_batches(manifest_, cfg_.P, cfg_.K_p,
                                       Rng::derive(cfg_.seed, 1000 + epoch).next_u64());
        for (size_t it = 0; it < batches.size(); ++it) {
            BatchImages b = load_batch(batches[it], 1, epoch, static_cast<int>(it));
            int64_t step = static_cast<int64_t>(epoch) * batches.size() + it;

            Var zero = constant(0.0);
            Stage1Terms terms{zero, zero, zero, zero};
            if (train_id_prompts) {
                Var f_s = model.raw.encode(b.shield, /*with_grad=*/false);
                std::vector<int> pos;
                auto uniq = unique_index(b.identities, pos);
                Var p_id = model.text.encode(model.prompts, PromptKind::kIdentity,
                                             uniq, /*with_grad=*/true);
                terms.i2t = prompt_contrastive_loss(f_s, p_id, pos,
                                                    Direction::kImageToText, sim);
                terms.t2i = prompt_contrastive_loss(f_s, p_id, pos,
                                                    Direction::kTextToImage, sim);
            }
            if (train_clothes_prompts) {
                Var f_c = model.raw.encode(b.clothes, /*with_grad=*/false);
                std::vector<int> pos_c;
                auto uniq_c = unique_index(b.clothes_ids, pos_c);
                Var p_c = model.text.encode(model.prompts, PromptKind::kClothes,
                                            uniq_c, /*with_grad=*/true);
                terms.i2t_c = prompt_contrastive_loss(f_c, p_c, pos_c,
                                                      Direction::kImageToText, sim);
                terms.t2i_c = prompt_contrastive_loss(f_c, p_c, pos_c,
                                                      Direction::kTextToImage, sim);
            }
            auto [total, report] = stage1_total(terms);
            if (total->requires_grad) {
                zero_grad(vars_of(prompt_params));
                backward(total);
                opt.step(prompt_params, lr);
            }
            log_metric(step, "stage1/i2t", terms.i2t->scalar());
            log_metric(step, "stage1/t2i", terms.t2i->scalar());
            log_metric(step, "stage1/i2t_c", terms.i2t_c->scalar());
            log_metric(step, "stage1/t2i_c", terms.t2i_c->scalar());
            log_metric(step, "stage1/total", report.value);
        }
    }

    if (checksum_params(model.encoder_params()) != enc_sum)
        throw std::runtime_error("stage 1: encoder parameters changed (frozen-stage violation)");

    std::string path = (fs::path(run_dir_) / "stage1.ckpt").string();
    TensorArchive opt_ar = opt.state();
    model.meta.seed = cfg_.seed;
    model.save(path, 1, cfg_.stage1_epochs, &opt_ar);
    return path;
}

std::string Trainer::run_stage2(Model& model, int start_epoch,
                                const TensorArchive* opt_state) {
    uint64_t prompt_sum = checksum_params(model.prompts.params());

    Adam opt_main(0.9, 0.999, 1e-8, cfg_.weight_decay);
    Adam opt_proj(0.9, 0.999, 1e-8, cfg_.weight_decay);
    if (opt_state) {
        TensorArchive main_ar, proj_ar;
        for (auto& [n, t] : opt_state->tensors) {
            if (n.rfind("main/", 0) == 0) main_ar.tensors[n.substr(5)] = t;
            if (n.rfind("proj/", 0) == 0) proj_ar.tensors[n.substr(5)] = t;
        }
        opt_main.load_state(main_ar);
        opt_proj.load_state(proj_ar);
    }
    SimilarityConfig sim{cfg_.temperature};

    NamedParams main_params = model.encoder_params();
    for (auto& np : model.head_id.params("head_id")) main_params.push_back(np);
    for (auto& np : model.head_id_s.params("head_id_s")) main_params.push_back(np);
    NamedParams proj_params = {{"proj_c", model.proj_c}};

    // prompt bank and text path are frozen: compute prompt features once
    Var p_id_all = model.text.encode_all(model.prompts, PromptKind::kIdentity, false);
    Var p_c_all = model.text.encode_all(model.prompts, PromptKind::kClothes, false);

    for (int epoch = start_epoch; epoch < cfg_.stage2_epochs; ++epoch) {
        double lr = cosine_lr(cfg_.stage2_lr, epoch, cfg_.stage2_epochs);
        auto batches = make_pk_batches(manifest_, cfg_.P, cfg_.K_p,
                                       Rng::derive(cfg_.seed, 2000 + epoch).next_u64());
        for (size_t it = 0; it < batches.size(); ++it) {
            BatchImages b = load_batch(batches[it], 2, epoch, static_cast<int>(it));
            int64_t step = static_cast<int64_t>(epoch) * batches.size() + it;

            Var f_raw = model.raw.encode(b.raw, /*with_grad=*/true);
            Var zero = constant(0.0);
            Stage2Terms terms{zero, zero, zero, zero, zero, zero, zero};

            // (b) examine: clothes projection learns against clothes prompts,
            // gradients reach proj_c only
            if (cfg_.use_cfm) {
                Var f_c = matmul(detach(f_raw), model.proj_c);
                terms.i2tce_c = i2tce_loss(f_c, detach(p_c_all), b.clothes_ids, sim);
                zero_grad(vars_of(proj_params));
                backward(terms.i2tce_c);
                opt_proj.step(proj_params, lr);
            }

            // (c) main pass: raw + shielding streams under the composite loss
            Var logits = model.head_id.logits(f_raw, /*training=*/true);
            terms.id = add(ce_loss(logits, b.identities),
                           triplet_loss(f_raw, b.identities, cfg_.margin));
            if (cfg_.use_i2t)
                terms.i2tce = i2tce_loss(f_raw, detach(p_id_all), b.identities, sim);
            Var f_shield;
            if (cfg_.use_i2i) {
                f_shield = model.shield.encode(b.shield, /*with_grad=*/true);
                Var logits_s = model.head_id_s.logits(f_shield, /*training=*/true);
                terms.id_s = add(ce_loss(logits_s, b.identities),
                                 triplet_loss(f_shield, b.identities, cfg_.margin));
                terms.i2tce_s =
                    i2tce_loss(f_shield, detach(p_id_all), b.identities, sim);
                terms.con = centroid_consistency_loss(f_raw, f_shield, b.identities);
            }
            // disentangle pushes f_raw away from the frozen clothes direction
            if (cfg_.use_cfm) {
                Var f_c_fixed = matmul(detach(f_raw), detach(model.proj_c));
                terms.dis = disentangle_loss(f_raw, f_c_fixed);
            }

            auto [total, report] = stage2_total(terms, cfg_.lambda1, cfg_.lambda2);
            zero_grad(vars_of(main_params));
            backward(total);
            opt_main.step(main_params, lr);

            log_metric(step, "stage2/id", terms.id->scalar());
            log_metric(step, "stage2/i2tce", terms.i2tce->scalar());
            log_metric(step, "stage2/id_s", terms.id_s->scalar());
            log_metric(step, "stage2/i2tce_s", terms.i2tce_s->scalar());
            log_metric(step, "stage2/i2tce_c", terms.i2tce_c->scalar());
            log_metric(step, "stage2/con", terms.con->scalar());
            log_metric(step, "stage2/dis", terms.dis->scalar());
            log_metric(step, "stage2/total", report.value);
        }
        if (cfg_.checkpoint_interval > 0 && (epoch + 1) % cfg_.checkpoint_interval == 0 &&
            epoch + 1 < cfg_.stage2_epochs) {
            TensorArchive st;
            for (auto& [n, t] : opt_main.state().tensors) st.tensors["main/" + n] = t;
            for (auto& [n, t] : opt_proj.state().tensors) st.tensors["proj/" + n] = t;
            model.save((fs::path(run_dir_) / ("stage2_epoch" + std::to_string(epoch + 1) +
                                              ".ckpt")).string(),
                       2, epoch + 1, &st);
        }
    }

    if (checksum_params(model.prompts.params()) != prompt_sum)
        throw std::runtime_error("stage 2: prompt bank changed (frozen-stage violation)");

    std::string path = (fs::path(run_dir_) / "stage2.ckpt").string();
    TensorArchive st;
    for (auto& [n, t] : opt_main.state().tensors) st.tensors["main/" + n] = t;
    for (auto& [n, t] : opt_proj.state().tensors) st.tensors["proj/" + n] = t;
    model.meta.seed = cfg_.seed;
    model.save(path, 2, cfg_.stage2_epochs, &st);
    return path;
}

ResumeState resume(const std::string& ckpt_path, const TrainingConfig& cfg) {
    ResumeState rs{Model::build_toy(4, 1, 4, 1, 1, 0), {}};
    rs.model = Model::load(ckpt_path, &rs.optimizer);
    if (rs.model.meta.C != cfg.C)
        throw std::runtime_error("resume: checkpoint C=" + std::to_string(rs.model.meta.C) +
                                 " does not match config C=" + std::to_string(cfg.C));
    if (rs.model.meta.seed != cfg.seed)
        std::cerr << "warning: resuming with seed " << cfg.seed
                  << " but checkpoint was trained with seed " << rs.model.meta.seed
                  << "\n";
    return rs;
}

}  // namespace ccaf
