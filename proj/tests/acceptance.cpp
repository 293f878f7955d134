// End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
// the exit code is the number of failures.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <vector>

#include "ccaf/eval.hpp"
#include "ccaf/losses.hpp"
#include "ccaf/masking.hpp"
#include "ccaf/toybench.hpp"
#include "ccaf/trainer.hpp"
#include "helpers.hpp"

using namespace ccaf;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void report(const std::string& name, bool ok, const std::string& detail) {
    std::printf("[%s] %s — %s\n", ok ? "PASS" : "FAIL", name.c_str(), detail.c_str());
    std::fflush(stdout);
    if (!ok) ++failures;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---- shared toy corpus and training recipe ------------------------------

std::string toyset_dir;
DatasetManifest toyset;

TrainingConfig recipe() {
    TrainingConfig c;
    c.stage1_epochs = 30;
    c.stage1_lr = 0.005;
    c.stage2_epochs = 20;
    c.stage2_lr = 0.001;
    c.P = 8;
    c.K_p = 4;
    c.lambda2 = 0.2;
    c.seed = 3;
    c.image_h = 64;
    c.image_w = 32;
    c.aug_hflip = false;
    c.aug_padcrop = false;
    c.aug_erase = false;
    c.C = 32;
    return c;
}

Model build(const TrainingConfig& c) {
    return Model::build_toy(c.C, c.M, c.d_tok, toyset.K, toyset.K_c, c.seed,
                            c.grid_h, c.grid_w, c.conv_f);
}

// stage 1 + stage 2 with the given component toggles; returns the trained model
Model train_variant(const TrainingConfig& cfg, const std::string& tag) {
    Trainer tr(cfg, toyset, testing::temp_dir("accept_" + tag));
    Model m = build(cfg);
    m.raw.trainable = false;
    m.shield.trainable = false;
    tr.run_stage1(m);
    m.raw.trainable = true;
    m.shield.trainable = true;
    tr.run_stage2(m);
    return m;
}

double cloth_changing_rank1(const Model& m, const TrainingConfig& cfg) {
    std::vector<Sample> query, gallery;
    for (const auto& r : toyset.records) {
        if (r.split == Split::kQuery) query.push_back(r);
        if (r.split == Split::kGallery) gallery.push_back(r);
    }
    Mat qf = extract_features(m.raw, query, cfg.image_h, cfg.image_w);
    Mat gf = extract_features(m.raw, gallery, cfg.image_h, cfg.image_w);
    return score(qf, gf, query, gallery, Protocol::kClothChanging).cmc_at(1);
}

// ---- criterion 1: finite-difference gradient checks ----------------------

void check_gradient_correctness() {
    auto t0 = std::chrono::steady_clock::now();
    const int n = 8, C = 8, K = 8;
    SimilarityConfig sim;
    double worst = 0.0;
    bool ok = true;
    auto run = [&](const std::string& name, uint64_t seed,
                   const std::function<testing::GradCheck(Rng&)>& one) {
        for (int trial = 0; trial < 20; ++trial) {
            Rng rng = Rng::derive(seed, trial);
            auto r = one(rng);
            worst = std::max(worst, r.max_rel_err);
            if (!r.ok) {
                ok = false;
                std::printf("  gradient mismatch: %s trial %d (rel err %.3g)\n",
                            name.c_str(), trial, r.max_rel_err);
            }
        }
    };
    std::vector<int> labels = {0, 0, 1, 1, 2, 2, 3, 3};

    run("ce", 101, [&](Rng& rng) {
        Var logits = leaf(rng.normal_mat(n, K));
        return testing::check_gradients({logits}, [&] { return ce_loss(logits, labels); });
    });
    run("triplet", 102, [&](Rng& rng) {
        Var f = leaf(rng.normal_mat(n, C));
        return testing::check_gradients({f}, [&] { return triplet_loss(f, labels, 0.3); });
    });
    run("i2t", 103, [&](Rng& rng) {
        Var f = leaf(rng.normal_mat(n, C));
        Var p = leaf(rng.normal_mat(4, C));
        return testing::check_gradients({f, p}, [&] {
            return prompt_contrastive_loss(f, p, labels, Direction::kImageToText, sim);
        });
    });
    run("t2i", 104, [&](Rng& rng) {
        Var f = leaf(rng.normal_mat(n, C));
        Var p = leaf(rng.normal_mat(4, C));
        return testing::check_gradients({f, p}, [&] {
            return prompt_contrastive_loss(f, p, labels, Direction::kTextToImage, sim);
        });
    });
    run("i2tce", 105, [&](Rng& rng) {
        Var f = leaf(rng.normal_mat(n, C));
        Var p = leaf(rng.normal_mat(K, C));
        return testing::check_gradients({f, p}, [&] { return i2tce_loss(f, p, labels, sim); });
    });
    run("centroid", 106, [&](Rng& rng) {
        Var a = leaf(rng.normal_mat(n, C));
        Var b = leaf(rng.normal_mat(n, C));
        return testing::check_gradients({a, b}, [&] {
            return centroid_consistency_loss(a, b, labels);
        });
    });
    run("disentangle", 107, [&](Rng& rng) {
        Var a = leaf(rng.normal_mat(n, C));
        Var b = leaf(rng.normal_mat(n, C));
        return testing::check_gradients({a}, [&] { return disentangle_loss(a, b); });
    });
    run("stage totals", 108, [&](Rng& rng) {
        Var f = leaf(rng.normal_mat(n, C));
        Var g = leaf(rng.normal_mat(n, C));
        Var p = leaf(rng.normal_mat(K, C));
        // the disentangle term treats the clothes side as a constant, so pin
        // its value: otherwise the difference quotient sees a slope through g
        // that the graph (correctly) reports as zero
        Mat clothes = rng.normal_mat(n, C);
        return testing::check_gradients({f, g, p}, [&] {
            Stage1Terms s1{prompt_contrastive_loss(f, p, labels, Direction::kImageToText, sim),
                           prompt_contrastive_loss(f, p, labels, Direction::kTextToImage, sim),
                           constant(0.0), constant(0.0)};
            Stage2Terms s2{triplet_loss(f, labels, 0.3),
                           i2tce_loss(f, p, labels, sim),
                           ce_loss(g, labels),
                           i2tce_loss(g, p, labels, sim),
                           constant(0.0),
                           centroid_consistency_loss(f, g, labels),
                           disentangle_loss(f, constant(clothes))};
            return add(stage1_total(s1).first, stage2_total(s2, 0.1, 1.0).first);
        });
    });

    double dt = seconds_since(t0);
    char d[128];
    std::snprintf(d, sizeof(d), "max rel err %.3g over 20 instances per loss, %.1fs%s",
                  worst, dt, dt < 60 ? "" : " (OVER BUDGET)");
    report("gradient correctness vs central finite differences", ok && dt < 60, d);
}

// ---- criterion 2: gradient routing ---------------------------------------

void check_gradient_routing() {
    auto t0 = std::chrono::steady_clock::now();
    TrainingConfig cfg = recipe();
    SimilarityConfig sim{cfg.temperature};
    bool ok = true;
    std::string why;

    Trainer tr(cfg, toyset, testing::temp_dir("accept_routing"));
    Model m = build(cfg);
    auto batches = make_pk_batches(toyset, cfg.P, cfg.K_p, 5);
    auto b = tr.load_batch(batches[0], 2, 0, 0);

    // the clothes-examining loss reaches only the projection matrix
    zero_grad(vars_of(m.all_params()));
    Var f_raw = m.raw.encode(b.raw, true);
    Var p_c_all = m.text.encode_all(m.prompts, PromptKind::kClothes, false);
    Var f_c = matmul(detach(f_raw), m.proj_c);
    backward(i2tce_loss(f_c, detach(p_c_all), b.clothes_ids, sim));
    for (auto& [name, p] : m.encoder_params())
        if (p->grad.size() != 0 && p->grad.cwiseAbs().maxCoeff() != 0.0) {
            ok = false;
            why = "i2tce_c gradient leaked into " + name;
        }
    if (m.proj_c->grad.size() == 0 || m.proj_c->grad.cwiseAbs().maxCoeff() == 0.0) {
        ok = false;
        why = "i2tce_c produced no gradient on proj_c";
    }

    // the disentangling loss never touches the projection matrix
    zero_grad(vars_of(m.all_params()));
    Var f_raw2 = m.raw.encode(b.raw, true);
    Var f_c_fixed = matmul(detach(f_raw2), detach(m.proj_c));
    backward(disentangle_loss(f_raw2, f_c_fixed));
    if (m.proj_c->grad.size() != 0 && m.proj_c->grad.cwiseAbs().maxCoeff() != 0.0) {
        ok = false;
        why = "disentangle gradient leaked into proj_c";
    }
    bool raw_moved = false;
    for (auto& [name, p] : m.raw.params())
        raw_moved |= p->grad.size() && p->grad.cwiseAbs().maxCoeff() > 0;
    if (!raw_moved) {
        ok = false;
        why = "disentangle produced no gradient on the raw encoder";
    }

    // five stage-1 epochs leave the encoders bit-identical
    TrainingConfig s1 = recipe();
    s1.stage1_epochs = 5;
    Trainer tr1(s1, toyset, testing::temp_dir("accept_routing_s1"));
    Model m1 = build(s1);
    m1.raw.trainable = false;
    m1.shield.trainable = false;
    uint64_t before = checksum_params(m1.encoder_params());
    tr1.run_stage1(m1);
    if (checksum_params(m1.encoder_params()) != before) {
        ok = false;
        why = "stage-1 encoder checksum changed";
    }

    double dt = seconds_since(t0);
    char d[160];
    std::snprintf(d, sizeof(d), "%s%.1fs%s", ok ? "" : (why + ", ").c_str(), dt,
                  dt < 120 ? "" : " (OVER BUDGET)");
    report("gradient routing and frozen-stage isolation", ok && dt < 120, d);
}

// ---- criterion 3: masking complementarity --------------------------------

void check_masking() {
    auto t0 = std::chrono::steady_clock::now();
    bool ok = true;
    Rng rng(2024);
    int checked = 0;
    for (int trial = 0; trial < 1000 && ok; ++trial) {
        int h = 2 + static_cast<int>(rng.next_below(40));
        int w = 2 + static_cast<int>(rng.next_below(40));
        Image img = testing::random_image(rng, h, w);
        BinaryMask mask(h, w);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) mask(y, x) = static_cast<double>(rng.next_below(2));
        Image s = make_shielding_image(img, mask);
        Image c = make_clothes_image(img, mask);
        Mat ones = Mat::Ones(h, w);
        for (int ch = 0; ch < 3; ++ch)
            ok = ok && mask.cwiseProduct(s[ch]) + (ones - mask).cwiseProduct(c[ch]) == img[ch];
        ++checked;
    }
    for (const auto& r : toyset.records) {
        if (!ok) break;
        auto [img, parse] = load_sample(r, 0, 0);
        BinaryMask mask = build_clothes_mask(parse, default_clothes_labels());
        Image s = make_shielding_image(img, mask);
        Image c = make_clothes_image(img, mask);
        Mat ones = Mat::Ones(mask.rows(), mask.cols());
        for (int ch = 0; ch < 3; ++ch)
            ok = ok && mask.cwiseProduct(s[ch]) + (ones - mask).cwiseProduct(c[ch]) == img[ch];
        ++checked;
    }
    double dt = seconds_since(t0);
    char d[128];
    std::snprintf(d, sizeof(d), "exact on %d pairs (1000 random + toy set), %.1fs",
                  checked, dt);
    report("masking complementarity", ok && dt < 60, d);
}

// ---- criterion 4: retrieval metrics vs brute-force oracle ----------------

void check_metric_oracle() {
    auto t0 = std::chrono::steady_clock::now();
    bool ok = true;
    Rng rng(77);
    double worst = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        int nq = 1 + static_cast<int>(rng.next_below(5));
        int ng = 2 + static_cast<int>(rng.next_below(11));  // <= 12
        Mat qf = rng.normal_mat(nq, 6), gf = rng.normal_mat(ng, 6);
        auto rand_meta = [&](Split sp) {
            Sample s;
            s.identity = static_cast<int>(rng.next_below(3));
            s.clothes_id = static_cast<int>(rng.next_below(4));
            s.camera_id = static_cast<int>(rng.next_below(3));
            s.split = sp;
            return s;
        };
        std::vector<Sample> qm, gm;
        for (int i = 0; i < nq; ++i) qm.push_back(rand_meta(Split::kQuery));
        for (int i = 0; i < ng; ++i) gm.push_back(rand_meta(Split::kGallery));
        Protocol p = static_cast<Protocol>(rng.next_below(3));

        // definitional oracle, one query at a time
        Mat qn = qf, gn = gf;
        for (int i = 0; i < nq; ++i) qn.row(i).normalize();
        for (int j = 0; j < ng; ++j) gn.row(j).normalize();
        Mat dist = Mat::Ones(nq, ng) - qn * gn.transpose();
        std::vector<double> cmc(ng, 0.0);
        double mAP = 0.0;
        int scored = 0, skipped = 0;
        for (int q = 0; q < nq; ++q) {
            std::vector<int> keep;
            for (int j = 0; j < ng; ++j)
                if (!is_junk(qm[q], gm[j], p)) keep.push_back(j);
            bool pos = false;
            for (int j : keep) pos |= is_positive(qm[q], gm[j], p);
            if (!pos) {
                ++skipped;
                continue;
            }
            std::stable_sort(keep.begin(), keep.end(),
                             [&](int a, int b) { return dist(q, a) < dist(q, b); });
            int hits = 0, first = -1;
            double ap = 0.0;
            for (size_t k = 0; k < keep.size(); ++k)
                if (is_positive(qm[q], gm[keep[k]], p)) {
                    ++hits;
                    ap += double(hits) / double(k + 1);
                    if (first < 0) first = static_cast<int>(k);
                }
            mAP += ap / hits;
            for (int k = first; k < ng; ++k) cmc[k] += 1.0;
            ++scored;
        }
        if (scored == 0) {
            bool threw = false;
            try {
                score(qf, gf, qm, gm, p);
            } catch (const std::exception&) {
                threw = true;
            }
            ok = ok && threw;
            continue;
        }
        mAP /= scored;
        auto got = score(qf, gf, qm, gm, p);
        worst = std::max(worst, std::abs(got.mAP - mAP));
        ok = ok && got.skipped_queries == skipped;
        for (int k = 0; k < ng; ++k)
            worst = std::max(worst, std::abs(got.cmc[k] - cmc[k] / scored));
    }
    ok = ok && worst < 1e-9;
    double dt = seconds_since(t0);
    char d[128];
    std::snprintf(d, sizeof(d), "200 random galleries, max |diff| %.3g, %.1fs", worst, dt);
    report("CMC/mAP equal the brute-force oracle", ok && dt < 60, d);
}

// ---- criterion 5: desk-scale ablation -------------------------------------

void check_ablation() {
    auto t0 = std::chrono::steady_clock::now();

    struct Row {
        std::string tag;
        bool i2t, i2i, cfm;
        double rank1 = 0.0;
    };
    std::vector<Row> rows = {
        {"baseline", false, false, false}, {"full", true, true, true},
        {"no_i2t", false, true, true},     {"no_i2i", true, false, true},
        {"no_cfm", true, true, false},
    };
    for (auto& r : rows) {
        TrainingConfig cfg = recipe();
        cfg.use_i2t = r.i2t;
        cfg.use_i2i = r.i2i;
        cfg.use_cfm = r.cfm;
        Model m = train_variant(cfg, "abl_" + r.tag);
        r.rank1 = cloth_changing_rank1(m, cfg);
    }
    double base = rows[0].rank1, full = rows[1].rank1;
    bool ok = full >= base + 0.10;
    std::string detail = "cloth-changing rank-1:";
    for (auto& r : rows) {
        char item[64];
        std::snprintf(item, sizeof(item), " %s=%.4f", r.tag.c_str(), r.rank1);
        detail += item;
    }
    for (size_t i = 2; i < rows.size(); ++i)
        ok = ok && full >= rows[i].rank1 - 0.02;
    double dt = seconds_since(t0);
    char d[64];
    std::snprintf(d, sizeof(d), ", %.1fs%s", dt, dt < 900 ? "" : " (OVER BUDGET)");
    report("desk-scale ablation trend", ok && dt < 900, detail + d);
}

// ---- criterion 6: stage-1 prompt discriminability -------------------------

void check_prompt_discriminability() {
    auto t0 = std::chrono::steady_clock::now();
    TrainingConfig cfg = recipe();
    Trainer tr(cfg, toyset, testing::temp_dir("accept_prompts"));
    Model m = build(cfg);
    m.raw.trainable = false;
    m.shield.trainable = false;
    tr.run_stage1(m);

    std::vector<Sample> train;
    for (const auto& r : toyset.records)
        if (r.split == Split::kTrain) train.push_back(r);

    // features of shielding and clothes variants of every training image
    std::vector<Image> shield_imgs, clothes_imgs;
    for (const auto& r : train) {
        auto [img, parse] = load_sample(r, cfg.image_h, cfg.image_w);
        BinaryMask mask = build_clothes_mask(parse, default_clothes_labels());
        shield_imgs.push_back(make_shielding_image(img, mask));
        clothes_imgs.push_back(make_clothes_image(img, mask));
    }
    Mat fs_ = m.raw.encode(shield_imgs, false)->value;
    Mat fc = m.raw.encode(clothes_imgs, false)->value;
    Mat prompts =
        m.text.encode_all(m.prompts, PromptKind::kIdentity, false)->value;
    for (int i = 0; i < fs_.rows(); ++i) fs_.row(i).normalize();
    for (int i = 0; i < fc.rows(); ++i) fc.row(i).normalize();
    for (int i = 0; i < prompts.rows(); ++i) prompts.row(i).normalize();

    Mat sim_s = fs_ * prompts.transpose();  // n x K
    int correct = 0;
    double mean_shield = 0.0, mean_clothes = 0.0;
    Mat sim_c = fc * prompts.transpose();
    for (int i = 0; i < sim_s.rows(); ++i) {
        int best;
        sim_s.row(i).maxCoeff(&best);
        correct += best == train[i].identity;
        mean_shield += sim_s(i, train[i].identity);
        mean_clothes += sim_c(i, train[i].identity);
    }
    double acc = static_cast<double>(correct) / sim_s.rows();
    mean_shield /= sim_s.rows();
    mean_clothes /= sim_s.rows();

    bool ok = acc >= 0.9 && mean_clothes < mean_shield;
    double dt = seconds_since(t0);
    char d[160];
    std::snprintf(d, sizeof(d),
                  "nearest-prompt accuracy %.3f, prompt~clothes %.3f < prompt~shielding %.3f: %s, %.1fs",
                  acc, mean_clothes, mean_shield,
                  mean_clothes < mean_shield ? "yes" : "no", dt);
    report("stage-1 prompt discriminability", ok && dt < 300, d);
}

// ---- criterion 7: determinism and resume ----------------------------------

void check_determinism() {
    auto t0 = std::chrono::steady_clock::now();
    TrainingConfig cfg = recipe();
    cfg.stage1_epochs = 3;
    cfg.stage2_epochs = 4;

    auto read_file = [](const std::string& p) {
        std::ifstream in(p);
        return std::string((std::istreambuf_iterator<char>(in)),
                           std::istreambuf_iterator<char>());
    };

    std::vector<std::string> dirs = {testing::temp_dir("accept_det1"),
                                     testing::temp_dir("accept_det2")};
    std::vector<uint64_t> sums;
    for (const auto& d : dirs) {
        Trainer tr(cfg, toyset, d);
        Model m = build(cfg);
        m.raw.trainable = false;
        m.shield.trainable = false;
        tr.run_stage1(m);
        m.raw.trainable = true;
        m.shield.trainable = true;
        tr.run_stage2(m);
        sums.push_back(checksum_params(m.all_params()));
    }
    bool logs_equal = read_file(dirs[0] + "/metrics.log") ==
                      read_file(dirs[1] + "/metrics.log");
    bool params_equal = sums[0] == sums[1];

    // interrupt after epoch 2 of stage 2 and resume
    auto d_cut = testing::temp_dir("accept_det_cut");
    cfg.checkpoint_interval = 2;
    Trainer tr_cut(cfg, toyset, d_cut);
    Model m = build(cfg);
    m.raw.trainable = false;
    m.shield.trainable = false;
    tr_cut.run_stage1(m);
    m.raw.trainable = true;
    m.shield.trainable = true;
    tr_cut.run_stage2(m);
    uint64_t uninterrupted = checksum_params(m.all_params());

    ResumeState rs = resume((fs::path(d_cut) / "stage2_epoch2.ckpt").string(), cfg);
    Trainer tr_res(cfg, toyset, testing::temp_dir("accept_det_res"));
    tr_res.run_stage2(rs.model, rs.model.meta.epoch, &rs.optimizer);
    bool resume_equal = checksum_params(rs.model.all_params()) == uninterrupted;

    bool ok = logs_equal && params_equal && resume_equal;
    double dt = seconds_since(t0);
    char d[160];
    std::snprintf(d, sizeof(d),
                  "metrics logs identical: %s, parameters identical: %s, resume == uninterrupted: %s, %.1fs",
                  logs_equal ? "yes" : "no", params_equal ? "yes" : "no",
                  resume_equal ? "yes" : "no", dt);
    report("determinism and resume", ok, d);
}

}  // namespace

int main() {
    toyset_dir = testing::temp_dir("accept_toyset");
    toyset = generate(ToySpec{}, toyset_dir);
    auto confound = plant_confound_check(toyset);
    std::printf("toy corpus: %zu records, clothes confound %.2f, biometric confound %.2f\n",
                toyset.records.size(), confound.clothes_accuracy,
                confound.biometric_accuracy);

    check_gradient_correctness();
    check_gradient_routing();
    check_masking();
    check_metric_oracle();
    check_ablation();
    check_prompt_discriminability();
    check_determinism();

    std::printf("%s (%d failure%s)\n", failures == 0 ? "ACCEPTANCE PASSED" : "ACCEPTANCE FAILED",
                failures, failures == 1 ? "" : "s");
    return failures;
}
