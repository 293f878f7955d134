#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "ccaf/eval.hpp"
#include "ccaf/toybench.hpp"
#include "ccaf/trainer.hpp"

namespace fs = std::filesystem;
using namespace ccaf;

// exit codes: 0 ok, 1 runtime error, 2 bad usage / missing config,
// 3 refusing to overwrite, 4 stage-2 without stage-1 checkpoint,
// 5 protocol invalid for dataset

namespace {

Config load_config_or_exit(const std::string& path) {
    if (!fs::exists(path)) {
        std::cerr << "error: config file not found: " << path << "\n"
                  << "usage: ccaf <gen-toy|train|eval> --config <file> [options]\n";
        std::exit(2);
    }
    return Config::load(path);
}

void snapshot_run_dir(const Config& cfg, const std::string& run_dir) {
    fs::create_directories(run_dir);
    {
        std::ofstream out(fs::path(run_dir) / "config.cfg", std::ios::binary);
        out << cfg.raw_text();
    }
    std::ofstream fp(fs::path(run_dir) / "fingerprint.txt");
    fp << "seed=" << cfg.get_int("run.seed", 0) << "\n"
       << "version=ccaf-0.1.0\n";
}

int cmd_gen_toy(const std::string& config_path, const std::string& out_dir,
                bool force) {
    Config cfg = load_config_or_exit(config_path);
    if (fs::exists(out_dir) && !fs::is_empty(out_dir) && !force) {
        std::cerr << "error: output directory " << out_dir
                  << " is not empty (use --force to overwrite)\n";
        return 3;
    }
    ToySpec spec;
    spec.K = static_cast<int>(cfg.get_int("toy.k", spec.K));
    spec.outfits = static_cast<int>(cfg.get_int("toy.outfits", spec.outfits));
    spec.images_per_combo =
        static_cast<int>(cfg.get_int("toy.images_per_combo", spec.images_per_combo));
    spec.img_h = static_cast<int>(cfg.get_int("toy.img_h", spec.img_h));
    spec.img_w = static_cast<int>(cfg.get_int("toy.img_w", spec.img_w));
    spec.noise_level = cfg.get_double("toy.noise_level", spec.noise_level);
    spec.seed = static_cast<uint64_t>(cfg.get_int("toy.seed", 7));

    DatasetManifest m = generate(spec, out_dir);
    ConfoundReport rep = plant_confound_check(m);
    std::cout << "manifest=" << (fs::path(out_dir) / "manifest.tsv").string() << '\n'
              << "records=" << m.records.size() << '\n'
              << "identities=" << m.K << '\n'
              << "clothes_classes=" << m.K_c << '\n'
              << "confound_clothes_accuracy=" << rep.clothes_accuracy << '\n'
              << "confound_biometric_accuracy=" << rep.biometric_accuracy << '\n'
              << "cloth_changing_testable=" << (rep.cloth_changing_testable ? 1 : 0)
              << '\n';
    if (!rep.note.empty()) std::cout << "note=" << rep.note << '\n';
    return 0;
}

int cmd_train(const std::string& config_path, int stage,
              const std::string& resume_path, const std::string& stage1_ckpt_flag) {
    Config cfg = load_config_or_exit(config_path);
    std::string run_dir = cfg.get_str("run.dir", "run");
    TrainingConfig tc = TrainingConfig::from_config(cfg);
    DatasetManifest manifest =
        load_manifest(cfg.require_str("data.manifest"));
    snapshot_run_dir(cfg, run_dir);
    Trainer trainer(tc, manifest, run_dir);

    if (stage == 1) {
        Model model = Model::build_toy(tc.C, tc.M, tc.d_tok, manifest.K, manifest.K_c,
                                       tc.seed, tc.grid_h, tc.grid_w, tc.conv_f);
        int start_epoch = 0;
        TensorArchive opt;
        if (!resume_path.empty()) {
            ResumeState rs = resume(resume_path, tc);
            if (rs.model.meta.stage != 1) {
                std::cerr << "error: --resume checkpoint is not a stage-1 checkpoint\n";
                return 2;
            }
            model = std::move(rs.model);
            opt = std::move(rs.optimizer);
            start_epoch = model.meta.epoch;
        }
        model.raw.trainable = false;
        model.shield.trainable = false;
        std::string ckpt = trainer.run_stage1(model, start_epoch,
                                              start_epoch ? &opt : nullptr);
        std::cout << "checkpoint=" << ckpt << '\n';
        return 0;
    }

    // stage 2
    std::string stage1_ckpt = !stage1_ckpt_flag.empty()
                                  ? stage1_ckpt_flag
                                  : cfg.get_str("run.stage1_ckpt",
                                                (fs::path(run_dir) / "stage1.ckpt").string());
    int start_epoch = 0;
    TensorArchive opt;
    Model model = Model::build_toy(4, 4, 4, 1, 1, 0);
    if (!resume_path.empty()) {
        ResumeState rs = resume(resume_path, tc);
        if (rs.model.meta.stage != 2) {
            std::cerr << "error: --resume checkpoint is not a stage-2 checkpoint\n";
            return 2;
        }
        model = std::move(rs.model);
        opt = std::move(rs.optimizer);
        start_epoch = model.meta.epoch;
    } else {
        if (!fs::exists(stage1_ckpt)) {
            std::cerr << "error: stage 2 requires a stage-1 checkpoint ("
                      << stage1_ckpt << " not found)\n";
            return 4;
        }
        model = Model::load(stage1_ckpt);
    }
    model.raw.trainable = true;
    model.shield.trainable = true;
    std::string ckpt =
        trainer.run_stage2(model, start_epoch, start_epoch ? &opt : nullptr);
    std::cout << "checkpoint=" << ckpt << '\n';
    return 0;
}

int cmd_eval(const std::string& config_path, const std::string& ckpt_path,
             const std::string& protocol_str) {
    Config cfg = load_config_or_exit(config_path);
    Protocol protocol;
    try {
        protocol = protocol_from_name(protocol_str);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    DatasetManifest manifest = load_manifest(cfg.require_str("data.manifest"));
    Model model = Model::load(ckpt_path);
    int h = static_cast<int>(cfg.get_int("data.image_h", 256));
    int w = static_cast<int>(cfg.get_int("data.image_w", 128));

    std::vector<Sample> query, gallery;
    for (const auto& r : manifest.records) {
        if (r.split == Split::kQuery) query.push_back(r);
        if (r.split == Split::kGallery) gallery.push_back(r);
    }
    // inference uses the raw-stream encoder only
    Mat qf = extract_features(model.raw, query, h, w);
    Mat gf = extract_features(model.raw, gallery, h, w);
    RetrievalResult result;
    try {
        result = score(qf, gf, query, gallery, protocol);
    } catch (const std::exception& e) {
        std::cerr << "error: protocol " << protocol_str
                  << " is not satisfiable on this dataset: " << e.what() << "\n";
        return 5;
    }
    std::string report = format_report(result, protocol);
    std::cout << report;
    std::string run_dir = cfg.get_str("run.dir", "run");
    fs::create_directories(run_dir);
    std::ofstream out(fs::path(run_dir) / ("eval_" + protocol_str + ".txt"));
    out << report;
    std::ofstream hist(fs::path(run_dir) / ("distances_" + protocol_str + ".csv"));
    hist << distance_histogram_csv(gf, gallery);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"CCAF: cloth-changing re-id training and evaluation"};
    app.require_subcommand(1);

    std::string config_path, out_dir, resume_path, ckpt_path, stage1_ckpt;
    std::string protocol = "general";
    int stage = 1;
    bool force = false;

    auto* gen = app.add_subcommand("gen-toy", "generate the synthetic toy benchmark");
    gen->add_option("--config", config_path, "config file")->required();
    gen->add_option("--out", out_dir, "output directory")->required();
    gen->add_flag("--force", force, "overwrite a non-empty output directory");

    auto* train = app.add_subcommand("train", "run a training stage");
    train->add_option("--config", config_path, "config file")->required();
    train->add_option("--stage", stage, "training stage (1 or 2)")
        ->check(CLI::IsMember({1, 2}))
        ->required();
    train->add_option("--resume", resume_path, "checkpoint to resume from");
    train->add_option("--stage1-ckpt", stage1_ckpt, "stage-1 checkpoint for stage 2");

    auto* eval_cmd = app.add_subcommand("eval", "evaluate retrieval from a checkpoint");
    eval_cmd->add_option("--config", config_path, "config file")->required();
    eval_cmd->add_option("--ckpt", ckpt_path, "checkpoint path")->required();
    eval_cmd->add_option("--protocol", protocol,
                         "general | same-clothes | cloth-changing");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (gen->parsed()) return cmd_gen_toy(config_path, out_dir, force);
        if (train->parsed()) return cmd_train(config_path, stage, resume_path, stage1_ckpt);
        if (eval_cmd->parsed()) return cmd_eval(config_path, ckpt_path, protocol);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
