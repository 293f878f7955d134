#include "ccaf/toybench.hpp"

#include <algorithm>
#include <filesystem>
#include <map>
#include <stdexcept>

#include "ccaf/masking.hpp"
#include "ccaf/rng.hpp"

namespace fs = std::filesystem;

namespace ccaf {

namespace {

struct Rect {
    int y0, y1, x0, x1;  // half-open
};

// regions scale with the canvas; reference layout is 64 x 32
struct Layout {
    Rect hair, face, torso, pants, legs, arm_l, arm_r;
};

Layout make_layout(int h, int w) {
    auto sy = [&](int v) { return v * h / 64; };
    auto sx = [&](int v) { return v * w / 32; };
    Layout L;
    // clothes dominate the canvas; the biometric patch is small and sits
    // partially inside pooled cells so clothes clues stay maximally seductive
    L.hair = {sy(0), sy(2), sx(12), sx(20)};
    L.face = {sy(2), sy(8), sx(12), sx(20)};
    L.torso = {sy(8), sy(40), sx(6), sx(26)};
    L.pants = {sy(40), sy(48), sx(6), sx(26)};
    L.legs = {sy(48), sy(58), sx(12), sx(20)};
    L.arm_l = {sy(10), sy(22), sx(2), sx(6)};
    L.arm_r = {sy(10), sy(22), sx(26), sx(30)};
    return L;
}

struct Color {
    double r, g, b;
};

void fill(Image& img, ParsingMap& parse, const Rect& rc, const Color& c, int label) {
    for (int y = rc.y0; y < rc.y1; ++y)
        for (int x = rc.x0; x < rc.x1; ++x) {
            img[0](y, x) = c.r;
            img[1](y, x) = c.g;
            img[2](y, x) = c.b;
            parse(y, x) = label;
        }
}

// 2x2 tiled two-color pattern; keeps identity signal distinctive under pooling
void fill_pattern(Image& img, ParsingMap& parse, const Rect& rc, const Color& a,
                  const Color& b, int label) {
    for (int y = rc.y0; y < rc.y1; ++y)
        for (int x = rc.x0; x < rc.x1; ++x) {
            const Color& c = (((y / 2) + (x / 2)) % 2 == 0) ? a : b;
            img[0](y, x) = c.r;
            img[1](y, x) = c.g;
            img[2](y, x) = c.b;
            parse(y, x) = label;
        }
}

Color random_color(Rng& rng, double lo = 30.0, double hi = 225.0) {
    auto u = [&] { return lo + rng.uniform() * (hi - lo); };
    return {u(), u(), u()};
}

double region_mean(const Mat& ch, const ParsingMap& parse,
                   const std::set<int>& labels) {
    double sum = 0.0;
    int n = 0;
    for (int y = 0; y < parse.rows(); ++y)
        for (int x = 0; x < parse.cols(); ++x)
            if (labels.count(parse(y, x))) {
                sum += ch(y, x);
                ++n;
            }
    return n ? sum / n : 0.0;
}

}  // namespace

DatasetManifest generate(const ToySpec& spec, const std::string& out_dir) {
    if (spec.outfits < 2)
        throw std::runtime_error("toybench: need >= 2 outfits per identity for a "
                                 "cloth-changing split");
    if (spec.K < 2 || spec.images_per_combo < 3)
        throw std::runtime_error("toybench: need K >= 2 and >= 3 images per (identity, outfit)");
    fs::create_directories(fs::path(out_dir) / "images");
    fs::create_directories(fs::path(out_dir) / "parsing");

    Layout L = make_layout(spec.img_h, spec.img_w);
    const Color skin{170, 150, 135};
    const Color hair{60, 50, 40};
    const Color background{190, 190, 190};

    // per-identity biometric palette: the common skin base plus a random
    // identity direction of magnitude bio_gap, independent of outfit
    std::vector<Color> bio_a, bio_b;
    for (int id = 0; id < spec.K; ++id) {
        Rng r = Rng::derive(spec.seed, 100 + id);
        auto offset = [&](double sign) {
            Eigen::Vector3d d(r.normal(), r.normal(), r.normal());
            d.normalize();
            return Color{skin.r + sign * spec.bio_gap * d(0),
                         skin.g + sign * spec.bio_gap * d(1),
                         skin.b + sign * spec.bio_gap * d(2)};
        };
        bio_a.push_back(offset(1.0));
        bio_b.push_back(offset(-1.0));
    }
    // per-outfit clothes palette
    std::vector<Color> cloth_main, cloth_stripe;
    for (int c = 0; c < spec.K * spec.outfits; ++c) {
        Rng r = Rng::derive(spec.seed, 10000 + c);
        cloth_main.push_back(random_color(r));
        cloth_stripe.push_back(random_color(r));
    }

    DatasetManifest m;
    m.name = "toybench";
    int n_train = std::max(1, spec.images_per_combo * 3 / 5);
    int n_query = std::max(1, (spec.images_per_combo - n_train) / 2);

    for (int id = 0; id < spec.K; ++id) {
        for (int outfit = 0; outfit < spec.outfits; ++outfit) {
            int clothes_id = id * spec.outfits + outfit;
            for (int k = 0; k < spec.images_per_combo; ++k) {
                Image img;
                for (auto& ch : img)
                    ch = Mat::Constant(spec.img_h, spec.img_w, 0.0);
                ParsingMap parse = ParsingMap::Zero(spec.img_h, spec.img_w);
                fill(img, parse, {0, spec.img_h, 0, spec.img_w}, background, kBackground);
                // per-image jitter of the biometric colors only; clothes
                // colors stay clean so they are the easy clue
                Rng jr = Rng::derive(spec.seed, (1u << 21),
                                     static_cast<uint64_t>(clothes_id) * 1000 + k);
                // noise 0 means a fully clean corpus: the biometric patch is
                // then pixelwise identical across outfits of an identity
                double jmag = spec.noise_level > 0.0 ? spec.bio_jitter : 0.0;
                auto jitter = [&](const Color& c) {
                    return Color{c.r + jr.normal() * jmag,
                                 c.g + jr.normal() * jmag,
                                 c.b + jr.normal() * jmag};
                };
                Color ja = jitter(bio_a[id]), jb = jitter(bio_b[id]);
                fill(img, parse, L.hair, hair, kHair);
                fill_pattern(img, parse, L.face, ja, jb, kFace);
                fill_pattern(img, parse, L.torso, cloth_main[clothes_id],
                             cloth_stripe[clothes_id], kUpperClothes);
                fill(img, parse, L.pants, cloth_main[clothes_id], kPants);
                fill_pattern(img, parse, L.legs, jb, ja, kLeftLeg);
                fill(img, parse, L.arm_l, skin, kLeftArm);
                fill(img, parse, L.arm_r, skin, kRightArm);

                Rng noise = Rng::derive(spec.seed, 1u << 20,
                                        static_cast<uint64_t>(clothes_id) * 1000 + k);
                double std_dev = spec.noise_level * 32.0;
                for (auto& ch : img)
                    for (int y = 0; y < spec.img_h; ++y)
                        for (int x = 0; x < spec.img_w; ++x) {
                            double v = ch(y, x);
                            if (std_dev > 0.0) v += noise.normal() * std_dev;
                            ch(y, x) = std::clamp(std::round(v), 0.0, 255.0);
                        }

                char stem[64];
                std::snprintf(stem, sizeof(stem), "id%03d_o%02d_%03d", id, outfit, k);
                Sample s;
                s.image_path = (fs::path(out_dir) / "images" / (std::string(stem) + ".png")).string();
                s.parsing_path = (fs::path(out_dir) / "parsing" / (std::string(stem) + ".png")).string();
                s.identity = id;
                s.clothes_id = clothes_id;
                if (k < n_train) {
                    s.split = Split::kTrain;
                    s.camera_id = k % 3;
                } else if (k < n_train + n_query) {
                    s.split = Split::kQuery;
                    s.camera_id = 0;
                } else {
                    s.split = Split::kGallery;
                    s.camera_id = 1 + (k % 2);
                }
                save_image(img, s.image_path);
                save_parsing(parse, s.parsing_path);
                m.records.push_back(std::move(s));
            }
        }
    }
    m.K = spec.K;
    m.K_c = spec.K * spec.outfits;
    save_manifest(m, (fs::path(out_dir) / "manifest.tsv").string());
    return m;
}

ConfoundReport plant_confound_check(const DatasetManifest& manifest) {
    ConfoundReport rep;
    std::map<int, std::set<int>> outfits_by_id;
    for (const auto& r : manifest.records)
        outfits_by_id[r.identity].insert(r.clothes_id);
    rep.cloth_changing_testable = true;
    for (auto& [id, outfits] : outfits_by_id)
        if (outfits.size() < 2) {
            rep.cloth_changing_testable = false;
            rep.note = "cloth-changing untestable: identity " + std::to_string(id) +
                       " has a single outfit";
        }

    const std::set<int>& clothes_labels = default_clothes_labels();
    const std::set<int> bio_labels = {kHair, kFace, kLeftLeg, kRightLeg};

    // region mean colors per image
    std::vector<Eigen::Vector3d> torso_stats, bio_stats;
    std::vector<int> clothes_ids, identities;
    for (const auto& r : manifest.records) {
        Image img = load_image(r.image_path, 0, 0);
        ParsingMap parse = load_parsing(r.parsing_path, static_cast<int>(img[0].rows()),
                                        static_cast<int>(img[0].cols()));
        Eigen::Vector3d t, b;
        for (int c = 0; c < 3; ++c) {
            t(c) = region_mean(img[c], parse, clothes_labels);
            b(c) = region_mean(img[c], parse, bio_labels);
        }
        torso_stats.push_back(t);
        bio_stats.push_back(b);
        clothes_ids.push_back(r.clothes_id);
        identities.push_back(r.identity);
    }

    auto centroid_accuracy = [](const std::vector<Eigen::Vector3d>& feats,
                                const std::vector<int>& labels) {
        std::map<int, Eigen::Vector3d> sum;
        std::map<int, int> cnt;
        for (size_t i = 0; i < feats.size(); ++i) {
            sum.try_emplace(labels[i], Eigen::Vector3d::Zero());
            sum[labels[i]] += feats[i];
            ++cnt[labels[i]];
        }
        int correct = 0;
        for (size_t i = 0; i < feats.size(); ++i) {
            double best = 1e300;
            int best_label = -1;
            for (auto& [l, s] : sum) {
                double d = (feats[i] - s / cnt[l]).norm();
                if (d < best) {
                    best = d;
                    best_label = l;
                }
            }
            correct += best_label == labels[i];
        }
        return static_cast<double>(correct) / feats.size();
    };

    rep.clothes_accuracy = centroid_accuracy(torso_stats, clothes_ids);
    rep.biometric_accuracy = centroid_accuracy(bio_stats, identities);
    return rep;
}

}  // namespace ccaf
