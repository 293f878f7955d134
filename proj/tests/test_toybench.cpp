#include "doctest.h"

#include <filesystem>
#include <set>

#include "ccaf/masking.hpp"
#include "ccaf/toybench.hpp"
#include "helpers.hpp"

using namespace ccaf;
namespace fs = std::filesystem;

namespace {

ToySpec small_spec() {
    ToySpec s;
    s.K = 4;
    s.outfits = 2;
    s.images_per_combo = 5;
    s.img_h = 32;
    s.img_w = 16;
    s.seed = 11;
    return s;
}

}  // namespace

TEST_CASE("generate writes the advertised corpus") {
    auto dir = testing::temp_dir("toy_gen");
    ToySpec s;
    s.K = 8;
    s.outfits = 2;
    s.images_per_combo = 10;
    auto m = generate(s, dir);
    CHECK(m.records.size() == 160);
    CHECK(m.K == 8);
    CHECK(m.K_c == 16);
    CHECK(fs::exists(fs::path(dir) / "manifest.tsv"));
    // reload through the manifest loader, including file checks
    auto reloaded = load_manifest((fs::path(dir) / "manifest.tsv").string(), true);
    CHECK(reloaded.records.size() == 160);
    // every query identity appears in the gallery with both outfits
    for (int q : reloaded.split_indices(Split::kQuery)) {
        const auto& qs = reloaded.records[q];
        bool same = false, diff = false;
        for (int g : reloaded.split_indices(Split::kGallery)) {
            const auto& gs = reloaded.records[g];
            if (gs.identity != qs.identity) continue;
            same |= gs.clothes_id == qs.clothes_id;
            diff |= gs.clothes_id != qs.clothes_id;
        }
        CHECK(same);
        CHECK(diff);
    }
}

TEST_CASE("generation guards") {
    auto dir = testing::temp_dir("toy_guard");
    ToySpec s = small_spec();
    s.outfits = 1;
    CHECK_THROWS(generate(s, dir));
    s = small_spec();
    s.K = 1;
    CHECK_THROWS(generate(s, dir));
    s = small_spec();
    s.images_per_combo = 2;
    CHECK_THROWS(generate(s, dir));
}

TEST_CASE("noise 0 generation is deterministic and identity-stable") {
    auto d1 = testing::temp_dir("toy_det1");
    auto d2 = testing::temp_dir("toy_det2");
    ToySpec s = small_spec();
    s.noise_level = 0.0;
    auto m1 = generate(s, d1);
    auto m2 = generate(s, d2);
    for (size_t i = 0; i < m1.records.size(); ++i) {
        Image a = load_image(m1.records[i].image_path, 0, 0);
        Image b = load_image(m2.records[i].image_path, 0, 0);
        for (int c = 0; c < 3; ++c) CHECK(a[c] == b[c]);
    }
    // the biometric patch is pixelwise identical across outfits of an identity
    const std::set<int> bio = {kHair, kFace, kLeftLeg, kRightLeg};
    for (int id = 0; id < s.K; ++id) {
        std::vector<int> first_of_outfit;
        for (size_t i = 0; i < m1.records.size(); ++i)
            if (m1.records[i].identity == id &&
                (first_of_outfit.empty() ||
                 m1.records[first_of_outfit.back()].clothes_id != m1.records[i].clothes_id))
                first_of_outfit.push_back(static_cast<int>(i));
        REQUIRE(first_of_outfit.size() == 2);
        auto [img_a, parse_a] = load_sample(m1.records[first_of_outfit[0]], 0, 0);
        auto [img_b, parse_b] = load_sample(m1.records[first_of_outfit[1]], 0, 0);
        for (int y = 0; y < parse_a.rows(); ++y)
            for (int x = 0; x < parse_a.cols(); ++x)
                if (bio.count(parse_a(y, x))) {
                    CHECK(parse_b(y, x) == parse_a(y, x));
                    for (int c = 0; c < 3; ++c) CHECK(img_a[c](y, x) == img_b[c](y, x));
                }
    }
}

TEST_CASE("parsing maps stay within the planted label set") {
    auto dir = testing::temp_dir("toy_labels");
    auto m = generate(small_spec(), dir);
    const std::set<int> allowed = {kBackground, kHair,    kFace,     kUpperClothes,
                                   kPants,      kLeftArm, kRightArm, kLeftLeg};
    for (const auto& r : m.records) {
        ParsingMap p = load_parsing(r.parsing_path, 0, 0);
        for (int y = 0; y < p.rows(); ++y)
            for (int x = 0; x < p.cols(); ++x) CHECK(allowed.count(p(y, x)) == 1);
    }
}

TEST_CASE("masking complementarity holds on every generated pair") {
    auto dir = testing::temp_dir("toy_mask");
    auto m = generate(small_spec(), dir);
    for (const auto& r : m.records) {
        auto [img, parse] = load_sample(r, 0, 0);
        BinaryMask mask = build_clothes_mask(parse, default_clothes_labels());
        Image s = make_shielding_image(img, mask);
        Image c = make_clothes_image(img, mask);
        Mat ones = Mat::Ones(mask.rows(), mask.cols());
        for (int ch = 0; ch < 3; ++ch)
            CHECK(mask.cwiseProduct(s[ch]) + (ones - mask).cwiseProduct(c[ch]) == img[ch]);
    }
}

TEST_CASE("confound check certifies the planted signals") {
    auto dir = testing::temp_dir("toy_confound");
    auto m = generate(small_spec(), dir);
    auto rep = plant_confound_check(m);
    CHECK(rep.clothes_accuracy == doctest::Approx(1.0));
    // the 32x16 small spec leaves only a few biometric pixels per region, so
    // a handful of near-boundary noise draws are tolerated
    CHECK(rep.biometric_accuracy >= 0.9);
    CHECK(rep.cloth_changing_testable);

    SUBCASE("biometric signal survives heavy noise") {
        auto d2 = testing::temp_dir("toy_noise");
        ToySpec s = small_spec();
        s.noise_level = 0.5;
        auto rep2 = plant_confound_check(generate(s, d2));
        CHECK(rep2.biometric_accuracy >= 0.9);
    }
    SUBCASE("single-outfit relabeling is flagged untestable") {
        DatasetManifest one = m;
        for (auto& r : one.records) r.clothes_id = r.identity;
        auto rep3 = plant_confound_check(one);
        CHECK(!rep3.cloth_changing_testable);
        CHECK(rep3.note.find("untestable") != std::string::npos);
    }
}
