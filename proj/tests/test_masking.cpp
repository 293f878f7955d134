#include "doctest.h"

#include <filesystem>

#include "ccaf/masking.hpp"
#include "helpers.hpp"

using namespace ccaf;

namespace {

BinaryMask random_mask(Rng& rng, int h, int w) {
    BinaryMask m(h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) m(y, x) = static_cast<double>(rng.next_below(2));
    return m;
}

}  // namespace

TEST_CASE("build_clothes_mask marks clothes pixels 0, everything else 1") {
    SUBCASE("all background -> all ones") {
        ParsingMap p = ParsingMap::Constant(4, 4, kBackground);
        CHECK(build_clothes_mask(p, default_clothes_labels()) == Mat::Ones(4, 4));
    }
    SUBCASE("all upper clothes -> all zeros") {
        ParsingMap p = ParsingMap::Constant(4, 4, kUpperClothes);
        CHECK(build_clothes_mask(p, default_clothes_labels()) == Mat::Zero(4, 4));
    }
    SUBCASE("mixed 2x2 map") {
        ParsingMap p(2, 2);
        p << kUpperClothes, kFace, kPants, kHair;
        BinaryMask m = build_clothes_mask(p, {kUpperClothes, kPants});
        Mat want(2, 2);
        want << 0, 1, 0, 1;
        CHECK(m == want);
    }
    SUBCASE("invariant to permuting non-clothes labels") {
        Rng rng(3);
        ParsingMap p(8, 8);
        for (int y = 0; y < 8; ++y)
            for (int x = 0; x < 8; ++x)
                p(y, x) = static_cast<int>(rng.next_below(kParseVocabSize));
        BinaryMask before = build_clothes_mask(p, default_clothes_labels());
        ParsingMap q = p;  // swap two non-clothes labels everywhere
        for (int y = 0; y < 8; ++y)
            for (int x = 0; x < 8; ++x) {
                if (q(y, x) == kFace) q(y, x) = kHair;
                else if (q(y, x) == kHair) q(y, x) = kFace;
            }
        CHECK(build_clothes_mask(q, default_clothes_labels()) == before);
    }
}

TEST_CASE("shielding fills clothes pixels with 255") {
    Rng rng(4);
    Image img = testing::random_image(rng, 4, 4);
    SUBCASE("mask all ones is the identity") {
        Image s = make_shielding_image(img, Mat::Ones(4, 4));
        for (int c = 0; c < 3; ++c) CHECK(s[c] == img[c]);
    }
    SUBCASE("mask all zeros erases everything") {
        Image s = make_shielding_image(img, Mat::Zero(4, 4));
        for (int c = 0; c < 3; ++c) CHECK(s[c] == Mat::Constant(4, 4, 255.0));
    }
    SUBCASE("2x2 worked example") {
        Image x;
        for (auto& ch : x) {
            ch = Mat(2, 2);
            ch << 10, 20, 30, 40;
        }
        Mat mask(2, 2);
        mask << 1, 0, 1, 1;
        Image s = make_shielding_image(x, mask);
        Mat want(2, 2);
        want << 10, 255, 30, 40;
        for (int c = 0; c < 3; ++c) CHECK(s[c] == want);
        // complement keeps only the clothes pixel
        Image cl = make_clothes_image(x, mask);
        Mat wantc(2, 2);
        wantc << 255, 20, 255, 255;
        for (int c = 0; c < 3; ++c) CHECK(cl[c] == wantc);
    }
    SUBCASE("shape mismatch is rejected") {
        CHECK_THROWS(make_shielding_image(img, Mat::Ones(3, 4)));
        CHECK_THROWS(make_clothes_image(img, Mat::Ones(4, 5)));
    }
}

TEST_CASE("clothes image edge cases") {
    Rng rng(5);
    Image img = testing::random_image(rng, 3, 5);
    Image all = make_clothes_image(img, Mat::Zero(3, 5));
    for (int c = 0; c < 3; ++c) CHECK(all[c] == img[c]);
    Image none = make_clothes_image(img, Mat::Ones(3, 5));
    for (int c = 0; c < 3; ++c) CHECK(none[c] == Mat::Constant(3, 5, 255.0));
}

TEST_CASE("complementarity and idempotence on random pairs") {
    Rng rng(6);
    for (int trial = 0; trial < 50; ++trial) {
        int h = 2 + static_cast<int>(rng.next_below(30));
        int w = 2 + static_cast<int>(rng.next_below(30));
        Image img = testing::random_image(rng, h, w);
        BinaryMask mask = random_mask(rng, h, w);
        Image s = make_shielding_image(img, mask);
        Image c = make_clothes_image(img, mask);
        for (int ch = 0; ch < 3; ++ch) {
            Mat recomposed =
                mask.cwiseProduct(s[ch]) + (Mat::Ones(h, w) - mask).cwiseProduct(c[ch]);
            CHECK(recomposed == img[ch]);  // exact integer equality
        }
        Image s2 = make_shielding_image(s, mask);
        for (int ch = 0; ch < 3; ++ch) CHECK(s2[ch] == s[ch]);
    }
}

TEST_CASE("mask cache round-trips through disk") {
    auto dir = testing::temp_dir("mask");
    Rng rng(7);
    BinaryMask m = random_mask(rng, 17, 9);
    auto p = (std::filesystem::path(dir) / "m.mask.png").string();
    save_mask(m, p);
    CHECK(load_mask(p) == m);
}
