#ifndef CCAF_TOYBENCH_HPP
#define CCAF_TOYBENCH_HPP

#include <string>

#include "ccaf/data.hpp"

namespace ccaf {

// Synthetic cloth-changing corpus. Every identity carries a fixed
// "biometric" color pattern in the head and leg regions; every outfit is a
// solid torso color with stripes. The torso coincides exactly with the
// parsing map's clothes labels, so a clothes-reliant model aces same-clothes
// retrieval and fails cloth-changing.
struct ToySpec {
    int K = 8;                 // identities
    int outfits = 2;           // per identity
    int images_per_combo = 10; // per (identity, outfit)
    int img_h = 64;
    int img_w = 32;
    double noise_level = 0.1;  // pixel noise std as a fraction of 32 levels
    double bio_gap = 70.0;     // identity color offset from the common skin base
    double bio_jitter = 9.0;   // per-image color jitter of the biometric patch
    uint64_t seed = 7;
};

// writes images/, parsing/, manifest.tsv under out_dir; returns the manifest
DatasetManifest generate(const ToySpec& spec, const std::string& out_dir);

struct ConfoundReport {
    double clothes_accuracy = 0.0;    // torso color -> clothes_id
    double biometric_accuracy = 0.0;  // head+leg color -> identity
    bool cloth_changing_testable = false;
    std::string note;
};

// certifies the planted signals with a nearest-centroid pixel-statistics
// classifier over region mean colors
ConfoundReport plant_confound_check(const DatasetManifest& manifest);

}  // namespace ccaf

#endif
