#ifndef CCAF_DATA_HPP
#define CCAF_DATA_HPP

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ccaf/autodiff.hpp"

namespace ccaf {

// RGB image, channels in [0,255], each channel H x W.
using Image = std::array<Mat, 3>;
// single-channel label map, values in [0,20)
using ParsingMap = Eigen::MatrixXi;

// 20-category human parsing vocabulary (LIP ordering)
enum ParseLabel : int {
    kBackground = 0, kHat = 1, kHair = 2, kGlove = 3, kSunglasses = 4,
    kUpperClothes = 5, kDress = 6, kCoat = 7, kSocks = 8, kPants = 9,
    kJumpsuit = 10, kScarf = 11, kSkirt = 12, kFace = 13, kLeftArm = 14,
    kRightArm = 15, kLeftLeg = 16, kRightLeg = 17, kLeftShoe = 18,
    kRightShoe = 19
};
constexpr int kParseVocabSize = 20;

enum class Split { kTrain, kQuery, kGallery };
std::string split_name(Split s);
Split split_from_name(const std::string& name);  // throws on unknown

struct Sample {
    std::string image_path;
    int identity = 0;
    int clothes_id = 0;
    int camera_id = 0;
    std::string parsing_path;
    Split split = Split::kTrain;
};

struct DatasetManifest {
    std::vector<Sample> records;
    int K = 0;    // identity count
    int K_c = 0;  // clothes-class count
    std::string name;
    // dense re-index maps applied at load (original -> dense); empty if none
    std::map<int, int> identity_remap;
    std::map<int, int> clothes_remap;

    std::vector<int> split_indices(Split s) const;
};

// Line format: image<TAB>identity<TAB>clothes<TAB>camera<TAB>parsing<TAB>split
// Labels with gaps are re-indexed densely; the mapping is written next to
// the manifest as <path>.remap.
DatasetManifest load_manifest(const std::string& path, bool check_files = true);
void save_manifest(const DatasetManifest& m, const std::string& path);

// Bilinear for the image, nearest-neighbor for the label map.
std::pair<Image, ParsingMap> load_sample(const Sample& s, int target_h, int target_w);

Image load_image(const std::string& path, int target_h, int target_w);
ParsingMap load_parsing(const std::string& path, int target_h, int target_w);
void save_image(const Image& img, const std::string& path);
void save_parsing(const ParsingMap& p, const std::string& path);

// PK batches over the train split: each batch holds P distinct identities
// with K_p record indices each (with replacement when an identity is short).
// Deterministic in (manifest order, seed).
std::vector<std::vector<int>> make_pk_batches(const DatasetManifest& m, int P,
                                              int K_p, uint64_t seed);

}  // namespace ccaf

#endif
