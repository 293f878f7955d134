#ifndef CCAF_MASKING_HPP
#define CCAF_MASKING_HPP

#include <set>

#include "ccaf/data.hpp"

namespace ccaf {

// 1 = clothes-irrelevant pixel, 0 = clothes pixel
using BinaryMask = Mat;

// categories erased by default: upper clothes, dress, coat, pants, skirt
const std::set<int>& default_clothes_labels();

BinaryMask build_clothes_mask(const ParsingMap& parsing,
                              const std::set<int>& clothes_labels);

// shielding: keep clothes-irrelevant pixels, fill clothes with 255
Image make_shielding_image(const Image& image, const BinaryMask& mask);
// clothes: keep clothes pixels, fill the rest with 255
Image make_clothes_image(const Image& image, const BinaryMask& mask);

void save_mask(const BinaryMask& mask, const std::string& path);
BinaryMask load_mask(const std::string& path);

}  // namespace ccaf

#endif
