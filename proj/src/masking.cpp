#include "ccaf/masking.hpp"

#include <opencv2/imgcodecs.hpp>

#include <stdexcept>

namespace ccaf {

const std::set<int>& default_clothes_labels() {
    static const std::set<int> labels = {kUpperClothes, kDress, kCoat, kPants, kSkirt};
    return labels;
}

BinaryMask build_clothes_mask(const ParsingMap& parsing,
                              const std::set<int>& clothes_labels) {
    BinaryMask mask(parsing.rows(), parsing.cols());
    for (int y = 0; y < parsing.rows(); ++y)
        for (int x = 0; x < parsing.cols(); ++x)
            mask(y, x) = clothes_labels.count(parsing(y, x)) ? 0.0 : 1.0;
    return mask;
}

static void check_shapes(const Image& image, const BinaryMask& mask) {
    if (image[0].rows() != mask.rows() || image[0].cols() != mask.cols())
        throw std::invalid_argument("masking: image/mask shape mismatch");
}

Image make_shielding_image(const Image& image, const BinaryMask& mask) {
    check_shapes(image, mask);
    Image out;
    Mat fill = (1.0 - mask.array()).matrix() * 255.0;
    for (int c = 0; c < 3; ++c) out[c] = image[c].cwiseProduct(mask) + fill;
    return out;
}

Image make_clothes_image(const Image& image, const BinaryMask& mask) {
    check_shapes(image, mask);
    Image out;
    Mat inv = (1.0 - mask.array()).matrix();
    for (int c = 0; c < 3; ++c) out[c] = image[c].cwiseProduct(inv) + mask * 255.0;
    return out;
}

void save_mask(const BinaryMask& mask, const std::string& path) {
    cv::Mat gray(static_cast<int>(mask.rows()), static_cast<int>(mask.cols()), CV_8UC1);
    for (int y = 0; y < mask.rows(); ++y)
        for (int x = 0; x < mask.cols(); ++x)
            gray.at<uint8_t>(y, x) = mask(y, x) > 0.5 ? 255 : 0;
    if (!cv::imwrite(path, gray)) throw std::runtime_error("mask: cannot write " + path);
}

BinaryMask load_mask(const std::string& path) {
    cv::Mat gray = cv::imread(path, cv::IMREAD_GRAYSCALE);
    if (gray.empty()) throw std::runtime_error("mask: decode failure: " + path);
    BinaryMask mask(gray.rows, gray.cols);
    for (int y = 0; y < gray.rows; ++y)
        for (int x = 0; x < gray.cols; ++x)
            mask(y, x) = gray.at<uint8_t>(y, x) > 127 ? 1.0 : 0.0;
    return mask;
}

}  // namespace ccaf
