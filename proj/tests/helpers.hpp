#ifndef CCAF_TESTS_HELPERS_HPP
#define CCAF_TESTS_HELPERS_HPP

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "ccaf/autodiff.hpp"
#include "ccaf/data.hpp"
#include "ccaf/rng.hpp"

namespace ccaf::testing {

// scratch directory removed at process exit
inline std::string temp_dir(const std::string& tag) {
    auto p = std::filesystem::temp_directory_path() /
             ("ccaf_test_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::create_directories(p);
    static std::vector<std::filesystem::path> cleanup = [] {
        std::atexit([] {});
        return std::vector<std::filesystem::path>{};
    }();
    cleanup.push_back(p);
    return p.string();
}

// Central finite differences on every entry of every leaf, against the
// gradients produced by one reverse pass. make_loss must rebuild the graph
// from the leaves' current values.
struct GradCheck {
    double max_rel_err = 0.0;
    bool ok = true;
};

inline GradCheck check_gradients(const std::vector<Var>& leaves,
                                 const std::function<Var()>& make_loss,
                                 double eps = 1e-3, double tol = 1e-4) {
    GradCheck res;
    zero_grad(leaves);
    Var loss = make_loss();
    backward(loss);
    std::vector<Mat> analytic;
    for (const auto& p : leaves)
        analytic.push_back(p->grad.size() ? p->grad
                                          : Mat::Zero(p->value.rows(), p->value.cols()));
    for (size_t pi = 0; pi < leaves.size(); ++pi) {
        Mat& v = leaves[pi]->value;
        for (int i = 0; i < v.rows(); ++i)
            for (int j = 0; j < v.cols(); ++j) {
                double orig = v(i, j);
                v(i, j) = orig + eps;
                double up = make_loss()->scalar();
                v(i, j) = orig - eps;
                double down = make_loss()->scalar();
                v(i, j) = orig;
                double fd = (up - down) / (2.0 * eps);
                double ad = analytic[pi](i, j);
                double rel = std::abs(ad - fd) / std::max(1.0, std::max(std::abs(ad), std::abs(fd)));
                res.max_rel_err = std::max(res.max_rel_err, rel);
                if (rel > tol) res.ok = false;
            }
    }
    return res;
}

inline Image random_image(Rng& rng, int h, int w) {
    Image img;
    for (auto& ch : img) {
        ch = Mat(h, w);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                ch(y, x) = static_cast<double>(rng.next_below(256));
    }
    return img;
}

}  // namespace ccaf::testing

#endif
