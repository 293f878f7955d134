#ifndef CCAF_RNG_HPP
#define CCAF_RNG_HPP

// Deterministic RNG with stable output across platforms. Training
// reproducibility relies on these, not on std distributions whose
// algorithms are implementation defined.

#include <cstdint>
#include <random>

#include "ccaf/autodiff.hpp"

namespace ccaf {

class Rng {
public:
    explicit Rng(uint64_t seed) : engine_(seed) {}

    // derive a child stream, e.g. per (stage, epoch) or per sample
    static Rng derive(uint64_t seed, uint64_t a, uint64_t b = 0) {
        uint64_t h = 1469598103934665603ull;
        for (uint64_t v : {seed, a, b})
            for (int i = 0; i < 8; ++i) {
                h ^= (v >> (8 * i)) & 0xff;
                h *= 1099511628211ull;
            }
        return Rng(h);
    }

    uint64_t next_u64() { return engine_(); }
    // uniform in [0, n)
    uint64_t next_below(uint64_t n) { return engine_() % n; }
    double uniform() {  // [0,1)
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }
    double normal() {  // Box-Muller, deterministic
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 0.0, u2 = uniform();
        while (u1 <= 1e-300) u1 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double t = 6.283185307179586 * u2;
        spare_ = r * std::sin(t);
        have_spare_ = true;
        return r * std::cos(t);
    }

    Mat normal_mat(int rows, int cols, double stddev = 1.0) {
        Mat m(rows, cols);
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < cols; ++j) m(i, j) = normal() * stddev;
        return m;
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i)
            std::swap(v[i - 1], v[next_below(i)]);
    }

private:
    std::mt19937_64 engine_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace ccaf

#endif
