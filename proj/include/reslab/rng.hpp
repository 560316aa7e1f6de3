#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

#include <Eigen/Dense>

namespace reslab {

/// Seeded random source with a portable stream.
///
/// Bits come from std::mt19937_64, whose output sequence is fixed by the C++
/// standard. Uniform and Gaussian variates are derived here rather than through
/// <random> distributions, whose algorithms differ between standard libraries.
/// Uniforms use the top 53 bits; Gaussians use the polar-free Box-Muller form
/// and discard the second variate so that every draw consumes exactly two words.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform on [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Uniform on (0, 1].
    double uniform_open0() { return (static_cast<double>(engine_() >> 11) + 1.0) * 0x1.0p-53; }

    double gaussian() {
        const double u1 = uniform_open0();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    /// Index uniform on [0, n).
    std::uint64_t below(std::uint64_t n) { return static_cast<std::uint64_t>(uniform() * static_cast<double>(n)); }

    Eigen::MatrixXd gaussian_matrix(Eigen::Index rows, Eigen::Index cols, double stddev = 1.0) {
        Eigen::MatrixXd out(rows, cols);
        // Row-major fill order keeps streams easy to reproduce by hand.
        for (Eigen::Index i = 0; i < rows; ++i)
            for (Eigen::Index j = 0; j < cols; ++j) out(i, j) = stddev * gaussian();
        return out;
    }

    Eigen::VectorXd unit_vector(Eigen::Index n) {
        Eigen::VectorXd v = gaussian_matrix(n, 1);
        double norm = v.norm();
        while (norm == 0.0) {
            v = gaussian_matrix(n, 1);
            norm = v.norm();
        }
        return v / norm;
    }

    /// Derives an independent child seed; used to give each restart or cell its own stream.
    static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream) {
        // splitmix64 finalizer over the pair
        std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace reslab
