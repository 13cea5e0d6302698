#pragma once

#include <random>

#include "salm/common.hpp"

namespace salm {

/// Training-time crop-center jitter: isotropic Gaussian with per-axis
/// standard deviation r_t/3, so by the 3-sigma rule each axis displacement
/// stays within the patch radius 99.73% of the time.
inline Vec3<double> perturb_center(const Vec3<double>& x, double r_t, std::mt19937_64& rng) {
    check(r_t > 0, "patch radius must be positive");
    std::normal_distribution<double> noise(0.0, r_t / 3.0);
    Vec3<double> out = x;
    for (int a = 0; a < 3; ++a) out[static_cast<std::size_t>(a)] += noise(rng);
    return out;
}

}  // namespace salm
