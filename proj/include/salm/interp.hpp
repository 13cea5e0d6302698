#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

namespace salm::interp {

/// Axis taps for align-corners trilinear resizing: target index j maps to
/// source coordinate j*(S-1)/(T-1), so grid endpoints are preserved and all
/// weights form a convex combination.
inline void resize_axis_taps(std::int64_t src, std::int64_t tgt, std::vector<std::int64_t>& i0,
                             std::vector<std::int64_t>& i1, std::vector<double>& w1) {
    i0.resize(static_cast<std::size_t>(tgt));
    i1.resize(static_cast<std::size_t>(tgt));
    w1.resize(static_cast<std::size_t>(tgt));
    for (std::int64_t j = 0; j < tgt; ++j) {
        double pos = (tgt > 1) ? double(j) * double(src - 1) / double(tgt - 1) : 0.0;
        std::int64_t lo = std::int64_t(std::floor(pos));
        if (lo > src - 2) lo = std::max<std::int64_t>(0, src - 2);
        i0[static_cast<std::size_t>(j)] = lo;
        i1[static_cast<std::size_t>(j)] = std::min(src - 1, lo + 1);
        w1[static_cast<std::size_t>(j)] = pos - double(lo);
    }
}

}  // namespace salm::interp
