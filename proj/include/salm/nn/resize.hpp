#pragma once

#include <cstdint>
#include <vector>

#include "salm/common.hpp"
#include "salm/interp.hpp"
#include "salm/tensor.hpp"

namespace salm::nn {

/// Align-corners trilinear resize of a {B,C,Z,Y,X} tensor.
template <class T>
Tensor<T> resize_trilinear(const Tensor<T>& x, std::int64_t tz, std::int64_t ty, std::int64_t tx) {
    const std::int64_t B = x.dim(0), C = x.dim(1), Z = x.dim(2), Y = x.dim(3), X = x.dim(4);
    Tensor<T> y({B, C, tz, ty, tx});
    std::vector<std::int64_t> x0, x1, y0, y1, z0, z1;
    std::vector<double> wx, wy, wz;
    interp::resize_axis_taps(X, tx, x0, x1, wx);
    interp::resize_axis_taps(Y, ty, y0, y1, wy);
    interp::resize_axis_taps(Z, tz, z0, z1, wz);
    for (std::int64_t bc = 0; bc < B * C; ++bc) {
        const T* src = x.data() + bc * Z * Y * X;
        T* dst = y.data() + bc * tz * ty * tx;
        auto s = [&](std::int64_t xx, std::int64_t yy, std::int64_t zz) {
            return double(src[(zz * Y + yy) * X + xx]);
        };
        std::int64_t o = 0;
        for (std::int64_t zz = 0; zz < tz; ++zz)
            for (std::int64_t yy = 0; yy < ty; ++yy)
                for (std::int64_t xx = 0; xx < tx; ++xx, ++o) {
                    const double fx = wx[xx], fy = wy[yy], fz = wz[zz];
                    double v =
                        (1 - fz) * ((1 - fy) * ((1 - fx) * s(x0[xx], y0[yy], z0[zz]) +
                                                fx * s(x1[xx], y0[yy], z0[zz])) +
                                    fy * ((1 - fx) * s(x0[xx], y1[yy], z0[zz]) +
                                          fx * s(x1[xx], y1[yy], z0[zz]))) +
                        fz * ((1 - fy) * ((1 - fx) * s(x0[xx], y0[yy], z1[zz]) +
                                          fx * s(x1[xx], y0[yy], z1[zz])) +
                              fy * ((1 - fx) * s(x0[xx], y1[yy], z1[zz]) +
                                    fx * s(x1[xx], y1[yy], z1[zz])));
                    dst[o] = T(v);
                }
    }
    return y;
}

/// Transpose of resize_trilinear: scatters output gradients back to the
/// source grid.
template <class T>
Tensor<T> resize_trilinear_backward(const Tensor<T>& dy, std::int64_t B, std::int64_t C,
                                    std::int64_t Z, std::int64_t Y, std::int64_t X) {
    const std::int64_t tz = dy.dim(2), ty = dy.dim(3), tx = dy.dim(4);
    Tensor<T> dx({B, C, Z, Y, X});
    std::vector<std::int64_t> x0, x1, y0, y1, z0, z1;
    std::vector<double> wx, wy, wz;
    interp::resize_axis_taps(X, tx, x0, x1, wx);
    interp::resize_axis_taps(Y, ty, y0, y1, wy);
    interp::resize_axis_taps(Z, tz, z0, z1, wz);
    for (std::int64_t bc = 0; bc < B * C; ++bc) {
        T* dst = dx.data() + bc * Z * Y * X;
        const T* g = dy.data() + bc * tz * ty * tx;
        auto add = [&](std::int64_t xx, std::int64_t yy, std::int64_t zz, double v) {
            dst[(zz * Y + yy) * X + xx] += T(v);
        };
        std::int64_t o = 0;
        for (std::int64_t zz = 0; zz < tz; ++zz)
            for (std::int64_t yy = 0; yy < ty; ++yy)
                for (std::int64_t xx = 0; xx < tx; ++xx, ++o) {
                    const double fx = wx[xx], fy = wy[yy], fz = wz[zz];
                    const double gv = double(g[o]);
                    add(x0[xx], y0[yy], z0[zz], gv * (1 - fz) * (1 - fy) * (1 - fx));
                    add(x1[xx], y0[yy], z0[zz], gv * (1 - fz) * (1 - fy) * fx);
                    add(x0[xx], y1[yy], z0[zz], gv * (1 - fz) * fy * (1 - fx));
                    add(x1[xx], y1[yy], z0[zz], gv * (1 - fz) * fy * fx);
                    add(x0[xx], y0[yy], z1[zz], gv * fz * (1 - fy) * (1 - fx));
                    add(x1[xx], y0[yy], z1[zz], gv * fz * (1 - fy) * fx);
                    add(x0[xx], y1[yy], z1[zz], gv * fz * fy * (1 - fx));
                    add(x1[xx], y1[yy], z1[zz], gv * fz * fy * fx);
                }
    }
    return dx;
}

/// Trilinear point sample of a {C,Z,Y,X} feature grid at a (x,y,z) position.
/// Positions are clamped into the grid; the clamp mask gates the position
/// gradient in the backward pass.
template <class T>
struct PointSample {
    struct Cache {
        Vec3<T> clamped;
        std::array<bool, 3> interior;  // clamp inactive per axis
        std::int64_t ix, iy, iz;
        T fx, fy, fz;
    };

    static void sample(const Tensor<T>& m, const Vec3<T>& pos, T* out, Cache* cache) {
        const std::int64_t C = m.dim(0), Z = m.dim(1), Y = m.dim(2), X = m.dim(3);
        Cache c{};
        const T xs[3] = {pos[0], pos[1], pos[2]};
        const T hi[3] = {T(X - 1), T(Y - 1), T(Z - 1)};
        T cl[3];
        for (int a = 0; a < 3; ++a) {
            cl[a] = std::min(std::max(xs[a], T(0)), hi[a]);
            c.interior[static_cast<std::size_t>(a)] = (xs[a] > T(0) && xs[a] < hi[a]);
        }
        c.clamped = {cl[0], cl[1], cl[2]};
        auto split = [](T v, std::int64_t n, std::int64_t& i, T& f) {
            i = std::int64_t(std::floor(double(v)));
            if (i > n - 2) i = std::max<std::int64_t>(0, n - 2);
            f = v - T(i);
        };
        split(cl[0], X, c.ix, c.fx);
        split(cl[1], Y, c.iy, c.fy);
        split(cl[2], Z, c.iz, c.fz);
        const std::int64_t x1 = std::min(X - 1, c.ix + 1);
        const std::int64_t y1 = std::min(Y - 1, c.iy + 1);
        const std::int64_t z1 = std::min(Z - 1, c.iz + 1);
        for (std::int64_t ch = 0; ch < C; ++ch) {
            const T* mc = m.data() + ch * Z * Y * X;
            auto v = [&](std::int64_t xx, std::int64_t yy, std::int64_t zz) {
                return double(mc[(zz * Y + yy) * X + xx]);
            };
            const double fx = double(c.fx), fy = double(c.fy), fz = double(c.fz);
            out[ch] = T((1 - fz) * ((1 - fy) * ((1 - fx) * v(c.ix, c.iy, c.iz) +
                                                fx * v(x1, c.iy, c.iz)) +
                                    fy * ((1 - fx) * v(c.ix, y1, c.iz) + fx * v(x1, y1, c.iz))) +
                        fz * ((1 - fy) * ((1 - fx) * v(c.ix, c.iy, z1) + fx * v(x1, c.iy, z1)) +
                              fy * ((1 - fx) * v(c.ix, y1, z1) + fx * v(x1, y1, z1))));
        }
        if (cache) *cache = c;
    }

    /// Accumulates into dm and returns the gradient w.r.t. the (pre-clamp)
    /// position.
    static Vec3<T> backward(const Tensor<T>& m, const Cache& c, const T* dout, Tensor<T>& dm) {
        const std::int64_t C = m.dim(0), Z = m.dim(1), Y = m.dim(2), X = m.dim(3);
        const std::int64_t x1 = std::min(X - 1, c.ix + 1);
        const std::int64_t y1 = std::min(Y - 1, c.iy + 1);
        const std::int64_t z1 = std::min(Z - 1, c.iz + 1);
        const double fx = double(c.fx), fy = double(c.fy), fz = double(c.fz);
        double gx = 0, gy = 0, gz = 0;
        for (std::int64_t ch = 0; ch < C; ++ch) {
            const T* mc = m.data() + ch * Z * Y * X;
            T* gc = dm.data() + ch * Z * Y * X;
            auto v = [&](std::int64_t xx, std::int64_t yy, std::int64_t zz) {
                return double(mc[(zz * Y + yy) * X + xx]);
            };
            auto add = [&](std::int64_t xx, std::int64_t yy, std::int64_t zz, double w) {
                gc[(zz * Y + yy) * X + xx] += T(w * double(dout[ch]));
            };
            add(c.ix, c.iy, c.iz, (1 - fz) * (1 - fy) * (1 - fx));
            add(x1, c.iy, c.iz, (1 - fz) * (1 - fy) * fx);
            add(c.ix, y1, c.iz, (1 - fz) * fy * (1 - fx));
            add(x1, y1, c.iz, (1 - fz) * fy * fx);
            add(c.ix, c.iy, z1, fz * (1 - fy) * (1 - fx));
            add(x1, c.iy, z1, fz * (1 - fy) * fx);
            add(c.ix, y1, z1, fz * fy * (1 - fx));
            add(x1, y1, z1, fz * fy * fx);

            const double g = double(dout[ch]);
            // d/dfx etc: difference of the two faces adjacent along each axis
            gx += g * ((1 - fz) * ((1 - fy) * (v(x1, c.iy, c.iz) - v(c.ix, c.iy, c.iz)) +
                                   fy * (v(x1, y1, c.iz) - v(c.ix, y1, c.iz))) +
                       fz * ((1 - fy) * (v(x1, c.iy, z1) - v(c.ix, c.iy, z1)) +
                             fy * (v(x1, y1, z1) - v(c.ix, y1, z1))));
            gy += g * ((1 - fz) * ((1 - fx) * (v(c.ix, y1, c.iz) - v(c.ix, c.iy, c.iz)) +
                                   fx * (v(x1, y1, c.iz) - v(x1, c.iy, c.iz))) +
                       fz * ((1 - fx) * (v(c.ix, y1, z1) - v(c.ix, c.iy, z1)) +
                             fx * (v(x1, y1, z1) - v(x1, c.iy, z1))));
            gz += g * ((1 - fy) * ((1 - fx) * (v(c.ix, c.iy, z1) - v(c.ix, c.iy, c.iz)) +
                                   fx * (v(x1, c.iy, z1) - v(x1, c.iy, c.iz))) +
                       fy * ((1 - fx) * (v(c.ix, y1, z1) - v(c.ix, y1, c.iz)) +
                             fx * (v(x1, y1, z1) - v(x1, y1, c.iz))));
        }
        return {c.interior[0] ? T(gx) : T(0), c.interior[1] ? T(gy) : T(0),
                c.interior[2] ? T(gz) : T(0)};
    }
};

}  // namespace salm::nn
