#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "salm/common.hpp"
#include "salm/nn/layers.hpp"
#include "salm/nn/resize.hpp"
#include "salm/params.hpp"
#include "salm/tensor.hpp"

namespace salm {

// ---------------------------------------------------------------------------
// Heatmap construction, integral localization, heatmap loss
// ---------------------------------------------------------------------------

/// Gaussian heatmap target over a down-sampled grid: value at voxel p is
/// exp(-|p - g|^2 / (2 sigma^2)), peaking at 1 on the landmark.
template <class T>
Tensor<T> make_heatmap_target(const Vec3<double>& g_ds, const Dims3& dims, double sigma) {
    check(sigma > 0, "heatmap sigma must be positive");
    check(std::isfinite(g_ds[0]) && std::isfinite(g_ds[1]) && std::isfinite(g_ds[2]),
          "heatmap target center must be finite");
    Tensor<T> h({dims.z, dims.y, dims.x});
    const double inv = 1.0 / (2.0 * sigma * sigma);
    std::int64_t o = 0;
    for (std::int64_t z = 0; z < dims.z; ++z)
        for (std::int64_t y = 0; y < dims.y; ++y)
            for (std::int64_t x = 0; x < dims.x; ++x, ++o) {
                const double dx = double(x) - g_ds[0];
                const double dy = double(y) - g_ds[1];
                const double dz = double(z) - g_ds[2];
                h[o] = T(std::exp(-(dx * dx + dy * dy + dz * dz) * inv));
            }
    return h;
}

/// Differentiable centroid of one non-negative heatmap (down-sampled voxel
/// coordinates). A vanishing total mass is guarded by epsilon and reported
/// through `degenerate`.
template <class T>
struct IntegralLandmark {
    static constexpr double kEps = 1e-8;

    struct Cache {
        double gamma = 0;
        Vec3<double> out;
    };

    static Vec3<T> forward(const T* h, const Dims3& dims, Cache* cache,
                           bool* degenerate = nullptr) {
        double mass = 0;
        double mx = 0, my = 0, mz = 0;
        std::int64_t o = 0;
        for (std::int64_t z = 0; z < dims.z; ++z)
            for (std::int64_t y = 0; y < dims.y; ++y)
                for (std::int64_t x = 0; x < dims.x; ++x, ++o) {
                    const double v = double(h[o]);
                    mass += v;
                    mx += v * double(x);
                    my += v * double(y);
                    mz += v * double(z);
                }
        // epsilon floor: active only when the map carries no usable mass
        const double gamma = std::max(mass, kEps);
        if (degenerate) *degenerate = (mass <= kEps);
        const Vec3<double> out{mx / gamma, my / gamma, mz / gamma};
        if (cache) {
            cache->gamma = gamma;
            cache->out = out;
        }
        return {T(out[0]), T(out[1]), T(out[2])};
    }

    static Vec3<T> forward(const Tensor<T>& h, Cache* cache, bool* degenerate = nullptr) {
        return forward(h.data(), Dims3{h.dim(2), h.dim(1), h.dim(0)}, cache, degenerate);
    }

    /// Accumulates into the heatmap gradient slice.
    static void backward(const Cache& c, const Vec3<T>& dout, T* dh, const Dims3& dims) {
        const double ig = 1.0 / c.gamma;
        std::int64_t o = 0;
        for (std::int64_t z = 0; z < dims.z; ++z)
            for (std::int64_t y = 0; y < dims.y; ++y)
                for (std::int64_t x = 0; x < dims.x; ++x, ++o) {
                    const double g = double(dout[0]) * (double(x) - c.out[0]) +
                                     double(dout[1]) * (double(y) - c.out[1]) +
                                     double(dout[2]) * (double(z) - c.out[2]);
                    dh[o] += T(g * ig);
                }
    }
};

/// L1 heatmap loss summed over landmarks and voxels.
template <class T>
T heatmap_loss(const Tensor<T>& pred, const Tensor<T>& target) {
    check(pred.same_shape(target), "heatmap loss shape mismatch");
    double acc = 0;
    for (std::int64_t i = 0; i < pred.size(); ++i) acc += std::abs(double(pred[i]) - double(target[i]));
    return T(acc);
}

/// d/dpred of heatmap_loss, scaled by `scale`, accumulated into dpred.
template <class T>
void heatmap_loss_backward(const Tensor<T>& pred, const Tensor<T>& target, T scale,
                           Tensor<T>& dpred) {
    for (std::int64_t i = 0; i < pred.size(); ++i) {
        const T diff = pred[i] - target[i];
        if (diff > T(0))
            dpred[i] += scale;
        else if (diff < T(0))
            dpred[i] -= scale;
    }
}

// ---------------------------------------------------------------------------
// Coarse detection network
// ---------------------------------------------------------------------------

template <class T>
struct ConvBnRelu {
    nn::Conv3d<T> conv;
    nn::BatchNorm3d<T> bn;

    struct Cache {
        Tensor<T> conv_out;
        typename nn::BatchNorm3d<T>::Cache bn;
        Tensor<T> bn_out;
    };

    ConvBnRelu() = default;
    ConvBnRelu(std::int64_t cin, std::int64_t cout, int k, int stride, int pad)
        : conv(cin, cout, k, stride, pad), bn(cout) {}

    Tensor<T> forward(const Tensor<T>& x, bool training, Cache* c) {
        Tensor<T> co = conv.forward(x);
        Tensor<T> bo = bn.forward(co, training, c ? &c->bn : nullptr);
        Tensor<T> y = nn::relu(bo);
        if (c) {
            c->conv_out = std::move(co);
            c->bn_out = std::move(bo);
        }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& x, const Cache& c, const Tensor<T>& dy) {
        Tensor<T> d_bn = nn::relu_backward(c.bn_out, dy);
        Tensor<T> d_conv = bn.backward(c.conv_out, d_bn, c.bn);
        return conv.backward(x, d_conv);
    }

    void init(std::mt19937_64& rng) {
        const std::int64_t fan_in = conv.w.dim(1) * conv.kernel * conv.kernel * conv.kernel;
        init_fanin_uniform(conv.w, fan_in, rng);
        conv.b.zero();
    }

    void zero_grad() {
        conv.zero_grad();
        bn.zero_grad();
    }

    void collect(const std::string& prefix, std::vector<ParamRef<T>>& out) {
        out.push_back({prefix + ".conv.w", &conv.w, &conv.dw});
        out.push_back({prefix + ".conv.b", &conv.b, &conv.db});
        out.push_back({prefix + ".bn.gamma", &bn.gamma, &bn.dgamma});
        out.push_back({prefix + ".bn.beta", &bn.beta, &bn.dbeta});
    }

    void collect_buffers(const std::string& prefix, std::vector<BufferRef<T>>& out) {
        out.push_back({prefix + ".bn.running_mean", &bn.running_mean});
        out.push_back({prefix + ".bn.running_var", &bn.running_var});
    }
};

/// Three-level encoder-decoder with skip connections. Input is a single
/// down-sampled grid, zero-padded up to extents divisible by 8; the heatmaps
/// (sigmoid head) and the last decoder feature grid M are cropped back to
/// the grid extents.
template <class T>
class CoarseNet {
public:
    struct Output {
        Tensor<T> heatmaps;  // {n, z, y, x}
        Tensor<T> features;  // {d, z, y, x}
    };

    struct Cache {
        Dims3 grid{}, padded{};
        Tensor<T> x_pad;
        typename ConvBnRelu<T>::Cache e1a, e1b, e2a, e2b, ba, bb, d2a, d2b, d1a, d1b;
        Tensor<T> r_e1a, r_e1b, r_e2a, r_e2b, r_ba, r_bb, r_d2a, r_d2b, r_d1a;
        typename nn::MaxPool2<T>::Cache pool1, pool2;
        Tensor<T> p1, p2;
        Tensor<T> up2, cat2, up1, cat1;
        Tensor<T> m_pad;     // relu output of d1b == feature map (padded)
        Tensor<T> head_out;  // pre-sigmoid
        Tensor<T> h_pad;     // sigmoid output (padded)
    };

    CoarseNet() = default;
    CoarseNet(std::int64_t n_landmarks, std::int64_t d)
        : n_(n_landmarks),
          d_(d),
          e1a_(1, d, 3, 1, 1),
          e1b_(d, d, 3, 1, 1),
          e2a_(d, d, 3, 1, 1),
          e2b_(d, d, 3, 1, 1),
          ba_(d, d, 3, 1, 1),
          bb_(d, d, 3, 1, 1),
          d2a_(2 * d, d, 3, 1, 1),
          d2b_(d, d, 3, 1, 1),
          d1a_(2 * d, d, 3, 1, 1),
          d1b_(d, d, 3, 1, 1),
          head_(d, n_landmarks, 1, 1, 0) {}

    std::int64_t landmarks() const { return n_; }
    std::int64_t feature_dim() const { return d_; }

    void init(std::mt19937_64& rng) {
        for (auto* b : blocks()) b->init(rng);
        init_fanin_uniform(head_.w, d_, rng);
        head_.b.zero();
    }

    Output forward(const Tensor<T>& grid, bool training, Cache* c) {
        check(grid.all_finite(), "coarse net input contains non-finite values");
        const Dims3 g{grid.dim(2), grid.dim(1), grid.dim(0)};
        const Dims3 p{pad8(g.x), pad8(g.y), pad8(g.z)};
        Cache local;
        Cache& cc = c ? *c : local;
        cc.grid = g;
        cc.padded = p;

        cc.x_pad.resize({1, 1, p.z, p.y, p.x});
        for (std::int64_t z = 0; z < g.z; ++z)
            for (std::int64_t y = 0; y < g.y; ++y)
                std::copy_n(grid.data() + (z * g.y + y) * g.x, g.x,
                            cc.x_pad.data() + (z * p.y + y) * p.x);

        cc.r_e1a = e1a_.forward(cc.x_pad, training, &cc.e1a);
        cc.r_e1b = e1b_.forward(cc.r_e1a, training, &cc.e1b);
        cc.p1 = nn::MaxPool2<T>::forward(cc.r_e1b, &cc.pool1);
        cc.r_e2a = e2a_.forward(cc.p1, training, &cc.e2a);
        cc.r_e2b = e2b_.forward(cc.r_e2a, training, &cc.e2b);
        cc.p2 = nn::MaxPool2<T>::forward(cc.r_e2b, &cc.pool2);
        cc.r_ba = ba_.forward(cc.p2, training, &cc.ba);
        cc.r_bb = bb_.forward(cc.r_ba, training, &cc.bb);
        cc.up2 = nn::resize_trilinear(cc.r_bb, p.z / 2, p.y / 2, p.x / 2);
        cc.cat2 = nn::concat_channels(cc.up2, cc.r_e2b);
        cc.r_d2a = d2a_.forward(cc.cat2, training, &cc.d2a);
        cc.r_d2b = d2b_.forward(cc.r_d2a, training, &cc.d2b);
        cc.up1 = nn::resize_trilinear(cc.r_d2b, p.z, p.y, p.x);
        cc.cat1 = nn::concat_channels(cc.up1, cc.r_e1b);
        cc.r_d1a = d1a_.forward(cc.cat1, training, &cc.d1a);
        cc.m_pad = d1b_.forward(cc.r_d1a, training, &cc.d1b);
        cc.head_out = head_.forward(cc.m_pad);
        cc.h_pad.resize(cc.head_out.shape());
        for (std::int64_t i = 0; i < cc.head_out.size(); ++i)
            cc.h_pad[i] = T(1.0 / (1.0 + std::exp(-double(cc.head_out[i]))));

        Output out;
        out.heatmaps = crop(cc.h_pad, n_, g, p);
        out.features = crop(cc.m_pad, d_, g, p);
        return out;
    }

    /// Accumulates parameter gradients; dh/dm are gradients w.r.t. the
    /// cropped heatmaps and feature map.
    void backward(const Cache& cc, const Tensor<T>& dh, const Tensor<T>& dm) {
        const Dims3 g = cc.grid, p = cc.padded;
        Tensor<T> dh_pad = pad_grad(dh, n_, g, p);
        Tensor<T> dm_pad = pad_grad(dm, d_, g, p);
        // sigmoid head
        Tensor<T> dhead(cc.head_out.shape());
        for (std::int64_t i = 0; i < dhead.size(); ++i) {
            const T s = cc.h_pad[i];
            dhead[i] = dh_pad[i] * s * (T(1) - s);
        }
        {
            Tensor<T> dm_head = head_.backward(cc.m_pad, dhead);
            axpy(T(1), dm_head, dm_pad);
        }
        Tensor<T> d_r_d1a = d1b_.backward(cc.r_d1a, cc.d1b, dm_pad);
        Tensor<T> d_cat1 = d1a_.backward(cc.cat1, cc.d1a, d_r_d1a);
        Tensor<T> d_up1({1, d_, p.z, p.y, p.x});
        Tensor<T> d_r_e1b({1, d_, p.z, p.y, p.x});
        nn::split_channels_backward(d_cat1, d_up1, d_r_e1b);
        Tensor<T> d_r_d2b =
            nn::resize_trilinear_backward(d_up1, 1, d_, p.z / 2, p.y / 2, p.x / 2);
        Tensor<T> d_r_d2a = d2b_.backward(cc.r_d2a, cc.d2b, d_r_d2b);
        Tensor<T> d_cat2 = d2a_.backward(cc.cat2, cc.d2a, d_r_d2a);
        Tensor<T> d_up2({1, d_, p.z / 2, p.y / 2, p.x / 2});
        Tensor<T> d_r_e2b({1, d_, p.z / 2, p.y / 2, p.x / 2});
        nn::split_channels_backward(d_cat2, d_up2, d_r_e2b);
        Tensor<T> d_r_bb =
            nn::resize_trilinear_backward(d_up2, 1, d_, p.z / 4, p.y / 4, p.x / 4);
        Tensor<T> d_r_ba = bb_.backward(cc.r_ba, cc.bb, d_r_bb);
        Tensor<T> d_p2 = ba_.backward(cc.p2, cc.ba, d_r_ba);
        {
            Tensor<T> from_pool = nn::MaxPool2<T>::backward(cc.r_e2b.shape(), d_p2, cc.pool2);
            axpy(T(1), from_pool, d_r_e2b);
        }
        Tensor<T> d_r_e2a = e2b_.backward(cc.r_e2a, cc.e2b, d_r_e2b);
        Tensor<T> d_p1 = e2a_.backward(cc.p1, cc.e2a, d_r_e2a);
        {
            Tensor<T> from_pool = nn::MaxPool2<T>::backward(cc.r_e1b.shape(), d_p1, cc.pool1);
            axpy(T(1), from_pool, d_r_e1b);
        }
        Tensor<T> d_r_e1a = e1b_.backward(cc.r_e1a, cc.e1b, d_r_e1b);
        e1a_.backward(cc.x_pad, cc.e1a, d_r_e1a);  // input gradient discarded
    }

    void zero_grad() {
        for (auto* b : blocks()) b->zero_grad();
        head_.zero_grad();
    }

    void collect_params(std::vector<ParamRef<T>>& out) {
        const char* names[] = {"e1a", "e1b", "e2a", "e2b", "ba", "bb", "d2a", "d2b", "d1a", "d1b"};
        auto bs = blocks();
        for (std::size_t i = 0; i < bs.size(); ++i) bs[i]->collect(std::string("coarse.") + names[i], out);
        out.push_back({"coarse.head.w", &head_.w, &head_.dw});
        out.push_back({"coarse.head.b", &head_.b, &head_.db});
    }

    void collect_buffers(std::vector<BufferRef<T>>& out) {
        const char* names[] = {"e1a", "e1b", "e2a", "e2b", "ba", "bb", "d2a", "d2b", "d1a", "d1b"};
        auto bs = blocks();
        for (std::size_t i = 0; i < bs.size(); ++i)
            bs[i]->collect_buffers(std::string("coarse.") + names[i], out);
    }

private:
    static std::int64_t pad8(std::int64_t v) { return (v + 7) / 8 * 8; }

    static Tensor<T> crop(const Tensor<T>& padded, std::int64_t C, const Dims3& g, const Dims3& p) {
        Tensor<T> out({C, g.z, g.y, g.x});
        for (std::int64_t c = 0; c < C; ++c)
            for (std::int64_t z = 0; z < g.z; ++z)
                for (std::int64_t y = 0; y < g.y; ++y)
                    std::copy_n(padded.data() + ((c * p.z + z) * p.y + y) * p.x, g.x,
                                out.data() + ((c * g.z + z) * g.y + y) * g.x);
        return out;
    }

    static Tensor<T> pad_grad(const Tensor<T>& g_cropped, std::int64_t C, const Dims3& g,
                              const Dims3& p) {
        Tensor<T> out({1, C, p.z, p.y, p.x});
        for (std::int64_t c = 0; c < C; ++c)
            for (std::int64_t z = 0; z < g.z; ++z)
                for (std::int64_t y = 0; y < g.y; ++y)
                    std::copy_n(g_cropped.data() + ((c * g.z + z) * g.y + y) * g.x, g.x,
                                out.data() + ((c * p.z + z) * p.y + y) * p.x);
        return out;
    }

    std::array<ConvBnRelu<T>*, 10> blocks() {
        return {&e1a_, &e1b_, &e2a_, &e2b_, &ba_, &bb_, &d2a_, &d2b_, &d1a_, &d1b_};
    }

    std::int64_t n_ = 0, d_ = 0;
    ConvBnRelu<T> e1a_, e1b_, e2a_, e2b_, ba_, bb_, d2a_, d2b_, d1a_, d1b_;
    nn::Conv3d<T> head_;
};

}  // namespace salm
