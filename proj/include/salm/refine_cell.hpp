#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "salm/common.hpp"
#include "salm/params.hpp"
#include "salm/tensor.hpp"

namespace salm {

/// Forget/input gate pair; strictly inside (0,1) and summing to 1.
template <class T>
struct GateValues {
    T f = T(0.5);
    T u = T(0.5);
};

/// Per-landmark refinement state (hidden feature state C, hidden spatial
/// state S, current prediction, 1-based iteration index).
template <class T>
struct RefinementState {
    Tensor<T> c;      // {width}
    Vec3<T> s;
    Vec3<T> x;
    int t = 0;
};

/// The recurrent cell's trainable parameters: a shared projection for the
/// relevance scorer, one attention vector and one offset head per landmark.
template <class T>
class RefineCell {
public:
    struct ScoreCache {
        std::vector<T> h;  // tanh(P_s X + b)
        T s = T(0);        // sigmoid output
    };

    RefineCell() = default;
    RefineCell(std::int64_t n, std::int64_t width, std::int64_t hidden)
        : n_(n), width_(width), hidden_(hidden) {
        ps_w_.resize({hidden, width});
        ps_b_.resize({hidden});
        ptau_.resize({n, hidden});
        wg_w_.resize({n, 3, width});
        wg_b_.resize({n, 3});
        dps_w_.resize(ps_w_.shape());
        dps_b_.resize(ps_b_.shape());
        dptau_.resize(ptau_.shape());
        dwg_w_.resize(wg_w_.shape());
        dwg_b_.resize(wg_b_.shape());
    }

    std::int64_t landmarks() const { return n_; }
    std::int64_t width() const { return width_; }
    std::int64_t hidden() const { return hidden_; }

    /// Offset heads start at zero so the untrained refinement is a fixed
    /// point at the coarse landmarks.
    void init(std::mt19937_64& rng) {
        init_fanin_uniform(ps_w_, width_, rng);
        ps_b_.zero();
        init_fanin_uniform(ptau_, hidden_, rng);
        wg_w_.zero();
        wg_b_.zero();
    }

    /// sigmoid( P_tau_i . tanh(P_s X + b) )
    T score(std::int64_t i, const T* x, ScoreCache* cache) const {
        std::vector<T> h(static_cast<std::size_t>(hidden_));
        matvec(ps_w_, x, h.data());
        for (std::int64_t a = 0; a < hidden_; ++a)
            h[static_cast<std::size_t>(a)] = T(std::tanh(double(h[static_cast<std::size_t>(a)] + ps_b_[a])));
        double z = 0;
        const T* tau = ptau_.data() + i * hidden_;
        for (std::int64_t a = 0; a < hidden_; ++a) z += double(tau[a]) * double(h[static_cast<std::size_t>(a)]);
        const T s = T(1.0 / (1.0 + std::exp(-z)));
        if (cache) {
            cache->h = std::move(h);
            cache->s = s;
        }
        return s;
    }

    /// Accumulates parameter gradients and adds the input gradient onto dx.
    void score_backward(std::int64_t i, const ScoreCache& c, const T* x, T dscore, T* dx) {
        const T s = c.s;
        const T dz = dscore * s * (T(1) - s);
        const T* tau = ptau_.data() + i * hidden_;
        T* dtau = dptau_.data() + i * hidden_;
        std::vector<T> dpre(static_cast<std::size_t>(hidden_));
        for (std::int64_t a = 0; a < hidden_; ++a) {
            const T h = c.h[static_cast<std::size_t>(a)];
            dtau[a] += dz * h;
            dpre[static_cast<std::size_t>(a)] = dz * tau[a] * (T(1) - h * h);
        }
        for (std::int64_t a = 0; a < hidden_; ++a) {
            const T g = dpre[static_cast<std::size_t>(a)];
            dps_b_[a] += g;
            const T* row = ps_w_.data() + a * width_;
            T* grow = dps_w_.data() + a * width_;
            for (std::int64_t k = 0; k < width_; ++k) {
                grow[k] += g * x[k];
                if (dx) dx[k] += row[k] * g;
            }
        }
    }

    /// Softmax pair over the two relevance scores, computed in a stable form
    /// with u = 1 - f so the pair sums to one exactly.
    static GateValues<T> gates_from_scores(T a, T b) {
        GateValues<T> g;
        g.f = T(1.0 / (1.0 + std::exp(double(b) - double(a))));
        g.u = T(1) - g.f;
        return g;
    }

    /// d(a,b) from d(f,u) given the computed pair.
    static void gates_backward(const GateValues<T>& g, T df, T du, T& da, T& db) {
        const T dt = (df - du) * g.f * g.u;
        da += dt;
        db -= dt;
    }

    /// W_gamma_i C + b_i
    Vec3<T> offset(std::int64_t i, const T* c) const {
        Vec3<T> o;
        for (int a = 0; a < 3; ++a) {
            const T* row = wg_w_.data() + (i * 3 + a) * width_;
            double acc = double(wg_b_[i * 3 + a]);
            for (std::int64_t k = 0; k < width_; ++k) acc += double(row[k]) * double(c[k]);
            o[static_cast<std::size_t>(a)] = T(acc);
        }
        return o;
    }

    void offset_backward(std::int64_t i, const T* c, const Vec3<T>& dout, T* dc) {
        for (int a = 0; a < 3; ++a) {
            const T g = dout[static_cast<std::size_t>(a)];
            const T* row = wg_w_.data() + (i * 3 + a) * width_;
            T* grow = dwg_w_.data() + (i * 3 + a) * width_;
            dwg_b_[i * 3 + a] += g;
            for (std::int64_t k = 0; k < width_; ++k) {
                grow[k] += g * c[k];
                if (dc) dc[k] += row[k] * g;
            }
        }
    }

    void zero_grad() {
        dps_w_.zero();
        dps_b_.zero();
        dptau_.zero();
        dwg_w_.zero();
        dwg_b_.zero();
    }

    void collect_params(std::vector<ParamRef<T>>& out) {
        out.push_back({"cell.ps.w", &ps_w_, &dps_w_});
        out.push_back({"cell.ps.b", &ps_b_, &dps_b_});
        out.push_back({"cell.ptau", &ptau_, &dptau_});
        out.push_back({"cell.wg.w", &wg_w_, &dwg_w_});
        out.push_back({"cell.wg.b", &wg_b_, &dwg_b_});
    }

    Tensor<T>& offset_weights() { return wg_w_; }
    Tensor<T>& offset_bias() { return wg_b_; }
    Tensor<T>& shared_proj() { return ps_w_; }
    Tensor<T>& attention_vectors() { return ptau_; }

private:
    std::int64_t n_ = 0, width_ = 0, hidden_ = 0;
    Tensor<T> ps_w_, ps_b_, ptau_, wg_w_, wg_b_;
    Tensor<T> dps_w_, dps_b_, dptau_, dwg_w_, dwg_b_;
};

/// Initial state (t = 1): C_1 is the concatenated embedding, S_1 the coarse
/// landmark; no gating is applied.
template <class T>
RefinementState<T> init_state(const T* embedding, std::int64_t width, const Vec3<T>& x1) {
    RefinementState<T> st;
    st.c.resize({width});
    std::copy_n(embedding, width, st.c.data());
    st.s = x1;
    st.x = x1;
    st.t = 1;
    return st;
}

}  // namespace salm
