#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "salm/tensor.hpp"

namespace salm {

/// One named trainable tensor plus its gradient accumulator. Modules expose
/// their parameters through flat lists of these so the optimizer, clipping,
/// checkpointing and finite-difference tests all share one registry.
template <class T>
struct ParamRef {
    std::string name;
    Tensor<T>* value = nullptr;
    Tensor<T>* grad = nullptr;
};

/// Non-trainable persistent state (batch-norm running statistics).
template <class T>
struct BufferRef {
    std::string name;
    Tensor<T>* value = nullptr;
};

template <class T>
inline void init_fanin_uniform(Tensor<T>& w, std::int64_t fan_in, std::mt19937_64& rng) {
    const double bound = 1.0 / std::sqrt(double(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (std::int64_t i = 0; i < w.size(); ++i) w[i] = T(dist(rng));
}

// Small dense helpers for the attention/cell math (row-major {out, in}).

template <class T>
inline void matvec(const Tensor<T>& w, const T* x, T* y) {
    const std::int64_t out = w.dim(0), in = w.dim(1);
    for (std::int64_t o = 0; o < out; ++o) {
        double acc = 0;
        const T* row = w.data() + o * in;
        for (std::int64_t i = 0; i < in; ++i) acc += double(row[i]) * double(x[i]);
        y[o] = T(acc);
    }
}

/// dx += W^T dy ; dW += dy x^T
template <class T>
inline void matvec_backward(const Tensor<T>& w, const T* x, const T* dy, T* dx, Tensor<T>& dw) {
    const std::int64_t out = w.dim(0), in = w.dim(1);
    for (std::int64_t o = 0; o < out; ++o) {
        const T* row = w.data() + o * in;
        T* grow = dw.data() + o * in;
        const T g = dy[o];
        for (std::int64_t i = 0; i < in; ++i) {
            if (dx) dx[i] += row[i] * g;
            grow[i] += g * x[i];
        }
    }
}

}  // namespace salm
