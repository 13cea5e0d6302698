#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "salm/common.hpp"

namespace salm {

/// Dense row-major tensor. Grid data uses shape {z, y, x} (x fastest, matching
/// the on-disk raw layout); feature grids {c, z, y, x}; batched activations
/// {b, c, z, y, x}; matrices {rows, cols}.
template <class T>
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<std::int64_t> shape) { resize(std::move(shape)); }

    void resize(std::vector<std::int64_t> shape) {
        shape_ = std::move(shape);
        std::int64_t n = 1;
        for (auto d : shape_) n *= d;
        data_.assign(static_cast<std::size_t>(n), T(0));
    }

    const std::vector<std::int64_t>& shape() const { return shape_; }
    std::int64_t dim(std::size_t i) const { return shape_[i]; }
    std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }

    T& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
    const T& operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }
    void zero() { fill(T(0)); }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    bool all_finite() const {
        for (const T& v : data_)
            if (!std::isfinite(double(v))) return false;
        return true;
    }

    T min() const { return data_.empty() ? T(0) : *std::min_element(data_.begin(), data_.end()); }
    T max() const { return data_.empty() ? T(0) : *std::max_element(data_.begin(), data_.end()); }

    T sum() const { return std::accumulate(data_.begin(), data_.end(), T(0)); }

    template <class U>
    Tensor<U> cast() const {
        Tensor<U> out(shape_);
        for (std::int64_t i = 0; i < size(); ++i) out[i] = static_cast<U>(data_[i]);
        return out;
    }

    std::vector<T>& raw() { return data_; }
    const std::vector<T>& raw() const { return data_; }

private:
    std::vector<std::int64_t> shape_;
    std::vector<T> data_;
};

template <class T>
inline void axpy(T a, const Tensor<T>& x, Tensor<T>& y) {
    for (std::int64_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

}  // namespace salm
