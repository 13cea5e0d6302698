#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace salm {

/// Thrown for malformed inputs, bad config values and contract violations.
/// CLI maps this to exit code 2.
class validation_error : public std::runtime_error {
public:
    explicit validation_error(const std::string& what) : std::runtime_error(what) {}
};

/// Thrown for failures of the environment (missing files, short reads, ...).
/// CLI maps this to exit code 1.
class io_error : public std::runtime_error {
public:
    explicit io_error(const std::string& what) : std::runtime_error(what) {}
};

inline void check(bool cond, const std::string& msg) {
    if (!cond) throw validation_error(msg);
}

/// 3-component point/offset in (x, y, z) order.
template <class T>
struct Vec3 {
    std::array<T, 3> v{};

    Vec3() = default;
    Vec3(T x, T y, T z) : v{x, y, z} {}

    T& operator[](std::size_t i) { return v[i]; }
    const T& operator[](std::size_t i) const { return v[i]; }

    T x() const { return v[0]; }
    T y() const { return v[1]; }
    T z() const { return v[2]; }

    Vec3 operator+(const Vec3& o) const { return {v[0] + o[0], v[1] + o[1], v[2] + o[2]}; }
    Vec3 operator-(const Vec3& o) const { return {v[0] - o[0], v[1] - o[1], v[2] - o[2]}; }
    Vec3 operator*(T s) const { return {v[0] * s, v[1] * s, v[2] * s}; }

    Vec3& operator+=(const Vec3& o) {
        v[0] += o[0];
        v[1] += o[1];
        v[2] += o[2];
        return *this;
    }

    bool operator==(const Vec3& o) const { return v == o.v; }

    template <class U>
    Vec3<U> cast() const {
        return Vec3<U>(static_cast<U>(v[0]), static_cast<U>(v[1]), static_cast<U>(v[2]));
    }

    bool finite() const { return std::isfinite(double(v[0])) && std::isfinite(double(v[1])) && std::isfinite(double(v[2])); }

    T norm() const { return std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]); }
};

template <class T>
inline Vec3<T> cwise_mul(const Vec3<T>& a, const Vec3<T>& b) {
    return {a[0] * b[0], a[1] * b[1], a[2] * b[2]};
}

/// Grid extents in (x, y, z) order. Storage order everywhere is x fastest.
struct Dims3 {
    std::int64_t x = 0, y = 0, z = 0;

    std::int64_t count() const { return x * y * z; }
    bool operator==(const Dims3&) const = default;
};

inline std::string to_string(const Dims3& d) {
    return std::to_string(d.x) + "x" + std::to_string(d.y) + "x" + std::to_string(d.z);
}

}  // namespace salm
