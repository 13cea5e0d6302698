#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "salm/common.hpp"
#include "salm/interp.hpp"
#include "salm/tensor.hpp"

namespace salm {

/// 3D scalar grid with physical voxel spacing. Data shape is {z, y, x},
/// x fastest, matching the `.vol.raw` layout.
template <class T>
struct Volume {
    Tensor<T> data;
    Vec3<double> spacing_mm{1.0, 1.0, 1.0};
    std::string name;

    Dims3 dims() const {
        if (data.shape().size() != 3) return {};
        return {data.dim(2), data.dim(1), data.dim(0)};
    }

    T at(std::int64_t x, std::int64_t y, std::int64_t z) const {
        const Dims3 d = dims();
        return data[(z * d.y + y) * d.x + x];
    }
    T& at(std::int64_t x, std::int64_t y, std::int64_t z) {
        const Dims3 d = dims();
        return data[(z * d.y + y) * d.x + x];
    }

    bool contains(std::int64_t x, std::int64_t y, std::int64_t z) const {
        const Dims3 d = dims();
        return x >= 0 && y >= 0 && z >= 0 && x < d.x && y < d.y && z < d.z;
    }

    void validate() const {
        const Dims3 d = dims();
        check(d.x >= 1 && d.y >= 1 && d.z >= 1, "volume dims must all be >= 1");
        check(spacing_mm[0] > 0 && spacing_mm[1] > 0 && spacing_mm[2] > 0,
              "volume spacing must be positive");
        check(data.all_finite(), "volume contains non-finite values");
    }
};

/// Named ordered landmark positions in original-volume voxel coordinates.
struct LandmarkSet {
    std::vector<std::string> names;
    std::vector<Vec3<double>> points;
    Vec3<double> spacing_mm{1.0, 1.0, 1.0};

    std::size_t size() const { return names.size(); }

    void validate() const {
        check(names.size() == points.size(), "landmark names/points length mismatch");
        std::set<std::string> uniq(names.begin(), names.end());
        check(uniq.size() == names.size(), "landmark names must be unique");
        for (const auto& p : points) check(p.finite(), "landmark point is not finite");
    }
};

/// Cubic crop taken from an original-resolution volume.
template <class T>
struct Patch {
    Tensor<T> data;  // {s, s, s}
    Vec3<double> center;
    std::int64_t source_size = 0;

    std::int64_t edge() const { return data.shape().empty() ? 0 : data.dim(0); }
};

// ---------------------------------------------------------------------------
// Coordinate conversions
// ---------------------------------------------------------------------------

/// Down-sampled voxel v covers original voxels [v*k, v*k + k); its center is
/// v*k + (k-1)/2. Exact inverse of coords_orig_to_ds.
inline Vec3<double> coords_ds_to_orig(const Vec3<double>& x_ds, int k) {
    check(k >= 1, "down-sample factor must be >= 1");
    const double half = (k - 1) / 2.0;
    return {x_ds[0] * k + half, x_ds[1] * k + half, x_ds[2] * k + half};
}

inline Vec3<double> coords_orig_to_ds(const Vec3<double>& x_orig, int k) {
    check(k >= 1, "down-sample factor must be >= 1");
    const double half = (k - 1) / 2.0;
    return {(x_orig[0] - half) / k, (x_orig[1] - half) / k, (x_orig[2] - half) / k};
}

inline Vec3<double> voxel_to_mm(const Vec3<double>& p, const Vec3<double>& spacing_mm) {
    check(spacing_mm[0] > 0 && spacing_mm[1] > 0 && spacing_mm[2] > 0, "spacing must be positive");
    return cwise_mul(p, spacing_mm);
}

// ---------------------------------------------------------------------------
// Grid operations
// ---------------------------------------------------------------------------

/// Block-mean pooling by factor k. Output dims are ceil(dims/k); edge blocks
/// average over the voxels that exist. Spacing is multiplied by k.
template <class T>
Volume<T> downsample(const Volume<T>& v, int k) {
    check(k >= 1, "down-sample factor must be >= 1");
    if (k == 1) return v;
    const Dims3 d = v.dims();
    const Dims3 od{(d.x + k - 1) / k, (d.y + k - 1) / k, (d.z + k - 1) / k};
    Volume<T> out;
    out.data.resize({od.z, od.y, od.x});
    out.spacing_mm = v.spacing_mm * double(k);
    out.name = v.name;
    for (std::int64_t oz = 0; oz < od.z; ++oz)
        for (std::int64_t oy = 0; oy < od.y; ++oy)
            for (std::int64_t ox = 0; ox < od.x; ++ox) {
                const std::int64_t x1 = std::min(d.x, (ox + 1) * std::int64_t(k));
                const std::int64_t y1 = std::min(d.y, (oy + 1) * std::int64_t(k));
                const std::int64_t z1 = std::min(d.z, (oz + 1) * std::int64_t(k));
                double acc = 0.0;
                std::int64_t cnt = 0;
                for (std::int64_t z = oz * k; z < z1; ++z)
                    for (std::int64_t y = oy * k; y < y1; ++y)
                        for (std::int64_t x = ox * k; x < x1; ++x, ++cnt)
                            acc += double(v.at(x, y, z));
                out.at(ox, oy, oz) = T(acc / double(cnt));
            }
    return out;
}

/// Cube of edge s whose voxel (s/2, s/2, s/2) lands on round(center).
/// Out-of-bounds voxels are zero-filled; a fully outside center is valid.
template <class T>
Patch<T> crop_patch(const Volume<T>& v, const Vec3<double>& center, std::int64_t s) {
    check(s >= 2 && s % 2 == 0, "patch size must be a positive even integer");
    check(center.finite(), "patch center must be finite");
    Patch<T> p;
    p.data.resize({s, s, s});
    p.center = center;
    p.source_size = s;
    const Vec3<std::int64_t> c{std::llround(center[0]), std::llround(center[1]),
                               std::llround(center[2])};
    const Dims3 d = v.dims();
    const std::int64_t half = s / 2;
    for (std::int64_t pz = 0; pz < s; ++pz) {
        const std::int64_t z = c[2] + pz - half;
        if (z < 0 || z >= d.z) continue;
        for (std::int64_t py = 0; py < s; ++py) {
            const std::int64_t y = c[1] + py - half;
            if (y < 0 || y >= d.y) continue;
            for (std::int64_t px = 0; px < s; ++px) {
                const std::int64_t x = c[0] + px - half;
                if (x < 0 || x >= d.x) continue;
                p.data[(pz * s + py) * s + px] = v.at(x, y, z);
            }
        }
    }
    return p;
}

namespace detail {

template <class T>
Tensor<T> resize_grid_trilinear(const Tensor<T>& in, std::int64_t tx, std::int64_t ty,
                                std::int64_t tz) {
    const std::int64_t sz = in.dim(0), sy = in.dim(1), sx = in.dim(2);
    Tensor<T> out({tz, ty, tx});
    std::vector<std::int64_t> x0, x1, y0, y1, z0, z1;
    std::vector<double> wx, wy, wz;
    interp::resize_axis_taps(sx, tx, x0, x1, wx);
    interp::resize_axis_taps(sy, ty, y0, y1, wy);
    interp::resize_axis_taps(sz, tz, z0, z1, wz);
    auto src = [&](std::int64_t x, std::int64_t y, std::int64_t z) {
        return double(in[(z * sy + y) * sx + x]);
    };
    for (std::int64_t z = 0; z < tz; ++z)
        for (std::int64_t y = 0; y < ty; ++y)
            for (std::int64_t x = 0; x < tx; ++x) {
                const double fx = wx[x], fy = wy[y], fz = wz[z];
                double v = 0.0;
                v += (1 - fz) * ((1 - fy) * ((1 - fx) * src(x0[x], y0[y], z0[z]) +
                                             fx * src(x1[x], y0[y], z0[z])) +
                                 fy * ((1 - fx) * src(x0[x], y1[y], z0[z]) +
                                       fx * src(x1[x], y1[y], z0[z])));
                v += fz * ((1 - fy) * ((1 - fx) * src(x0[x], y0[y], z1[z]) +
                                       fx * src(x1[x], y0[y], z1[z])) +
                           fy * ((1 - fx) * src(x0[x], y1[y], z1[z]) +
                                 fx * src(x1[x], y1[y], z1[z])));
                out[(z * ty + y) * tx + x] = T(v);
            }
    return out;
}

}  // namespace detail

/// Trilinear resize to a cube of edge `target`; center and source_size kept.
template <class T>
Patch<T> resize_patch(const Patch<T>& p, std::int64_t target) {
    check(target >= 1, "resize target must be >= 1");
    if (target == p.edge()) return p;
    Patch<T> out;
    out.center = p.center;
    out.source_size = p.source_size;
    out.data = detail::resize_grid_trilinear(p.data, target, target, target);
    return out;
}

/// Min-max normalization to [0,1]. A constant volume maps to all zeros.
template <class T>
void minmax_normalize(Volume<T>& v) {
    const T lo = v.data.min(), hi = v.data.max();
    const T range = hi - lo;
    if (range <= T(0)) {
        v.data.zero();
        return;
    }
    for (std::int64_t i = 0; i < v.data.size(); ++i) v.data[i] = (v.data[i] - lo) / range;
}

// ---------------------------------------------------------------------------
// File I/O:  <name>.vol.json + <name>.vol.raw,  <name>.lmk.json
// ---------------------------------------------------------------------------

namespace detail {

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw validation_error("malformed JSON in " + path.string() + ": " + e.what());
    }
    return j;
}

inline void write_json_file(const std::filesystem::path& path, const nlohmann::json& j) {
    std::ofstream out(path);
    if (!out) throw io_error("cannot write " + path.string());
    out << j.dump(2) << "\n";
}

}  // namespace detail

/// Loads a `<name>.vol.json` + raw pair. Values are converted to T; no
/// normalization is applied here.
template <class T>
Volume<T> load_volume(const std::filesystem::path& json_path) {
    namespace fs = std::filesystem;
    const nlohmann::json j = detail::read_json_file(json_path);
    check(j.value("dtype", "") == std::string("f32"), "unsupported dtype in " + json_path.string());
    check(j.value("byte_order", "little") == std::string("little"),
          "unsupported byte order in " + json_path.string());
    check(j.value("index_order", "x-fastest") == std::string("x-fastest"),
          "unsupported index order in " + json_path.string());
    const auto dims = j.at("dims").get<std::vector<std::int64_t>>();
    const auto spacing = j.at("spacing_mm").get<std::vector<double>>();
    check(dims.size() == 3 && spacing.size() == 3, "dims/spacing_mm must have 3 entries");

    Volume<T> v;
    v.name = json_path.stem().stem().string();
    v.spacing_mm = {spacing[0], spacing[1], spacing[2]};
    v.data.resize({dims[2], dims[1], dims[0]});

    const fs::path raw_path = json_path.parent_path() / j.at("data_file").get<std::string>();
    std::ifstream raw(raw_path, std::ios::binary);
    if (!raw) throw io_error("cannot open " + raw_path.string());
    const auto expected_bytes = std::uintmax_t(v.data.size()) * sizeof(float);
    const auto actual_bytes = fs::file_size(raw_path);
    check(actual_bytes == expected_bytes,
          "byte-count mismatch in " + raw_path.string() + ": expected " +
              std::to_string(expected_bytes) + ", found " + std::to_string(actual_bytes));

    std::vector<float> buf(static_cast<std::size_t>(v.data.size()));
    raw.read(reinterpret_cast<char*>(buf.data()), std::streamsize(expected_bytes));
    if (!raw) throw io_error("short read from " + raw_path.string());
    for (std::int64_t i = 0; i < v.data.size(); ++i) v.data[i] = T(buf[i]);
    v.validate();
    return v;
}

/// Writes `<stem>.vol.json` + `<stem>.vol.raw` under dir.
template <class T>
std::filesystem::path save_volume(const Volume<T>& v, const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    v.validate();
    fs::create_directories(dir);
    const Dims3 d = v.dims();
    const std::string raw_name = v.name + ".vol.raw";
    nlohmann::json j{{"dims", {d.x, d.y, d.z}},
                     {"spacing_mm", {v.spacing_mm[0], v.spacing_mm[1], v.spacing_mm[2]}},
                     {"dtype", "f32"},
                     {"byte_order", "little"},
                     {"index_order", "x-fastest"},
                     {"data_file", raw_name}};
    detail::write_json_file(dir / (v.name + ".vol.json"), j);

    std::ofstream raw(dir / raw_name, std::ios::binary);
    if (!raw) throw io_error("cannot write " + (dir / raw_name).string());
    std::vector<float> buf(static_cast<std::size_t>(v.data.size()));
    for (std::int64_t i = 0; i < v.data.size(); ++i) buf[i] = float(v.data[i]);
    raw.write(reinterpret_cast<const char*>(buf.data()),
              std::streamsize(buf.size() * sizeof(float)));
    return dir / (v.name + ".vol.json");
}

inline LandmarkSet load_landmarks(const std::filesystem::path& path) {
    const nlohmann::json j = detail::read_json_file(path);
    LandmarkSet lm;
    lm.names = j.at("names").get<std::vector<std::string>>();
    for (const auto& p : j.at("points_voxel")) {
        const auto v = p.get<std::vector<double>>();
        check(v.size() == 3, "points_voxel entries must have 3 coordinates");
        lm.points.push_back({v[0], v[1], v[2]});
    }
    if (j.contains("spacing_mm")) {
        const auto s = j.at("spacing_mm").get<std::vector<double>>();
        check(s.size() == 3, "spacing_mm must have 3 entries");
        lm.spacing_mm = {s[0], s[1], s[2]};
    }
    lm.validate();
    return lm;
}

inline std::filesystem::path save_landmarks(const LandmarkSet& lm, const std::filesystem::path& path) {
    lm.validate();
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& p : lm.points) pts.push_back({p[0], p[1], p[2]});
    nlohmann::json j{{"names", lm.names},
                     {"points_voxel", pts},
                     {"spacing_mm", {lm.spacing_mm[0], lm.spacing_mm[1], lm.spacing_mm[2]}}};
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    detail::write_json_file(path, j);
    return path;
}

}  // namespace salm
