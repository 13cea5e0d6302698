#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "salm/common.hpp"
#include "salm/rng.hpp"
#include "salm/volume.hpp"

namespace salm {

/// Deterministic phantom family: a large soft ellipsoid ("cranium"), a small
/// protruding ellipsoid ("nose") and a soft-edged box ("jaw") under a
/// per-sample axis-aligned scale/translation pose. Landmarks are analytic
/// surface features of those shapes carried through the same pose.
struct PhantomSpec {
    Dims3 dims{192, 192, 144};
    Vec3<double> spacing_mm{0.3, 0.3, 0.3};
    int landmarks = 6;
    double noise_std = 0.02;
    double jitter_translation = 8.0;  // voxels, uniform per axis
    double jitter_scale = 0.08;       // relative, uniform per axis
    std::uint64_t seed = 0;

    void validate() const {
        check(dims.x >= 32 && dims.y >= 32 && dims.z >= 32, "phantom dims too small");
        check(dims.x % 4 == 0 && dims.y % 4 == 0 && dims.z % 4 == 0,
              "phantom dims must be divisible by 4");
        check(landmarks >= 2 && landmarks <= 8, "phantom landmark count must be in [2,8]");
        check(noise_std >= 0, "noise_std must be >= 0");
        check(spacing_mm[0] > 0 && spacing_mm[1] > 0 && spacing_mm[2] > 0,
              "spacing must be positive");
    }
};

inline void to_json(nlohmann::json& j, const PhantomSpec& s) {
    j = nlohmann::json{{"dims", {s.dims.x, s.dims.y, s.dims.z}},
                       {"spacing_mm", {s.spacing_mm[0], s.spacing_mm[1], s.spacing_mm[2]}},
                       {"landmarks", s.landmarks},
                       {"noise_std", s.noise_std},
                       {"jitter_translation", s.jitter_translation},
                       {"jitter_scale", s.jitter_scale},
                       {"seed", s.seed}};
}

inline void from_json(const nlohmann::json& j, PhantomSpec& s) {
    if (j.contains("dims")) {
        const auto v = j.at("dims").get<std::vector<std::int64_t>>();
        check(v.size() == 3, "dims must have 3 entries");
        s.dims = {v[0], v[1], v[2]};
    }
    if (j.contains("spacing_mm")) {
        const auto v = j.at("spacing_mm").get<std::vector<double>>();
        check(v.size() == 3, "spacing_mm must have 3 entries");
        s.spacing_mm = {v[0], v[1], v[2]};
    }
    s.landmarks = j.value("landmarks", s.landmarks);
    s.noise_std = j.value("noise_std", s.noise_std);
    s.jitter_translation = j.value("jitter_translation", s.jitter_translation);
    s.jitter_scale = j.value("jitter_scale", s.jitter_scale);
    s.seed = j.value("seed", s.seed);
}

namespace phantom_detail {

struct Ellipsoid {
    Vec3<double> center;
    Vec3<double> radii;
    double amp;
};

struct Box {
    Vec3<double> center;
    Vec3<double> half;
    double amp;
};

struct Pose {
    Vec3<double> scale{1, 1, 1};
    Vec3<double> shift{0, 0, 0};
    Vec3<double> pivot{0, 0, 0};

    Vec3<double> apply(const Vec3<double>& p) const {
        return {(p[0] - pivot[0]) * scale[0] + pivot[0] + shift[0],
                (p[1] - pivot[1]) * scale[1] + pivot[1] + shift[1],
                (p[2] - pivot[2]) * scale[2] + pivot[2] + shift[2]};
    }
};

struct Scene {
    Ellipsoid head, nose;
    Box jaw;
    std::vector<std::string> names;
    std::vector<Vec3<double>> landmarks;
};

inline double soft_edge(double inside_dist, double width) {
    return 1.0 / (1.0 + std::exp(-inside_dist / width));
}

inline double ellipsoid_value(const Ellipsoid& e, const Vec3<double>& p, double width) {
    double q = 0;
    for (int a = 0; a < 3; ++a) {
        const double t = (p[static_cast<std::size_t>(a)] - e.center[static_cast<std::size_t>(a)]) /
                         e.radii[static_cast<std::size_t>(a)];
        q += t * t;
    }
    const double rmin = std::min({e.radii[0], e.radii[1], e.radii[2]});
    return e.amp * soft_edge((1.0 - std::sqrt(q)) * rmin, width);
}

inline double box_value(const Box& b, const Vec3<double>& p, double width) {
    // exact signed distance of an axis-aligned box, inside positive
    double dx[3];
    for (int a = 0; a < 3; ++a)
        dx[a] = std::abs(p[static_cast<std::size_t>(a)] - b.center[static_cast<std::size_t>(a)]) -
                b.half[static_cast<std::size_t>(a)];
    const double ox = std::max(dx[0], 0.0), oy = std::max(dx[1], 0.0), oz = std::max(dx[2], 0.0);
    const double outside = std::sqrt(ox * ox + oy * oy + oz * oz);
    const double inside = std::min(std::max({dx[0], dx[1], dx[2]}), 0.0);
    return b.amp * soft_edge(-(outside + inside), width);
}

/// The base scene plus all eight named analytic features in canonical
/// (pre-pose) coordinates.
inline Scene base_scene(const Dims3& d) {
    Scene s;
    const double dx = double(d.x), dy = double(d.y), dz = double(d.z);
    s.head = {{0.50 * dx, 0.46 * dy, 0.58 * dz}, {0.26 * dx, 0.30 * dy, 0.24 * dz}, 1.0};
    s.nose = {{0.50 * dx, 0.46 * dy + 0.92 * 0.30 * dy, 0.52 * dz},
              {0.07 * dx, 0.10 * dy, 0.06 * dz},
              0.85};
    s.jaw = {{0.50 * dx, 0.52 * dy, 0.26 * dz}, {0.18 * dx, 0.14 * dy, 0.10 * dz}, 0.7};

    auto add = [&](const std::string& name, const Vec3<double>& p) {
        s.names.push_back(name);
        s.landmarks.push_back(p);
    };
    add("head_rx", s.head.center + Vec3<double>{s.head.radii[0], 0, 0});
    add("head_lx", s.head.center - Vec3<double>{s.head.radii[0], 0, 0});
    add("head_top", s.head.center + Vec3<double>{0, 0, s.head.radii[2]});
    add("nose_tip", s.nose.center + Vec3<double>{0, s.nose.radii[1], 0});
    add("jaw_right", {s.jaw.center[0] + s.jaw.half[0], s.jaw.center[1] + s.jaw.half[1],
                      s.jaw.center[2] - s.jaw.half[2]});
    add("jaw_left", {s.jaw.center[0] - s.jaw.half[0], s.jaw.center[1] + s.jaw.half[1],
                     s.jaw.center[2] - s.jaw.half[2]});
    add("head_back", s.head.center - Vec3<double>{0, s.head.radii[1], 0});
    add("jaw_chin", {s.jaw.center[0], s.jaw.center[1] + s.jaw.half[1],
                     s.jaw.center[2] - s.jaw.half[2] / 2});
    return s;
}

inline Scene posed_scene(const Dims3& d, const Pose& pose, int landmarks) {
    Scene s = base_scene(d);
    auto scale_vec = [&](const Vec3<double>& v) {
        return Vec3<double>{v[0] * pose.scale[0], v[1] * pose.scale[1], v[2] * pose.scale[2]};
    };
    s.head.center = pose.apply(s.head.center);
    s.head.radii = scale_vec(s.head.radii);
    s.nose.center = pose.apply(s.nose.center);
    s.nose.radii = scale_vec(s.nose.radii);
    s.jaw.center = pose.apply(s.jaw.center);
    s.jaw.half = scale_vec(s.jaw.half);
    for (auto& p : s.landmarks) p = pose.apply(p);
    s.names.resize(static_cast<std::size_t>(landmarks));
    s.landmarks.resize(static_cast<std::size_t>(landmarks));
    return s;
}

constexpr double kEdgeWidth = 1.2;  // voxels

}  // namespace phantom_detail

/// Deterministic in (spec.seed, index). Throws after 10 jitter attempts if a
/// landmark cannot be kept inside the volume.
template <class T>
std::pair<Volume<T>, LandmarkSet> generate_phantom(const PhantomSpec& spec, std::int64_t index) {
    using namespace phantom_detail;
    spec.validate();
    auto rng = derive_rng(spec.seed, {0x9e3779b9u, std::uint64_t(index)});
    std::uniform_real_distribution<double> uni(-1.0, 1.0);

    const Dims3 d = spec.dims;
    Pose pose;
    pose.pivot = {double(d.x) / 2.0, double(d.y) / 2.0, double(d.z) / 2.0};

    Scene scene;
    double damp = 1.0;
    bool ok = false;
    for (int attempt = 0; attempt < 10 && !ok; ++attempt, damp *= 0.6) {
        for (int a = 0; a < 3; ++a) {
            pose.scale[static_cast<std::size_t>(a)] =
                1.0 + uni(rng) * spec.jitter_scale * damp;
            pose.shift[static_cast<std::size_t>(a)] =
                uni(rng) * spec.jitter_translation * damp;
        }
        scene = posed_scene(d, pose, spec.landmarks);
        ok = true;
        for (const auto& p : scene.landmarks) {
            if (p[0] < 2 || p[1] < 2 || p[2] < 2 || p[0] > double(d.x) - 3 ||
                p[1] > double(d.y) - 3 || p[2] > double(d.z) - 3)
                ok = false;
        }
    }
    if (!ok) throw std::runtime_error("phantom landmarks fell outside the volume after 10 attempts");

    Volume<T> vol;
    vol.data.resize({d.z, d.y, d.x});
    vol.spacing_mm = spec.spacing_mm;
    vol.name = "phantom_" + std::to_string(index);

    std::normal_distribution<double> noise(0.0, spec.noise_std);
    std::int64_t o = 0;
    for (std::int64_t z = 0; z < d.z; ++z)
        for (std::int64_t y = 0; y < d.y; ++y)
            for (std::int64_t x = 0; x < d.x; ++x, ++o) {
                const Vec3<double> p{double(x), double(y), double(z)};
                double v = ellipsoid_value(scene.head, p, kEdgeWidth);
                v = std::max(v, ellipsoid_value(scene.nose, p, kEdgeWidth));
                v = std::max(v, box_value(scene.jaw, p, kEdgeWidth));
                if (spec.noise_std > 0) v += noise(rng);
                vol.data[o] = T(v);
            }

    LandmarkSet lm;
    lm.names = scene.names;
    lm.points = scene.landmarks;
    lm.spacing_mm = spec.spacing_mm;
    return {std::move(vol), std::move(lm)};
}

struct DatasetManifest {
    std::vector<std::string> train, val, test;
    nlohmann::json spec;
};

inline DatasetManifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open manifest " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw validation_error("malformed manifest: " + std::string(e.what()));
    }
    DatasetManifest m;
    m.train = j.value("train", std::vector<std::string>{});
    m.val = j.value("val", std::vector<std::string>{});
    m.test = j.value("test", std::vector<std::string>{});
    if (j.contains("spec")) m.spec = j.at("spec");
    return m;
}

template <class T>
std::vector<std::pair<Volume<T>, LandmarkSet>> load_split(const std::filesystem::path& dir,
                                                          const std::vector<std::string>& names) {
    std::vector<std::pair<Volume<T>, LandmarkSet>> out;
    for (const auto& base : names) {
        Volume<T> v = load_volume<T>(dir / (base + ".vol.json"));
        LandmarkSet lm = load_landmarks(dir / (base + ".lmk.json"));
        check(lm.size() > 0, "no landmarks in " + base);
        out.emplace_back(std::move(v), std::move(lm));
    }
    return out;
}

/// Writes volume/landmark triples plus manifest.json; split sizes follow
/// floor(count * ratio) for train and val, the remainder goes to test.
template <class T>
std::filesystem::path generate_dataset(const PhantomSpec& spec, std::int64_t count,
                                       const Vec3<double>& split_ratios,
                                       const std::filesystem::path& dir) {
    spec.validate();
    check(count >= 3, "dataset needs at least 3 phantoms");
    check(split_ratios[0] >= 0 && split_ratios[1] >= 0 && split_ratios[2] >= 0 &&
              std::abs(split_ratios[0] + split_ratios[1] + split_ratios[2] - 1.0) < 1e-9,
          "split ratios must be non-negative and sum to 1");
    std::filesystem::create_directories(dir);
    DatasetManifest manifest;
    const std::int64_t n_train = std::int64_t(std::floor(double(count) * split_ratios[0]));
    const std::int64_t n_val = std::int64_t(std::floor(double(count) * split_ratios[1]));
    for (std::int64_t i = 0; i < count; ++i) {
        auto [vol, lm] = generate_phantom<T>(spec, i);
        save_volume(vol, dir);
        save_landmarks(lm, dir / (vol.name + ".lmk.json"));
        if (i < n_train)
            manifest.train.push_back(vol.name);
        else if (i < n_train + n_val)
            manifest.val.push_back(vol.name);
        else
            manifest.test.push_back(vol.name);
    }
    nlohmann::json j{{"train", manifest.train}, {"val", manifest.val}, {"test", manifest.test}};
    j["spec"] = spec;
    const auto path = dir / "manifest.json";
    detail::write_json_file(path, j);
    return path;
}

}  // namespace salm
