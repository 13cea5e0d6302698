#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "salm/common.hpp"
#include "salm/config.hpp"
#include "salm/nn/adam.hpp"
#include "salm/pipeline.hpp"

namespace salm {

/// Checkpoint container: magic "SALM", format version, scalar width, then
/// length-prefixed named segments. Tensor segments hold a sequence of
/// (name, rank, dims..., payload) records; the "config" segment is JSON.
namespace ckpt {

constexpr char kMagic[4] = {'S', 'A', 'L', 'M'};
constexpr std::uint32_t kVersion = 1;

namespace detail {

template <class V>
void write_pod(std::ostream& out, const V& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(V));
}

template <class V>
V read_pod(std::istream& in) {
    V v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(V));
    if (!in) throw io_error("truncated checkpoint");
    return v;
}

inline void write_string(std::ostream& out, const std::string& s) {
    write_pod<std::uint32_t>(out, std::uint32_t(s.size()));
    out.write(s.data(), std::streamsize(s.size()));
}

inline std::string read_string(std::istream& in) {
    const auto len = read_pod<std::uint32_t>(in);
    std::string s(len, '\0');
    in.read(s.data(), std::streamsize(len));
    if (!in) throw io_error("truncated checkpoint");
    return s;
}

template <class T>
void write_tensor_record(std::ostream& out, const std::string& name, const Tensor<T>& t) {
    write_string(out, name);
    write_pod<std::uint32_t>(out, std::uint32_t(t.shape().size()));
    for (auto d : t.shape()) write_pod<std::int64_t>(out, d);
    out.write(reinterpret_cast<const char*>(t.data()),
              std::streamsize(std::size_t(t.size()) * sizeof(T)));
}

template <class T>
std::pair<std::string, Tensor<T>> read_tensor_record(std::istream& in, std::uint32_t scalar_bytes) {
    const std::string name = read_string(in);
    const auto rank = read_pod<std::uint32_t>(in);
    std::vector<std::int64_t> shape;
    for (std::uint32_t i = 0; i < rank; ++i) shape.push_back(read_pod<std::int64_t>(in));
    Tensor<T> t(shape);
    if (scalar_bytes == sizeof(T)) {
        in.read(reinterpret_cast<char*>(t.data()), std::streamsize(std::size_t(t.size()) * sizeof(T)));
    } else if (scalar_bytes == 4) {
        std::vector<float> buf(static_cast<std::size_t>(t.size()));
        in.read(reinterpret_cast<char*>(buf.data()), std::streamsize(buf.size() * 4));
        for (std::int64_t i = 0; i < t.size(); ++i) t[i] = T(buf[static_cast<std::size_t>(i)]);
    } else if (scalar_bytes == 8) {
        std::vector<double> buf(static_cast<std::size_t>(t.size()));
        in.read(reinterpret_cast<char*>(buf.data()), std::streamsize(buf.size() * 8));
        for (std::int64_t i = 0; i < t.size(); ++i) t[i] = T(buf[static_cast<std::size_t>(i)]);
    } else {
        throw validation_error("unsupported checkpoint scalar width");
    }
    if (!in) throw io_error("truncated checkpoint");
    return {name, std::move(t)};
}

}  // namespace detail

struct Meta {
    TrainConfig config;
    std::vector<std::string> landmark_names;
    std::int64_t epoch = 0;
};

template <class T>
void save(const std::filesystem::path& path, Model<T>& model, nn::Adam<T>* opt,
          std::int64_t epoch) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot write checkpoint " + path.string());
    out.write(kMagic, 4);
    detail::write_pod<std::uint32_t>(out, kVersion);
    detail::write_pod<std::uint32_t>(out, std::uint32_t(sizeof(T)));

    nlohmann::json meta;
    meta["config"] = model.config();
    meta["landmark_names"] = model.landmark_names();
    meta["epoch"] = epoch;
    const std::string meta_str = meta.dump();

    auto params = model.collect_params();
    auto buffers = model.collect_buffers();

    std::uint32_t segments = 3 + (opt ? 1u : 0u);
    detail::write_pod<std::uint32_t>(out, segments);

    detail::write_string(out, "config");
    detail::write_string(out, meta_str);

    detail::write_string(out, "params");
    detail::write_pod<std::uint32_t>(out, std::uint32_t(params.size()));
    for (const auto& p : params) detail::write_tensor_record(out, p.name, *p.value);

    detail::write_string(out, "buffers");
    detail::write_pod<std::uint32_t>(out, std::uint32_t(buffers.size()));
    for (const auto& b : buffers) detail::write_tensor_record(out, b.name, *b.value);

    if (opt) {
        detail::write_string(out, "optim");
        detail::write_pod<std::int64_t>(out, opt->step_count());
        detail::write_pod<std::uint32_t>(out, std::uint32_t(params.size()));
        for (std::size_t i = 0; i < params.size(); ++i) {
            detail::write_tensor_record(out, params[i].name + ".m", opt->first_moments()[i]);
            detail::write_tensor_record(out, params[i].name + ".v", opt->second_moments()[i]);
        }
    }
    if (!out) throw io_error("failed writing checkpoint " + path.string());
}

inline Meta read_meta(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open checkpoint " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw validation_error("not a SALM checkpoint: " + path.string());
    const auto version = detail::read_pod<std::uint32_t>(in);
    check(version == kVersion, "unsupported checkpoint version");
    (void)detail::read_pod<std::uint32_t>(in);  // scalar width
    const auto segments = detail::read_pod<std::uint32_t>(in);
    check(segments >= 1, "empty checkpoint");
    const std::string seg = detail::read_string(in);
    check(seg == "config", "checkpoint missing config segment");
    const std::string meta_str = detail::read_string(in);
    nlohmann::json j = nlohmann::json::parse(meta_str);
    Meta m;
    m.config = j.at("config").get<TrainConfig>();
    m.landmark_names = j.at("landmark_names").get<std::vector<std::string>>();
    m.epoch = j.value("epoch", 0);
    return m;
}

/// Loads parameters (and optimizer state when `opt` is given) into an
/// already constructed model. Tensor names and shapes must match.
template <class T>
Meta load(const std::filesystem::path& path, Model<T>& model, nn::Adam<T>* opt = nullptr) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open checkpoint " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw validation_error("not a SALM checkpoint: " + path.string());
    const auto version = detail::read_pod<std::uint32_t>(in);
    check(version == kVersion, "unsupported checkpoint version");
    const auto scalar_bytes = detail::read_pod<std::uint32_t>(in);
    const auto segments = detail::read_pod<std::uint32_t>(in);

    auto params = model.collect_params();
    auto buffers = model.collect_buffers();
    std::map<std::string, Tensor<T>*> by_name;
    for (const auto& p : params) by_name[p.name] = p.value;
    for (const auto& b : buffers) by_name[b.name] = b.value;
    std::map<std::string, Tensor<T>*> opt_by_name;
    if (opt)
        for (std::size_t i = 0; i < params.size(); ++i) {
            opt_by_name[params[i].name + ".m"] = &opt->first_moments()[i];
            opt_by_name[params[i].name + ".v"] = &opt->second_moments()[i];
        }

    Meta meta;
    for (std::uint32_t s = 0; s < segments; ++s) {
        const std::string seg = detail::read_string(in);
        if (seg == "config") {
            nlohmann::json j = nlohmann::json::parse(detail::read_string(in));
            meta.config = j.at("config").get<TrainConfig>();
            meta.landmark_names = j.at("landmark_names").get<std::vector<std::string>>();
            meta.epoch = j.value("epoch", 0);
        } else if (seg == "params" || seg == "buffers") {
            const auto count = detail::read_pod<std::uint32_t>(in);
            for (std::uint32_t i = 0; i < count; ++i) {
                auto [name, t] = detail::read_tensor_record<T>(in, scalar_bytes);
                auto it = by_name.find(name);
                check(it != by_name.end(), "checkpoint tensor '" + name + "' unknown to the model");
                check(it->second->shape() == t.shape(),
                      "checkpoint tensor '" + name + "' shape mismatch");
                *it->second = std::move(t);
            }
        } else if (seg == "optim") {
            const auto step = detail::read_pod<std::int64_t>(in);
            const auto count = detail::read_pod<std::uint32_t>(in);
            for (std::uint32_t i = 0; i < 2 * count; ++i) {
                auto [name, t] = detail::read_tensor_record<T>(in, scalar_bytes);
                if (!opt) continue;
                auto it = opt_by_name.find(name);
                check(it != opt_by_name.end(), "optimizer tensor '" + name + "' unknown");
                *it->second = std::move(t);
            }
            if (opt) opt->set_step_count(step);
        } else {
            throw validation_error("unknown checkpoint segment '" + seg + "'");
        }
    }
    check(meta.landmark_names == model.landmark_names(),
          "checkpoint landmark names do not match the model");
    return meta;
}

/// Convenience: construct the model a checkpoint describes and load into it.
template <class T>
Model<T> load_model(const std::filesystem::path& path) {
    const Meta meta = read_meta(path);
    Model<T> model(meta.config, meta.landmark_names);
    load(path, model);
    return model;
}

}  // namespace ckpt
}  // namespace salm
