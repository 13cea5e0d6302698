#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "salm/common.hpp"
#include "salm/graph_attention.hpp"

namespace salm {

enum class LcNorm { l1, l2 };

inline LcNorm parse_lc_norm(const std::string& s) {
    if (s == "l1") return LcNorm::l1;
    if (s == "l2") return LcNorm::l2;
    throw validation_error("unknown lc_norm '" + s + "' (expected l1|l2)");
}

inline std::string to_string(LcNorm n) { return n == LcNorm::l1 ? "l1" : "l2"; }

/// Training and architecture configuration. Defaults are the desk-scale
/// settings; the full-resolution preset from the CBCT protocol (k=8,
/// 1000 epochs) is available via preset files.
struct TrainConfig {
    int k = 4;
    std::optional<Dims3> down_size;  // expected down-sampled dims, checked when set
    std::vector<std::int64_t> patch_sizes = {64, 32, 16};
    int iterations = 3;  // T
    std::int64_t m = 512;
    std::int64_t d = 64;
    std::int64_t att_hidden = 256;
    double sigma_h = 2.0;
    double lambda = 0.5;
    std::string sigma_c_rule = "r_t/3";
    double learning_rate = 1e-3;
    int epochs = 200;
    int batch_size = 1;
    std::uint64_t seed = 0;
    bool lc_include_coarse = false;
    std::string gam_norm = "softmax";
    std::string lc_norm = "l1";
    bool normalize_volumes = true;
    double grad_clip = 5.0;
    int checkpoint_every = 25;

    GamNorm gam_norm_mode() const { return parse_gam_norm(gam_norm); }
    LcNorm lc_norm_mode() const { return parse_lc_norm(lc_norm); }

    void validate() const {
        check(k >= 1, "k must be >= 1");
        check(iterations >= 1, "iterations must be >= 1");
        check(patch_sizes.size() == static_cast<std::size_t>(iterations),
              "patch_sizes must list one size per iteration");
        for (std::size_t i = 0; i < patch_sizes.size(); ++i) {
            check(patch_sizes[i] >= 2 && patch_sizes[i] % 2 == 0,
                  "patch sizes must be positive even integers");
            if (i > 0)
                check(patch_sizes[i] <= patch_sizes[i - 1], "patch sizes must be non-increasing");
        }
        check(m >= 8 && m % 8 == 0, "m must be a positive multiple of 8");
        check(d >= 1, "d must be >= 1");
        check(att_hidden >= 1, "att_hidden must be >= 1");
        check(sigma_h > 0, "sigma_h must be positive");
        check(lambda >= 0.0 && lambda <= 1.0, "lambda must be in [0,1]");
        check(sigma_c_rule == "r_t/3", "unsupported sigma_c_rule (expected r_t/3)");
        check(learning_rate > 0, "learning_rate must be positive");
        check(epochs >= 1, "epochs must be >= 1");
        check(batch_size >= 1, "batch_size must be >= 1");
        check(grad_clip >= 0, "grad_clip must be >= 0");
        (void)gam_norm_mode();
        (void)lc_norm_mode();
    }
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = nlohmann::json{{"k", c.k},
                       {"patch_sizes", c.patch_sizes},
                       {"iterations", c.iterations},
                       {"m", c.m},
                       {"d", c.d},
                       {"att_hidden", c.att_hidden},
                       {"sigma_h", c.sigma_h},
                       {"lambda", c.lambda},
                       {"sigma_c_rule", c.sigma_c_rule},
                       {"learning_rate", c.learning_rate},
                       {"epochs", c.epochs},
                       {"batch_size", c.batch_size},
                       {"seed", c.seed},
                       {"lc_include_coarse", c.lc_include_coarse},
                       {"gam_norm", c.gam_norm},
                       {"lc_norm", c.lc_norm},
                       {"normalize_volumes", c.normalize_volumes},
                       {"grad_clip", c.grad_clip},
                       {"checkpoint_every", c.checkpoint_every}};
    if (c.down_size)
        j["down_size"] = {c.down_size->x, c.down_size->y, c.down_size->z};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
    c.k = j.value("k", c.k);
    if (j.contains("down_size") && !j.at("down_size").is_null()) {
        const auto v = j.at("down_size").get<std::vector<std::int64_t>>();
        check(v.size() == 3, "down_size must have 3 entries");
        c.down_size = Dims3{v[0], v[1], v[2]};
    }
    c.patch_sizes = j.value("patch_sizes", c.patch_sizes);
    c.iterations = j.value("iterations", c.iterations);
    c.m = j.value("m", c.m);
    c.d = j.value("d", c.d);
    c.att_hidden = j.value("att_hidden", c.att_hidden);
    c.sigma_h = j.value("sigma_h", c.sigma_h);
    c.lambda = j.value("lambda", c.lambda);
    c.sigma_c_rule = j.value("sigma_c_rule", c.sigma_c_rule);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.seed = j.value("seed", c.seed);
    c.lc_include_coarse = j.value("lc_include_coarse", c.lc_include_coarse);
    c.gam_norm = j.value("gam_norm", c.gam_norm);
    c.lc_norm = j.value("lc_norm", c.lc_norm);
    c.normalize_volumes = j.value("normalize_volumes", c.normalize_volumes);
    c.grad_clip = j.value("grad_clip", c.grad_clip);
    c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
}

inline TrainConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open config " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw validation_error("malformed config JSON: " + std::string(e.what()));
    }
    TrainConfig c = j.get<TrainConfig>();
    c.validate();
    return c;
}

}  // namespace salm
