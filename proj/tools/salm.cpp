// salm: two-stage 3D landmark detection on synthetic phantom volumes.
// Subcommands: synth, train, infer, eval, bench.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "salm/blas.hpp"
#include "salm/checkpoint.hpp"
#include "salm/common.hpp"
#include "salm/config.hpp"
#include "salm/evaluation.hpp"
#include "salm/phantom.hpp"
#include "salm/pipeline.hpp"
#include "salm/training.hpp"
#include "salm/volume.hpp"

namespace fs = std::filesystem;
using Scalar = float;

namespace {

int resolve_threads(int flag_value) {
    if (flag_value > 0) return flag_value;
    if (const char* env = std::getenv("SALM_THREADS")) {
        const int v = std::atoi(env);
        if (v > 0) return v;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? int(hw) : 1;
}

nlohmann::json trace_json(const salm::RefineTrace& trace,
                          const std::vector<std::string>& names) {
    nlohmann::json j;
    j["landmarks"] = names;
    auto points = [](const std::vector<salm::Vec3<double>>& ps) {
        nlohmann::json out = nlohmann::json::array();
        for (const auto& p : ps) out.push_back({p[0], p[1], p[2]});
        return out;
    };
    j["coarse"] = points(trace.coarse);
    j["iterations"] = nlohmann::json::array();
    for (const auto& it : trace.iterations) {
        nlohmann::json ij;
        ij["patch_size"] = it.patch_size;
        ij["centers"] = points(it.centers);
        ij["predictions"] = points(it.predictions);
        if (!it.f.empty()) {
            ij["gate_f"] = it.f;
            ij["gate_u"] = it.u;
        }
        j["iterations"].push_back(ij);
    }
    return j;
}

int cmd_synth(const fs::path& out_dir, std::int64_t count, std::uint64_t seed,
              std::vector<std::int64_t> dims, double spacing, int landmarks, double noise_std,
              double jitter_trans, double jitter_scale, std::vector<double> split) {
    salm::PhantomSpec spec;
    if (!dims.empty()) {
        salm::check(dims.size() == 3, "--dims needs three values");
        spec.dims = {dims[0], dims[1], dims[2]};
    }
    spec.spacing_mm = {spacing, spacing, spacing};
    spec.landmarks = landmarks;
    spec.noise_std = noise_std;
    spec.jitter_translation = jitter_trans;
    spec.jitter_scale = jitter_scale;
    spec.seed = seed;
    salm::check(split.size() == 3, "--split needs three ratios");
    const auto manifest = salm::generate_dataset<Scalar>(
        spec, count, {split[0], split[1], split[2]}, out_dir);
    std::cout << "wrote " << count << " phantoms, manifest " << manifest.string() << "\n";
    return 0;
}

int cmd_train(const std::optional<fs::path>& config_path, const fs::path& manifest_path,
              const fs::path& out_dir, std::optional<std::uint64_t> seed,
              std::optional<int> epochs, std::optional<bool> lc_include_coarse,
              std::optional<std::string> gam_norm, bool quiet) {
    salm::TrainConfig cfg;
    if (config_path) cfg = salm::load_config(*config_path);
    // flag-over-file precedence
    if (seed) cfg.seed = *seed;
    if (epochs) cfg.epochs = *epochs;
    if (lc_include_coarse) cfg.lc_include_coarse = *lc_include_coarse;
    if (gam_norm) cfg.gam_norm = *gam_norm;
    cfg.validate();

    const auto manifest = salm::load_manifest(manifest_path);
    salm::check(!manifest.train.empty(), "manifest has no training volumes");
    const fs::path data_dir = manifest_path.parent_path();
    auto train_set = salm::load_split<Scalar>(data_dir, manifest.train);
    std::vector<std::pair<salm::Volume<Scalar>, salm::LandmarkSet>> val_set;
    if (!manifest.val.empty()) val_set = salm::load_split<Scalar>(data_dir, manifest.val);

    salm::Model<Scalar> model(cfg, train_set.front().second.names);
    model.init(cfg.seed);
    salm::Trainer<Scalar> trainer(model, cfg);
    const auto result = trainer.run(train_set, val_set.empty() ? nullptr : &val_set, out_dir, quiet);
    std::cout << "checkpoint " << result.checkpoint_path.string() << "\n"
              << "loss log   " << (out_dir / "loss.csv").string() << "\n";
    return 0;
}

int cmd_infer(const fs::path& ckpt_path, const fs::path& volume_path, const fs::path& out_dir,
              bool with_trace) {
    auto model = salm::ckpt::load_model<Scalar>(ckpt_path);
    auto vol = salm::load_volume<Scalar>(volume_path);

    // if annotations sit next to the volume, their names must match the model
    fs::path lmk_path = volume_path;
    std::string base = volume_path.stem().stem().string();
    lmk_path.replace_filename(base + ".lmk.json");
    if (fs::exists(lmk_path)) {
        const auto gt = salm::load_landmarks(lmk_path);
        salm::check(gt.names == model.landmark_names(),
                    "volume annotations name different landmarks than the checkpoint");
    }

    const auto res = model.infer(vol);
    fs::create_directories(out_dir);
    salm::save_landmarks(res.refined, out_dir / (base + ".lmk.json"));
    if (with_trace) {
        std::ofstream out(out_dir / (base + ".trace.json"));
        out << trace_json(res.trace, model.landmark_names()).dump(2) << "\n";
    }
    std::cout << "predictions " << (out_dir / (base + ".lmk.json")).string() << "\n";
    return 0;
}

int cmd_eval(const fs::path& pred_dir, const fs::path& gt_dir, std::vector<double> radii,
             const fs::path& out_dir, bool csv) {
    std::map<std::string, std::vector<double>> errors;
    std::size_t volumes = 0;
    std::vector<std::string> offenders;
    for (const auto& entry : fs::directory_iterator(pred_dir)) {
        const std::string fname = entry.path().filename().string();
        if (fname.size() < 9 || fname.substr(fname.size() - 9) != ".lmk.json") continue;
        const fs::path gt_path = gt_dir / fname;
        if (!fs::exists(gt_path)) throw salm::validation_error("no ground truth for " + fname);
        const auto pred = salm::load_landmarks(entry.path());
        const auto gt = salm::load_landmarks(gt_path);
        if (pred.names != gt.names) {
            offenders.push_back(fname);
            continue;
        }
        const auto errs = salm::radial_errors(pred, gt, gt.spacing_mm);
        for (std::size_t i = 0; i < errs.size(); ++i) errors[pred.names[i]].push_back(errs[i]);
        ++volumes;
    }
    if (!offenders.empty()) {
        std::string msg = "landmark name mismatches in:";
        for (const auto& f : offenders) msg += " " + f;
        throw salm::validation_error(msg);
    }
    salm::check(volumes > 0, "no prediction files found in " + pred_dir.string());
    std::sort(radii.begin(), radii.end());
    const auto report = salm::summarize(errors, radii);
    salm::write_metrics_report(report, out_dir, csv);
    std::cout << salm::format_metrics_report(report);
    return 0;
}

int cmd_bench(const fs::path& ckpt_path, const fs::path& volume_path, int repeats) {
    auto model = salm::ckpt::load_model<Scalar>(ckpt_path);
    const auto vol = salm::load_volume<Scalar>(volume_path);
    salm::check(repeats >= 1, "--repeats must be >= 1");
    (void)salm::time_inference(model, vol);  // warm-up, excluded
    std::vector<double> times;
    for (int r = 0; r < repeats; ++r) times.push_back(salm::time_inference(model, vol));
    std::sort(times.begin(), times.end());
    double mean = 0;
    for (double t : times) mean += t;
    mean /= double(times.size());
    const double median = times.size() % 2 ? times[times.size() / 2]
                                           : 0.5 * (times[times.size() / 2 - 1] + times[times.size() / 2]);
    std::cout << "repeats " << repeats << "\n"
              << "min_s    " << times.front() << "\n"
              << "median_s " << median << "\n"
              << "mean_s   " << mean << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"structure-aware two-stage 3D landmark detection"};
    app.require_subcommand(1);
    int threads = 0;
    app.add_option("--threads", threads, "BLAS/compute threads (default: SALM_THREADS or all)");

    // synth
    auto* synth = app.add_subcommand("synth", "generate a phantom dataset");
    fs::path synth_out;
    std::int64_t count = 40;
    std::uint64_t synth_seed = 0;
    std::vector<std::int64_t> dims;
    double spacing = 0.3, noise_std = 0.02, jit_t = 8.0, jit_s = 0.08;
    int landmarks = 6;
    std::vector<double> split{0.8, 0.0, 0.2};
    synth->add_option("--out", synth_out, "output directory")->required();
    synth->add_option("--count", count, "number of phantoms");
    synth->add_option("--seed", synth_seed, "generator seed");
    synth->add_option("--dims", dims, "volume dims x y z")->expected(3);
    synth->add_option("--spacing", spacing, "isotropic voxel spacing (mm)");
    synth->add_option("--landmarks", landmarks, "landmarks per phantom (2..8)");
    synth->add_option("--noise-std", noise_std, "intensity noise std");
    synth->add_option("--jitter-translation", jit_t, "pose translation jitter (voxels)");
    synth->add_option("--jitter-scale", jit_s, "pose scale jitter (relative)");
    synth->add_option("--split", split, "train/val/test ratios")->expected(3);

    // train
    auto* train = app.add_subcommand("train", "train on a dataset manifest");
    std::string config_path_s, manifest_path_s, train_out_s;
    std::int64_t seed_flag = -1;
    int epochs_flag = -1;
    bool lc_coarse_flag = false, quiet = false;
    std::string gam_norm_flag;
    train->add_option("--config", config_path_s, "TrainConfig JSON");
    train->add_option("--data", manifest_path_s, "dataset manifest.json")->required();
    train->add_option("--out", train_out_s, "output directory")->required();
    train->add_option("--seed", seed_flag, "seed override");
    train->add_option("--epochs", epochs_flag, "epoch override");
    train->add_flag("--lc-include-coarse", lc_coarse_flag, "supervise x_1 in L_c as well");
    train->add_option("--gam-norm", gam_norm_flag, "softmax|raw-eps");
    train->add_flag("--quiet", quiet, "suppress per-epoch output");

    // infer
    auto* infer = app.add_subcommand("infer", "predict landmarks for one volume");
    std::string infer_ckpt, infer_vol, infer_out;
    bool with_trace = false;
    infer->add_option("--checkpoint", infer_ckpt, "checkpoint file")->required();
    infer->add_option("--volume", infer_vol, "volume .vol.json")->required();
    infer->add_option("--out", infer_out, "output directory")->required();
    infer->add_flag("--trace", with_trace, "also write per-iteration trace JSON");

    // eval
    auto* eval = app.add_subcommand("eval", "score predictions against ground truth");
    std::string pred_dir, gt_dir, eval_out;
    std::vector<double> radii{2.0, 2.5, 3.0, 4.0, 8.0};
    bool csv = false;
    eval->add_option("--pred", pred_dir, "directory of predicted .lmk.json")->required();
    eval->add_option("--gt", gt_dir, "directory of ground-truth .lmk.json")->required();
    eval->add_option("--radii", radii, "SDR radii in mm");
    eval->add_option("--out", eval_out, "report output directory")->required();
    eval->add_flag("--csv", csv, "also write report.csv");

    // bench
    auto* bench = app.add_subcommand("bench", "time full-pipeline inference");
    std::string bench_ckpt, bench_vol;
    int repeats = 10;
    bool single_thread = false;
    bench->add_option("--checkpoint", bench_ckpt, "checkpoint file")->required();
    bench->add_option("--volume", bench_vol, "volume .vol.json")->required();
    bench->add_option("--repeats", repeats, "timed repetitions (one warm-up excluded)");
    bench->add_flag("--single-thread", single_thread, "force one compute thread");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        app.exit(e);
        return 2;
    }

    try {
        salm::blas::set_threads(single_thread ? 1 : resolve_threads(threads));
        if (synth->parsed())
            return cmd_synth(synth_out, count, synth_seed, dims, spacing, landmarks, noise_std,
                             jit_t, jit_s, split);
        if (train->parsed()) {
            std::optional<fs::path> cfg;
            if (!config_path_s.empty()) cfg = config_path_s;
            std::optional<std::uint64_t> seed;
            if (seed_flag >= 0) seed = std::uint64_t(seed_flag);
            std::optional<int> epochs;
            if (epochs_flag >= 0) epochs = epochs_flag;
            std::optional<bool> lc;
            if (lc_coarse_flag) lc = true;
            std::optional<std::string> gn;
            if (!gam_norm_flag.empty()) gn = gam_norm_flag;
            return cmd_train(cfg, manifest_path_s, train_out_s, seed, epochs, lc, gn, quiet);
        }
        if (infer->parsed()) return cmd_infer(infer_ckpt, infer_vol, infer_out, with_trace);
        if (eval->parsed()) return cmd_eval(pred_dir, gt_dir, radii, eval_out, csv);
        if (bench->parsed()) return cmd_bench(bench_ckpt, bench_vol, repeats);
    } catch (const salm::validation_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
