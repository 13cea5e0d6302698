#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "salm/checkpoint.hpp"
#include "salm/config.hpp"
#include "salm/nn/adam.hpp"
#include "salm/pipeline.hpp"
#include "salm/rng.hpp"

namespace salm {

/// L_c over a recorded trace: the refined predictions x_2..x_{T+1} against
/// ground truth, in original voxel units; optionally also the coarse x_1.
inline double refinement_loss(const RefineTrace& trace, const LandmarkSet& gt, LcNorm norm,
                              bool include_coarse) {
    check(!trace.iterations.empty(), "empty refinement trace");
    check(trace.coarse.size() == gt.size(), "trace/ground-truth landmark count mismatch");
    auto term = [&](const Vec3<double>& p, const Vec3<double>& g) {
        const Vec3<double> d = p - g;
        if (norm == LcNorm::l1) return std::abs(d[0]) + std::abs(d[1]) + std::abs(d[2]);
        return d.norm();
    };
    double acc = 0;
    if (include_coarse)
        for (std::size_t i = 0; i < gt.size(); ++i) acc += term(trace.coarse[i], gt.points[i]);
    for (const auto& it : trace.iterations)
        for (std::size_t i = 0; i < gt.size(); ++i) acc += term(it.predictions[i], gt.points[i]);
    return acc;
}

inline double total_loss(double l_h, double l_c, double lambda) {
    check(lambda >= 0.0 && lambda <= 1.0, "lambda must be in [0,1]");
    return lambda * l_h + (1.0 - lambda) * l_c;
}

struct EpochLog {
    int epoch = 0;
    double l_h = 0, l_c = 0, l_o = 0, train_mre_voxels = 0;
};

template <class T>
struct TrainResult {
    std::vector<EpochLog> logs;
    std::filesystem::path checkpoint_path;
    double best_val_mre_mm = -1;
};

/// Joint training of both stages: per volume, one forward through coarse
/// detection, target construction, noisy-center refinement, then one Adam
/// step on L_o. Volume order is reshuffled each epoch; all randomness is
/// derived from (seed, epoch, volume index) so runs are reproducible.
template <class T>
class Trainer {
public:
    Trainer(Model<T>& model, const TrainConfig& cfg) : model_(model), cfg_(cfg) {
        opt_ = nn::Adam<T>(model_.collect_params(), cfg.learning_rate);
    }

    nn::Adam<T>& optimizer() { return opt_; }

    /// dataset entries are (raw volume, landmarks); volumes are prepared once.
    TrainResult<T> run(const std::vector<std::pair<Volume<T>, LandmarkSet>>& dataset,
                       const std::vector<std::pair<Volume<T>, LandmarkSet>>* val_set,
                       const std::filesystem::path& out_dir, bool quiet = false) {
        check(!dataset.empty(), "training dataset is empty");
        for (const auto& [v, lm] : dataset)
            check(lm.names == model_.landmark_names(), "inconsistent landmark names in dataset");

        std::vector<Volume<T>> prepared;
        prepared.reserve(dataset.size());
        for (const auto& [v, lm] : dataset) prepared.push_back(model_.prepare(v));

        TrainResult<T> result;
        std::filesystem::create_directories(out_dir);
        result.checkpoint_path = out_dir / "checkpoint.salm";
        std::ofstream log_file(out_dir / "loss.csv");
        if (!log_file) throw io_error("cannot write " + (out_dir / "loss.csv").string());
        log_file << "epoch,L_h,L_c,L_o,train_MRE_voxels\n" << std::setprecision(10);
        auto append_log = [&](const EpochLog& e) {
            log_file << e.epoch << "," << e.l_h << "," << e.l_c << "," << e.l_o << ","
                     << e.train_mre_voxels << "\n";
            log_file.flush();
        };

        // epoch 0: losses at initialization, no update
        result.logs.push_back(evaluate_epoch(prepared, dataset, 0));
        append_log(result.logs.back());
        if (!quiet) print_log(result.logs.back());

        std::vector<std::size_t> order(dataset.size());
        std::iota(order.begin(), order.end(), 0);

        double best_val = -1;
        for (int epoch = 1; epoch <= cfg_.epochs; ++epoch) {
            auto shuffle_rng = derive_rng(cfg_.seed, {0x5u, std::uint64_t(epoch)});
            std::shuffle(order.begin(), order.end(), shuffle_rng);

            EpochLog log;
            log.epoch = epoch;
            for (std::size_t oi = 0; oi < order.size(); ++oi) {
                const std::size_t vi = order[oi];
                auto noise_rng =
                    derive_rng(cfg_.seed, {0x6u, std::uint64_t(epoch), std::uint64_t(vi)});
                typename Model<T>::Workspace ws;
                model_.zero_grad();
                const auto losses =
                    model_.train_forward(prepared[vi], dataset[vi].second, &noise_rng, ws);
                if (!std::isfinite(losses.l_o))
                    throw std::runtime_error("NaN/Inf loss at epoch " + std::to_string(epoch) +
                                             ", volume '" + dataset[vi].first.name + "'");
                model_.backward(ws);
                opt_.step(model_.collect_params(), cfg_.grad_clip);
                log.l_h += losses.l_h;
                log.l_c += losses.l_c;
                log.l_o += losses.l_o;
                log.train_mre_voxels += losses.train_mre_voxels;
            }
            const double inv = 1.0 / double(order.size());
            log.l_h *= inv;
            log.l_c *= inv;
            log.l_o *= inv;
            log.train_mre_voxels *= inv;
            result.logs.push_back(log);
            append_log(log);
            if (!quiet) print_log(log);

            if (epoch % cfg_.checkpoint_every == 0 || epoch == cfg_.epochs) {
                ckpt::save(result.checkpoint_path, model_, &opt_, epoch);
                if (val_set && !val_set->empty()) {
                    const double val_mre = validation_mre_mm(*val_set);
                    if (best_val < 0 || val_mre < best_val) {
                        best_val = val_mre;
                        ckpt::save<T>(out_dir / "best.salm", model_, nullptr, epoch);
                    }
                }
            }
        }
        result.best_val_mre_mm = best_val;
        return result;
    }

private:
    EpochLog evaluate_epoch(const std::vector<Volume<T>>& prepared,
                            const std::vector<std::pair<Volume<T>, LandmarkSet>>& dataset,
                            int epoch) {
        EpochLog log;
        log.epoch = epoch;
        for (std::size_t vi = 0; vi < prepared.size(); ++vi) {
            auto noise_rng = derive_rng(cfg_.seed, {0x6u, std::uint64_t(epoch), std::uint64_t(vi)});
            typename Model<T>::Workspace ws;
            const auto losses = model_.train_forward(prepared[vi], dataset[vi].second, &noise_rng, ws);
            log.l_h += losses.l_h;
            log.l_c += losses.l_c;
            log.l_o += losses.l_o;
            log.train_mre_voxels += losses.train_mre_voxels;
        }
        const double inv = 1.0 / double(prepared.size());
        log.l_h *= inv;
        log.l_c *= inv;
        log.l_o *= inv;
        log.train_mre_voxels *= inv;
        return log;
    }

    double validation_mre_mm(const std::vector<std::pair<Volume<T>, LandmarkSet>>& val_set) {
        double acc = 0;
        std::size_t count = 0;
        for (const auto& [vol, gt] : val_set) {
            const auto res = model_.infer(vol);
            for (std::size_t i = 0; i < gt.size(); ++i) {
                const Vec3<double> d = cwise_mul(res.refined.points[i] - gt.points[i], vol.spacing_mm);
                acc += d.norm();
                ++count;
            }
        }
        return acc / double(count);
    }

    static void print_log(const EpochLog& e) {
        std::cout << "epoch " << e.epoch << "  L_h " << e.l_h << "  L_c " << e.l_c << "  L_o "
                  << e.l_o << "  train_MRE " << e.train_mre_voxels << " vox" << std::endl;
    }

    Model<T>& model_;
    TrainConfig cfg_;
    nn::Adam<T> opt_;
};

/// Spec-level convenience: build, train and persist in one call.
template <class T>
TrainResult<T> train_loop(const TrainConfig& cfg,
                          const std::vector<std::pair<Volume<T>, LandmarkSet>>& dataset,
                          const std::filesystem::path& out_dir,
                          const std::vector<std::pair<Volume<T>, LandmarkSet>>* val_set = nullptr,
                          bool quiet = true) {
    check(!dataset.empty(), "training dataset is empty");
    Model<T> model(cfg, dataset.front().second.names);
    model.init(cfg.seed);
    Trainer<T> trainer(model, cfg);
    return trainer.run(dataset, val_set, out_dir, quiet);
}

}  // namespace salm
