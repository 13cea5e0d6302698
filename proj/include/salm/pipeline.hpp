#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "salm/augment.hpp"
#include "salm/coarse_net.hpp"
#include "salm/config.hpp"
#include "salm/graph_attention.hpp"
#include "salm/nn/resize.hpp"
#include "salm/patch_encoder.hpp"
#include "salm/refine_cell.hpp"
#include "salm/rng.hpp"
#include "salm/volume.hpp"

namespace salm {

/// Per-iteration record of the refinement: the patch anchors actually used,
/// the gate pair (t >= 2) and the predictions x_{t+1}.
struct IterationTrace {
    std::int64_t patch_size = 0;
    std::vector<Vec3<double>> centers;
    std::vector<double> f, u;  // empty for t = 1
    std::vector<Vec3<double>> spatial_state;
    std::vector<Vec3<double>> predictions;
};

struct RefineTrace {
    std::vector<Vec3<double>> coarse;  // x_1 in original voxel coordinates
    std::vector<IterationTrace> iterations;
};

template <class T>
struct PipelineLosses {
    double l_h = 0, l_c = 0, l_o = 0;
    double train_mre_voxels = 0;
};

/// The assembled two-stage detector. The same instance serves training
/// (train_forward + backward accumulate gradients) and inference.
template <class T>
class Model {
public:
    struct IterWork {
        std::int64_t patch_size = 0;
        std::vector<Vec3<T>> centers;
        Tensor<T> patches;  // {n,1,32,32,32}
        typename PatchEncoder<T>::Cache enc;
        Tensor<T> embed;     // {n,m}
        Tensor<T> pos_ds;    // {n,3}
        std::vector<typename nn::PointSample<T>::Cache> samp;
        Tensor<T> feats;     // {n,d}
        Tensor<T> pos_norm;  // {n,3}
        typename GraphAttention<T>::Cache gam;
        Tensor<T> r;  // {n,d}
        Tensor<T> n;  // {n,m+d}
        std::vector<typename RefineCell<T>::ScoreCache> sc_prev, sc_new;
        std::vector<GateValues<T>> gates;
        Tensor<T> c;  // {n,m+d} state after the update at t
        std::vector<Vec3<T>> s;
        std::vector<Vec3<T>> x_next;
    };

    struct Workspace {
        Dims3 ds_dims{};
        typename CoarseNet<T>::Cache coarse;
        typename CoarseNet<T>::Output out;
        std::vector<typename IntegralLandmark<T>::Cache> integ;
        std::vector<Vec3<T>> x1;
        Tensor<T> targets;  // {n,z,y,x}
        std::vector<IterWork> iters;
        LandmarkSet gt;
        bool degenerate_heatmap = false;
    };

    struct InferenceResult {
        LandmarkSet refined;
        LandmarkSet coarse;
        RefineTrace trace;
    };

    Model() = default;
    Model(const TrainConfig& cfg, std::vector<std::string> landmark_names)
        : cfg_(cfg),
          names_(std::move(landmark_names)),
          coarse_(std::int64_t(names_.size()), cfg.d),
          encoder_(cfg.m),
          gam_(cfg.d),
          cell_(std::int64_t(names_.size()), cfg.m + cfg.d, cfg.att_hidden) {
        cfg_.validate();
        check(!names_.empty(), "model needs at least one landmark name");
    }

    const TrainConfig& config() const { return cfg_; }
    const std::vector<std::string>& landmark_names() const { return names_; }
    std::int64_t landmarks() const { return std::int64_t(names_.size()); }

    CoarseNet<T>& coarse_net() { return coarse_; }
    PatchEncoder<T>& encoder() { return encoder_; }
    GraphAttention<T>& gam() { return gam_; }
    RefineCell<T>& cell() { return cell_; }

    void init(std::uint64_t seed) {
        auto r1 = derive_rng(seed, {1});
        auto r2 = derive_rng(seed, {2});
        auto r3 = derive_rng(seed, {3});
        auto r4 = derive_rng(seed, {4});
        coarse_.init(r1);
        encoder_.init(r2);
        gam_.init(r3);
        cell_.init(r4);
    }

    std::vector<ParamRef<T>> collect_params() {
        std::vector<ParamRef<T>> out;
        coarse_.collect_params(out);
        encoder_.collect_params(out);
        gam_.collect_params(out);
        cell_.collect_params(out);
        return out;
    }

    std::vector<BufferRef<T>> collect_buffers() {
        std::vector<BufferRef<T>> out;
        coarse_.collect_buffers(out);
        encoder_.collect_buffers(out);
        return out;
    }

    void zero_grad() {
        coarse_.zero_grad();
        encoder_.zero_grad();
        gam_.zero_grad();
        cell_.zero_grad();
    }

    /// Min-max normalization applied once per volume before either stage.
    Volume<T> prepare(const Volume<T>& vol) const {
        Volume<T> v = vol;
        if (cfg_.normalize_volumes) minmax_normalize(v);
        return v;
    }

    /// Full training-mode forward. `vol` must already be prepared. When
    /// `noise_rng` is set, crop anchors are jittered per the r_t/3 rule.
    PipelineLosses<T> train_forward(const Volume<T>& vol, const LandmarkSet& gt,
                                    std::mt19937_64* noise_rng, Workspace& ws) {
        const std::int64_t n = landmarks();
        check(gt.names == names_, "landmark names do not match the model");
        ws.gt = gt;

        Volume<T> ds = downsample(vol, cfg_.k);
        ws.ds_dims = ds.dims();
        if (cfg_.down_size)
            check(ws.ds_dims == *cfg_.down_size,
                  "down-sampled dims " + to_string(ws.ds_dims) + " do not match configured " +
                      to_string(*cfg_.down_size));
        ws.out = coarse_.forward(ds.data, true, &ws.coarse);

        ws.integ.assign(static_cast<std::size_t>(n), {});
        ws.x1.assign(static_cast<std::size_t>(n), {});
        const std::int64_t map_elems = ws.ds_dims.count();
        ws.degenerate_heatmap = false;
        for (std::int64_t i = 0; i < n; ++i) {
            bool degen = false;
            const Vec3<T> x1_ds = IntegralLandmark<T>::forward(
                ws.out.heatmaps.data() + i * map_elems, ws.ds_dims,
                &ws.integ[static_cast<std::size_t>(i)], &degen);
            ws.degenerate_heatmap |= degen;
            ws.x1[static_cast<std::size_t>(i)] = ds_to_orig_t(x1_ds);
        }

        ws.targets.resize({n, ws.ds_dims.z, ws.ds_dims.y, ws.ds_dims.x});
        for (std::int64_t i = 0; i < n; ++i) {
            const Vec3<double> g_ds = coords_orig_to_ds(gt.points[static_cast<std::size_t>(i)], cfg_.k);
            Tensor<T> tgt = make_heatmap_target<T>(g_ds, ws.ds_dims, cfg_.sigma_h);
            std::copy_n(tgt.data(), map_elems, ws.targets.data() + i * map_elems);
        }

        PipelineLosses<T> losses;
        losses.l_h = double(heatmap_loss(ws.out.heatmaps, ws.targets));

        run_refinement(vol, ws, true, noise_rng, nullptr);

        double l_c = 0;
        if (cfg_.lc_include_coarse)
            for (std::int64_t i = 0; i < n; ++i)
                l_c += lc_norm_value(ws.x1[static_cast<std::size_t>(i)] -
                                     gt.points[static_cast<std::size_t>(i)].template cast<T>());
        for (const auto& it : ws.iters)
            for (std::int64_t i = 0; i < n; ++i)
                l_c += lc_norm_value(it.x_next[static_cast<std::size_t>(i)] -
                                     gt.points[static_cast<std::size_t>(i)].template cast<T>());
        losses.l_c = l_c;
        losses.l_o = cfg_.lambda * losses.l_h + (1.0 - cfg_.lambda) * losses.l_c;

        double mre = 0;
        const auto& fin = ws.iters.back().x_next;
        for (std::int64_t i = 0; i < n; ++i)
            mre += (fin[static_cast<std::size_t>(i)].template cast<double>() -
                    gt.points[static_cast<std::size_t>(i)])
                       .norm();
        losses.train_mre_voxels = mre / double(n);
        return losses;
    }

    /// Reverse pass for a completed train_forward; accumulates gradients on
    /// every parameter group. Crop indices are constants: position gradients
    /// flow through the state recurrence and the attention-graph inputs only.
    void backward(Workspace& ws) {
        const std::int64_t n = landmarks();
        const std::int64_t w = cfg_.m + cfg_.d;
        const int tcount = cfg_.iterations;
        const T lc_scale = T(1.0 - cfg_.lambda);

        // seeds dL/dx_{t+1}
        std::vector<std::vector<Vec3<T>>> dxn(static_cast<std::size_t>(tcount),
                                              std::vector<Vec3<T>>(static_cast<std::size_t>(n)));
        for (int t = 0; t < tcount; ++t)
            for (std::int64_t i = 0; i < n; ++i) {
                const Vec3<T> diff = ws.iters[static_cast<std::size_t>(t)].x_next[static_cast<std::size_t>(i)] -
                                     ws.gt.points[static_cast<std::size_t>(i)].template cast<T>();
                dxn[static_cast<std::size_t>(t)][static_cast<std::size_t>(i)] =
                    lc_norm_grad(diff) * lc_scale;
            }
        std::vector<Vec3<T>> dx1(static_cast<std::size_t>(n));
        if (cfg_.lc_include_coarse)
            for (std::int64_t i = 0; i < n; ++i) {
                const Vec3<T> diff = ws.x1[static_cast<std::size_t>(i)] -
                                     ws.gt.points[static_cast<std::size_t>(i)].template cast<T>();
                dx1[static_cast<std::size_t>(i)] = lc_norm_grad(diff) * lc_scale;
            }

        Tensor<T> dm({cfg_.d, ws.ds_dims.z, ws.ds_dims.y, ws.ds_dims.x});
        Tensor<T> dh({landmarks(), ws.ds_dims.z, ws.ds_dims.y, ws.ds_dims.x});

        Tensor<T> dc_state({n, w});
        std::vector<Vec3<T>> ds_state(static_cast<std::size_t>(n));

        for (int t = tcount - 1; t >= 0; --t) {
            IterWork& it = ws.iters[static_cast<std::size_t>(t)];
            Tensor<T> dc_total = std::move(dc_state);
            std::vector<Vec3<T>> ds_total = std::move(ds_state);
            dc_state.resize({n, w});
            ds_state.assign(static_cast<std::size_t>(n), {});

            // x_{t+1} = W_gamma C_t + S_t
            for (std::int64_t i = 0; i < n; ++i) {
                const Vec3<T>& g = dxn[static_cast<std::size_t>(t)][static_cast<std::size_t>(i)];
                cell_.offset_backward(i, it.c.data() + i * w, g, dc_total.data() + i * w);
                ds_total[static_cast<std::size_t>(i)] += g;
            }

            std::vector<Vec3<T>> dcenters(static_cast<std::size_t>(n));
            Tensor<T> dn({n, w});
            if (t > 0) {
                IterWork& prev = ws.iters[static_cast<std::size_t>(t - 1)];
                for (std::int64_t i = 0; i < n; ++i) {
                    const auto& g = it.gates[static_cast<std::size_t>(i)];
                    const T* c_prev = prev.c.data() + i * w;
                    const T* n_row = it.n.data() + i * w;
                    const T* dct = dc_total.data() + i * w;
                    double df = 0, du = 0;
                    for (std::int64_t k = 0; k < w; ++k) {
                        df += double(dct[k]) * double(c_prev[k]);
                        du += double(dct[k]) * double(n_row[k]);
                    }
                    const Vec3<T>& dst = ds_total[static_cast<std::size_t>(i)];
                    const Vec3<T>& s_prev = prev.s[static_cast<std::size_t>(i)];
                    const Vec3<T>& c_t = it.centers[static_cast<std::size_t>(i)];
                    for (int a = 0; a < 3; ++a) {
                        df += double(dst[static_cast<std::size_t>(a)]) * double(s_prev[static_cast<std::size_t>(a)]);
                        du += double(dst[static_cast<std::size_t>(a)]) * double(c_t[static_cast<std::size_t>(a)]);
                    }
                    T* dcp = dc_state.data() + i * w;
                    T* dnr = dn.data() + i * w;
                    for (std::int64_t k = 0; k < w; ++k) {
                        dcp[k] += g.f * dct[k];
                        dnr[k] = g.u * dct[k];
                    }
                    ds_state[static_cast<std::size_t>(i)] += dst * g.f;
                    dcenters[static_cast<std::size_t>(i)] += dst * g.u;
                    T da = T(0), db = T(0);
                    RefineCell<T>::gates_backward(g, T(df), T(du), da, db);
                    cell_.score_backward(i, it.sc_prev[static_cast<std::size_t>(i)], c_prev, da, dcp);
                    cell_.score_backward(i, it.sc_new[static_cast<std::size_t>(i)], n_row, db, dnr);
                }
            } else {
                dn = std::move(dc_total);
                for (std::int64_t i = 0; i < n; ++i)
                    dcenters[static_cast<std::size_t>(i)] += ds_total[static_cast<std::size_t>(i)];
            }

            // split dN -> dE, dR
            Tensor<T> de({n, cfg_.m});
            Tensor<T> dr({n, cfg_.d});
            for (std::int64_t i = 0; i < n; ++i) {
                std::copy_n(dn.data() + i * w, cfg_.m, de.data() + i * cfg_.m);
                std::copy_n(dn.data() + i * w + cfg_.m, cfg_.d, dr.data() + i * cfg_.d);
            }

            Tensor<T> dpos_norm({n, 3});
            Tensor<T> dfeats({n, cfg_.d});
            gam_.backward(it.gam, dr, dpos_norm, dfeats);

            for (std::int64_t i = 0; i < n; ++i) {
                Vec3<T> dpds = nn::PointSample<T>::backward(
                    ws.out.features, it.samp[static_cast<std::size_t>(i)],
                    dfeats.data() + i * cfg_.d, dm);
                dpds[0] += dpos_norm[i * 3 + 0] / T(ws.ds_dims.x);
                dpds[1] += dpos_norm[i * 3 + 1] / T(ws.ds_dims.y);
                dpds[2] += dpos_norm[i * 3 + 2] / T(ws.ds_dims.z);
                // pos_ds = (center - (k-1)/2) / k
                dcenters[static_cast<std::size_t>(i)] += dpds * (T(1) / T(cfg_.k));
            }

            encoder_.backward(it.enc, de);

            if (t == 0)
                for (std::int64_t i = 0; i < n; ++i)
                    dx1[static_cast<std::size_t>(i)] += dcenters[static_cast<std::size_t>(i)];
            else
                for (std::int64_t i = 0; i < n; ++i)
                    dxn[static_cast<std::size_t>(t - 1)][static_cast<std::size_t>(i)] +=
                        dcenters[static_cast<std::size_t>(i)];
        }

        // x_1 = k * x1_ds + (k-1)/2
        const std::int64_t map_elems = ws.ds_dims.count();
        for (std::int64_t i = 0; i < landmarks(); ++i) {
            const Vec3<T> dx1_ds = dx1[static_cast<std::size_t>(i)] * T(cfg_.k);
            IntegralLandmark<T>::backward(ws.integ[static_cast<std::size_t>(i)], dx1_ds,
                                          dh.data() + i * map_elems, ws.ds_dims);
        }
        heatmap_loss_backward(ws.out.heatmaps, ws.targets, T(cfg_.lambda), dh);
        coarse_.backward(ws.coarse, dh, dm);
    }

    /// Two-stage inference on a raw volume (normalization and down-sampling
    /// included). Deterministic; batch-norm uses stored statistics.
    InferenceResult infer(const Volume<T>& raw) {
        const std::int64_t n = landmarks();
        Volume<T> vol = prepare(raw);
        Volume<T> ds = downsample(vol, cfg_.k);
        const Dims3 dd = ds.dims();
        if (cfg_.down_size)
            check(dd == *cfg_.down_size, "down-sampled dims " + to_string(dd) +
                                             " do not match configured " + to_string(*cfg_.down_size));

        typename CoarseNet<T>::Cache cache;
        typename CoarseNet<T>::Output out = coarse_.forward(ds.data, false, &cache);

        InferenceResult res;
        res.trace.coarse.resize(static_cast<std::size_t>(n));
        std::vector<Vec3<T>> x1(static_cast<std::size_t>(n));
        const std::int64_t map_elems = dd.count();
        for (std::int64_t i = 0; i < n; ++i) {
            const Vec3<T> x1_ds = IntegralLandmark<T>::forward(out.heatmaps.data() + i * map_elems,
                                                               dd, nullptr, nullptr);
            x1[static_cast<std::size_t>(i)] = ds_to_orig_t(x1_ds);
            res.trace.coarse[static_cast<std::size_t>(i)] =
                x1[static_cast<std::size_t>(i)].template cast<double>();
        }

        Workspace ws;
        ws.ds_dims = dd;
        ws.out = std::move(out);
        ws.x1 = x1;
        run_refinement(vol, ws, false, nullptr, &res.trace);

        res.coarse.names = names_;
        res.coarse.spacing_mm = raw.spacing_mm;
        for (std::int64_t i = 0; i < n; ++i)
            res.coarse.points.push_back(x1[static_cast<std::size_t>(i)].template cast<double>());
        res.refined.names = names_;
        res.refined.spacing_mm = raw.spacing_mm;
        const auto& fin = ws.iters.back().x_next;
        for (std::int64_t i = 0; i < n; ++i)
            res.refined.points.push_back(fin[static_cast<std::size_t>(i)].template cast<double>());
        return res;
    }

private:
    Vec3<T> ds_to_orig_t(const Vec3<T>& x_ds) const {
        const T half = T(cfg_.k - 1) / T(2);
        return {x_ds[0] * T(cfg_.k) + half, x_ds[1] * T(cfg_.k) + half, x_ds[2] * T(cfg_.k) + half};
    }

    double lc_norm_value(const Vec3<T>& diff) const {
        if (cfg_.lc_norm_mode() == LcNorm::l1)
            return std::abs(double(diff[0])) + std::abs(double(diff[1])) + std::abs(double(diff[2]));
        return diff.template cast<double>().norm();
    }

    Vec3<T> lc_norm_grad(const Vec3<T>& diff) const {
        if (cfg_.lc_norm_mode() == LcNorm::l1) {
            auto sgn = [](T v) { return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0)); };
            return {sgn(diff[0]), sgn(diff[1]), sgn(diff[2])};
        }
        const double nrm = diff.template cast<double>().norm();
        if (nrm == 0) return {};
        return diff * T(1.0 / nrm);
    }

    /// Runs the T-iteration refinement. In training mode all caches are kept
    /// and anchors may be jittered; in eval mode batch-norm uses stored
    /// statistics and a trace is populated when requested.
    void run_refinement(const Volume<T>& vol, Workspace& ws, bool training,
                        std::mt19937_64* noise_rng, RefineTrace* trace) {
        const std::int64_t n = landmarks();
        const std::int64_t w = cfg_.m + cfg_.d;
        ws.iters.assign(static_cast<std::size_t>(cfg_.iterations), {});
        for (int t = 0; t < cfg_.iterations; ++t) {
            IterWork& it = ws.iters[static_cast<std::size_t>(t)];
            it.patch_size = cfg_.patch_sizes[static_cast<std::size_t>(t)];
            const double radius = double(it.patch_size) / 2.0;

            it.centers.resize(static_cast<std::size_t>(n));
            for (std::int64_t i = 0; i < n; ++i) {
                const Vec3<T>& base = (t == 0)
                                          ? ws.x1[static_cast<std::size_t>(i)]
                                          : ws.iters[static_cast<std::size_t>(t - 1)]
                                                .x_next[static_cast<std::size_t>(i)];
                Vec3<double> c = base.template cast<double>();
                if (noise_rng) c = perturb_center(c, radius, *noise_rng);
                it.centers[static_cast<std::size_t>(i)] = c.template cast<T>();
            }

            it.patches.resize({n, 1, 32, 32, 32});
            for (std::int64_t i = 0; i < n; ++i) {
                Patch<T> p = crop_patch(vol, it.centers[static_cast<std::size_t>(i)].template cast<double>(),
                                        it.patch_size);
                Patch<T> rp = resize_patch(p, 32);
                std::copy_n(rp.data.data(), 32 * 32 * 32, it.patches.data() + i * 32 * 32 * 32);
            }

            it.embed = encoder_.forward(it.patches, training, &it.enc);

            it.pos_ds.resize({n, 3});
            it.pos_norm.resize({n, 3});
            it.samp.assign(static_cast<std::size_t>(n), {});
            it.feats.resize({n, cfg_.d});
            for (std::int64_t i = 0; i < n; ++i) {
                const Vec3<double> pd = coords_orig_to_ds(
                    it.centers[static_cast<std::size_t>(i)].template cast<double>(), cfg_.k);
                const Vec3<T> pdt = pd.template cast<T>();
                for (int a = 0; a < 3; ++a) it.pos_ds[i * 3 + a] = pdt[static_cast<std::size_t>(a)];
                nn::PointSample<T>::sample(ws.out.features, pdt, it.feats.data() + i * cfg_.d,
                                           &it.samp[static_cast<std::size_t>(i)]);
                it.pos_norm[i * 3 + 0] = pdt[0] / T(ws.ds_dims.x);
                it.pos_norm[i * 3 + 1] = pdt[1] / T(ws.ds_dims.y);
                it.pos_norm[i * 3 + 2] = pdt[2] / T(ws.ds_dims.z);
            }

            it.r = gam_.forward(it.pos_norm, it.feats, cfg_.gam_norm_mode(), &it.gam);

            it.n.resize({n, w});
            for (std::int64_t i = 0; i < n; ++i) {
                std::copy_n(it.embed.data() + i * cfg_.m, cfg_.m, it.n.data() + i * w);
                std::copy_n(it.r.data() + i * cfg_.d, cfg_.d, it.n.data() + i * w + cfg_.m);
            }

            it.c.resize({n, w});
            it.s.resize(static_cast<std::size_t>(n));
            it.x_next.resize(static_cast<std::size_t>(n));
            if (t == 0) {
                for (std::int64_t i = 0; i < n; ++i) {
                    std::copy_n(it.n.data() + i * w, w, it.c.data() + i * w);
                    it.s[static_cast<std::size_t>(i)] = it.centers[static_cast<std::size_t>(i)];
                }
            } else {
                IterWork& prev = ws.iters[static_cast<std::size_t>(t - 1)];
                it.sc_prev.assign(static_cast<std::size_t>(n), {});
                it.sc_new.assign(static_cast<std::size_t>(n), {});
                it.gates.assign(static_cast<std::size_t>(n), {});
                for (std::int64_t i = 0; i < n; ++i) {
                    const T a = cell_.score(i, prev.c.data() + i * w,
                                            &it.sc_prev[static_cast<std::size_t>(i)]);
                    const T b = cell_.score(i, it.n.data() + i * w,
                                            &it.sc_new[static_cast<std::size_t>(i)]);
                    const GateValues<T> g = RefineCell<T>::gates_from_scores(a, b);
                    it.gates[static_cast<std::size_t>(i)] = g;
                    const T* cp = prev.c.data() + i * w;
                    const T* nr = it.n.data() + i * w;
                    T* ct = it.c.data() + i * w;
                    // lerp arrangement of f*prev + u*new: identical gradients,
                    // and exact when the new input equals the carried state
                    for (std::int64_t k = 0; k < w; ++k) ct[k] = cp[k] + g.u * (nr[k] - cp[k]);
                    const Vec3<T>& sp = prev.s[static_cast<std::size_t>(i)];
                    const Vec3<T>& ci = it.centers[static_cast<std::size_t>(i)];
                    it.s[static_cast<std::size_t>(i)] = sp + (ci - sp) * g.u;
                }
            }
            for (std::int64_t i = 0; i < n; ++i)
                it.x_next[static_cast<std::size_t>(i)] =
                    cell_.offset(i, it.c.data() + i * w) + it.s[static_cast<std::size_t>(i)];

            if (trace) {
                IterationTrace tr;
                tr.patch_size = it.patch_size;
                for (std::int64_t i = 0; i < n; ++i) {
                    tr.centers.push_back(it.centers[static_cast<std::size_t>(i)].template cast<double>());
                    tr.spatial_state.push_back(
                        it.s[static_cast<std::size_t>(i)].template cast<double>());
                    tr.predictions.push_back(
                        it.x_next[static_cast<std::size_t>(i)].template cast<double>());
                }
                if (t > 0)
                    for (std::int64_t i = 0; i < n; ++i) {
                        tr.f.push_back(double(it.gates[static_cast<std::size_t>(i)].f));
                        tr.u.push_back(double(it.gates[static_cast<std::size_t>(i)].u));
                    }
                trace->iterations.push_back(std::move(tr));
            }
        }
    }

    TrainConfig cfg_;
    std::vector<std::string> names_;
    CoarseNet<T> coarse_;
    PatchEncoder<T> encoder_;
    GraphAttention<T> gam_;
    RefineCell<T> cell_;
};

}  // namespace salm
