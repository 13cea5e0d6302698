#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <random>

#include "salm/phantom.hpp"
#include "salm/pipeline.hpp"
#include "salm/training.hpp"
#include "testutil.hpp"

using namespace salm;

namespace {

struct PipelineFixture {
    TrainConfig cfg;
    Model<double> model;
    Volume<double> vol;
    LandmarkSet gt;

    explicit PipelineFixture(int iterations = 2, std::int64_t edge = 48, int landmarks = 2,
                             std::uint64_t seed = 7)
        : cfg(test::tiny_config(iterations)),
          model(make_model(cfg, edge, landmarks, seed)),
          vol(), gt() {
        auto [v, lm] = generate_phantom<double>(test::tiny_phantom_spec(edge, landmarks), 0);
        vol = std::move(v);
        gt = std::move(lm);
    }

    static Model<double> make_model(TrainConfig& cfg, std::int64_t edge, int landmarks,
                                    std::uint64_t seed) {
        auto [v, lm] = generate_phantom<double>(test::tiny_phantom_spec(edge, landmarks), 0);
        Model<double> m(cfg, lm.names);
        m.init(seed);
        return m;
    }
};

}  // namespace

TEST(Pipeline, ZeroOffsetHeadsReturnCoarseLandmarksExactly) {
    TrainConfig cfg = test::tiny_config(3);
    auto [vol, gt] = generate_phantom<double>(test::tiny_phantom_spec(64, 4), 1);
    Model<double> model(cfg, gt.names);
    model.init(3);
    model.cell().offset_weights().zero();
    model.cell().offset_bias().zero();
    const auto res = model.infer(vol);
    ASSERT_EQ(res.refined.size(), 4u);
    for (std::size_t i = 0; i < 4; ++i)
        for (int a = 0; a < 3; ++a)
            EXPECT_EQ(res.refined.points[i][a], res.coarse.points[i][a]);
}

TEST(Pipeline, TraceContract) {
    PipelineFixture fx(2);
    const auto res = fx.model.infer(fx.vol);
    ASSERT_EQ(res.trace.iterations.size(), 2u);
    EXPECT_EQ(res.trace.iterations[0].patch_size, 64);
    EXPECT_EQ(res.trace.iterations[1].patch_size, 32);
    EXPECT_TRUE(res.trace.iterations[0].f.empty());  // no gating at t = 1
    ASSERT_EQ(res.trace.iterations[1].f.size(), 2u);
    // final prediction is the last iteration's output
    for (std::size_t i = 0; i < 2; ++i)
        for (int a = 0; a < 3; ++a)
            EXPECT_EQ(res.refined.points[i][a], res.trace.iterations[1].predictions[i][a]);
    // eval-mode anchors are the previous predictions
    for (std::size_t i = 0; i < 2; ++i)
        for (int a = 0; a < 3; ++a) {
            EXPECT_EQ(res.trace.iterations[0].centers[i][a], res.trace.coarse[i][a]);
            EXPECT_EQ(res.trace.iterations[1].centers[i][a],
                      res.trace.iterations[0].predictions[i][a]);
        }
}

TEST(Pipeline, InferenceIsDeterministic) {
    PipelineFixture fx(2);
    const auto a = fx.model.infer(fx.vol);
    const auto b = fx.model.infer(fx.vol);
    for (std::size_t i = 0; i < a.refined.size(); ++i)
        for (int axis = 0; axis < 3; ++axis)
            EXPECT_EQ(a.refined.points[i][axis], b.refined.points[i][axis]);
}

TEST(Pipeline, SpatialStateIsConvexCombinationOfAnchors) {
    PipelineFixture fx(3);
    // nonzero offset heads so the trajectory actually moves
    auto rng = derive_rng(5, {77});
    std::normal_distribution<double> gauss(0.0, 0.05);
    for (std::int64_t i = 0; i < fx.model.cell().offset_weights().size(); ++i)
        fx.model.cell().offset_weights()[i] = gauss(rng);
    const auto res = fx.model.infer(fx.vol);
    const auto& tr = res.trace;
    const std::size_t n = res.refined.size();
    for (std::size_t i = 0; i < n; ++i) {
        // weights over anchors {c_1..c_t} unrolled from the recorded gates
        std::vector<double> w{1.0};
        for (std::size_t t = 1; t < tr.iterations.size(); ++t) {
            const double f = tr.iterations[t].f[i], u = tr.iterations[t].u[i];
            for (auto& wi : w) wi *= f;
            w.push_back(u);
        }
        double sum = 0;
        Vec3<double> s{};
        for (std::size_t t = 0; t < w.size(); ++t) {
            EXPECT_GE(w[t], 0.0);
            sum += w[t];
            s += tr.iterations[t].centers[i] * w[t];
        }
        EXPECT_NEAR(sum, 1.0, 1e-6);
        for (int a = 0; a < 3; ++a)
            EXPECT_NEAR(s[a], tr.iterations.back().spatial_state[i][a], 1e-6);
    }
}

TEST(Pipeline, RefinementLossMatchesTraceRecomputation) {
    PipelineFixture fx(2);
    auto res = fx.model.infer(fx.vol);
    const double lc = refinement_loss(res.trace, fx.gt, LcNorm::l1, false);
    double manual = 0;
    for (const auto& it : res.trace.iterations)
        for (std::size_t i = 0; i < fx.gt.size(); ++i) {
            const Vec3<double> d = it.predictions[i] - fx.gt.points[i];
            manual += std::abs(d[0]) + std::abs(d[1]) + std::abs(d[2]);
        }
    EXPECT_NEAR(lc, manual, 1e-9);
    EXPECT_GT(lc, 0.0);
}

TEST(Pipeline, TrainForwardRejectsMismatchedNames) {
    PipelineFixture fx(2);
    LandmarkSet wrong = fx.gt;
    wrong.names[0] = "somewhere_else";
    typename Model<double>::Workspace ws;
    EXPECT_THROW(fx.model.train_forward(fx.model.prepare(fx.vol), wrong, nullptr, ws),
                 validation_error);
}

TEST(Pipeline, LossesComposePerTotalLossRule) {
    PipelineFixture fx(2);
    typename Model<double>::Workspace ws;
    const auto losses = fx.model.train_forward(fx.model.prepare(fx.vol), fx.gt, nullptr, ws);
    EXPECT_NEAR(losses.l_o, total_loss(losses.l_h, losses.l_c, fx.cfg.lambda), 1e-9);
    EXPECT_GT(losses.l_h, 0.0);
    EXPECT_GT(losses.l_c, 0.0);
}

TEST(Pipeline, EndToEndGradientsMatchFiniteDifferences) {
    // 48^3 phantom, n = 2, T = 2, reduced widths; checks every group
    // including the coarse net through the integral operation and M
    PipelineFixture fx(2);
    Volume<double> prepared = fx.model.prepare(fx.vol);

    // nonzero offset heads so gate and offset gradients are generic
    auto wrng = derive_rng(5, {78});
    std::normal_distribution<double> gauss(0.0, 0.05);
    for (std::int64_t i = 0; i < fx.model.cell().offset_weights().size(); ++i)
        fx.model.cell().offset_weights()[i] = gauss(wrng);

    typename Model<double>::Workspace ws;
    fx.model.zero_grad();
    (void)fx.model.train_forward(prepared, fx.gt, nullptr, ws);
    fx.model.backward(ws);

    auto params = fx.model.collect_params();
    const auto analytic = test::snapshot_grads(params);
    auto eval_loss = [&]() {
        typename Model<double>::Workspace w2;
        return fx.model.train_forward(prepared, fx.gt, nullptr, w2).l_o;
    };
    // sign pattern of |H - T| frozen at the base point for kink-adjacent voxels
    Tensor<double> sign0(ws.out.heatmaps.shape());
    for (std::int64_t i = 0; i < sign0.size(); ++i) {
        const double diff = ws.out.heatmaps[i] - ws.targets[i];
        sign0[i] = diff > 0 ? 1.0 : (diff < 0 ? -1.0 : 0.0);
    }
    const double lambda = fx.cfg.lambda;
    std::function<double()> frozen = [&]() {
        typename Model<double>::Workspace w2;
        const auto losses = fx.model.train_forward(prepared, fx.gt, nullptr, w2);
        double lh = 0;
        for (std::int64_t i = 0; i < sign0.size(); ++i)
            lh += sign0[i] * (w2.out.heatmaps[i] - ws.targets[i]);
        return lambda * lh + (1.0 - lambda) * losses.l_c;
    };
    auto sample_rng = derive_rng(23, {11});
    const auto stats = test::fd_check_params(params, analytic, eval_loss, 0.002, 2, sample_rng,
                                             1e-4, 1e-3, 1e-7, frozen);
    EXPECT_GT(stats.checked, 0);
    EXPECT_EQ(stats.failed, 0) << stats.first_failure;
}
