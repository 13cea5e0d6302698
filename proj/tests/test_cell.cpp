#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "salm/refine_cell.hpp"
#include "salm/rng.hpp"
#include "testutil.hpp"

using namespace salm;

TEST(AttentionScore, ZeroVectorAndZeroTauGiveHalf) {
    RefineCell<double> cell(2, 10, 6);
    auto rng = derive_rng(41, {4});
    cell.init(rng);
    std::vector<double> x(10, 0.0);
    // zero input with zero biases: tanh(0) = 0 -> sigmoid(0) = 0.5
    EXPECT_DOUBLE_EQ(cell.score(0, x.data(), nullptr), 0.5);
    // zero attention vector: score 0.5 for any input
    cell.attention_vectors().zero();
    std::uniform_real_distribution<double> dist(-3.0, 3.0);
    for (auto& v : x) v = dist(rng);
    EXPECT_DOUBLE_EQ(cell.score(1, x.data(), nullptr), 0.5);
}

TEST(AttentionScore, StrictlyInsideUnitInterval) {
    RefineCell<double> cell(1, 8, 4);
    auto rng = derive_rng(42, {4});
    cell.init(rng);
    std::uniform_real_distribution<double> dist(-50.0, 50.0);
    for (int t = 0; t < 200; ++t) {
        std::vector<double> x(8);
        for (auto& v : x) v = dist(rng);
        const double s = cell.score(0, x.data(), nullptr);
        EXPECT_GT(s, 0.0);
        EXPECT_LT(s, 1.0);
    }
}

TEST(Gates, ClosedFormsAndNormalization) {
    const auto eq = RefineCell<double>::gates_from_scores(0.37, 0.37);
    EXPECT_DOUBLE_EQ(eq.f, 0.5);
    EXPECT_DOUBLE_EQ(eq.u, 0.5);

    // a - b = ln 3  ->  f = 3/(3+1) = 0.75
    const auto g = RefineCell<double>::gates_from_scores(std::log(3.0), 0.0);
    EXPECT_NEAR(g.f, 0.75, 1e-12);
    EXPECT_NEAR(g.u, 0.25, 1e-12);

    std::mt19937_64 rng(4711);
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    for (int t = 0; t < 1000; ++t) {
        const auto r = RefineCell<double>::gates_from_scores(dist(rng), dist(rng));
        EXPECT_GT(r.f, 0.0);
        EXPECT_LT(r.f, 1.0);
        EXPECT_GT(r.u, 0.0);
        EXPECT_LT(r.u, 1.0);
        EXPECT_NEAR(double(r.f) + double(r.u), 1.0, 1e-15);
    }
}

TEST(InitState, ConcatenationAndSpatialAnchor) {
    std::vector<double> embedding(12);
    std::iota(embedding.begin(), embedding.end(), 1.0);
    const Vec3<double> x1{10.5, -3.0, 7.25};
    const auto st = init_state<double>(embedding.data(), 12, x1);
    ASSERT_EQ(st.c.size(), 12);
    for (int i = 0; i < 12; ++i) EXPECT_EQ(st.c[i], embedding[static_cast<std::size_t>(i)]);
    EXPECT_EQ(st.s, x1);
    EXPECT_EQ(st.x, x1);
    EXPECT_EQ(st.t, 1);
}

TEST(Cell, ZeroOffsetHeadsFixTheTrajectory) {
    const std::int64_t w = 14;
    RefineCell<double> cell(1, w, 6);
    auto rng = derive_rng(43, {4});
    cell.init(rng);  // offset heads start at zero
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    const Vec3<double> x1{20, 30, 40};
    std::vector<double> c_prev(w), n_new(w);
    for (auto& v : c_prev) v = dist(rng);
    Vec3<double> s = x1, x = x1;
    for (int t = 2; t <= 5; ++t) {
        for (auto& v : n_new) v = dist(rng);
        const double a = cell.score(0, c_prev.data(), nullptr);
        const double b = cell.score(0, n_new.data(), nullptr);
        const auto g = RefineCell<double>::gates_from_scores(a, b);
        for (std::int64_t i = 0; i < w; ++i) c_prev[static_cast<std::size_t>(i)] =
            g.f * c_prev[static_cast<std::size_t>(i)] + g.u * n_new[static_cast<std::size_t>(i)];
        s = s * g.f + x * g.u;
        x = cell.offset(0, c_prev.data()) + s;
        EXPECT_EQ(x, x1);  // exactly, for any number of iterations
    }
}

TEST(Cell, SpatialStateMatchesHandUnrolledOracle) {
    // S_3 == f3*(f2*x1 + u2*x2) + u3*x3 with the recorded gates
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        const auto g2 = RefineCell<double>::gates_from_scores(dist(rng), dist(rng));
        const auto g3 = RefineCell<double>::gates_from_scores(dist(rng), dist(rng));
        const Vec3<double> x1{dist(rng) * 50, dist(rng) * 50, dist(rng) * 50};
        const Vec3<double> x2{dist(rng) * 50, dist(rng) * 50, dist(rng) * 50};
        const Vec3<double> x3{dist(rng) * 50, dist(rng) * 50, dist(rng) * 50};
        Vec3<double> s = x1;
        s = s * g2.f + x2 * g2.u;
        s = s * g3.f + x3 * g3.u;
        const Vec3<double> oracle = (x1 * g2.f + x2 * g2.u) * g3.f + x3 * g3.u;
        for (int a = 0; a < 3; ++a) EXPECT_NEAR(s[a], oracle[a], 1e-9);
        // unrolled weights are a convex combination
        const double w1 = g3.f * g2.f, w2 = g3.f * g2.u, w3 = g3.u;
        EXPECT_NEAR(w1 + w2 + w3, 1.0, 1e-12);
        EXPECT_GT(w1, 0.0);
        EXPECT_GT(w2, 0.0);
        EXPECT_GT(w3, 0.0);
    }
}

TEST(Cell, ScoreAndGateGradientsMatchFiniteDifferences) {
    const std::int64_t w = 10, hidden = 6;
    RefineCell<double> cell(2, w, hidden);
    auto rng = derive_rng(44, {4});
    cell.init(rng);
    // give the offset heads nonzero weights so their gradients are exercised
    std::normal_distribution<double> gauss(0.0, 0.3);
    for (std::int64_t i = 0; i < cell.offset_weights().size(); ++i)
        cell.offset_weights()[i] = gauss(rng);

    std::vector<double> c_prev(w), n_new(w);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    for (auto& v : c_prev) v = dist(rng);
    for (auto& v : n_new) v = dist(rng);
    const Vec3<double> s_prev{3, 4, 5}, center{6, 7, 8};
    const Vec3<double> probe{0.3, -1.1, 0.7};

    // loss: probe . x_next after one gated step for landmark 1
    auto eval_loss = [&]() {
        const double a = cell.score(1, c_prev.data(), nullptr);
        const double b = cell.score(1, n_new.data(), nullptr);
        const auto g = RefineCell<double>::gates_from_scores(a, b);
        std::vector<double> c(w);
        for (std::int64_t i = 0; i < w; ++i)
            c[static_cast<std::size_t>(i)] = g.f * c_prev[static_cast<std::size_t>(i)] +
                                             g.u * n_new[static_cast<std::size_t>(i)];
        const Vec3<double> s = s_prev * g.f + center * g.u;
        const Vec3<double> x = cell.offset(1, c.data()) + s;
        return probe[0] * x[0] + probe[1] * x[1] + probe[2] * x[2];
    };

    // analytic: replicate the step with caches, then run the backward chain
    typename RefineCell<double>::ScoreCache sc_prev, sc_new;
    const double a = cell.score(1, c_prev.data(), &sc_prev);
    const double b = cell.score(1, n_new.data(), &sc_new);
    const auto g = RefineCell<double>::gates_from_scores(a, b);
    std::vector<double> c(w);
    for (std::int64_t i = 0; i < w; ++i)
        c[static_cast<std::size_t>(i)] =
            g.f * c_prev[static_cast<std::size_t>(i)] + g.u * n_new[static_cast<std::size_t>(i)];

    cell.zero_grad();
    std::vector<double> dc(w, 0.0);
    cell.offset_backward(1, c.data(), probe, dc.data());
    const Vec3<double> ds = probe;
    double df = 0, du = 0;
    for (std::int64_t i = 0; i < w; ++i) {
        df += dc[static_cast<std::size_t>(i)] * c_prev[static_cast<std::size_t>(i)];
        du += dc[static_cast<std::size_t>(i)] * n_new[static_cast<std::size_t>(i)];
    }
    for (int axis = 0; axis < 3; ++axis) {
        df += ds[axis] * s_prev[axis];
        du += ds[axis] * center[axis];
    }
    double da = 0, db = 0;
    RefineCell<double>::gates_backward(g, df, du, da, db);
    std::vector<double> dcp(w, 0.0), dnn(w, 0.0);
    cell.score_backward(1, sc_prev, c_prev.data(), da, dcp.data());
    cell.score_backward(1, sc_new, n_new.data(), db, dnn.data());

    std::vector<ParamRef<double>> params;
    cell.collect_params(params);
    const auto analytic = test::snapshot_grads(params);
    auto sample_rng = derive_rng(19, {6});
    const auto stats = test::fd_check_params(params, analytic, eval_loss, 0.2, 8, sample_rng);
    EXPECT_GT(stats.checked, 0);
    EXPECT_EQ(stats.failed, 0) << stats.first_failure;
}
