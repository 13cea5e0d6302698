#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "salm/augment.hpp"
#include "salm/checkpoint.hpp"
#include "salm/phantom.hpp"
#include "salm/training.hpp"
#include "testutil.hpp"

using namespace salm;

TEST(PerturbCenter, SigmaFollowsRadiusRule) {
    auto rng = derive_rng(123, {8});
    const double r = 32.0;  // patch 64^3 -> sigma = 32/3
    const int draws = 20000;
    double mean = 0, var = 0;
    std::vector<double> dx(draws);
    for (int i = 0; i < draws; ++i) {
        const auto p = perturb_center({100, 100, 100}, r, rng);
        dx[static_cast<std::size_t>(i)] = p[0] - 100.0;
        mean += dx[static_cast<std::size_t>(i)];
    }
    mean /= draws;
    for (int i = 0; i < draws; ++i)
        var += (dx[static_cast<std::size_t>(i)] - mean) * (dx[static_cast<std::size_t>(i)] - mean);
    var /= draws;
    EXPECT_NEAR(mean, 0.0, 0.3);
    EXPECT_NEAR(std::sqrt(var), r / 3.0, 0.15);  // 10.667 +- sampling noise
    EXPECT_THROW(perturb_center({0, 0, 0}, 0.0, rng), validation_error);
}

TEST(PerturbCenter, ThreeSigmaContainmentPerAxis) {
    auto rng = derive_rng(9, {8});
    const double r = 16.0;
    int inside_axis = 0, total_axis = 0;
    for (int i = 0; i < 100000; ++i) {
        const auto p = perturb_center({0, 0, 0}, r, rng);
        for (int a = 0; a < 3; ++a, ++total_axis)
            if (std::abs(p[a]) <= r) ++inside_axis;
    }
    EXPECT_NEAR(double(inside_axis) / total_axis, 0.9973, 0.001);
}

TEST(RefinementLoss, ClosedFormCases) {
    RefineTrace trace;
    LandmarkSet gt;
    gt.names = {"a"};
    gt.points = {{10, 10, 10}};
    trace.coarse = {{12, 10, 10}};
    IterationTrace it;
    it.predictions = {{13, 14, 10}};  // x - g = (3,4,0)
    trace.iterations.push_back(it);
    EXPECT_DOUBLE_EQ(refinement_loss(trace, gt, LcNorm::l1, false), 7.0);
    EXPECT_DOUBLE_EQ(refinement_loss(trace, gt, LcNorm::l2, false), 5.0);
    // additivity over iterations
    trace.iterations.push_back(it);
    EXPECT_DOUBLE_EQ(refinement_loss(trace, gt, LcNorm::l1, false), 14.0);
    // optional coarse term: |x1 - g| = 2
    EXPECT_DOUBLE_EQ(refinement_loss(trace, gt, LcNorm::l1, true), 16.0);
    // exact predictions give zero
    RefineTrace perfect;
    perfect.coarse = {{10, 10, 10}};
    IterationTrace pit;
    pit.predictions = {{10, 10, 10}};
    perfect.iterations.push_back(pit);
    EXPECT_DOUBLE_EQ(refinement_loss(perfect, gt, LcNorm::l1, true), 0.0);
}

TEST(TotalLoss, LinearComposition) {
    EXPECT_DOUBLE_EQ(total_loss(2.0, 4.0, 0.5), 3.0);
    EXPECT_DOUBLE_EQ(total_loss(2.0, 4.0, 1.0), 2.0);
    EXPECT_DOUBLE_EQ(total_loss(2.0, 4.0, 0.0), 4.0);
    EXPECT_THROW(total_loss(1.0, 1.0, 1.5), validation_error);
    EXPECT_DOUBLE_EQ(TrainConfig{}.lambda, 0.5);
}

TEST(Adam, DescendsAQuadraticAndClipsGlobally) {
    Tensor<double> w({4});
    Tensor<double> g({4});
    w.fill(5.0);
    std::vector<ParamRef<double>> params{{"w", &w, &g}};
    nn::Adam<double> opt(params, 0.05);
    for (int it = 0; it < 400; ++it) {
        for (std::int64_t i = 0; i < 4; ++i) g[i] = 2.0 * w[i];
        opt.step(params, 0.0);
    }
    for (std::int64_t i = 0; i < 4; ++i) EXPECT_NEAR(w[i], 0.0, 1e-2);

    g.fill(100.0);
    EXPECT_NEAR(opt.grad_norm(params), 200.0, 1e-9);
}

TEST(Checkpoint, RoundTripIsBitwiseIdenticalOnInference) {
    test::TempDir dir("ckpt");
    TrainConfig cfg = test::tiny_config(2);
    auto [vol, gt] = generate_phantom<double>(test::tiny_phantom_spec(48, 2), 0);
    Model<double> model(cfg, gt.names);
    model.init(11);
    // make buffers non-trivial
    typename Model<double>::Workspace ws;
    auto noise = derive_rng(1, {1});
    (void)model.train_forward(model.prepare(vol), gt, &noise, ws);

    Trainer<double> trainer(model, cfg);
    ckpt::save(dir.path() / "m.salm", model, &trainer.optimizer(), 3);

    Model<double> twin(cfg, gt.names);
    nn::Adam<double> opt2(twin.collect_params(), cfg.learning_rate);
    const auto meta = ckpt::load(dir.path() / "m.salm", twin, &opt2);
    EXPECT_EQ(meta.epoch, 3);
    EXPECT_EQ(meta.landmark_names, gt.names);

    const auto a = model.infer(vol);
    const auto b = twin.infer(vol);
    for (std::size_t i = 0; i < a.refined.size(); ++i)
        for (int axis = 0; axis < 3; ++axis)
            EXPECT_EQ(a.refined.points[i][axis], b.refined.points[i][axis]);
}

TEST(Checkpoint, RejectsForeignFilesAndWrongModels) {
    test::TempDir dir("ckpt2");
    {
        std::ofstream out(dir.path() / "junk.salm", std::ios::binary);
        out << "not a checkpoint at all";
    }
    EXPECT_THROW(ckpt::read_meta(dir.path() / "junk.salm"), validation_error);

    TrainConfig cfg = test::tiny_config(2);
    auto [vol, gt] = generate_phantom<double>(test::tiny_phantom_spec(48, 2), 0);
    Model<double> model(cfg, gt.names);
    model.init(1);
    ckpt::save<double>(dir.path() / "m.salm", model, nullptr, 0);
    Model<double> other(cfg, {"left", "right"});
    EXPECT_THROW(ckpt::load(dir.path() / "m.salm", other), validation_error);
}

namespace {

std::vector<std::pair<Volume<double>, LandmarkSet>> tiny_dataset(int count) {
    std::vector<std::pair<Volume<double>, LandmarkSet>> out;
    for (int i = 0; i < count; ++i)
        out.push_back(generate_phantom<double>(test::tiny_phantom_spec(48, 2), i));
    return out;
}

}  // namespace

TEST(Trainer, FixedSeedGivesIdenticalLossLogs) {
    TrainConfig cfg = test::tiny_config(2);
    cfg.epochs = 2;
    cfg.seed = 99;
    const auto data = tiny_dataset(2);
    test::TempDir d1("run1"), d2("run2");
    auto r1 = train_loop<double>(cfg, data, d1.path());
    auto r2 = train_loop<double>(cfg, data, d2.path());
    ASSERT_EQ(r1.logs.size(), r2.logs.size());
    for (std::size_t i = 0; i < r1.logs.size(); ++i) {
        EXPECT_EQ(r1.logs[i].l_h, r2.logs[i].l_h);
        EXPECT_EQ(r1.logs[i].l_c, r2.logs[i].l_c);
        EXPECT_EQ(r1.logs[i].l_o, r2.logs[i].l_o);
        EXPECT_EQ(r1.logs[i].train_mre_voxels, r2.logs[i].train_mre_voxels);
    }
    // loss log file format
    std::ifstream log(d1.path() / "loss.csv");
    std::string header;
    std::getline(log, header);
    EXPECT_EQ(header, "epoch,L_h,L_c,L_o,train_MRE_voxels");
}

TEST(Trainer, FirstEpochDescendsFromInitialization) {
    TrainConfig cfg = test::tiny_config(2);
    cfg.epochs = 1;
    cfg.seed = 7;
    const auto data = tiny_dataset(2);
    test::TempDir dir("descent");
    const auto result = train_loop<double>(cfg, data, dir.path());
    ASSERT_EQ(result.logs.size(), 2u);  // epoch 0 (init) + epoch 1
    EXPECT_LT(result.logs[1].l_o, result.logs[0].l_o);
}

TEST(Trainer, AbortsOnNonFiniteLoss) {
    TrainConfig cfg = test::tiny_config(2);
    cfg.epochs = 1;
    const auto data = tiny_dataset(1);
    Model<double> model(cfg, data[0].second.names);
    model.init(0);
    model.cell().offset_bias()[0] = std::nan("");
    Trainer<double> trainer(model, cfg);
    test::TempDir dir("nan");
    EXPECT_THROW(trainer.run(data, nullptr, dir.path(), true), std::runtime_error);
}
