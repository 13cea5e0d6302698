#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "salm/evaluation.hpp"
#include "testutil.hpp"

using namespace salm;

namespace {

LandmarkSet make_set(std::vector<Vec3<double>> pts) {
    LandmarkSet s;
    for (std::size_t i = 0; i < pts.size(); ++i) s.names.push_back("lm" + std::to_string(i));
    s.points = std::move(pts);
    return s;
}

}  // namespace

TEST(RadialErrors, ClosedForms) {
    const auto gt = make_set({{0, 0, 0}, {5, 5, 5}});
    auto pred = gt;
    auto e = radial_errors(pred, gt, {0.3, 0.3, 0.3});
    EXPECT_DOUBLE_EQ(e[0], 0.0);
    EXPECT_DOUBLE_EQ(e[1], 0.0);

    pred.points[0] = {1, 0, 0};
    e = radial_errors(pred, gt, {0.3, 0.3, 0.3});
    EXPECT_NEAR(e[0], 0.3, 1e-12);

    pred.points[1] = {6, 6, 6};  // (1,1,1) voxels at (1,1,3) mm
    e = radial_errors(pred, gt, {1, 1, 3});
    EXPECT_NEAR(e[1], std::sqrt(11.0), 1e-12);

    auto other = gt;
    other.names[0] = "different";
    EXPECT_THROW(radial_errors(other, gt, {1, 1, 1}), validation_error);
}

TEST(Summarize, TwoPointStatistics) {
    std::map<std::string, std::vector<double>> errors{{"a", {1.0, 3.0}}};
    const auto rep = summarize(errors, {2.0, 2.5, 3.0, 4.0, 8.0});
    ASSERT_EQ(rep.rows.size(), 1u);
    EXPECT_DOUBLE_EQ(rep.rows[0].mre_mm, 2.0);
    EXPECT_DOUBLE_EQ(rep.rows[0].sd_mm, 1.0);  // population SD
    EXPECT_DOUBLE_EQ(rep.rows[0].sdr_pct[0], 50.0);
    EXPECT_DOUBLE_EQ(rep.rows[0].sdr_pct[2], 100.0);  // error == radius counts
    EXPECT_EQ(rep.sample_count, 2u);
}

TEST(Summarize, DegenerateAllZero) {
    std::map<std::string, std::vector<double>> errors{{"a", {0.0, 0.0, 0.0}}};
    const auto rep = summarize(errors, {2.0, 2.5, 3.0, 4.0, 8.0});
    EXPECT_DOUBLE_EQ(rep.aggregate.mre_mm, 0.0);
    EXPECT_DOUBLE_EQ(rep.aggregate.sd_mm, 0.0);
    for (double v : rep.aggregate.sdr_pct) EXPECT_DOUBLE_EQ(v, 100.0);
}

TEST(Summarize, AggregatePoolsAllInstances) {
    // two landmarks with different counts: pooled mean != macro average
    std::map<std::string, std::vector<double>> errors{{"a", {1.0}}, {"b", {2.0, 2.0, 2.0}}};
    const auto rep = summarize(errors, {2.0});
    EXPECT_DOUBLE_EQ(rep.aggregate.mre_mm, (1.0 + 6.0) / 4.0);
    const double macro = (1.0 + 2.0) / 2.0;
    EXPECT_NE(rep.aggregate.mre_mm, macro);
    EXPECT_EQ(rep.aggregate.count, 4u);
}

TEST(Summarize, SdrMonotoneInRadiusOnFuzzedInputs) {
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> dist(0.0, 10.0);
    for (int trial = 0; trial < 30; ++trial) {
        std::map<std::string, std::vector<double>> errors;
        for (int l = 0; l < 3; ++l) {
            auto& v = errors["lm" + std::to_string(l)];
            const int n = 1 + int(dist(rng));
            for (int i = 0; i < n; ++i) v.push_back(dist(rng));
        }
        const auto rep = summarize(errors, {1.0, 2.0, 3.0, 5.0, 8.0, 1e9});
        for (const auto& row : rep.rows) {
            for (std::size_t r = 1; r < row.sdr_pct.size(); ++r)
                EXPECT_GE(row.sdr_pct[r], row.sdr_pct[r - 1]);
            EXPECT_DOUBLE_EQ(row.sdr_pct.back(), 100.0);  // infinity proxy
        }
    }
}

TEST(Summarize, RejectsEmpty) {
    EXPECT_THROW(summarize({}, {2.0}), validation_error);
    std::map<std::string, std::vector<double>> errors{{"a", {}}};
    EXPECT_THROW(summarize(errors, {2.0}), validation_error);
}

TEST(ReportFormat, MatchesBenchmarkRowLayout) {
    MetricsRow row;
    row.name = "Average";
    row.mre_mm = 1.64;
    row.sd_mm = 1.13;
    row.sdr_pct = {74.28, 82.15, 87.24, 93.78, 100.0};
    EXPECT_EQ(format_metrics_row(row), "Average 1.64(1.13) | 74.28 | 82.15 | 87.24 | 93.78 | 100");

    MetricsRow r2;
    r2.name = "odd";
    r2.mre_mm = 1.6;
    r2.sd_mm = 0.975;
    r2.sdr_pct = {95.9, 80.0};
    EXPECT_EQ(format_metrics_row(r2), "odd 1.60(0.97) | 95.9 | 80");
}

TEST(ReportFiles, JsonAndCsvWritten) {
    test::TempDir dir("report");
    std::map<std::string, std::vector<double>> errors{{"a", {1.0, 3.0}}, {"b", {0.5}}};
    auto rep = summarize(errors, {2.0, 4.0});
    rep.inference_seconds = 1.25;
    write_metrics_report(rep, dir.path(), true);
    EXPECT_TRUE(std::filesystem::exists(dir.path() / "report.txt"));
    EXPECT_TRUE(std::filesystem::exists(dir.path() / "report.csv"));
    const auto j = nlohmann::json::parse(std::ifstream(dir.path() / "report.json"));
    EXPECT_EQ(j.at("sample_count").get<int>(), 3);
    EXPECT_NEAR(j.at("aggregate").at("mre_mm").get<double>(), 1.5, 1e-12);
    EXPECT_NEAR(j.at("inference_seconds_per_volume").get<double>(), 1.25, 1e-12);
}

namespace {

struct FakeModel {
    int calls = 0;
    struct Result {
        int dummy = 0;
    };
    Result infer(const Volume<float>&) {
        ++calls;
        // small variable-cost spin so consecutive timings differ
        volatile double acc = 0;
        for (int i = 0; i < 10000 * (calls + 1); ++i) acc += std::sqrt(double(i));
        return {};
    }
};

}  // namespace

TEST(TimeInference, MeasuredNotCached) {
    FakeModel model;
    Volume<float> v;
    v.data.resize({2, 2, 2});
    const double t1 = time_inference(model, v);
    const double t2 = time_inference(model, v);
    EXPECT_GE(t1, 0.0);
    EXPECT_GE(t2, 0.0);
    EXPECT_NE(t1, t2);
    EXPECT_EQ(model.calls, 2);
}
