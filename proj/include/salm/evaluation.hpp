#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "salm/common.hpp"
#include "salm/volume.hpp"

namespace salm {

/// Euclidean distances in millimeters between matching landmarks.
inline std::vector<double> radial_errors(const LandmarkSet& pred, const LandmarkSet& gt,
                                         const Vec3<double>& spacing_mm) {
    check(pred.names == gt.names, "prediction/ground-truth landmark names mismatch");
    check(spacing_mm[0] > 0 && spacing_mm[1] > 0 && spacing_mm[2] > 0, "spacing must be positive");
    std::vector<double> out;
    out.reserve(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i)
        out.push_back(cwise_mul(pred.points[i] - gt.points[i], spacing_mm).norm());
    return out;
}

struct MetricsRow {
    std::string name;
    double mre_mm = 0;
    double sd_mm = 0;
    std::vector<double> sdr_pct;  // one per radius
    std::size_t count = 0;
};

/// Per-landmark and pooled detection metrics. SD is the population standard
/// deviation; SDR uses an inclusive boundary (error == radius counts as
/// detected); the aggregate row pools every landmark instance.
struct MetricsReport {
    std::vector<double> radii_mm{2.0, 2.5, 3.0, 4.0, 8.0};
    std::vector<MetricsRow> rows;
    MetricsRow aggregate;
    std::size_t sample_count = 0;
    double inference_seconds = -1;  // < 0 when not measured
};

namespace detail {

inline MetricsRow summarize_row(const std::string& name, const std::vector<double>& errors,
                                const std::vector<double>& radii) {
    check(!errors.empty(), "cannot summarize an empty error list for '" + name + "'");
    MetricsRow row;
    row.name = name;
    row.count = errors.size();
    double mean = 0;
    for (double e : errors) mean += e;
    mean /= double(errors.size());
    double var = 0;
    for (double e : errors) var += (e - mean) * (e - mean);
    var /= double(errors.size());
    row.mre_mm = mean;
    row.sd_mm = std::sqrt(var);
    for (double r : radii) {
        std::size_t hit = 0;
        for (double e : errors)
            if (e <= r) ++hit;
        row.sdr_pct.push_back(100.0 * double(hit) / double(errors.size()));
    }
    return row;
}

inline std::string fmt_fixed2(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

/// SDR values print like the benchmark tables: two decimals with trailing
/// zeros trimmed (100.00 -> 100, 95.90 -> 95.9).
inline std::string fmt_sdr(double v) {
    std::string s = fmt_fixed2(v);
    while (!s.empty() && s.back() == '0') s.pop_back();
    if (!s.empty() && s.back() == '.') s.pop_back();
    return s;
}

}  // namespace detail

inline MetricsReport summarize(const std::map<std::string, std::vector<double>>& errors_by_landmark,
                               const std::vector<double>& radii_mm) {
    check(!errors_by_landmark.empty(), "no errors to summarize");
    MetricsReport rep;
    rep.radii_mm = radii_mm;
    std::vector<double> pooled;
    for (const auto& [name, errors] : errors_by_landmark) {
        rep.rows.push_back(detail::summarize_row(name, errors, radii_mm));
        pooled.insert(pooled.end(), errors.begin(), errors.end());
    }
    rep.aggregate = detail::summarize_row("Average", pooled, radii_mm);
    rep.sample_count = pooled.size();
    return rep;
}

inline std::string format_metrics_row(const MetricsRow& row) {
    std::string s = row.name + " " + detail::fmt_fixed2(row.mre_mm) + "(" +
                    detail::fmt_fixed2(row.sd_mm) + ")";
    for (double v : row.sdr_pct) s += " | " + detail::fmt_sdr(v);
    return s;
}

inline std::string format_metrics_report(const MetricsReport& rep) {
    std::string s = "Landmark MRE(SD)mm";
    for (double r : rep.radii_mm) s += " | SDR " + detail::fmt_sdr(r) + "mm";
    s += "\n";
    for (const auto& row : rep.rows) s += format_metrics_row(row) + "\n";
    s += format_metrics_row(rep.aggregate) + "\n";
    if (rep.inference_seconds >= 0)
        s += "inference_seconds_per_volume " + detail::fmt_fixed2(rep.inference_seconds) + "\n";
    return s;
}

inline nlohmann::json metrics_report_json(const MetricsReport& rep) {
    nlohmann::json rows = nlohmann::json::array();
    auto row_json = [&](const MetricsRow& r) {
        nlohmann::json j{{"name", r.name},
                         {"mre_mm", r.mre_mm},
                         {"sd_mm", r.sd_mm},
                         {"sdr_pct", r.sdr_pct},
                         {"count", r.count}};
        return j;
    };
    for (const auto& r : rep.rows) rows.push_back(row_json(r));
    nlohmann::json j{{"radii_mm", rep.radii_mm},
                     {"per_landmark", rows},
                     {"aggregate", row_json(rep.aggregate)},
                     {"sample_count", rep.sample_count}};
    if (rep.inference_seconds >= 0) j["inference_seconds_per_volume"] = rep.inference_seconds;
    return j;
}

inline void write_metrics_report(const MetricsReport& rep, const std::filesystem::path& dir,
                                 bool also_csv = false) {
    std::filesystem::create_directories(dir);
    {
        std::ofstream out(dir / "report.txt");
        if (!out) throw io_error("cannot write report.txt");
        out << format_metrics_report(rep);
    }
    {
        std::ofstream out(dir / "report.json");
        if (!out) throw io_error("cannot write report.json");
        out << metrics_report_json(rep).dump(2) << "\n";
    }
    if (also_csv) {
        std::ofstream out(dir / "report.csv");
        if (!out) throw io_error("cannot write report.csv");
        out << "name,mre_mm,sd_mm";
        for (double r : rep.radii_mm) out << ",sdr_" << detail::fmt_sdr(r) << "mm";
        out << ",count\n";
        auto line = [&](const MetricsRow& r) {
            out << r.name << "," << r.mre_mm << "," << r.sd_mm;
            for (double v : r.sdr_pct) out << "," << v;
            out << "," << r.count << "\n";
        };
        for (const auto& r : rep.rows) line(r);
        line(rep.aggregate);
    }
}

/// Wall-clock of one full two-stage inference, excluding file I/O.
template <class ModelT, class VolT>
double time_inference(ModelT& model, const VolT& volume) {
    const auto t0 = std::chrono::steady_clock::now();
    (void)model.infer(volume);
    const auto t1 = std::chrono::steady_clock::now();
    return std::chrono::duration<double>(t1 - t0).count();
}

}  // namespace salm
