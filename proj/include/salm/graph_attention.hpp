#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "salm/common.hpp"
#include "salm/params.hpp"
#include "salm/tensor.hpp"

namespace salm {

/// Attention normalization: `softmax` applies a row softmax to the scaled
/// dot-product scores; `raw_eps` keeps the literal sum-of-scores
/// normalization with an epsilon-guarded denominator.
enum class GamNorm { softmax, raw_eps };

inline GamNorm parse_gam_norm(const std::string& s) {
    if (s == "softmax") return GamNorm::softmax;
    if (s == "raw-eps") return GamNorm::raw_eps;
    throw validation_error("unknown gam_norm '" + s + "' (expected softmax|raw-eps)");
}

inline std::string to_string(GamNorm g) { return g == GamNorm::softmax ? "softmax" : "raw-eps"; }

/// Graph attention over the landmark configuration. Node i carries its
/// normalized position concatenated with a feature vector sampled from the
/// coarse feature map; the output embedding is the feature vector plus an
/// attention-weighted sum of value-mapped nodes (self-edges included):
///
///   R_i = l_i + sum_j a_ij * g(v_j),   score_ij = theta(v_i)^T phi(v_j)
template <class T>
class GraphAttention {
public:
    static constexpr double kRawEps = 1e-6;

    struct Cache {
        Tensor<T> v;                    // {n, 3+d}
        Tensor<T> key, query, value;    // {n, d}
        Tensor<T> attn;                 // {n, n} row coefficients a_ij
        std::vector<double> denom;      // raw_eps guarded denominators
        std::vector<bool> guarded;      // raw_eps guard active per row
        GamNorm mode = GamNorm::softmax;
    };

    GraphAttention() = default;
    explicit GraphAttention(std::int64_t d) : d_(d) {
        theta_.resize({d, 3 + d});
        phi_.resize({d, 3 + d});
        value_.resize({d, 3 + d});
        dtheta_.resize(theta_.shape());
        dphi_.resize(phi_.shape());
        dvalue_.resize(value_.shape());
    }

    std::int64_t feature_dim() const { return d_; }

    void init(std::mt19937_64& rng) {
        init_fanin_uniform(theta_, 3 + d_, rng);
        init_fanin_uniform(phi_, 3 + d_, rng);
        init_fanin_uniform(value_, 3 + d_, rng);
    }

    /// positions {n,3} (normalized coords), feats {n,d}; returns R {n,d}.
    Tensor<T> forward(const Tensor<T>& positions, const Tensor<T>& feats, GamNorm mode,
                      Cache* cache) const {
        const std::int64_t n = positions.dim(0);
        check(n >= 1, "graph attention needs at least one node");
        check(feats.dim(0) == n && feats.dim(1) == d_, "node feature shape mismatch");
        Cache local;
        Cache& c = cache ? *cache : local;
        c.mode = mode;
        c.v.resize({n, 3 + d_});
        for (std::int64_t i = 0; i < n; ++i) {
            for (int a = 0; a < 3; ++a) c.v[i * (3 + d_) + a] = positions[i * 3 + a];
            for (std::int64_t a = 0; a < d_; ++a)
                c.v[i * (3 + d_) + 3 + a] = feats[i * d_ + a];
        }
        c.key.resize({n, d_});
        c.query.resize({n, d_});
        c.value.resize({n, d_});
        for (std::int64_t i = 0; i < n; ++i) {
            matvec(theta_, c.v.data() + i * (3 + d_), c.key.data() + i * d_);
            matvec(phi_, c.v.data() + i * (3 + d_), c.query.data() + i * d_);
            matvec(value_, c.v.data() + i * (3 + d_), c.value.data() + i * d_);
        }
        c.attn.resize({n, n});
        c.denom.assign(static_cast<std::size_t>(n), 0.0);
        c.guarded.assign(static_cast<std::size_t>(n), false);
        const double scale = (mode == GamNorm::softmax) ? 1.0 / std::sqrt(double(d_)) : 1.0;
        std::vector<double> row(static_cast<std::size_t>(n));
        for (std::int64_t i = 0; i < n; ++i) {
            for (std::int64_t j = 0; j < n; ++j) {
                double s = 0;
                for (std::int64_t a = 0; a < d_; ++a)
                    s += double(c.key[i * d_ + a]) * double(c.query[j * d_ + a]);
                row[static_cast<std::size_t>(j)] = s * scale;
            }
            if (mode == GamNorm::softmax) {
                double mx = row[0];
                for (std::int64_t j = 1; j < n; ++j) mx = std::max(mx, row[static_cast<std::size_t>(j)]);
                double sum = 0;
                for (std::int64_t j = 0; j < n; ++j) {
                    row[static_cast<std::size_t>(j)] = std::exp(row[static_cast<std::size_t>(j)] - mx);
                    sum += row[static_cast<std::size_t>(j)];
                }
                for (std::int64_t j = 0; j < n; ++j)
                    c.attn[i * n + j] = T(row[static_cast<std::size_t>(j)] / sum);
            } else {
                double sum = 0;
                for (std::int64_t j = 0; j < n; ++j) sum += row[static_cast<std::size_t>(j)];
                const bool guard = std::abs(sum) < kRawEps;
                const double denom = guard ? (sum >= 0 ? kRawEps : -kRawEps) : sum;
                c.denom[static_cast<std::size_t>(i)] = denom;
                c.guarded[static_cast<std::size_t>(i)] = guard;
                for (std::int64_t j = 0; j < n; ++j)
                    c.attn[i * n + j] = T(row[static_cast<std::size_t>(j)] / denom);
            }
        }
        Tensor<T> r({n, d_});
        for (std::int64_t i = 0; i < n; ++i)
            for (std::int64_t a = 0; a < d_; ++a) {
                double acc = double(feats[i * d_ + a]);
                for (std::int64_t j = 0; j < n; ++j)
                    acc += double(c.attn[i * n + j]) * double(c.value[j * d_ + a]);
                r[i * d_ + a] = T(acc);
            }
        return r;
    }

    /// Accumulates parameter gradients; also accumulates into dpos {n,3} and
    /// dfeats {n,d}.
    void backward(const Cache& c, const Tensor<T>& dr, Tensor<T>& dpos, Tensor<T>& dfeats) {
        const std::int64_t n = c.v.dim(0);
        const std::int64_t w = 3 + d_;
        Tensor<T> dkey({n, d_}), dquery({n, d_}), dvalue({n, d_});
        Tensor<T> dattn({n, n});
        // residual + value aggregation
        for (std::int64_t i = 0; i < n; ++i)
            for (std::int64_t a = 0; a < d_; ++a) dfeats[i * d_ + a] += dr[i * d_ + a];
        for (std::int64_t i = 0; i < n; ++i)
            for (std::int64_t j = 0; j < n; ++j) {
                double da = 0;
                for (std::int64_t a = 0; a < d_; ++a)
                    da += double(dr[i * d_ + a]) * double(c.value[j * d_ + a]);
                dattn[i * n + j] = T(da);
                const T aij = c.attn[i * n + j];
                for (std::int64_t a = 0; a < d_; ++a)
                    dvalue[j * d_ + a] += aij * dr[i * d_ + a];
            }
        // normalization backward -> score gradients
        Tensor<T> dscore({n, n});
        const double scale = (c.mode == GamNorm::softmax) ? 1.0 / std::sqrt(double(d_)) : 1.0;
        for (std::int64_t i = 0; i < n; ++i) {
            if (c.mode == GamNorm::softmax) {
                double dot = 0;
                for (std::int64_t j = 0; j < n; ++j)
                    dot += double(c.attn[i * n + j]) * double(dattn[i * n + j]);
                for (std::int64_t j = 0; j < n; ++j)
                    dscore[i * n + j] =
                        T(double(c.attn[i * n + j]) * (double(dattn[i * n + j]) - dot) * scale);
            } else {
                const double denom = c.denom[static_cast<std::size_t>(i)];
                double dsum = 0;
                if (!c.guarded[static_cast<std::size_t>(i)]) {
                    for (std::int64_t j = 0; j < n; ++j)
                        dsum -= double(c.attn[i * n + j]) * double(dattn[i * n + j]) / denom;
                }
                for (std::int64_t j = 0; j < n; ++j)
                    dscore[i * n + j] = T(double(dattn[i * n + j]) / denom + dsum);
            }
        }
        // score_ij = key_i . query_j (already scaled above)
        for (std::int64_t i = 0; i < n; ++i)
            for (std::int64_t j = 0; j < n; ++j) {
                const T s = dscore[i * n + j];
                for (std::int64_t a = 0; a < d_; ++a) {
                    dkey[i * d_ + a] += s * c.query[j * d_ + a];
                    dquery[j * d_ + a] += s * c.key[i * d_ + a];
                }
            }
        // linear maps
        Tensor<T> dv({n, w});
        for (std::int64_t i = 0; i < n; ++i) {
            matvec_backward(theta_, c.v.data() + i * w, dkey.data() + i * d_, dv.data() + i * w,
                            dtheta_);
            matvec_backward(phi_, c.v.data() + i * w, dquery.data() + i * d_, dv.data() + i * w,
                            dphi_);
            matvec_backward(value_, c.v.data() + i * w, dvalue.data() + i * d_, dv.data() + i * w,
                            dvalue_);
        }
        for (std::int64_t i = 0; i < n; ++i) {
            for (int a = 0; a < 3; ++a) dpos[i * 3 + a] += dv[i * w + a];
            for (std::int64_t a = 0; a < d_; ++a) dfeats[i * d_ + a] += dv[i * w + 3 + a];
        }
    }

    void zero_grad() {
        dtheta_.zero();
        dphi_.zero();
        dvalue_.zero();
    }

    void collect_params(std::vector<ParamRef<T>>& out) {
        out.push_back({"gam.theta", &theta_, &dtheta_});
        out.push_back({"gam.phi", &phi_, &dphi_});
        out.push_back({"gam.value", &value_, &dvalue_});
    }

    Tensor<T>& value_map() { return value_; }  // exposed for the residual identity test

private:
    std::int64_t d_ = 0;
    Tensor<T> theta_, phi_, value_;
    Tensor<T> dtheta_, dphi_, dvalue_;
};

}  // namespace salm
