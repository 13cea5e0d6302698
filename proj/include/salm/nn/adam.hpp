#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "salm/params.hpp"
#include "salm/tensor.hpp"

namespace salm::nn {

/// Adam with the standard defaults (beta 0.9/0.999, eps 1e-8) and optional
/// global-norm gradient clipping applied before the moment updates.
template <class T>
class Adam {
public:
    Adam() = default;
    explicit Adam(const std::vector<ParamRef<T>>& params, double lr = 1e-3)
        : lr_(lr) {
        m_.reserve(params.size());
        v_.reserve(params.size());
        for (const auto& p : params) {
            m_.emplace_back(p.value->shape());
            v_.emplace_back(p.value->shape());
        }
    }

    double learning_rate() const { return lr_; }
    std::int64_t step_count() const { return step_; }

    double grad_norm(const std::vector<ParamRef<T>>& params) const {
        double acc = 0;
        for (const auto& p : params)
            for (std::int64_t i = 0; i < p.grad->size(); ++i) {
                const double g = double((*p.grad)[i]);
                acc += g * g;
            }
        return std::sqrt(acc);
    }

    void step(const std::vector<ParamRef<T>>& params, double clip_norm) {
        double scale = 1.0;
        if (clip_norm > 0) {
            const double norm = grad_norm(params);
            if (norm > clip_norm) scale = clip_norm / norm;
        }
        ++step_;
        const double bc1 = 1.0 - std::pow(beta1_, double(step_));
        const double bc2 = 1.0 - std::pow(beta2_, double(step_));
        for (std::size_t pi = 0; pi < params.size(); ++pi) {
            Tensor<T>& w = *params[pi].value;
            Tensor<T>& g = *params[pi].grad;
            Tensor<T>& m = m_[pi];
            Tensor<T>& v = v_[pi];
            for (std::int64_t i = 0; i < w.size(); ++i) {
                const double gi = double(g[i]) * scale;
                const double mi = beta1_ * double(m[i]) + (1.0 - beta1_) * gi;
                const double vi = beta2_ * double(v[i]) + (1.0 - beta2_) * gi * gi;
                m[i] = T(mi);
                v[i] = T(vi);
                w[i] = T(double(w[i]) - lr_ * (mi / bc1) / (std::sqrt(vi / bc2) + eps_));
            }
        }
    }

    std::vector<Tensor<T>>& first_moments() { return m_; }
    std::vector<Tensor<T>>& second_moments() { return v_; }
    void set_step_count(std::int64_t s) { step_ = s; }

private:
    double lr_ = 1e-3;
    double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
    std::int64_t step_ = 0;
    std::vector<Tensor<T>> m_, v_;
};

}  // namespace salm::nn
