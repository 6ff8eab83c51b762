#pragma once

#include <cmath>
#include <vector>

#include "sib/graph.hpp"

namespace sib::nn {

// Adam with decoupled weight decay.
class AdamW {
public:
    AdamW(std::vector<Parameter*> params, double lr, double weight_decay,
          double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : params_(std::move(params)), lr_(lr), wd_(weight_decay), b1_(beta1), b2_(beta2), eps_(eps) {
        for (Parameter* p : params_) {
            m_.emplace_back(Mat::Zero(p->value.rows(), p->value.cols()));
            v_.emplace_back(Mat::Zero(p->value.rows(), p->value.cols()));
        }
    }

    void zero_grad() {
        for (Parameter* p : params_) p->zero_grad();
    }

    void step() {
        ++t_;
        const double bc1 = 1.0 - std::pow(b1_, t_);
        const double bc2 = 1.0 - std::pow(b2_, t_);
        for (size_t i = 0; i < params_.size(); ++i) {
            Parameter* p = params_[i];
            if (!p->trainable) continue;
            m_[i] = b1_ * m_[i] + (1.0 - b1_) * p->grad;
            v_[i] = b2_ * v_[i] + (1.0 - b2_) * p->grad.cwiseProduct(p->grad);
            Mat mhat = m_[i] / bc1;
            Mat vhat = v_[i] / bc2;
            p->value.array() -=
                lr_ * (mhat.array() / (vhat.array().sqrt() + eps_) + wd_ * p->value.array());
        }
    }

    double lr() const { return lr_; }

private:
    std::vector<Parameter*> params_;
    std::vector<Mat> m_, v_;
    double lr_, wd_, b1_, b2_, eps_;
    long t_ = 0;
};

// Snapshot/restore of parameter values, used by early stopping.
inline std::vector<Mat> snapshot_params(const std::vector<Parameter*>& params) {
    std::vector<Mat> out;
    out.reserve(params.size());
    for (const Parameter* p : params) out.push_back(p->value);
    return out;
}

inline void restore_params(const std::vector<Parameter*>& params, const std::vector<Mat>& snap) {
    for (size_t i = 0; i < params.size(); ++i) params[i]->value = snap[i];
}

inline Mat init_normal(Rng& rng, int rows, int cols, double std_dev = 0.02) {
    Mat m(rows, cols);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) m(r, c) = rng.normal() * std_dev;
    return m;
}

// Glorot-scaled normal; keeps activations O(1) across the small widths used
// at desk scale.
inline Mat init_xavier(Rng& rng, int rows, int cols) {
    return init_normal(rng, rows, cols, std::sqrt(2.0 / (rows + cols)));
}

}  // namespace sib::nn
