#pragma once

#include "paml/common.hpp"

namespace paml::diff {

struct AdamConfig {
    double alpha = 1e-2;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// Bias-corrected Adam descent over an aligned list of parameter matrices.
/// Moments are zero-initialized and keyed by position, so the caller must
/// pass the same parameter list in the same order on every step.
class Adam {
public:
    explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

    void step(const std::vector<Matrix*>& params, const std::vector<Matrix>& grads) {
        if (params.size() != grads.size())
            throw std::invalid_argument("adam: parameter/gradient count mismatch");
        if (m_.empty()) {
            for (const Matrix* p : params) {
                m_.push_back(Matrix::Zero(p->rows(), p->cols()));
                v_.push_back(Matrix::Zero(p->rows(), p->cols()));
            }
        }
        if (m_.size() != params.size())
            throw std::invalid_argument("adam: parameter list changed size");
        for (const Matrix& g : grads)
            if (!g.allFinite()) throw numerical_error("adam: non-finite gradient");

        ++steps_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(steps_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(steps_));
        for (std::size_t i = 0; i < params.size(); ++i) {
            m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * grads[i];
            v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * grads[i].cwiseProduct(grads[i]);
            params[i]->array() -= cfg_.alpha * (m_[i].array() / bc1) /
                                  ((v_[i].array() / bc2).sqrt() + cfg_.epsilon);
        }
    }

    long step_count() const { return steps_; }
    double learning_rate() const { return cfg_.alpha; }
    void set_learning_rate(double alpha) { cfg_.alpha = alpha; }

    const std::vector<Matrix>& first_moments() const { return m_; }
    const std::vector<Matrix>& second_moments() const { return v_; }

private:
    AdamConfig cfg_;
    long steps_ = 0;
    std::vector<Matrix> m_, v_;
};

}  // namespace paml::diff
