#pragma once

#include <cmath>
#include <vector>

#include "menupred/errors.hpp"
#include "menupred/linalg.hpp"

namespace menupred {

// Adagrad accumulator, one tensor per parameter tensor, same shapes.
// Accumulators only ever grow.
struct AdagradState {
    std::vector<Mat> acc;

    static AdagradState zeros_like(const std::vector<Mat*>& params) {
        AdagradState s;
        s.acc.reserve(params.size());
        for (const Mat* p : params) s.acc.push_back(Mat::Zero(p->rows(), p->cols()));
        return s;
    }
};

inline constexpr double kAdagradEpsilon = 1e-8;

/// acc += grad^2; param -= lr * grad / sqrt(acc + eps). In place.
inline void adagrad_update(const std::vector<Mat*>& params, const std::vector<const Mat*>& grads,
                           AdagradState& state, double lr) {
    if (!(lr > 0.0)) throw DomainError("adagrad_update: lr must be > 0");
    if (params.size() != grads.size() || params.size() != state.acc.size()) {
        throw ShapeError("adagrad_update: tensor count mismatch");
    }
    for (std::size_t k = 0; k < params.size(); ++k) {
        Mat& p = *params[k];
        const Mat& g = *grads[k];
        Mat& a = state.acc[k];
        if (p.rows() != g.rows() || p.cols() != g.cols() || p.rows() != a.rows() ||
            p.cols() != a.cols()) {
            throw ShapeError("adagrad_update: shape mismatch at tensor " + std::to_string(k));
        }
        a.array() += g.array().square();
        p.array() -= lr * g.array() / (a.array() + kAdagradEpsilon).sqrt();
    }
}

}  // namespace menupred
