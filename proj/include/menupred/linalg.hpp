#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "menupred/errors.hpp"

namespace menupred {

// Dense 64-bit linear algebra, backed by Eigen. Row-major storage so the
// checkpoint layout is the natural reading order of each weight matrix.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;
using Arr = Eigen::ArrayXd;

inline Mat matmul(const Mat& a, const Mat& b) {
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                         " times " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
    }
    return a * b;
}

enum class Activation { sigmoid, tanh, relu };

inline double sigmoid_scalar(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Elementwise kernels. These are the shared code paths used by the model's
// forward/backward; activate()/activate_grad() below add the input checks.
inline Arr sigmoid(const Arr& x) { return 1.0 / (1.0 + (-x).exp()); }
inline Arr tanh_arr(const Arr& x) { return x.tanh(); }
inline Arr relu(const Arr& x) { return x.max(0.0); }

inline Arr sigmoid_grad(const Arr& x) {
    Arr s = sigmoid(x);
    return s * (1.0 - s);
}
inline Arr tanh_grad(const Arr& x) { return 1.0 - x.tanh().square(); }
inline Arr relu_grad(const Arr& x) { return (x > 0.0).cast<double>(); }

inline void require_finite(const Arr& x, const char* where) {
    if (!x.isFinite().all()) throw NumericError(std::string(where) + ": non-finite input");
}

inline Vec activate(const Vec& x, Activation kind) {
    require_finite(x.array(), "activate");
    switch (kind) {
        case Activation::sigmoid: return sigmoid(x.array()).matrix();
        case Activation::tanh: return tanh_arr(x.array()).matrix();
        case Activation::relu: return relu(x.array()).matrix();
    }
    throw DomainError("activate: unknown kind");
}

inline Vec activate_grad(const Vec& x, Activation kind) {
    require_finite(x.array(), "activate_grad");
    switch (kind) {
        case Activation::sigmoid: return sigmoid_grad(x.array()).matrix();
        case Activation::tanh: return tanh_grad(x.array()).matrix();
        case Activation::relu: return relu_grad(x.array()).matrix();
    }
    throw DomainError("activate_grad: unknown kind");
}

inline double global_norm(const std::vector<Mat*>& tensors) {
    double sq = 0.0;
    for (const Mat* t : tensors) sq += t->squaredNorm();
    return std::sqrt(sq);
}

/// Scales every entry by max_norm/g when the global Euclidean norm g
/// exceeds max_norm; otherwise leaves the tensors untouched. Returns the
/// pre-clip norm so callers can count clip activations.
inline double global_norm_clip(const std::vector<Mat*>& tensors, double max_norm) {
    if (!(max_norm > 0.0)) throw DomainError("global_norm_clip: max_norm must be > 0");
    double g = global_norm(tensors);
    if (g > max_norm) {
        double scale = max_norm / g;
        for (Mat* t : tensors) *t *= scale;
    }
    return g;
}

}  // namespace menupred
