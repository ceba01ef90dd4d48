#pragma once

// Central-difference verification of the analytic gradients, shared by the
// unit tests and the acceptance gate.

#include <cstddef>
#include <vector>

#include "menupred/model.hpp"
#include "menupred/rng.hpp"
#include "menupred/train.hpp"
#include "support/finite_diff.hpp"

namespace testsupport {

struct GradcheckReport {
    double max_rel_err = 0;
    std::size_t checked = 0;
};

/// Compares every parameter gradient of the variance-scaled sequence loss
/// against a central difference. `dropout` > 0 exercises the train-mode
/// path; the mask is pinned by reseeding the same stream for every forward.
inline GradcheckReport gradcheck_model(menupred::ModelParams& params,
                                       const std::vector<menupred::TrialInput>& inputs,
                                       const std::vector<double>& targets, double variance_sum,
                                       double dropout = 0.0, double h = 1e-5,
                                       double floor_at = 1e-4) {
    using namespace menupred;
    const std::uint64_t mask_seed = 20240; // any fixed value; identical per forward

    auto run_forward = [&]() {
        ForwardOptions opt;
        RngStream rng(mask_seed);
        if (dropout > 0.0) {
            opt.train = true;
            opt.dropout = dropout;
            opt.rng = &rng;
        }
        return forward_inputs(params, inputs, opt);
    };
    auto loss = [&]() {
        ForwardPass pass = run_forward();
        return sequence_loss(targets, pass.predictions, variance_sum);
    };

    ForwardPass pass = run_forward();
    std::vector<double> dL_dt(targets.size());
    for (std::size_t i = 0; i < targets.size(); ++i) {
        dL_dt[i] = 2.0 * (pass.predictions[i] - targets[i]) / variance_sum;
    }
    NetTensors analytic = backward_sequence(params, pass, dL_dt);

    GradcheckReport report;
    std::vector<Mat*> ps = tensors(params.net);
    std::vector<Mat*> gs = tensors(analytic);
    for (std::size_t k = 0; k < ps.size(); ++k) {
        Mat& p = *ps[k];
        for (Eigen::Index r = 0; r < p.rows(); ++r) {
            for (Eigen::Index c = 0; c < p.cols(); ++c) {
                double numeric = central_diff(loss, &p(r, c), h);
                double err = rel_err((*gs[k])(r, c), numeric, floor_at);
                if (err > report.max_rel_err) report.max_rel_err = err;
                ++report.checked;
            }
        }
    }
    return report;
}

}  // namespace testsupport
