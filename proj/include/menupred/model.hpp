#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "menupred/dataset.hpp"
#include "menupred/embedding.hpp"
#include "menupred/errors.hpp"
#include "menupred/features.hpp"
#include "menupred/linalg.hpp"
#include "menupred/pca.hpp"
#include "menupred/rng.hpp"

namespace menupred {

struct ModelDims {
    int item_dim = kItemFeatureDim;  // 6
    int enc_cells = 16;
    int org_dim = kOrgDim;  // 3
    int pred_cells = 32;
    int hidden_dim = 16;

    int task_dim() const { return enc_cells + org_dim; }

    void validate() const {
        if (item_dim < 1 || enc_cells < 1 || org_dim < 1 || pred_cells < 1 || hidden_dim < 1) {
            throw ShapeError("model dims must all be positive");
        }
    }

    bool operator==(const ModelDims&) const = default;

    std::string describe() const {
        return "item=" + std::to_string(item_dim) + " enc=" + std::to_string(enc_cells) +
               " org=" + std::to_string(org_dim) + " pred=" + std::to_string(pred_cells) +
               " hidden=" + std::to_string(hidden_dim);
    }
};

/// Stacked-gate LSTM weights. Row blocks of w_x/w_h/b are the four gates in
/// the order [input, forget, candidate, output], each block `cells` rows.
struct LstmCellParams {
    Mat w_x;  // 4C x X
    Mat w_h;  // 4C x C
    Mat b;    // 4C x 1
};

/// Every trainable tensor of the model. The same container shape is reused
/// for gradients, so the two can be zipped positionally.
struct NetTensors {
    LstmCellParams encoder;    // item_dim -> enc_cells
    LstmCellParams predictor;  // task_dim -> pred_cells
    Mat hidden_w;              // hidden_dim x pred_cells
    Mat hidden_b;              // hidden_dim x 1
    Mat readout_w;             // 1 x hidden_dim
    Mat readout_b;             // 1 x 1
};

// Fixed tensor order; the checkpoint layout and the optimizer state both
// follow it.
inline std::array<const char*, 10> tensor_names() {
    return {"encoder.w_x", "encoder.w_h", "encoder.b",  "predictor.w_x", "predictor.w_h",
            "predictor.b", "hidden.w",    "hidden.b",   "readout.w",     "readout.b"};
}

inline std::vector<Mat*> tensors(NetTensors& t) {
    return {&t.encoder.w_x, &t.encoder.w_h, &t.encoder.b, &t.predictor.w_x, &t.predictor.w_h,
            &t.predictor.b, &t.hidden_w,    &t.hidden_b,  &t.readout_w,     &t.readout_b};
}

inline std::vector<const Mat*> tensors(const NetTensors& t) {
    return {&t.encoder.w_x, &t.encoder.w_h, &t.encoder.b, &t.predictor.w_x, &t.predictor.w_h,
            &t.predictor.b, &t.hidden_w,    &t.hidden_b,  &t.readout_w,     &t.readout_b};
}

inline NetTensors zero_tensors(const ModelDims& d) {
    NetTensors t;
    t.encoder.w_x = Mat::Zero(4 * d.enc_cells, d.item_dim);
    t.encoder.w_h = Mat::Zero(4 * d.enc_cells, d.enc_cells);
    t.encoder.b = Mat::Zero(4 * d.enc_cells, 1);
    t.predictor.w_x = Mat::Zero(4 * d.pred_cells, d.task_dim());
    t.predictor.w_h = Mat::Zero(4 * d.pred_cells, d.pred_cells);
    t.predictor.b = Mat::Zero(4 * d.pred_cells, 1);
    t.hidden_w = Mat::Zero(d.hidden_dim, d.pred_cells);
    t.hidden_b = Mat::Zero(d.hidden_dim, 1);
    t.readout_w = Mat::Zero(1, d.hidden_dim);
    t.readout_b = Mat::Zero(1, 1);
    return t;
}

inline std::size_t param_count(const ModelDims& d) {
    std::size_t enc = 4ull * d.enc_cells * (d.item_dim + d.enc_cells + 1);
    std::size_t pred = 4ull * d.pred_cells * (d.task_dim() + d.pred_cells + 1);
    std::size_t head = static_cast<std::size_t>(d.hidden_dim) * (d.pred_cells + 1);
    return enc + pred + head + d.hidden_dim + 1;
}

struct ModelParams {
    ModelDims dims;
    NetTensors net;
    PcaProjection name_projection;  // frozen at training time
};

/// Glorot-uniform weights, zero biases except the forget-gate block at 1.0.
/// Deterministic per seed.
inline ModelParams init_params(const ModelDims& dims, std::uint64_t seed) {
    dims.validate();
    ModelParams p;
    p.dims = dims;
    p.net = zero_tensors(dims);
    RngStream rng(seed, fnv1a64("init"));

    auto fill = [&rng](Mat& m, int fan_in, int fan_out) {
        double bound = std::sqrt(6.0 / (fan_in + fan_out));
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            for (Eigen::Index c = 0; c < m.cols(); ++c) {
                m(r, c) = (2.0 * rng.uniform() - 1.0) * bound;
            }
        }
    };
    fill(p.net.encoder.w_x, dims.item_dim, dims.enc_cells);
    fill(p.net.encoder.w_h, dims.enc_cells, dims.enc_cells);
    fill(p.net.predictor.w_x, dims.task_dim(), dims.pred_cells);
    fill(p.net.predictor.w_h, dims.pred_cells, dims.pred_cells);
    fill(p.net.hidden_w, dims.pred_cells, dims.hidden_dim);
    fill(p.net.readout_w, dims.hidden_dim, 1);

    p.net.encoder.b.block(dims.enc_cells, 0, dims.enc_cells, 1).setOnes();
    p.net.predictor.b.block(dims.pred_cells, 0, dims.pred_cells, 1).setOnes();
    return p;
}

// ---------------------------------------------------------------------------
// Forward
// ---------------------------------------------------------------------------

/// Everything one LSTM step needs for its backward pass. Gate vectors are
/// post-activation values.
struct LstmStepCache {
    Vec x, h_prev, c_prev;
    Vec i, f, g, o;  // gates
    Vec c, tanh_c, h;
};

inline void lstm_step(const LstmCellParams& cell, const Vec& x, const Vec& h_prev,
                      const Vec& c_prev, LstmStepCache& out) {
    const Eigen::Index cells = cell.w_h.cols();
    if (cell.w_x.cols() != x.size() || h_prev.size() != cells || c_prev.size() != cells ||
        cell.w_x.rows() != 4 * cells || cell.w_h.rows() != 4 * cells ||
        cell.b.rows() != 4 * cells || cell.b.cols() != 1) {
        throw ShapeError("lstm_step: shape mismatch (input " + std::to_string(x.size()) +
                         ", cells " + std::to_string(cells) + ")");
    }
    Vec z = cell.w_x * x + cell.w_h * h_prev + cell.b.col(0);
    out.x = x;
    out.h_prev = h_prev;
    out.c_prev = c_prev;
    out.i = sigmoid(z.segment(0, cells).array()).matrix();
    out.f = sigmoid(z.segment(cells, cells).array()).matrix();
    out.g = tanh_arr(z.segment(2 * cells, cells).array()).matrix();
    out.o = sigmoid(z.segment(3 * cells, cells).array()).matrix();
    out.c = (out.f.array() * c_prev.array() + out.i.array() * out.g.array()).matrix();
    out.tanh_c = tanh_arr(out.c.array()).matrix();
    out.h = (out.o.array() * out.tanh_c.array()).matrix();
}

inline LstmStepCache lstm_step(const LstmCellParams& cell, const Vec& x, const Vec& h_prev,
                               const Vec& c_prev) {
    LstmStepCache cache;
    lstm_step(cell, x, h_prev, c_prev, cache);
    return cache;
}

/// One selection step as the model sees it: per-item feature rows in menu
/// order plus the organization one-hot.
struct TrialInput {
    Mat item_feats;  // n x item_dim
    Vec org_onehot;  // org_dim
};

/// Per-menu feature rows with the target flag column left zero; a trial's
/// input is the base with one flag set.
struct MenuFeatureBase {
    Mat base;
    Vec org_onehot;
};

inline MenuFeatureBase menu_feature_base(const MenuSpec& menu, const EmbeddingTable& table,
                                         const PcaProjection& proj) {
    MenuFeatureBase out;
    out.base = Mat(menu.n(), kItemFeatureDim);
    for (int j = 0; j < menu.n(); ++j) {
        out.base.row(j) =
            item_features(menu.items[static_cast<std::size_t>(j)], false, table, proj)
                .transpose();
    }
    out.org_onehot = org_one_hot(menu.organization);
    return out;
}

inline TrialInput trial_input(const MenuFeatureBase& base, int target_index) {
    if (target_index < 0 || target_index >= base.base.rows()) {
        throw ValidationError("trial_input: target index out of range");
    }
    TrialInput in{base.base, base.org_onehot};
    in.item_feats(target_index, 0) = 1.0;
    return in;
}

inline std::vector<TrialInput> build_sequence_inputs(const SelectionSequence& seq,
                                                     const EmbeddingTable& table,
                                                     const PcaProjection& proj) {
    MenuFeatureBase base = menu_feature_base(seq.menu, table, proj);
    std::vector<TrialInput> inputs;
    inputs.reserve(seq.trials.size());
    for (const Trial& t : seq.trials) inputs.push_back(trial_input(base, t.target_index));
    return inputs;
}

struct TaskEncodeResult {
    Vec encoding;  // task_dim = enc_cells + org_dim
    std::vector<LstmStepCache> steps;
};

/// Feeds item features through the encoder from zero state, item 1..n in
/// menu order, then appends the organization one-hot. Works for any n.
inline TaskEncodeResult encode_task(const ModelParams& params, const Mat& item_feats,
                                    const Vec& org_onehot) {
    const ModelDims& d = params.dims;
    if (item_feats.cols() != d.item_dim || org_onehot.size() != d.org_dim) {
        throw ShapeError("encode_task: feature shape mismatch");
    }
    TaskEncodeResult out;
    out.steps.resize(static_cast<std::size_t>(item_feats.rows()));
    Vec h = Vec::Zero(d.enc_cells);
    Vec c = Vec::Zero(d.enc_cells);
    for (Eigen::Index j = 0; j < item_feats.rows(); ++j) {
        LstmStepCache& s = out.steps[static_cast<std::size_t>(j)];
        lstm_step(params.net.encoder, item_feats.row(j).transpose(), h, c, s);
        h = s.h;
        c = s.c;
    }
    out.encoding = Vec(d.task_dim());
    out.encoding.head(d.enc_cells) = h;
    out.encoding.tail(d.org_dim) = org_onehot;
    return out;
}

inline TaskEncodeResult encode_task(const ModelParams& params, const MenuSpec& menu,
                                    int target_index, const EmbeddingTable& table) {
    menu.validate();
    Mat feats = menu_features(menu.items, target_index, table, params.name_projection);
    return encode_task(params, feats, org_one_hot(menu.organization));
}

struct PredictStepResult {
    double prediction = 0;
    LstmStepCache pred;  // pred.x is the (possibly masked) task encoding
    Vec hidden_pre, hidden_act;
};

/// Task encoding -> predictor LSTM step -> ReLU hidden layer -> scalar
/// affine readout. `dropout_mask` (inverted-dropout scale per coordinate)
/// is present only in training mode.
inline PredictStepResult predict_step(const ModelParams& params, const Vec& encoding,
                                      const Vec& h_prev, const Vec& c_prev,
                                      const Vec* dropout_mask = nullptr) {
    const ModelDims& d = params.dims;
    if (encoding.size() != d.task_dim()) throw ShapeError("predict_step: encoding size mismatch");
    PredictStepResult out;
    Vec e_in = dropout_mask ? Vec((encoding.array() * dropout_mask->array()).matrix()) : encoding;
    lstm_step(params.net.predictor, e_in, h_prev, c_prev, out.pred);
    out.hidden_pre = params.net.hidden_w * out.pred.h + params.net.hidden_b.col(0);
    out.hidden_act = relu(out.hidden_pre.array()).matrix();
    out.prediction = (params.net.readout_w * out.hidden_act)(0) + params.net.readout_b(0, 0);
    return out;
}

struct TrialCache {
    std::vector<LstmStepCache> encoder;
    Vec encoding;  // pre-dropout task encoding
    Vec mask;      // inverted dropout mask; empty in eval mode
    LstmStepCache pred;
    Vec hidden_pre, hidden_act;
};

struct ForwardPass {
    std::vector<double> predictions;
    std::vector<TrialCache> trials;
    Vec h_final, c_final;  // predictor state after the last trial
};

struct ForwardOptions {
    bool train = false;
    double dropout = 0.0;      // applied to the task encoding in train mode
    RngStream* rng = nullptr;  // required in train mode
    const Vec* h0 = nullptr;   // carried predictor state; zero when absent
    const Vec* c0 = nullptr;
};

/// Runs the predictor across `inputs`, encoding each trial first. State is
/// threaded through all trials; pass h0/c0 to continue from a carried
/// state, otherwise the sequence starts from zero.
inline ForwardPass forward_inputs(const ModelParams& params, const std::vector<TrialInput>& inputs,
                                  const ForwardOptions& options = {}) {
    const ModelDims& d = params.dims;
    if (options.train && options.rng == nullptr) {
        throw ConsistencyError("forward: train mode requires an rng");
    }
    ForwardPass pass;
    pass.predictions.reserve(inputs.size());
    pass.trials.resize(inputs.size());
    Vec h = options.h0 ? *options.h0 : Vec::Zero(d.pred_cells);
    Vec c = options.c0 ? *options.c0 : Vec::Zero(d.pred_cells);
    if (h.size() != d.pred_cells || c.size() != d.pred_cells) {
        throw ShapeError("forward: carried state size mismatch");
    }
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        TrialCache& cache = pass.trials[k];
        TaskEncodeResult enc = encode_task(params, inputs[k].item_feats, inputs[k].org_onehot);
        cache.encoder = std::move(enc.steps);
        cache.encoding = std::move(enc.encoding);

        const Vec* mask = nullptr;
        if (options.train) {
            cache.mask = Vec(d.task_dim());
            double keep = 1.0 - options.dropout;
            for (Eigen::Index i = 0; i < cache.mask.size(); ++i) {
                cache.mask[i] = (options.rng->uniform() >= options.dropout) ? 1.0 / keep : 0.0;
            }
            mask = &cache.mask;
        }
        PredictStepResult step = predict_step(params, cache.encoding, h, c, mask);
        cache.pred = std::move(step.pred);
        cache.hidden_pre = std::move(step.hidden_pre);
        cache.hidden_act = std::move(step.hidden_act);
        pass.predictions.push_back(step.prediction);
        h = cache.pred.h;
        c = cache.pred.c;
    }
    pass.h_final = h;
    pass.c_final = c;
    return pass;
}

inline ForwardPass forward_sequence(const ModelParams& params, const EmbeddingTable& table,
                                    const SelectionSequence& seq, const ForwardOptions& options = {}) {
    return forward_inputs(params, build_sequence_inputs(seq, table, params.name_projection),
                          options);
}

// ---------------------------------------------------------------------------
// Backward
// ---------------------------------------------------------------------------

namespace detail {

// Standard LSTM backward for one step. dh/dc_in arrive from above and from
// the future; returns the gradients flowing to the previous step and,
// optionally via dx, to the step input. Accumulates weight gradients when
// `grads` is non-null.
inline void lstm_backward(const LstmCellParams& cell, const LstmStepCache& s, const Vec& dh,
                          const Vec& dc_in, LstmCellParams* grads, Vec* dx, Vec& dh_prev,
                          Vec& dc_prev) {
    const Eigen::Index cells = s.h.size();
    Arr d_o = dh.array() * s.tanh_c.array();
    Arr dc = dc_in.array() + dh.array() * s.o.array() * (1.0 - s.tanh_c.array().square());
    Arr d_i = dc * s.g.array();
    Arr d_f = dc * s.c_prev.array();
    Arr d_g = dc * s.i.array();

    Vec dz(4 * cells);
    dz.segment(0, cells) = (d_i * s.i.array() * (1.0 - s.i.array())).matrix();
    dz.segment(cells, cells) = (d_f * s.f.array() * (1.0 - s.f.array())).matrix();
    dz.segment(2 * cells, cells) = (d_g * (1.0 - s.g.array().square())).matrix();
    dz.segment(3 * cells, cells) = (d_o * s.o.array() * (1.0 - s.o.array())).matrix();

    if (grads) {
        grads->w_x.noalias() += dz * s.x.transpose();
        grads->w_h.noalias() += dz * s.h_prev.transpose();
        grads->b.col(0) += dz;
    }
    if (dx) dx->noalias() = cell.w_x.transpose() * dz;
    dh_prev.noalias() = cell.w_h.transpose() * dz;
    dc_prev = (dc * s.f.array()).matrix();
}

}  // namespace detail

struct BackwardOptions {
    bool param_grads = true;
    bool input_grads = false;
};

struct BackwardResult {
    NetTensors grads;             // zero-shaped unless param_grads
    std::vector<Mat> input_grads;  // per trial, n x item_dim; empty unless requested
};

namespace detail {

/// Exact gradients of sum_k dL_dt[k] * t_k over the first `limit` trials of
/// the pass, including the flow through each trial's encoder. Truncated at
/// the pass boundary: nothing propagates into the carried-in state.
inline BackwardResult backward_core(const ModelParams& params, const ForwardPass& pass,
                                    const std::vector<double>& dL_dt, std::size_t limit,
                                    const BackwardOptions& options) {
    const ModelDims& d = params.dims;
    BackwardResult out;
    out.grads = zero_tensors(d);
    LstmCellParams* enc_grads = options.param_grads ? &out.grads.encoder : nullptr;
    LstmCellParams* pred_grads = options.param_grads ? &out.grads.predictor : nullptr;
    if (options.input_grads) out.input_grads.resize(limit);

    Vec dh_carry = Vec::Zero(d.pred_cells);
    Vec dc_carry = Vec::Zero(d.pred_cells);
    Vec dh_prev(d.pred_cells), dc_prev(d.pred_cells);
    Vec de(d.task_dim());
    Vec enc_dh(d.enc_cells), enc_dc(d.enc_cells), enc_dh_prev(d.enc_cells),
        enc_dc_prev(d.enc_cells);

    for (std::size_t k = limit; k-- > 0;) {
        const TrialCache& cache = pass.trials[k];
        double dt = dL_dt[k];

        Vec dh_pred = dh_carry;
        if (dt != 0.0) {
            if (options.param_grads) {
                out.grads.readout_w.row(0) += dt * cache.hidden_act.transpose();
                out.grads.readout_b(0, 0) += dt;
            }
            Vec dhidden = params.net.readout_w.transpose() * dt;
            Vec dpre =
                (dhidden.array() * relu_grad(cache.hidden_pre.array())).matrix();
            if (options.param_grads) {
                out.grads.hidden_w.noalias() += dpre * cache.pred.h.transpose();
                out.grads.hidden_b.col(0) += dpre;
            }
            dh_pred.noalias() += params.net.hidden_w.transpose() * dpre;
        }

        lstm_backward(params.net.predictor, cache.pred, dh_pred, dc_carry, pred_grads, &de,
                      dh_prev, dc_prev);
        dh_carry = dh_prev;
        dc_carry = dc_prev;

        // Through the dropout mask back to the raw task encoding.
        if (cache.mask.size() > 0) de.array() *= cache.mask.array();

        // Encoder: gradient enters at the final hidden state only; the
        // one-hot block is a constant input.
        enc_dh = de.head(d.enc_cells);
        enc_dc.setZero();
        Mat* dfeats = nullptr;
        if (options.input_grads) {
            out.input_grads[k] = Mat::Zero(static_cast<Eigen::Index>(cache.encoder.size()),
                                           d.item_dim);
            dfeats = &out.input_grads[k];
        }
        Vec dx(d.item_dim);
        for (std::size_t j = cache.encoder.size(); j-- > 0;) {
            detail::lstm_backward(params.net.encoder, cache.encoder[j], enc_dh, enc_dc, enc_grads,
                                  options.input_grads ? &dx : nullptr, enc_dh_prev, enc_dc_prev);
            if (options.input_grads) dfeats->row(static_cast<Eigen::Index>(j)) = dx.transpose();
            enc_dh = enc_dh_prev;
            enc_dc = enc_dc_prev;
        }
    }
    return out;
}

}  // namespace detail

/// Gradients of the pass's loss (given per-step dL/dt) for every model
/// parameter. The caches must come from a train- or eval-mode forward over
/// the same window.
inline NetTensors backward_sequence(const ModelParams& params, const ForwardPass& pass,
                                    const std::vector<double>& dL_dt) {
    if (dL_dt.size() != pass.trials.size()) {
        throw ConsistencyError("backward_sequence: " + std::to_string(dL_dt.size()) +
                               " upstream gradients for " + std::to_string(pass.trials.size()) +
                               " cached trials");
    }
    return detail::backward_core(params, pass, dL_dt, pass.trials.size(), BackwardOptions{})
        .grads;
}

/// d prediction[step] / d item features, for every trial up to `step`.
/// Entry [s] is an n_s x item_dim matrix. Eval-mode caches expected.
inline std::vector<Mat> input_gradients(const ModelParams& params, const ForwardPass& pass,
                                        std::size_t step) {
    if (step >= pass.trials.size()) {
        throw ConsistencyError("input_gradients: step out of range");
    }
    std::vector<double> dL_dt(step + 1, 0.0);
    dL_dt[step] = 1.0;
    BackwardOptions options;
    options.param_grads = false;
    options.input_grads = true;
    return std::move(
        detail::backward_core(params, pass, dL_dt, step + 1, options).input_grads);
}

/// dt_i / d(one input coordinate of item `item` at step s). The derivative
/// for s > i is exactly zero by causality; such calls are rejected to catch
/// misuse. Coordinate 0 is the item feature vector's target flag.
inline double input_jacobian(const ModelParams& params, const ForwardPass& pass, std::size_t i,
                             std::size_t s, int item, int coord = 0) {
    if (s > i) {
        throw CausalityError("input_jacobian: step " + std::to_string(s) +
                             " is after prediction step " + std::to_string(i));
    }
    std::vector<Mat> grads = input_gradients(params, pass, i);
    const Mat& m = grads[s];
    if (item < 0 || item >= m.rows() || coord < 0 || coord >= m.cols()) {
        throw ShapeError("input_jacobian: item/coordinate out of range");
    }
    return m(item, coord);
}

// ---------------------------------------------------------------------------
// Checkpoint format
// ---------------------------------------------------------------------------
//
// Binary, little-endian:
//   magic "MENUPRED" (8), format version u32,
//   dims: item, enc_cells, org, pred_cells, hidden (5 x u32),
//   10 named tensor blocks in tensors() order:
//     name (u16 length + bytes), rows u32, cols u32, rows*cols f64,
//   PCA block: k u32, D u32, mean (D f64), components (k*D f64),
//   vocabulary block: count u32, then per token (sorted):
//     token (u16 length + bytes), kEmbeddingDim f64,
//   trailer "END!" (4).

inline constexpr char kCheckpointMagic[8] = {'M', 'E', 'N', 'U', 'P', 'R', 'E', 'D'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

template <typename T>
void write_le(std::ostream& out, T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) {
        for (std::size_t b = 0; b < sizeof(T) / 2; ++b) std::swap(bytes[b], bytes[sizeof(T) - 1 - b]);
    }
    out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T read_le(std::istream& in) {
    unsigned char bytes[sizeof(T)];
    if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) {
        throw CheckpointError("checkpoint truncated");
    }
    if constexpr (std::endian::native == std::endian::big) {
        for (std::size_t b = 0; b < sizeof(T) / 2; ++b) std::swap(bytes[b], bytes[sizeof(T) - 1 - b]);
    }
    T value;
    std::memcpy(&value, bytes, sizeof(T));
    return value;
}

inline void write_string(std::ostream& out, std::string_view s) {
    write_le<std::uint16_t>(out, static_cast<std::uint16_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& in) {
    std::uint16_t len = read_le<std::uint16_t>(in);
    std::string s(len, '\0');
    if (!in.read(s.data(), len)) throw CheckpointError("checkpoint truncated");
    return s;
}

inline void write_tensor(std::ostream& out, std::string_view name, const Mat& m) {
    write_string(out, name);
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(m.rows()));
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(m.cols()));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) write_le<double>(out, m(r, c));
    }
}

inline Mat read_tensor(std::istream& in, std::string_view expected_name) {
    std::string name = read_string(in);
    if (name != expected_name) {
        throw CheckpointError("checkpoint: expected tensor '" + std::string(expected_name) +
                              "', found '" + name + "'");
    }
    std::uint32_t rows = read_le<std::uint32_t>(in);
    std::uint32_t cols = read_le<std::uint32_t>(in);
    Mat m(rows, cols);
    for (std::uint32_t r = 0; r < rows; ++r) {
        for (std::uint32_t c = 0; c < cols; ++c) m(r, c) = read_le<double>(in);
    }
    return m;
}

}  // namespace detail

inline void save_checkpoint(const ModelParams& params, const EmbeddingTable& vocab,
                            std::ostream& out) {
    out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    detail::write_le<std::uint32_t>(out, kCheckpointVersion);
    for (int v : {params.dims.item_dim, params.dims.enc_cells, params.dims.org_dim,
                  params.dims.pred_cells, params.dims.hidden_dim}) {
        detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(v));
    }
    auto names = tensor_names();
    auto ts = tensors(params.net);
    for (std::size_t k = 0; k < ts.size(); ++k) detail::write_tensor(out, names[k], *ts[k]);

    detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(params.name_projection.k));
    detail::write_le<std::uint32_t>(out,
                                    static_cast<std::uint32_t>(params.name_projection.dim()));
    for (Eigen::Index i = 0; i < params.name_projection.mean.size(); ++i) {
        detail::write_le<double>(out, params.name_projection.mean[i]);
    }
    const Mat& comp = params.name_projection.components;
    for (Eigen::Index r = 0; r < comp.rows(); ++r) {
        for (Eigen::Index c = 0; c < comp.cols(); ++c) detail::write_le<double>(out, comp(r, c));
    }

    detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(vocab.vectors.size()));
    for (const auto& [atoken, vec] : vocab.vectors) {  // std::map: sorted, deterministic
        detail::write_string(out, atoken);
        for (int i = 0; i < kEmbeddingDim; ++i) detail::write_le<double>(out, vec[i]);
    }
    out.write("END!", 4);
    if (!out) throw CheckpointError("checkpoint: write failed");
}

struct ModelBundle {
    ModelParams params;
    EmbeddingTable vocab;
};

/// Loads a full checkpoint; nothing is returned on error, so a truncated
/// file never yields a partial model. Pass `expected` to insist on dims.
inline ModelBundle load_checkpoint(std::istream& in, const ModelDims* expected = nullptr) {
    char magic[8];
    if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kCheckpointMagic, 8) != 0) {
        throw CheckpointError("checkpoint: bad magic");
    }
    std::uint32_t version = detail::read_le<std::uint32_t>(in);
    if (version != kCheckpointVersion) {
        throw CheckpointError("checkpoint: unsupported version " + std::to_string(version));
    }
    ModelBundle bundle;
    ModelDims& dims = bundle.params.dims;
    dims.item_dim = static_cast<int>(detail::read_le<std::uint32_t>(in));
    dims.enc_cells = static_cast<int>(detail::read_le<std::uint32_t>(in));
    dims.org_dim = static_cast<int>(detail::read_le<std::uint32_t>(in));
    dims.pred_cells = static_cast<int>(detail::read_le<std::uint32_t>(in));
    dims.hidden_dim = static_cast<int>(detail::read_le<std::uint32_t>(in));
    dims.validate();
    if (expected && !(dims == *expected)) {
        throw CheckpointError("checkpoint dims (" + dims.describe() + ") do not match expected (" +
                              expected->describe() + ")");
    }

    auto names = tensor_names();
    bundle.params.net = zero_tensors(dims);
    auto ts = tensors(bundle.params.net);
    for (std::size_t k = 0; k < ts.size(); ++k) {
        Mat m = detail::read_tensor(in, names[k]);
        if (m.rows() != ts[k]->rows() || m.cols() != ts[k]->cols()) {
            throw CheckpointError("checkpoint: tensor '" + std::string(names[k]) +
                                  "' has the wrong shape for the stored dims");
        }
        *ts[k] = std::move(m);
    }

    std::uint32_t k = detail::read_le<std::uint32_t>(in);
    std::uint32_t d = detail::read_le<std::uint32_t>(in);
    bundle.params.name_projection.k = static_cast<int>(k);
    bundle.params.name_projection.mean = Vec(d);
    for (std::uint32_t i = 0; i < d; ++i) {
        bundle.params.name_projection.mean[i] = detail::read_le<double>(in);
    }
    bundle.params.name_projection.components = Mat(k, d);
    for (std::uint32_t r = 0; r < k; ++r) {
        for (std::uint32_t c = 0; c < d; ++c) {
            bundle.params.name_projection.components(r, c) = detail::read_le<double>(in);
        }
    }

    std::uint32_t vocab_count = detail::read_le<std::uint32_t>(in);
    for (std::uint32_t v = 0; v < vocab_count; ++v) {
        std::string token = detail::read_string(in);
        Vec vec(kEmbeddingDim);
        for (int i = 0; i < kEmbeddingDim; ++i) vec[i] = detail::read_le<double>(in);
        bundle.vocab.vectors[token] = std::move(vec);
    }
    char trailer[4];
    if (!in.read(trailer, 4) || std::memcmp(trailer, "END!", 4) != 0) {
        throw CheckpointError("checkpoint truncated: missing trailer");
    }
    return bundle;
}

}  // namespace menupred
