#pragma once

#include <chrono>
#include <functional>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "menupred/dataset.hpp"
#include "menupred/embedding.hpp"
#include "menupred/errors.hpp"
#include "menupred/eval.hpp"
#include "menupred/features.hpp"
#include "menupred/model.hpp"
#include "menupred/optim.hpp"
#include "menupred/rng.hpp"

namespace menupred {

struct TrainConfig {
    ModelDims dims;
    double lr = 0.01;
    double clip = 1.0;  // global gradient norm ceiling
    int unroll = 40;    // trials per truncated-backprop window
    double dropout = 0.10;
    std::int64_t iterations = 200000;  // one window update per iteration
    std::uint64_t seed = 0;
    std::int64_t checkpoint_every = 5000;  // held-out eval cadence; 0 = end only
    double min_variance = 1e-9;

    void validate() const {
        dims.validate();
        if (!(lr > 0.0)) throw DomainError("train config: lr must be > 0");
        if (!(clip > 0.0)) throw DomainError("train config: clip must be > 0");
        if (unroll < 1) throw DomainError("train config: unroll must be >= 1");
        if (!(dropout >= 0.0 && dropout < 1.0)) {
            throw DomainError("train config: dropout must be in [0, 1)");
        }
        if (iterations < 0) throw DomainError("train config: iterations must be >= 0");
        if (checkpoint_every < 0) throw DomainError("train config: checkpoint_every must be >= 0");
        if (!(min_variance > 0.0)) throw DomainError("train config: min_variance must be > 0");
    }
};

/// Squared error scaled by the sequence's own spread: sum (t - y)^2 / c_s,
/// with c_s = sum (y - ybar)^2 over the *whole* sequence. 1 - loss over a
/// full sequence is exactly its R^2.
inline double sequence_loss(const std::vector<double>& actual,
                            const std::vector<double>& predicted, double variance_sum,
                            double min_variance = 1e-9) {
    if (actual.size() != predicted.size()) {
        throw ShapeError("sequence_loss: " + std::to_string(actual.size()) + " actual vs " +
                         std::to_string(predicted.size()) + " predicted values");
    }
    if (!(variance_sum > min_variance)) {
        throw DegenerateSequenceError("sequence_loss: sequence variance " +
                                      std::to_string(variance_sum) + " is at or below " +
                                      std::to_string(min_variance));
    }
    double ss_res = 0;
    for (std::size_t i = 0; i < actual.size(); ++i) {
        ss_res += (predicted[i] - actual[i]) * (predicted[i] - actual[i]);
    }
    return ss_res / variance_sum;
}

struct WindowStepResult {
    double loss = 0;       // this window's contribution to the sequence loss
    double grad_norm = 0;  // global norm before clipping
    bool clipped = false;
    Vec h_next, c_next;  // carried state, from the forward under pre-update weights
};

/// One truncated-backprop update: forward the window in train mode from the
/// carried state, backprop within the window only, clip, Adagrad step.
/// The state handed onward comes from this pre-update forward.
inline WindowStepResult train_window(ModelParams& params, AdagradState& opt,
                                     const std::vector<TrialInput>& inputs,
                                     const std::vector<double>& targets, double variance_sum,
                                     const TrainConfig& cfg, RngStream& dropout_rng,
                                     const Vec* h0 = nullptr, const Vec* c0 = nullptr) {
    if (inputs.size() != targets.size() || inputs.empty()) {
        throw ShapeError("train_window: inputs and targets must align and be non-empty");
    }
    if (!(variance_sum > cfg.min_variance)) {
        throw DegenerateSequenceError("train_window: degenerate sequence variance");
    }
    ForwardOptions fwd;
    fwd.train = true;
    fwd.dropout = cfg.dropout;
    fwd.rng = &dropout_rng;
    fwd.h0 = h0;
    fwd.c0 = c0;
    ForwardPass pass = forward_inputs(params, inputs, fwd);

    WindowStepResult out;
    std::vector<double> dL_dt(targets.size());
    for (std::size_t i = 0; i < targets.size(); ++i) {
        double diff = pass.predictions[i] - targets[i];
        out.loss += diff * diff / variance_sum;
        dL_dt[i] = 2.0 * diff / variance_sum;
    }
    NetTensors grads = backward_sequence(params, pass, dL_dt);
    std::vector<Mat*> gptrs = tensors(grads);
    out.grad_norm = global_norm_clip(gptrs, cfg.clip);
    out.clipped = out.grad_norm > cfg.clip;

    std::vector<Mat*> pptrs = tensors(params.net);
    std::vector<const Mat*> gconst(gptrs.begin(), gptrs.end());
    adagrad_update(pptrs, gconst, opt, cfg.lr);

    out.h_next = std::move(pass.h_final);
    out.c_next = std::move(pass.c_final);
    return out;
}

struct TrainLogRow {
    std::int64_t iteration = 0;
    double mean_window_loss = 0;  // over windows since the previous row
    std::optional<double> heldout_r2;
    double seconds = 0;
};

inline void write_train_log_csv(const std::vector<TrainLogRow>& rows, std::ostream& out) {
    out << "iteration,mean_window_loss,heldout_seq_r2,seconds\n";
    for (const TrainLogRow& r : rows) {
        out << r.iteration << ',' << fmt_double(r.mean_window_loss) << ',';
        if (r.heldout_r2) out << fmt_fixed(*r.heldout_r2, 4);
        out << ',' << fmt_fixed(r.seconds, 3) << '\n';
    }
}

struct TrainResult {
    ModelParams params;
    EmbeddingTable vocab;  // embedding rows for every token the menus use
    std::vector<TrainLogRow> log;
    std::size_t degenerate_skipped = 0;
    std::int64_t clip_events = 0;
    std::int64_t iterations_run = 0;
};

/// Periodic snapshot hook, called at every checkpoint_every boundary and
/// once at the end.
using CheckpointHook = std::function<void(const ModelParams&, const EmbeddingTable&, std::int64_t)>;

/// End-to-end training. Sequences are sampled uniformly (one at a time) and
/// consumed window by window in order; every window is one iteration. The
/// name projection is fit on the training menus and frozen. Deterministic
/// for a fixed config and input order.
inline TrainResult train(const std::vector<SelectionSequence>& train_seqs,
                         const std::vector<SelectionSequence>& heldout,
                         const EmbeddingTable& embeddings, const TrainConfig& cfg,
                         std::ostream* progress = nullptr,
                         const CheckpointHook& on_checkpoint = {}) {
    cfg.validate();

    struct Prepared {
        std::vector<TrialInput> inputs;
        std::vector<double> targets;
        double variance_sum = 0;
    };
    TrainResult result;

    std::vector<const SelectionSequence*> usable;
    for (const SelectionSequence& seq : train_seqs) {
        seq.validate();
        SequenceStats stats = sequence_stats(seq);
        if (stats.length < 2 || !(stats.variance_sum > cfg.min_variance)) {
            ++result.degenerate_skipped;
            if (progress) {
                *progress << "warning: skipping degenerate sequence (user '" << seq.user_id
                          << "', menu '" << seq.menu.menu_id << "')\n";
            }
            continue;
        }
        usable.push_back(&seq);
    }
    if (usable.empty()) {
        throw TrainingError("train: no sequence has usable time variance");
    }

    std::vector<std::string> names;
    {
        std::set<std::string> seen_menus, seen_names;
        for (const SelectionSequence* seq : usable) {
            if (!seen_menus.insert(seq->menu.menu_id).second) continue;
            for (const std::string& item : seq->menu.items) {
                if (seen_names.insert(item).second) names.push_back(item);
            }
        }
    }
    PcaProjection proj = fit_name_projection(names, embeddings);

    for (const SelectionSequence& seq : heldout) seq.validate();
    for (const std::vector<SelectionSequence>* group : {&train_seqs, &heldout}) {
        for (const SelectionSequence& seq : *group) {
            for (const std::string& item : seq.menu.items) {
                for (const std::string& token : tokenize(normalize_token(item))) {
                    if (const Vec* v = embeddings.find(token)) result.vocab.vectors[token] = *v;
                }
            }
        }
    }

    result.params = init_params(cfg.dims, cfg.seed);
    result.params.name_projection = std::move(proj);

    std::map<std::string, MenuFeatureBase> bases;
    std::vector<Prepared> prepared(usable.size());
    for (std::size_t s = 0; s < usable.size(); ++s) {
        const SelectionSequence& seq = *usable[s];
        auto it = bases.find(seq.menu.menu_id);
        if (it == bases.end()) {
            it = bases
                     .emplace(seq.menu.menu_id,
                              menu_feature_base(seq.menu, result.vocab,
                                                result.params.name_projection))
                     .first;
        }
        Prepared& p = prepared[s];
        p.inputs.reserve(seq.trials.size());
        p.targets.reserve(seq.trials.size());
        for (const Trial& t : seq.trials) {
            p.inputs.push_back(trial_input(it->second, t.target_index));
            p.targets.push_back(t.observed_time);
        }
        p.variance_sum = sequence_stats(seq).variance_sum;
    }

    AdagradState opt = AdagradState::zeros_like(tensors(result.params.net));
    RngStream sample_rng(cfg.seed, fnv1a64("sample"));
    RngStream dropout_rng(cfg.seed, fnv1a64("dropout"));

    auto start = std::chrono::steady_clock::now();
    auto elapsed = [&start] {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    };

    double loss_acc = 0;
    std::int64_t loss_count = 0;
    auto emit_row = [&](std::int64_t iteration) {
        TrainLogRow row;
        row.iteration = iteration;
        row.mean_window_loss = loss_count > 0 ? loss_acc / static_cast<double>(loss_count) : 0.0;
        if (!heldout.empty()) {
            row.heldout_r2 =
                sequence_level_r2(heldout, predict_all(result.params, result.vocab, heldout))
                    .mean_r2;
        }
        row.seconds = elapsed();
        loss_acc = 0;
        loss_count = 0;
        if (progress) {
            *progress << "iter " << row.iteration << "  loss " << fmt_double(row.mean_window_loss);
            if (row.heldout_r2) *progress << "  heldout_r2 " << fmt_fixed(*row.heldout_r2, 4);
            *progress << "  " << fmt_fixed(row.seconds, 1) << "s\n";
        }
        result.log.push_back(std::move(row));
        if (on_checkpoint) on_checkpoint(result.params, result.vocab, iteration);
    };

    std::int64_t iter = 0;
    while (iter < cfg.iterations) {
        const Prepared& p = prepared[sample_rng.below(prepared.size())];
        Vec h, c;
        const Vec* h0 = nullptr;
        const Vec* c0 = nullptr;
        std::size_t offset = 0;
        while (offset < p.inputs.size() && iter < cfg.iterations) {
            std::size_t take =
                std::min<std::size_t>(static_cast<std::size_t>(cfg.unroll),
                                      p.inputs.size() - offset);
            std::vector<TrialInput> win_inputs(p.inputs.begin() + static_cast<long>(offset),
                                               p.inputs.begin() +
                                                   static_cast<long>(offset + take));
            std::vector<double> win_targets(p.targets.begin() + static_cast<long>(offset),
                                            p.targets.begin() + static_cast<long>(offset + take));
            WindowStepResult step = train_window(result.params, opt, win_inputs, win_targets,
                                                 p.variance_sum, cfg, dropout_rng, h0, c0);
            if (step.clipped) ++result.clip_events;
            loss_acc += step.loss;
            ++loss_count;
            h = std::move(step.h_next);
            c = std::move(step.c_next);
            h0 = &h;
            c0 = &c;
            offset += take;
            ++iter;
            if (cfg.checkpoint_every > 0 && iter % cfg.checkpoint_every == 0 &&
                iter < cfg.iterations) {
                emit_row(iter);
            }
        }
    }
    result.iterations_run = iter;
    emit_row(iter);
    return result;
}

}  // namespace menupred
