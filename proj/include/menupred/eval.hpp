#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <tuple>
#include <vector>

#include "menupred/csv.hpp"
#include "menupred/dataset.hpp"
#include "menupred/errors.hpp"
#include "menupred/model.hpp"

namespace menupred {

inline constexpr double kR2MinVariance = 1e-9;

/// Reported R-squared values are fixed at four decimals in every emitted file.
inline double round4(double v) { return std::round(v * 1e4) / 1e4; }

/// Coefficient of determination of `predicted` against `actual`.
inline double r_squared(const std::vector<double>& actual, const std::vector<double>& predicted) {
    if (actual.size() != predicted.size()) {
        throw ShapeError("r_squared: " + std::to_string(actual.size()) + " actual vs " +
                         std::to_string(predicted.size()) + " predicted values");
    }
    if (actual.size() < 2) throw UndefinedR2Error("r_squared: need at least 2 points");
    double mean = 0;
    for (double a : actual) mean += a;
    mean /= static_cast<double>(actual.size());
    double ss_tot = 0, ss_res = 0;
    for (std::size_t i = 0; i < actual.size(); ++i) {
        ss_tot += (actual[i] - mean) * (actual[i] - mean);
        ss_res += (actual[i] - predicted[i]) * (actual[i] - predicted[i]);
    }
    if (ss_tot <= kR2MinVariance) {
        throw UndefinedR2Error("r_squared: actual values have no variance");
    }
    return 1.0 - ss_res / ss_tot;
}

/// Model predictions for each sequence, eval mode, zero initial state.
inline std::vector<std::vector<double>> predict_all(const ModelParams& params,
                                                    const EmbeddingTable& vocab,
                                                    const std::vector<SelectionSequence>& seqs) {
    std::vector<std::vector<double>> out;
    out.reserve(seqs.size());
    std::map<std::string, MenuFeatureBase> bases;
    for (const SelectionSequence& seq : seqs) {
        auto it = bases.find(seq.menu.menu_id);
        if (it == bases.end()) {
            it = bases
                     .emplace(seq.menu.menu_id,
                              menu_feature_base(seq.menu, vocab, params.name_projection))
                     .first;
        }
        std::vector<TrialInput> inputs;
        inputs.reserve(seq.trials.size());
        for (const Trial& t : seq.trials) inputs.push_back(trial_input(it->second, t.target_index));
        out.push_back(forward_inputs(params, inputs).predictions);
    }
    return out;
}

/// The oracle's noise-free times in place of model output; requires every
/// trial to carry one.
inline std::vector<std::vector<double>> noiseless_predictions(
    const std::vector<SelectionSequence>& seqs) {
    std::vector<std::vector<double>> out;
    out.reserve(seqs.size());
    for (const SelectionSequence& seq : seqs) {
        std::vector<double> p;
        p.reserve(seq.trials.size());
        for (const Trial& t : seq.trials) {
            if (!t.noiseless_time) {
                throw ValidationError("sequence for user '" + seq.user_id +
                                      "' has trials without a noiseless time");
            }
            p.push_back(*t.noiseless_time);
        }
        out.push_back(std::move(p));
    }
    return out;
}

namespace detail {

inline void check_prediction_shape(const std::vector<SelectionSequence>& seqs,
                                   const std::vector<std::vector<double>>& predictions) {
    if (seqs.size() != predictions.size()) {
        throw ShapeError("evaluation: " + std::to_string(predictions.size()) +
                         " prediction rows for " + std::to_string(seqs.size()) + " sequences");
    }
    for (std::size_t s = 0; s < seqs.size(); ++s) {
        if (seqs[s].trials.size() != predictions[s].size()) {
            throw ShapeError("evaluation: sequence for user '" + seqs[s].user_id + "' has " +
                             std::to_string(seqs[s].trials.size()) + " trials but " +
                             std::to_string(predictions[s].size()) + " predictions");
        }
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Sequence level
// ---------------------------------------------------------------------------

struct SequenceLevelReport {
    std::optional<double> mean_r2;        // across sequences with usable variance
    std::vector<double> per_sequence_r2;  // aligned with kept sequence order
    std::size_t skipped = 0;              // degenerate-variance sequences
};

inline SequenceLevelReport sequence_level_r2(const std::vector<SelectionSequence>& seqs,
                                             const std::vector<std::vector<double>>& predictions) {
    detail::check_prediction_shape(seqs, predictions);
    SequenceLevelReport report;
    double total = 0;
    for (std::size_t s = 0; s < seqs.size(); ++s) {
        std::vector<double> actual;
        actual.reserve(seqs[s].trials.size());
        for (const Trial& t : seqs[s].trials) actual.push_back(t.observed_time);
        try {
            double r2 = r_squared(actual, predictions[s]);
            report.per_sequence_r2.push_back(r2);
            total += r2;
        } catch (const UndefinedR2Error&) {
            ++report.skipped;
        }
    }
    if (!report.per_sequence_r2.empty()) {
        report.mean_r2 = total / static_cast<double>(report.per_sequence_r2.size());
    }
    return report;
}

// ---------------------------------------------------------------------------
// Grouped levels
// ---------------------------------------------------------------------------

/// One aggregation cell. `target_pos` is 1-based; it is 0 for menu-level
/// rows, where targets are pooled.
struct GroupRow {
    std::string menu_id;
    MenuOrganization org = MenuOrganization::unordered;
    int n = 0;
    int target_pos = 0;
    int block = 0;
    double actual = 0;
    double predicted = 0;
    int users = 0;
};

namespace detail {

struct MeanAcc {
    double actual = 0, predicted = 0;
    int count = 0;
    void add(double a, double p) {
        actual += a;
        predicted += p;
        ++count;
    }
};

/// Group trials by (menu, target?, block): first average within each user,
/// then average the user means, so users with more trials in a cell do not
/// dominate it.
inline std::vector<GroupRow> grouped_rows(const std::vector<SelectionSequence>& seqs,
                                          const std::vector<std::vector<double>>& predictions,
                                          bool split_by_target) {
    using Key = std::tuple<std::string, int, int, int, int>;  // menu_id, org, n, target_pos, block
    std::map<Key, std::map<std::string, MeanAcc>> by_user;
    for (std::size_t s = 0; s < seqs.size(); ++s) {
        const SelectionSequence& seq = seqs[s];
        for (std::size_t k = 0; k < seq.trials.size(); ++k) {
            const Trial& t = seq.trials[k];
            Key key{seq.menu.menu_id, static_cast<int>(seq.menu.organization), seq.menu.n(),
                    split_by_target ? t.target_index + 1 : 0, t.block_index};
            by_user[key][seq.user_id].add(t.observed_time, predictions[s][k]);
        }
    }
    std::vector<GroupRow> rows;
    rows.reserve(by_user.size());
    for (const auto& [key, users] : by_user) {
        GroupRow row;
        row.menu_id = std::get<0>(key);
        row.org = static_cast<MenuOrganization>(std::get<1>(key));
        row.n = std::get<2>(key);
        row.target_pos = std::get<3>(key);
        row.block = std::get<4>(key);
        for (const auto& [user, acc] : users) {
            row.actual += acc.actual / acc.count;
            row.predicted += acc.predicted / acc.count;
            ++row.users;
        }
        row.actual /= row.users;
        row.predicted /= row.users;
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace detail

struct GroupedReport {
    double overall_r2 = 0;
    std::map<MenuOrganization, double> by_org;  // only orgs with enough groups
    std::map<int, double> by_length;
    std::vector<GroupRow> rows;
};

namespace detail {

inline GroupedReport grouped_report(std::vector<GroupRow> rows) {
    GroupedReport report;
    report.rows = std::move(rows);
    std::vector<double> actual, predicted;
    actual.reserve(report.rows.size());
    predicted.reserve(report.rows.size());
    for (const GroupRow& r : report.rows) {
        actual.push_back(r.actual);
        predicted.push_back(r.predicted);
    }
    report.overall_r2 = r_squared(actual, predicted);

    auto subset_r2 = [&report](auto pred) -> std::optional<double> {
        std::vector<double> a, p;
        for (const GroupRow& r : report.rows) {
            if (pred(r)) {
                a.push_back(r.actual);
                p.push_back(r.predicted);
            }
        }
        try {
            return r_squared(a, p);
        } catch (const UndefinedR2Error&) {
            return std::nullopt;
        }
    };
    for (MenuOrganization org : {MenuOrganization::unordered, MenuOrganization::alphabetical,
                                 MenuOrganization::semantic}) {
        if (auto r2 = subset_r2([org](const GroupRow& r) { return r.org == org; })) {
            report.by_org[org] = *r2;
        }
    }
    std::map<int, int> lengths;
    for (const GroupRow& r : report.rows) ++lengths[r.n];
    for (const auto& [n, count] : lengths) {
        if (auto r2 = subset_r2([n = n](const GroupRow& r) { return r.n == n; })) {
            report.by_length[n] = *r2;
        }
    }
    return report;
}

}  // namespace detail

/// Cells are (menu, target position, block); the prediction for a cell is
/// averaged the same way as the observations.
inline GroupedReport target_level_r2(const std::vector<SelectionSequence>& seqs,
                                     const std::vector<std::vector<double>>& predictions) {
    detail::check_prediction_shape(seqs, predictions);
    return detail::grouped_report(detail::grouped_rows(seqs, predictions, true));
}

/// Cells are (menu, block), pooling targets.
inline GroupedReport menu_level_r2(const std::vector<SelectionSequence>& seqs,
                                   const std::vector<std::vector<double>>& predictions) {
    detail::check_prediction_shape(seqs, predictions);
    return detail::grouped_report(detail::grouped_rows(seqs, predictions, false));
}

// ---------------------------------------------------------------------------
// Learning curves
// ---------------------------------------------------------------------------

struct BlockCurveRow {
    int n = 0;
    int block = 0;
    double actual = 0;
    double predicted = 0;
    int trials = 0;
};

/// Mean selection time per (menu length, block), organizations pooled, for
/// observed times and predictions side by side.
inline std::vector<BlockCurveRow> block_curves(const std::vector<SelectionSequence>& seqs,
                                               const std::vector<std::vector<double>>& predictions) {
    detail::check_prediction_shape(seqs, predictions);
    std::map<std::pair<int, int>, BlockCurveRow> cells;
    for (std::size_t s = 0; s < seqs.size(); ++s) {
        for (std::size_t k = 0; k < seqs[s].trials.size(); ++k) {
            const Trial& t = seqs[s].trials[k];
            BlockCurveRow& row = cells[{seqs[s].menu.n(), t.block_index}];
            row.actual += t.observed_time;
            row.predicted += predictions[s][k];
            ++row.trials;
        }
    }
    std::vector<BlockCurveRow> rows;
    rows.reserve(cells.size());
    for (auto& [key, row] : cells) {
        row.n = key.first;
        row.block = key.second;
        row.actual /= row.trials;
        row.predicted /= row.trials;
        rows.push_back(row);
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Memory-effect profile
// ---------------------------------------------------------------------------

struct JacobianProfileRow {
    MenuOrganization org = MenuOrganization::unordered;
    int lag = 0;
    double mean_abs_sensitivity = 0;
    std::int64_t pairs = 0;  // 0 marks an empty cell, mean is then meaningless
};

/// How strongly a prediction reacts to the target flag of an *earlier*
/// occurrence of the same target, by recency. For each trial i and lag l,
/// if trial i-l selected the same item, record |d t_i / d flag(i-l, item)|.
/// Averaged per (organization, lag).
inline std::vector<JacobianProfileRow> jacobian_recency_profile(
    const ModelParams& params, const EmbeddingTable& vocab,
    const std::vector<SelectionSequence>& seqs, int max_lag, std::size_t limit_sequences = 0) {
    if (max_lag < 1) throw DomainError("jacobian_recency_profile: max_lag must be >= 1");
    std::map<std::pair<int, int>, std::pair<double, std::int64_t>> cells;
    std::size_t used = 0;
    std::map<std::string, MenuFeatureBase> bases;
    for (const SelectionSequence& seq : seqs) {
        if (limit_sequences > 0 && used >= limit_sequences) break;
        ++used;
        auto it = bases.find(seq.menu.menu_id);
        if (it == bases.end()) {
            it = bases
                     .emplace(seq.menu.menu_id,
                              menu_feature_base(seq.menu, vocab, params.name_projection))
                     .first;
        }
        std::vector<TrialInput> inputs;
        inputs.reserve(seq.trials.size());
        for (const Trial& t : seq.trials) inputs.push_back(trial_input(it->second, t.target_index));
        ForwardPass pass = forward_inputs(params, inputs);

        int org = static_cast<int>(seq.menu.organization);
        for (std::size_t i = 0; i < seq.trials.size(); ++i) {
            std::vector<Mat> grads = input_gradients(params, pass, i);
            int target_i = seq.trials[i].target_index;
            for (int lag = 1; lag <= max_lag && static_cast<std::size_t>(lag) <= i; ++lag) {
                std::size_t s = i - static_cast<std::size_t>(lag);
                if (seq.trials[s].target_index != target_i) continue;
                auto& cell = cells[{org, lag}];
                cell.first += std::abs(grads[s](target_i, 0));
                ++cell.second;
            }
        }
    }
    std::vector<JacobianProfileRow> rows;
    for (MenuOrganization org : {MenuOrganization::unordered, MenuOrganization::alphabetical,
                                 MenuOrganization::semantic}) {
        for (int lag = 1; lag <= max_lag; ++lag) {
            JacobianProfileRow row;
            row.org = org;
            row.lag = lag;
            auto it = cells.find({static_cast<int>(org), lag});
            if (it != cells.end() && it->second.second > 0) {
                row.mean_abs_sensitivity = it->second.first / static_cast<double>(it->second.second);
                row.pairs = it->second.second;
            }
            rows.push_back(row);
        }
    }
    return rows;
}

/// Spearman rank correlation; average ranks on ties.
inline double spearman_rank_correlation(const std::vector<double>& x,
                                        const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) {
        throw DomainError("spearman: need two equally sized samples of >= 2 values");
    }
    auto ranks = [](const std::vector<double>& v) {
        std::vector<std::size_t> order(v.size());
        for (std::size_t i = 0; i < v.size(); ++i) order[i] = i;
        std::sort(order.begin(), order.end(),
                  [&v](std::size_t a, std::size_t b) { return v[a] < v[b]; });
        std::vector<double> r(v.size());
        std::size_t i = 0;
        while (i < order.size()) {
            std::size_t j = i;
            while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
            double rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
            for (std::size_t k = i; k <= j; ++k) r[order[k]] = rank;
            i = j + 1;
        }
        return r;
    };
    std::vector<double> rx = ranks(x), ry = ranks(y);
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < rx.size(); ++i) {
        mx += rx[i];
        my += ry[i];
    }
    mx /= static_cast<double>(rx.size());
    my /= static_cast<double>(ry.size());
    double num = 0, dx = 0, dy = 0;
    for (std::size_t i = 0; i < rx.size(); ++i) {
        num += (rx[i] - mx) * (ry[i] - my);
        dx += (rx[i] - mx) * (rx[i] - mx);
        dy += (ry[i] - my) * (ry[i] - my);
    }
    if (dx <= 0 || dy <= 0) throw DomainError("spearman: a sample is constant");
    return num / std::sqrt(dx * dy);
}

// ---------------------------------------------------------------------------
// Report writers
// ---------------------------------------------------------------------------

inline void write_group_csv(const std::vector<GroupRow>& rows, std::ostream& out) {
    out << "menu,org,n,target_pos,block,users,actual_mean_s,predicted_mean_s\n";
    for (const GroupRow& r : rows) {
        out << csv_escape(r.menu_id) << ',' << org_letter(r.org) << ',' << r.n << ','
            << r.target_pos << ',' << r.block << ',' << r.users << ',' << fmt_double(r.actual)
            << ',' << fmt_double(r.predicted) << '\n';
    }
}

inline void write_block_curve_csv(const std::vector<BlockCurveRow>& rows, std::ostream& out) {
    out << "n,block,trials,actual_mean_s,predicted_mean_s\n";
    for (const BlockCurveRow& r : rows) {
        out << r.n << ',' << r.block << ',' << r.trials << ',' << fmt_double(r.actual) << ','
            << fmt_double(r.predicted) << '\n';
    }
}

inline void write_jacobian_profile_csv(const std::vector<JacobianProfileRow>& rows,
                                       std::ostream& out) {
    out << "org,lag,pairs,mean_abs_sensitivity\n";
    for (const JacobianProfileRow& r : rows) {
        out << org_letter(r.org) << ',' << r.lag << ',' << r.pairs << ','
            << fmt_double(r.mean_abs_sensitivity) << '\n';
    }
}

}  // namespace menupred
