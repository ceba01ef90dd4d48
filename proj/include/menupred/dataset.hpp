#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "menupred/csv.hpp"
#include "menupred/errors.hpp"
#include "menupred/features.hpp"
#include "menupred/rng.hpp"

namespace menupred {

inline constexpr int kDatasetSchemaVersion = 1;
inline constexpr int kMaxMenuItems = 64;  // bounds the encoder unroll length

struct MenuSpec {
    std::string menu_id;
    MenuOrganization organization = MenuOrganization::unordered;
    std::vector<std::string> items;  // order fixed for the life of the menu

    int n() const { return static_cast<int>(items.size()); }

    void validate() const {
        if (items.empty() || items.size() > kMaxMenuItems) {
            throw ValidationError("menu '" + menu_id + "': item count " +
                                  std::to_string(items.size()) + " outside 1.." +
                                  std::to_string(kMaxMenuItems));
        }
        std::set<std::string> seen;
        for (const std::string& item : items) {
            if (!seen.insert(item).second) {
                throw ValidationError("menu '" + menu_id + "': duplicate item '" + item + "'");
            }
        }
    }
};

struct Trial {
    int target_index = 0;       // 0-based position in menu items
    double observed_time = 0;   // seconds
    int block_index = 0;        // 1-based block
    std::optional<double> noiseless_time;  // present only for oracle-generated data
};

struct SelectionSequence {
    std::string user_id;
    MenuSpec menu;
    std::vector<Trial> trials;

    void validate() const {
        menu.validate();
        if (trials.empty()) {
            throw ValidationError("sequence for user '" + user_id + "': no trials");
        }
        for (std::size_t i = 0; i < trials.size(); ++i) {
            const Trial& t = trials[i];
            if (t.target_index < 0 || t.target_index >= menu.n()) {
                throw ValidationError("sequence for user '" + user_id + "' trial " +
                                      std::to_string(i) + ": field target = " +
                                      std::to_string(t.target_index) +
                                      " out of range for n = " + std::to_string(menu.n()));
            }
            if (!(t.observed_time > 0.0) || !std::isfinite(t.observed_time)) {
                throw ValidationError("sequence for user '" + user_id + "' trial " +
                                      std::to_string(i) + ": field time_s must be finite and > 0");
            }
            if (t.block_index < 0) {
                throw ValidationError("sequence for user '" + user_id + "' trial " +
                                      std::to_string(i) + ": field block must be >= 0");
            }
        }
    }
};

struct SequenceStats {
    double mean_time = 0;     // ybar
    double variance_sum = 0;  // c_s = sum (y_i - ybar)^2
    std::size_t length = 0;
};

inline SequenceStats sequence_stats(const SelectionSequence& seq) {
    if (seq.trials.empty()) throw ValidationError("sequence_stats: empty sequence");
    SequenceStats s;
    s.length = seq.trials.size();
    double sum = 0.0;
    for (const Trial& t : seq.trials) sum += t.observed_time;
    s.mean_time = sum / static_cast<double>(s.length);
    for (const Trial& t : seq.trials) {
        double d = t.observed_time - s.mean_time;
        s.variance_sum += d * d;
    }
    return s;
}

namespace detail {

inline nlohmann::json sequence_to_json(const SelectionSequence& seq) {
    nlohmann::json menu{{"menu_id", seq.menu.menu_id},
                        {"organization", org_name(seq.menu.organization)},
                        {"items", seq.menu.items}};
    nlohmann::json trials = nlohmann::json::array();
    for (const Trial& t : seq.trials) {
        nlohmann::json jt{{"block", t.block_index},
                          {"target", t.target_index},
                          {"time_s", t.observed_time}};
        if (t.noiseless_time) jt["noiseless_s"] = *t.noiseless_time;
        trials.push_back(std::move(jt));
    }
    return nlohmann::json{{"schema_version", kDatasetSchemaVersion},
                          {"user_id", seq.user_id},
                          {"menu", std::move(menu)},
                          {"trials", std::move(trials)}};
}

inline void warn_unknown_fields(const nlohmann::json& obj,
                                const std::set<std::string>& known, std::size_t record,
                                const char* where, std::ostream* warnings) {
    if (!warnings) return;
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        if (!known.count(it.key())) {
            *warnings << "warning: record " << record << ": ignoring unknown " << where
                      << " field '" << it.key() << "'\n";
        }
    }
}

template <typename T>
T require_field(const nlohmann::json& obj, const char* field, std::size_t record) {
    auto it = obj.find(field);
    if (it == obj.end()) {
        throw ValidationError("record " + std::to_string(record) + ": missing field '" + field +
                              "'");
    }
    try {
        return it->get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ValidationError("record " + std::to_string(record) + ": field '" + field +
                              "' has the wrong type");
    }
}

}  // namespace detail

/// One sequence per line, canonical JSON. write(read(x)) is byte-identical:
/// object keys are emitted sorted and doubles use shortest round-trip form.
inline void write_sequences(const std::vector<SelectionSequence>& seqs, std::ostream& out) {
    for (const SelectionSequence& seq : seqs) {
        seq.validate();
        out << detail::sequence_to_json(seq).dump() << '\n';
    }
}

inline std::vector<SelectionSequence> read_sequences(std::istream& in,
                                                     std::ostream* warnings = nullptr) {
    std::vector<SelectionSequence> seqs;
    std::string line;
    std::size_t record = 0;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        ++record;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError("record " + std::to_string(record) + ": " + e.what());
        }
        int version = detail::require_field<int>(j, "schema_version", record);
        if (version != kDatasetSchemaVersion) {
            throw ValidationError("record " + std::to_string(record) +
                                  ": unsupported schema_version " + std::to_string(version));
        }
        detail::warn_unknown_fields(j, {"schema_version", "user_id", "menu", "trials"}, record,
                                    "record", warnings);

        SelectionSequence seq;
        seq.user_id = detail::require_field<std::string>(j, "user_id", record);

        nlohmann::json jm = detail::require_field<nlohmann::json>(j, "menu", record);
        detail::warn_unknown_fields(jm, {"menu_id", "organization", "items"}, record, "menu",
                                    warnings);
        seq.menu.menu_id = detail::require_field<std::string>(jm, "menu_id", record);
        seq.menu.organization =
            parse_organization(detail::require_field<std::string>(jm, "organization", record));
        seq.menu.items = detail::require_field<std::vector<std::string>>(jm, "items", record);

        nlohmann::json jts = detail::require_field<nlohmann::json>(j, "trials", record);
        if (!jts.is_array()) {
            throw ValidationError("record " + std::to_string(record) +
                                  ": field 'trials' must be an array");
        }
        for (const nlohmann::json& jt : jts) {
            detail::warn_unknown_fields(jt, {"block", "target", "time_s", "noiseless_s"}, record,
                                        "trial", warnings);
            Trial t;
            t.block_index = detail::require_field<int>(jt, "block", record);
            t.target_index = detail::require_field<int>(jt, "target", record);
            t.observed_time = detail::require_field<double>(jt, "time_s", record);
            if (jt.contains("noiseless_s")) t.noiseless_time = jt["noiseless_s"].get<double>();
            seq.trials.push_back(t);
        }
        try {
            seq.validate();
        } catch (const ValidationError& e) {
            throw ValidationError("record " + std::to_string(record) + ": " + e.what());
        }
        seqs.push_back(std::move(seq));
    }
    return seqs;
}

/// Partition at the user level: all sequences of a user land on one side.
/// |train users| = round(train_fraction * users).
inline std::pair<std::vector<SelectionSequence>, std::vector<SelectionSequence>> split_by_user(
    const std::vector<SelectionSequence>& seqs, double train_fraction, std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw SplitError("split_by_user: train_fraction must be in (0, 1)");
    }
    std::vector<std::string> users;
    std::set<std::string> seen;
    for (const SelectionSequence& s : seqs) {
        if (seen.insert(s.user_id).second) users.push_back(s.user_id);
    }
    if (users.size() < 2) throw SplitError("split_by_user: need at least 2 users");

    RngStream rng(seed, fnv1a64("split"));
    rng.shuffle(users);
    std::size_t n_train =
        static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(users.size())));
    if (n_train == 0 || n_train == users.size()) {
        throw SplitError("split_by_user: fraction leaves one side empty for " +
                         std::to_string(users.size()) + " users");
    }
    std::set<std::string> train_users(users.begin(), users.begin() + static_cast<long>(n_train));

    std::pair<std::vector<SelectionSequence>, std::vector<SelectionSequence>> out;
    for (const SelectionSequence& s : seqs) {
        (train_users.count(s.user_id) ? out.first : out.second).push_back(s);
    }
    return out;
}

/// Flat per-trial CSV for spreadsheet inspection. `target` is the 0-based
/// item index, as stored in the dataset format.
inline void export_trials_csv(const std::vector<SelectionSequence>& seqs, std::ostream& out) {
    out << "user,menu,org,n,block,target,time_s\n";
    for (const SelectionSequence& seq : seqs) {
        for (const Trial& t : seq.trials) {
            out << csv_escape(seq.user_id) << ',' << csv_escape(seq.menu.menu_id) << ','
                << org_letter(seq.menu.organization) << ',' << seq.menu.n() << ','
                << t.block_index << ',' << t.target_index << ',' << fmt_double(t.observed_time)
                << '\n';
        }
    }
}

}  // namespace menupred
