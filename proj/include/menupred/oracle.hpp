#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "menupred/dataset.hpp"
#include "menupred/errors.hpp"
#include "menupred/features.hpp"
#include "menupred/rng.hpp"

namespace menupred {

/// Constants of the synthetic analytical user. Selection time blends Fitts
/// pointing, organization-dependent visual search, and a recency-weighted
/// spatial-memory recall path; defaults give 0.4-3 s selections with a
/// visible learning curve and forgetting.
struct OracleParams {
    double a_f = 0.15;         // Fitts intercept, s
    double b_f = 0.12;         // Fitts slope, s/bit
    double c_u = 0.25;         // unordered linear scan, s/item
    double a_h = 0.10;         // alphabetical decision intercept, s
    double b_h = 0.15;         // alphabetical decision slope, s/bit
    double sem_factor = 0.6;   // semantic search relative to unordered
    double rho = 0.92;         // per-trial memory decay
    double kappa = 1.0;        // activation half-saturation
    double t_recall = 0.2;     // recall-path search replacement, s
    double sigma = 0.15;       // lognormal noise scale
    double item_height = 1.0;  // layout units

    void validate() const {
        auto positive = [](double v, const char* name) {
            if (!(v > 0.0)) throw DomainError(std::string("oracle params: ") + name + " must be > 0");
        };
        positive(a_f, "a_f");
        positive(b_f, "b_f");
        positive(c_u, "c_u");
        positive(a_h, "a_h");
        positive(b_h, "b_h");
        positive(sem_factor, "sem_factor");
        positive(kappa, "kappa");
        positive(t_recall, "t_recall");
        positive(item_height, "item_height");
        if (!(rho > 0.0 && rho < 1.0)) throw DomainError("oracle params: rho must be in (0, 1)");
        if (sigma < 0.0) throw DomainError("oracle params: sigma must be >= 0");
    }
};

/// Per-item activation with lazy exponential decay. The stored value is
/// valid at `last_update_trial`; queries decay it by rho per elapsed trial.
class UserMemory {
   public:
    UserMemory(int n_items, double rho) : rho_(rho), activation_(n_items, 0.0),
                                          last_update_(n_items, 0) {}

    /// A = sum over past selections s of item of rho^(current_trial - s).
    double activation(int item, int current_trial) const {
        int elapsed = current_trial - last_update_[item];
        if (elapsed < 0) throw DomainError("UserMemory: query before last update");
        return activation_[item] * std::pow(rho_, elapsed);
    }

    void record_selection(int item, int trial) {
        activation_[item] = activation(item, trial) + 1.0;
        last_update_[item] = trial;
    }

   private:
    double rho_;
    std::vector<double> activation_;
    std::vector<int> last_update_;
};

/// e = A / (A + kappa), in [0, 1).
inline double expertise(const UserMemory& memory, int item, int current_trial,
                        const OracleParams& p) {
    double a = memory.activation(item, current_trial);
    return a / (a + p.kappa);
}

/// a_f + b_f * log2(position * item_height / item_height + 1), 1-based
/// position. With unit target width the index ratio reduces to position.
inline double fitts_time(int position, const OracleParams& p) {
    if (position < 1) throw DomainError("fitts_time: position must be >= 1");
    double ratio = static_cast<double>(position) * p.item_height / p.item_height;
    return p.a_f + p.b_f * std::log2(ratio + 1.0);
}

inline double search_time(MenuOrganization org, int n, const OracleParams& p) {
    if (n < 1) throw DomainError("search_time: n must be >= 1");
    double linear_scan = p.c_u * (static_cast<double>(n) + 1.0) / 2.0;
    switch (org) {
        case MenuOrganization::unordered: return linear_scan;
        case MenuOrganization::alphabetical: return p.a_h + p.b_h * std::log2(n + 1.0);
        case MenuOrganization::semantic: return p.sem_factor * linear_scan;
    }
    throw DomainError("search_time: unknown organization");
}

struct TrialTimes {
    double noiseless = 0;
    double observed = 0;
};

/// Novice/expert blend: the expert path replaces visual search with a
/// short recall, the novice path pays full search. Multiplicative lognormal
/// noise on top. Increments the target's activation after the trial.
inline TrialTimes trial_time(UserMemory& memory, int target_position, MenuOrganization org,
                             int n, const OracleParams& p, RngStream& rng, int current_trial) {
    if (target_position < 1 || target_position > n) {
        throw DomainError("trial_time: target position out of range");
    }
    int item = target_position - 1;
    double e = expertise(memory, item, current_trial, p);
    double fitts = fitts_time(target_position, p);
    double search = search_time(org, n, p);
    TrialTimes t;
    t.noiseless = e * (p.t_recall + fitts) + (1.0 - e) * (search + fitts);
    t.observed = t.noiseless * std::exp(p.sigma * rng.normal());
    memory.record_selection(item, current_trial);
    return t;
}

/// One menu configuration of the replicated experiment: `blocks` passes in
/// which every item is the target exactly once, order randomized per block.
struct ExperimentDesign {
    int n = 8;
    MenuOrganization organization = MenuOrganization::unordered;
    int blocks = 12;
    int users = 1;
    std::uint64_t seed = 0;
    OracleParams params;

    void validate() const {
        if (n < 1 || n > kMaxMenuItems) {
            throw DomainError("design: n must be in 1.." + std::to_string(kMaxMenuItems));
        }
        if (blocks < 1) throw DomainError("design: blocks must be >= 1");
        if (users < 1) throw DomainError("design: users must be >= 1");
        params.validate();
    }
};

namespace pool {

// Built-in item name pool: 8 semantic categories x 8 one-word names.
inline const std::array<std::array<const char*, 8>, 8>& categories() {
    static const std::array<std::array<const char*, 8>, 8> cats = {{
        {"apple", "banana", "cherry", "grape", "mango", "peach", "plum", "melon"},
        {"badger", "cat", "dog", "ferret", "horse", "otter", "rabbit", "wolf"},
        {"amber", "blue", "crimson", "green", "indigo", "magenta", "red", "violet"},
        {"chisel", "drill", "hammer", "pliers", "saw", "screwdriver", "wrench", "anvil"},
        {"brazil", "canada", "denmark", "france", "greece", "japan", "norway", "peru"},
        {"banjo", "cello", "drum", "flute", "guitar", "oboe", "piano", "violin"},
        {"bike", "boat", "bus", "car", "scooter", "tram", "truck", "van"},
        {"cobalt", "copper", "gold", "iron", "nickel", "silver", "tin", "zinc"},
    }};
    return cats;
}

inline std::vector<std::string> all_names() {
    std::vector<std::string> names;
    for (const auto& cat : categories()) {
        for (const char* name : cat) names.emplace_back(name);
    }
    return names;
}

}  // namespace pool

namespace detail {

inline std::string menu_hex_id(MenuOrganization org, int n, std::uint64_t seed) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%c%d-%08llx", org_letter(org), n,
                  static_cast<unsigned long long>(fnv1a64(std::to_string(seed)) & 0xffffffffull));
    return buf;
}

inline std::vector<std::string> sample_names(const std::vector<std::string>& from, int count,
                                             RngStream& rng) {
    std::vector<std::string> shuffled = from;
    rng.shuffle(shuffled);
    shuffled.resize(static_cast<std::size_t>(count));
    return shuffled;
}

}  // namespace detail

/// The canonical menu of a design: items drawn from the built-in pool and
/// arranged per the organization. Derived from design.seed only, so every
/// user of the design sees the same fixed menu.
inline MenuSpec make_menu(const ExperimentDesign& design) {
    design.validate();
    RngStream rng(design.seed,
                  fnv1a64("menu:" + std::string(1, org_letter(design.organization)) +
                          std::to_string(design.n)));
    MenuSpec menu;
    menu.organization = design.organization;
    menu.menu_id = detail::menu_hex_id(design.organization, design.n, design.seed);

    const int n = design.n;
    if (design.organization == MenuOrganization::semantic) {
        // Near-equal category blocks of about 4 items, in random order.
        const auto& cats = pool::categories();
        int groups = std::clamp((n + 3) / 4, (n + 7) / 8, static_cast<int>(cats.size()));
        std::vector<int> cat_ids(cats.size());
        for (std::size_t i = 0; i < cats.size(); ++i) cat_ids[i] = static_cast<int>(i);
        rng.shuffle(cat_ids);
        cat_ids.resize(static_cast<std::size_t>(groups));
        for (int g = 0; g < groups; ++g) {
            int quota = (n + groups - 1 - g) / groups;  // sizes differ by at most one
            std::vector<std::string> members;
            for (const char* name : cats[static_cast<std::size_t>(cat_ids[g])]) {
                members.emplace_back(name);
            }
            for (const std::string& name : detail::sample_names(members, quota, rng)) {
                menu.items.push_back(name);
            }
        }
    } else {
        menu.items = detail::sample_names(pool::all_names(), n, rng);
        if (design.organization == MenuOrganization::alphabetical) {
            std::sort(menu.items.begin(), menu.items.end());
        }
    }
    menu.validate();
    return menu;
}

/// blocks x n trials for one user on the design's canonical menu. Within
/// each block a fresh random permutation of targets; noiseless times kept
/// alongside observations. Deterministic per (design, user_seed).
inline SelectionSequence generate_user_sequence(const ExperimentDesign& design,
                                                std::uint64_t user_seed,
                                                const std::string& user_id = "u0") {
    design.validate();
    SelectionSequence seq;
    seq.user_id = user_id;
    seq.menu = make_menu(design);

    RngStream rng(design.seed, user_seed);
    UserMemory memory(design.n, design.params.rho);
    std::vector<int> targets(static_cast<std::size_t>(design.n));
    int trial_counter = 0;
    for (int block = 1; block <= design.blocks; ++block) {
        for (int i = 0; i < design.n; ++i) targets[static_cast<std::size_t>(i)] = i;
        rng.shuffle(targets);
        for (int target : targets) {
            TrialTimes times = trial_time(memory, target + 1, design.organization, design.n,
                                          design.params, rng, trial_counter);
            Trial t;
            t.target_index = target;
            t.block_index = block;
            t.observed_time = times.observed;
            t.noiseless_time = times.noiseless;
            seq.trials.push_back(t);
            ++trial_counter;
        }
    }
    return seq;
}

/// Corpus over the cross product of menu lengths and organizations, the
/// replicated within-subjects design: every user contributes one sequence
/// per configuration. Users are independent streams, so generation order
/// does not affect any user's data.
struct CorpusConfig {
    std::vector<int> menu_lengths = {8, 12, 16};
    std::vector<MenuOrganization> organizations = {
        MenuOrganization::unordered, MenuOrganization::alphabetical, MenuOrganization::semantic};
    int users = 10;
    int blocks = 12;
    std::uint64_t seed = 0;
    OracleParams params;
};

inline std::vector<SelectionSequence> generate_corpus(const CorpusConfig& config) {
    if (config.menu_lengths.empty() || config.organizations.empty()) {
        throw DomainError("generate_corpus: need at least one length and one organization");
    }
    std::vector<SelectionSequence> seqs;
    for (int u = 0; u < config.users; ++u) {
        char user_id[16];
        std::snprintf(user_id, sizeof(user_id), "u%04d", u);
        for (MenuOrganization org : config.organizations) {
            for (int n : config.menu_lengths) {
                ExperimentDesign design;
                design.n = n;
                design.organization = org;
                design.blocks = config.blocks;
                design.users = config.users;
                design.seed = config.seed;
                design.params = config.params;
                std::uint64_t user_seed =
                    fnv1a64(std::string(user_id) + ":" + std::string(1, org_letter(org)) +
                            std::to_string(n));
                seqs.push_back(generate_user_sequence(design, user_seed, user_id));
            }
        }
    }
    return seqs;
}

/// R^2 of the generator's own noiseless times against its observations,
/// per sequence then averaged: the best score any predictor can reach on
/// the corpus. Sequences with (near) zero observed variance are skipped.
inline double oracle_ceiling_r2(const std::vector<SelectionSequence>& seqs) {
    double total = 0.0;
    std::size_t counted = 0;
    for (const SelectionSequence& seq : seqs) {
        double ss_res = 0.0;
        SequenceStats stats = sequence_stats(seq);
        for (const Trial& t : seq.trials) {
            if (!t.noiseless_time) {
                throw ValidationError("oracle_ceiling_r2: sequence for user '" + seq.user_id +
                                      "' is missing noiseless times");
            }
            double d = t.observed_time - *t.noiseless_time;
            ss_res += d * d;
        }
        if (stats.variance_sum <= 1e-9) {
            if (ss_res <= 1e-12) {  // sigma = 0 corpus: perfect by construction
                total += 1.0;
                ++counted;
            }
            continue;
        }
        total += 1.0 - ss_res / stats.variance_sum;
        ++counted;
    }
    if (counted == 0) throw ValidationError("oracle_ceiling_r2: no usable sequences");
    return total / static_cast<double>(counted);
}

}  // namespace menupred
