#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "menupred/menupred.hpp"

namespace mp = menupred;
namespace fs = std::filesystem;

namespace {

void ensure_parent(const fs::path& path) {
    fs::path parent = path.parent_path();
    if (!parent.empty()) fs::create_directories(parent);
}

std::ofstream open_out(const fs::path& path, std::ios::openmode mode = std::ios::out) {
    ensure_parent(path);
    std::ofstream out(path, mode);
    if (!out) throw mp::Error("cannot write '" + path.string() + "'");
    return out;
}

void write_manifest_file(const mp::RunManifest& manifest, const fs::path& path) {
    auto out = open_out(path);
    mp::write_manifest(manifest, out);
}

std::vector<mp::SelectionSequence> read_data(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw mp::Error("cannot read dataset '" + path + "'");
    return mp::read_sequences(in, &std::cerr);
}

std::vector<mp::MenuOrganization> parse_orgs(const std::vector<std::string>& names) {
    std::vector<mp::MenuOrganization> orgs;
    for (const std::string& s : names) orgs.push_back(mp::parse_organization(s));
    return orgs;
}

nlohmann::json oracle_params_json(const mp::OracleParams& p) {
    return {{"fitts_a", p.a_f},         {"fitts_b", p.b_f},       {"search_cu", p.c_u},
            {"search_ah", p.a_h},       {"search_bh", p.b_h},     {"sem_factor", p.sem_factor},
            {"rho", p.rho},             {"kappa", p.kappa},       {"t_recall", p.t_recall},
            {"sigma", p.sigma},         {"item_height", p.item_height}};
}

// ---------------------------------------------------------------------------
// gen
// ---------------------------------------------------------------------------

struct GenOptions {
    int users = 0;
    std::vector<int> lengths = {8, 12, 16};
    std::vector<std::string> orgs = {"U", "A", "S"};
    int blocks = 12;
    std::uint64_t seed = 0;
    bool strict = false;
    mp::OracleParams params;
    std::string out;
    std::string csv;
};

void run_gen(const GenOptions& opt) {
    mp::CorpusConfig config;
    config.users = opt.users;
    config.menu_lengths = opt.lengths;
    config.organizations = parse_orgs(opt.orgs);
    config.blocks = opt.blocks;
    config.seed = opt.seed;
    config.params = opt.params;
    config.params.validate();

    mp::RunManifest manifest;
    manifest.command = "gen";
    manifest.config = {{"users", opt.users},
                       {"menu_lengths", opt.lengths},
                       {"organizations", opt.orgs},
                       {"blocks", opt.blocks},
                       {"seed", opt.seed},
                       {"strict", opt.strict},
                       {"oracle", oracle_params_json(config.params)}};
    manifest.outputs.push_back(opt.out);
    if (!opt.csv.empty()) manifest.outputs.push_back(opt.csv);
    write_manifest_file(manifest, opt.out + ".manifest.json");

    std::vector<mp::SelectionSequence> seqs = mp::generate_corpus(config);
    {
        auto out = open_out(opt.out);
        mp::write_sequences(seqs, out);
    }
    if (!opt.csv.empty()) {
        auto out = open_out(opt.csv);
        mp::export_trials_csv(seqs, out);
    }
    std::size_t trials = 0;
    for (const auto& s : seqs) trials += s.trials.size();
    nlohmann::json summary = {{"command", "gen"},
                              {"sequences", seqs.size()},
                              {"trials", trials},
                              {"out", opt.out}};
    std::cout << summary.dump() << '\n';
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainOptions {
    std::string data;
    std::string embeddings;
    std::uint64_t embed_seed = 1;
    std::uint64_t split_seed = 0;
    double train_frac = 0.5;
    mp::TrainConfig cfg;
    std::string out;
    std::string log;
    bool quiet = false;
};

mp::EmbeddingTable resolve_embeddings(const TrainOptions& opt,
                                      const std::vector<mp::SelectionSequence>& seqs) {
    if (!opt.embeddings.empty()) {
        std::ifstream in(opt.embeddings);
        if (!in) throw mp::Error("cannot read embeddings '" + opt.embeddings + "'");
        return mp::load_embeddings(in, &std::cerr);
    }
    std::vector<std::string> names;
    std::set<std::string> seen;
    for (const auto& seq : seqs) {
        for (const std::string& item : seq.menu.items) {
            if (seen.insert(item).second) names.push_back(item);
        }
    }
    return mp::synth_embeddings(names, opt.embed_seed);
}

void run_train(const TrainOptions& opt) {
    std::vector<mp::SelectionSequence> seqs = read_data(opt.data);
    mp::EmbeddingTable embeddings = resolve_embeddings(opt, seqs);
    auto [train_seqs, heldout] = mp::split_by_user(seqs, opt.train_frac, opt.split_seed);

    mp::RunManifest manifest;
    manifest.command = "train";
    manifest.config = {{"split_seed", opt.split_seed},
                       {"train_frac", opt.train_frac},
                       {"lr", opt.cfg.lr},
                       {"clip", opt.cfg.clip},
                       {"unroll", opt.cfg.unroll},
                       {"dropout", opt.cfg.dropout},
                       {"iterations", opt.cfg.iterations},
                       {"seed", opt.cfg.seed},
                       {"checkpoint_every", opt.cfg.checkpoint_every},
                       {"min_variance", opt.cfg.min_variance},
                       {"enc_cells", opt.cfg.dims.enc_cells},
                       {"pred_cells", opt.cfg.dims.pred_cells},
                       {"hidden_dim", opt.cfg.dims.hidden_dim},
                       {"embed_seed", opt.embed_seed}};
    manifest.input_digests[opt.data] = mp::file_digest_hex(opt.data);
    if (!opt.embeddings.empty()) {
        manifest.input_digests[opt.embeddings] = mp::file_digest_hex(opt.embeddings);
    }
    manifest.outputs.push_back(opt.out);
    if (!opt.log.empty()) manifest.outputs.push_back(opt.log);
    write_manifest_file(manifest, opt.out + ".manifest.json");

    mp::TrainResult result = mp::train(train_seqs, heldout, embeddings, opt.cfg,
                                       opt.quiet ? nullptr : &std::cerr);
    {
        auto out = open_out(opt.out, std::ios::binary);
        mp::save_checkpoint(result.params, result.vocab, out);
    }
    if (!opt.log.empty()) {
        auto out = open_out(opt.log);
        mp::write_train_log_csv(result.log, out);
    }
    nlohmann::json summary = {{"command", "train"},
                              {"train_sequences", train_seqs.size()},
                              {"heldout_sequences", heldout.size()},
                              {"iterations", result.iterations_run},
                              {"clip_events", result.clip_events},
                              {"degenerate_skipped", result.degenerate_skipped},
                              {"out", opt.out}};
    if (!result.log.empty() && result.log.back().heldout_r2) {
        summary["final_heldout_seq_r2"] = mp::round4(*result.log.back().heldout_r2);
    }
    std::cout << summary.dump() << '\n';
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalOptions {
    std::string model;
    std::string data;
    std::string level = "all";
    std::string out_dir;
    bool use_noiseless = false;
};

void run_eval(const EvalOptions& opt) {
    std::vector<mp::SelectionSequence> seqs = read_data(opt.data);

    bool want_target = opt.level == "target" || opt.level == "all";
    bool want_menu = opt.level == "menu" || opt.level == "all";
    bool want_sequence = opt.level == "sequence" || opt.level == "all";

    fs::path dir(opt.out_dir);
    fs::create_directories(dir);

    mp::RunManifest manifest;
    manifest.command = "eval";
    manifest.config = {{"level", opt.level},
                       {"use_noiseless", opt.use_noiseless},
                       {"out_dir", opt.out_dir}};
    manifest.input_digests[opt.data] = mp::file_digest_hex(opt.data);
    if (!opt.model.empty()) manifest.input_digests[opt.model] = mp::file_digest_hex(opt.model);
    manifest.outputs.push_back((dir / "summary.json").string());
    if (want_target) {
        manifest.outputs.push_back((dir / "target_groups.csv").string());
        manifest.outputs.push_back((dir / "block_curves.csv").string());
    }
    if (want_menu) manifest.outputs.push_back((dir / "menu_groups.csv").string());
    write_manifest_file(manifest, dir / "manifest.json");

    std::vector<std::vector<double>> predictions;
    if (opt.use_noiseless) {
        predictions = mp::noiseless_predictions(seqs);
    } else {
        std::ifstream in(opt.model, std::ios::binary);
        if (!in) throw mp::Error("cannot read model '" + opt.model + "'");
        mp::ModelBundle bundle = mp::load_checkpoint(in);
        predictions = mp::predict_all(bundle.params, bundle.vocab, seqs);
    }

    nlohmann::json summary = {{"command", "eval"},
                              {"level", opt.level},
                              {"sequences", seqs.size()},
                              {"use_noiseless", opt.use_noiseless}};

    auto grouped_json = [](const mp::GroupedReport& report) {
        nlohmann::json j = {{"r2", mp::round4(report.overall_r2)},
                            {"groups", report.rows.size()}};
        for (const auto& [org, r2] : report.by_org) {
            j["r2_by_org"][std::string(1, mp::org_letter(org))] = mp::round4(r2);
        }
        for (const auto& [n, r2] : report.by_length) {
            j["r2_by_length"][std::to_string(n)] = mp::round4(r2);
        }
        return j;
    };

    if (want_sequence) {
        mp::SequenceLevelReport report = mp::sequence_level_r2(seqs, predictions);
        nlohmann::json j = {{"skipped", report.skipped},
                            {"used", report.per_sequence_r2.size()}};
        if (report.mean_r2) j["mean_r2"] = mp::round4(*report.mean_r2);
        summary["sequence"] = j;
    }
    if (want_target) {
        mp::GroupedReport report = mp::target_level_r2(seqs, predictions);
        summary["target"] = grouped_json(report);
        {
            auto out = open_out(dir / "target_groups.csv");
            mp::write_group_csv(report.rows, out);
        }
        auto curves = mp::block_curves(seqs, predictions);
        auto out = open_out(dir / "block_curves.csv");
        mp::write_block_curve_csv(curves, out);
    }
    if (want_menu) {
        mp::GroupedReport report = mp::menu_level_r2(seqs, predictions);
        summary["menu"] = grouped_json(report);
        auto out = open_out(dir / "menu_groups.csv");
        mp::write_group_csv(report.rows, out);
    }

    {
        auto out = open_out(dir / "summary.json");
        out << summary.dump() << '\n';
    }
    std::cout << summary.dump() << '\n';
}

// ---------------------------------------------------------------------------
// jacobian
// ---------------------------------------------------------------------------

struct JacobianOptions {
    std::string model;
    std::string data;
    int max_lag = 20;
    std::size_t limit_sequences = 0;
    std::string out;
};

void run_jacobian(const JacobianOptions& opt) {
    std::vector<mp::SelectionSequence> seqs = read_data(opt.data);
    std::ifstream in(opt.model, std::ios::binary);
    if (!in) throw mp::Error("cannot read model '" + opt.model + "'");
    mp::ModelBundle bundle = mp::load_checkpoint(in);

    mp::RunManifest manifest;
    manifest.command = "jacobian";
    manifest.config = {{"max_lag", opt.max_lag}, {"limit_sequences", opt.limit_sequences}};
    manifest.input_digests[opt.data] = mp::file_digest_hex(opt.data);
    manifest.input_digests[opt.model] = mp::file_digest_hex(opt.model);
    manifest.outputs.push_back(opt.out);
    write_manifest_file(manifest, opt.out + ".manifest.json");

    auto rows = mp::jacobian_recency_profile(bundle.params, bundle.vocab, seqs, opt.max_lag,
                                             opt.limit_sequences);
    {
        auto out = open_out(opt.out);
        mp::write_jacobian_profile_csv(rows, out);
    }
    std::size_t used = opt.limit_sequences > 0
                           ? std::min<std::size_t>(opt.limit_sequences, seqs.size())
                           : seqs.size();
    nlohmann::json summary = {{"command", "jacobian"},
                              {"sequences_used", used},
                              {"rows", rows.size()},
                              {"out", opt.out}};
    std::cout << summary.dump() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"hierarchical recurrent predictor of menu selection times"};
    app.require_subcommand(1);

    GenOptions gen;
    CLI::App* gen_cmd = app.add_subcommand("gen", "generate a synthetic selection-time corpus");
    gen_cmd->add_option("--users", gen.users, "number of simulated users")
        ->required()
        ->check(CLI::PositiveNumber);
    gen_cmd->add_option("--n", gen.lengths, "menu lengths")
        ->delimiter(',')
        ->capture_default_str();
    gen_cmd->add_option("--org", gen.orgs, "menu organizations (U, A, S)")
        ->delimiter(',')
        ->capture_default_str();
    gen_cmd->add_option("--blocks", gen.blocks, "blocks per sequence")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    gen_cmd->add_option("--seed", gen.seed, "corpus seed")->capture_default_str();
    gen_cmd->add_flag("--strict", gen.strict, "reject menu lengths outside {8, 12, 16}");
    gen_cmd->add_option("--sigma", gen.params.sigma, "lognormal noise scale")
        ->capture_default_str();
    gen_cmd->add_option("--rho", gen.params.rho, "per-trial memory decay")
        ->capture_default_str();
    gen_cmd->add_option("--kappa", gen.params.kappa, "activation half-saturation")
        ->capture_default_str();
    gen_cmd->add_option("--t-recall", gen.params.t_recall, "recall-path time, s")
        ->capture_default_str();
    gen_cmd->add_option("--fitts-a", gen.params.a_f, "pointing intercept, s")
        ->capture_default_str();
    gen_cmd->add_option("--fitts-b", gen.params.b_f, "pointing slope, s/bit")
        ->capture_default_str();
    gen_cmd->add_option("--search-cu", gen.params.c_u, "unordered scan cost, s/item")
        ->capture_default_str();
    gen_cmd->add_option("--search-ah", gen.params.a_h, "ordered decision intercept, s")
        ->capture_default_str();
    gen_cmd->add_option("--search-bh", gen.params.b_h, "ordered decision slope, s/bit")
        ->capture_default_str();
    gen_cmd->add_option("--sem-factor", gen.params.sem_factor, "semantic search factor")
        ->capture_default_str();
    gen_cmd->add_option("--out", gen.out, "dataset output path")->required();
    gen_cmd->add_option("--csv", gen.csv, "also export a flat trial CSV");
    gen_cmd->callback([&gen] {
        for (int n : gen.lengths) {
            if (n != 8 && n != 12 && n != 16) {
                if (gen.strict) {
                    throw CLI::ValidationError("--n", "length " + std::to_string(n) +
                                                          " outside {8, 12, 16} with --strict");
                }
                std::cerr << "warning: menu length " << n << " is outside the usual {8, 12, 16}\n";
            }
        }
        run_gen(gen);
    });

    TrainOptions tr;
    CLI::App* train_cmd = app.add_subcommand("train", "train a predictor on a dataset");
    train_cmd->add_option("--data", tr.data, "dataset path")->required();
    auto* emb_opt = train_cmd->add_option("--embeddings", tr.embeddings,
                                          "word embedding table (token + 50 values per line)");
    train_cmd->add_option("--embed-seed", tr.embed_seed, "seed for synthetic embeddings")
        ->capture_default_str()
        ->excludes(emb_opt);
    train_cmd->add_option("--split-seed", tr.split_seed, "user-split seed")->capture_default_str();
    train_cmd->add_option("--train-frac", tr.train_frac, "fraction of users trained on")
        ->check(CLI::Range(0.0, 1.0))
        ->capture_default_str();
    train_cmd->add_option("--iterations", tr.cfg.iterations, "window updates to run")
        ->capture_default_str();
    train_cmd->add_option("--lr", tr.cfg.lr, "learning rate")->capture_default_str();
    train_cmd->add_option("--clip", tr.cfg.clip, "global gradient norm ceiling")
        ->capture_default_str();
    train_cmd->add_option("--unroll", tr.cfg.unroll, "trials per backprop window")
        ->capture_default_str();
    train_cmd->add_option("--dropout", tr.cfg.dropout, "task-encoding dropout rate")
        ->capture_default_str();
    train_cmd->add_option("--seed", tr.cfg.seed, "training seed")->capture_default_str();
    train_cmd->add_option("--checkpoint-every", tr.cfg.checkpoint_every,
                          "held-out evaluation cadence, iterations")
        ->capture_default_str();
    train_cmd->add_option("--min-variance", tr.cfg.min_variance,
                          "smallest usable sequence time variance")
        ->capture_default_str();
    train_cmd->add_option("--enc-cells", tr.cfg.dims.enc_cells, "encoder cells")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    train_cmd->add_option("--pred-cells", tr.cfg.dims.pred_cells, "prediction cells")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    train_cmd->add_option("--hidden-dim", tr.cfg.dims.hidden_dim, "readout hidden units")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    train_cmd->add_option("--out", tr.out, "checkpoint output path")->required();
    train_cmd->add_option("--log", tr.log, "training log CSV path");
    train_cmd->add_flag("--quiet", tr.quiet, "suppress progress lines");
    train_cmd->callback([&tr] { run_train(tr); });

    EvalOptions ev;
    CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate predictions against a dataset");
    auto* model_opt = eval_cmd->add_option("--model", ev.model, "checkpoint path");
    eval_cmd->add_option("--data", ev.data, "dataset path")->required();
    eval_cmd->add_option("--level", ev.level, "target, menu, sequence, or all")
        ->check(CLI::IsMember({"target", "menu", "sequence", "all"}))
        ->capture_default_str();
    eval_cmd->add_option("--out-dir", ev.out_dir, "report directory")->required();
    eval_cmd->add_flag("--use-noiseless", ev.use_noiseless,
                       "score the generator's noise-free times instead of a model")
        ->excludes(model_opt);
    eval_cmd->callback([&ev] {
        if (!ev.use_noiseless && ev.model.empty()) {
            throw CLI::RequiredError("--model (or --use-noiseless)");
        }
        run_eval(ev);
    });

    JacobianOptions jac;
    CLI::App* jac_cmd = app.add_subcommand("jacobian", "input-sensitivity recency profile");
    jac_cmd->add_option("--model", jac.model, "checkpoint path")->required();
    jac_cmd->add_option("--data", jac.data, "dataset path")->required();
    jac_cmd->add_option("--max-lag", jac.max_lag, "largest lag, trials")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    jac_cmd->add_option("--limit-sequences", jac.limit_sequences,
                        "profile only the first K sequences (0 = all)")
        ->capture_default_str();
    jac_cmd->add_option("--out", jac.out, "profile CSV path")->required();
    jac_cmd->callback([&jac] { run_jacobian(jac); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    } catch (const mp::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
