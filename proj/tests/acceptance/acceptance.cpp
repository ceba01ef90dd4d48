// Acceptance gate: one line per criterion, nonzero exit if any fail.
// Heavy artifacts land in ./acceptance_artifacts for post-mortems.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "menupred/menupred.hpp"
#include "support/finite_diff.hpp"
#include "support/gradcheck.hpp"

using namespace menupred;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

void report(int id, bool pass, const std::string& detail) {
    if (!pass) ++g_failures;
    std::printf("criterion %d: %s - %s\n", id, pass ? "PASS" : "FAIL", detail.c_str());
    std::fflush(stdout);
}

std::string fmt(double v, int precision = 4) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*g", precision, v);
    return buf;
}

struct TinySetup {
    ModelParams params;
    std::vector<TrialInput> inputs;
    std::vector<double> targets;
    double variance_sum = 0;
};

TinySetup tiny_setup(std::uint64_t seed) {
    ModelDims dims;
    dims.enc_cells = 4;
    dims.pred_cells = 6;
    dims.hidden_dim = 5;

    ExperimentDesign design;
    design.n = 3;
    design.organization = MenuOrganization::unordered;
    design.seed = seed;
    MenuSpec menu = make_menu(design);

    EmbeddingTable table = synth_embeddings(menu.items, seed + 1);
    TinySetup setup;
    setup.params = init_params(dims, seed);
    setup.params.name_projection = fit_name_projection(menu.items, table);
    MenuFeatureBase base = menu_feature_base(menu, table, setup.params.name_projection);

    RngStream rng(seed, 404);
    for (int i = 0; i < 5; ++i) {
        setup.inputs.push_back(trial_input(base, static_cast<int>(rng.below(3))));
        setup.targets.push_back(0.5 + 1.5 * rng.uniform());
    }
    double mean = 0;
    for (double t : setup.targets) mean += t;
    mean /= static_cast<double>(setup.targets.size());
    for (double t : setup.targets) setup.variance_sum += (t - mean) * (t - mean);
    return setup;
}

void criterion_1() {
    auto start = std::chrono::steady_clock::now();
    double worst_param = 0, worst_input = 0;
    std::size_t params_checked = 0, entries_checked = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        TinySetup s = tiny_setup(seed);
        testsupport::GradcheckReport rep =
            testsupport::gradcheck_model(s.params, s.inputs, s.targets, s.variance_sum);
        worst_param = std::max(worst_param, rep.max_rel_err);
        params_checked += rep.checked;

        ForwardPass pass = forward_inputs(s.params, s.inputs);
        const double h = 1e-5;
        for (std::size_t i = 0; i < s.inputs.size(); ++i) {
            std::vector<Mat> grads = input_gradients(s.params, pass, i);
            for (std::size_t step = 0; step <= i; ++step) {
                for (int item = 0; item < 3; ++item) {
                    for (int coord = 0; coord < kItemFeatureDim; ++coord) {
                        auto probe = [&](double delta) {
                            std::vector<TrialInput> bumped = s.inputs;
                            bumped[step].item_feats(item, coord) += delta;
                            return forward_inputs(s.params, bumped).predictions[i];
                        };
                        double numeric = (probe(h) - probe(-h)) / (2.0 * h);
                        double err = testsupport::rel_err(grads[step](item, coord), numeric);
                        worst_input = std::max(worst_input, err);
                        ++entries_checked;
                    }
                }
            }
        }
    }
    double secs = seconds_since(start);
    bool pass = worst_param <= 1e-4 && worst_input <= 1e-4 && secs < 60.0;
    report(1, pass,
           "10 seeds, " + std::to_string(params_checked) + " param grads (max rel err " +
               fmt(worst_param) + "), " + std::to_string(entries_checked) +
               " input jacobian entries (max rel err " + fmt(worst_input) + "), " + fmt(secs) +
               "s of 60s");
}

void criterion_2() {
    auto start = std::chrono::steady_clock::now();
    RngStream rng(1234);
    double worst = 0;
    int used = 0;
    while (used < 1000) {
        std::size_t len = 2 + rng.below(60);
        std::vector<double> y(len), t(len);
        for (std::size_t i = 0; i < len; ++i) {
            y[i] = 0.2 + 3.0 * rng.uniform();
            t[i] = y[i] + 2.0 * (rng.uniform() - 0.5);
        }
        double mean = 0;
        for (double v : y) mean += v;
        mean /= static_cast<double>(len);
        double c_s = 0;
        for (double v : y) c_s += (v - mean) * (v - mean);
        if (c_s <= 1e-9) continue;
        worst = std::max(worst, std::abs(r_squared(y, t) - (1.0 - sequence_loss(y, t, c_s))));
        ++used;
    }
    double secs = seconds_since(start);
    bool pass = worst <= 1e-12 && secs < 60.0;
    report(2, pass,
           "1000 sequences, max |r2 - (1 - loss)| = " + fmt(worst) + ", " + fmt(secs) + "s");
}

struct ProbeResult {
    std::string checkpoint;
    double mean_r2 = 0;
};

ProbeResult run_overfit_probe() {
    // Four blocks keep each 32-trial sequence inside one unroll-40 window, so
    // the probe exercises whole-sequence backprop rather than window stitching.
    CorpusConfig config;
    config.users = 5;
    config.menu_lengths = {8};
    config.organizations = {MenuOrganization::unordered};
    config.blocks = 4;
    config.seed = 91;
    config.params.sigma = 0.05;
    std::vector<SelectionSequence> seqs = generate_corpus(config);

    TrainConfig cfg;
    cfg.iterations = 20000;
    cfg.checkpoint_every = 0;
    cfg.seed = 5;
    EmbeddingTable table = synth_embeddings(pool::all_names(), 17);
    TrainResult result = train(seqs, {}, table, cfg);

    ProbeResult out;
    auto report = sequence_level_r2(seqs, predict_all(result.params, result.vocab, seqs));
    out.mean_r2 = report.mean_r2.value_or(-1.0);
    std::ostringstream bytes;
    save_checkpoint(result.params, result.vocab, bytes);
    out.checkpoint = bytes.str();
    return out;
}

ProbeResult g_probe;

void criterion_3() {
    auto start = std::chrono::steady_clock::now();
    g_probe = run_overfit_probe();
    double secs = seconds_since(start);
    bool pass = g_probe.mean_r2 >= 0.95 && secs < 300.0;
    report(3, pass,
           "5 sequences (n=8, sigma=0.05), 20000 iterations, mean train r2 " +
               fmt(g_probe.mean_r2) + " (need >= 0.95), " + fmt(secs) + "s of 300s");
}

struct GeneralizationRun {
    std::vector<SelectionSequence> heldout;
    std::vector<std::vector<double>> predictions;
    ModelParams params;
    EmbeddingTable vocab;
    std::string checkpoint;
    std::string target_csv;
    std::string curve_csv;
    double seq_r2 = 0, seq_ceiling = 0;
    double target_r2 = 0, target_ceiling = 0;
};

std::vector<SelectionSequence> generalization_corpus() {
    CorpusConfig config;
    config.users = 200;
    config.blocks = 12;
    config.seed = 2024;
    config.params.sigma = 0.15;
    return generate_corpus(config);
}

GeneralizationRun run_generalization(const std::vector<SelectionSequence>& corpus,
                                     bool progress) {
    auto [train_seqs, heldout] = split_by_user(corpus, 0.5, 7);

    // Held-out fit is underfit-limited here: at the 40-trial window default the
    // score plateaus near 0.75x ceiling because expertise credit cannot flow
    // across window boundaries, and input dropout only slows structure
    // learning (the held-out curve never turns down). Whole-sequence windows
    // plus no dropout clear the bar with margin by 100k iterations.
    TrainConfig cfg;
    cfg.iterations = 150000;
    cfg.checkpoint_every = 25000;
    cfg.seed = 3;
    cfg.unroll = 192;
    cfg.dropout = 0.0;
    EmbeddingTable table = synth_embeddings(pool::all_names(), 17);
    TrainResult result = train(train_seqs, heldout, table, cfg, progress ? &std::cerr : nullptr);

    GeneralizationRun run;
    run.heldout = std::move(heldout);
    run.params = result.params;
    run.vocab = result.vocab;
    run.predictions = predict_all(run.params, run.vocab, run.heldout);

    run.seq_r2 = sequence_level_r2(run.heldout, run.predictions).mean_r2.value_or(-1.0);
    run.seq_ceiling = oracle_ceiling_r2(run.heldout);

    auto noiseless = noiseless_predictions(run.heldout);
    GroupedReport target = target_level_r2(run.heldout, run.predictions);
    run.target_r2 = target.overall_r2;
    run.target_ceiling = target_level_r2(run.heldout, noiseless).overall_r2;

    std::ostringstream bytes, target_csv, curve_csv;
    save_checkpoint(run.params, run.vocab, bytes);
    run.checkpoint = bytes.str();
    write_group_csv(target.rows, target_csv);
    run.target_csv = target_csv.str();
    write_block_curve_csv(block_curves(run.heldout, run.predictions), curve_csv);
    run.curve_csv = curve_csv.str();
    return run;
}

GeneralizationRun g_gen;

void criterion_4(const std::vector<SelectionSequence>& corpus) {
    auto start = std::chrono::steady_clock::now();
    g_gen = run_generalization(corpus, true);
    double secs = seconds_since(start);
    bool seq_ok = g_gen.seq_r2 >= 0.80 * g_gen.seq_ceiling;
    bool target_ok = g_gen.target_r2 >= 0.85 * g_gen.target_ceiling;
    bool pass = seq_ok && target_ok && secs < 1800.0;
    report(4, pass,
           "heldout seq r2 " + fmt(g_gen.seq_r2) + " vs 0.80*ceiling " +
               fmt(0.80 * g_gen.seq_ceiling) + "; target r2 " + fmt(g_gen.target_r2) +
               " vs 0.85*ceiling " + fmt(0.85 * g_gen.target_ceiling) + "; " + fmt(secs) +
               "s of 1800s");
}

void criterion_5() {
    auto curves = block_curves(g_gen.heldout, g_gen.predictions);
    double worst_rel = 0;
    int worst_n = 0, worst_block = 0;
    bool endpoints_ok = true;
    std::string endpoint_note;
    for (int n : {8, 12, 16}) {
        const BlockCurveRow* first = nullptr;
        const BlockCurveRow* last = nullptr;
        for (const BlockCurveRow& r : curves) {
            if (r.n != n) continue;
            if (r.block == 1) first = &r;
            if (r.block == 12) last = &r;
            if (r.block >= 3) {
                double rel = std::abs(r.predicted - r.actual) / r.actual;
                if (rel > worst_rel) {
                    worst_rel = rel;
                    worst_n = n;
                    worst_block = r.block;
                }
            }
        }
        if (!first || !last || !(first->actual > last->actual) ||
            !(first->predicted > last->predicted)) {
            endpoints_ok = false;
            endpoint_note += " n=" + std::to_string(n);
        }
    }
    bool pass = worst_rel <= 0.15 && endpoints_ok;
    std::string detail = "worst relative error for blocks >= 3 is " + fmt(worst_rel) + " (n=" +
                         std::to_string(worst_n) + ", block " + std::to_string(worst_block) +
                         ", cap 0.15); curves fall block 1 -> 12";
    if (!endpoints_ok) detail += " EXCEPT" + endpoint_note;
    report(5, pass, detail);
}

void criterion_6() {
    auto rows = jacobian_recency_profile(g_gen.params, g_gen.vocab, g_gen.heldout, 10, 150);
    std::vector<double> lags, unordered_means;
    double mean_u = 0, mean_a = 0;
    int count_u = 0, count_a = 0;
    for (const JacobianProfileRow& r : rows) {
        if (r.pairs == 0) continue;
        if (r.org == MenuOrganization::unordered) {
            lags.push_back(r.lag);
            unordered_means.push_back(r.mean_abs_sensitivity);
            mean_u += r.mean_abs_sensitivity;
            ++count_u;
        } else if (r.org == MenuOrganization::alphabetical) {
            mean_a += r.mean_abs_sensitivity;
            ++count_a;
        }
    }
    if (lags.size() < 10 || count_a == 0) {
        report(6, false,
               "profile cells missing: " + std::to_string(lags.size()) +
                   " unordered lags with pairs, " + std::to_string(count_a) + " alphabetical");
        return;
    }
    mean_u /= count_u;
    mean_a /= count_a;
    double rho = spearman_rank_correlation(lags, unordered_means);
    bool pass = rho <= -0.7 && mean_u > mean_a;
    report(6, pass,
           "unordered recency spearman " + fmt(rho) + " (need <= -0.7); mean |dt/dflag| " +
               fmt(mean_u) + " unordered vs " + fmt(mean_a) + " alphabetical");
}

void criterion_7(const std::vector<SelectionSequence>& corpus) {
    ProbeResult probe2 = run_overfit_probe();
    GeneralizationRun gen2 = run_generalization(corpus, false);
    bool probe_ok = probe2.checkpoint == g_probe.checkpoint && probe2.mean_r2 == g_probe.mean_r2;
    bool gen_ok = gen2.checkpoint == g_gen.checkpoint && gen2.target_csv == g_gen.target_csv &&
                  gen2.curve_csv == g_gen.curve_csv;
    report(7, probe_ok && gen_ok,
           std::string("rerun of criterion 3 ") + (probe_ok ? "bit-identical" : "DIVERGED") +
               "; rerun of criterion 4 checkpoint and reports " +
               (gen_ok ? "bit-identical" : "DIVERGED"));
}

void criterion_8(const std::vector<SelectionSequence>& corpus) {
    fs::create_directories("acceptance_artifacts");

    std::ostringstream first;
    write_sequences(corpus, first);
    {
        std::ofstream out("acceptance_artifacts/corpus.jsonl", std::ios::binary);
        out << first.str();
    }
    std::istringstream back(first.str());
    std::vector<SelectionSequence> reread = read_sequences(back);
    std::ostringstream second;
    write_sequences(reread, second);
    bool dataset_ok = first.str() == second.str();

    {
        std::ofstream out("acceptance_artifacts/model.bin", std::ios::binary);
        out << g_gen.checkpoint;
    }
    std::istringstream model_in(g_gen.checkpoint);
    ModelBundle bundle = load_checkpoint(model_in);
    std::ostringstream model_out;
    save_checkpoint(bundle.params, bundle.vocab, model_out);
    bool model_ok = model_out.str() == g_gen.checkpoint;

    {
        std::ofstream out("acceptance_artifacts/target_groups.csv", std::ios::binary);
        out << g_gen.target_csv;
        std::ofstream curves("acceptance_artifacts/block_curves.csv", std::ios::binary);
        curves << g_gen.curve_csv;
    }
    report(8, dataset_ok && model_ok,
           std::string("dataset save-load-save ") + (dataset_ok ? "byte-identical" : "DIVERGED") +
               " (" + std::to_string(first.str().size()) + " bytes); checkpoint " +
               (model_ok ? "byte-identical" : "DIVERGED") + " (" +
               std::to_string(g_gen.checkpoint.size()) + " bytes)");
}

}  // namespace

int main(int argc, char** argv) {
    if (argc > 1 && !fs::exists(argv[1])) {
        std::fprintf(stderr, "note: cli binary '%s' not found (library-level gate only)\n",
                     argv[1]);
    }
    std::printf("acceptance gate: 8 criteria\n");

    criterion_1();
    criterion_2();
    criterion_3();
    std::vector<SelectionSequence> corpus = generalization_corpus();
    criterion_4(corpus);
    criterion_5();
    criterion_6();
    criterion_7(corpus);
    criterion_8(corpus);

    std::printf("acceptance: %d/8 criteria passed\n", 8 - g_failures);
    return g_failures == 0 ? 0 : 1;
}
