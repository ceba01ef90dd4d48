#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"
#include "menupred/dataset.hpp"
#include "menupred/model.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CliResult {
    int code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

const fs::path& scratch_dir() {
    static fs::path dir = [] {
        fs::path d = fs::temp_directory_path() / "menupred_cli_scratch";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

CliResult run_cli(const std::string& args) {
    const char* bin = std::getenv("MENUPRED_BIN");
    REQUIRE(bin != nullptr);
    static int counter = 0;
    fs::path out = scratch_dir() / ("stdout" + std::to_string(counter) + ".txt");
    fs::path err = scratch_dir() / ("stderr" + std::to_string(counter) + ".txt");
    ++counter;
    std::string cmd = "\"" + std::string(bin) + "\" " + args + " >" + out.string() + " 2>" +
                      err.string();
    int status = std::system(cmd.c_str());
    CliResult r;
    if (status != -1 && WIFEXITED(status)) r.code = WEXITSTATUS(status);
    r.out = slurp(out);
    r.err = slurp(err);
    return r;
}

std::string path_of(const std::string& name) { return (scratch_dir() / name).string(); }

}  // namespace

TEST_CASE("usage errors exit with code 2, help with 0") {
    CHECK(run_cli("").code == 2);
    CHECK(run_cli("frobnicate").code == 2);
    CHECK(run_cli("gen").code == 2);  // --users and --out are required
    CHECK(run_cli("gen --users -3 --out x.jsonl").code == 2);
    CliResult help = run_cli("--help");
    CHECK(help.code == 0);
    CHECK(help.out.find("gen") != std::string::npos);
    CHECK(help.out.find("jacobian") != std::string::npos);
}

TEST_CASE("gen writes a manifest plus a byte-reproducible dataset") {
    std::string base = "gen --users 2 --n 8 --org U --blocks 3 --seed 5 ";
    CliResult a = run_cli(base + "--out " + path_of("a.jsonl") + " --csv " + path_of("a.csv"));
    REQUIRE(a.code == 0);
    CHECK(a.out.find("\"command\":\"gen\"") != std::string::npos);
    CHECK(a.out.find("\"sequences\":2") != std::string::npos);

    CliResult b = run_cli(base + "--out " + path_of("b.jsonl"));
    REQUIRE(b.code == 0);
    CHECK(slurp(path_of("a.jsonl")) == slurp(path_of("b.jsonl")));

    json manifest = json::parse(slurp(path_of("a.jsonl.manifest.json")));
    CHECK(manifest.at("command") == "gen");
    CHECK(manifest.at("config").at("seed") == 5);
    CHECK(!manifest.at("artifact_version").get<std::string>().empty());

    std::string csv = slurp(path_of("a.csv"));
    CHECK(csv.rfind("user,menu,org,n,block,target,time_s\n", 0) == 0);

    std::ifstream in(path_of("a.jsonl"));
    auto seqs = menupred::read_sequences(in);
    REQUIRE(seqs.size() == 2);
    CHECK(seqs[0].trials.size() == 8u * 3u);
    CHECK(seqs[0].trials[0].noiseless_time.has_value());
}

TEST_CASE("gen rejects unusual menu lengths only under --strict") {
    CliResult strict =
        run_cli("gen --users 1 --n 9 --strict --out " + path_of("strict.jsonl"));
    CHECK(strict.code == 2);
    CHECK(!fs::exists(path_of("strict.jsonl")));

    CliResult loose = run_cli("gen --users 1 --n 9 --blocks 2 --out " + path_of("loose.jsonl"));
    CHECK(loose.code == 0);
    CHECK(loose.err.find("warning") != std::string::npos);
    CHECK(fs::exists(path_of("loose.jsonl")));
}

TEST_CASE("train and the downstream subcommands round-trip on a tiny corpus") {
    REQUIRE(run_cli("gen --users 4 --n 8 --org U,A --blocks 3 --seed 7 --out " +
                    path_of("corpus.jsonl"))
                .code == 0);

    std::string train_args =
        "train --data " + path_of("corpus.jsonl") +
        " --embed-seed 9 --iterations 12 --unroll 8 --checkpoint-every 5"
        " --enc-cells 4 --pred-cells 6 --hidden-dim 5 --quiet"
        " --out " + path_of("model.bin") + " --log " + path_of("train_log.csv");
    CliResult tr = run_cli(train_args);
    REQUIRE(tr.code == 0);
    CHECK(tr.out.find("\"command\":\"train\"") != std::string::npos);
    CHECK(tr.out.find("\"iterations\":12") != std::string::npos);
    CHECK(tr.out.find("final_heldout_seq_r2") != std::string::npos);

    CHECK(slurp(path_of("train_log.csv")).rfind("iteration,mean_window_loss", 0) == 0);
    json manifest = json::parse(slurp(path_of("model.bin.manifest.json")));
    CHECK(manifest.at("command") == "train");
    CHECK(manifest.at("inputs").size() == 1);

    {
        std::ifstream in(path_of("model.bin"), std::ios::binary);
        menupred::ModelBundle bundle = menupred::load_checkpoint(in);
        CHECK(bundle.params.dims.enc_cells == 4);
        CHECK(!bundle.vocab.vectors.empty());
    }

    CliResult both = run_cli("train --data " + path_of("corpus.jsonl") +
                             " --embeddings e.txt --embed-seed 3 --out " + path_of("m2.bin"));
    CHECK(both.code == 2);  // explicit table and synthetic seed conflict

    std::string eval_args = "eval --model " + path_of("model.bin") + " --data " +
                            path_of("corpus.jsonl") + " --out-dir " + path_of("report");
    CliResult ev = run_cli(eval_args);
    REQUIRE(ev.code == 0);
    for (const char* name : {"summary.json", "manifest.json", "target_groups.csv",
                             "menu_groups.csv", "block_curves.csv"}) {
        CHECK(fs::exists(scratch_dir() / "report" / name));
    }
    json summary = json::parse(slurp(scratch_dir() / "report" / "summary.json"));
    CHECK(summary.at("sequences") == 8);
    CHECK(summary.contains("target"));
    CHECK(summary.contains("menu"));
    CHECK(summary.contains("sequence"));

    CliResult noiseless = run_cli("eval --use-noiseless --data " + path_of("corpus.jsonl") +
                                  " --out-dir " + path_of("report_oracle"));
    REQUIRE(noiseless.code == 0);
    json oracle_summary = json::parse(slurp(scratch_dir() / "report_oracle" / "summary.json"));
    CHECK(oracle_summary.at("target").at("r2").get<double>() > 0.9);

    CHECK(run_cli("eval --data " + path_of("corpus.jsonl") + " --out-dir " +
                  path_of("report2"))
              .code == 2);  // needs --model or --use-noiseless
    CHECK(run_cli("eval --model " + path_of("model.bin") + " --use-noiseless --data " +
                  path_of("corpus.jsonl") + " --out-dir " + path_of("report3"))
              .code == 2);

    CliResult jac = run_cli("jacobian --model " + path_of("model.bin") + " --data " +
                            path_of("corpus.jsonl") + " --max-lag 4 --limit-sequences 2 --out " +
                            path_of("profile.csv"));
    REQUIRE(jac.code == 0);
    CHECK(slurp(path_of("profile.csv")).rfind("org,lag,pairs,mean_abs_sensitivity", 0) == 0);
    CHECK(fs::exists(path_of("profile.csv.manifest.json")));
}

TEST_CASE("runtime failures exit with code 1") {
    CHECK(run_cli("train --data " + path_of("missing.jsonl") + " --out " + path_of("m.bin"))
              .code == 1);
    CHECK(run_cli("eval --use-noiseless --data " + path_of("missing.jsonl") + " --out-dir " +
                  path_of("r"))
              .code == 1);

    // Two users whose times never vary: the split works, training cannot.
    std::vector<menupred::SelectionSequence> flat(2);
    for (int u = 0; u < 2; ++u) {
        flat[u].user_id = "u" + std::to_string(u);
        flat[u].menu.menu_id = "m";
        flat[u].menu.organization = menupred::MenuOrganization::unordered;
        flat[u].menu.items = {"alpha", "beta"};
        flat[u].trials = {{0, 1.0, 1, std::nullopt}, {1, 1.0, 1, std::nullopt}};
    }
    {
        std::ofstream out(path_of("flat.jsonl"));
        menupred::write_sequences(flat, out);
    }
    CliResult r = run_cli("train --data " + path_of("flat.jsonl") + " --iterations 1 --out " +
                          path_of("flat.bin"));
    CHECK(r.code == 1);
    CHECK(r.err.find("variance") != std::string::npos);
}
