#include <catch2/catch_amalgamated.hpp>

#include <set>
#include <sstream>

#include "menupred/dataset.hpp"

using namespace menupred;
using Catch::Approx;

namespace {

SelectionSequence tiny_sequence() {
    SelectionSequence seq;
    seq.user_id = "u0001";
    seq.menu.menu_id = "U4-deadbeef";
    seq.menu.organization = MenuOrganization::unordered;
    seq.menu.items = {"alpha", "bravo", "charlie", "delta"};
    seq.trials = {{0, 1.25, 1, 1.1}, {2, 0.75, 1, std::nullopt}, {1, 2.0, 2, 1.9}};
    return seq;
}

}  // namespace

TEST_CASE("sequence stats match the hand-computed example") {
    SelectionSequence seq = tiny_sequence();
    seq.trials = {{0, 1.0, 1, std::nullopt}, {1, 2.0, 1, std::nullopt}, {2, 3.0, 1, std::nullopt}};
    SequenceStats s = sequence_stats(seq);
    CHECK(s.length == 3);
    CHECK(s.mean_time == Approx(2.0).margin(1e-15));
    CHECK(s.variance_sum == Approx(2.0).margin(1e-15));
}

TEST_CASE("validation names the offending record and field") {
    SelectionSequence seq = tiny_sequence();
    SECTION("target out of range") {
        seq.trials[1].target_index = 4;
        try {
            seq.validate();
            FAIL("expected ValidationError");
        } catch (const ValidationError& e) {
            std::string msg = e.what();
            CHECK(msg.find("trial 1") != std::string::npos);
            CHECK(msg.find("target") != std::string::npos);
        }
    }
    SECTION("non-positive time") {
        seq.trials[2].observed_time = 0.0;
        CHECK_THROWS_AS(seq.validate(), ValidationError);
    }
    SECTION("duplicate menu item") {
        seq.menu.items[1] = "alpha";
        CHECK_THROWS_AS(seq.validate(), ValidationError);
    }
    SECTION("too many items") {
        seq.menu.items.clear();
        for (int i = 0; i < 65; ++i) seq.menu.items.push_back("item" + std::to_string(i));
        CHECK_THROWS_AS(seq.menu.validate(), ValidationError);
    }
}

TEST_CASE("dataset round trip is byte identical") {
    std::vector<SelectionSequence> seqs{tiny_sequence()};
    seqs[0].trials[0].observed_time = 0.1 + 0.2;  // not exactly representable

    std::ostringstream first;
    write_sequences(seqs, first);
    std::istringstream in(first.str());
    std::vector<SelectionSequence> loaded = read_sequences(in);
    REQUIRE(loaded.size() == 1);
    CHECK(loaded[0].trials[0].observed_time == seqs[0].trials[0].observed_time);
    CHECK(loaded[0].trials[1].noiseless_time == std::nullopt);
    CHECK(loaded[0].trials[0].noiseless_time == seqs[0].trials[0].noiseless_time);

    std::ostringstream second;
    write_sequences(loaded, second);
    CHECK(first.str() == second.str());
}

TEST_CASE("reader reports schema, parse, and field problems by record") {
    SECTION("bad JSON") {
        std::istringstream in("{not json\n");
        CHECK_THROWS_AS(read_sequences(in), ParseError);
    }
    SECTION("wrong schema version") {
        std::istringstream in(R"({"schema_version":99,"user_id":"u","menu":{},"trials":[]})");
        try {
            read_sequences(in);
            FAIL("expected ValidationError");
        } catch (const ValidationError& e) {
            CHECK(std::string(e.what()).find("schema_version 99") != std::string::npos);
        }
    }
    SECTION("missing field is named with its record") {
        std::ostringstream src;
        write_sequences({tiny_sequence()}, src);
        std::string good = src.str();
        std::istringstream in(good + R"({"schema_version":1,"user_id":"u2"})" + "\n");
        try {
            read_sequences(in);
            FAIL("expected ValidationError");
        } catch (const ValidationError& e) {
            std::string msg = e.what();
            CHECK(msg.find("record 2") != std::string::npos);
            CHECK(msg.find("menu") != std::string::npos);
        }
    }
    SECTION("unknown fields warn but do not fail") {
        std::ostringstream src;
        write_sequences({tiny_sequence()}, src);
        std::string line = src.str();
        line.insert(line.find("\"user_id\""), "\"extra\":true,");
        std::istringstream in(line);
        std::ostringstream warnings;
        std::vector<SelectionSequence> seqs = read_sequences(in, &warnings);
        CHECK(seqs.size() == 1);
        CHECK(warnings.str().find("extra") != std::string::npos);
    }
    SECTION("blank lines are skipped") {
        std::ostringstream src;
        write_sequences({tiny_sequence()}, src);
        std::istringstream in("\n  \n" + src.str() + "\n\n");
        CHECK(read_sequences(in).size() == 1);
    }
}

TEST_CASE("user split keeps every user on one side") {
    std::vector<SelectionSequence> seqs;
    for (int u = 0; u < 10; ++u) {
        for (int m = 0; m < 3; ++m) {
            SelectionSequence s = tiny_sequence();
            s.user_id = "user" + std::to_string(u);
            s.menu.menu_id = "U4-" + std::to_string(m);
            seqs.push_back(s);
        }
    }
    auto [train, heldout] = split_by_user(seqs, 0.5, 42);
    CHECK(train.size() + heldout.size() == seqs.size());
    std::set<std::string> train_users, heldout_users;
    for (const auto& s : train) train_users.insert(s.user_id);
    for (const auto& s : heldout) heldout_users.insert(s.user_id);
    CHECK(train_users.size() == 5);
    CHECK(heldout_users.size() == 5);
    for (const auto& u : train_users) CHECK(heldout_users.count(u) == 0);

    // Deterministic per seed, different across seeds.
    auto [train2, heldout2] = split_by_user(seqs, 0.5, 42);
    std::set<std::string> train_users2;
    for (const auto& s : train2) train_users2.insert(s.user_id);
    CHECK(train_users == train_users2);

    bool any_differs = false;
    for (std::uint64_t seed = 0; seed < 8 && !any_differs; ++seed) {
        auto [t3, h3] = split_by_user(seqs, 0.5, seed);
        std::set<std::string> u3;
        for (const auto& s : t3) u3.insert(s.user_id);
        any_differs = u3 != train_users;
    }
    CHECK(any_differs);
}

TEST_CASE("user split rejects degenerate inputs") {
    std::vector<SelectionSequence> one{tiny_sequence()};
    CHECK_THROWS_AS(split_by_user(one, 0.5, 0), SplitError);
    std::vector<SelectionSequence> two{tiny_sequence(), tiny_sequence()};
    two[1].user_id = "u0002";
    CHECK_THROWS_AS(split_by_user(two, 1.0, 0), SplitError);
    CHECK_THROWS_AS(split_by_user(two, 0.0, 0), SplitError);
    CHECK_THROWS_AS(split_by_user(two, 0.1, 0), SplitError);  // rounds to zero train users
    auto [t, h] = split_by_user(two, 0.5, 0);
    CHECK(t.size() == 1);
    CHECK(h.size() == 1);
}

TEST_CASE("trial CSV export is a stable flat table") {
    std::ostringstream out;
    export_trials_csv({tiny_sequence()}, out);
    std::string csv = out.str();
    CHECK(csv.find("user,menu,org,n,block,target,time_s\n") == 0);
    CHECK(csv.find("u0001,U4-deadbeef,U,4,1,0,1.25") != std::string::npos);
    CHECK(csv.find(",2,1,2\n") != std::string::npos);
}
