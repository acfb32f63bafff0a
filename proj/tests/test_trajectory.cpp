#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "flowaudit/errors.hpp"
#include "flowaudit/rng.hpp"
#include "flowaudit/trajectory.hpp"

using namespace flowaudit;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
    return fs::temp_directory_path() / ("flowaudit_test_" + name);
}

void write_lines(const fs::path& p, const std::vector<std::string>& lines) {
    std::ofstream out(p, std::ios::binary);
    for (const auto& l : lines) out << l << '\n';
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

// Small random trajectory, independent of the production generator.
Trajectory random_trajectory(uint64_t seed) {
    Rng rng(seed);
    Trajectory traj;
    traj.id = "rt-" + std::to_string(seed);
    const int n = 3 + static_cast<int>(rng.uniform_index(3));
    for (int i = 0; i < n; ++i) traj.agents.push_back("a" + std::to_string(i));
    traj.dim = 2 + static_cast<int>(rng.uniform_index(4));
    const int T = 2 + static_cast<int>(rng.uniform_index(5));
    traj.rounds.resize(T);
    for (int t = 0; t < T; ++t) {
        const int msgs = 1 + static_cast<int>(rng.uniform_index(4));
        for (int k = 0; k < msgs; ++k) {
            Message m;
            m.round = t;
            m.sender = static_cast<int>(rng.uniform_index(n));
            int rec = static_cast<int>(rng.uniform_index(n));
            if (rec == m.sender) rec = (rec + 1) % n;
            m.recipients = {rec};
            if (rng.bernoulli(0.3)) m.text = "memo " + std::to_string(k);
            for (int j = 0; j < traj.dim; ++j) m.embedding.push_back(rng.normal());
            m.perplexity = rng.uniform(0.5, 40.0);
            traj.rounds[t].push_back(std::move(m));
        }
    }
    if (rng.bernoulli(0.4)) {
        traj.label = Label::risk;
        RiskAnnotations ann;
        ann.t_start = static_cast<int>(rng.uniform_index(T));
        ann.t_sem = ann.t_start + static_cast<int>(rng.uniform_index(T - ann.t_start));
        ann.archetype = Archetype::echo_chamber;
        ann.instigator = traj.agents[0];
        traj.risk = ann;
    }
    return traj;
}

}  // namespace

TEST_CASE("load parses a small hand-written file") {
    const auto path = temp_file("small.traj.jsonl");
    write_lines(path, {
        R"({"agents":["hub","a","b"],"dim":4,"label":"normal"})",
        R"({"traj_id":"t0","round":0,"agent":"hub","recipients":["a","b"],"embedding":[1,0,0,0],"ppl":3.5})",
        R"({"traj_id":"t0","round":1,"agent":"a","recipients":["hub"],"embedding":[0,1,0,0],"ppl":2})",
        R"({"traj_id":"t0","round":2,"agent":"b","recipients":["hub"],"text":"ok","embedding":[0,0,1,0],"ppl":1})",
    });
    const Trajectory traj = load_trajectory(path.string());
    CHECK(traj.n_agents() == 3);
    CHECK(traj.n_rounds() == 3);
    CHECK(traj.dim == 4);
    CHECK(traj.rounds[2][0].text.value() == "ok");
    CHECK(traj.rounds[0][0].recipients.size() == 2);
    fs::remove(path);
}

TEST_CASE("dimension mismatch is a schema error naming the line") {
    const auto path = temp_file("dim.traj.jsonl");
    write_lines(path, {
        R"({"agents":["hub","a"],"dim":4,"label":"normal"})",
        R"({"traj_id":"t0","round":0,"agent":"hub","recipients":["a"],"embedding":[1,0,0,0],"ppl":1})",
        R"({"traj_id":"t0","round":1,"agent":"a","recipients":["hub"],"embedding":[1,0,0],"ppl":1})",
    });
    CHECK_THROWS_WITH_AS(load_trajectory(path.string()),
                         doctest::Contains("line 3"), SchemaError);
    fs::remove(path);
}

TEST_CASE("malformed json is a parse error with a line number") {
    const auto path = temp_file("malformed.traj.jsonl");
    write_lines(path, {
        R"({"agents":["hub","a"],"dim":2,"label":"normal"})",
        R"({"traj_id":"t0","round":0,"agent":"hub","recipients":["a"],"embedding":[1,0],"ppl":1})",
        R"(this is not json)",
    });
    CHECK_THROWS_WITH_AS(load_trajectory(path.string()),
                         doctest::Contains("line 3"), ParseError);
    fs::remove(path);
}

TEST_CASE("non-monotone rounds rejected") {
    const auto path = temp_file("rounds.traj.jsonl");
    write_lines(path, {
        R"({"agents":["hub","a"],"dim":2,"label":"normal"})",
        R"({"traj_id":"t0","round":1,"agent":"hub","recipients":["a"],"embedding":[1,0],"ppl":1})",
        R"({"traj_id":"t0","round":0,"agent":"a","recipients":["hub"],"embedding":[1,0],"ppl":1})",
    });
    CHECK_THROWS_AS(load_trajectory(path.string()), SchemaError);
    fs::remove(path);
}

TEST_CASE("risk label requires annotations within bounds") {
    const auto path = temp_file("risk.traj.jsonl");
    write_lines(path, {
        R"({"agents":["hub","a"],"dim":2,"label":"risk","t_start":1,"t_sem":9,"archetype":"echo_chamber"})",
        R"({"traj_id":"t0","round":0,"agent":"hub","recipients":["a"],"embedding":[1,0],"ppl":1})",
    });
    CHECK_THROWS_AS(load_trajectory(path.string()), SchemaError);
    fs::remove(path);
}

TEST_CASE("save rejects an empty rounds list before writing") {
    Trajectory traj;
    traj.id = "empty";
    traj.agents = {"a", "b"};
    traj.dim = 2;
    const auto path = temp_file("empty.traj.jsonl");
    CHECK_THROWS_AS(save_trajectory(traj, path.string()), SchemaError);
    CHECK(!fs::exists(path));
}

TEST_CASE("round-trip save/load is byte identical on 50 random trajectories") {
    for (uint64_t seed = 1; seed <= 50; ++seed) {
        const Trajectory traj = random_trajectory(seed);
        const auto p1 = temp_file("rt1.jsonl");
        const auto p2 = temp_file("rt2.jsonl");
        save_trajectory(traj, p1.string());
        const Trajectory loaded = load_trajectory(p1.string());
        save_trajectory(loaded, p2.string());
        REQUIRE(slurp(p1) == slurp(p2));

        // and two saves of the same value are identical
        save_trajectory(traj, p2.string());
        REQUIRE(slurp(p1) == slurp(p2));
        fs::remove(p1);
        fs::remove(p2);
    }
}

TEST_CASE("carry_forward fills inactive rows and is idempotent") {
    const int n = 3, d = 2;
    std::vector<SystemState> states(3);
    for (int t = 0; t < 3; ++t) {
        states[t].round = t;
        states[t].semantics = Matrix(n, d, 0.0);
        states[t].active.assign(n, 0);
    }
    // agent 0 speaks only at t=0; agent 1 every round; agent 2 never
    states[0].active = {1, 1, 0};
    states[0].semantics(0, 0) = 5.0;
    states[0].semantics(1, 1) = 1.0;
    states[1].active = {0, 1, 0};
    states[1].semantics(1, 1) = 2.0;
    states[2].active = {0, 1, 0};
    states[2].semantics(1, 1) = 3.0;

    const auto filled = carry_forward(states);
    CHECK(filled[1].semantics(0, 0) == 5.0);
    CHECK(filled[2].semantics(0, 0) == 5.0);
    CHECK(filled[2].semantics(1, 1) == 3.0);
    for (int t = 0; t < 3; ++t) {
        CHECK(filled[t].semantics(2, 0) == 0.0);
        CHECK(filled[t].semantics(2, 1) == 0.0);
    }
    const auto twice = carry_forward(filled);
    for (int t = 0; t < 3; ++t) CHECK(twice[t].semantics == filled[t].semantics);
}

TEST_CASE("all agents active means carry_forward is the identity") {
    Rng rng(3);
    const int n = 4, d = 3;
    std::vector<SystemState> states(4);
    for (int t = 0; t < 4; ++t) {
        states[t].round = t;
        states[t].semantics = Matrix(n, d);
        for (int i = 0; i < n; ++i) {
            for (int k = 0; k < d; ++k) states[t].semantics(i, k) = rng.normal();
        }
        states[t].active.assign(n, 1);
    }
    const auto out = carry_forward(states);
    for (int t = 0; t < 4; ++t) CHECK(out[t].semantics == states[t].semantics);
}
