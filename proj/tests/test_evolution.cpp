#include <doctest.h>

#include <filesystem>
#include <map>
#include <random>

#include "testing.hpp"
#include "tseoh/evolution.hpp"

using namespace tseoh;
using evolution::Heuristic;
using gateway::Strategy;

namespace {

struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const char* tag) {
        path = std::filesystem::temp_directory_path() /
               (std::string("tseoh_evo_") + tag + "_" + std::to_string(::getpid()));
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
};

gateway::PromptLibrary repo_prompts() {
    return gateway::PromptLibrary::load(std::string(TSEOH_REPO_DIR) + "/prompts");
}

Heuristic make_heuristic(int id, const std::string& description, const std::string& source,
                         std::optional<double> fitness) {
    Heuristic h;
    h.id = id;
    h.description = description;
    h.source = source;
    auto parsed = dsl::parse(source);
    if (parsed.ok()) h.canonical = dsl::canonicalize(parsed.expr);
    h.fitness = fitness;
    return h;
}

evolution::Evaluator small_evaluator() {
    ingest::TraceSpec spec;
    spec.n = 20;
    spec.m = 3;
    spec.seed = 99;
    return evolution::Evaluator({ingest::synth(spec)}, FitnessConfig{});
}

void add_pair(gateway::MockProvider& mock, Strategy s, const std::string& description,
              const std::string& source) {
    mock.add_reply(s, gateway::format_description_reply(description));
    mock.add_reply(s, gateway::format_code_reply(source));
}

}  // namespace

TEST_CASE("redundancy detects near-identical descriptions and equal ASTs") {
    std::vector<Heuristic> pool = {
        make_heuristic(0, "Schedule the task with the highest wait time first.", "wait", 1.0)};

    // same words reshuffled: high Jaccard similarity
    auto near = make_heuristic(1, "First schedule the task with the highest wait time.",
                               "wait * 2", std::nullopt);
    CHECK(evolution::is_redundant(near, pool, 0.85));

    // different wording but canonically identical expression
    auto same_ast = make_heuristic(2, "Prefer whichever request arrived earliest of all.",
                                   "(wait)", std::nullopt);
    CHECK(evolution::is_redundant(same_ast, pool, 0.85));

    // both description and structure differ
    auto fresh = make_heuristic(3, "Pack small demands onto nearly full servers.",
                                "free_cpu - cpu", std::nullopt);
    CHECK_FALSE(evolution::is_redundant(fresh, pool, 0.85));
}

TEST_CASE("jaccard edge cases") {
    CHECK(evolution::jaccard({}, {}) == 1.0);
    CHECK(evolution::jaccard({"a"}, {"b"}) == 0.0);
    CHECK(evolution::jaccard({"a", "b"}, {"b", "c"}) == doctest::Approx(1.0 / 3.0));
    CHECK(evolution::token_set("Wait-time, WAIT time!") ==
          std::set<std::string>{"wait", "time"});
}

TEST_CASE("tournament favors the fitter member and rejects invalid ones") {
    std::vector<Heuristic> members = {make_heuristic(0, "a", "cpu", 10.0),
                                      make_heuristic(1, "b", "mem", 5.0),
                                      make_heuristic(2, "c", "io", std::nullopt)};
    std::mt19937_64 rng(1);
    std::map<int, int> wins;
    for (int i = 0; i < 10000; ++i) wins[evolution::select_parent(members, rng).id]++;
    // the invalid member loses both its pairings; the best wins two of three
    CHECK(wins[2] == 0);
    CHECK(wins[0] > wins[1]);
    CHECK(wins[1] > 0);

    std::vector<Heuristic> one = {make_heuristic(0, "a", "cpu", 1.0)};
    CHECK_THROWS_AS(evolution::select_parent(one, rng), std::logic_error);
}

TEST_CASE("fitter orders by validity, fitness, then id") {
    auto a = make_heuristic(0, "a", "cpu", 2.0);
    auto b = make_heuristic(1, "b", "mem", 3.0);
    auto c = make_heuristic(2, "c", "io", std::nullopt);
    auto d = make_heuristic(3, "d", "bw", 3.0);
    CHECK(evolution::fitter(b, a));
    CHECK(evolution::fitter(a, c));
    CHECK(evolution::fitter(b, d));  // equal fitness, lower id
    CHECK_FALSE(evolution::fitter(c, a));
}

TEST_CASE("init population fills N slots from scripted replies") {
    auto lib = repo_prompts();
    gateway::MockProvider mock;
    add_pair(mock, Strategy::INIT, "Prefer the longest waiting request in the queue.", "wait");
    add_pair(mock, Strategy::INIT, "Prefer short tasks to drain the backlog quickly.", "0 - exec");
    add_pair(mock, Strategy::INIT, "Pack tasks where the remaining cpu headroom is smallest.",
             "0 - free_cpu");
    add_pair(mock, Strategy::INIT, "Balance response ratio against memory pressure at once.",
             "(wait + exec) / exec - mem / cap_mem");

    evolution::EvolutionConfig cfg;
    cfg.population_size = 4;
    evolution::Evolver evolver(cfg, lib, mock, small_evaluator());
    auto pop = evolver.init_population();

    REQUIRE(pop.members.size() == 4);
    for (const auto& h : pop.members) {
        CHECK(h.valid());
        CHECK_FALSE(h.fallback);
        CHECK(h.generation == 0);
    }
    CHECK(pop.members[1].source == "0 - exec");
    REQUIRE(pop.archive_best.has_value());
}

TEST_CASE("persistent duplicates fall back after max attempts") {
    auto lib = repo_prompts();
    gateway::MockProvider mock;
    add_pair(mock, Strategy::INIT, "Prefer the request with the largest cpu demand first.", "cpu");
    add_pair(mock, Strategy::INIT, "Choose servers with lots of spare memory available now.",
             "free_mem");
    // every further pair repeats the first description verbatim, so both
    // remaining slots burn through max_attempts on redundancy
    for (int i = 0; i < 6; ++i)
        add_pair(mock, Strategy::INIT, "Prefer the request with the largest cpu demand first.",
                 "cpu * " + std::to_string(i + 2));

    evolution::EvolutionConfig cfg;
    cfg.population_size = 4;
    cfg.max_attempts = 3;
    evolution::Evolver evolver(cfg, lib, mock, small_evaluator());
    auto pop = evolver.init_population();

    REQUIRE(pop.members.size() == 4);
    CHECK_FALSE(pop.members[0].fallback);
    CHECK_FALSE(pop.members[1].fallback);
    CHECK(pop.members[2].fallback);
    CHECK(pop.members[3].fallback);
    CHECK(pop.members[2].valid());  // fallbacks still carry a fitness

    int redundant = 0;
    for (const auto& e : evolver.logs().back().at("attempts"))
        if (e.at("outcome") == "redundant") ++redundant;
    CHECK(redundant == 6);
}

TEST_CASE("evolve_generation produces strategies x N offspring and keeps the top N") {
    auto lib = repo_prompts();
    gateway::MockProvider mock;
    add_pair(mock, Strategy::INIT, "Prefer the longest waiting request in the queue.", "wait");
    add_pair(mock, Strategy::INIT, "Prefer short tasks to drain the backlog quickly.", "0 - exec");
    // two strategies x two slots = four offspring
    add_pair(mock, Strategy::M1, "Weight waiting time by the cpu demand of the task.",
             "wait * cpu");
    add_pair(mock, Strategy::M1, "Divide waiting time by the execution time instead.",
             "wait / exec");
    add_pair(mock, Strategy::M2, "Add a bonus for servers with plenty of free bandwidth.",
             "wait + free_bw");
    add_pair(mock, Strategy::M2, "Penalize requests with heavy memory footprints slightly.",
             "wait - mem");

    evolution::EvolutionConfig cfg;
    cfg.population_size = 2;
    cfg.strategies = {Strategy::M1, Strategy::M2};
    evolution::Evolver evolver(cfg, lib, mock, small_evaluator());
    auto pop = evolver.init_population();
    auto next = evolver.evolve_generation(pop);

    CHECK(next.generation == 1);
    REQUIRE(next.members.size() == 2);
    const auto& log = evolver.logs().back();
    CHECK(log.at("offspring").size() == 4);
    // survivors are the two fittest offspring, in fitness order
    double f0 = next.members[0].fitness.value();
    double f1 = next.members[1].fitness.value();
    CHECK(f0 >= f1);
    for (const auto& h : next.members) {
        CHECK(h.generation == 1);
        CHECK(h.parent_id >= 0);
    }
}

TEST_CASE("unparseable offspring are kept as invalid, not regenerated forever") {
    auto lib = repo_prompts();
    gateway::MockProvider mock;
    add_pair(mock, Strategy::INIT, "Prefer the longest waiting request in the queue.", "wait");
    add_pair(mock, Strategy::INIT, "Prefer short tasks to drain the backlog quickly.", "0 - exec");
    add_pair(mock, Strategy::M1, "A plan that never compiles to a usable expression.",
             "this is not a formula");
    add_pair(mock, Strategy::M1, "Another plan that also fails to compile cleanly.",
             "neither is this one");

    evolution::EvolutionConfig cfg;
    cfg.population_size = 2;
    cfg.strategies = {Strategy::M1};
    cfg.max_attempts = 1;
    evolution::Evolver evolver(cfg, lib, mock, small_evaluator());
    auto pop = evolver.init_population();
    auto next = evolver.evolve_generation(pop);

    const auto& log = evolver.logs().back();
    REQUIRE(log.at("offspring").size() == 2);
    for (const auto& off : log.at("offspring")) {
        CHECK(off.at("fitness").is_null());
        CHECK(off.at("failure").get<std::string>().find("parse error") != std::string::npos);
    }
    // no valid offspring: the population is padded with fallbacks
    REQUIRE(next.members.size() == 2);
    CHECK(next.members[0].fallback);
    CHECK(next.members[1].fallback);
    // but the archive still remembers the best INIT member
    REQUIRE(next.archive_best.has_value());
    CHECK_FALSE(next.archive_best->fallback);
}

TEST_CASE("full runs are deterministic and persist artifacts") {
    auto lib = repo_prompts();
    auto script = [] {
        gateway::MockProvider mock;
        add_pair(mock, Strategy::INIT, "Prefer the longest waiting request in the queue.", "wait");
        add_pair(mock, Strategy::INIT, "Prefer short tasks to drain the backlog quickly.",
                 "0 - exec");
        add_pair(mock, Strategy::M1, "Weight waiting time by the cpu demand of the task.",
                 "wait * cpu");
        add_pair(mock, Strategy::M1, "Divide waiting time by the execution time instead.",
                 "wait / exec");
        add_pair(mock, Strategy::E2, "Rescale the wait term with a small constant factor.",
                 "wait * 1.25");
        add_pair(mock, Strategy::E2, "Rescale the wait term with a large constant factor.",
                 "wait * 8");
        return mock;
    };

    evolution::EvolutionConfig cfg;
    cfg.population_size = 2;
    cfg.generations = 1;
    cfg.strategies = {Strategy::M1, Strategy::E2};
    cfg.seed = 12345;

    TempDir dir("run");
    auto mock_a = script();
    evolution::Evolver a(cfg, lib, mock_a, small_evaluator(), dir.path.string());
    auto result_a = a.run();

    auto mock_b = script();
    evolution::Evolver b(cfg, lib, mock_b, small_evaluator());
    auto result_b = b.run();

    REQUIRE(result_a.logs.size() == result_b.logs.size());
    for (std::size_t i = 0; i < result_a.logs.size(); ++i)
        CHECK(result_a.logs[i] == result_b.logs[i]);
    CHECK(result_a.best.source == result_b.best.source);

    CHECK(std::filesystem::exists(dir.path / "gen_000.json"));
    CHECK(std::filesystem::exists(dir.path / "gen_001.json"));
    CHECK(std::filesystem::exists(dir.path / "best.score"));
    CHECK(std::filesystem::exists(dir.path / "best.json"));
}

TEST_CASE("archive best never decreases across generations") {
    auto lib = repo_prompts();
    gateway::MockProvider mock;
    add_pair(mock, Strategy::INIT, "Prefer the longest waiting request in the queue.", "wait");
    add_pair(mock, Strategy::INIT, "Prefer short tasks to drain the backlog quickly.", "0 - exec");
    // deliberately weak offspring in both rounds
    add_pair(mock, Strategy::M1, "Score every candidate by its raw bandwidth demand.", "bw");
    add_pair(mock, Strategy::M1, "Score every candidate by its raw memory demand.", "mem");
    add_pair(mock, Strategy::M1, "Score every candidate by its raw io demand.", "io");
    add_pair(mock, Strategy::M1, "Score every candidate by its arrival order index.", "0 - arrival");

    evolution::EvolutionConfig cfg;
    cfg.population_size = 2;
    cfg.generations = 2;
    cfg.strategies = {Strategy::M1};
    evolution::Evolver evolver(cfg, lib, mock, small_evaluator());
    auto result = evolver.run();

    double prev = -std::numeric_limits<double>::infinity();
    for (const auto& log : result.logs) {
        REQUIRE_FALSE(log.at("archive_best").is_null());
        double f = log.at("archive_best").at("fitness").get<double>();
        CHECK(f >= prev);
        prev = f;
    }
}

TEST_CASE("call budget aborts the run") {
    auto lib = repo_prompts();
    gateway::MockProvider mock;
    add_pair(mock, Strategy::INIT, "Prefer the longest waiting request in the queue.", "wait");
    mock.set_repeat_last(true);

    evolution::EvolutionConfig cfg;
    cfg.population_size = 2;
    cfg.call_budget = 1;
    evolution::Evolver evolver(cfg, lib, mock, small_evaluator());
    CHECK_THROWS_AS(evolver.init_population(), gateway::BudgetExceededError);
}

TEST_CASE("sealed logs detect tampering") {
    json log{{"generation", 3}, {"offspring", json::array()}};
    json sealed = evolution::seal_log(log);
    CHECK(evolution::log_checksum_ok(sealed));
    json tampered = sealed;
    tampered["generation"] = 4;
    CHECK_FALSE(evolution::log_checksum_ok(tampered));
    CHECK_FALSE(evolution::log_checksum_ok(log));  // no checksum at all
}
