#ifndef TSEOH_RUNNER_HPP
#define TSEOH_RUNNER_HPP

#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "tseoh/baselines.hpp"
#include "tseoh/evolution.hpp"
#include "tseoh/gateway.hpp"
#include "tseoh/ingest.hpp"
#include "tseoh/model.hpp"
#include "tseoh/simulator.hpp"

namespace tseoh::runner {

struct ProviderConfig {
    std::string kind = "mock";  // mock | replay | http
    std::string mock_script;
    std::string replay_dir;
    std::string base_url;
    std::string model;
    double timeout_seconds = 120.0;
};

struct RunConfig {
    std::string instance_spec;  // "synth:n=...,m=...,seed=..." or a JSON path
    evolution::EvolutionConfig evo;
    ProviderConfig provider;
    std::string prompt_dir = "prompts";
    std::string out_dir;
};

// --- instance spec parsing ---

/// "synth:n=300,m=10,seed=7[,rate=1.0]" or a path to canonical Instance JSON.
inline Instance resolve_instance(const std::string& spec) {
    if (spec.rfind("synth:", 0) == 0) {
        ingest::TraceSpec ts;
        std::stringstream ss(spec.substr(6));
        std::string kv;
        while (std::getline(ss, kv, ',')) {
            auto eq = kv.find('=');
            if (eq == std::string::npos)
                throw std::runtime_error("bad synth spec fragment: " + kv);
            std::string key = kv.substr(0, eq);
            std::string val = kv.substr(eq + 1);
            if (key == "n") ts.n = std::stoul(val);
            else if (key == "m") ts.m = std::stoul(val);
            else if (key == "seed") ts.seed = std::stoull(val);
            else if (key == "rate") ts.arrival_rate = std::stod(val);
            else throw std::runtime_error("unknown synth spec key: " + key);
        }
        return ingest::synth(ts);
    }
    return load_instance(spec);
}

inline json run_config_to_json(const RunConfig& cfg) {
    json strategies = json::array();
    for (auto s : cfg.evo.strategies) strategies.push_back(gateway::strategy_name(s));
    return json{{"instance", cfg.instance_spec},
                {"population", cfg.evo.population_size},
                {"generations", cfg.evo.generations},
                {"strategies", strategies},
                {"redundancy_tau", cfg.evo.redundancy_tau},
                {"max_attempts", cfg.evo.max_attempts},
                {"seed", cfg.evo.seed},
                {"alpha", cfg.evo.fitness_cfg.alpha},
                {"beta", cfg.evo.fitness_cfg.beta},
                {"call_budget", cfg.evo.call_budget},
                {"provider", {{"kind", cfg.provider.kind},
                              {"mock_script", cfg.provider.mock_script},
                              {"replay_dir", cfg.provider.replay_dir},
                              {"base_url", cfg.provider.base_url},
                              {"model", cfg.provider.model},
                              {"timeout_seconds", cfg.provider.timeout_seconds}}},
                {"prompt_dir", cfg.prompt_dir}};
}

inline std::shared_ptr<gateway::Provider> make_provider(const ProviderConfig& cfg,
                                                        const std::string& run_dir) {
    if (cfg.kind == "mock") {
        if (cfg.mock_script.empty())
            throw std::runtime_error("mock provider requires a script file (--mock-script)");
        return std::make_shared<gateway::MockProvider>(
            gateway::MockProvider::from_file(cfg.mock_script));
    }
    if (cfg.kind == "replay") {
        if (cfg.replay_dir.empty())
            throw std::runtime_error("replay provider requires a fixture directory (--replay-dir)");
        bool has_fixtures = false;
        if (std::filesystem::is_directory(cfg.replay_dir))
            for (const auto& e : std::filesystem::directory_iterator(cfg.replay_dir))
                if (e.path().extension() == ".json") { has_fixtures = true; break; }
        if (has_fixtures) return std::make_shared<gateway::ReplayProvider>(cfg.replay_dir);
        // first run: go live and record into the fixture directory
        auto live = std::make_shared<gateway::HttpProvider>(gateway::HttpProviderConfig{
            cfg.base_url, cfg.model, "TSEOH_API_KEY", cfg.timeout_seconds});
        return std::make_shared<gateway::RecordingProvider>(live, cfg.replay_dir);
    }
    if (cfg.kind == "http") {
        auto live = std::make_shared<gateway::HttpProvider>(gateway::HttpProviderConfig{
            cfg.base_url, cfg.model, "TSEOH_API_KEY", cfg.timeout_seconds});
        std::string dir = run_dir.empty() ? std::string("fixtures")
                                          : (std::filesystem::path(run_dir) / "fixtures").string();
        return std::make_shared<gateway::RecordingProvider>(live, dir);
    }
    throw std::runtime_error("unknown provider kind: " + cfg.kind);
}

struct EvolveOutcome {
    evolution::Heuristic best;
    SimReport best_report;
    std::vector<json> logs;
};

/// One full evolution run: snapshot the config, run the loop, simulate
/// the archive best and persist report.json next to the logs.
inline EvolveOutcome run_evolve(const RunConfig& cfg) {
    Instance inst = resolve_instance(cfg.instance_spec);
    auto violations = validate_instance(inst);
    if (!violations.empty())
        throw std::runtime_error("instance invalid: " + violations.front());

    if (!cfg.out_dir.empty()) {
        std::filesystem::create_directories(cfg.out_dir);
        std::ofstream snap(std::filesystem::path(cfg.out_dir) / "config.json");
        snap << run_config_to_json(cfg).dump(2) << "\n";
    }

    auto provider = make_provider(cfg.provider, cfg.out_dir);
    auto prompts = gateway::PromptLibrary::load(cfg.prompt_dir);
    evolution::Evaluator evaluator({inst}, cfg.evo.fitness_cfg);
    evolution::Evolver evolver(cfg.evo, prompts, *provider, evaluator, cfg.out_dir);
    evolution::RunResult result = evolver.run();

    auto parsed = dsl::parse(result.best.source);
    SimReport report = simulate(inst, make_dsl_policy(parsed.expr), cfg.evo.fitness_cfg);
    if (!cfg.out_dir.empty()) {
        std::ofstream out(std::filesystem::path(cfg.out_dir) / "report.json");
        out << report_to_json(report, cfg.evo.fitness_cfg).dump(2) << "\n";
        write_utilization_csv(report,
                              (std::filesystem::path(cfg.out_dir) / "utilization.csv").string());
    }
    return EvolveOutcome{result.best, std::move(report), result.logs};
}

// --- ablation ---

inline std::string group_name(const std::vector<gateway::Strategy>& group) {
    std::string name;
    for (auto s : group) {
        if (!name.empty()) name += "+";
        name += gateway::strategy_name(s);
    }
    return name;
}

inline std::vector<gateway::Strategy> parse_group(const std::string& text) {
    std::vector<gateway::Strategy> group;
    std::stringstream ss(text);
    std::string part;
    while (std::getline(ss, part, '+')) {
        auto s = gateway::strategy_from_name(part);
        if (!s || *s == gateway::Strategy::INIT)
            throw std::runtime_error("unknown strategy in group: " + part);
        group.push_back(*s);
    }
    if (group.empty()) throw std::runtime_error("empty strategy group");
    return group;
}

/// The strategy groups of the ablation study: all singles, six pairs and
/// four triples.
inline std::vector<std::vector<gateway::Strategy>> default_ablation_groups() {
    using S = gateway::Strategy;
    return {{S::M1}, {S::M2}, {S::E1}, {S::E2},
            {S::M1, S::M2}, {S::M2, S::E1}, {S::E1, S::E2},
            {S::M1, S::E2}, {S::M2, S::E2}, {S::M1, S::E1},
            {S::M2, S::E1, S::E2}, {S::M1, S::E1, S::E2},
            {S::M1, S::M2, S::E1}, {S::M1, S::M2, S::E2}};
}

struct AblationRow {
    std::string group;
    bool ok = false;
    double utilization = 0.0;
    double running_time = 0.0;
    double fitness = 0.0;
    std::string error;
};

inline std::vector<AblationRow> run_ablation(const RunConfig& base,
                                             const std::vector<std::vector<gateway::Strategy>>& groups) {
    if (groups.empty()) throw std::runtime_error("ablation needs at least one strategy group");
    std::vector<AblationRow> rows;
    for (const auto& group : groups) {
        AblationRow row;
        row.group = group_name(group);
        RunConfig cfg = base;
        cfg.evo.strategies = group;
        if (!base.out_dir.empty())
            cfg.out_dir = (std::filesystem::path(base.out_dir) / row.group).string();
        try {
            EvolveOutcome outcome = run_evolve(cfg);
            row.ok = true;
            row.utilization = outcome.best_report.avg_utilization;
            row.running_time = outcome.best_report.avg_running_time;
            row.fitness = outcome.best_report.fitness;
        } catch (const std::exception& ex) {
            row.error = ex.what();  // other groups continue
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

inline std::string ablation_csv(const std::vector<AblationRow>& rows) {
    std::ostringstream out;
    out << "group,resource_utilization_rate,running_time,fitness,error\n";
    for (const auto& r : rows) {
        out << r.group << ",";
        if (r.ok) {
            char buf[96];
            std::snprintf(buf, sizeof(buf), "%.6f,%.6f,%.6f,", r.utilization, r.running_time,
                          r.fitness);
            out << buf << "\n";
        } else {
            out << ",,," << r.error << "\n";
        }
    }
    return out.str();
}

inline std::string ablation_markdown(const std::vector<AblationRow>& rows) {
    std::ostringstream out;
    out << "| Group | Resource Utilisation Rate | Running Time | Fitness |\n";
    out << "|---|---|---|---|\n";
    for (const auto& r : rows) {
        if (r.ok) {
            char buf[128];
            std::snprintf(buf, sizeof(buf), "| %s | %.1f%% | %.1f | %.2f |\n", r.group.c_str(),
                          r.utilization * 100.0, r.running_time, r.fitness);
            out << buf;
        } else {
            out << "| " << r.group << " | failed | failed | " << r.error << " |\n";
        }
    }
    return out.str();
}

// --- run-directory reports ---

struct BaselineRow {
    std::string name;
    double utilization = 0.0;
    double running_time = 0.0;
    double fitness = 0.0;
};

inline std::vector<BaselineRow> baseline_comparison(const Instance& inst, const FitnessConfig& cfg,
                                                    std::uint64_t seed, int aco_iterations = 10,
                                                    int aco_ants = 10) {
    std::vector<BaselineRow> rows;
    auto add = [&](const std::string& name, const SimReport& r) {
        rows.push_back({name, r.avg_utilization, r.avg_running_time, r.fitness});
    };
    add("FCFS", simulate(inst, baselines::fcfs_policy(), cfg));
    add("HRRN", simulate(inst, baselines::hrrn_policy(), cfg));
    add("Random", simulate(inst, baselines::random_policy(seed), cfg));
    add("Greedy", simulate(inst, baselines::greedy_policy(), cfg));
    baselines::AcoParams aco;
    aco.iterations = aco_iterations;
    aco.ants = aco_ants;
    aco.seed = seed;
    auto seq = baselines::aco_schedule(inst, aco, cfg);
    add("ACO", simulate_sequence(inst, seq, cfg));
    return rows;
}

struct RunReport {
    json config;
    std::vector<json> generations;
};

inline RunReport read_run_dir(const std::string& run_dir) {
    RunReport r;
    auto cfg_path = std::filesystem::path(run_dir) / "config.json";
    std::ifstream cfg_in(cfg_path);
    if (!cfg_in) throw std::runtime_error("missing config snapshot: " + cfg_path.string());
    r.config = json::parse(cfg_in);

    std::vector<std::filesystem::path> gen_files;
    for (const auto& e : std::filesystem::directory_iterator(run_dir)) {
        auto name = e.path().filename().string();
        if (name.rfind("gen_", 0) == 0 && e.path().extension() == ".json")
            gen_files.push_back(e.path());
    }
    std::sort(gen_files.begin(), gen_files.end());
    if (gen_files.empty()) throw std::runtime_error("no generation logs in " + run_dir);
    for (const auto& f : gen_files) {
        std::ifstream in(f);
        json log = json::parse(in, nullptr, false);
        if (log.is_discarded() || !evolution::log_checksum_ok(log))
            throw std::runtime_error("integrity check failed for " + f.string());
        r.generations.push_back(std::move(log));
    }
    return r;
}

inline std::string render_report_markdown(const RunReport& run) {
    std::ostringstream out;
    out << "# Run report\n\n";
    out << "Instance: `" << run.config.value("instance", "?") << "`, alpha="
        << run.config.value("alpha", 0.0) << ", beta=" << run.config.value("beta", 0.0) << "\n\n";

    out << "## Archive fitness per generation\n\n| Generation | Archive best fitness |\n|---|---|\n";
    for (const auto& g : run.generations) {
        out << "| " << g.value("generation", -1) << " | ";
        if (g.contains("archive_best") && !g["archive_best"].is_null())
            out << g["archive_best"].value("fitness", 0.0);
        else
            out << "n/a";
        out << " |\n";
    }

    out << "\n## Offspring per strategy (accepted)\n\n";
    std::map<std::string, int> histogram;
    for (const auto& g : run.generations)
        for (const auto& h : g.value("offspring", json::array()))
            if (!h.value("fitness", json(nullptr)).is_null())
                histogram[h.value("strategy", "?")]++;
    out << "| Strategy | Accepted offspring |\n|---|---|\n";
    for (const auto& [name, count] : histogram) out << "| " << name << " | " << count << " |\n";

    Instance inst = resolve_instance(run.config.at("instance").get<std::string>());
    FitnessConfig fcfg{run.config.value("alpha", 150.0), run.config.value("beta", 1.0)};
    out << "\n## Final best vs baselines\n\n| Policy | Utilization | Running time | Fitness |\n|---|---|---|---|\n";
    const auto& last = run.generations.back();
    if (last.contains("archive_best") && !last["archive_best"].is_null()) {
        auto parsed = dsl::parse(last["archive_best"].value("source", "0"));
        if (parsed.ok()) {
            SimReport r = simulate(inst, make_dsl_policy(parsed.expr), fcfg);
            char buf[128];
            std::snprintf(buf, sizeof(buf), "| evolved best | %.4f | %.4f | %.4f |\n",
                          r.avg_utilization, r.avg_running_time, r.fitness);
            out << buf;
        }
    }
    for (const auto& b : baseline_comparison(inst, fcfg, run.config.value("seed", 0ULL))) {
        char buf[128];
        std::snprintf(buf, sizeof(buf), "| %s | %.4f | %.4f | %.4f |\n", b.name.c_str(),
                      b.utilization, b.running_time, b.fitness);
        out << buf;
    }
    return out.str();
}

inline std::string render_report_csv(const RunReport& run) {
    std::ostringstream out;
    out << "generation,archive_best_fitness\n";
    for (const auto& g : run.generations) {
        out << g.value("generation", -1) << ",";
        if (g.contains("archive_best") && !g["archive_best"].is_null())
            out << g["archive_best"].value("fitness", 0.0);
        out << "\n";
    }
    return out.str();
}

}  // namespace tseoh::runner

#endif  // TSEOH_RUNNER_HPP
