// tseoh: experiment harness for evolving and evaluating edge-server
// task-scheduling heuristics.
//
// Subcommands: evolve, simulate, ingest, ablate, report.
// Exit codes: 0 success, 1 user/config error, 2 runtime failure.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tseoh/baselines.hpp"
#include "tseoh/ingest.hpp"
#include "tseoh/runner.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::vector<tseoh::gateway::Strategy> parse_strategies(const std::string& csv) {
    std::vector<tseoh::gateway::Strategy> out;
    std::stringstream ss(csv);
    std::string part;
    while (std::getline(ss, part, ',')) {
        auto s = tseoh::gateway::strategy_from_name(part);
        if (!s || *s == tseoh::gateway::Strategy::INIT)
            throw ConfigError("unknown strategy: " + part);
        out.push_back(*s);
    }
    if (out.empty()) throw ConfigError("strategy list is empty");
    return out;
}

void apply_config_file(CLI::App& app, const std::string& path) {
    // JSON config file with flat keys mirroring the long flag names;
    // explicit CLI flags win.
    if (path.empty()) return;
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    tseoh::json j = tseoh::json::parse(in, nullptr, false);
    if (j.is_discarded()) throw ConfigError("config file is not valid JSON: " + path);
    for (const auto& [key, value] : j.items()) {
        auto* opt = app.get_option_no_throw("--" + key);
        if (!opt) throw ConfigError("config file key has no matching flag: " + key);
        if (opt->count() > 0) continue;  // flag wins
        std::string text = value.is_string() ? value.get<std::string>() : value.dump();
        opt->add_result(text);
        opt->run_callback();  // add_result alone does not update the bound variable
    }
}

void check_provider_preconditions(const tseoh::runner::ProviderConfig& p) {
    if (p.kind == "http" || p.kind == "replay") {
        bool needs_key = p.kind == "http";
        if (p.kind == "replay") {
            bool has_fixtures = false;
            if (std::filesystem::is_directory(p.replay_dir))
                for (const auto& e : std::filesystem::directory_iterator(p.replay_dir))
                    if (e.path().extension() == ".json") { has_fixtures = true; break; }
            needs_key = !has_fixtures;
        }
        if (needs_key) {
            const char* key = std::getenv("TSEOH_API_KEY");
            if (!key || !*key)
                throw ConfigError("provider '" + p.kind + "' requires TSEOH_API_KEY to be set");
            if (p.base_url.empty()) throw ConfigError("live provider requires --base-url");
            if (p.model.empty()) throw ConfigError("live provider requires --model");
        }
    }
    if (p.kind == "mock" && p.mock_script.empty())
        throw ConfigError("mock provider requires --mock-script");
}

void add_evolve_options(CLI::App* cmd, tseoh::runner::RunConfig& cfg, std::string& strategies,
                        std::string& config_file) {
    cmd->add_option("--config", config_file, "JSON config file; CLI flags override its keys");
    cmd->add_option("--instance", cfg.instance_spec,
                    "instance JSON path or synth:n=...,m=...,seed=...");
    cmd->add_option("--population,-N", cfg.evo.population_size, "population size N");
    cmd->add_option("--generations,-G", cfg.evo.generations, "number of evolution rounds G");
    cmd->add_option("--strategies", strategies, "comma-separated subset of M1,M2,E1,E2");
    cmd->add_option("--tau", cfg.evo.redundancy_tau, "redundancy Jaccard threshold");
    cmd->add_option("--max-attempts", cfg.evo.max_attempts, "regeneration attempts per slot");
    cmd->add_option("--seed", cfg.evo.seed, "root RNG seed");
    cmd->add_option("--alpha", cfg.evo.fitness_cfg.alpha, "fitness utilization weight");
    cmd->add_option("--beta", cfg.evo.fitness_cfg.beta, "fitness running-time weight");
    cmd->add_option("--call-budget", cfg.evo.call_budget, "max provider calls per run");
    cmd->add_option("--provider", cfg.provider.kind, "mock | replay | http");
    cmd->add_option("--mock-script", cfg.provider.mock_script, "mock reply script (JSON)");
    cmd->add_option("--replay-dir", cfg.provider.replay_dir, "record/replay fixture directory");
    cmd->add_option("--base-url", cfg.provider.base_url, "chat-completions base URL");
    cmd->add_option("--model", cfg.provider.model, "model name");
    cmd->add_option("--timeout", cfg.provider.timeout_seconds, "request timeout seconds");
    cmd->add_option("--prompts", cfg.prompt_dir, "prompt template directory");
    cmd->add_option("--out", cfg.out_dir, "run output directory");
}

int main_impl(int argc, char** argv) {
    CLI::App app{"TS-EoH experiment harness: evolve and evaluate edge-server scheduling heuristics"};
    app.require_subcommand(1);

    // evolve
    tseoh::runner::RunConfig evolve_cfg;
    std::string evolve_strategies, evolve_config_file;
    auto* evolve = app.add_subcommand("evolve", "run LLM-guided heuristic evolution");
    add_evolve_options(evolve, evolve_cfg, evolve_strategies, evolve_config_file);

    // simulate
    std::string sim_instance, sim_policy = "fcfs", sim_out;
    tseoh::FitnessConfig sim_fitness;
    std::uint64_t sim_seed = 0;
    tseoh::baselines::AcoParams aco_params;
    auto* sim = app.add_subcommand("simulate", "run one simulation with a named policy");
    sim->add_option("--instance", sim_instance, "instance JSON path or synth spec")->required();
    sim->add_option("--policy", sim_policy,
                    "fcfs | hrrn | random | greedy | constant | aco | dsl:<file.score>");
    sim->add_option("--alpha", sim_fitness.alpha, "fitness utilization weight");
    sim->add_option("--beta", sim_fitness.beta, "fitness running-time weight");
    sim->add_option("--seed", sim_seed, "seed for random/aco policies");
    sim->add_option("--aco-ants", aco_params.ants, "ants per iteration");
    sim->add_option("--aco-iterations", aco_params.iterations, "ACO iterations");
    sim->add_option("--aco-evaporation", aco_params.evaporation, "pheromone evaporation rho");
    sim->add_option("--aco-alpha", aco_params.pheromone_weight, "pheromone exponent");
    sim->add_option("--aco-beta", aco_params.heuristic_weight, "heuristic exponent");
    sim->add_option("--out", sim_out, "directory for report.json + utilization.csv");

    // ingest
    std::string ing_format, ing_input, ing_users, ing_out;
    tseoh::ingest::TraceSpec trace;
    auto* ing = app.add_subcommand("ingest", "convert a trace into canonical instance JSON");
    ing->add_option("--format", ing_format, "google | alibaba | eua | synth")->required();
    ing->add_option("--input", ing_input, "trace CSV (stations CSV for eua)");
    ing->add_option("--users", ing_users, "EUA users CSV");
    ing->add_option("--limit", trace.task_limit, "max tasks");
    ing->add_option("--servers", trace.num_servers, "server count");
    ing->add_option("--seed", trace.seed, "sampling seed");
    ing->add_option("--radius", trace.radius_m, "EUA coverage radius in meters");
    ing->add_flag("--strict-coverage", trace.error_on_uncovered,
                  "error instead of dropping uncovered EUA users");
    ing->add_option("--n", trace.n, "synthetic task count");
    ing->add_option("--m", trace.m, "synthetic server count");
    ing->add_option("--rate", trace.arrival_rate, "synthetic arrival rate");
    ing->add_option("--out", ing_out, "output instance JSON path")->required();

    // ablate
    tseoh::runner::RunConfig ablate_cfg;
    std::string ablate_strategies, ablate_config_file, ablate_groups;
    auto* abl = app.add_subcommand("ablate", "evolve once per strategy group and compare");
    add_evolve_options(abl, ablate_cfg, ablate_strategies, ablate_config_file);
    abl->add_option("--groups", ablate_groups,
                    "semicolon-separated groups, e.g. M1;M2;M1+M2 (default: the full 14)");

    // report
    std::string rep_dir, rep_format = "md", rep_out;
    auto* rep = app.add_subcommand("report", "render a run directory as markdown or CSV");
    rep->add_option("--run-dir", rep_dir, "run directory from evolve/ablate")->required();
    rep->add_option("--format", rep_format, "md | csv");
    rep->add_option("--out", rep_out, "write to file instead of stdout");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitConfig;
    }

    bool configured = false;
    try {
        if (evolve->parsed()) {
            apply_config_file(*evolve, evolve_config_file);
            if (!evolve_strategies.empty())
                evolve_cfg.evo.strategies = parse_strategies(evolve_strategies);
            if (evolve_cfg.instance_spec.empty()) throw ConfigError("--instance is required");
            if (evolve_cfg.out_dir.empty()) throw ConfigError("--out is required");
            check_provider_preconditions(evolve_cfg.provider);
            configured = true;

            auto outcome = tseoh::runner::run_evolve(evolve_cfg);
            std::cout << "best fitness:     " << outcome.best_report.fitness << "\n"
                      << "avg(u):           " << outcome.best_report.avg_utilization << "\n"
                      << "avg(r):           " << outcome.best_report.avg_running_time << "\n"
                      << "best heuristic:   " << outcome.best.description << "\n"
                      << "run directory:    " << evolve_cfg.out_dir << "\n";
            return kExitOk;
        }

        if (sim->parsed()) {
            configured = true;
            tseoh::Instance inst = tseoh::runner::resolve_instance(sim_instance);
            auto violations = tseoh::validate_instance(inst);
            if (!violations.empty()) throw ConfigError("instance invalid: " + violations.front());

            tseoh::SimReport report;
            if (sim_policy == "aco") {
                aco_params.seed = sim_seed;
                auto seq = tseoh::baselines::aco_schedule(inst, aco_params, sim_fitness);
                report = tseoh::simulate_sequence(inst, seq, sim_fitness);
            } else {
                tseoh::ScoringPolicy policy;
                if (sim_policy == "fcfs") policy = tseoh::baselines::fcfs_policy();
                else if (sim_policy == "hrrn") policy = tseoh::baselines::hrrn_policy();
                else if (sim_policy == "greedy") policy = tseoh::baselines::greedy_policy();
                else if (sim_policy == "random") policy = tseoh::baselines::random_policy(sim_seed);
                else if (sim_policy == "constant") policy = tseoh::baselines::constant_policy();
                else if (sim_policy.rfind("dsl:", 0) == 0) {
                    std::string path = sim_policy.substr(4);
                    std::ifstream in(path);
                    if (!in) throw ConfigError("cannot open score file: " + path);
                    std::ostringstream buf;
                    buf << in.rdbuf();
                    auto parsed = tseoh::dsl::parse(buf.str());
                    if (!parsed.ok())
                        throw ConfigError(path + ": parse error at offset " +
                                          std::to_string(parsed.error->pos) + ": " +
                                          parsed.error->message);
                    policy = tseoh::make_dsl_policy(parsed.expr);
                } else {
                    throw ConfigError("unknown policy: " + sim_policy);
                }
                report = tseoh::simulate(inst, policy, sim_fitness);
            }
            std::cout << "avg(u):  " << report.avg_utilization << "\n"
                      << "avg(r):  " << report.avg_running_time << "\n"
                      << "fitness: " << report.fitness << "\n";
            if (!sim_out.empty()) {
                std::filesystem::create_directories(sim_out);
                std::ofstream out(std::filesystem::path(sim_out) / "report.json");
                out << tseoh::report_to_json(report, sim_fitness).dump(2) << "\n";
                tseoh::write_utilization_csv(
                    report, (std::filesystem::path(sim_out) / "utilization.csv").string());
            }
            return kExitOk;
        }

        if (ing->parsed()) {
            trace.path = ing_input;
            trace.users_path = ing_users;
            tseoh::Instance inst;
            if (ing_format == "google") inst = tseoh::ingest::load_google(trace);
            else if (ing_format == "alibaba") inst = tseoh::ingest::load_alibaba(trace);
            else if (ing_format == "eua") inst = tseoh::ingest::load_eua(trace);
            else if (ing_format == "synth") inst = tseoh::ingest::synth(trace);
            else throw ConfigError("unknown trace format: " + ing_format);
            configured = true;
            tseoh::save_instance(inst, ing_out);
            std::cout << "wrote " << inst.tasks.size() << " tasks / " << inst.servers.size()
                      << " servers to " << ing_out << "\n";
            return kExitOk;
        }

        if (abl->parsed()) {
            apply_config_file(*abl, ablate_config_file);
            if (ablate_cfg.instance_spec.empty()) throw ConfigError("--instance is required");
            if (ablate_cfg.out_dir.empty()) throw ConfigError("--out is required");
            check_provider_preconditions(ablate_cfg.provider);
            std::vector<std::vector<tseoh::gateway::Strategy>> groups;
            if (ablate_groups.empty()) {
                groups = tseoh::runner::default_ablation_groups();
            } else {
                std::stringstream ss(ablate_groups);
                std::string part;
                while (std::getline(ss, part, ';'))
                    if (!part.empty()) groups.push_back(tseoh::runner::parse_group(part));
                if (groups.empty()) throw ConfigError("empty group list");
            }
            configured = true;

            auto rows = tseoh::runner::run_ablation(ablate_cfg, groups);
            std::filesystem::create_directories(ablate_cfg.out_dir);
            std::string csv = tseoh::runner::ablation_csv(rows);
            std::string md = tseoh::runner::ablation_markdown(rows);
            std::ofstream(std::filesystem::path(ablate_cfg.out_dir) / "ablation.csv") << csv;
            std::ofstream(std::filesystem::path(ablate_cfg.out_dir) / "ablation.md") << md;
            std::cout << md;
            for (const auto& r : rows)
                if (!r.ok) return kExitRuntime;
            return kExitOk;
        }

        if (rep->parsed()) {
            if (rep_format != "md" && rep_format != "csv")
                throw ConfigError("unknown report format: " + rep_format);
            configured = true;
            auto run = tseoh::runner::read_run_dir(rep_dir);
            std::string text = rep_format == "csv" ? tseoh::runner::render_report_csv(run)
                                                   : tseoh::runner::render_report_markdown(run);
            if (rep_out.empty()) std::cout << text;
            else std::ofstream(rep_out) << text;
            return kExitOk;
        }
    } catch (const ConfigError& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return configured ? kExitRuntime : kExitConfig;
    }
    return kExitConfig;
}

}  // namespace

int main(int argc, char** argv) { return main_impl(argc, argv); }
