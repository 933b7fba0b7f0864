#ifndef TSEOH_EVOLUTION_HPP
#define TSEOH_EVOLUTION_HPP

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "tseoh/baselines.hpp"
#include "tseoh/gateway.hpp"
#include "tseoh/simulator.hpp"

namespace tseoh::evolution {

using gateway::Strategy;

/// One evolved individual. fitness is empty iff parsing, validation or
/// simulation failed; canonical is the canonicalized AST when valid.
struct Heuristic {
    int id = -1;
    std::string description;
    std::string source;
    dsl::ExprPtr canonical;
    std::optional<double> fitness;
    Strategy strategy = Strategy::INIT;
    int parent_id = -1;
    int generation = -1;
    bool fallback = false;
    std::string failure;  // reason when fitness is empty

    bool valid() const { return fitness.has_value(); }
};

/// Invalid fitness loses against every finite fitness; ties go to the
/// lower id.
inline bool fitter(const Heuristic& a, const Heuristic& b) {
    if (a.valid() != b.valid()) return a.valid();
    if (a.valid() && *a.fitness != *b.fitness) return *a.fitness > *b.fitness;
    return a.id < b.id;
}

struct Population {
    int generation = 0;
    std::vector<Heuristic> members;
    std::optional<Heuristic> archive_best;
};

struct EvolutionConfig {
    int population_size = 4;                 // N
    int generations = 3;                     // G
    std::vector<Strategy> strategies = {Strategy::M1, Strategy::M2, Strategy::E1, Strategy::E2};
    double redundancy_tau = 0.85;
    int max_attempts = 3;
    std::uint64_t seed = 0;
    FitnessConfig fitness_cfg;
    std::size_t call_budget = 100000;
    std::optional<double> temperature;  // override per-strategy defaults when set
};

// --- redundancy check ---

inline std::set<std::string> token_set(const std::string& text) {
    std::set<std::string> tokens;
    std::string cur;
    for (char c : text) {
        if (std::isalnum(static_cast<unsigned char>(c))) {
            cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        } else if (!cur.empty()) {
            tokens.insert(cur);
            cur.clear();
        }
    }
    if (!cur.empty()) tokens.insert(cur);
    return tokens;
}

inline double jaccard(const std::set<std::string>& a, const std::set<std::string>& b) {
    if (a.empty() && b.empty()) return 1.0;
    std::size_t inter = 0;
    for (const auto& t : a) inter += b.count(t);
    return static_cast<double>(inter) / static_cast<double>(a.size() + b.size() - inter);
}

/// Redundant iff the description token sets are too similar to any pool
/// member or the canonical ASTs are structurally equal.
inline bool is_redundant(const Heuristic& candidate, const std::vector<Heuristic>& pool,
                         double tau) {
    auto cand_tokens = token_set(candidate.description);
    for (const auto& member : pool) {
        if (jaccard(cand_tokens, token_set(member.description)) >= tau) return true;
        if (candidate.canonical && member.canonical &&
            dsl::structurally_equal(*candidate.canonical, *member.canonical))
            return true;
    }
    return false;
}

/// Size-2 tournament over two distinct uniform draws.
inline const Heuristic& select_parent(const std::vector<Heuristic>& members,
                                      std::mt19937_64& rng) {
    if (members.size() < 2) throw std::logic_error("tournament needs at least two members");
    std::uniform_int_distribution<std::size_t> pick(0, members.size() - 1);
    std::size_t i = pick(rng);
    std::size_t j = pick(rng);
    while (j == i) j = pick(rng);
    return fitter(members[i], members[j]) ? members[i] : members[j];
}

/// Fitness of one heuristic: mean simulated fitness over the training
/// instances (a single instance by default).
class Evaluator {
public:
    Evaluator(std::vector<Instance> training, FitnessConfig cfg)
        : training_(std::move(training)), cfg_(cfg) {}

    const FitnessConfig& config() const { return cfg_; }
    const std::vector<Instance>& training() const { return training_; }

    std::optional<double> evaluate(const dsl::ExprPtr& expr, std::string* failure = nullptr) const {
        double sum = 0.0;
        for (const auto& inst : training_) {
            try {
                sum += simulate(inst, make_dsl_policy(expr), cfg_).fitness;
            } catch (const std::exception& ex) {
                if (failure) *failure = std::string("simulation failed: ") + ex.what();
                return std::nullopt;
            }
        }
        return sum / static_cast<double>(training_.size());
    }

private:
    std::vector<Instance> training_;
    FitnessConfig cfg_;
};

inline json heuristic_to_json(const Heuristic& h) {
    return json{{"id", h.id},
                {"description", h.description},
                {"source", h.source},
                {"fitness", h.valid() ? json(*h.fitness) : json(nullptr)},
                {"strategy", gateway::strategy_name(h.strategy)},
                {"parent_id", h.parent_id},
                {"generation", h.generation},
                {"fallback", h.fallback},
                {"failure", h.failure}};
}

struct RunResult {
    Heuristic best;
    std::vector<json> logs;  // one entry per round, including the init round
};

namespace detail {

inline std::uint64_t slot_seed(std::uint64_t root, int round, int strategy, int slot) {
    using baselines::detail::mix64;
    return mix64(mix64(mix64(root, static_cast<std::uint64_t>(round)),
                       static_cast<std::uint64_t>(strategy)),
                 static_cast<std::uint64_t>(slot));
}

inline std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

}  // namespace detail

inline json seal_log(json log) {
    log.erase("checksum");
    log["checksum"] = detail::fnv1a(log.dump());
    return log;
}

inline bool log_checksum_ok(const json& log) {
    if (!log.contains("checksum")) return false;
    json copy = log;
    copy.erase("checksum");
    return detail::fnv1a(copy.dump()) == log["checksum"].get<std::uint64_t>();
}

/// Orchestrates the evolutionary run: INIT population, then per round
/// |strategies|·N offspring, redundancy filtering with regeneration,
/// fitness evaluation, top-N survivor selection and archive update.
class Evolver {
public:
    Evolver(EvolutionConfig cfg, const gateway::PromptLibrary& prompts,
            gateway::Provider& provider, Evaluator evaluator, std::string run_dir = {})
        : cfg_(std::move(cfg)),
          prompts_(&prompts),
          provider_(std::make_shared<ProviderRef>(provider), cfg_.call_budget),
          evaluator_(std::move(evaluator)),
          run_dir_(std::move(run_dir)) {
        if (cfg_.population_size < 2)
            throw std::invalid_argument("population size must be at least 2");
        if (cfg_.strategies.empty()) throw std::invalid_argument("strategy set must be non-empty");
        if (!run_dir_.empty()) std::filesystem::create_directories(run_dir_);
    }

    Population init_population() {
        Population pop;
        pop.generation = 0;
        json attempts_log = json::array();
        for (int slot = 0; slot < cfg_.population_size; ++slot) {
            Heuristic h = fill_slot(Strategy::INIT, std::nullopt, pop.members, 0, slot,
                                    attempts_log, /*fallback_on_failure=*/true);
            pop.members.push_back(std::move(h));
        }
        update_archive(pop, pop.members);
        persist_round(pop, pop.members, attempts_log);
        return pop;
    }

    Population evolve_generation(const Population& pop) {
        Population next;
        next.generation = pop.generation + 1;
        next.archive_best = pop.archive_best;

        json attempts_log = json::array();
        std::vector<Heuristic> offspring;
        for (std::size_t si = 0; si < cfg_.strategies.size(); ++si) {
            Strategy strategy = cfg_.strategies[si];
            for (int slot = 0; slot < cfg_.population_size; ++slot) {
                std::mt19937_64 rng(detail::slot_seed(cfg_.seed, next.generation,
                                                      static_cast<int>(strategy), slot));
                const Heuristic& parent = select_parent(pop.members, rng);
                std::vector<Heuristic> pool = pop.members;
                pool.insert(pool.end(), offspring.begin(), offspring.end());
                Heuristic h = fill_slot(strategy, parent, pool, next.generation, slot,
                                        attempts_log, /*fallback_on_failure=*/false);
                h.parent_id = parent.id;
                offspring.push_back(std::move(h));
            }
        }

        // survivors: top-N valid offspring; parents are not retained
        std::vector<const Heuristic*> ranked;
        for (const auto& h : offspring)
            if (h.valid()) ranked.push_back(&h);
        std::sort(ranked.begin(), ranked.end(),
                  [](const Heuristic* a, const Heuristic* b) { return fitter(*a, *b); });
        for (const auto* h : ranked) {
            if (static_cast<int>(next.members.size()) >= cfg_.population_size) break;
            next.members.push_back(*h);
        }
        int pad = 0;
        while (static_cast<int>(next.members.size()) < cfg_.population_size)
            next.members.push_back(make_fallback(next.generation, pad++));

        update_archive(next, offspring);
        persist_round(next, offspring, attempts_log);
        return next;
    }

    RunResult run() {
        Population pop = init_population();
        for (int g = 0; g < cfg_.generations; ++g) pop = evolve_generation(pop);
        if (!pop.archive_best) throw std::runtime_error("evolution produced no valid heuristic");
        if (!run_dir_.empty()) {
            std::ofstream score(std::filesystem::path(run_dir_) / "best.score");
            score << pop.archive_best->source << "\n";
            std::ofstream meta(std::filesystem::path(run_dir_) / "best.json");
            meta << heuristic_to_json(*pop.archive_best).dump(2) << "\n";
        }
        return RunResult{*pop.archive_best, logs_};
    }

    const std::vector<json>& logs() const { return logs_; }
    std::size_t provider_calls() const { return provider_.calls(); }

private:
    // non-owning adapter so the budget wrapper can wrap a reference
    struct ProviderRef : gateway::Provider {
        explicit ProviderRef(gateway::Provider& p) : inner(&p) {}
        gateway::Completion complete(const gateway::ProviderRequest& req) override {
            return inner->complete(req);
        }
        gateway::Provider* inner;
    };

    Heuristic make_fallback(int generation, int slot) {
        Heuristic h;
        h.id = next_id_++;
        h.description =
            "Fallback heuristic: schedule the request that has been waiting the longest, "
            "matching first-come-first-served order.";
        h.source = "wait";
        h.canonical = dsl::canonicalize(dsl::parse(h.source).expr);
        h.fitness = evaluator_.evaluate(h.canonical);
        h.strategy = Strategy::INIT;
        h.generation = generation;
        h.fallback = true;
        (void)slot;
        return h;
    }

    Heuristic fill_slot(Strategy strategy, const std::optional<Heuristic>& parent,
                        const std::vector<Heuristic>& pool, int generation, int slot,
                        json& attempts_log, bool fallback_on_failure) {
        std::optional<gateway::ParentSnippet> snippet;
        if (parent) snippet = gateway::ParentSnippet{parent->description, parent->source};

        Heuristic last;
        std::string last_reason;
        for (int attempt = 0; attempt < cfg_.max_attempts; ++attempt) {
            json entry{{"generation", generation},
                       {"strategy", gateway::strategy_name(strategy)},
                       {"slot", slot},
                       {"attempt", attempt}};
            Heuristic h;
            h.id = next_id_++;
            h.strategy = strategy;
            h.generation = generation;
            if (parent) h.parent_id = parent->id;
            try {
                auto gen = gateway::generate_heuristic(*prompts_, strategy, snippet, provider_,
                                                       cfg_.temperature);
                h.description = gen.description;
                h.source = gen.source;
            } catch (const gateway::ExtractionError& ex) {
                h.failure = std::string("extraction failed: ") + ex.what();
                entry["outcome"] = "extraction_failed";
                entry["reason"] = h.failure;
                attempts_log.push_back(entry);
                last = h;
                last_reason = h.failure;
                continue;
            }
            entry["description"] = h.description;
            entry["source"] = h.source;

            auto parsed = dsl::parse(h.source);
            if (!parsed.ok()) {
                h.failure = "parse error at offset " + std::to_string(parsed.error->pos) + ": " +
                            parsed.error->message;
                entry["outcome"] = "parse_failed";
                entry["reason"] = h.failure;
                attempts_log.push_back(entry);
                last = h;
                last_reason = h.failure;
                continue;
            }
            h.canonical = dsl::canonicalize(parsed.expr);

            if (is_redundant(h, pool, cfg_.redundancy_tau)) {
                h.failure = "redundant against existing pool";
                entry["outcome"] = "redundant";
                entry["reason"] = h.failure;
                attempts_log.push_back(entry);
                last = h;
                last_reason = h.failure;
                continue;
            }

            std::string sim_failure;
            h.fitness = evaluator_.evaluate(h.canonical, &sim_failure);
            if (!h.fitness) {
                h.failure = sim_failure;
                entry["outcome"] = "evaluation_failed";
                entry["reason"] = sim_failure;
                attempts_log.push_back(entry);
                last = h;
                last_reason = h.failure;
                continue;
            }
            entry["outcome"] = "accepted";
            entry["fitness"] = *h.fitness;
            attempts_log.push_back(entry);
            return h;
        }

        if (fallback_on_failure) {
            Heuristic fb = make_fallback(generation, slot);
            json entry{{"generation", generation},
                       {"strategy", gateway::strategy_name(strategy)},
                       {"slot", slot},
                       {"outcome", "fallback"},
                       {"reason", last_reason}};
            attempts_log.push_back(entry);
            return fb;
        }
        last.fitness.reset();
        if (last.failure.empty()) last.failure = last_reason;
        return last;  // kept as an INVALID offspring for the logs
    }

    void update_archive(Population& pop, const std::vector<Heuristic>& candidates) {
        for (const auto& h : candidates) {
            if (!h.valid()) continue;
            if (!pop.archive_best || *h.fitness > *pop.archive_best->fitness)
                pop.archive_best = h;
        }
        // the archive may never regress
        if (pop.archive_best && last_archive_fitness_ &&
            *pop.archive_best->fitness < *last_archive_fitness_)
            throw std::logic_error("archive best fitness regressed");
        if (pop.archive_best) last_archive_fitness_ = pop.archive_best->fitness;
    }

    void persist_round(const Population& pop, const std::vector<Heuristic>& offspring,
                       const json& attempts_log) {
        json offspring_json = json::array();
        for (const auto& h : offspring) offspring_json.push_back(heuristic_to_json(h));
        json members_json = json::array();
        for (const auto& h : pop.members) members_json.push_back(heuristic_to_json(h));
        json log{{"generation", pop.generation},
                 {"offspring", offspring_json},
                 {"members", members_json},
                 {"attempts", attempts_log},
                 {"archive_best", pop.archive_best ? heuristic_to_json(*pop.archive_best)
                                                   : json(nullptr)}};
        log = seal_log(std::move(log));
        logs_.push_back(log);
        if (!run_dir_.empty()) {
            char name[32];
            std::snprintf(name, sizeof(name), "gen_%03d.json", pop.generation);
            std::ofstream out(std::filesystem::path(run_dir_) / name);
            out << log.dump(2) << "\n";
        }
    }

    EvolutionConfig cfg_;
    const gateway::PromptLibrary* prompts_;
    gateway::BudgetedProvider provider_;
    Evaluator evaluator_;
    std::string run_dir_;
    std::vector<json> logs_;
    std::optional<double> last_archive_fitness_;
    int next_id_ = 0;
};

}  // namespace tseoh::evolution

#endif  // TSEOH_EVOLUTION_HPP
