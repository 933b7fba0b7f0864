#ifndef TSEOH_BASELINES_HPP
#define TSEOH_BASELINES_HPP

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <utility>
#include <vector>

#include "tseoh/simulator.hpp"

namespace tseoh::baselines {

/// First-come-first-served: earlier arrival wins; the simulator's
/// tie-break settles equal arrivals by task id.
inline double fcfs_score(const SchedulingContext& ctx) { return -ctx.task->arrival; }

/// Highest response ratio next: (wait + exec) / exec at the decision instant.
inline double hrrn_score(const SchedulingContext& ctx) {
    return (ctx.wait() + ctx.task->exec_time) / ctx.task->exec_time;
}

/// Immediate packing gain: how much placing the task raises the server's
/// max per-resource utilization ratio.
inline double greedy_score(const SchedulingContext& ctx) {
    const auto& cap = ctx.server->capacity;
    ResourceVector used = cap - ctx.free_res;
    ResourceVector after = used + ctx.task->demand;
    return max_ratio(after, cap) - max_ratio(used, cap);
}

namespace detail {

inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t mix64(std::uint64_t a, std::uint64_t b) { return mix64(mix64(a) ^ b); }

}  // namespace detail

/// Uniform [0,1) keyed by (seed, decision index, task id, server id);
/// a fresh stream per key keeps runs reproducible regardless of
/// candidate enumeration.
inline ScoringPolicy random_policy(std::uint64_t seed) {
    return [seed](const SchedulingContext& ctx) {
        std::uint64_t h = detail::mix64(detail::mix64(seed, ctx.decision_index),
                                        (static_cast<std::uint64_t>(ctx.task->id) << 32) ^
                                            static_cast<std::uint64_t>(ctx.server->id));
        return static_cast<double>(h >> 11) * 0x1.0p-53;
    };
}

inline ScoringPolicy constant_policy(double value = 0.0) {
    return [value](const SchedulingContext&) { return value; };
}

inline ScoringPolicy fcfs_policy() { return &fcfs_score; }
inline ScoringPolicy hrrn_policy() { return &hrrn_score; }
inline ScoringPolicy greedy_policy() { return &greedy_score; }

struct AcoParams {
    int ants = 20;
    int iterations = 100;
    double pheromone_weight = 1.0;   // exponent on trail strength
    double heuristic_weight = 2.0;   // exponent on packing gain
    double evaporation = 0.1;        // rho in (0,1)
    double initial_pheromone = 1.0;
    std::uint64_t seed = 0;
};

/// Ant-colony sequence construction over (task, server) commitments.
/// Pheromone lives on position-free task-to-task transition edges (with a
/// virtual start node); desirability is the packing gain. Each iteration
/// evaporates all trails and lets the iteration-best ant deposit an
/// amount proportional to its fitness. Returns the best sequence found.
inline std::vector<std::pair<int, int>> aco_schedule(const Instance& inst,
                                                     const AcoParams& params,
                                                     const FitnessConfig& cfg = {}) {
    if (!(params.evaporation > 0.0 && params.evaporation < 1.0))
        throw std::invalid_argument("aco: evaporation must be in (0,1)");
    if (params.ants <= 0 || params.iterations <= 0)
        throw std::invalid_argument("aco: ants and iterations must be positive");

    const std::size_t n = inst.tasks.size();
    const std::size_t start_node = n;  // virtual predecessor for the first pick
    std::vector<std::vector<double>> pheromone(n + 1,
                                               std::vector<double>(n, params.initial_pheromone));

    std::vector<std::pair<int, int>> best_seq;
    double best_fit = -std::numeric_limits<double>::infinity();
    constexpr double kEtaFloor = 0.01;

    for (int iter = 0; iter < params.iterations; ++iter) {
        std::vector<std::pair<int, int>> iter_best_seq;
        double iter_best = -std::numeric_limits<double>::infinity();
        double iter_worst = std::numeric_limits<double>::infinity();

        for (int ant = 0; ant < params.ants; ++ant) {
            std::mt19937_64 rng(detail::mix64(detail::mix64(params.seed, iter), ant));
            tseoh::detail::ScheduleBuilder b(inst);
            std::vector<std::pair<int, int>> seq;
            std::size_t prev = start_node;
            while (!b.finished()) {
                auto cands = b.candidates();
                if (cands.empty()) {
                    if (!b.advance()) throw StarvationError("aco: stuck instance");
                    continue;
                }
                std::vector<double> weights(cands.size());
                double total = 0.0;
                for (std::size_t i = 0; i < cands.size(); ++i) {
                    double tau = pheromone[prev][cands[i].task_id];
                    double eta = greedy_score(b.context(cands[i])) + kEtaFloor;
                    weights[i] = std::pow(tau, params.pheromone_weight) *
                                 std::pow(eta, params.heuristic_weight);
                    total += weights[i];
                }
                std::size_t pick = 0;
                if (total > 0.0) {
                    double r = std::uniform_real_distribution<double>(0.0, total)(rng);
                    double acc = 0.0;
                    for (std::size_t i = 0; i < weights.size(); ++i) {
                        acc += weights[i];
                        if (r <= acc) { pick = i; break; }
                        pick = i;
                    }
                }
                seq.emplace_back(cands[pick].task_id, cands[pick].server_id);
                prev = static_cast<std::size_t>(cands[pick].task_id);
                b.commit(cands[pick]);
            }
            double fit = tseoh::detail::finish_report(b.take_events(), inst, cfg).fitness;
            if (fit > iter_best) {
                iter_best = fit;
                iter_best_seq = seq;
            }
            iter_worst = std::min(iter_worst, fit);
            if (fit > best_fit) {
                best_fit = fit;
                best_seq = std::move(seq);
            }
        }

        for (auto& row : pheromone)
            for (double& p : row) p *= (1.0 - params.evaporation);

        // iteration-best deposit, scaled by how close the ant got to the
        // best fitness seen so far
        double scale = std::max(std::fabs(best_fit), 1e-9);
        double deposit = std::max(0.01, 1.0 + (iter_best - best_fit) / scale);
        std::size_t prev = start_node;
        for (const auto& [tid, sid] : iter_best_seq) {
            pheromone[prev][tid] += deposit;
            prev = static_cast<std::size_t>(tid);
        }
    }
    return best_seq;
}

}  // namespace tseoh::baselines

#endif  // TSEOH_BASELINES_HPP
