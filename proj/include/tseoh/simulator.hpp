#ifndef TSEOH_SIMULATOR_HPP
#define TSEOH_SIMULATOR_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <queue>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "tseoh/dsl.hpp"
#include "tseoh/model.hpp"

namespace tseoh {

/// Everything a scoring policy may look at when scoring one
/// (task, server) candidate at one decision instant.
struct SchedulingContext {
    double now = 0.0;
    const TaskRequest* task = nullptr;
    const EdgeServer* server = nullptr;
    ResourceVector free_res;     // server capacity minus in-flight demand
    int pending = 0;             // arrived, unscheduled tasks
    int server_count = 0;
    std::uint64_t decision_index = 0;  // increments per committed decision

    double wait() const { return now - task->arrival; }

    dsl::VarTable vars() const {
        return {task->demand.cpu, task->demand.io, task->demand.bandwidth,
                task->demand.memory, task->arrival, task->exec_time, wait(),
                free_res.cpu, free_res.io, free_res.bandwidth, free_res.memory,
                server->capacity.cpu, server->capacity.io,
                server->capacity.bandwidth, server->capacity.memory,
                now, static_cast<double>(pending), static_cast<double>(server_count)};
    }
};

/// Pure, deterministic score; higher wins the argmax.
using ScoringPolicy = std::function<double(const SchedulingContext&)>;

struct ScheduleEvent {
    int task_id = 0;
    int server_id = 0;
    double start = 0.0;
    double finish = 0.0;
};

struct UtilSample {
    double time = 0.0;
    int server_id = 0;
    ResourceVector ratios;  // used / capacity per component
};

struct SimReport {
    std::vector<ScheduleEvent> events;
    double avg_utilization = 0.0;
    double avg_running_time = 0.0;
    double fitness = 0.0;
    std::vector<UtilSample> util_series;
};

struct FitnessConfig {
    double alpha = 150.0;
    double beta = 1.0;
};

class PolicyError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class StarvationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline double fitness(double avg_u, double avg_r, const FitnessConfig& cfg) {
    return cfg.alpha * avg_u - cfg.beta * avg_r;
}

namespace detail {

struct Candidate {
    int task_id;
    int server_id;
};

/// Incremental schedule construction shared by the scoring-policy loop,
/// sequence replay and ACO ant construction. Candidates are enumerated
/// in (arrival, task id, server id) order so taking the first strict
/// maximum realizes the documented tie-break.
class ScheduleBuilder {
public:
    explicit ScheduleBuilder(const Instance& inst) : inst_(&inst) {
        const std::size_t n = inst.tasks.size();
        free_.reserve(inst.servers.size());
        for (const auto& s : inst.servers) free_.push_back(s.capacity);
        scheduled_.assign(n, false);
        arrival_order_.resize(n);
        for (std::size_t i = 0; i < n; ++i) arrival_order_[i] = static_cast<int>(i);
        std::sort(arrival_order_.begin(), arrival_order_.end(), [&](int a, int b) {
            if (inst.tasks[a].arrival != inst.tasks[b].arrival)
                return inst.tasks[a].arrival < inst.tasks[b].arrival;
            return a < b;
        });
        sorted_eligible_.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            sorted_eligible_[i] = inst.tasks[i].eligible_servers;
            std::sort(sorted_eligible_[i].begin(), sorted_eligible_[i].end());
        }
        now_ = n > 0 ? inst.tasks[arrival_order_[0]].arrival : 0.0;
        absorb_arrivals();
    }

    double now() const { return now_; }
    bool finished() const { return scheduled_count_ == inst_->tasks.size(); }
    std::uint64_t decision_index() const { return decision_index_; }
    int pending() const { return static_cast<int>(ready_.size()); }
    const std::vector<ScheduleEvent>& events() const { return events_; }
    std::vector<ScheduleEvent> take_events() { return std::move(events_); }

    std::vector<Candidate> candidates() const {
        std::vector<Candidate> out;
        for (int tid : ready_) {
            const auto& t = inst_->tasks[tid];
            for (int sid : sorted_eligible_[tid])
                if (fits(t.demand, free_[sid])) out.push_back({tid, sid});
        }
        return out;
    }

    SchedulingContext context(const Candidate& c) const {
        SchedulingContext ctx;
        ctx.now = now_;
        ctx.task = &inst_->tasks[c.task_id];
        ctx.server = &inst_->servers[c.server_id];
        ctx.free_res = free_[c.server_id];
        ctx.pending = static_cast<int>(ready_.size());
        ctx.server_count = static_cast<int>(inst_->servers.size());
        ctx.decision_index = decision_index_;
        return ctx;
    }

    void commit(const Candidate& c) {
        const auto& t = inst_->tasks[c.task_id];
        free_[c.server_id] -= t.demand;
        double finish = now_ + t.exec_time;
        events_.push_back({c.task_id, c.server_id, now_, finish});
        completions_.push({finish, c.task_id, c.server_id});
        ready_.erase(std::find(ready_.begin(), ready_.end(), c.task_id));
        scheduled_[c.task_id] = true;
        ++scheduled_count_;
        ++decision_index_;
    }

    /// Move to the next completion or arrival time. Returns false when no
    /// future event exists (with unscheduled tasks that means starvation).
    bool advance() {
        double next = std::numeric_limits<double>::infinity();
        if (!completions_.empty()) next = completions_.top().time;
        if (next_arrival_ < arrival_order_.size())
            next = std::min(next, inst_->tasks[arrival_order_[next_arrival_]].arrival);
        if (!std::isfinite(next)) return false;
        now_ = next;
        while (!completions_.empty() && completions_.top().time <= now_) {
            auto c = completions_.top();
            completions_.pop();
            free_[c.server_id] += inst_->tasks[c.task_id].demand;
        }
        absorb_arrivals();
        return true;
    }

private:
    struct Completion {
        double time;
        int task_id;
        int server_id;
        bool operator>(const Completion& o) const {
            if (time != o.time) return time > o.time;
            return task_id > o.task_id;
        }
    };

    void absorb_arrivals() {
        while (next_arrival_ < arrival_order_.size() &&
               inst_->tasks[arrival_order_[next_arrival_]].arrival <= now_) {
            ready_.push_back(arrival_order_[next_arrival_]);
            ++next_arrival_;
        }
    }

    const Instance* inst_;
    std::vector<ResourceVector> free_;
    std::vector<bool> scheduled_;
    std::vector<int> arrival_order_;
    std::vector<std::vector<int>> sorted_eligible_;
    std::vector<int> ready_;  // arrived unscheduled, in arrival/id order
    std::priority_queue<Completion, std::vector<Completion>, std::greater<>> completions_;
    std::vector<ScheduleEvent> events_;
    std::size_t next_arrival_ = 0;
    std::size_t scheduled_count_ = 0;
    double now_ = 0.0;
    std::uint64_t decision_index_ = 0;
};

}  // namespace detail

/// Time-weighted mean utilization per Eq.-style definition: for each
/// server the max over the four per-resource time-averaged ratios, then
/// the mean over servers. Window is [earliest start, latest finish];
/// a zero-length window is defined as 0.
inline double avg_utilization(const std::vector<ScheduleEvent>& events, const Instance& inst) {
    if (events.empty() || inst.servers.empty()) return 0.0;
    double window_start = std::numeric_limits<double>::infinity();
    double window_end = -std::numeric_limits<double>::infinity();
    for (const auto& e : events) {
        window_start = std::min(window_start, e.start);
        window_end = std::max(window_end, e.finish);
    }
    if (!(window_end > window_start)) return 0.0;
    const double window = window_end - window_start;

    const std::size_t m = inst.servers.size();
    // integral of used demand per server per component
    std::vector<ResourceVector> integral(m);
    for (const auto& e : events) {
        const double span = e.finish - e.start;
        const auto& d = inst.tasks[e.task_id].demand;
        auto& acc = integral[e.server_id];
        acc.cpu += d.cpu * span;
        acc.io += d.io * span;
        acc.bandwidth += d.bandwidth * span;
        acc.memory += d.memory * span;
    }
    double sum = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
        const auto& cap = inst.servers[j].capacity;
        ResourceVector mean{integral[j].cpu / window, integral[j].io / window,
                            integral[j].bandwidth / window, integral[j].memory / window};
        sum += max_ratio(mean, cap);
    }
    return sum / static_cast<double>(m);
}

/// Makespan divided by server count, taken verbatim from the model's
/// running-time definition.
inline double avg_running_time(const std::vector<ScheduleEvent>& events, const Instance& inst) {
    if (events.empty() || inst.servers.empty()) return 0.0;
    double start = std::numeric_limits<double>::infinity();
    double finish = -std::numeric_limits<double>::infinity();
    for (const auto& e : events) {
        start = std::min(start, e.start);
        finish = std::max(finish, e.finish);
    }
    return (finish - start) / static_cast<double>(inst.servers.size());
}

namespace detail {

inline std::vector<UtilSample> utilization_series(const std::vector<ScheduleEvent>& events,
                                                  const Instance& inst) {
    std::vector<double> times;
    times.reserve(events.size() * 2);
    for (const auto& e : events) {
        times.push_back(e.start);
        times.push_back(e.finish);
    }
    std::sort(times.begin(), times.end());
    times.erase(std::unique(times.begin(), times.end()), times.end());

    std::vector<UtilSample> series;
    for (double t : times) {
        std::vector<ResourceVector> used(inst.servers.size());
        for (const auto& e : events)
            if (e.start <= t && t < e.finish) used[e.server_id] += inst.tasks[e.task_id].demand;
        for (std::size_t j = 0; j < inst.servers.size(); ++j) {
            const auto& cap = inst.servers[j].capacity;
            series.push_back({t, static_cast<int>(j),
                              {used[j].cpu / cap.cpu, used[j].io / cap.io,
                               used[j].bandwidth / cap.bandwidth, used[j].memory / cap.memory}});
        }
    }
    return series;
}

inline SimReport finish_report(std::vector<ScheduleEvent> events, const Instance& inst,
                               const FitnessConfig& cfg) {
    SimReport r;
    r.events = std::move(events);
    r.avg_utilization = avg_utilization(r.events, inst);
    r.avg_running_time = avg_running_time(r.events, inst);
    r.fitness = fitness(r.avg_utilization, r.avg_running_time, cfg);
    r.util_series = utilization_series(r.events, inst);
    return r;
}

}  // namespace detail

/// Event-driven score-argmax scheduling loop. At each decision instant
/// every feasible (arrived task, eligible server with room) pair is
/// scored; the argmax pair is committed and the instant is re-examined
/// until nothing fits, then time advances to the next arrival or
/// completion. Resources release in full at task finish.
inline SimReport simulate(const Instance& inst, const ScoringPolicy& policy,
                          const FitnessConfig& cfg = {}) {
    detail::ScheduleBuilder b(inst);
    while (!b.finished()) {
        auto cands = b.candidates();
        if (!cands.empty()) {
            double best_score = -std::numeric_limits<double>::infinity();
            std::size_t best = 0;
            bool have = false;
            for (std::size_t i = 0; i < cands.size(); ++i) {
                double s;
                try {
                    s = policy(b.context(cands[i]));
                } catch (const std::exception& ex) {
                    throw PolicyError(std::string("policy raised: ") + ex.what());
                }
                if (!std::isfinite(s)) throw PolicyError("policy returned a non-finite score");
                if (!have || s > best_score) {
                    best_score = s;
                    best = i;
                    have = true;
                }
            }
            b.commit(cands[best]);
            continue;
        }
        if (!b.advance())
            throw StarvationError("no feasible candidate and no future event");
    }
    return detail::finish_report(b.take_events(), inst, cfg);
}

/// Replays a precomputed (task, server) assignment order: the head of
/// the sequence is committed as soon as it is feasible; the simulator
/// waits otherwise.
inline SimReport simulate_sequence(const Instance& inst,
                                   std::span<const std::pair<int, int>> sequence,
                                   const FitnessConfig& cfg = {}) {
    if (sequence.size() != inst.tasks.size())
        throw std::invalid_argument("sequence must assign every task exactly once");
    detail::ScheduleBuilder b(inst);
    std::size_t idx = 0;
    while (!b.finished()) {
        bool committed = false;
        if (idx < sequence.size()) {
            auto [tid, sid] = sequence[idx];
            for (const auto& c : b.candidates()) {
                if (c.task_id == tid && c.server_id == sid) {
                    b.commit(c);
                    ++idx;
                    committed = true;
                    break;
                }
            }
        }
        if (committed) continue;
        if (!b.advance())
            throw StarvationError("sequence head never becomes feasible");
    }
    return detail::finish_report(b.take_events(), inst, cfg);
}

/// Wraps a parsed scoring expression as a policy.
inline ScoringPolicy make_dsl_policy(dsl::ExprPtr expr) {
    return [expr = std::move(expr)](const SchedulingContext& ctx) {
        return dsl::evaluate(*expr, ctx.vars());
    };
}

// --- report serialization ---

inline json report_to_json(const SimReport& r, const FitnessConfig& cfg) {
    json events = json::array();
    for (const auto& e : r.events)
        events.push_back({{"task_id", e.task_id},
                          {"server_id", e.server_id},
                          {"start", e.start},
                          {"finish", e.finish}});
    return json{{"events", events},
                {"avg_utilization", r.avg_utilization},
                {"avg_running_time", r.avg_running_time},
                {"fitness", r.fitness},
                {"alpha", cfg.alpha},
                {"beta", cfg.beta}};
}

inline void write_utilization_csv(const SimReport& r, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write utilization csv: " + path);
    out << "time,server_id,cpu_ratio,io_ratio,bw_ratio,mem_ratio\n";
    char line[160];
    for (const auto& s : r.util_series) {
        std::snprintf(line, sizeof(line), "%.9g,%d,%.9g,%.9g,%.9g,%.9g\n", s.time, s.server_id,
                      s.ratios.cpu, s.ratios.io, s.ratios.bandwidth, s.ratios.memory);
        out << line;
    }
}

}  // namespace tseoh

#endif  // TSEOH_SIMULATOR_HPP
