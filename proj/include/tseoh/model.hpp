#ifndef TSEOH_MODEL_HPP
#define TSEOH_MODEL_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace tseoh {

using json = nlohmann::ordered_json;

/// Four-dimensional resource bundle: cpu, io, bandwidth, memory.
/// Units are abstract; each trace loader normalizes its native units.
struct ResourceVector {
    double cpu = 0.0;
    double io = 0.0;
    double bandwidth = 0.0;
    double memory = 0.0;

    bool finite() const {
        return std::isfinite(cpu) && std::isfinite(io) &&
               std::isfinite(bandwidth) && std::isfinite(memory);
    }
    bool non_negative() const {
        return cpu >= 0.0 && io >= 0.0 && bandwidth >= 0.0 && memory >= 0.0;
    }
    bool positive() const {
        return cpu > 0.0 && io > 0.0 && bandwidth > 0.0 && memory > 0.0;
    }

    ResourceVector& operator+=(const ResourceVector& o) {
        cpu += o.cpu; io += o.io; bandwidth += o.bandwidth; memory += o.memory;
        return *this;
    }
    ResourceVector& operator-=(const ResourceVector& o) {
        cpu -= o.cpu; io -= o.io; bandwidth -= o.bandwidth; memory -= o.memory;
        return *this;
    }
    friend ResourceVector operator+(ResourceVector a, const ResourceVector& b) { return a += b; }
    friend ResourceVector operator-(ResourceVector a, const ResourceVector& b) { return a -= b; }

    friend bool operator==(const ResourceVector&, const ResourceVector&) = default;
};

/// Component-wise feasibility: demand fits iff no component exceeds free.
inline bool fits(const ResourceVector& demand, const ResourceVector& free) {
    return demand.cpu <= free.cpu && demand.io <= free.io &&
           demand.bandwidth <= free.bandwidth && demand.memory <= free.memory;
}

/// Largest component ratio of used over capacity. Zero-capacity components
/// never occur in valid instances; guarded anyway.
inline double max_ratio(const ResourceVector& used, const ResourceVector& cap) {
    auto ratio = [](double u, double c) { return c > 0.0 ? u / c : 0.0; };
    return std::max(std::max(ratio(used.cpu, cap.cpu), ratio(used.io, cap.io)),
                    std::max(ratio(used.bandwidth, cap.bandwidth),
                             ratio(used.memory, cap.memory)));
}

/// One service request: resource demand, arrival, execution time and the
/// set of servers allowed to run it.
struct TaskRequest {
    int id = 0;
    ResourceVector demand;
    double arrival = 0.0;
    double exec_time = 0.0;
    std::vector<int> eligible_servers;
};

struct EdgeServer {
    int id = 0;
    ResourceVector capacity;
};

/// A complete scheduling problem: the request sequence plus the server set.
struct Instance {
    std::vector<TaskRequest> tasks;
    std::vector<EdgeServer> servers;
};

/// Returns every invariant violation as a human-readable string.
/// Empty result means the instance is valid. Total: never throws on
/// finite input of any shape.
inline std::vector<std::string> validate_instance(const Instance& inst) {
    std::vector<std::string> v;
    const std::size_t n = inst.tasks.size();
    const std::size_t m = inst.servers.size();
    if (n == 0) v.push_back("instance: no tasks");
    if (m == 0) v.push_back("instance: no servers");

    for (std::size_t j = 0; j < m; ++j) {
        const auto& s = inst.servers[j];
        if (s.id != static_cast<int>(j))
            v.push_back("server " + std::to_string(j) + ": id not dense (got " +
                        std::to_string(s.id) + ")");
        if (!s.capacity.finite() || !s.capacity.positive())
            v.push_back("server " + std::to_string(j) + ": capacity components must be positive and finite");
    }

    for (std::size_t i = 0; i < n; ++i) {
        const auto& t = inst.tasks[i];
        const std::string tag = "task " + std::to_string(i);
        if (t.id != static_cast<int>(i))
            v.push_back(tag + ": id not dense (got " + std::to_string(t.id) + ")");
        if (!t.demand.finite() || !t.demand.non_negative())
            v.push_back(tag + ": demand components must be non-negative and finite");
        if (!(std::isfinite(t.arrival) && t.arrival >= 0.0))
            v.push_back(tag + ": arrival must be >= 0");
        if (!(std::isfinite(t.exec_time) && t.exec_time > 0.0))
            v.push_back(tag + ": exec_time must be > 0");
        if (t.eligible_servers.empty()) {
            v.push_back(tag + ": empty eligible set");
            continue;
        }
        bool ids_ok = true;
        std::set<int> seen;
        for (int sid : t.eligible_servers) {
            if (sid < 0 || sid >= static_cast<int>(m)) {
                v.push_back(tag + ": eligible server " + std::to_string(sid) + " does not exist");
                ids_ok = false;
            }
            if (!seen.insert(sid).second)
                v.push_back(tag + ": duplicate eligible server " + std::to_string(sid));
        }
        if (ids_ok && t.demand.finite() && t.demand.non_negative()) {
            bool fits_somewhere = false;
            for (int sid : t.eligible_servers)
                if (fits(t.demand, inst.servers[sid].capacity)) { fits_somewhere = true; break; }
            if (!fits_somewhere) v.push_back(tag + ": fits no eligible server");
        }
    }
    return v;
}

// --- canonical Instance JSON interchange ---

inline json to_json(const Instance& inst) {
    json servers = json::array();
    for (const auto& s : inst.servers)
        servers.push_back({{"id", s.id},
                           {"cpu", s.capacity.cpu},
                           {"io", s.capacity.io},
                           {"bandwidth", s.capacity.bandwidth},
                           {"memory", s.capacity.memory}});
    json tasks = json::array();
    for (const auto& t : inst.tasks)
        tasks.push_back({{"id", t.id},
                         {"cpu", t.demand.cpu},
                         {"io", t.demand.io},
                         {"bandwidth", t.demand.bandwidth},
                         {"memory", t.demand.memory},
                         {"arrival", t.arrival},
                         {"exec_time", t.exec_time},
                         {"eligible_servers", t.eligible_servers}});
    return json{{"servers", servers}, {"tasks", tasks}};
}

inline Instance instance_from_json(const json& j) {
    Instance inst;
    for (const auto& s : j.at("servers")) {
        EdgeServer e;
        e.id = s.at("id").get<int>();
        e.capacity = {s.at("cpu").get<double>(), s.at("io").get<double>(),
                      s.at("bandwidth").get<double>(), s.at("memory").get<double>()};
        inst.servers.push_back(e);
    }
    for (const auto& t : j.at("tasks")) {
        TaskRequest q;
        q.id = t.at("id").get<int>();
        q.demand = {t.at("cpu").get<double>(), t.at("io").get<double>(),
                    t.at("bandwidth").get<double>(), t.at("memory").get<double>()};
        q.arrival = t.at("arrival").get<double>();
        q.exec_time = t.at("exec_time").get<double>();
        q.eligible_servers = t.at("eligible_servers").get<std::vector<int>>();
        inst.tasks.push_back(q);
    }
    return inst;
}

inline Instance load_instance(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open instance file: " + path);
    json j = json::parse(in);
    return instance_from_json(j);
}

inline void save_instance(const Instance& inst, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write instance file: " + path);
    out << to_json(inst).dump(2) << "\n";
}

}  // namespace tseoh

#endif  // TSEOH_MODEL_HPP
