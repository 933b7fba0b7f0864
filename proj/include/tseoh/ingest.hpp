#ifndef TSEOH_INGEST_HPP
#define TSEOH_INGEST_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "tseoh/model.hpp"

namespace tseoh::ingest {

/// Shared loader options; column mappings per format are documented in
/// docs/datasets.md.
struct TraceSpec {
    std::string path;        // primary CSV (stations CSV for EUA)
    std::string users_path;  // EUA users CSV
    std::size_t task_limit = 0;  // 0 = no limit
    std::size_t num_servers = 0; // google/alibaba: cap on sampled machines, 0 = all
    ResourceVector server_capacity{4.0, 4.0, 4.0, 4.0};
    std::uint64_t seed = 0;

    // sampled execution times (log-uniform) and io/bandwidth demands
    // (uniform scale applied to the cpu demand)
    double exec_min = 1.0;
    double exec_max = 20.0;
    double io_scale_min = 0.25;
    double io_scale_max = 1.5;
    double bw_scale_min = 0.25;
    double bw_scale_max = 1.5;

    // EUA / synthetic demand sampling
    double demand_min = 0.1;
    double demand_max = 1.0;
    double radius_m = 500.0;
    bool error_on_uncovered = false;  // default: drop with warning

    // synthetic generator
    std::size_t n = 100;
    std::size_t m = 5;
    double arrival_rate = 1.0;
    double cap_min = 4.0;
    double cap_max = 16.0;
};

namespace detail {

struct Csv {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    int column(const std::string& name) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return static_cast<int>(i);
        return -1;
    }

    int require(const std::string& name, const std::string& file) const {
        int c = column(name);
        if (c < 0) throw std::runtime_error(file + ": missing column '" + name + "'");
        return c;
    }
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (char c : line) {
        if (quoted) {
            if (c == '"') quoted = false;
            else cur.push_back(c);
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    fields.push_back(cur);
    return fields;
}

inline Csv read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open trace file: " + path);
    Csv csv;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto fields = split_csv_line(line);
        if (first) {
            csv.header = fields;
            first = false;
        } else {
            csv.rows.push_back(fields);
        }
    }
    if (first) throw std::runtime_error(path + ": empty file");
    return csv;
}

inline double to_double(const std::string& s, const std::string& where) {
    try {
        std::size_t used = 0;
        double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument("");
        return v;
    } catch (...) {
        throw std::runtime_error(where + ": not a number: '" + s + "'");
    }
}

inline double log_uniform(std::mt19937_64& rng, double lo, double hi) {
    std::uniform_real_distribution<double> u(std::log(lo), std::log(hi));
    return std::exp(u(rng));
}

inline void finalize(Instance& inst, const std::string& what) {
    auto violations = validate_instance(inst);
    if (!violations.empty()) {
        std::string msg = what + " produced an invalid instance:";
        for (const auto& v : violations) msg += "\n  " + v;
        throw std::runtime_error(msg);
    }
}

inline void rebase_arrivals(Instance& inst) {
    if (inst.tasks.empty()) return;
    double t0 = inst.tasks[0].arrival;
    for (const auto& t : inst.tasks) t0 = std::min(t0, t.arrival);
    for (auto& t : inst.tasks) t.arrival -= t0;
}

}  // namespace detail

/// Google cluster trace task events. Maps cpu/memory requests directly,
/// samples io/bandwidth demands and execution times (the exported table
/// carries neither), rebases timestamps, and folds machines into the
/// configured number of servers.
inline Instance load_google(const TraceSpec& spec) {
    auto csv = detail::read_csv(spec.path);
    int c_time = csv.require("time", spec.path);
    int c_machine = csv.require("machine_id", spec.path);
    int c_cpu = csv.require("cpu_request", spec.path);
    int c_mem = csv.require("memory_request", spec.path);

    struct Row {
        double time, cpu, mem;
        std::string machine;
        std::size_t line;
    };
    std::vector<Row> rows;
    for (std::size_t i = 0; i < csv.rows.size(); ++i) {
        const auto& r = csv.rows[i];
        std::string where = spec.path + " row " + std::to_string(i + 1);
        Row row{detail::to_double(r[c_time], where), detail::to_double(r[c_cpu], where),
                detail::to_double(r[c_mem], where), r[c_machine], i + 1};
        if (row.cpu < 0.0 || row.mem < 0.0)
            throw std::runtime_error(where + ": negative resource request");
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw std::runtime_error(spec.path + ": no task rows");
    std::stable_sort(rows.begin(), rows.end(),
                     [](const Row& a, const Row& b) { return a.time < b.time; });
    if (spec.task_limit > 0 && rows.size() > spec.task_limit) rows.resize(spec.task_limit);

    std::map<std::string, int> machines;
    for (const auto& r : rows)
        if (!machines.count(r.machine)) {
            int next = static_cast<int>(machines.size());
            machines[r.machine] = next;
        }
    std::size_t m = machines.size();
    if (spec.num_servers > 0) m = std::min(m, spec.num_servers);

    Instance inst;
    for (std::size_t j = 0; j < m; ++j)
        inst.servers.push_back({static_cast<int>(j), spec.server_capacity});

    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> io_scale(spec.io_scale_min, spec.io_scale_max);
    std::uniform_real_distribution<double> bw_scale(spec.bw_scale_min, spec.bw_scale_max);
    std::vector<int> all_servers(m);
    for (std::size_t j = 0; j < m; ++j) all_servers[j] = static_cast<int>(j);

    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        TaskRequest t;
        t.id = static_cast<int>(i);
        t.demand = {r.cpu, r.cpu * io_scale(rng), r.cpu * bw_scale(rng), r.mem};
        t.arrival = r.time;
        t.exec_time = detail::log_uniform(rng, spec.exec_min, spec.exec_max);
        t.eligible_servers = all_servers;
        inst.tasks.push_back(std::move(t));
    }
    detail::rebase_arrivals(inst);
    detail::finalize(inst, "google loader");
    return inst;
}

/// Alibaba cluster batch tasks. plan_cpu/plan_mem are percentages and
/// are normalized to core/fraction units; execution time is
/// end_time - start_time.
inline Instance load_alibaba(const TraceSpec& spec) {
    auto csv = detail::read_csv(spec.path);
    int c_start = csv.require("start_time", spec.path);
    int c_end = csv.require("end_time", spec.path);
    int c_cpu = csv.require("plan_cpu", spec.path);
    int c_mem = csv.require("plan_mem", spec.path);

    struct Row {
        double start, exec, cpu, mem;
    };
    std::vector<Row> rows;
    for (std::size_t i = 0; i < csv.rows.size(); ++i) {
        const auto& r = csv.rows[i];
        std::string where = spec.path + " row " + std::to_string(i + 1);
        double start = detail::to_double(r[c_start], where);
        double end = detail::to_double(r[c_end], where);
        double cpu = detail::to_double(r[c_cpu], where) / 100.0;
        double mem = detail::to_double(r[c_mem], where) / 100.0;
        if (cpu < 0.0 || mem < 0.0)
            throw std::runtime_error(where + ": negative resource request");
        if (!(end > start))
            throw std::runtime_error(where + ": end_time must exceed start_time");
        rows.push_back({start, end - start, cpu, mem});
    }
    if (rows.empty()) throw std::runtime_error(spec.path + ": no task rows");
    std::stable_sort(rows.begin(), rows.end(),
                     [](const Row& a, const Row& b) { return a.start < b.start; });
    if (spec.task_limit > 0 && rows.size() > spec.task_limit) rows.resize(spec.task_limit);

    std::size_t m = spec.num_servers > 0 ? spec.num_servers : 8;
    Instance inst;
    for (std::size_t j = 0; j < m; ++j)
        inst.servers.push_back({static_cast<int>(j), spec.server_capacity});
    std::vector<int> all_servers(m);
    for (std::size_t j = 0; j < m; ++j) all_servers[j] = static_cast<int>(j);

    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> io_scale(spec.io_scale_min, spec.io_scale_max);
    std::uniform_real_distribution<double> bw_scale(spec.bw_scale_min, spec.bw_scale_max);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        TaskRequest t;
        t.id = static_cast<int>(i);
        t.demand = {r.cpu, r.cpu * io_scale(rng), r.cpu * bw_scale(rng), r.mem};
        t.arrival = r.start;
        t.exec_time = r.exec;
        t.eligible_servers = all_servers;
        inst.tasks.push_back(std::move(t));
    }
    detail::rebase_arrivals(inst);
    detail::finalize(inst, "alibaba loader");
    return inst;
}

/// Great-circle distance in meters.
inline double haversine_m(double lat1, double lon1, double lat2, double lon2) {
    constexpr double kEarthRadiusM = 6371000.0;
    constexpr double kDeg = M_PI / 180.0;
    double dlat = (lat2 - lat1) * kDeg;
    double dlon = (lon2 - lon1) * kDeg;
    double a = std::sin(dlat / 2) * std::sin(dlat / 2) +
               std::cos(lat1 * kDeg) * std::cos(lat2 * kDeg) * std::sin(dlon / 2) *
                   std::sin(dlon / 2);
    return 2.0 * kEarthRadiusM * std::asin(std::min(1.0, std::sqrt(a)));
}

/// EUA dataset: base stations become servers, mobile users become tasks.
/// A user's eligible set is every station within the coverage radius;
/// the dataset carries no demand data, so demands, arrivals and
/// execution times are sampled from the seeded spec distributions.
inline Instance load_eua(const TraceSpec& spec, std::vector<std::string>* warnings = nullptr) {
    auto stations = detail::read_csv(spec.path);
    auto users = detail::read_csv(spec.users_path);
    auto lat_col = [](const detail::Csv& c, const std::string& file) {
        int col = c.column("latitude");
        if (col < 0) col = c.column("lat");
        if (col < 0) throw std::runtime_error(file + ": missing latitude/lat column");
        return col;
    };
    auto lon_col = [](const detail::Csv& c, const std::string& file) {
        int col = c.column("longitude");
        if (col < 0) col = c.column("lon");
        if (col < 0) throw std::runtime_error(file + ": missing longitude/lon column");
        return col;
    };
    int s_lat = lat_col(stations, spec.path), s_lon = lon_col(stations, spec.path);
    int u_lat = lat_col(users, spec.users_path), u_lon = lon_col(users, spec.users_path);

    Instance inst;
    std::vector<std::pair<double, double>> station_pos;
    for (std::size_t j = 0; j < stations.rows.size(); ++j) {
        std::string where = spec.path + " row " + std::to_string(j + 1);
        station_pos.emplace_back(detail::to_double(stations.rows[j][s_lat], where),
                                 detail::to_double(stations.rows[j][s_lon], where));
        inst.servers.push_back({static_cast<int>(j), spec.server_capacity});
    }

    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> demand(spec.demand_min, spec.demand_max);
    std::exponential_distribution<double> gap(spec.arrival_rate);
    double clock = 0.0;
    std::size_t kept = 0;
    for (std::size_t i = 0; i < users.rows.size(); ++i) {
        if (spec.task_limit > 0 && kept >= spec.task_limit) break;
        std::string where = spec.users_path + " row " + std::to_string(i + 1);
        double lat = detail::to_double(users.rows[i][u_lat], where);
        double lon = detail::to_double(users.rows[i][u_lon], where);
        std::vector<int> eligible;
        for (std::size_t j = 0; j < station_pos.size(); ++j)
            if (haversine_m(lat, lon, station_pos[j].first, station_pos[j].second) <= spec.radius_m)
                eligible.push_back(static_cast<int>(j));
        // demands are drawn either way so dropped users do not shift the stream
        TaskRequest t;
        t.demand = {demand(rng), demand(rng), demand(rng), demand(rng)};
        clock += gap(rng);
        t.arrival = clock;
        t.exec_time = detail::log_uniform(rng, spec.exec_min, spec.exec_max);
        if (eligible.empty()) {
            std::string msg = where + ": user covered by no station within " +
                              std::to_string(spec.radius_m) + " m";
            if (spec.error_on_uncovered) throw std::runtime_error(msg);
            if (warnings) warnings->push_back(msg);
            else std::cerr << "warning: " << msg << " (dropped)\n";
            continue;
        }
        t.id = static_cast<int>(kept++);
        t.eligible_servers = std::move(eligible);
        inst.tasks.push_back(std::move(t));
    }
    detail::rebase_arrivals(inst);
    detail::finalize(inst, "eua loader");
    return inst;
}

/// Seeded synthetic instances for desk-scale testing. Demands are drawn
/// to fit a designated anchor server, so the output always validates.
inline Instance synth(const TraceSpec& spec) {
    if (spec.n == 0 || spec.m == 0) throw std::invalid_argument("synth: n and m must be >= 1");
    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> cap(spec.cap_min, spec.cap_max);

    Instance inst;
    for (std::size_t j = 0; j < spec.m; ++j)
        inst.servers.push_back({static_cast<int>(j), {cap(rng), cap(rng), cap(rng), cap(rng)}});

    std::uniform_int_distribution<std::size_t> anchor_pick(0, spec.m - 1);
    std::uniform_real_distribution<double> frac(0.05, 0.6);
    std::uniform_real_distribution<double> member(0.0, 1.0);
    std::exponential_distribution<double> gap(spec.arrival_rate);
    double clock = 0.0;
    for (std::size_t i = 0; i < spec.n; ++i) {
        std::size_t anchor = anchor_pick(rng);
        const auto& acap = inst.servers[anchor].capacity;
        TaskRequest t;
        t.id = static_cast<int>(i);
        t.demand = {frac(rng) * acap.cpu, frac(rng) * acap.io, frac(rng) * acap.bandwidth,
                    frac(rng) * acap.memory};
        clock += gap(rng);
        t.arrival = clock;
        t.exec_time = detail::log_uniform(rng, spec.exec_min, spec.exec_max);
        t.eligible_servers.push_back(static_cast<int>(anchor));
        for (std::size_t j = 0; j < spec.m; ++j)
            if (j != anchor && member(rng) < 0.3) t.eligible_servers.push_back(static_cast<int>(j));
        std::sort(t.eligible_servers.begin(), t.eligible_servers.end());
        inst.tasks.push_back(std::move(t));
    }
    detail::rebase_arrivals(inst);
    detail::finalize(inst, "synthetic generator");
    return inst;
}

}  // namespace tseoh::ingest

#endif  // TSEOH_INGEST_HPP
