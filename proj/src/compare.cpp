#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "mfs/scenario.hpp"

namespace mfs {

void write_result_csv(const TimeSeriesResult& r, const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw SimError("cannot open " + path + " for writing");
    std::fputs("time_s", f);
    for (const auto& n : r.names) std::fprintf(f, ",%s", n.c_str());
    std::fputc('\n', f);
    for (size_t row = 0; row < r.time.size(); ++row) {
        std::fprintf(f, "%.17g", r.time[row]);
        for (const auto& col : r.cols) std::fprintf(f, ",%.17g", col[row]);
        std::fputc('\n', f);
    }
    std::fclose(f);
}

TimeSeriesResult read_result_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw SimError("cannot open " + path);
    TimeSeriesResult r;
    std::string line;
    if (!std::getline(in, line)) throw SimError(path + ": empty result file");
    std::stringstream hs(line);
    std::string cell;
    bool first = true;
    while (std::getline(hs, cell, ',')) {
        if (first) {
            if (cell != "time_s") throw SimError(path + ": first column must be time_s");
            first = false;
        } else {
            r.names.push_back(cell);
        }
    }
    r.cols.assign(r.names.size(), {});
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ls(line);
        size_t c = 0;
        bool t = true;
        while (std::getline(ls, cell, ',')) {
            const double v = std::strtod(cell.c_str(), nullptr);
            if (t) {
                r.time.push_back(v);
                t = false;
            } else {
                if (c >= r.cols.size()) throw SimError(path + ": row wider than header");
                r.cols[c++].push_back(v);
            }
        }
    }
    return r;
}

void write_stats_sidecar(const TimeSeriesResult& r, const Scenario& s, Formulation form,
                         const std::string& path) {
    nlohmann::json j;
    j["scenario"] = s.name;
    j["scenario_digest"] = s.digest();
    j["formulation"] = to_string(form);
    j["completed"] = r.completed;
    if (!r.completed) j["failure"] = r.failure;
    j["stats"] = {{"accepted_steps", r.stats.accepted_steps},
                  {"rejected_steps", r.stats.rejected_steps},
                  {"rhs_evaluations", r.stats.rhs_evaluations},
                  {"jacobian_evaluations", r.stats.jacobian_evaluations},
                  {"lu_factorizations", r.stats.lu_factorizations},
                  {"min_dt_used", r.stats.min_dt_used},
                  {"max_dt_used", r.stats.max_dt_used}};
    j["events"] = r.event_log;
    std::ofstream out(path);
    if (!out) throw SimError("cannot open " + path + " for writing");
    out << j.dump(2) << "\n";
}

CompareReport compare_results(const TimeSeriesResult& a, const TimeSeriesResult& b,
                              const std::vector<std::pair<std::string, std::string>>& signal_map,
                              double t_from) {
    std::vector<std::pair<std::string, std::string>> pairs = signal_map;
    if (pairs.empty()) {
        for (const auto& n : a.names)
            for (const auto& m : b.names)
                if (n == m) pairs.emplace_back(n, m);
    }
    if (a.time.empty() || b.time.empty()) throw ArgumentError("compare: empty result");

    // align the uniform grids by time value
    const double t_lo = std::max({a.time.front(), b.time.front(), t_from});
    const double t_hi = std::min(a.time.back(), b.time.back());
    if (!(t_hi > t_lo)) throw ArgumentError("compare: results have no overlapping time range");

    const double dt_a = a.time.size() > 1 ? a.time[1] - a.time[0] : 1.0;
    auto index_at = [](const TimeSeriesResult& r, double t) {
        const double dt = r.time.size() > 1 ? r.time[1] - r.time[0] : 1.0;
        const auto idx = static_cast<size_t>(std::llround((t - r.time.front()) / dt));
        if (idx < r.time.size() && std::abs(r.time[idx] - t) > 0.25 * dt)
            throw ArgumentError("compare: output grids are not aligned at t=" + std::to_string(t));
        return idx;
    };

    CompareReport rep;
    rep.t_begin = t_lo;
    rep.t_end = t_hi;
    const size_t n_pts = static_cast<size_t>(std::llround((t_hi - t_lo) / dt_a)) + 1;
    for (const auto& [na, nb] : pairs) {
        const auto& ca = a.cols[static_cast<size_t>(a.column(na))];
        const auto& cb = b.cols[static_cast<size_t>(b.column(nb))];
        SignalError e;
        e.signal_a = na;
        e.signal_b = nb;
        double acc = 0.0;
        size_t count = 0;
        for (size_t k = 0; k < n_pts; ++k) {
            const double t = t_lo + static_cast<double>(k) * dt_a;
            const size_t ia = index_at(a, t);
            const size_t ib = index_at(b, t);
            if (ia >= ca.size() || ib >= cb.size()) break;
            const double d = ca[ia] - cb[ib];
            e.max_abs = std::max(e.max_abs, std::abs(d));
            acc += d * d;
            count++;
        }
        e.rms = count ? std::sqrt(acc / static_cast<double>(count)) : 0.0;
        rep.signals.push_back(e);
    }
    return rep;
}

}  // namespace mfs
