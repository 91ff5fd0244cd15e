#include "mfs/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace mfs {

std::string to_string(Formulation f) {
    switch (f) {
        case Formulation::Qsp: return "qsp";
        case Formulation::DqEmt: return "dq";
        case Formulation::AbcWaveform: return "abc";
    }
    return "?";
}

Formulation formulation_from_string(const std::string& s) {
    if (s == "qsp") return Formulation::Qsp;
    if (s == "dq") return Formulation::DqEmt;
    if (s == "abc") return Formulation::AbcWaveform;
    throw ConfigError("unknown formulation '" + s + "' (expected qsp|dq|abc)");
}

namespace {

void check_gains(std::vector<std::string>& diag, const InverterSpec& inv) {
    auto nonneg = [&](double v, const char* what) {
        if (v < 0.0) diag.push_back(inv.id + ": " + what + " must be non-negative");
    };
    nonneg(inv.vsm.ta, "ta");
    nonneg(inv.vsm.kd, "kd");
    nonneg(inv.vsm.komega, "komega");
    nonneg(inv.vsm.kq, "kq");
    nonneg(inv.droop.mp, "mp");
    nonneg(inv.droop.mq, "mq");
    nonneg(inv.inner.kpv, "kpv");
    nonneg(inv.inner.kiv, "kiv");
    nonneg(inv.inner.kpc, "kpc");
    nonneg(inv.inner.kic, "kic");
    nonneg(inv.pll.kp, "kp_pll");
    nonneg(inv.pll.ki, "ki_pll");
    if (inv.filter_kind == FilterKind::Full) {
        if (!(inv.filter.lf > 0.0) || !(inv.filter.cf > 0.0))
            diag.push_back(inv.id + ": full filter requires lf > 0 and cf > 0");
    }
    if (!(inv.filter.lg > 0.0))
        diag.push_back(inv.id + ": grid-side inductance lg must be positive");
}

}  // namespace

std::vector<std::string> Scenario::validate() const {
    std::vector<std::string> diag;
    const int n = bus_count();
    if (n == 0) diag.push_back("scenario has no buses");
    {
        std::set<int> ids;
        for (const auto& b : buses)
            if (!ids.insert(b.id).second) diag.push_back("duplicate bus id " + std::to_string(b.id));
    }
    if (!(t_end > 0.0)) diag.push_back("t_end must be positive");
    if (!(output_dt > 0.0)) diag.push_back("output_dt must be positive");
    try {
        base.validate();
        solver.validate();
    } catch (const ConfigError& e) {
        diag.push_back(e.what());
    }

    std::set<std::string> branch_names;
    for (const auto& br : branches) {
        if (!branch_names.insert(br.name).second) diag.push_back("duplicate branch name " + br.name);
        if (br.from < 0 || br.from >= n || br.to < 0 || br.to >= n) {
            diag.push_back("branch " + br.name + " references an unknown bus");
            continue;
        }
        try {
            br.validate();
        } catch (const ConfigError& e) {
            diag.push_back(e.what());
        }
    }

    std::set<std::string> dev_ids;
    std::set<int> gen_buses;
    int slack_count = 0;
    auto check_dev = [&](const std::string& id, int bus, const DispatchSpec& d, bool generation) {
        if (!dev_ids.insert(id).second) diag.push_back("duplicate device id " + id);
        if (bus < 0 || bus >= n) diag.push_back(id + " references an unknown bus");
        if (generation) {
            if (!gen_buses.insert(bus).second)
                diag.push_back("bus of " + id + " already hosts a generation device");
            if (d.role == DispatchSpec::Role::Slack) slack_count++;
            if (d.role == DispatchSpec::Role::None)
                diag.push_back(id + ": generation devices need a dispatch role");
        }
    };

    for (const auto& d : inverters) {
        check_dev(d.id, d.bus, d.dispatch, true);
        check_gains(diag, d);
        if ((d.inner_kind == InnerKind::Full) != (d.filter_kind == FilterKind::Full))
            diag.push_back(d.id +
                           ": inner-loop and filter variants must match (full inner regulates "
                           "filter states; reduced inner asserts they track exactly)");
        if (formulation == Formulation::Qsp && d.filter_kind == FilterKind::Full)
            diag.push_back(d.id + ": QSP requires the reduced filter (algebraic network forbids "
                                  "electromagnetic filter states)");
    }
    for (const auto& d : machines) {
        check_dev(d.id, d.bus, d.dispatch, true);
        try {
            d.params.validate();
        } catch (const ConfigError& e) {
            diag.push_back(e.what());
        }
    }
    for (const auto& d : thevenins) {
        check_dev(d.id, d.bus, d.dispatch, true);
        if (d.r < 0.0 || d.x < 0.0) diag.push_back(d.id + ": r and x must be non-negative");
        if (!(d.r > 0.0) && !(d.x > 0.0))
            diag.push_back(d.id + ": ideal source (r = x = 0) cannot be interfaced");
        if (formulation != Formulation::Qsp && !(d.x > 0.0) && !(d.r > 0.0))
            diag.push_back(d.id + ": EMT formulations need a source impedance");
    }
    for (const auto& d : loads) {
        check_dev(d.id, d.bus, DispatchSpec{}, false);
        if (d.p < 0.0 || d.q < 0.0) diag.push_back(d.id + ": load p and q must be non-negative");
        if (!(d.p > 0.0) && !(d.q > 0.0)) diag.push_back(d.id + ": load must draw some power");
    }
    if (generation_device_count() > 0 && slack_count != 1)
        diag.push_back("exactly one device must carry the slack role (found " +
                       std::to_string(slack_count) + ")");

    if (formulation != Formulation::Qsp) {
        std::vector<double> cbus(static_cast<size_t>(std::max(n, 0)), 0.0);
        for (const auto& br : branches) {
            if (!br.in_service || br.from < 0 || br.from >= n || br.to < 0 || br.to >= n) continue;
            cbus[static_cast<size_t>(br.from)] += br.c / 2.0;
            cbus[static_cast<size_t>(br.to)] += br.c / 2.0;
        }
        for (int k = 0; k < n; ++k)
            if (!(cbus[static_cast<size_t>(k)] > 0.0))
                diag.push_back("bus " + std::to_string(buses[static_cast<size_t>(k)].id) +
                               " has no shunt capacitance; EMT formulations need c > 0 at every bus");
    }

    double prev_time = 0.0;
    for (const auto& ev : events) {
        if (!(ev.time > 0.0) || !(ev.time < t_end))
            diag.push_back("event at t=" + std::to_string(ev.time) +
                           " must lie strictly inside (0, t_end)");
        if (ev.time < prev_time) diag.push_back("events must be ordered by time");
        prev_time = ev.time;
        if (ev.kind == EventSpec::Kind::TripBranch) {
            if (!branch_names.count(ev.target))
                diag.push_back("trip event names unknown branch " + ev.target);
        } else {
            const bool known = std::any_of(thevenins.begin(), thevenins.end(),
                                           [&](const TheveninSpec& t) { return t.id == ev.target; });
            if (!known) diag.push_back("set_source_voltage event needs a thevenin source target, got " + ev.target);
            if (!(ev.value > 0.0)) diag.push_back("set_source_voltage needs a positive magnitude");
        }
    }
    return diag;
}

void Scenario::validate_or_throw() const {
    const auto diag = validate();
    if (diag.empty()) return;
    std::string msg = "scenario validation failed:";
    for (const auto& d : diag) msg += "\n  - " + d;
    throw ConfigError(msg);
}

std::string Scenario::digest() const {
    const std::string text = scenario_to_json_text(*this);
    uint64_t h = 1469598103934665603ull;  // FNV-1a
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

Scenario default_three_bus_scenario() {
    Scenario s;
    s.name = "three-bus-ring";
    s.buses = {{1, 1.0}, {2, 1.0}, {3, 1.0}};
    auto line = [](std::string name, int f, int t) {
        Branch br;
        br.name = std::move(name);
        br.from = f;
        br.to = t;
        br.r = 0.01;
        br.l = 0.10;
        br.c = 0.06;
        br.g = 0.0;
        return br;
    };
    s.branches = {line("line-1-2", 0, 1), line("line-2-3", 1, 2), line("line-3-1", 2, 0)};

    InverterSpec g1;
    g1.id = "G1";
    g1.bus = 0;
    g1.outer_kind = OuterKind::Vsm;
    g1.dispatch = {DispatchSpec::Role::Slack, 0.0, 0.0, 1.02};
    s.inverters.push_back(g1);

    InverterSpec g2;
    g2.id = "G2";
    g2.bus = 2;
    g2.outer_kind = OuterKind::Droop;
    g2.dispatch = {DispatchSpec::Role::PV, 0.40, 0.0, 1.01};
    s.inverters.push_back(g2);

    s.loads.push_back({"L1", 1, 0.90, 0.30});
    s.loads.push_back({"L2", 0, 0.05, 0.0});
    s.loads.push_back({"L3", 2, 0.05, 0.0});

    EventSpec trip;
    trip.time = 0.25;
    trip.kind = EventSpec::Kind::TripBranch;
    trip.target = "line-1-2";
    s.events.push_back(trip);

    s.formulation = Formulation::DqEmt;
    s.solver.method = Method::AdaptiveImplicit;
    s.solver.dt_fixed = 5e-6;
    s.solver.abstol = 5e-8;
    s.solver.reltol = 5e-8;
    s.t_end = 10.0;
    s.output_dt = 1e-4;
    return s;
}

int TimeSeriesResult::column(const std::string& name) const {
    for (size_t i = 0; i < names.size(); ++i)
        if (names[i] == name) return static_cast<int>(i);
    throw ArgumentError("result has no signal named " + name);
}

}  // namespace mfs
