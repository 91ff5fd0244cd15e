#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "mfs/scenario.hpp"

namespace mfs {

using nlohmann::json;

namespace {

json dispatch_to_json(const DispatchSpec& d) {
    json j;
    switch (d.role) {
        case DispatchSpec::Role::Slack: j["role"] = "slack"; break;
        case DispatchSpec::Role::PV: j["role"] = "pv"; break;
        case DispatchSpec::Role::PQ: j["role"] = "pq"; break;
        case DispatchSpec::Role::None: j["role"] = "none"; break;
    }
    j["p"] = d.p;
    j["q"] = d.q;
    j["v"] = d.v;
    return j;
}

DispatchSpec dispatch_from_json(const json& j) {
    DispatchSpec d;
    const std::string role = j.value("role", "none");
    if (role == "slack") d.role = DispatchSpec::Role::Slack;
    else if (role == "pv") d.role = DispatchSpec::Role::PV;
    else if (role == "pq") d.role = DispatchSpec::Role::PQ;
    else if (role == "none") d.role = DispatchSpec::Role::None;
    else throw ConfigError("dispatch: unknown role '" + role + "'");
    d.p = j.value("p", 0.0);
    d.q = j.value("q", 0.0);
    d.v = j.value("v", 1.0);
    return d;
}

class BusIndexMap {
public:
    explicit BusIndexMap(const std::vector<BusSpec>& buses) {
        for (size_t i = 0; i < buses.size(); ++i) map_[buses[i].id] = static_cast<int>(i);
    }
    int at(int id, const std::string& context) const {
        const auto it = map_.find(id);
        if (it == map_.end())
            throw ConfigError(context + ": unknown bus id " + std::to_string(id));
        return it->second;
    }

private:
    std::map<int, int> map_;
};

}  // namespace

std::string scenario_to_json_text(const Scenario& s) {
    json j;
    j["schema_version"] = s.schema_version;
    j["name"] = s.name;
    j["base"] = {{"s_base_mva", s.base.s_base_mva},
                 {"v_base_kv", s.base.v_base_kv},
                 {"f_hz", s.base.omega_b / kTwoPi}};
    j["buses"] = json::array();
    for (const auto& b : s.buses) j["buses"].push_back({{"id", b.id}, {"v_nom", b.v_nom}});
    j["branches"] = json::array();
    for (const auto& br : s.branches)
        j["branches"].push_back({{"name", br.name},
                                 {"from", s.buses[static_cast<size_t>(br.from)].id},
                                 {"to", s.buses[static_cast<size_t>(br.to)].id},
                                 {"r", br.r},
                                 {"l", br.l},
                                 {"c", br.c},
                                 {"g", br.g},
                                 {"status", br.in_service ? "in" : "out"}});
    json devs;
    devs["inverters"] = json::array();
    for (const auto& d : s.inverters) {
        json ji;
        ji["id"] = d.id;
        ji["bus"] = s.buses[static_cast<size_t>(d.bus)].id;
        if (d.outer_kind == OuterKind::Vsm)
            ji["outer"] = {{"kind", "vsm"},   {"ta", d.vsm.ta},           {"kd", d.vsm.kd},
                           {"komega", d.vsm.komega}, {"kq", d.vsm.kq}, {"omega_f", d.vsm.omega_f}};
        else
            ji["outer"] = {{"kind", "droop"},
                           {"mp", d.droop.mp},
                           {"mq", d.droop.mq},
                           {"omega_f", d.droop.omega_f}};
        ji["inner"] = {{"kind", d.inner_kind == InnerKind::Full ? "full" : "reduced"},
                       {"kpv", d.inner.kpv},
                       {"kiv", d.inner.kiv},
                       {"kpc", d.inner.kpc},
                       {"kic", d.inner.kic},
                       {"kffv", d.inner.kffv},
                       {"kffi", d.inner.kffi}};
        ji["filter"] = {{"kind", d.filter_kind == FilterKind::Full ? "full" : "reduced"},
                        {"lf", d.filter.lf},
                        {"rf", d.filter.rf},
                        {"cf", d.filter.cf},
                        {"lg", d.filter.lg},
                        {"rg", d.filter.rg}};
        if (d.pll_kind == PllKind::Kaura)
            ji["pll"] = {{"kind", "kaura"}, {"kp", d.pll.kp}, {"ki", d.pll.ki}, {"omega_lp", d.pll.omega_lp}};
        else
            ji["pll"] = {{"kind", "ideal"}};
        ji["dispatch"] = dispatch_to_json(d.dispatch);
        devs["inverters"].push_back(ji);
    }
    devs["machines"] = json::array();
    for (const auto& d : s.machines)
        devs["machines"].push_back(
            {{"id", d.id},
             {"bus", s.buses[static_cast<size_t>(d.bus)].id},
             {"ra", d.params.ra},
             {"xd", d.params.xd},
             {"xq", d.params.xq},
             {"xdp", d.params.xdp},
             {"td0p", d.params.td0p},
             {"h", d.params.h},
             {"d", d.params.d},
             {"stator", d.params.stator == StatorKind::FullFlux ? "full_flux" : "algebraic"},
             {"dispatch", dispatch_to_json(d.dispatch)}});
    devs["sources"] = json::array();
    for (const auto& d : s.thevenins)
        devs["sources"].push_back({{"id", d.id},
                                   {"bus", s.buses[static_cast<size_t>(d.bus)].id},
                                   {"r", d.r},
                                   {"x", d.x},
                                   {"dispatch", dispatch_to_json(d.dispatch)}});
    devs["loads"] = json::array();
    for (const auto& d : s.loads)
        devs["loads"].push_back({{"id", d.id},
                                 {"bus", s.buses[static_cast<size_t>(d.bus)].id},
                                 {"p", d.p},
                                 {"q", d.q}});
    j["devices"] = devs;
    j["events"] = json::array();
    for (const auto& ev : s.events) {
        json je;
        je["time"] = ev.time;
        je["type"] = ev.kind == EventSpec::Kind::TripBranch ? "trip_branch" : "set_source_voltage";
        je["target"] = ev.target;
        if (ev.kind == EventSpec::Kind::SetSourceVoltage) je["value"] = ev.value;
        j["events"].push_back(je);
    }
    j["formulation"] = to_string(s.formulation);
    json js;
    switch (s.solver.method) {
        case Method::RK4Fixed: js["method"] = "rk4"; break;
        case Method::TrapezoidalFixed: js["method"] = "trapezoidal"; break;
        case Method::AdaptiveImplicit: js["method"] = "adaptive"; break;
    }
    js["dt"] = s.solver.dt_fixed;
    js["abstol"] = s.solver.abstol;
    js["reltol"] = s.solver.reltol;
    js["dt_min"] = s.solver.dt_min;
    js["dt_max"] = s.solver.dt_max;
    js["newton_tol"] = s.solver.newton_tol;
    js["newton_max_iter"] = s.solver.newton_max_iter;
    js["jacobian_reuse"] = s.solver.jacobian_reuse_limit;
    j["solver"] = js;
    j["t_end"] = s.t_end;
    j["output_dt"] = s.output_dt;
    if (!s.record.empty()) j["record"] = s.record;
    return j.dump(2) + "\n";
}

Scenario scenario_from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("scenario parse error: ") + e.what());
    }
    try {
        Scenario s;
        s.schema_version = j.value("schema_version", 1);
        if (s.schema_version != 1)
            throw ConfigError("unsupported schema_version " + std::to_string(s.schema_version));
        s.name = j.value("name", "scenario");
        if (j.contains("base")) {
            const auto& jb = j["base"];
            s.base.s_base_mva = jb.value("s_base_mva", 100.0);
            s.base.v_base_kv = jb.value("v_base_kv", 230.0);
            s.base.omega_b = kTwoPi * jb.value("f_hz", 60.0);
        }
        for (const auto& jb : j.value("buses", json::array()))
            s.buses.push_back({jb.at("id").get<int>(), jb.value("v_nom", 1.0)});
        const BusIndexMap bix(s.buses);
        for (const auto& jb : j.value("branches", json::array())) {
            Branch br;
            br.name = jb.at("name").get<std::string>();
            br.from = bix.at(jb.at("from").get<int>(), "branch " + br.name);
            br.to = bix.at(jb.at("to").get<int>(), "branch " + br.name);
            br.r = jb.value("r", 0.0);
            br.l = jb.at("l").get<double>();
            br.c = jb.value("c", 0.0);
            br.g = jb.value("g", 0.0);
            br.in_service = jb.value("status", "in") == std::string("in");
            s.branches.push_back(br);
        }
        const json devs = j.value("devices", json::object());
        for (const auto& ji : devs.value("inverters", json::array())) {
            InverterSpec d;
            d.id = ji.at("id").get<std::string>();
            d.bus = bix.at(ji.at("bus").get<int>(), d.id);
            const auto& jo = ji.at("outer");
            const std::string ok = jo.at("kind").get<std::string>();
            if (ok == "vsm") {
                d.outer_kind = OuterKind::Vsm;
                d.vsm.ta = jo.value("ta", d.vsm.ta);
                d.vsm.kd = jo.value("kd", d.vsm.kd);
                d.vsm.komega = jo.value("komega", d.vsm.komega);
                d.vsm.kq = jo.value("kq", d.vsm.kq);
                d.vsm.omega_f = jo.value("omega_f", d.vsm.omega_f);
            } else if (ok == "droop") {
                d.outer_kind = OuterKind::Droop;
                d.droop.mp = jo.value("mp", d.droop.mp);
                d.droop.mq = jo.value("mq", d.droop.mq);
                d.droop.omega_f = jo.value("omega_f", d.droop.omega_f);
            } else {
                throw ConfigError(d.id + ": unknown outer kind '" + ok + "'");
            }
            if (ji.contains("inner")) {
                const auto& jn = ji["inner"];
                d.inner_kind = jn.value("kind", "full") == std::string("full") ? InnerKind::Full
                                                                               : InnerKind::Reduced;
                d.inner.kpv = jn.value("kpv", d.inner.kpv);
                d.inner.kiv = jn.value("kiv", d.inner.kiv);
                d.inner.kpc = jn.value("kpc", d.inner.kpc);
                d.inner.kic = jn.value("kic", d.inner.kic);
                d.inner.kffv = jn.value("kffv", d.inner.kffv);
                d.inner.kffi = jn.value("kffi", d.inner.kffi);
            }
            if (ji.contains("filter")) {
                const auto& jf = ji["filter"];
                d.filter_kind = jf.value("kind", "full") == std::string("full")
                                    ? FilterKind::Full
                                    : FilterKind::Reduced;
                d.filter.lf = jf.value("lf", d.filter.lf);
                d.filter.rf = jf.value("rf", d.filter.rf);
                d.filter.cf = jf.value("cf", d.filter.cf);
                d.filter.lg = jf.value("lg", d.filter.lg);
                d.filter.rg = jf.value("rg", d.filter.rg);
            }
            if (ji.contains("pll")) {
                const auto& jp = ji["pll"];
                d.pll_kind = jp.value("kind", "kaura") == std::string("kaura") ? PllKind::Kaura
                                                                               : PllKind::Ideal;
                d.pll.kp = jp.value("kp", d.pll.kp);
                d.pll.ki = jp.value("ki", d.pll.ki);
                d.pll.omega_lp = jp.value("omega_lp", d.pll.omega_lp);
            }
            d.dispatch = dispatch_from_json(ji.at("dispatch"));
            s.inverters.push_back(d);
        }
        for (const auto& jm : devs.value("machines", json::array())) {
            MachineSpec d;
            d.id = jm.at("id").get<std::string>();
            d.bus = bix.at(jm.at("bus").get<int>(), d.id);
            d.params.ra = jm.value("ra", d.params.ra);
            d.params.xd = jm.value("xd", d.params.xd);
            d.params.xq = jm.value("xq", d.params.xq);
            d.params.xdp = jm.value("xdp", d.params.xdp);
            d.params.td0p = jm.value("td0p", d.params.td0p);
            d.params.h = jm.value("h", d.params.h);
            d.params.d = jm.value("d", d.params.d);
            d.params.stator = jm.value("stator", "full_flux") == std::string("full_flux")
                                  ? StatorKind::FullFlux
                                  : StatorKind::Algebraic;
            d.dispatch = dispatch_from_json(jm.at("dispatch"));
            s.machines.push_back(d);
        }
        for (const auto& jt : devs.value("sources", json::array())) {
            TheveninSpec d;
            d.id = jt.at("id").get<std::string>();
            d.bus = bix.at(jt.at("bus").get<int>(), d.id);
            d.r = jt.value("r", 0.0);
            d.x = jt.value("x", 0.01);
            d.dispatch = dispatch_from_json(jt.at("dispatch"));
            d.v_mag = d.dispatch.v;
            s.thevenins.push_back(d);
        }
        for (const auto& jl : devs.value("loads", json::array())) {
            LoadSpec d;
            d.id = jl.at("id").get<std::string>();
            d.bus = bix.at(jl.at("bus").get<int>(), d.id);
            d.p = jl.value("p", 0.0);
            d.q = jl.value("q", 0.0);
            s.loads.push_back(d);
        }
        for (const auto& je : j.value("events", json::array())) {
            EventSpec ev;
            ev.time = je.at("time").get<double>();
            const std::string kind = je.at("type").get<std::string>();
            if (kind == "trip_branch") ev.kind = EventSpec::Kind::TripBranch;
            else if (kind == "set_source_voltage") ev.kind = EventSpec::Kind::SetSourceVoltage;
            else throw ConfigError("unknown event type '" + kind + "'");
            ev.target = je.at("target").get<std::string>();
            ev.value = je.value("value", 0.0);
            s.events.push_back(ev);
        }
        if (j.contains("formulation")) s.formulation = formulation_from_string(j["formulation"]);
        if (j.contains("solver")) {
            const auto& js = j["solver"];
            const std::string m = js.value("method", "adaptive");
            if (m == "rk4") s.solver.method = Method::RK4Fixed;
            else if (m == "trapezoidal") s.solver.method = Method::TrapezoidalFixed;
            else if (m == "adaptive") s.solver.method = Method::AdaptiveImplicit;
            else throw ConfigError("unknown solver method '" + m + "'");
            s.solver.dt_fixed = js.value("dt", s.solver.dt_fixed);
            s.solver.abstol = js.value("abstol", s.solver.abstol);
            s.solver.reltol = js.value("reltol", s.solver.reltol);
            s.solver.dt_min = js.value("dt_min", s.solver.dt_min);
            s.solver.dt_max = js.value("dt_max", s.solver.dt_max);
            s.solver.newton_tol = js.value("newton_tol", s.solver.newton_tol);
            s.solver.newton_max_iter = js.value("newton_max_iter", s.solver.newton_max_iter);
            s.solver.jacobian_reuse_limit = js.value("jacobian_reuse", s.solver.jacobian_reuse_limit);
        }
        s.t_end = j.value("t_end", 10.0);
        s.output_dt = j.value("output_dt", 1e-4);
        if (j.contains("record")) s.record = j["record"].get<std::vector<std::string>>();
        return s;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("scenario field error: ") + e.what());
    }
}

Scenario load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open scenario file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return scenario_from_json_text(ss.str());
}

void save_scenario(const Scenario& s, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write scenario file " + path);
    out << scenario_to_json_text(s);
}

}  // namespace mfs
