#include <algorithm>
#include <cmath>

#include "mfs/system.hpp"
#include "mfs/transforms.hpp"

namespace mfs {

namespace {

void put_pair(std::vector<double>& x, const StateLayout& lay, const std::string& owner,
              const char* dn, const char* qn, Complex v) {
    x[static_cast<size_t>(lay.index_of(owner, dn))] = v.real();
    x[static_cast<size_t>(lay.index_of(owner, qn))] = v.imag();
}

void put_scalar(std::vector<double>& x, const StateLayout& lay, const std::string& owner,
                const char* name, double v) {
    x[static_cast<size_t>(lay.index_of(owner, name))] = v;
}

Complex rot(Complex z, double angle) { return z * std::exp(Complex(0.0, angle)); }

/// Back-solve all device/network states at the power-flow point. Writes
/// references into the scenario. The layout must belong to a dq/QSP
/// compilation performed AFTER set_references (compile copies the specs).
void set_references(Scenario& sc, const PowerFlowResult& pf) {
    for (auto& inv : sc.inverters) {
        const Complex v_bus = pf.v[static_cast<size_t>(inv.bus)];
        const Complex s = pf.s_inj[static_cast<size_t>(inv.bus)];
        const Complex ig_net = std::conj(s / v_bus);
        const Complex zg(inv.filter.rg, inv.filter.lg);
        const Complex vo_net = v_bus + zg * ig_net;
        const double delta = std::arg(vo_net);
        const Complex vo = rot(vo_net, -delta);
        const Complex ig = rot(ig_net, -delta);
        const Complex se = vo * std::conj(ig);
        inv.refs.p_ref = se.real();
        inv.refs.q_ref = se.imag();
        inv.refs.v_ref = std::abs(vo_net);
        inv.refs.omega_ref = 1.0;
    }
    for (auto& m : sc.machines) {
        const Complex v_bus = pf.v[static_cast<size_t>(m.bus)];
        const Complex s = pf.s_inj[static_cast<size_t>(m.bus)];
        const Complex i_net = std::conj(s / v_bus);
        const Complex E = v_bus + Complex(m.params.ra, m.params.xq) * i_net;
        const double delta = std::arg(E) - kTwoPi / 4.0;
        const Complex e = rot(v_bus, -delta);
        const Complex i = rot(i_net, -delta);
        const double eqp = e.imag() + m.params.ra * i.imag() + m.params.xdp * i.real();
        const double psi_d = eqp - m.params.xdp * i.real();
        const double psi_q = -m.params.xq * i.imag();
        m.efd = eqp + (m.params.xd - m.params.xdp) * i.real();
        m.tau_m = psi_d * i.imag() - psi_q * i.real();
    }
    for (auto& t : sc.thevenins) {
        const Complex v_bus = pf.v[static_cast<size_t>(t.bus)];
        const Complex s = pf.s_inj[static_cast<size_t>(t.bus)];
        const Complex i_net = std::conj(s / v_bus);
        const Complex v_src = v_bus + Complex(t.r, t.x) * i_net;
        t.v_mag = std::abs(v_src);
        t.theta = std::arg(v_src);
    }
}

std::vector<double> backsolve_states(const Scenario& sc, const CompiledSystem& sys,
                                     const PowerFlowResult& pf) {
    const StateLayout& lay = sys.layout();
    std::vector<double> x(static_cast<size_t>(lay.size()), 0.0);
    const bool qsp = sys.formulation() == Formulation::Qsp;

    for (int k = 0; k < sc.bus_count(); ++k) {
        const std::string owner = "bus" + std::to_string(sc.buses[static_cast<size_t>(k)].id);
        put_pair(x, lay, owner, "v_d", "v_q", pf.v[static_cast<size_t>(k)]);
    }
    for (const Branch& br : sys.live_branches()) {
        if (!br.in_service) continue;
        const Complex yl = 1.0 / Complex(br.r, br.l);
        const Complex i = yl * (pf.v[static_cast<size_t>(br.from)] - pf.v[static_cast<size_t>(br.to)]);
        if (!qsp) put_pair(x, lay, br.name, "i_d", "i_q", i);
    }

    for (const auto& inv : sc.inverters) {
        const Complex v_bus = pf.v[static_cast<size_t>(inv.bus)];
        const Complex s = pf.s_inj[static_cast<size_t>(inv.bus)];
        const Complex ig_net = std::conj(s / v_bus);
        const Complex zg(inv.filter.rg, inv.filter.lg);
        const Complex vo_net = v_bus + zg * ig_net;
        const double delta = std::arg(vo_net);
        const Complex vo = rot(vo_net, -delta);
        const Complex ig = rot(ig_net, -delta);
        put_scalar(x, lay, inv.id, "delta", delta);
        const Complex se = vo * std::conj(ig);
        if (inv.outer_kind == OuterKind::Vsm) {
            put_scalar(x, lay, inv.id, "omega", 1.0);
        } else {
            put_scalar(x, lay, inv.id, "p_filt", se.real());
        }
        put_scalar(x, lay, inv.id, "q_filt", se.imag());
        if (inv.pll_kind == PllKind::Kaura) {
            put_pair(x, lay, inv.id, "pll_vd", "pll_vq", Complex(std::abs(vo_net), 0.0));
            put_scalar(x, lay, inv.id, "pll_eps", 0.0);
            put_scalar(x, lay, inv.id, "pll_theta", delta);
        }
        if (inv.inner_kind == InnerKind::Full) {
            const Complex icv = ig + Complex(0.0, inv.filter.cf) * vo;
            const Complex vcv = vo + Complex(inv.filter.rf, inv.filter.lf) * icv;
            const Complex phi = icv - Complex(0.0, inv.filter.cf) * vo - inv.inner.kffi * ig;
            const Complex gamma = vcv - Complex(0.0, inv.filter.lf) * icv - inv.inner.kffv * vo;
            put_pair(x, lay, inv.id, "phi_d", "phi_q", phi);
            put_pair(x, lay, inv.id, "gamma_d", "gamma_q", gamma);
            put_pair(x, lay, inv.id, "icv_d", "icv_q", icv);
            put_pair(x, lay, inv.id, "vo_d", "vo_q", vo);
            put_pair(x, lay, inv.id, "ig_d", "ig_q", ig);
        } else if (sys.formulation() != Formulation::Qsp) {
            put_pair(x, lay, inv.id, "ig_d", "ig_q", ig);
        }
    }

    for (const auto& m : sc.machines) {
        const Complex v_bus = pf.v[static_cast<size_t>(m.bus)];
        const Complex s = pf.s_inj[static_cast<size_t>(m.bus)];
        const Complex i_net = std::conj(s / v_bus);
        const Complex E = v_bus + Complex(m.params.ra, m.params.xq) * i_net;
        const double delta = std::arg(E) - kTwoPi / 4.0;
        const Complex e = rot(v_bus, -delta);
        const Complex i = rot(i_net, -delta);
        const double eqp = e.imag() + m.params.ra * i.imag() + m.params.xdp * i.real();
        put_scalar(x, lay, m.id, "delta", delta);
        put_scalar(x, lay, m.id, "domega", 0.0);
        put_scalar(x, lay, m.id, "eqp", eqp);
        if (m.params.stator == StatorKind::FullFlux) {
            put_scalar(x, lay, m.id, "psi_d", eqp - m.params.xdp * i.real());
            put_scalar(x, lay, m.id, "psi_q", -m.params.xq * i.imag());
        }
    }

    for (const auto& t : sc.thevenins) {
        if (qsp || !(t.x > 0.0)) continue;
        const Complex v_bus = pf.v[static_cast<size_t>(t.bus)];
        const Complex s = pf.s_inj[static_cast<size_t>(t.bus)];
        put_pair(x, lay, t.id, "i_d", "i_q", std::conj(s / v_bus));
    }

    for (const auto& L : sc.loads) {
        if (qsp || !(L.q > 0.0)) continue;
        const Complex v_bus = pf.v[static_cast<size_t>(L.bus)];
        const Complex i_l = v_bus / Complex(0.0, 1.0 / L.q);
        put_pair(x, lay, L.id, "i_d", "i_q", i_l);
    }
    return x;
}

/// Maps a refined dq equilibrium onto the abc layout at t = 0 (theta_net = 0).
std::vector<double> dq_to_abc_states(const Scenario& sc, const CompiledSystem& dq_sys,
                                     std::span<const double> xdq, const CompiledSystem& abc_sys) {
    const StateLayout& ldq = dq_sys.layout();
    const StateLayout& lab = abc_sys.layout();
    std::vector<double> x(static_cast<size_t>(lab.size()), 0.0);

    auto dq_of = [&](const std::string& owner, const char* dn, const char* qn) {
        return DqPair{xdq[static_cast<size_t>(ldq.index_of(owner, dn))],
                      xdq[static_cast<size_t>(ldq.index_of(owner, qn))]};
    };
    auto put3 = [&](const std::string& owner, const char* an, const char* bn, const char* cn,
                    const Abc3& v) {
        x[static_cast<size_t>(lab.index_of(owner, an))] = v.a;
        x[static_cast<size_t>(lab.index_of(owner, bn))] = v.b;
        x[static_cast<size_t>(lab.index_of(owner, cn))] = v.c;
    };
    auto ip = [&](const DqPair& s, double theta) { return inverse_park({s.d, s.q, 0.0}, theta); };

    for (int i = 0; i < lab.size(); ++i) {
        const auto& e = lab.entry(i);
        if (ldq.contains(e.owner, e.name))
            x[static_cast<size_t>(i)] = xdq[static_cast<size_t>(ldq.index_of(e.owner, e.name))];
    }
    for (int k = 0; k < sc.bus_count(); ++k) {
        const std::string owner = "bus" + std::to_string(sc.buses[static_cast<size_t>(k)].id);
        put3(owner, "v_a", "v_b", "v_c", ip(dq_of(owner, "v_d", "v_q"), 0.0));
    }
    for (const Branch& br : abc_sys.live_branches()) {
        if (!br.in_service) continue;
        put3(br.name, "i_a", "i_b", "i_c", ip(dq_of(br.name, "i_d", "i_q"), 0.0));
    }
    for (const auto& inv : sc.inverters) {
        const double delta = xdq[static_cast<size_t>(ldq.index_of(inv.id, "delta"))];
        if (inv.filter_kind == FilterKind::Full) {
            put3(inv.id, "icv_a", "icv_b", "icv_c", ip(dq_of(inv.id, "icv_d", "icv_q"), delta));
            put3(inv.id, "vo_a", "vo_b", "vo_c", ip(dq_of(inv.id, "vo_d", "vo_q"), delta));
            put3(inv.id, "ig_a", "ig_b", "ig_c", ip(dq_of(inv.id, "ig_d", "ig_q"), delta));
        } else {
            put3(inv.id, "ig_a", "ig_b", "ig_c", ip(dq_of(inv.id, "ig_d", "ig_q"), delta));
        }
    }
    for (const auto& t : sc.thevenins) {
        if (!(t.x > 0.0)) continue;
        put3(t.id, "i_a", "i_b", "i_c", ip(dq_of(t.id, "i_d", "i_q"), 0.0));
    }
    for (const auto& L : sc.loads) {
        if (!(L.q > 0.0)) continue;
        put3(L.id, "i_a", "i_b", "i_c", ip(dq_of(L.id, "i_d", "i_q"), 0.0));
    }
    return x;
}

/// Newton refinement of the full residual; pins the reference angle when the
/// system carries the rotational symmetry.
int refine_equilibrium(const CompiledSystem& sys, std::vector<double>& x, double tol) {
    const int pin = sys.has_angle_reference() ? -1 : sys.reference_angle_index();
    const double pin_value = pin >= 0 ? x[static_cast<size_t>(pin)] : 0.0;
    auto residual = [&](std::span<const double> xs, std::span<double> out) {
        sys.eval(0.0, xs, out);
        if (pin >= 0) out[static_cast<size_t>(pin)] = xs[static_cast<size_t>(pin)] - pin_value;
    };
    const NewtonReport rep = newton_solve(residual, {}, x, tol, 25);
    return rep.iterations;
}

}  // namespace

Prepared prepare_initialized(Scenario& sc, Formulation form, const std::vector<Branch>& live) {
    if (form == Formulation::Qsp) {
        // QSP compilation forces the timescale-consistent reduced variants
        for (auto& inv : sc.inverters) {
            if (inv.filter_kind == FilterKind::Full || inv.inner_kind == InnerKind::Full)
                log_info(inv.id + ": QSP run reduces the LCL filter and inner loops");
            inv.filter_kind = FilterKind::Reduced;
            inv.inner_kind = InnerKind::Reduced;
        }
    }
    Prepared out;
    out.pf = power_flow(sc);
    set_references(sc, out.pf);
    if (form == Formulation::AbcWaveform) {
        auto dq_sys = CompiledSystem::compile(sc, Formulation::DqEmt, live);
        std::vector<double> xdq = backsolve_states(sc, *dq_sys, out.pf);
        out.init_newton_iterations = refine_equilibrium(*dq_sys, xdq, 5e-11);
        out.system = CompiledSystem::compile(sc, Formulation::AbcWaveform, live);
        out.x0 = dq_to_abc_states(sc, *dq_sys, xdq, *out.system);
        return out;
    }
    out.system = CompiledSystem::compile(sc, form, live);
    out.x0 = backsolve_states(sc, *out.system, out.pf);
    out.init_newton_iterations = refine_equilibrium(*out.system, out.x0, 5e-11);
    return out;
}

// ---------------------------------------------------------------------------
// run(): event-segmented integration with uniform-grid recording
// ---------------------------------------------------------------------------

namespace {

struct RecordBinding {
    enum class Kind { State, Probe, Missing } kind = Kind::Missing;
    int index = -1;
};

struct Recorder {
    std::vector<std::string> names;
    std::vector<RecordBinding> bindings;
    const CompiledSystem* sys = nullptr;
    std::vector<double> probe_buf;
    std::vector<double> xg_buf;
    TimeSeriesResult* out = nullptr;
    double output_dt = 1e-4;
    long next_grid = 0;
    bool adaptive = false;
    std::vector<double> prev_x;  // fixed-step interpolation support

    void rebind(const CompiledSystem& system) {
        sys = &system;
        bindings.clear();
        const auto& probes = system.probe_names();
        for (const auto& name : names) {
            RecordBinding b;
            const auto dot = name.find('.');
            if (dot != std::string::npos) {
                const std::string owner = name.substr(0, dot);
                const std::string state = name.substr(dot + 1);
                if (system.layout().contains(owner, state)) {
                    b.kind = RecordBinding::Kind::State;
                    b.index = system.layout().index_of(owner, state);
                }
            }
            if (b.kind == RecordBinding::Kind::Missing) {
                const auto it = std::find(probes.begin(), probes.end(), name);
                if (it != probes.end()) {
                    b.kind = RecordBinding::Kind::Probe;
                    b.index = static_cast<int>(it - probes.begin());
                }
            }
            bindings.push_back(b);
        }
        probe_buf.resize(probes.size());
        xg_buf.resize(static_cast<size_t>(system.size()));
    }

    void sample_row(double t, std::span<const double> xg, std::vector<std::vector<double>>& cols) {
        bool need_probes = false;
        for (const auto& b : bindings)
            if (b.kind == RecordBinding::Kind::Probe) need_probes = true;
        if (need_probes) sys->probes(t, xg, probe_buf);
        for (size_t c = 0; c < bindings.size(); ++c) {
            const RecordBinding& b = bindings[c];
            double v = std::numeric_limits<double>::quiet_NaN();
            if (b.kind == RecordBinding::Kind::State) v = xg[static_cast<size_t>(b.index)];
            else if (b.kind == RecordBinding::Kind::Probe) v = probe_buf[static_cast<size_t>(b.index)];
            cols[c].push_back(v);
        }
    }

    void grid_points(double t0, double t1, std::span<const double> x1, const DenseOutput* dense) {
        const double eps = 1e-9 * std::max(1.0, std::abs(t1));
        while (true) {
            const double tg = static_cast<double>(next_grid) * output_dt;
            if (tg > t1 + eps) break;
            if (tg < t0 - eps) {
                next_grid++;
                continue;
            }
            if (dense) {
                dense->eval(tg, xg_buf);
            } else {
                const double alpha = (t1 - t0) > 0.0 ? (tg - t0) / (t1 - t0) : 1.0;
                for (size_t i = 0; i < xg_buf.size(); ++i)
                    xg_buf[i] = prev_x[i] + alpha * (x1[i] - prev_x[i]);
            }
            out->time.push_back(tg);
            sample_row(tg, xg_buf, out->cols);
            next_grid++;
        }
        if (adaptive) {
            out->raw_time.push_back(t1);
            sample_row(t1, x1, out->raw_cols);
        }
        prev_x.assign(x1.begin(), x1.end());
    }
};

void resolve_qsp_algebraic(const CompiledSystem& sys, std::vector<double>& x, double tol) {
    const int nd = sys.differential_count();
    const int na = sys.size() - nd;
    if (na == 0) return;
    std::vector<double> v(x.begin() + nd, x.end());
    std::vector<double> full(static_cast<size_t>(sys.size()));
    std::vector<double> out(static_cast<size_t>(sys.size()));
    auto residual = [&](std::span<const double> vs, std::span<double> r) {
        std::copy(x.begin(), x.begin() + nd, full.begin());
        std::copy(vs.begin(), vs.end(), full.begin() + nd);
        sys.eval(0.0, full, out);
        std::copy(out.begin() + nd, out.end(), r.begin());
    };
    newton_solve(residual, {}, v, tol, 25);
    std::copy(v.begin(), v.end(), x.begin() + nd);
}

}  // namespace

TimeSeriesResult run(const Scenario& scenario, Formulation form) {
    Scenario sc = scenario;  // mutable copy: references and event effects land here
    if (form == Formulation::Qsp) {
        for (auto& inv : sc.inverters) {
            inv.filter_kind = FilterKind::Reduced;
            inv.inner_kind = InnerKind::Reduced;
        }
        sc.formulation = Formulation::Qsp;
    }
    sc.validate_or_throw();
    sc.solver.validate();
    if (form == Formulation::AbcWaveform && sc.solver.method == Method::AdaptiveImplicit) {
        // time-varying waveform model: fixed-step integration applies
        log_info("abc waveform run: using fixed-step trapezoidal at dt=" +
                 std::to_string(sc.solver.dt_fixed));
        sc.solver.method = Method::TrapezoidalFixed;
    }

    TimeSeriesResult result;
    std::vector<Branch> live = sc.branches;
    Prepared prep = prepare_initialized(sc, form, live);
    std::vector<double> x = prep.x0;

    Recorder rec;
    rec.out = &result;
    rec.output_dt = sc.output_dt;
    rec.adaptive = sc.solver.method == Method::AdaptiveImplicit;
    rec.names = sc.record.empty() ? prep.system->probe_names() : sc.record;
    result.names = rec.names;
    result.cols.assign(rec.names.size(), {});
    result.raw_cols.assign(rec.names.size(), {});
    rec.rebind(*prep.system);
    for (const auto& b : rec.bindings)
        if (b.kind == RecordBinding::Kind::Missing)
            throw ConfigError("record list names unknown signal");

    // initial sample
    rec.prev_x = x;
    result.time.push_back(0.0);
    rec.sample_row(0.0, x, result.cols);
    if (rec.adaptive) {
        result.raw_time.push_back(0.0);
        rec.sample_row(0.0, x, result.raw_cols);
    }
    rec.next_grid = 1;

    std::vector<EventSpec> events = sc.events;
    std::sort(events.begin(), events.end(),
              [](const EventSpec& a, const EventSpec& b) { return a.time < b.time; });

    std::unique_ptr<CompiledSystem> system = std::move(prep.system);
    double t_cursor = 0.0;
    double dt0 = -1.0;  // heuristic start on the first segment
    auto cb = [&](double t0, double t1, std::span<const double> x1, const DenseOutput* dense) {
        rec.grid_points(t0, t1, x1, dense);
    };

    try {
        for (size_t ei = 0; ei <= events.size(); ++ei) {
            const double t_target = ei < events.size() ? events[ei].time : sc.t_end;
            if (t_target > t_cursor) {
                const OdeSystem ode = system->ode();
                if (sc.solver.method == Method::AdaptiveImplicit)
                    integrate_adaptive(ode, x, t_cursor, t_target, dt0, sc.solver, result.stats, cb);
                else
                    integrate_fixed(ode, x, t_cursor, t_target, sc.solver, result.stats, cb);
                t_cursor = t_target;
            }
            if (ei >= events.size()) break;

            const EventSpec& ev = events[ei];
            if (ev.kind == EventSpec::Kind::TripBranch) {
                const bool changed = apply_topology_event(live, {ev.target});
                result.event_log.push_back("t=" + std::to_string(ev.time) + " trip_branch " +
                                           ev.target + (changed ? "" : " (no-op)"));
                if (changed) {
                    auto next = CompiledSystem::compile(sc, form, live);
                    x = remap_states(system->layout(), x, next->layout());
                    system = std::move(next);
                    rec.rebind(*system);
                }
            } else {
                for (auto& t : sc.thevenins)
                    if (t.id == ev.target) t.v_mag = ev.value;
                result.event_log.push_back("t=" + std::to_string(ev.time) + " set_source_voltage " +
                                           ev.target + " -> " + std::to_string(ev.value));
                auto next = CompiledSystem::compile(sc, form, live);
                x = remap_states(system->layout(), x, next->layout());
                system = std::move(next);
                rec.rebind(*system);
            }
            if (form == Formulation::Qsp) resolve_qsp_algebraic(*system, x, sc.solver.newton_tol);
            rec.prev_x = x;
            dt0 = sc.solver.dt_min * 10.0;  // restart with a short step after the discontinuity
        }
    } catch (const NumericalError& e) {
        result.completed = false;
        result.failure = e.what();
        log(LogLevel::Error, std::string("run aborted: ") + e.what());
    }
    return result;
}

TimeSeriesResult run(const Scenario& scenario) { return run(scenario, scenario.formulation); }

}  // namespace mfs
