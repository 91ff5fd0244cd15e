#include "mfs/system.hpp"

#include <algorithm>
#include <cmath>

#include "mfs/transforms.hpp"

namespace mfs {

namespace {

DqPair get_dq(std::span<const double> x, int ix) {
    return {x[static_cast<size_t>(ix)], x[static_cast<size_t>(ix) + 1]};
}
Abc3 get_abc(std::span<const double> x, int ix) {
    return {x[static_cast<size_t>(ix)], x[static_cast<size_t>(ix) + 1], x[static_cast<size_t>(ix) + 2]};
}
void put_dq(std::span<double> out, int ix, const DqPair& v) {
    out[static_cast<size_t>(ix)] = v.d;
    out[static_cast<size_t>(ix) + 1] = v.q;
}
void put_abc(std::span<double> out, int ix, const Abc3& v) {
    out[static_cast<size_t>(ix)] = v.a;
    out[static_cast<size_t>(ix) + 1] = v.b;
    out[static_cast<size_t>(ix) + 2] = v.c;
}

DqPair park_dq(const Abc3& x, double theta) {
    const Dq0 s = park(x, theta);
    return {s.d, s.q};
}
Abc3 ipark_dq(const DqPair& s, double theta) { return inverse_park({s.d, s.q, 0.0}, theta); }

struct InverterBinder {
    InverterSpec spec;
    int ix_delta = -1;
    int ix_outer2 = -1;  // omega_olc (VSM) or p_filt (droop)
    int ix_qfilt = -1;
    int ix_pll = -1;    // 4 states when Kaura
    int ix_inner = -1;  // 4 states when Full
    int ix_filt = -1;   // Full: icv/vo/ig block; Reduced EMT: ig block
};

struct InverterMeasure {
    DqPair v_o_dev, i_cv_dev, i_g_dev, v_bus_dev, v_o_net;
    double p_e = 0.0, q_e = 0.0;
    double omega_dev = 1.0, omega_pll = 1.0, v_o_ref_mag = 1.0;
    double delta = 0.0;
    VsmDerivs vsm{};
    DroopDerivs droop{};
    PllState pll_state{};
    PllDerivs pll{};
};

struct MachineBinder {
    MachineSpec spec;
    int ix = -1;  // delta, domega, eqp [, psi_d, psi_q]
};

struct TheveninBinder {
    TheveninSpec spec;
    int ix_i = -1;  // EMT inductive source current
};

struct LoadBinder {
    LoadSpec spec;
    int ix_i = -1;  // EMT inductive load current (q > 0)
};

struct BusBinder {
    int display_id = 0;
    int ix = -1;
    double c = 0.0;
    double g = 0.0;
};

}  // namespace

struct CompiledSystem::Impl {
    Formulation form = Formulation::DqEmt;
    PerUnitBase base;
    StateLayout layout;
    int n_bus = 0;
    double omega_s = 1.0;
    std::vector<Branch> live_branches;
    std::vector<int> branch_ix;  // current-state index per live branch
    std::vector<BusBinder> buses;
    std::vector<InverterBinder> inverters;
    std::vector<MachineBinder> machines;
    std::vector<TheveninBinder> thevenins;
    std::vector<LoadBinder> loads;
    CMatrix ybus;  // QSP only
    bool has_ref = false;
    int ref_angle_ix = -1;
    std::vector<std::string> probe_names;

    mutable std::vector<Complex> v_scr, inj_scr;
    mutable std::vector<Abc3> vabc_scr, injabc_scr;

    bool is_abc() const { return form == Formulation::AbcWaveform; }
    bool is_qsp() const { return form == Formulation::Qsp; }
    double theta_net(double t) const { return base.omega_b * omega_s * t; }

    InverterMeasure measure_inverter(const InverterBinder& b, double t,
                                     std::span<const double> x, const Complex& v_bus_net,
                                     const Abc3* v_bus_abc) const;
    void eval_dq(double t, std::span<const double> x, std::span<double> out) const;
    void eval_abc(double t, std::span<const double> x, std::span<double> out) const;
    void eval_qsp(double t, std::span<const double> x, std::span<double> out) const;

    Complex bus_voltage_net(double t, std::span<const double> x, int bus) const;
};

// ---------------------------------------------------------------------------
// Compilation
// ---------------------------------------------------------------------------

CompiledSystem::CompiledSystem() : impl_(new Impl) {}
CompiledSystem::~CompiledSystem() = default;

std::unique_ptr<CompiledSystem> CompiledSystem::compile(const Scenario& sc, Formulation form,
                                                        const std::vector<Branch>& live) {
    auto sys = std::unique_ptr<CompiledSystem>(new CompiledSystem);
    Impl& im = *sys->impl_;
    im.form = form;
    im.base = sc.base;
    im.n_bus = sc.bus_count();
    im.live_branches = live;

    const bool abc = form == Formulation::AbcWaveform;
    const bool qsp = form == Formulation::Qsp;
    const bool emt = !qsp;

    if (qsp) {
        for (const auto& inv : sc.inverters)
            if (inv.filter_kind != FilterKind::Reduced || inv.inner_kind != InnerKind::Reduced)
                throw ConfigError("QSP compilation requires reduced filter and inner loops (" +
                                  inv.id + ")");
    }

    StateLayout& lay = im.layout;
    auto add_dq = [&](const std::string& owner, const char* dn, const char* qn) {
        const int ix = lay.add_differential(owner, dn);
        lay.add_differential(owner, qn);
        return ix;
    };
    auto add_abc3 = [&](const std::string& owner, const char* an, const char* bn, const char* cn) {
        const int ix = lay.add_differential(owner, an);
        lay.add_differential(owner, bn);
        lay.add_differential(owner, cn);
        return ix;
    };

    im.buses.resize(static_cast<size_t>(im.n_bus));
    for (int k = 0; k < im.n_bus; ++k) {
        im.buses[static_cast<size_t>(k)].display_id = sc.buses[static_cast<size_t>(k)].id;
    }
    for (const Branch& br : im.live_branches) {
        if (!br.in_service) continue;
        im.buses[static_cast<size_t>(br.from)].c += br.c / 2.0;
        im.buses[static_cast<size_t>(br.from)].g += br.g / 2.0;
        im.buses[static_cast<size_t>(br.to)].c += br.c / 2.0;
        im.buses[static_cast<size_t>(br.to)].g += br.g / 2.0;
    }

    if (emt) {
        for (const Branch& br : im.live_branches) {
            if (!br.in_service) {
                im.branch_ix.push_back(-1);
                continue;
            }
            im.branch_ix.push_back(abc ? add_abc3(br.name, "i_a", "i_b", "i_c")
                                       : add_dq(br.name, "i_d", "i_q"));
        }
        for (auto& bb : im.buses) {
            if (!(bb.c > 0.0))
                throw ConfigError("EMT formulations need shunt capacitance at every bus (bus " +
                                  std::to_string(bb.display_id) + " has none in the live topology)");
            const std::string owner = "bus" + std::to_string(bb.display_id);
            bb.ix = abc ? add_abc3(owner, "v_a", "v_b", "v_c") : add_dq(owner, "v_d", "v_q");
        }
    } else {
        im.branch_ix.assign(im.live_branches.size(), -1);
    }

    for (const auto& spec : sc.inverters) {
        InverterBinder b;
        b.spec = spec;
        b.ix_delta = lay.add_differential(spec.id, "delta");
        b.ix_outer2 = lay.add_differential(
            spec.id, spec.outer_kind == OuterKind::Vsm ? "omega" : "p_filt");
        b.ix_qfilt = lay.add_differential(spec.id, "q_filt");
        if (spec.pll_kind == PllKind::Kaura) {
            b.ix_pll = lay.add_differential(spec.id, "pll_vd");
            lay.add_differential(spec.id, "pll_vq");
            lay.add_differential(spec.id, "pll_eps");
            lay.add_differential(spec.id, "pll_theta");
        }
        if (spec.inner_kind == InnerKind::Full) {
            b.ix_inner = lay.add_differential(spec.id, "phi_d");
            lay.add_differential(spec.id, "phi_q");
            lay.add_differential(spec.id, "gamma_d");
            lay.add_differential(spec.id, "gamma_q");
        }
        if (spec.filter_kind == FilterKind::Full) {
            if (abc) {
                b.ix_filt = add_abc3(spec.id, "icv_a", "icv_b", "icv_c");
                add_abc3(spec.id, "vo_a", "vo_b", "vo_c");
                add_abc3(spec.id, "ig_a", "ig_b", "ig_c");
            } else {
                b.ix_filt = add_dq(spec.id, "icv_d", "icv_q");
                add_dq(spec.id, "vo_d", "vo_q");
                add_dq(spec.id, "ig_d", "ig_q");
            }
        } else if (emt) {
            b.ix_filt = abc ? add_abc3(spec.id, "ig_a", "ig_b", "ig_c")
                            : add_dq(spec.id, "ig_d", "ig_q");
        }
        if (im.ref_angle_ix < 0) im.ref_angle_ix = b.ix_delta;
        im.inverters.push_back(std::move(b));
    }

    for (const auto& spec : sc.machines) {
        MachineBinder b;
        b.spec = spec;
        b.ix = lay.add_differential(spec.id, "delta");
        lay.add_differential(spec.id, "domega");
        lay.add_differential(spec.id, "eqp");
        if (spec.params.stator == StatorKind::FullFlux) {
            lay.add_differential(spec.id, "psi_d");
            lay.add_differential(spec.id, "psi_q");
        }
        if (im.ref_angle_ix < 0) im.ref_angle_ix = b.ix;
        im.machines.push_back(std::move(b));
    }

    for (const auto& spec : sc.thevenins) {
        TheveninBinder b;
        b.spec = spec;
        if (emt && spec.x > 0.0)
            b.ix_i = abc ? add_abc3(spec.id, "i_a", "i_b", "i_c") : add_dq(spec.id, "i_d", "i_q");
        im.has_ref = true;
        im.thevenins.push_back(std::move(b));
    }

    for (const auto& spec : sc.loads) {
        LoadBinder b;
        b.spec = spec;
        if (emt && spec.q > 0.0)
            b.ix_i = abc ? add_abc3(spec.id, "i_a", "i_b", "i_c") : add_dq(spec.id, "i_d", "i_q");
        im.loads.push_back(std::move(b));
    }

    if (qsp) {
        for (auto& bb : im.buses) {
            const std::string owner = "bus" + std::to_string(bb.display_id);
            bb.ix = lay.add_algebraic(owner, "v_d");
            lay.add_algebraic(owner, "v_q");
        }
        im.ybus = assemble_ybus(im.live_branches, im.n_bus, im.omega_s);
        for (const auto& b : im.loads)
            im.ybus(b.spec.bus, b.spec.bus) += Complex(b.spec.p, -b.spec.q);
        for (const auto& b : im.inverters) {
            const Complex zg(b.spec.filter.rg, im.omega_s * b.spec.filter.lg);
            im.ybus(b.spec.bus, b.spec.bus) += 1.0 / zg;
        }
        for (const auto& b : im.thevenins) {
            const InterfaceEquivalent thev{InterfaceEquivalent::Kind::Thevenin,
                                           Complex(b.spec.r, b.spec.x), Complex(b.spec.v_mag, 0.0)};
            im.ybus(b.spec.bus, b.spec.bus) += to_norton(thev).z_or_y;
        }
    }

    im.v_scr.resize(static_cast<size_t>(im.n_bus));
    im.inj_scr.resize(static_cast<size_t>(im.n_bus));
    if (abc) {
        im.vabc_scr.resize(static_cast<size_t>(im.n_bus));
        im.injabc_scr.resize(static_cast<size_t>(im.n_bus));
    }

    for (const auto& bb : im.buses)
        im.probe_names.push_back("bus" + std::to_string(bb.display_id) + ".v_mag");
    for (const auto& b : im.inverters) {
        im.probe_names.push_back(b.spec.id + ".p_e");
        im.probe_names.push_back(b.spec.id + ".q_e");
        im.probe_names.push_back(b.spec.id + ".omega_dev");
        im.probe_names.push_back(b.spec.id + ".omega_pll");
    }
    for (const auto& b : im.machines) {
        im.probe_names.push_back(b.spec.id + ".omega_r");
        im.probe_names.push_back(b.spec.id + ".tau_e");
        im.probe_names.push_back(b.spec.id + ".p_e");
    }
    for (const auto& b : im.thevenins) {
        im.probe_names.push_back(b.spec.id + ".p_inj");
        im.probe_names.push_back(b.spec.id + ".q_inj");
    }
    return sys;
}

// ---------------------------------------------------------------------------
// Shared device evaluation
// ---------------------------------------------------------------------------

Complex CompiledSystem::Impl::bus_voltage_net(double t, std::span<const double> x, int bus) const {
    const BusBinder& bb = buses[static_cast<size_t>(bus)];
    if (is_abc()) return park_dq(get_abc(x, bb.ix), theta_net(t)).cx();
    return get_dq(x, bb.ix).cx();
}

InverterMeasure CompiledSystem::Impl::measure_inverter(const InverterBinder& b, double t,
                                                       std::span<const double> x,
                                                       const Complex& v_bus_net,
                                                       const Abc3* v_bus_abc) const {
    const InverterSpec& sp = b.spec;
    InverterMeasure m;
    m.delta = x[static_cast<size_t>(b.ix_delta)];
    const double th_dev = is_abc() ? theta_net(t) + m.delta : 0.0;

    m.v_bus_dev = is_abc() ? park_dq(*v_bus_abc, th_dev)
                           : to_device_frame(DqPair::from(v_bus_net), m.delta);

    const bool full_filter = sp.filter_kind == FilterKind::Full;
    if (full_filter) {
        if (is_abc()) {
            m.i_cv_dev = park_dq(get_abc(x, b.ix_filt), th_dev);
            m.v_o_dev = park_dq(get_abc(x, b.ix_filt + 3), th_dev);
            m.i_g_dev = park_dq(get_abc(x, b.ix_filt + 6), th_dev);
            m.v_o_net = park_dq(get_abc(x, b.ix_filt + 3), theta_net(t));
        } else {
            m.i_cv_dev = get_dq(x, b.ix_filt);
            m.v_o_dev = get_dq(x, b.ix_filt + 2);
            m.i_g_dev = get_dq(x, b.ix_filt + 4);
            m.v_o_net = injection_to_network(m.v_o_dev, m.delta);
        }
    }

    const double q_filt = x[static_cast<size_t>(b.ix_qfilt)];
    if (!full_filter) {
        // reduced filter: commanded voltage source behind the grid-side branch
        const double vmag = sp.outer_kind == OuterKind::Vsm
                                ? sp.refs.v_ref + sp.vsm.kq * (sp.refs.q_ref - q_filt)
                                : sp.refs.v_ref + sp.droop.mq * (sp.refs.q_ref - q_filt);
        m.v_o_dev = {vmag, 0.0};
        m.v_o_net = injection_to_network(m.v_o_dev, m.delta);
        if (b.ix_filt >= 0) {
            m.i_g_dev = is_abc() ? park_dq(get_abc(x, b.ix_filt), th_dev) : get_dq(x, b.ix_filt);
        } else {
            const Complex zg(sp.filter.rg, omega_s * sp.filter.lg);
            m.i_g_dev = DqPair::from((m.v_o_dev.cx() - m.v_bus_dev.cx()) / zg);
        }
    }

    m.p_e = m.v_o_dev.d * m.i_g_dev.d + m.v_o_dev.q * m.i_g_dev.q;
    m.q_e = m.v_o_dev.q * m.i_g_dev.d - m.v_o_dev.d * m.i_g_dev.q;

    if (sp.pll_kind == PllKind::Kaura) {
        m.pll_state.v_filt = get_dq(x, b.ix_pll);
        m.pll_state.integrator = x[static_cast<size_t>(b.ix_pll) + 2];
        m.pll_state.theta = x[static_cast<size_t>(b.ix_pll) + 3];
        m.pll = pll_rhs(m.v_o_net, m.pll_state, sp.pll, base.omega_b, sp.refs.omega_ref);
        m.omega_pll = m.pll.omega_pll;
    } else {
        m.omega_pll = sp.refs.omega_ref;
    }

    if (sp.outer_kind == OuterKind::Vsm) {
        const double omega_olc = x[static_cast<size_t>(b.ix_outer2)];
        m.vsm = vsm_outer_rhs(omega_olc, q_filt, m.p_e, m.q_e, m.omega_pll, sp.vsm, sp.refs,
                              base.omega_b, omega_s);
        m.omega_dev = omega_olc;
        m.v_o_ref_mag = m.vsm.v_o_ref_mag;
    } else {
        const double p_filt = x[static_cast<size_t>(b.ix_outer2)];
        m.droop = droop_outer_rhs(p_filt, q_filt, m.p_e, m.q_e, sp.droop, sp.refs, base.omega_b,
                                  omega_s);
        m.omega_dev = m.droop.omega_cmd;
        m.v_o_ref_mag = m.droop.v_o_ref_mag;
    }
    return m;
}

namespace {

/// Writes the control-block derivatives common to every formulation; returns
/// the converter voltage command (Full inner) or the source command (Reduced).
DqPair write_inverter_control(const InverterBinder& b, const InverterMeasure& m,
                              std::span<double> out) {
    const InverterSpec& sp = b.spec;
    out[static_cast<size_t>(b.ix_delta)] =
        sp.outer_kind == OuterKind::Vsm ? m.vsm.ddelta : m.droop.ddelta;
    out[static_cast<size_t>(b.ix_outer2)] =
        sp.outer_kind == OuterKind::Vsm ? m.vsm.domega : m.droop.dp_filt;
    out[static_cast<size_t>(b.ix_qfilt)] =
        sp.outer_kind == OuterKind::Vsm ? m.vsm.dq_filt : m.droop.dq_filt;
    if (sp.pll_kind == PllKind::Kaura) {
        put_dq(out, b.ix_pll, m.pll.dv_filt);
        out[static_cast<size_t>(b.ix_pll) + 2] = m.pll.dintegrator;
        out[static_cast<size_t>(b.ix_pll) + 3] = m.pll.dtheta;
    }
    const DqPair v_o_ref{m.v_o_ref_mag, 0.0};
    if (sp.inner_kind == InnerKind::Full) return v_o_ref;  // caller runs the full inner loop
    return inner_loop_reduced(v_o_ref);
}

}  // namespace

// ---------------------------------------------------------------------------
// dq-EMT evaluation
// ---------------------------------------------------------------------------

void CompiledSystem::Impl::eval_dq(double t, std::span<const double> x, std::span<double> out) const {
    const double wb = base.omega_b;
    for (int k = 0; k < n_bus; ++k) {
        v_scr[static_cast<size_t>(k)] = get_dq(x, buses[static_cast<size_t>(k)].ix).cx();
        inj_scr[static_cast<size_t>(k)] = 0.0;
    }

    for (const auto& b : inverters) {
        const InverterSpec& sp = b.spec;
        const InverterMeasure m = measure_inverter(b, t, x, v_scr[static_cast<size_t>(sp.bus)], nullptr);
        const DqPair cmd = write_inverter_control(b, m, out);
        if (sp.inner_kind == InnerKind::Full) {
            const DqPair phi = get_dq(x, b.ix_inner);
            const DqPair gamma = get_dq(x, b.ix_inner + 2);
            const InnerLoopDerivs il = inner_loop_rhs(phi, gamma, m.v_o_dev, m.i_cv_dev, m.i_g_dev,
                                                      cmd, m.omega_dev, sp.inner, sp.filter);
            put_dq(out, b.ix_inner, il.dphi);
            put_dq(out, b.ix_inner + 2, il.dgamma);
            const LclDerivs fd = lcl_filter_rhs(m.i_cv_dev, m.v_o_dev, m.i_g_dev, il.v_cv_ref,
                                                m.v_bus_dev, m.omega_dev, sp.filter, wb);
            put_dq(out, b.ix_filt, fd.di_cv);
            put_dq(out, b.ix_filt + 2, fd.dv_o);
            put_dq(out, b.ix_filt + 4, fd.di_g);
        } else {
            // reduced filter with a dynamic grid-side branch
            const Complex zg(sp.filter.rg, m.omega_dev * sp.filter.lg);
            const Complex dig = (wb / sp.filter.lg) *
                                ((cmd.cx() - m.v_bus_dev.cx()) - zg * m.i_g_dev.cx());
            put_dq(out, b.ix_filt, DqPair::from(dig));
        }
        inj_scr[static_cast<size_t>(sp.bus)] += injection_to_network(m.i_g_dev, m.delta).cx();
    }

    for (const auto& b : machines) {
        const MachineSpec& sp = b.spec;
        MachineState st;
        st.delta = x[static_cast<size_t>(b.ix)];
        st.domega = x[static_cast<size_t>(b.ix) + 1];
        st.eqp = x[static_cast<size_t>(b.ix) + 2];
        if (sp.params.stator == StatorKind::FullFlux) {
            st.psi_d = x[static_cast<size_t>(b.ix) + 3];
            st.psi_q = x[static_cast<size_t>(b.ix) + 4];
        }
        MachineInputs in;
        in.e_dq = to_device_frame(DqPair::from(v_scr[static_cast<size_t>(sp.bus)]), st.delta);
        in.efd = sp.efd;
        in.tau_m = sp.tau_m;
        const MachineDerivs md = machine_rhs(st, in, sp.params, wb);
        out[static_cast<size_t>(b.ix)] = md.ddelta;
        out[static_cast<size_t>(b.ix) + 1] = md.ddomega;
        out[static_cast<size_t>(b.ix) + 2] = md.deqp;
        if (sp.params.stator == StatorKind::FullFlux) {
            out[static_cast<size_t>(b.ix) + 3] = md.dpsi_d;
            out[static_cast<size_t>(b.ix) + 4] = md.dpsi_q;
        }
        inj_scr[static_cast<size_t>(sp.bus)] += injection_to_network(md.i_dq, st.delta).cx();
    }

    for (const auto& b : thevenins) {
        const TheveninSpec& sp = b.spec;
        const Complex v_src = sp.v_mag * std::exp(Complex(0.0, sp.theta));
        const Complex v_bus = v_scr[static_cast<size_t>(sp.bus)];
        if (b.ix_i >= 0) {
            const Complex i = get_dq(x, b.ix_i).cx();
            const double l = sp.x / omega_s;
            const Complex di = (wb / l) * ((v_src - v_bus) - Complex(sp.r, omega_s * l) * i);
            put_dq(out, b.ix_i, DqPair::from(di));
            inj_scr[static_cast<size_t>(sp.bus)] += i;
        } else {
            inj_scr[static_cast<size_t>(sp.bus)] += (v_src - v_bus) / Complex(sp.r, 0.0);
        }
    }

    for (const auto& b : loads) {
        const LoadSpec& sp = b.spec;
        const Complex v = v_scr[static_cast<size_t>(sp.bus)];
        Complex i_l = 0.0;
        if (b.ix_i >= 0) {
            i_l = get_dq(x, b.ix_i).cx();
            const double l = 1.0 / sp.q;
            const Complex di = (wb / l) * (v - Complex(0.0, omega_s * l) * i_l);
            put_dq(out, b.ix_i, DqPair::from(di));
        }
        inj_scr[static_cast<size_t>(sp.bus)] -= sp.p * v + i_l;
    }

    // branch series currents and bus shunt voltages
    for (size_t bi = 0; bi < live_branches.size(); ++bi) {
        const Branch& br = live_branches[bi];
        if (!br.in_service) continue;
        const int ix = branch_ix[bi];
        const DqPair i_l = get_dq(x, ix);
        const DqPair vf = DqPair::from(v_scr[static_cast<size_t>(br.from)]);
        const DqPair vt = DqPair::from(v_scr[static_cast<size_t>(br.to)]);
        put_dq(out, ix, series_rhs_dq(i_l, vf, vt, omega_s, br, wb));
        inj_scr[static_cast<size_t>(br.from)] -= i_l.cx();
        inj_scr[static_cast<size_t>(br.to)] += i_l.cx();
    }
    for (size_t k = 0; k < buses.size(); ++k) {
        const BusBinder& bb = buses[k];
        const Complex yc(bb.g, omega_s * bb.c);
        const Complex dv = (wb / bb.c) * (inj_scr[k] - yc * v_scr[k]);
        put_dq(out, bb.ix, DqPair::from(dv));
    }
}

// ---------------------------------------------------------------------------
// abc waveform evaluation
// ---------------------------------------------------------------------------

void CompiledSystem::Impl::eval_abc(double t, std::span<const double> x, std::span<double> out) const {
    const double wb = base.omega_b;
    const double th_net = theta_net(t);
    for (int k = 0; k < n_bus; ++k) {
        vabc_scr[static_cast<size_t>(k)] = get_abc(x, buses[static_cast<size_t>(k)].ix);
        injabc_scr[static_cast<size_t>(k)] = {0.0, 0.0, 0.0};
    }

    for (const auto& b : inverters) {
        const InverterSpec& sp = b.spec;
        const Abc3& v_bus = vabc_scr[static_cast<size_t>(sp.bus)];
        const InverterMeasure m = measure_inverter(b, t, x, Complex{}, &v_bus);
        const double th_dev = th_net + m.delta;
        const DqPair cmd = write_inverter_control(b, m, out);
        if (sp.inner_kind == InnerKind::Full) {
            const DqPair phi = get_dq(x, b.ix_inner);
            const DqPair gamma = get_dq(x, b.ix_inner + 2);
            const InnerLoopDerivs il = inner_loop_rhs(phi, gamma, m.v_o_dev, m.i_cv_dev, m.i_g_dev,
                                                      cmd, m.omega_dev, sp.inner, sp.filter);
            put_dq(out, b.ix_inner, il.dphi);
            put_dq(out, b.ix_inner + 2, il.dgamma);
            // ideal three-phase source at the converter terminal
            const Abc3 v_cv = ipark_dq(il.v_cv_ref, th_dev);
            const Abc3 i_cv = get_abc(x, b.ix_filt);
            const Abc3 v_o = get_abc(x, b.ix_filt + 3);
            const Abc3 i_g = get_abc(x, b.ix_filt + 6);
            put_abc(out, b.ix_filt, (v_cv - v_o - i_cv * sp.filter.rf) * (wb / sp.filter.lf));
            put_abc(out, b.ix_filt + 3, (i_cv - i_g) * (wb / sp.filter.cf));
            put_abc(out, b.ix_filt + 6, (v_o - v_bus - i_g * sp.filter.rg) * (wb / sp.filter.lg));
            injabc_scr[static_cast<size_t>(sp.bus)] = injabc_scr[static_cast<size_t>(sp.bus)] + i_g;
        } else {
            const Abc3 v_src = ipark_dq(cmd, th_dev);
            const Abc3 i_g = get_abc(x, b.ix_filt);
            put_abc(out, b.ix_filt, (v_src - v_bus - i_g * sp.filter.rg) * (wb / sp.filter.lg));
            injabc_scr[static_cast<size_t>(sp.bus)] = injabc_scr[static_cast<size_t>(sp.bus)] + i_g;
        }
    }

    for (const auto& b : machines) {
        const MachineSpec& sp = b.spec;
        MachineState st;
        st.delta = x[static_cast<size_t>(b.ix)];
        st.domega = x[static_cast<size_t>(b.ix) + 1];
        st.eqp = x[static_cast<size_t>(b.ix) + 2];
        if (sp.params.stator == StatorKind::FullFlux) {
            st.psi_d = x[static_cast<size_t>(b.ix) + 3];
            st.psi_q = x[static_cast<size_t>(b.ix) + 4];
        }
        const double th_dev = th_net + st.delta;
        MachineInputs in;
        in.e_dq = park_dq(vabc_scr[static_cast<size_t>(sp.bus)], th_dev);
        in.efd = sp.efd;
        in.tau_m = sp.tau_m;
        const MachineDerivs md = machine_rhs(st, in, sp.params, wb);
        out[static_cast<size_t>(b.ix)] = md.ddelta;
        out[static_cast<size_t>(b.ix) + 1] = md.ddomega;
        out[static_cast<size_t>(b.ix) + 2] = md.deqp;
        if (sp.params.stator == StatorKind::FullFlux) {
            out[static_cast<size_t>(b.ix) + 3] = md.dpsi_d;
            out[static_cast<size_t>(b.ix) + 4] = md.dpsi_q;
        }
        injabc_scr[static_cast<size_t>(sp.bus)] =
            injabc_scr[static_cast<size_t>(sp.bus)] + ipark_dq(md.i_dq, th_dev);
    }

    for (const auto& b : thevenins) {
        const TheveninSpec& sp = b.spec;
        const DqPair v_src_net{sp.v_mag * std::cos(sp.theta), sp.v_mag * std::sin(sp.theta)};
        const Abc3 v_src = ipark_dq(v_src_net, th_net);
        const Abc3& v_bus = vabc_scr[static_cast<size_t>(sp.bus)];
        if (b.ix_i >= 0) {
            const Abc3 i = get_abc(x, b.ix_i);
            const double l = sp.x / omega_s;
            put_abc(out, b.ix_i, (v_src - v_bus - i * sp.r) * (wb / l));
            injabc_scr[static_cast<size_t>(sp.bus)] = injabc_scr[static_cast<size_t>(sp.bus)] + i;
        } else {
            injabc_scr[static_cast<size_t>(sp.bus)] =
                injabc_scr[static_cast<size_t>(sp.bus)] + (v_src - v_bus) * (1.0 / sp.r);
        }
    }

    for (const auto& b : loads) {
        const LoadSpec& sp = b.spec;
        const Abc3& v = vabc_scr[static_cast<size_t>(sp.bus)];
        Abc3 i_l{0.0, 0.0, 0.0};
        if (b.ix_i >= 0) {
            i_l = get_abc(x, b.ix_i);
            const double l = 1.0 / sp.q;
            put_abc(out, b.ix_i, v * (wb / l));
        }
        injabc_scr[static_cast<size_t>(sp.bus)] =
            injabc_scr[static_cast<size_t>(sp.bus)] - (v * sp.p + i_l);
    }

    for (size_t bi = 0; bi < live_branches.size(); ++bi) {
        const Branch& br = live_branches[bi];
        if (!br.in_service) continue;
        const int ix = branch_ix[bi];
        const Abc3 i_l = get_abc(x, ix);
        put_abc(out, ix,
                series_rhs_abc(i_l, vabc_scr[static_cast<size_t>(br.from)],
                               vabc_scr[static_cast<size_t>(br.to)], br, wb));
        injabc_scr[static_cast<size_t>(br.from)] = injabc_scr[static_cast<size_t>(br.from)] - i_l;
        injabc_scr[static_cast<size_t>(br.to)] = injabc_scr[static_cast<size_t>(br.to)] + i_l;
    }
    for (size_t k = 0; k < buses.size(); ++k) {
        const BusBinder& bb = buses[k];
        const Abc3& v = vabc_scr[k];
        put_abc(out, bb.ix, (injabc_scr[k] - v * bb.g) * (wb / bb.c));
    }
}

// ---------------------------------------------------------------------------
// QSP evaluation
// ---------------------------------------------------------------------------

void CompiledSystem::Impl::eval_qsp(double t, std::span<const double> x, std::span<double> out) const {
    for (int k = 0; k < n_bus; ++k) {
        v_scr[static_cast<size_t>(k)] = get_dq(x, buses[static_cast<size_t>(k)].ix).cx();
        inj_scr[static_cast<size_t>(k)] = 0.0;
    }

    for (const auto& b : inverters) {
        const InverterSpec& sp = b.spec;
        const InverterMeasure m = measure_inverter(b, t, x, v_scr[static_cast<size_t>(sp.bus)], nullptr);
        write_inverter_control(b, m, out);
        // Norton source current; the grid-side admittance sits in the Ybus diagonal
        const Complex zg(sp.filter.rg, omega_s * sp.filter.lg);
        inj_scr[static_cast<size_t>(sp.bus)] += m.v_o_net.cx() / zg;
    }

    for (const auto& b : machines) {
        const MachineSpec& sp = b.spec;
        MachineState st;
        st.delta = x[static_cast<size_t>(b.ix)];
        st.domega = x[static_cast<size_t>(b.ix) + 1];
        st.eqp = x[static_cast<size_t>(b.ix) + 2];
        if (sp.params.stator == StatorKind::FullFlux) {
            st.psi_d = x[static_cast<size_t>(b.ix) + 3];
            st.psi_q = x[static_cast<size_t>(b.ix) + 4];
        }
        MachineInputs in;
        in.e_dq = to_device_frame(DqPair::from(v_scr[static_cast<size_t>(sp.bus)]), st.delta);
        in.efd = sp.efd;
        in.tau_m = sp.tau_m;
        const MachineDerivs md = machine_rhs(st, in, sp.params, base.omega_b);
        out[static_cast<size_t>(b.ix)] = md.ddelta;
        out[static_cast<size_t>(b.ix) + 1] = md.ddomega;
        out[static_cast<size_t>(b.ix) + 2] = md.deqp;
        if (sp.params.stator == StatorKind::FullFlux) {
            out[static_cast<size_t>(b.ix) + 3] = md.dpsi_d;
            out[static_cast<size_t>(b.ix) + 4] = md.dpsi_q;
        }
        inj_scr[static_cast<size_t>(sp.bus)] += injection_to_network(md.i_dq, st.delta).cx();
    }

    for (const auto& b : thevenins) {
        const TheveninSpec& sp = b.spec;
        const Complex v_src = sp.v_mag * std::exp(Complex(0.0, sp.theta));
        inj_scr[static_cast<size_t>(sp.bus)] += v_src / Complex(sp.r, sp.x);
    }

    // loads folded into the admittance matrix
    const std::vector<Complex> yv = ybus * std::span<const Complex>(v_scr);
    for (int k = 0; k < n_bus; ++k) {
        const Complex r = inj_scr[static_cast<size_t>(k)] - yv[static_cast<size_t>(k)];
        put_dq(out, buses[static_cast<size_t>(k)].ix, DqPair::from(r));
    }
}

// ---------------------------------------------------------------------------
// Public surface
// ---------------------------------------------------------------------------

void CompiledSystem::eval(double t, std::span<const double> x, std::span<double> out) const {
    switch (impl_->form) {
        case Formulation::DqEmt: impl_->eval_dq(t, x, out); break;
        case Formulation::AbcWaveform: impl_->eval_abc(t, x, out); break;
        case Formulation::Qsp: impl_->eval_qsp(t, x, out); break;
    }
}

OdeSystem CompiledSystem::ode() const {
    OdeSystem sys;
    sys.n = impl_->layout.size();
    sys.n_diff = impl_->layout.differential_count();
    sys.time_varying = impl_->is_abc();
    sys.layout = &impl_->layout;
    sys.eval = [this](double t, std::span<const double> x, std::span<double> out) {
        eval(t, x, out);
    };
    return sys;
}

const StateLayout& CompiledSystem::layout() const { return impl_->layout; }
Formulation CompiledSystem::formulation() const { return impl_->form; }
int CompiledSystem::size() const { return impl_->layout.size(); }
int CompiledSystem::differential_count() const { return impl_->layout.differential_count(); }
bool CompiledSystem::time_varying() const { return impl_->is_abc(); }
int CompiledSystem::bus_count() const { return impl_->n_bus; }
bool CompiledSystem::has_angle_reference() const { return impl_->has_ref; }
int CompiledSystem::reference_angle_index() const { return impl_->ref_angle_ix; }
double CompiledSystem::bus_capacitance(int bus) const { return impl_->buses.at(static_cast<size_t>(bus)).c; }
double CompiledSystem::bus_conductance(int bus) const { return impl_->buses.at(static_cast<size_t>(bus)).g; }
const std::vector<Branch>& CompiledSystem::live_branches() const { return impl_->live_branches; }
const CMatrix& CompiledSystem::qsp_ybus() const {
    if (!impl_->is_qsp()) throw ConfigError("qsp_ybus: not a QSP compilation");
    return impl_->ybus;
}

const std::vector<std::string>& CompiledSystem::probe_names() const { return impl_->probe_names; }

void CompiledSystem::probes(double t, std::span<const double> x, std::span<double> out) const {
    const Impl& im = *impl_;
    size_t o = 0;
    for (const auto& bb : im.buses) {
        if (im.is_abc())
            out[o++] = park_dq(get_abc(x, bb.ix), im.theta_net(t)).mag();
        else
            out[o++] = get_dq(x, bb.ix).mag();
    }
    for (const auto& b : im.inverters) {
        const int bus = b.spec.bus;
        InverterMeasure m;
        if (im.is_abc()) {
            const Abc3 vb = get_abc(x, im.buses[static_cast<size_t>(bus)].ix);
            m = im.measure_inverter(b, t, x, Complex{}, &vb);
        } else {
            m = im.measure_inverter(b, t, x, im.bus_voltage_net(t, x, bus), nullptr);
        }
        out[o++] = m.p_e;
        out[o++] = m.q_e;
        out[o++] = m.omega_dev;
        out[o++] = m.omega_pll;
    }
    for (const auto& b : im.machines) {
        const MachineSpec& sp = b.spec;
        MachineState st;
        st.delta = x[static_cast<size_t>(b.ix)];
        st.domega = x[static_cast<size_t>(b.ix) + 1];
        st.eqp = x[static_cast<size_t>(b.ix) + 2];
        if (sp.params.stator == StatorKind::FullFlux) {
            st.psi_d = x[static_cast<size_t>(b.ix) + 3];
            st.psi_q = x[static_cast<size_t>(b.ix) + 4];
        }
        MachineInputs in;
        if (im.is_abc()) {
            const Abc3 vb = get_abc(x, im.buses[static_cast<size_t>(sp.bus)].ix);
            in.e_dq = park_dq(vb, im.theta_net(t) + st.delta);
        } else {
            in.e_dq = to_device_frame(DqPair::from(im.bus_voltage_net(t, x, sp.bus)), st.delta);
        }
        in.efd = sp.efd;
        in.tau_m = sp.tau_m;
        const MachineDerivs md = machine_rhs(st, in, sp.params, im.base.omega_b);
        out[o++] = 1.0 + st.domega;
        out[o++] = md.tau_e;
        out[o++] = in.e_dq.d * md.i_dq.d + in.e_dq.q * md.i_dq.q;
    }
    for (const auto& b : im.thevenins) {
        const TheveninSpec& sp = b.spec;
        const Complex v_bus = im.bus_voltage_net(t, x, sp.bus);
        Complex i;
        if (b.ix_i >= 0) {
            if (im.is_abc())
                i = park_dq(get_abc(x, b.ix_i), im.theta_net(t)).cx();
            else
                i = get_dq(x, b.ix_i).cx();
        } else {
            const Complex v_src = sp.v_mag * std::exp(Complex(0.0, sp.theta));
            i = (v_src - v_bus) / Complex(sp.r, sp.x);
        }
        const Complex s = v_bus * std::conj(i);
        out[o++] = s.real();
        out[o++] = s.imag();
    }
}

std::vector<double> remap_states(const StateLayout& from, std::span<const double> x,
                                 const StateLayout& to) {
    std::vector<double> out(static_cast<size_t>(to.size()), 0.0);
    for (int i = 0; i < to.size(); ++i) {
        const auto& e = to.entry(i);
        if (from.contains(e.owner, e.name))
            out[static_cast<size_t>(i)] = x[static_cast<size_t>(from.index_of(e.owner, e.name))];
    }
    return out;
}

}  // namespace mfs
