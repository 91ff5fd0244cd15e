#include "mfs/devices.hpp"

#include <cmath>

namespace mfs {

namespace {
// componentwise j*w*k*s = (-w*k*s.q, +w*k*s.d)
DqPair jw(double wk, const DqPair& s) { return {-wk * s.q, wk * s.d}; }
}  // namespace

InnerLoopDerivs inner_loop_rhs(const DqPair& phi, const DqPair& gamma, const DqPair& v_o,
                               const DqPair& i_cv, const DqPair& i_g, const DqPair& v_o_ref,
                               double omega_dev, const InnerLoopParams& p, const LclFilterParams& f,
                               const std::optional<DqPair>& i_cv_ref_override) {
    InnerLoopDerivs out;
    const DqPair e_v = v_o_ref - v_o;
    out.dphi = e_v * p.kiv;
    out.i_cv_ref = e_v * p.kpv + phi + jw(omega_dev * f.cf, v_o) + i_g * p.kffi;
    const DqPair i_ref = i_cv_ref_override.value_or(out.i_cv_ref);
    const DqPair e_c = i_ref - i_cv;
    out.dgamma = e_c * p.kic;
    out.v_cv_ref = e_c * p.kpc + gamma + jw(omega_dev * f.lf, i_cv) + v_o * p.kffv;
    return out;
}

LclDerivs lcl_filter_rhs(const DqPair& i_cv, const DqPair& v_o, const DqPair& i_g,
                         const DqPair& v_cv, const DqPair& v_bus_dev, double omega_dev,
                         const LclFilterParams& p, double omega_b) {
    LclDerivs out;
    const Complex zf(p.rf, omega_dev * p.lf);
    const Complex zg(p.rg, omega_dev * p.lg);
    const Complex yc(0.0, omega_dev * p.cf);
    out.di_cv = DqPair::from((omega_b / p.lf) * ((v_cv.cx() - v_o.cx()) - zf * i_cv.cx()));
    out.dv_o = DqPair::from((omega_b / p.cf) * ((i_cv.cx() - i_g.cx()) - yc * v_o.cx()));
    out.di_g = DqPair::from((omega_b / p.lg) * ((v_o.cx() - v_bus_dev.cx()) - zg * i_g.cx()));
    return out;
}

VsmDerivs vsm_outer_rhs(double omega_olc, double q_filt, double p_e, double q_e,
                        double omega_pll, const VsmParams& p, const DeviceReferences& refs,
                        double omega_b, double omega_sys_ref) {
    VsmDerivs out;
    out.ddelta = omega_b * (omega_olc - omega_sys_ref);
    out.domega = (refs.p_ref - p_e - p.kd * (omega_olc - omega_pll) -
                  p.komega * (omega_olc - refs.omega_ref)) /
                 p.ta;
    out.dq_filt = p.omega_f * (q_e - q_filt);
    out.v_o_ref_mag = refs.v_ref + p.kq * (refs.q_ref - q_filt);
    return out;
}

DroopDerivs droop_outer_rhs(double p_filt, double q_filt, double p_e, double q_e,
                            const DroopParams& p, const DeviceReferences& refs, double omega_b,
                            double omega_sys_ref) {
    DroopDerivs out;
    out.omega_cmd = refs.omega_ref + p.mp * (refs.p_ref - p_filt);
    out.ddelta = omega_b * (out.omega_cmd - omega_sys_ref);
    out.dp_filt = p.omega_f * (p_e - p_filt);
    out.dq_filt = p.omega_f * (q_e - q_filt);
    out.v_o_ref_mag = refs.v_ref + p.mq * (refs.q_ref - q_filt);
    return out;
}

PllDerivs pll_rhs(const DqPair& v_net, const PllState& s, const PllParams& p, double omega_b,
                  double omega_ref) {
    PllDerivs out;
    const DqPair v_pll_frame = frame_rotate(v_net, s.theta);
    out.dv_filt = (v_pll_frame - s.v_filt) * p.omega_lp;
    const double angle_err = std::atan2(s.v_filt.q, s.v_filt.d);
    out.dintegrator = angle_err;
    out.omega_pll = omega_ref + p.kp * angle_err + p.ki * s.integrator;
    out.dtheta = omega_b * (out.omega_pll - 1.0);
    return out;
}

DqPair algebraic_stator_current(const DqPair& e, double eqp, const MachineParams& p) {
    // [ -ra  xq ] [i_d]   [ e_d       ]
    // [ -xdp -ra] [i_q] = [ e_q - e'_q]
    const double det = p.ra * p.ra + p.xq * p.xdp;
    const double b1 = e.d;
    const double b2 = e.q - eqp;
    return {(-p.ra * b1 - p.xq * b2) / det, (p.xdp * b1 - p.ra * b2) / det};
}

MachineDerivs machine_rhs(const MachineState& s, const MachineInputs& in,
                          const MachineParams& p, double omega_b) {
    MachineDerivs out;
    DqPair i;
    if (p.stator == StatorKind::FullFlux) {
        // flux linkage inversion: psi_d = e'_q - x'_d i_d, psi_q = -x_q i_q
        i.d = (s.eqp - s.psi_d) / p.xdp;
        i.q = -s.psi_q / p.xq;
        out.dpsi_d = omega_b * (in.e_dq.d + p.ra * i.d + s.psi_q);
        out.dpsi_q = omega_b * (in.e_dq.q + p.ra * i.q - s.psi_d);
        out.tau_e = s.psi_d * i.q - s.psi_q * i.d;
    } else {
        i = algebraic_stator_current(in.e_dq, s.eqp, p);
        out.tau_e = airgap_torque(in.e_dq, i, p.ra);
    }
    out.i_dq = i;
    out.ddelta = omega_b * s.domega;
    out.ddomega = (in.tau_m - out.tau_e - p.d * s.domega) / (2.0 * p.h);
    out.deqp = (-s.eqp - (p.xd - p.xdp) * i.d + in.efd) / p.td0p;
    return out;
}

InterfaceEquivalent to_norton(const InterfaceEquivalent& e) {
    if (e.kind == InterfaceEquivalent::Kind::Norton) return e;
    if (e.z_or_y == Complex(0.0, 0.0))
        throw ArgumentError("to_norton: ideal source (z_th = 0) has no Norton equivalent");
    return {InterfaceEquivalent::Kind::Norton, 1.0 / e.z_or_y, e.source / e.z_or_y};
}

InterfaceEquivalent to_thevenin(const InterfaceEquivalent& e) {
    if (e.kind == InterfaceEquivalent::Kind::Thevenin) return e;
    if (e.z_or_y == Complex(0.0, 0.0))
        throw ArgumentError("to_thevenin: ideal source (y_th = 0) has no Thevenin equivalent");
    return {InterfaceEquivalent::Kind::Thevenin, 1.0 / e.z_or_y, e.source / e.z_or_y};
}

}  // namespace mfs
