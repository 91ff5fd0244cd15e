#pragma once

#include <optional>
#include <string>

#include "mfs/core.hpp"
#include "mfs/transforms.hpp"

namespace mfs {

// ---------------------------------------------------------------------------
// Grid-forming inverter parameter blocks
// ---------------------------------------------------------------------------

enum class OuterKind { Vsm, Droop };
enum class InnerKind { Full, Reduced };
enum class FilterKind { Full, Reduced };
enum class PllKind { Kaura, Ideal };

struct VsmParams {
    double ta = 2.0;      // virtual mechanical time constant (2H), s
    double kd = 400.0;    // PLL-referenced damping gain
    double komega = 20.0; // governor-like frequency droop gain
    double kq = 0.2;      // reactive droop into the voltage reference
    double omega_f = kTwoPi * 5.0;  // q-measurement low-pass, rad/s
};

struct DroopParams {
    double mp = 0.05;
    double mq = 0.05;
    double omega_f = kTwoPi * 5.0;  // p/q measurement low-pass, rad/s
};

/// No saturation or output limiting is modeled; the controller outputs in
/// InnerLoopDerivs are the insertion point when limits are added.
struct InnerLoopParams {
    double kpv = 0.59;
    double kiv = 736.0;
    double kpc = 1.27;
    double kic = 14.3;
    double kffv = 1.0;  // output-voltage feedforward into the current loop
    double kffi = 0.0;  // grid-current feedforward into the voltage loop
};

struct LclFilterParams {
    double lf = 0.08;
    double rf = 0.003;
    double cf = 0.074;
    double lg = 0.2;
    double rg = 0.01;
};

struct PllParams {
    double kp = 0.084;
    double ki = 4.69;
    double omega_lp = kTwoPi * 50.0;  // measurement low-pass, rad/s
};

/// Operating references; filled in by initialization from the power flow.
struct DeviceReferences {
    double p_ref = 0.0;
    double q_ref = 0.0;
    double v_ref = 1.0;
    double omega_ref = 1.0;
};

// ---------------------------------------------------------------------------
// Inverter control kernels (device dq frame throughout)
// ---------------------------------------------------------------------------

struct InnerLoopDerivs {
    DqPair dphi;       // voltage-loop integrator (gain-premultiplied)
    DqPair dgamma;     // current-loop integrator (gain-premultiplied)
    DqPair i_cv_ref;   // voltage-loop output
    DqPair v_cv_ref;   // current-loop output (converter voltage command)
};

/// Cascaded PI voltage/current loops with cross-coupling feedforward terms
/// built from the filter constants (jwC v_o, jwL i_cv). i_cv_ref_override,
/// when set, drives the current loop directly (isolated current-loop
/// testing); otherwise the cascade value is used.
InnerLoopDerivs inner_loop_rhs(const DqPair& phi, const DqPair& gamma, const DqPair& v_o,
                               const DqPair& i_cv, const DqPair& i_g, const DqPair& v_o_ref,
                               double omega_dev, const InnerLoopParams& p,
                               const LclFilterParams& f,
                               const std::optional<DqPair>& i_cv_ref_override = std::nullopt);

/// Timescale-separated inner loops: references are tracked without error.
inline DqPair inner_loop_reduced(const DqPair& reference) { return reference; }

struct LclDerivs {
    DqPair di_cv, dv_o, di_g;
};

/// LCL filter dynamics in the device frame rotating at omega_dev (pu).
LclDerivs lcl_filter_rhs(const DqPair& i_cv, const DqPair& v_o, const DqPair& i_g,
                         const DqPair& v_cv, const DqPair& v_bus_dev, double omega_dev,
                         const LclFilterParams& p, double omega_b);

struct VsmDerivs {
    double ddelta;
    double domega;
    double dq_filt;
    double v_o_ref_mag;  // voltage command from the reactive branch
};

VsmDerivs vsm_outer_rhs(double omega_olc, double q_filt, double p_e, double q_e,
                        double omega_pll, const VsmParams& p, const DeviceReferences& refs,
                        double omega_b, double omega_sys_ref = 1.0);

struct DroopDerivs {
    double ddelta;
    double dp_filt;
    double dq_filt;
    double omega_cmd;
    double v_o_ref_mag;
};

DroopDerivs droop_outer_rhs(double p_filt, double q_filt, double p_e, double q_e,
                            const DroopParams& p, const DeviceReferences& refs, double omega_b,
                            double omega_sys_ref = 1.0);

struct PllState {
    DqPair v_filt;     // low-pass filtered voltage in the PLL frame
    double integrator = 0.0;
    double theta = 0.0;  // PLL angle relative to the network frame
};

struct PllDerivs {
    DqPair dv_filt;
    double dintegrator;
    double dtheta;
    double omega_pll;  // pu
};

/// Synchronous-reference-frame PLL measuring v (network frame).
PllDerivs pll_rhs(const DqPair& v_net, const PllState& s, const PllParams& p, double omega_b,
                  double omega_ref = 1.0);

// ---------------------------------------------------------------------------
// Synchronous machine (one-axis rotor, full-flux or algebraic stator)
// ---------------------------------------------------------------------------

enum class StatorKind { FullFlux, Algebraic };

struct MachineParams {
    double ra = 0.003;
    double xd = 1.81;
    double xq = 1.76;
    double xdp = 0.3;
    double td0p = 8.0;
    double h = 3.5;
    double d = 2.0;
    StatorKind stator = StatorKind::FullFlux;

    void validate() const {
        if (!(h > 0.0)) throw ConfigError("machine: inertia H must be positive");
        if (!(xd >= xdp) || !(xdp > 0.0))
            throw ConfigError("machine: require x_d >= x'_d > 0");
    }
};

/// Machine-frame dynamic state; stator fluxes unused by the algebraic stator.
struct MachineState {
    double delta = 0.0;       // rotor angle relative to the network frame
    double domega = 0.0;      // speed deviation, pu
    double eqp = 1.0;         // transient EMF e'_q
    double psi_d = 0.0;
    double psi_q = 0.0;
};

struct MachineDerivs {
    double ddelta = 0.0;
    double ddomega = 0.0;
    double deqp = 0.0;
    double dpsi_d = 0.0;
    double dpsi_q = 0.0;
    DqPair i_dq;       // stator current in the machine frame (generator convention)
    double tau_e = 0.0;
};

struct MachineInputs {
    DqPair e_dq;       // terminal voltage in the machine frame
    double efd = 1.0;  // constant field voltage
    double tau_m = 0.0;  // constant mechanical torque
};

MachineDerivs machine_rhs(const MachineState& s, const MachineInputs& in,
                          const MachineParams& p, double omega_b);

/// Air-gap torque from terminal quantities, algebraic-stator form.
inline double airgap_torque(const DqPair& e, const DqPair& i, double ra) {
    return e.d * i.d + e.q * i.q + ra * (i.d * i.d + i.q * i.q);
}

/// Stator currents of the algebraic-stator machine from (e, e'_q):
/// e_d = x_q i_q - r_a i_d, e_q = e'_q - x'_d i_d - r_a i_q.
DqPair algebraic_stator_current(const DqPair& e, double eqp, const MachineParams& p);

// ---------------------------------------------------------------------------
// Norton/Thevenin interfacing
// ---------------------------------------------------------------------------

struct InterfaceEquivalent {
    enum class Kind { Norton, Thevenin };
    Kind kind = Kind::Thevenin;
    Complex z_or_y;   // z_th for Thevenin, y_th for Norton
    Complex source;   // v_th or i_n
};

/// Thevenin -> Norton: y = 1/z, i_n = v/z. Norton input returned unchanged.
/// z = 0 -> ideal-source error.
InterfaceEquivalent to_norton(const InterfaceEquivalent& e);
InterfaceEquivalent to_thevenin(const InterfaceEquivalent& e);

/// Device-frame output current to network frame: i * e^{+j delta}.
inline DqPair injection_to_network(const DqPair& i_dev, double delta) {
    return frame_rotate(i_dev, -delta);
}

/// Network-frame quantity seen from a device frame at angle delta.
inline DqPair to_device_frame(const DqPair& s_net, double delta) {
    return frame_rotate(s_net, delta);
}

}  // namespace mfs
