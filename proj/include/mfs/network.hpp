#pragma once

#include <string>
#include <vector>

#include "mfs/core.hpp"
#include "mfs/linalg.hpp"

namespace mfs {

/// pi-line branch. c and g are the TOTAL shunt values, split half per end.
struct Branch {
    std::string name;
    int from = 0;
    int to = 0;
    double r = 0.0;   // series resistance, pu
    double l = 0.0;   // series inductance, pu
    double c = 0.0;   // total shunt capacitance, pu
    double g = 0.0;   // total shunt conductance, pu
    bool in_service = true;

    bool has_shunt() const { return c > 0.0; }

    void validate() const {
        if (from == to) throw ConfigError("branch " + name + ": from == to");
        if (!(l > 0.0)) throw ConfigError("branch " + name + ": series inductance must be positive");
        if (r < 0.0 || c < 0.0 || g < 0.0)
            throw ConfigError("branch " + name + ": r, c, g must be non-negative");
    }
};

struct LineDerivAbc {
    Abc3 di_l, dv1, dv2;
};

struct LineDerivDq {
    DqPair di_l, dv1, dv2;
};

/// Full nine-state abc dynamics of one pi-line (series current plus both
/// terminal shunt capacitors). Current is positive from terminal 1 to 2,
/// driven by v1 - v2. i1/i2 are the boundary currents entering terminal 1
/// and leaving terminal 2.
LineDerivAbc line_rhs_abc(const Abc3& i_l, const Abc3& v1, const Abc3& v2, const Abc3& i1,
                          const Abc3& i2, const Branch& br, double omega_b);

/// Six-state dq counterpart with the j*omega_s cross-coupling terms.
LineDerivDq line_rhs_dq(const DqPair& i_l, const DqPair& v1, const DqPair& v2, const DqPair& i1,
                        const DqPair& i2, double omega_s, const Branch& br, double omega_b);

/// Series-current kernel shared by the nodal network evaluators.
inline DqPair series_rhs_dq(const DqPair& i_l, const DqPair& v_from, const DqPair& v_to,
                            double omega_s, const Branch& br, double omega_b) {
    const Complex z(br.r, omega_s * br.l);
    const Complex di = (omega_b / br.l) * ((v_from.cx() - v_to.cx()) - z * i_l.cx());
    return DqPair::from(di);
}

inline Abc3 series_rhs_abc(const Abc3& i_l, const Abc3& v_from, const Abc3& v_to,
                           const Branch& br, double omega_b) {
    const double k = omega_b / br.l;
    return {k * ((v_from.a - v_to.a) - br.r * i_l.a), k * ((v_from.b - v_to.b) - br.r * i_l.b),
            k * ((v_from.c - v_to.c) - br.r * i_l.c)};
}

/// Nodal admittance matrix of the in-service branches: off-diagonal -y_l,
/// diagonal y_l + y_c/2 per terminal, y_l = 1/(r + j w l), y_c = g + j w c.
CMatrix assemble_ybus(const std::vector<Branch>& branches, int n_bus, double omega_s);

/// I(x, v) - Y v, the algebraic network residual in complex form.
std::vector<Complex> algebraic_network_residual(const CMatrix& ybus,
                                                std::span<const Complex> v,
                                                std::span<const Complex> injections);

struct TopologyEvent {
    std::string branch;
};

/// Flips the named branch out of service. Unknown branch -> ConfigError;
/// tripping an already-out branch warns and is a no-op. Returns true when the
/// topology actually changed.
bool apply_topology_event(std::vector<Branch>& branches, const TopologyEvent& ev);

}  // namespace mfs
