#include "mfs/network.hpp"

namespace mfs {

LineDerivAbc line_rhs_abc(const Abc3& i_l, const Abc3& v1, const Abc3& v2, const Abc3& i1,
                          const Abc3& i2, const Branch& br, double omega_b) {
    if (!br.in_service) throw ConfigError("line_rhs_abc: branch " + br.name + " is out of service");
    if (!br.has_shunt())
        throw ConfigError("line_rhs_abc: branch " + br.name +
                          " has c = 0; the nine-state formulation is unavailable (series r-l only)");
    const double ch = br.c / 2.0;
    const double gh = br.g / 2.0;
    LineDerivAbc out;
    out.di_l = series_rhs_abc(i_l, v1, v2, br, omega_b);
    const double kc = omega_b / ch;
    out.dv1 = {kc * ((i1.a - i_l.a) - gh * v1.a), kc * ((i1.b - i_l.b) - gh * v1.b),
               kc * ((i1.c - i_l.c) - gh * v1.c)};
    out.dv2 = {kc * ((i_l.a - i2.a) - gh * v2.a), kc * ((i_l.b - i2.b) - gh * v2.b),
               kc * ((i_l.c - i2.c) - gh * v2.c)};
    return out;
}

LineDerivDq line_rhs_dq(const DqPair& i_l, const DqPair& v1, const DqPair& v2, const DqPair& i1,
                        const DqPair& i2, double omega_s, const Branch& br, double omega_b) {
    if (!br.in_service) throw ConfigError("line_rhs_dq: branch " + br.name + " is out of service");
    if (!br.has_shunt())
        throw ConfigError("line_rhs_dq: branch " + br.name +
                          " has c = 0; the six-state formulation is unavailable (series r-l only)");
    const double ch = br.c / 2.0;
    const Complex yc(br.g / 2.0, omega_s * ch);
    LineDerivDq out;
    out.di_l = series_rhs_dq(i_l, v1, v2, omega_s, br, omega_b);
    const double kc = omega_b / ch;
    out.dv1 = DqPair::from(kc * ((i1.cx() - i_l.cx()) - yc * v1.cx()));
    out.dv2 = DqPair::from(kc * ((i_l.cx() - i2.cx()) - yc * v2.cx()));
    return out;
}

CMatrix assemble_ybus(const std::vector<Branch>& branches, int n_bus, double omega_s) {
    CMatrix y(n_bus, n_bus);
    for (const Branch& br : branches) {
        if (!br.in_service) continue;
        const Complex yl = 1.0 / Complex(br.r, omega_s * br.l);
        const Complex yc_half = Complex(br.g, omega_s * br.c) / 2.0;
        y(br.from, br.from) += yl + yc_half;
        y(br.to, br.to) += yl + yc_half;
        y(br.from, br.to) -= yl;
        y(br.to, br.from) -= yl;
    }
    return y;
}

std::vector<Complex> algebraic_network_residual(const CMatrix& ybus, std::span<const Complex> v,
                                                std::span<const Complex> injections) {
    std::vector<Complex> res = ybus * v;
    for (size_t i = 0; i < res.size(); ++i) res[i] = injections[i] - res[i];
    return res;
}

bool apply_topology_event(std::vector<Branch>& branches, const TopologyEvent& ev) {
    for (Branch& br : branches) {
        if (br.name != ev.branch) continue;
        if (!br.in_service) {
            log_warn("trip of branch " + ev.branch + " ignored: already out of service");
            return false;
        }
        br.in_service = false;
        return true;
    }
    throw ConfigError("topology event names unknown branch: " + ev.branch);
}

}  // namespace mfs
