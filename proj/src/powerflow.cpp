#include <cmath>

#include "mfs/scenario.hpp"
#include "mfs/system.hpp"

namespace mfs {

namespace {

enum class BusType { Slack, PV, PQ };

struct PfBus {
    BusType type = BusType::PQ;
    double p_set = 0.0;
    double q_set = 0.0;
    double v_set = 1.0;
};

}  // namespace

PowerFlowResult power_flow(const Scenario& sc) {
    const int n = sc.bus_count();
    CMatrix y = assemble_ybus(sc.branches, n, 1.0);
    for (const auto& L : sc.loads) y(L.bus, L.bus) += Complex(L.p, -L.q);

    std::vector<PfBus> bus(static_cast<size_t>(n));
    auto apply_dispatch = [&](int b, const DispatchSpec& d) {
        PfBus& pb = bus[static_cast<size_t>(b)];
        switch (d.role) {
            case DispatchSpec::Role::Slack:
                pb.type = BusType::Slack;
                pb.v_set = d.v;
                break;
            case DispatchSpec::Role::PV:
                pb.type = BusType::PV;
                pb.p_set += d.p;
                pb.v_set = d.v;
                break;
            case DispatchSpec::Role::PQ:
                pb.p_set += d.p;
                pb.q_set += d.q;
                break;
            case DispatchSpec::Role::None:
                break;
        }
    };
    for (const auto& d : sc.inverters) apply_dispatch(d.bus, d.dispatch);
    for (const auto& d : sc.machines) apply_dispatch(d.bus, d.dispatch);
    for (const auto& d : sc.thevenins) apply_dispatch(d.bus, d.dispatch);

    std::vector<double> vm(static_cast<size_t>(n), 1.0), th(static_cast<size_t>(n), 0.0);
    for (int k = 0; k < n; ++k)
        if (bus[static_cast<size_t>(k)].type != BusType::PQ) vm[static_cast<size_t>(k)] = bus[static_cast<size_t>(k)].v_set;

    // unknowns: theta at non-slack buses, V at PQ buses
    std::vector<int> th_idx, v_idx;
    for (int k = 0; k < n; ++k) {
        if (bus[static_cast<size_t>(k)].type != BusType::Slack) th_idx.push_back(k);
        if (bus[static_cast<size_t>(k)].type == BusType::PQ) v_idx.push_back(k);
    }
    const int nu = static_cast<int>(th_idx.size() + v_idx.size());

    auto calc_mismatch = [&](const std::vector<double>& vmag, const std::vector<double>& vang,
                             std::vector<double>& mis) {
        std::vector<Complex> v(static_cast<size_t>(n));
        for (int k = 0; k < n; ++k)
            v[static_cast<size_t>(k)] = std::polar(vmag[static_cast<size_t>(k)], vang[static_cast<size_t>(k)]);
        const std::vector<Complex> yv = y * std::span<const Complex>(v);
        size_t m = 0;
        for (int k : th_idx) {
            const Complex s = v[static_cast<size_t>(k)] * std::conj(yv[static_cast<size_t>(k)]);
            mis[m++] = bus[static_cast<size_t>(k)].p_set - s.real();
        }
        for (int k : v_idx) {
            const Complex s = v[static_cast<size_t>(k)] * std::conj(yv[static_cast<size_t>(k)]);
            mis[m++] = bus[static_cast<size_t>(k)].q_set - s.imag();
        }
    };

    PowerFlowResult out;
    std::vector<double> mis(static_cast<size_t>(nu)), mis2(static_cast<size_t>(nu));
    const int max_iter = 50;
    for (int it = 0;; ++it) {
        calc_mismatch(vm, th, mis);
        out.mismatch = max_abs(mis);
        out.iterations = it;
        if (out.mismatch < 1e-10) break;
        if (it >= max_iter)
            throw NumericalError("power flow diverged (infeasible dispatch?); mismatch " +
                                 std::to_string(out.mismatch) + " after " + std::to_string(it) +
                                 " iterations");
        Matrix jac(nu, nu);
        std::vector<double> vm2 = vm, th2 = th;
        for (int c = 0; c < nu; ++c) {
            const double eps = 1e-7;
            if (c < static_cast<int>(th_idx.size()))
                th2[static_cast<size_t>(th_idx[static_cast<size_t>(c)])] += eps;
            else
                vm2[static_cast<size_t>(v_idx[static_cast<size_t>(c - th_idx.size())])] += eps;
            calc_mismatch(vm2, th2, mis2);
            th2 = th;
            vm2 = vm;
            for (int r = 0; r < nu; ++r)
                jac(r, c) = (mis2[static_cast<size_t>(r)] - mis[static_cast<size_t>(r)]) / eps;
        }
        LuFactor<double> lu(std::move(jac));
        lu.solve_inplace(mis);
        size_t m = 0;
        for (int k : th_idx) th[static_cast<size_t>(k)] -= mis[m++];
        for (int k : v_idx) vm[static_cast<size_t>(k)] -= mis[m++];
    }

    out.v.resize(static_cast<size_t>(n));
    for (int k = 0; k < n; ++k)
        out.v[static_cast<size_t>(k)] = std::polar(vm[static_cast<size_t>(k)], th[static_cast<size_t>(k)]);
    const std::vector<Complex> yv = y * std::span<const Complex>(out.v);
    out.s_inj.resize(static_cast<size_t>(n));
    for (int k = 0; k < n; ++k)
        out.s_inj[static_cast<size_t>(k)] = out.v[static_cast<size_t>(k)] * std::conj(yv[static_cast<size_t>(k)]);
    return out;
}

}  // namespace mfs
