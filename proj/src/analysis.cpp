#include "mfs/analysis.hpp"

#include <algorithm>
#include <cmath>

namespace mfs {

std::vector<double> find_equilibrium(const CompiledSystem& system, std::span<const double> guess,
                                     const EquilibriumOptions& opts) {
    if (system.formulation() == Formulation::AbcWaveform)
        throw ConfigError("find_equilibrium: the abc waveform formulation is time-varying and has "
                          "no static equilibrium; use dq or QSP");
    std::vector<double> x(guess.begin(), guess.end());
    const int pin = system.has_angle_reference() ? -1 : system.reference_angle_index();
    const double pin_value = pin >= 0 ? x[static_cast<size_t>(pin)] : 0.0;
    auto residual = [&](std::span<const double> xs, std::span<double> out) {
        system.eval(0.0, xs, out);
        if (pin >= 0) out[static_cast<size_t>(pin)] = xs[static_cast<size_t>(pin)] - pin_value;
    };
    try {
        newton_solve(residual, {}, x, opts.tol, opts.max_iter);
    } catch (const NumericalError& e) {
        // re-shape the message with state names for the worst rows
        std::vector<double> r(static_cast<size_t>(system.size()));
        residual(x, r);
        std::vector<int> idx(r.size());
        for (size_t i = 0; i < r.size(); ++i) idx[i] = static_cast<int>(i);
        std::sort(idx.begin(), idx.end(), [&](int a, int b) {
            return std::abs(r[static_cast<size_t>(a)]) > std::abs(r[static_cast<size_t>(b)]);
        });
        std::string msg = "find_equilibrium failed; worst residuals:";
        for (int k = 0; k < 3 && k < static_cast<int>(idx.size()); ++k)
            msg += " " + system.layout().qualified_name(idx[static_cast<size_t>(k)]) + "=" +
                   std::to_string(r[static_cast<size_t>(idx[static_cast<size_t>(k)])]);
        throw NumericalError(msg + " (" + e.what() + ")");
    }
    return x;
}

Matrix linearize(const CompiledSystem& system, std::span<const double> x_star) {
    std::vector<double> res(static_cast<size_t>(system.size()));
    system.eval(0.0, x_star, res);
    if (max_abs(res) > 1e-8)
        throw ArgumentError("linearize: supplied point is not an equilibrium (residual " +
                            std::to_string(max_abs(res)) + ")");
    const OdeSystem sys = system.ode();
    const Matrix j = jacobian_fd(sys, 0.0, x_star, 1e-7);
    const int nd = system.differential_count();
    const int na = system.size() - nd;
    if (na == 0) return j;

    // Schur complement: A = f_x - f_v g_v^{-1} g_x
    Matrix gv(na, na), gx(na, nd);
    for (int i = 0; i < na; ++i)
        for (int c = 0; c < na; ++c) gv(i, c) = j(nd + i, nd + c);
    for (int i = 0; i < na; ++i)
        for (int c = 0; c < nd; ++c) gx(i, c) = j(nd + i, c);
    LuFactor<double> lu;
    try {
        lu.factor(std::move(gv));
    } catch (const NumericalError&) {
        throw NumericalError("linearize: singular algebraic block (model is not index-1 here)");
    }
    // columns of g_v^{-1} g_x
    Matrix ginv_gx(na, nd);
    std::vector<double> col(static_cast<size_t>(na));
    for (int c = 0; c < nd; ++c) {
        for (int i = 0; i < na; ++i) col[static_cast<size_t>(i)] = gx(i, c);
        lu.solve_inplace(col);
        for (int i = 0; i < na; ++i) ginv_gx(i, c) = col[static_cast<size_t>(i)];
    }
    Matrix a(nd, nd);
    for (int i = 0; i < nd; ++i)
        for (int c = 0; c < nd; ++c) {
            double acc = j(i, c);
            for (int k = 0; k < na; ++k) acc -= j(i, nd + k) * ginv_gx(k, c);
            a(i, c) = acc;
        }
    return a;
}

double stiffness_ratio(std::span<const Complex> eigs, std::optional<double> dt, double zero_tol) {
    double re_max = 0.0, re_min = std::numeric_limits<double>::infinity();
    int used = 0;
    for (const Complex& l : eigs) {
        if (std::abs(l) < zero_tol) continue;  // declared zero mode
        if (!(l.real() < -1e-9)) continue;
        const double m = std::abs(l.real());
        re_max = std::max(re_max, m);
        re_min = std::min(re_min, m);
        used++;
    }
    if (used < 2)
        throw ArgumentError("stiffness_ratio: need at least two strictly stable eigenvalues");
    const double sigma = re_max / re_min;
    // the dt-scaled variant is also in circulation; the plain ratio is the
    // headline value
    return dt ? sigma * *dt : sigma;
}

SmallSignalReport small_signal(const Scenario& scenario, Formulation form,
                               std::optional<double> dt, double zero_tol) {
    Scenario sc = scenario;
    if (form == Formulation::Qsp) {
        for (auto& inv : sc.inverters) {
            inv.filter_kind = FilterKind::Reduced;
            inv.inner_kind = InnerKind::Reduced;
        }
        sc.formulation = Formulation::Qsp;
    }
    sc.validate_or_throw();
    Prepared prep = prepare_initialized(sc, form, sc.branches);
    SmallSignalReport rep;
    rep.x_star = find_equilibrium(*prep.system, prep.x0);
    const Matrix a = linearize(*prep.system, rep.x_star);
    rep.eigenvalues = eigenvalues(a);
    // zero_tol is stated in per-unit time; eigenvalues are in 1/s
    const double zero_abs = zero_tol * sc.base.omega_b;
    rep.zero_modes = 0;
    rep.stable = true;
    for (const Complex& l : rep.eigenvalues) {
        if (std::abs(l) < zero_abs) {
            rep.zero_modes++;
            continue;
        }
        if (l.real() > 0.0) rep.stable = false;
    }
    rep.sigma_plain = stiffness_ratio(rep.eigenvalues, std::nullopt, zero_abs);
    if (dt) rep.sigma_paper = stiffness_ratio(rep.eigenvalues, dt, zero_abs);
    return rep;
}

}  // namespace mfs
