#include "mfs/solvers.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace mfs {

void SolverStats::merge(const SolverStats& o) {
    accepted_steps += o.accepted_steps;
    rejected_steps += o.rejected_steps;
    rhs_evaluations += o.rhs_evaluations;
    jacobian_evaluations += o.jacobian_evaluations;
    lu_factorizations += o.lu_factorizations;
    min_dt_used = std::min(min_dt_used, o.min_dt_used);
    max_dt_used = std::max(max_dt_used, o.max_dt_used);
}

namespace {

bool all_finite(std::span<const double> v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

std::string worst_rows_message(std::span<const double> r, const StateLayout* layout, int count = 3) {
    std::vector<int> idx(r.size());
    for (size_t i = 0; i < r.size(); ++i) idx[i] = static_cast<int>(i);
    std::sort(idx.begin(), idx.end(),
              [&](int a, int b) { return std::abs(r[static_cast<size_t>(a)]) > std::abs(r[static_cast<size_t>(b)]); });
    std::ostringstream os;
    for (int k = 0; k < count && k < static_cast<int>(idx.size()); ++k) {
        const int i = idx[static_cast<size_t>(k)];
        if (k) os << ", ";
        if (layout)
            os << layout->qualified_name(i);
        else
            os << "row " << i;
        os << "=" << r[static_cast<size_t>(i)];
    }
    return os.str();
}

}  // namespace

// ---------------------------------------------------------------------------
// Newton
// ---------------------------------------------------------------------------

NewtonReport newton_solve(
    const std::function<void(std::span<const double>, std::span<double>)>& residual,
    const std::function<Matrix(std::span<const double>)>& jacobian,
    std::span<double> x, double tol, int max_iter, SolverStats* stats) {
    const int n = static_cast<int>(x.size());
    std::vector<double> r(static_cast<size_t>(n));
    NewtonReport rep;

    auto fd_jacobian = [&](std::span<const double> xs) {
        Matrix j(n, n);
        std::vector<double> x1(xs.begin(), xs.end());
        std::vector<double> r0(static_cast<size_t>(n)), r1(static_cast<size_t>(n));
        residual(xs, r0);
        for (int col = 0; col < n; ++col) {
            const double eps = 1e-8 * std::max(std::abs(xs[static_cast<size_t>(col)]), 1.0);
            x1[static_cast<size_t>(col)] += eps;
            residual(x1, r1);
            x1[static_cast<size_t>(col)] = xs[static_cast<size_t>(col)];
            for (int row = 0; row < n; ++row)
                j(row, col) = (r1[static_cast<size_t>(row)] - r0[static_cast<size_t>(row)]) / eps;
        }
        if (stats) stats->jacobian_evaluations++;
        return j;
    };

    for (int it = 0; it <= max_iter; ++it) {
        residual(x, r);
        if (stats) stats->rhs_evaluations++;
        rep.residual_norm = max_abs(r);
        rep.iterations = it;
        if (rep.residual_norm < tol) {
            rep.slow_convergence = it >= (4 * max_iter) / 5;
            return rep;
        }
        if (it == max_iter) break;
        Matrix j = jacobian ? jacobian(x) : fd_jacobian(x);
        LuFactor<double> lu;
        try {
            lu.factor(std::move(j));
        } catch (const NumericalError& e) {
            throw NumericalError(std::string("newton: Jacobian bad numerical conditioning (") +
                                 e.what() + ")");
        }
        if (stats) stats->lu_factorizations++;
        lu.solve_inplace(r);
        for (int i = 0; i < n; ++i) x[static_cast<size_t>(i)] -= r[static_cast<size_t>(i)];
    }
    residual(x, r);
    throw NumericalError("newton: no convergence in " + std::to_string(max_iter) +
                         " iterations; worst residuals: " + worst_rows_message(r, nullptr));
}

Matrix jacobian_fd(const OdeSystem& sys, double t, std::span<const double> x, double eps_rel,
                   SolverStats* stats) {
    const int n = sys.n;
    Matrix j(n, n);
    std::vector<double> f0(static_cast<size_t>(n)), f1(static_cast<size_t>(n));
    std::vector<double> xp(x.begin(), x.end());
    sys.eval(t, x, f0);
    if (!all_finite(f0)) {
        int bad = 0;
        for (int i = 0; i < n; ++i)
            if (!std::isfinite(f0[static_cast<size_t>(i)])) { bad = i; break; }
        throw NumericalError("jacobian_fd: non-finite system evaluation at " +
                             (sys.layout ? sys.layout->qualified_name(bad) : ("row " + std::to_string(bad))));
    }
    for (int col = 0; col < n; ++col) {
        const double eps = eps_rel * std::max(std::abs(x[static_cast<size_t>(col)]), 1.0);
        xp[static_cast<size_t>(col)] += eps;
        sys.eval(t, xp, f1);
        xp[static_cast<size_t>(col)] = x[static_cast<size_t>(col)];
        for (int row = 0; row < n; ++row) {
            const double d = (f1[static_cast<size_t>(row)] - f0[static_cast<size_t>(row)]) / eps;
            if (!std::isfinite(d))
                throw NumericalError(
                    "jacobian_fd: non-finite derivative for state " +
                    (sys.layout ? sys.layout->qualified_name(col) : ("col " + std::to_string(col))));
            j(row, col) = d;
        }
    }
    if (stats) stats->jacobian_evaluations++;
    return j;
}

// ---------------------------------------------------------------------------
// RK4
// ---------------------------------------------------------------------------

void step_rk4(const OdeSystem& sys, std::vector<double>& x, double t, double dt,
              SolverStats& stats) {
    if (sys.is_dae()) throw ConfigError("rk4: explicit method requires a pure ODE system");
    const size_t n = x.size();
    std::vector<double> k1(n), k2(n), k3(n), k4(n), xt(n);
    sys.eval(t, x, k1);
    for (size_t i = 0; i < n; ++i) xt[i] = x[i] + 0.5 * dt * k1[i];
    sys.eval(t + 0.5 * dt, xt, k2);
    for (size_t i = 0; i < n; ++i) xt[i] = x[i] + 0.5 * dt * k2[i];
    sys.eval(t + 0.5 * dt, xt, k3);
    for (size_t i = 0; i < n; ++i) xt[i] = x[i] + dt * k3[i];
    sys.eval(t + dt, xt, k4);
    for (size_t i = 0; i < n; ++i)
        x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    stats.rhs_evaluations += 4;
}

// ---------------------------------------------------------------------------
// Trapezoidal
// ---------------------------------------------------------------------------

TrapezoidalStepper::TrapezoidalStepper(const OdeSystem& sys, SolverConfig cfg)
    : sys_(sys), cfg_(std::move(cfg)) {
    const size_t n = static_cast<size_t>(sys.n);
    f0_.resize(n);
    f1_.resize(n);
    res_.resize(n);
    xit_.resize(n);
}

void TrapezoidalStepper::reset() { steps_since_jacobian_ = -1; }

void TrapezoidalStepper::refresh_jacobian(std::span<const double> x, double t, double dt,
                                          SolverStats& stats) {
    Matrix j = jacobian_fd(sys_, t, x, 1e-8, &stats);
    // iteration matrix: diff rows I - dt/2 J, algebraic rows J
    Matrix m(sys_.n, sys_.n);
    for (int i = 0; i < sys_.n; ++i) {
        if (i < sys_.n_diff) {
            for (int c = 0; c < sys_.n; ++c) m(i, c) = -0.5 * dt * j(i, c);
            m(i, i) += 1.0;
        } else {
            for (int c = 0; c < sys_.n; ++c) m(i, c) = j(i, c);
        }
    }
    iter_lu_.factor(std::move(m));
    stats.lu_factorizations++;
    jac_dt_ = dt;
    steps_since_jacobian_ = 0;
}

void TrapezoidalStepper::step(std::vector<double>& x, double t, double dt, SolverStats& stats) {
    const int n = sys_.n;
    const int nd = sys_.n_diff;
    sys_.eval(t, x, f0_);
    stats.rhs_evaluations++;

    if (steps_since_jacobian_ < 0 || steps_since_jacobian_ >= cfg_.jacobian_reuse_limit ||
        jac_dt_ != dt)
        refresh_jacobian(x, t, dt, stats);

    std::copy(x.begin(), x.end(), xit_.begin());
    bool refreshed_retry = false;
    for (int it = 0;; ++it) {
        sys_.eval(t + dt, xit_, f1_);
        stats.rhs_evaluations++;
        for (int i = 0; i < nd; ++i)
            res_[static_cast<size_t>(i)] = xit_[static_cast<size_t>(i)] - x[static_cast<size_t>(i)] -
                                           0.5 * dt * (f0_[static_cast<size_t>(i)] + f1_[static_cast<size_t>(i)]);
        for (int i = nd; i < n; ++i) res_[static_cast<size_t>(i)] = f1_[static_cast<size_t>(i)];
        if (max_abs(res_) < cfg_.newton_tol) break;
        if (it >= cfg_.newton_max_iter) {
            if (!refreshed_retry) {
                // stale chord Jacobian is the usual culprit: rebuild once and retry
                refresh_jacobian(xit_, t + dt, dt, stats);
                refreshed_retry = true;
                it = -1;
                continue;
            }
            throw NumericalError("trapezoidal: Newton failed at t=" + std::to_string(t + dt) +
                                 "; worst residuals: " + worst_rows_message(res_, sys_.layout));
        }
        iter_lu_.solve_inplace(res_);
        for (int i = 0; i < n; ++i) xit_[static_cast<size_t>(i)] -= res_[static_cast<size_t>(i)];
    }
    x = xit_;
    steps_since_jacobian_++;
}

// ---------------------------------------------------------------------------
// Rosenbrock (RODAS-type 4(3), stiffly accurate)
// ---------------------------------------------------------------------------

namespace rodas {
// Hairer's RODAS tableau, gamma = 0.25. Note d4 carries the original negative
// sign; the positive value seen in some C++ transcriptions breaks the order
// of nonautonomous problems.
constexpr double gamma = 0.25;
constexpr double d1 = 0.25, d2 = -0.1043, d3 = 0.1035, d4 = -0.3620000000000023e-01;
constexpr double c2 = 0.386, c3 = 0.21, c4 = 0.63;
constexpr double a21 = 0.1544000000000000e+01;
constexpr double a31 = 0.9466785280815826e+00, a32 = 0.2557011698983284e+00;
constexpr double a41 = 0.3314825187068521e+01, a42 = 0.2896124015972201e+01,
                 a43 = 0.9986419139977817e+00;
constexpr double a51 = 0.1221224509226641e+01, a52 = 0.6019134481288629e+01,
                 a53 = 0.1253708332932087e+02, a54 = -0.6878860361058950e+00;
constexpr double c21 = -0.5668800000000000e+01;
constexpr double c31 = -0.2430093356833875e+01, c32 = -0.2063599157091915e+00;
constexpr double c41 = -0.1073529058151375e+00, c42 = -0.9594562251023355e+01,
                 c43 = -0.2047028614809616e+02;
constexpr double c51 = 0.7496443313967647e+01, c52 = -0.1024680431464352e+02,
                 c53 = -0.3399990352819905e+02, c54 = 0.1170890893206160e+02;
constexpr double c61 = 0.8083246795921522e+01, c62 = -0.7981132988064893e+01,
                 c63 = -0.3152159432874371e+02, c64 = 0.1631930543123136e+02,
                 c65 = -0.6058818238834054e+01;
constexpr double d21 = 0.1012623508344586e+02, d22 = -0.7487995877610167e+01,
                 d23 = -0.3480091861555747e+02, d24 = -0.7992771707568823e+01,
                 d25 = 0.1025137723295662e+01;
constexpr double d31 = -0.6762803392801253e+00, d32 = 0.6087714651680015e+01,
                 d33 = 0.1643084320892478e+02, d34 = 0.2476722511418386e+02,
                 d35 = -0.6594389125716872e+01;
constexpr int order = 4;
}  // namespace rodas

void DenseOutput::eval(double t, std::span<double> out) const {
    const double s = (t - t0) / (t1 - t0);
    const double s1 = 1.0 - s;
    for (size_t i = 0; i < x0.size(); ++i)
        out[i] = x0[i] * s1 + s * (x1[i] + s1 * (cont3[i] + s * cont4[i]));
}

RosenbrockStepper::RosenbrockStepper(const OdeSystem& sys, SolverConfig cfg)
    : sys_(sys), cfg_(std::move(cfg)) {
    const size_t n = static_cast<size_t>(sys.n);
    for (auto* v : {&k1_, &k2_, &k3_, &k4_, &k5_, &k6_, &xtmp_, &xstage_, &f_, &dfdt_, &xnew_})
        v->resize(n);
}

double pi_step_control(double err, double err_prev, double dt, int order) {
    if (!(err > 0.0)) throw ArgumentError("pi_step_control: err must be positive");
    constexpr double safety = 0.9, shrink_max = 0.2, grow_max = 5.0, k_i = 0.3, k_p = 0.4;
    const double p = static_cast<double>(order) + 1.0;
    const double factor =
        safety * std::pow(err, -k_i / p) * std::pow(err_prev / err, k_p / p);
    return dt * std::clamp(factor, shrink_max, grow_max);
}

bool RosenbrockStepper::attempt(std::span<const double> x, double t, double dt,
                                SolverStats& stats) {
    using namespace rodas;
    const int n = sys_.n;
    const int nd = sys_.n_diff;

    Matrix e = jacobian_fd(sys_, t, x, 1e-8, &stats);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) e(i, j) = -e(i, j);
    const double diag = 1.0 / (gamma * dt);
    for (int i = 0; i < nd; ++i) e(i, i) += diag;  // M = diag(1..1, 0..0)
    LuFactor<double> lu(std::move(e));
    stats.lu_factorizations++;

    if (sys_.time_varying) {
        const double tau = std::sqrt(std::numeric_limits<double>::epsilon()) * std::max(std::abs(t), 1e-6);
        sys_.eval(t, x, f_);
        sys_.eval(t + tau, x, dfdt_);
        stats.rhs_evaluations += 2;
        for (int i = 0; i < n; ++i)
            dfdt_[static_cast<size_t>(i)] = (dfdt_[static_cast<size_t>(i)] - f_[static_cast<size_t>(i)]) / tau;
    } else {
        sys_.eval(t, x, f_);
        stats.rhs_evaluations++;
        std::fill(dfdt_.begin(), dfdt_.end(), 0.0);
    }

    auto mass = [nd](int i) { return i < nd ? 1.0 : 0.0; };

    for (int i = 0; i < n; ++i) k1_[static_cast<size_t>(i)] = f_[static_cast<size_t>(i)] + dt * d1 * dfdt_[static_cast<size_t>(i)];
    lu.solve_inplace(k1_);

    for (int i = 0; i < n; ++i) xstage_[static_cast<size_t>(i)] = x[static_cast<size_t>(i)] + a21 * k1_[static_cast<size_t>(i)];
    sys_.eval(t + c2 * dt, xstage_, f_);
    for (int i = 0; i < n; ++i)
        k2_[static_cast<size_t>(i)] = f_[static_cast<size_t>(i)] + dt * d2 * dfdt_[static_cast<size_t>(i)] +
                                      mass(i) * (c21 * k1_[static_cast<size_t>(i)]) / dt;
    lu.solve_inplace(k2_);

    for (int i = 0; i < n; ++i)
        xstage_[static_cast<size_t>(i)] = x[static_cast<size_t>(i)] + a31 * k1_[static_cast<size_t>(i)] + a32 * k2_[static_cast<size_t>(i)];
    sys_.eval(t + c3 * dt, xstage_, f_);
    for (int i = 0; i < n; ++i)
        k3_[static_cast<size_t>(i)] = f_[static_cast<size_t>(i)] + dt * d3 * dfdt_[static_cast<size_t>(i)] +
                                      mass(i) * (c31 * k1_[static_cast<size_t>(i)] + c32 * k2_[static_cast<size_t>(i)]) / dt;
    lu.solve_inplace(k3_);

    for (int i = 0; i < n; ++i)
        xstage_[static_cast<size_t>(i)] = x[static_cast<size_t>(i)] + a41 * k1_[static_cast<size_t>(i)] +
                                          a42 * k2_[static_cast<size_t>(i)] + a43 * k3_[static_cast<size_t>(i)];
    sys_.eval(t + c4 * dt, xstage_, f_);
    for (int i = 0; i < n; ++i)
        k4_[static_cast<size_t>(i)] = f_[static_cast<size_t>(i)] + dt * d4 * dfdt_[static_cast<size_t>(i)] +
                                      mass(i) *
                                          (c41 * k1_[static_cast<size_t>(i)] + c42 * k2_[static_cast<size_t>(i)] +
                                           c43 * k3_[static_cast<size_t>(i)]) /
                                          dt;
    lu.solve_inplace(k4_);

    for (int i = 0; i < n; ++i)
        xtmp_[static_cast<size_t>(i)] = x[static_cast<size_t>(i)] + a51 * k1_[static_cast<size_t>(i)] +
                                        a52 * k2_[static_cast<size_t>(i)] + a53 * k3_[static_cast<size_t>(i)] +
                                        a54 * k4_[static_cast<size_t>(i)];
    sys_.eval(t + dt, xtmp_, f_);
    for (int i = 0; i < n; ++i)
        k5_[static_cast<size_t>(i)] = f_[static_cast<size_t>(i)] +
                                      mass(i) *
                                          (c51 * k1_[static_cast<size_t>(i)] + c52 * k2_[static_cast<size_t>(i)] +
                                           c53 * k3_[static_cast<size_t>(i)] + c54 * k4_[static_cast<size_t>(i)]) /
                                          dt;
    lu.solve_inplace(k5_);

    for (int i = 0; i < n; ++i) xtmp_[static_cast<size_t>(i)] += k5_[static_cast<size_t>(i)];
    sys_.eval(t + dt, xtmp_, f_);
    for (int i = 0; i < n; ++i)
        k6_[static_cast<size_t>(i)] = f_[static_cast<size_t>(i)] +
                                      mass(i) *
                                          (c61 * k1_[static_cast<size_t>(i)] + c62 * k2_[static_cast<size_t>(i)] +
                                           c63 * k3_[static_cast<size_t>(i)] + c64 * k4_[static_cast<size_t>(i)] +
                                           c65 * k5_[static_cast<size_t>(i)]) /
                                          dt;
    lu.solve_inplace(k6_);
    stats.rhs_evaluations += 5;

    for (int i = 0; i < n; ++i)
        xnew_[static_cast<size_t>(i)] = xtmp_[static_cast<size_t>(i)] + k6_[static_cast<size_t>(i)];
    return all_finite(xnew_);
}

AdaptiveStepResult RosenbrockStepper::step(std::vector<double>& x, double& t, double dt_suggest,
                                           double t_limit, SolverStats& stats, DenseOutput* dense) {
    AdaptiveStepResult res;
    double dt = std::clamp(dt_suggest, cfg_.dt_min, cfg_.dt_max);
    bool rejected_in_step = false;
    for (;;) {
        const bool clipped = t + dt > t_limit;
        if (clipped) dt = t_limit - t;
        const bool finite = attempt(x, t, dt, stats);

        double err = 1e30;
        int worst = 0;
        if (finite) {
            double acc = 0.0, wmax = 0.0;
            for (int i = 0; i < sys_.n; ++i) {
                const double sc = cfg_.abstol + cfg_.reltol * std::max(std::abs(x[static_cast<size_t>(i)]),
                                                                       std::abs(xnew_[static_cast<size_t>(i)]));
                const double w = std::abs(k6_[static_cast<size_t>(i)]) / sc;
                acc += w * w;
                if (w > wmax) {
                    wmax = w;
                    worst = i;
                }
            }
            err = std::max(std::sqrt(acc / sys_.n), 1e-12);
        }

        if (err <= 1.0) {
            stats.accepted_steps++;
            stats.note_dt(dt);
            if (dense) {
                using namespace rodas;
                dense->t0 = t;
                dense->t1 = t + dt;
                dense->x0.assign(x.begin(), x.end());
                dense->x1.assign(xnew_.begin(), xnew_.end());
                dense->cont3.resize(x.size());
                dense->cont4.resize(x.size());
                for (size_t i = 0; i < x.size(); ++i) {
                    dense->cont3[i] = d21 * k1_[i] + d22 * k2_[i] + d23 * k3_[i] + d24 * k4_[i] + d25 * k5_[i];
                    dense->cont4[i] = d31 * k1_[i] + d32 * k2_[i] + d33 * k3_[i] + d34 * k4_[i] + d35 * k5_[i];
                }
            }
            t += dt;
            x.assign(xnew_.begin(), xnew_.end());
            res.dt_used = dt;
            res.error_norm = err;
            double dt_next = pi_step_control(err, err_prev_, dt, rodas::order);
            if (rejected_in_step) dt_next = std::min(dt_next, dt);
            err_prev_ = std::max(err, 1e-4);
            res.dt_next = std::min(dt_next, cfg_.dt_max);
            return res;
        }

        stats.rejected_steps++;
        res.rejections++;
        rejected_in_step = true;
        const double dt_new = finite ? pi_step_control(err, err_prev_, dt, rodas::order) : 0.2 * dt;
        if (dt_new < cfg_.dt_min) {
            std::string state = sys_.layout ? sys_.layout->qualified_name(worst)
                                            : ("state " + std::to_string(worst));
            throw NumericalError("adaptive: step size forced below dt_min at t=" + std::to_string(t) +
                                 " (stiffness or discontinuity; worst component " + state + ")");
        }
        dt = dt_new;
    }
}

double RosenbrockStepper::initial_dt(std::span<const double> x, double t, SolverStats& stats) const {
    const int n = sys_.n;
    std::vector<double> f0(static_cast<size_t>(n)), x1(x.begin(), x.end()), f1(static_cast<size_t>(n));
    sys_.eval(t, x, f0);
    stats.rhs_evaluations++;
    auto scaled_rms = [&](std::span<const double> v) {
        double acc = 0.0;
        for (int i = 0; i < n; ++i) {
            const double sc = cfg_.abstol + cfg_.reltol * std::abs(x[static_cast<size_t>(i)]);
            acc += (v[static_cast<size_t>(i)] / sc) * (v[static_cast<size_t>(i)] / sc);
        }
        return std::sqrt(acc / n);
    };
    const double d0 = scaled_rms(x);
    const double d1 = scaled_rms(f0);
    double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
    h0 = std::min(h0, cfg_.dt_max);
    for (int i = 0; i < sys_.n_diff; ++i) x1[static_cast<size_t>(i)] += h0 * f0[static_cast<size_t>(i)];
    sys_.eval(t + h0, x1, f1);
    stats.rhs_evaluations++;
    for (int i = 0; i < n; ++i) f1[static_cast<size_t>(i)] -= f0[static_cast<size_t>(i)];
    const double d2 = scaled_rms(f1) / h0;
    const double dmax = std::max(d1, d2);
    const double h1 = (dmax <= 1e-15) ? std::max(1e-6, h0 * 1e-3)
                                      : std::pow(0.01 / dmax, 1.0 / (rodas::order + 1.0));
    return std::clamp(std::min(100.0 * h0, h1), cfg_.dt_min, cfg_.dt_max);
}

// ---------------------------------------------------------------------------
// Drivers
// ---------------------------------------------------------------------------

void integrate_fixed(const OdeSystem& sys, std::vector<double>& x, double t0, double t1,
                     const SolverConfig& cfg, SolverStats& stats, const StepCallback& cb) {
    const double span = t1 - t0;
    if (span <= 0.0) return;
    const double dt = cfg.dt_fixed;
    long nfull = static_cast<long>(std::floor(span / dt * (1.0 + 1e-12)));
    double rem = span - static_cast<double>(nfull) * dt;
    if (rem < 1e-9 * dt) rem = 0.0;

    std::optional<TrapezoidalStepper> trap;
    if (cfg.method == Method::TrapezoidalFixed) trap.emplace(sys, cfg);
    else if (cfg.method != Method::RK4Fixed)
        throw ConfigError("integrate_fixed: fixed-step driver requires rk4 or trapezoidal method");

    auto one_step = [&](double t, double h) {
        if (trap)
            trap->step(x, t, h, stats);
        else
            step_rk4(sys, x, t, h, stats);
        stats.accepted_steps++;
        stats.note_dt(h);
        if (!all_finite(x)) {
            int bad = 0;
            for (int i = 0; i < sys.n; ++i)
                if (!std::isfinite(x[static_cast<size_t>(i)])) { bad = i; break; }
            throw NumericalError(
                "fixed-step: divergence (non-finite state " +
                (sys.layout ? sys.layout->qualified_name(bad) : std::to_string(bad)) +
                ") at t=" + std::to_string(t + h));
        }
        if (cb) cb(t, t + h, x, nullptr);
    };

    for (long k = 0; k < nfull; ++k) one_step(t0 + static_cast<double>(k) * dt, dt);
    if (rem > 0.0) one_step(t0 + static_cast<double>(nfull) * dt, rem);
}

void integrate_adaptive(const OdeSystem& sys, std::vector<double>& x, double t0, double t1,
                        double dt0, const SolverConfig& cfg, SolverStats& stats,
                        const StepCallback& cb) {
    RosenbrockStepper stepper(sys, cfg);
    double t = t0;
    double dt = dt0 > 0.0 ? dt0 : stepper.initial_dt(x, t, stats);
    DenseOutput dense;
    while (t < t1 - 1e-12 * std::max(1.0, std::abs(t1))) {
        const double t_before = t;
        AdaptiveStepResult r = stepper.step(x, t, dt, t1, stats, cb ? &dense : nullptr);
        dt = r.dt_next;
        if (cb) cb(t_before, t, x, &dense);
    }
}

}  // namespace mfs
