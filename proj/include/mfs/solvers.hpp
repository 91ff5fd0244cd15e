#pragma once

#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mfs/core.hpp"
#include "mfs/linalg.hpp"

namespace mfs {

enum class Method { RK4Fixed, TrapezoidalFixed, AdaptiveImplicit };

struct SolverConfig {
    Method method = Method::AdaptiveImplicit;
    double dt_fixed = 1e-4;
    double abstol = 1e-8;
    double reltol = 1e-8;
    double dt_min = 1e-9;
    double dt_max = 0.1;
    double newton_tol = 1e-10;
    int newton_max_iter = 20;
    int jacobian_reuse_limit = 50;

    void validate() const {
        if (!(dt_min <= dt_max)) throw ConfigError("solver: dt_min must not exceed dt_max");
        if (!(abstol > 0.0) || !(reltol > 0.0)) throw ConfigError("solver: tolerances must be positive");
        if (!(dt_fixed > 0.0)) throw ConfigError("solver: dt_fixed must be positive");
        if (newton_max_iter < 1) throw ConfigError("solver: newton_max_iter must be >= 1");
    }
};

struct SolverStats {
    long accepted_steps = 0;
    long rejected_steps = 0;
    long rhs_evaluations = 0;   // stage/residual evaluations only
    long jacobian_evaluations = 0;
    long lu_factorizations = 0;
    double min_dt_used = std::numeric_limits<double>::infinity();
    double max_dt_used = 0.0;

    void note_dt(double dt) {
        if (dt < min_dt_used) min_dt_used = dt;
        if (dt > max_dt_used) max_dt_used = dt;
    }
    void merge(const SolverStats& o);
};

/// System in semi-explicit form. Rows [0, n_diff) of eval() are time
/// derivatives of the differential states; rows [n_diff, n) are algebraic
/// residuals g(x, t) = 0. Pure ODE systems have n_diff == n.
struct OdeSystem {
    int n = 0;
    int n_diff = 0;
    bool time_varying = false;
    std::function<void(double t, std::span<const double> x, std::span<double> out)> eval;
    const StateLayout* layout = nullptr;  // optional, improves error messages

    bool is_dae() const { return n_diff < n; }
};

// ---------------------------------------------------------------------------
// Newton iteration
// ---------------------------------------------------------------------------

struct NewtonReport {
    int iterations = 0;
    double residual_norm = 0.0;
    bool slow_convergence = false;  // flagged when iterations reach 80% of the cap
};

/// Solves residual(x) = 0 by damped-free Newton with LU solves. The jacobian
/// callback may be empty, in which case forward differences are used.
NewtonReport newton_solve(
    const std::function<void(std::span<const double>, std::span<double>)>& residual,
    const std::function<Matrix(std::span<const double>)>& jacobian,
    std::span<double> x, double tol, int max_iter, SolverStats* stats = nullptr);

/// Forward-difference Jacobian of f at (t, x); per-component step
/// eps_rel * max(|x_i|, 1). Throws NumericalError naming the offending state
/// (via sys.layout when present) if f returns non-finite values.
Matrix jacobian_fd(const OdeSystem& sys, double t, std::span<const double> x,
                   double eps_rel = 1e-8, SolverStats* stats = nullptr);

// ---------------------------------------------------------------------------
// Fixed-step methods
// ---------------------------------------------------------------------------

/// Classical RK4 update; rejects DAE systems.
void step_rk4(const OdeSystem& sys, std::vector<double>& x, double t, double dt,
              SolverStats& stats);

/// Trapezoidal rule with simultaneous algebraic rows, chord Newton with a
/// reusable finite-difference Jacobian.
class TrapezoidalStepper {
public:
    TrapezoidalStepper(const OdeSystem& sys, SolverConfig cfg);

    void step(std::vector<double>& x, double t, double dt, SolverStats& stats);
    void reset();

private:
    void refresh_jacobian(std::span<const double> x, double t, double dt, SolverStats& stats);

    const OdeSystem& sys_;
    SolverConfig cfg_;
    LuFactor<double> iter_lu_;
    double jac_dt_ = 0.0;
    int steps_since_jacobian_ = -1;
    std::vector<double> f0_, f1_, res_, xit_;
};

// ---------------------------------------------------------------------------
// Adaptive stiffly-accurate Rosenbrock pair (order 4(3), L-stable, index-1
// DAE capable through the diagonal mass matrix implied by n_diff).
// ---------------------------------------------------------------------------

/// Cubic dense-output interpolant over one accepted step.
struct DenseOutput {
    double t0 = 0.0, t1 = 0.0;
    std::vector<double> x0, x1, cont3, cont4;

    void eval(double t, std::span<double> out) const;
};

struct AdaptiveStepResult {
    double dt_used = 0.0;
    double dt_next = 0.0;
    double error_norm = 0.0;
    int rejections = 0;
};

class RosenbrockStepper {
public:
    RosenbrockStepper(const OdeSystem& sys, SolverConfig cfg);

    /// Advances one accepted step from (t, x); dt_suggest is clamped to
    /// [dt_min, min(dt_max, t_limit - t)]. Fills dense output for the step.
    AdaptiveStepResult step(std::vector<double>& x, double& t, double dt_suggest,
                            double t_limit, SolverStats& stats, DenseOutput* dense = nullptr);

    /// Hairer-style starting step size heuristic.
    double initial_dt(std::span<const double> x, double t, SolverStats& stats) const;

    void reset() { err_prev_ = 1.0; }

private:
    bool attempt(std::span<const double> x, double t, double dt, SolverStats& stats);

    const OdeSystem& sys_;
    SolverConfig cfg_;
    double err_prev_ = 1.0;
    std::vector<double> k1_, k2_, k3_, k4_, k5_, k6_, xtmp_, xstage_, f_, dfdt_, xnew_;
};

/// PI step-size controller (Soederlind PI.3.4 form):
/// dt * clamp(0.9 * err^{-0.3/(order+1)} * (err_prev/err)^{0.4/(order+1)}, 0.2, 5).
double pi_step_control(double err, double err_prev, double dt, int order);

// ---------------------------------------------------------------------------
// Integration drivers
// ---------------------------------------------------------------------------

/// Called after every accepted step. `dense` is null for fixed-step methods
/// (linear interpolation applies there).
using StepCallback =
    std::function<void(double t0, double t1, std::span<const double> x1, const DenseOutput* dense)>;

/// Fixed-step drive over [t0, t1]; the final step is shortened if the span is
/// not an integer multiple of dt. Detects divergence (non-finite states).
void integrate_fixed(const OdeSystem& sys, std::vector<double>& x, double t0, double t1,
                     const SolverConfig& cfg, SolverStats& stats, const StepCallback& cb = {});

/// Adaptive drive over [t0, t1] starting from dt0 (or the heuristic if <= 0).
void integrate_adaptive(const OdeSystem& sys, std::vector<double>& x, double t0, double t1,
                        double dt0, const SolverConfig& cfg, SolverStats& stats,
                        const StepCallback& cb = {});

}  // namespace mfs
