#pragma once

#include <optional>

#include "mfs/eig.hpp"
#include "mfs/system.hpp"

namespace mfs {

struct SmallSignalReport {
    std::vector<double> x_star;
    std::vector<Complex> eigenvalues;  // of the reduced differential system
    double sigma_plain = 0.0;          // max|Re|/min|Re| over strictly stable modes
    std::optional<double> sigma_paper; // plain ratio times dt, when dt given
    bool stable = true;                // all Re < 0 outside declared zero modes
    int zero_modes = 0;                // |lambda| < zero_tol (rotational symmetry)
};

struct EquilibriumOptions {
    double tol = 1e-10;
    int max_iter = 25;
};

/// Newton solve of the full residual (derivatives and algebraic rows) from
/// the supplied guess. Rejects AbcWaveform systems (time-varying). Pins the
/// reference angle when the system has the rotational symmetry.
std::vector<double> find_equilibrium(const CompiledSystem& system, std::span<const double> guess,
                                     const EquilibriumOptions& opts = {});

/// State matrix on the differential states at the equilibrium: the Jacobian
/// for ODE formulations; for QSP the algebraic block is eliminated by the
/// Schur complement A = f_x - f_v g_v^{-1} g_x.
Matrix linearize(const CompiledSystem& system, std::span<const double> x_star);

/// max|Re|/min|Re| over eigenvalues with Re < -1e-9, excluding |lambda| <
/// zero_tol. With dt supplied, returns the dt-scaled variant instead.
double stiffness_ratio(std::span<const Complex> eigs, std::optional<double> dt = std::nullopt,
                       double zero_tol = 1e-6);

/// Full pipeline at the pre-event operating point of a scenario.
SmallSignalReport small_signal(const Scenario& scenario, Formulation formulation,
                               std::optional<double> dt = std::nullopt, double zero_tol = 1e-6);
inline SmallSignalReport small_signal(const Scenario& sc) {
    return small_signal(sc, sc.formulation);
}

}  // namespace mfs
