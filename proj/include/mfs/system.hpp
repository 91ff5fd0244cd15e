#pragma once

#include <memory>

#include "mfs/scenario.hpp"

namespace mfs {

/// One formulation of a scenario compiled to an evaluatable system:
/// QSP          -> semi-explicit index-1 DAE (device states differential,
///                 stacked network equations algebraic),
/// DqEMT        -> time-invariant ODE with dynamic branch/bus circuit states,
/// AbcWaveform  -> time-varying ODE carrying the full three-phase waveforms.
class CompiledSystem {
public:
    static std::unique_ptr<CompiledSystem> compile(const Scenario& scenario,
                                                   Formulation formulation,
                                                   const std::vector<Branch>& live_branches);
    static std::unique_ptr<CompiledSystem> compile(const Scenario& scenario) {
        return compile(scenario, scenario.formulation, scenario.branches);
    }

    ~CompiledSystem();
    CompiledSystem(const CompiledSystem&) = delete;
    CompiledSystem& operator=(const CompiledSystem&) = delete;

    /// Derivatives on rows [0, n_diff), algebraic residuals on [n_diff, n).
    /// Uses internal scratch: one instance per running engine.
    void eval(double t, std::span<const double> x, std::span<double> out) const;

    /// Stepper-facing view of this system.
    OdeSystem ode() const;

    const StateLayout& layout() const;
    Formulation formulation() const;
    int size() const;
    int differential_count() const;
    bool time_varying() const;
    int bus_count() const;

    /// True when some device pins the network angle (a Thevenin source);
    /// otherwise the system has the rotational zero mode and equilibrium
    /// solves pin reference_angle_index().
    bool has_angle_reference() const;
    int reference_angle_index() const;  // -1 when no angle states exist

    /// Derived output signals (bus voltage magnitudes, device powers and
    /// frequencies); evaluated on demand at recording points.
    const std::vector<std::string>& probe_names() const;
    void probes(double t, std::span<const double> x, std::span<double> out) const;

    /// Bus shunt aggregates of the live topology (EMT formulations).
    double bus_capacitance(int bus) const;
    double bus_conductance(int bus) const;
    const std::vector<Branch>& live_branches() const;
    const CMatrix& qsp_ybus() const;  // QSP only

    struct Impl;

private:
    CompiledSystem();
    std::unique_ptr<Impl> impl_;
};

/// Power flow, per-device back-solve of internal states from the terminal
/// conditions (writing the operating references into the scenario specs),
/// compilation, and a global Newton refinement of the full residual to below
/// 1e-10 (the reference angle is pinned when no Thevenin source exists). For
/// AbcWaveform the refined dq equilibrium is inverse-Park'd onto the abc
/// states at t = 0.
struct Prepared {
    std::unique_ptr<CompiledSystem> system;
    std::vector<double> x0;
    PowerFlowResult pf;
    int init_newton_iterations = 0;
};

Prepared prepare_initialized(Scenario& scenario, Formulation formulation,
                             const std::vector<Branch>& live_branches);
inline Prepared prepare_initialized(Scenario& scenario) {
    return prepare_initialized(scenario, scenario.formulation, scenario.branches);
}

/// Full pipeline: validate, power flow, compile, initialize, integrate across
/// events, record on the uniform output grid.
TimeSeriesResult run(const Scenario& scenario);
TimeSeriesResult run(const Scenario& scenario, Formulation formulation_override);

/// State remap between two compilations of the same scenario (topology
/// events): values are copied by qualified state name; states absent from the
/// target layout are dropped.
std::vector<double> remap_states(const StateLayout& from, std::span<const double> x,
                                 const StateLayout& to);

}  // namespace mfs
