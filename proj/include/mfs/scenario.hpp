#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mfs/core.hpp"
#include "mfs/devices.hpp"
#include "mfs/network.hpp"
#include "mfs/solvers.hpp"

namespace mfs {

enum class Formulation { Qsp, DqEmt, AbcWaveform };

std::string to_string(Formulation f);
Formulation formulation_from_string(const std::string& s);

struct BusSpec {
    int id = 0;          // display id, used in state/signal names ("bus<id>")
    double v_nom = 1.0;  // pu
};

struct DispatchSpec {
    enum class Role { Slack, PV, PQ, None };
    Role role = Role::None;
    double p = 0.0;
    double q = 0.0;
    double v = 1.0;
};

struct InverterSpec {
    std::string id;
    int bus = 0;  // bus index after validation
    OuterKind outer_kind = OuterKind::Vsm;
    VsmParams vsm;
    DroopParams droop;
    InnerKind inner_kind = InnerKind::Full;
    InnerLoopParams inner;
    FilterKind filter_kind = FilterKind::Full;
    LclFilterParams filter;
    PllKind pll_kind = PllKind::Kaura;
    PllParams pll;
    DispatchSpec dispatch;
    DeviceReferences refs;  // populated by initialization
};

struct MachineSpec {
    std::string id;
    int bus = 0;
    MachineParams params;
    DispatchSpec dispatch;
    double efd = 1.0;    // constant exciter output, set by initialization
    double tau_m = 0.0;  // constant governor output, set by initialization
};

struct TheveninSpec {
    std::string id;
    int bus = 0;
    double r = 0.0;
    double x = 0.01;
    double v_mag = 1.0;   // source magnitude; events may step it
    double theta = 0.0;   // source angle, set by initialization
    DispatchSpec dispatch;
};

struct LoadSpec {
    std::string id;
    int bus = 0;
    double p = 0.0;  // pu at 1 pu voltage; constant-impedance semantics
    double q = 0.0;
};

struct EventSpec {
    enum class Kind { TripBranch, SetSourceVoltage };
    double time = 0.0;
    Kind kind = Kind::TripBranch;
    std::string target;   // branch name or thevenin device id
    double value = 0.0;   // new source magnitude for SetSourceVoltage
};

struct Scenario {
    int schema_version = 1;
    std::string name = "scenario";
    PerUnitBase base;
    std::vector<BusSpec> buses;
    std::vector<Branch> branches;  // from/to hold bus indices after validation
    std::vector<InverterSpec> inverters;
    std::vector<MachineSpec> machines;
    std::vector<TheveninSpec> thevenins;
    std::vector<LoadSpec> loads;
    std::vector<EventSpec> events;
    Formulation formulation = Formulation::DqEmt;
    SolverConfig solver;
    double t_end = 10.0;
    double output_dt = 1e-4;
    std::vector<std::string> record;  // empty selects the default signal set

    int bus_count() const { return static_cast<int>(buses.size()); }
    int generation_device_count() const {
        return static_cast<int>(inverters.size() + machines.size() + thevenins.size());
    }

    /// Structural and semantic checks; returns human-readable diagnostics
    /// (empty when the scenario is clean).
    std::vector<std::string> validate() const;
    void validate_or_throw() const;

    /// Stable content digest (over the canonical JSON form).
    std::string digest() const;
};

/// The shipped desk-scale experiment: 3-bus ring, VSM + droop inverters,
/// impedance load, trip of branch 1-2 at t = 0.25 s.
Scenario default_three_bus_scenario();

// JSON round trip (schema documented in the README).
Scenario scenario_from_json_text(const std::string& text);
Scenario load_scenario(const std::string& path);
std::string scenario_to_json_text(const Scenario& s);
void save_scenario(const Scenario& s, const std::string& path);

// ---------------------------------------------------------------------------
// Power flow
// ---------------------------------------------------------------------------

struct PowerFlowResult {
    std::vector<Complex> v;      // bus voltage phasors (network dq frame)
    std::vector<Complex> s_inj;  // net injection of the generation device per bus
    int iterations = 0;
    double mismatch = 0.0;
};

/// Newton-Raphson AC power flow with constant-impedance loads folded into the
/// admittance matrix; mismatch driven below 1e-10 pu.
PowerFlowResult power_flow(const Scenario& s);

// ---------------------------------------------------------------------------
// Results
// ---------------------------------------------------------------------------

struct TimeSeriesResult {
    std::vector<std::string> names;          // recorded signal names
    std::vector<double> time;                // uniform output grid
    std::vector<std::vector<double>> cols;   // one column per name
    std::vector<double> raw_time;            // accepted-step times (adaptive only)
    std::vector<std::vector<double>> raw_cols;
    SolverStats stats;
    std::vector<std::string> event_log;
    bool completed = true;
    std::string failure;

    int column(const std::string& name) const;
};

void write_result_csv(const TimeSeriesResult& r, const std::string& path);
TimeSeriesResult read_result_csv(const std::string& path);
void write_stats_sidecar(const TimeSeriesResult& r, const Scenario& s,
                         Formulation formulation, const std::string& path);

struct SignalError {
    std::string signal_a;
    std::string signal_b;
    double max_abs = 0.0;
    double rms = 0.0;
};

struct CompareReport {
    std::vector<SignalError> signals;
    double t_begin = 0.0;
    double t_end = 0.0;
};

/// Per-signal max-abs and RMS error on the common portion of the output
/// grids. With an empty map, signals sharing a name are paired.
CompareReport compare_results(const TimeSeriesResult& a, const TimeSeriesResult& b,
                              const std::vector<std::pair<std::string, std::string>>& signal_map = {},
                              double t_from = 0.0);

}  // namespace mfs
