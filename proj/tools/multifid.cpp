// multifid: multi-fidelity power-system time-domain simulation front end.
//
// Subcommands:
//   validate <scenario.json>                 schema + semantic checks
//   run      <scenario.json> [--formulation] CSV result + stats sidecar
//   compare  <scenario.json> --formulations  cross-formulation error report
//
// Exit codes: 0 success, 1 validation failure, 2 solver failure, 3 I/O failure.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <optional>

#include <CLI11.hpp>

#include "mfs/analysis.hpp"
#include "mfs/system.hpp"

namespace fs = std::filesystem;
using namespace mfs;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitSolver = 2;
constexpr int kExitIo = 3;

struct CommonOpts {
    std::string scenario_path;
    std::string out_dir = ".";
    std::optional<double> dt, abstol, reltol;
    bool analysis = false;
};

Scenario load_with_overrides(const CommonOpts& o) {
    Scenario sc = load_scenario(o.scenario_path);
    if (o.dt) sc.solver.dt_fixed = *o.dt;
    if (o.abstol) sc.solver.abstol = *o.abstol;
    if (o.reltol) sc.solver.reltol = *o.reltol;
    return sc;
}

void print_stats(const std::string& label, const SolverStats& st) {
    std::printf("%s: steps accepted=%ld rejected=%ld, rhs_evals=%ld, jacobians=%ld, lu=%ld, dt=[%g, %g]\n",
                label.c_str(), st.accepted_steps, st.rejected_steps, st.rhs_evaluations,
                st.jacobian_evaluations, st.lu_factorizations,
                st.min_dt_used, st.max_dt_used);
}

int do_run_one(const Scenario& sc, Formulation form, const std::string& out_dir,
               bool analysis, TimeSeriesResult* result_out) {
    Scenario local = sc;
    local.formulation = form;
    // abc waveform runs fixed-step by convention unless the file says otherwise
    const auto t0 = std::chrono::steady_clock::now();
    TimeSeriesResult res = run(local, form);
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    const std::string stem = out_dir + "/" + local.name + "_" + to_string(form);
    write_result_csv(res, stem + ".csv");
    write_stats_sidecar(res, local, form, stem + ".stats.json");
    std::printf("%s: wrote %s.csv (%zu samples, %zu signals), wall %.2f s, digest %s\n",
                to_string(form).c_str(), stem.c_str(), res.time.size(), res.names.size(), wall,
                local.digest().c_str());
    print_stats("  " + to_string(form), res.stats);
    if (analysis && form != Formulation::AbcWaveform) {
        const SmallSignalReport rep = small_signal(local, form);
        std::printf("  sigma(%s) = %.6g (zero modes %d, %s)\n", to_string(form).c_str(),
                    rep.sigma_plain, rep.zero_modes, rep.stable ? "stable" : "UNSTABLE");
    }
    if (result_out) *result_out = std::move(res);
    return kExitOk;
}

int cmd_validate(const CommonOpts& o) {
    Scenario sc;
    try {
        sc = load_scenario(o.scenario_path);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "parse error: %s\n", e.what());
        return kExitValidation;
    }
    const auto diag = sc.validate();
    for (const auto& d : diag) std::fprintf(stderr, "diagnostic: %s\n", d.c_str());
    if (!diag.empty()) return kExitValidation;
    // cheap compilation catches layout-level problems (record names etc.)
    try {
        auto sys = CompiledSystem::compile(sc);
        for (const auto& name : sc.record) {
            const auto probes = sys->probe_names();
            const auto dot = name.find('.');
            const bool is_state = dot != std::string::npos &&
                                  sys->layout().contains(name.substr(0, dot), name.substr(dot + 1));
            const bool is_probe = std::find(probes.begin(), probes.end(), name) != probes.end();
            if (!is_state && !is_probe) {
                std::fprintf(stderr, "diagnostic: record list names unknown signal %s\n",
                             name.c_str());
                return kExitValidation;
            }
        }
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "diagnostic: %s\n", e.what());
        return kExitValidation;
    }
    std::printf("%s: ok (%d buses, %zu branches, %d devices, formulation %s)\n",
                o.scenario_path.c_str(), sc.bus_count(), sc.branches.size(),
                sc.generation_device_count() + static_cast<int>(sc.loads.size()),
                to_string(sc.formulation).c_str());
    return kExitOk;
}

int cmd_run(const CommonOpts& o, const std::string& formulation) {
    Scenario sc;
    try {
        sc = load_with_overrides(o);
        sc.validate_or_throw();
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return kExitValidation;
    }
    const Formulation form =
        formulation.empty() ? sc.formulation : formulation_from_string(formulation);
    try {
        fs::create_directories(o.out_dir);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "cannot create output directory: %s\n", e.what());
        return kExitIo;
    }
    try {
        TimeSeriesResult res;
        do_run_one(sc, form, o.out_dir, o.analysis, &res);
        if (!res.completed) {
            std::fprintf(stderr, "solver failure: %s\n", res.failure.c_str());
            return kExitSolver;
        }
    } catch (const NumericalError& e) {
        std::fprintf(stderr, "solver failure: %s\n", e.what());
        return kExitSolver;
    } catch (const SimError& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return kExitIo;
    }
    return kExitOk;
}

int cmd_compare(const CommonOpts& o, const std::string& formulations) {
    Scenario sc;
    try {
        sc = load_with_overrides(o);
        sc.validate_or_throw();
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return kExitValidation;
    }
    std::vector<Formulation> forms;
    std::stringstream ss(formulations);
    std::string tok;
    while (std::getline(ss, tok, ',')) forms.push_back(formulation_from_string(tok));
    if (forms.empty()) {
        std::fprintf(stderr, "compare: need --formulations a,b[,c]\n");
        return kExitValidation;
    }
    try {
        fs::create_directories(o.out_dir);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "cannot create output directory: %s\n", e.what());
        return kExitIo;
    }

    // member runs are independent; run them concurrently on isolated systems
    std::vector<std::future<TimeSeriesResult>> futs;
    for (Formulation f : forms)
        futs.push_back(std::async(std::launch::async, [&sc, f] {
            Scenario local = sc;
            local.formulation = f;
            return run(local, f);
        }));
    std::vector<TimeSeriesResult> results;
    bool failed = false;
    for (size_t i = 0; i < forms.size(); ++i) {
        try {
            results.push_back(futs[i].get());
        } catch (const SimError& e) {
            std::fprintf(stderr, "%s run failed: %s\n", to_string(forms[i]).c_str(), e.what());
            results.push_back({});
            results.back().completed = false;
            results.back().failure = e.what();
        }
        if (!results.back().completed) {
            std::fprintf(stderr, "%s run failed: %s\n", to_string(forms[i]).c_str(),
                         results.back().failure.c_str());
            failed = true;
        }
    }

    for (size_t i = 0; i < forms.size(); ++i) {
        if (!results[i].completed) continue;
        const std::string stem = o.out_dir + "/" + sc.name + "_" + to_string(forms[i]);
        write_result_csv(results[i], stem + ".csv");
        write_stats_sidecar(results[i], sc, forms[i], stem + ".stats.json");
        print_stats(to_string(forms[i]), results[i].stats);
    }

    // long-format CSV for external plotting
    const std::string long_path = o.out_dir + "/" + sc.name + "_compare_long.csv";
    {
        std::FILE* f = std::fopen(long_path.c_str(), "w");
        if (!f) {
            std::fprintf(stderr, "cannot open %s\n", long_path.c_str());
            return kExitIo;
        }
        std::fputs("time_s,signal,formulation,value\n", f);
        for (size_t i = 0; i < forms.size(); ++i) {
            if (!results[i].completed) continue;
            const auto& r = results[i];
            for (size_t c = 0; c < r.names.size(); ++c)
                for (size_t k = 0; k < r.time.size(); ++k)
                    std::fprintf(f, "%.17g,%s,%s,%.17g\n", r.time[k], r.names[c].c_str(),
                                 to_string(forms[i]).c_str(), r.cols[c][k]);
        }
        std::fclose(f);
    }

    // pairwise error tables
    for (size_t i = 0; i < forms.size(); ++i)
        for (size_t j = i + 1; j < forms.size(); ++j) {
            if (!results[i].completed || !results[j].completed) continue;
            const CompareReport rep = compare_results(results[i], results[j]);
            std::printf("%s vs %s (t in [%g, %g]):\n", to_string(forms[i]).c_str(),
                        to_string(forms[j]).c_str(), rep.t_begin, rep.t_end);
            for (const auto& e : rep.signals)
                std::printf("  %-24s max|err|=%.6g rms=%.6g\n", e.signal_a.c_str(), e.max_abs,
                            e.rms);
        }

    if (o.analysis) {
        for (Formulation f : forms) {
            if (f == Formulation::AbcWaveform) continue;
            const SmallSignalReport rep = small_signal(sc, f);
            std::printf("sigma(%s) = %.6g (zero modes %d, %s)\n", to_string(f).c_str(),
                        rep.sigma_plain, rep.zero_modes, rep.stable ? "stable" : "UNSTABLE");
        }
    }
    std::printf("compare: wrote %s\n", long_path.c_str());
    return failed ? kExitSolver : kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"multi-fidelity power system time-domain simulation"};
    app.require_subcommand(1);

    CommonOpts opts;
    std::string formulation;
    std::string formulations;

    auto add_common = [&](CLI::App* cmd, bool with_solver_flags) {
        cmd->add_option("scenario", opts.scenario_path, "scenario JSON file")->required();
        if (with_solver_flags) {
            cmd->add_option("--out", opts.out_dir, "output directory");
            cmd->add_option("--dt", [&](const CLI::results_t& r) {
                opts.dt = std::stod(r[0]);
                return true;
            }, "fixed time step override");
            cmd->add_option("--abstol", [&](const CLI::results_t& r) {
                opts.abstol = std::stod(r[0]);
                return true;
            }, "absolute tolerance override");
            cmd->add_option("--reltol", [&](const CLI::results_t& r) {
                opts.reltol = std::stod(r[0]);
                return true;
            }, "relative tolerance override");
            cmd->add_flag("--analysis", opts.analysis, "append small-signal report");
        }
    };

    CLI::App* v = app.add_subcommand("validate", "validate a scenario file");
    add_common(v, false);
    CLI::App* r = app.add_subcommand("run", "run one simulation");
    add_common(r, true);
    r->add_option("--formulation", formulation, "qsp|dq|abc (defaults to the file's choice)");
    CLI::App* c = app.add_subcommand("compare", "run several formulations and compare");
    add_common(c, true);
    c->add_option("--formulations", formulations, "comma list: qsp,dq,abc")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.got_subcommand(v)) return cmd_validate(opts);
        if (app.got_subcommand(r)) return cmd_run(opts, formulation);
        if (app.got_subcommand(c)) return cmd_compare(opts, formulations);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return kExitValidation;
    } catch (const NumericalError& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return kExitSolver;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return kExitIo;
    }
    return kExitOk;
}
