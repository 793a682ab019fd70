// Command-line front end: assemble operator bundles for the driven cavity,
// run steady solves, and run transient IMEX simulations on assembled or
// externally supplied bundles.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "nsops/nsops.hpp"

namespace {

using namespace nsops;

struct RunSpec {
    std::string problem = "drivencavity";
    std::string bundle_path;
    int N = 10;
    double Re = 1.0;
    double t0 = 0.0;
    double tE = 1.0;
    int Nts = 1024;
    std::string control = "none"; // none | distributed | robin
    int Nu = 8;
    int q = 10;
    double omega_mult = 4.0;
    std::string input = "none"; // none | sincos
    double palpha = 1e-3;
    int record_every = 1;
    int snapshots = 16;
    bool no_pin = false;
    bool stokes_only = false;
    bool no_continuation = false;
    double tol = 1e-11;
    int picard = 5;
    std::string outdir;
};

std::string default_outdir() {
    const char* env = std::getenv("NSOPS_OUTDIR");
    return env && *env ? std::string(env) : std::string(".");
}

/// Robin actuation slots on the bottom wall, mirroring the two-outlet
/// inject/suck arrangement of the boundary-controlled benchmark.
struct RobinSetup {
    std::vector<BoundarySegment> segments;
    std::vector<std::vector<std::function<double(double)>>> shapes;
    std::vector<std::vector<std::array<double, 2>>> normals;
};

RobinSetup cavity_robin_setup() {
    RobinSetup s;
    s.segments = {{Side::Bottom, 0.2, 0.3}, {Side::Bottom, 0.7, 0.8}};
    s.shapes = {{robin_outlet_shape}, {robin_outlet_shape}};
    s.normals = {{{0.0, 1.0}}, {{0.0, 1.0}}};
    return s;
}

struct AssembledProblem {
    CavityMesh mesh;
    DofMap dm;
    Vector v_gamma;
    FlowSystem sys;
    std::optional<ControlOperators> ctrl;
    std::optional<RobinControl> robin;
};

AssembledProblem assemble_problem(const RunSpec& spec) {
    if (spec.problem != "drivencavity")
        throw std::invalid_argument("unknown problem '" + spec.problem + "' (supported: drivencavity)");
    AssembledProblem ap;
    ap.mesh = build_cavity_mesh(spec.N);

    std::vector<BoundarySegment> robin_segments;
    RobinSetup rsetup;
    if (spec.control == "robin") {
        rsetup = cavity_robin_setup();
        robin_segments = rsetup.segments;
    }
    ap.dm = build_dofmap(ap.mesh, robin_segments);
    ap.v_gamma = lid_boundary_values(ap.mesh, ap.dm);

    FullOperators full = assemble_linear(ap.mesh, ap.dm);
    full.H_full = assemble_convection_tensor(ap.mesh, ap.dm);
    ap.sys = reduce_system(full, ap.dm, ap.v_gamma, !spec.no_pin);

    if (spec.control == "distributed") {
        ControlConfig cfg = cavity_control_config(spec.Nu, spec.q);
        ap.ctrl = assemble_control_ops(ap.mesh, ap.dm, cfg);
    } else if (spec.control == "robin") {
        RobinControl rc;
        SparseMatrix abc_full(ap.dm.n_full, ap.dm.n_full);
        CooBuilder bbc(ap.dm.n_full, static_cast<index_t>(rsetup.segments.size()));
        std::vector<SparseMatrix> abcs, bbcs;
        for (std::size_t s = 0; s < rsetup.segments.size(); ++s) {
            auto [a_s, b_s] = assemble_robin_boundary(ap.mesh, ap.dm, rsetup.segments[s], rsetup.shapes[s],
                                                      rsetup.normals[s]);
            abc_full = add_scaled(abc_full, 1.0, a_s, 1.0);
            for (index_t i = 0; i < b_s.nrows; ++i)
                for (index_t k = b_s.row_ptr[i]; k < b_s.row_ptr[i + 1]; ++k)
                    bbc.add(i, static_cast<index_t>(s), b_s.values[k]);
        }
        SparseMatrix bbc_full = bbc.finalize();
        // reduce to inner DOFs
        CooBuilder ared(ap.dm.nv(), ap.dm.nv());
        for (index_t i = 0; i < abc_full.nrows; ++i) {
            if (ap.dm.full_to_inner[i] < 0) continue;
            for (index_t k = abc_full.row_ptr[i]; k < abc_full.row_ptr[i + 1]; ++k)
                if (ap.dm.full_to_inner[abc_full.col_idx[k]] >= 0)
                    ared.add(ap.dm.full_to_inner[i], ap.dm.full_to_inner[abc_full.col_idx[k]], abc_full.values[k]);
        }
        CooBuilder bred(ap.dm.nv(), bbc_full.ncols);
        for (index_t i = 0; i < bbc_full.nrows; ++i) {
            if (ap.dm.full_to_inner[i] < 0) continue;
            for (index_t k = bbc_full.row_ptr[i]; k < bbc_full.row_ptr[i + 1]; ++k)
                bred.add(ap.dm.full_to_inner[i], bbc_full.col_idx[k], bbc_full.values[k]);
        }
        rc.Abc = ared.finalize();
        rc.Bbc = bred.finalize();
        rc.alpha = 1.0;
        ap.robin = std::move(rc);
    } else if (spec.control != "none") {
        throw std::invalid_argument("unknown control mode '" + spec.control + "'");
    }
    return ap;
}

InputSignal make_input_signal(const RunSpec& spec, index_t nu, bool robin) {
    if (spec.input == "none") return nullptr;
    if (spec.input != "sincos")
        throw std::invalid_argument("unknown input '" + spec.input + "' (supported: none, sincos)");
    const double omega = spec.omega_mult * kPi / (spec.tE - spec.t0);
    if (robin) {
        // inject/suck pair on the two actuation slots
        return [omega](double t) { return Vector{std::sin(omega * t), -std::sin(omega * t)}; };
    }
    require(nu >= 2 && nu % 2 == 0, "sincos input requires an even input dimension >= 2");
    return [omega, nu](double t) {
        Vector u(nu, 0.0);
        u[0] = std::sin(omega * t);
        u[nu / 2] = std::cos(omega * t);
        return u;
    };
}

int cmd_assemble(const RunSpec& spec) {
    AssembledProblem ap = assemble_problem(spec);
    const BundleManifest man =
        write_bundle(ap.sys, ap.ctrl ? &*ap.ctrl : nullptr, spec.outdir, spec.problem, spec.N,
                     ap.robin ? &*ap.robin : nullptr);
    std::cout << "assembled " << spec.problem << ": N=" << spec.N << " NV=" << ap.sys.nv()
              << " m=" << ap.sys.m_rows() << (ap.sys.pinned ? " (pressure pinned)" : "") << "\n";
    std::cout << "bundle manifest: " << man.directory << "/" << man.manifest_name << "\n";
    return 0;
}

int cmd_steady(const RunSpec& spec) {
    AssembledProblem ap = assemble_problem(spec);
    Vector v, p;
    if (spec.stokes_only) {
        std::tie(v, p) = solve_stokes(ap.sys, spec.Re);
        std::cout << "stokes solve at Re=" << spec.Re << " done\n";
    } else {
        SteadyOptions opts;
        opts.picard_steps = spec.picard;
        opts.newton_tol = spec.tol;
        SteadyResult res;
        if (spec.no_continuation) {
            opts.Re = spec.Re;
            res = solve_steady_ns(ap.sys, opts);
            std::cout << "continuation schedule: Re=" << spec.Re << "\n";
            if (!res.converged)
                throw std::runtime_error("steady solve did not converge at Re=" + std::to_string(spec.Re));
        } else {
            const ContinuationResult cont = solve_steady_ns_continuation(ap.sys, spec.Re, opts);
            std::cout << "continuation schedule:";
            for (double s : cont.stages) std::cout << " Re=" << s;
            std::cout << "\n";
            res = cont.final;
        }
        std::cout << "  " << (res.residual_trace.size() - 1) << " iterations at the final stage, residual "
                  << res.residual_trace.back() << "\n";
        v = res.v;
        p = res.p;
    }
    const auto [rv, rp] = steady_residual(ap.sys, spec.Re, v, p);
    std::cout << "final residual norm: " << std::sqrt(dot(rv, rv) + dot(rp, rp)) << "\n";
    const FieldSnapshot snap = make_snapshot(ap.mesh, ap.dm, ap.v_gamma, v, p, ap.sys.pinned, 0.0);
    const std::string path = spec.outdir + "/steady_" + spec.problem + "_N" + std::to_string(spec.N) + "_Re" +
                             std::to_string(static_cast<long long>(spec.Re)) + ".vtu";
    write_vtu(ap.mesh, snap, path);
    std::cout << "wrote " << path << "\n";
    return 0;
}

int cmd_simulate(const RunSpec& spec) {
    TransientOptions topts;
    topts.Re = spec.Re;
    topts.t0 = spec.t0;
    topts.tE = spec.tE;
    topts.Nts = spec.Nts;
    topts.record_every = spec.record_every;

    SignalSeries series;
    std::string tag;
    if (!spec.bundle_path.empty()) {
        LoadedBundle bundle = read_bundle(spec.bundle_path);
        topts.input_signal =
            make_input_signal(spec, bundle.ctrl ? bundle.ctrl->cfg.Nu : 0, bundle.robin.has_value());
        if (bundle.robin) topts.robin_alpha = spec.palpha;
        series = simulate(bundle.sys, bundle.ctrl ? &*bundle.ctrl : nullptr, topts,
                          bundle.robin ? &*bundle.robin : nullptr);
        tag = "bundle_NV" + std::to_string(bundle.sys.nv());
    } else {
        AssembledProblem ap = assemble_problem(spec);
        topts.input_signal = make_input_signal(spec, ap.ctrl ? ap.ctrl->cfg.Nu : 0, ap.robin.has_value());
        if (ap.robin) topts.robin_alpha = spec.palpha;
        tag = spec.problem + "_N" + std::to_string(spec.N);

        SnapshotSink sink;
        int snap_index = 0;
        if (spec.snapshots > 0) {
            topts.snapshot_every = std::max<index_t>(1, spec.Nts / spec.snapshots);
            sink = [&](double t, const Vector& v, const Vector& p) {
                const FieldSnapshot snap = make_snapshot(ap.mesh, ap.dm, ap.v_gamma, v, p, ap.sys.pinned, t);
                write_vtu(ap.mesh, snap,
                          spec.outdir + "/snap_" + tag + "_" + std::to_string(snap_index++) + ".vtu");
            };
        }
        series = simulate(ap.sys, ap.ctrl ? &*ap.ctrl : nullptr, topts, ap.robin ? &*ap.robin : nullptr, sink);
    }

    const std::string csv = spec.outdir + "/signals_" + tag + "_Re" +
                            std::to_string(static_cast<long long>(spec.Re)) + ".csv";
    write_signals(series, csv);
    std::cout << "simulated " << spec.Nts << " steps over [" << spec.t0 << ", " << spec.tE << "]\n";
    std::cout << "wrote " << csv << " (" << series.times.size() << " records)\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"nsops: operator assembly and simulation for incompressible flow benchmarks"};
    app.name("nsops");
    app.require_subcommand(1);
    RunSpec spec;
    spec.outdir = default_outdir();

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--outdir", spec.outdir, "Output directory (default: $NSOPS_OUTDIR or .)");
    };

    CLI::App* assemble = app.add_subcommand("assemble", "Assemble an operator bundle and write it to disk");
    assemble->add_option("--problem", spec.problem, "Problem name (drivencavity)");
    assemble->add_option("--N", spec.N, "Segments per boundary side")->check(CLI::Range(2, 200));
    assemble->add_option("--control", spec.control, "Control setup: none, distributed, robin");
    assemble->add_option("--Nu", spec.Nu, "Input dimension (even)");
    assemble->add_option("--q", spec.q, "Output dimension (even)");
    assemble->add_flag("--no-pin", spec.no_pin, "Keep the full pressure space (singular Stokes matrix)");
    add_common(assemble);

    CLI::App* steady = app.add_subcommand("steady", "Solve the steady Stokes or Navier-Stokes system");
    steady->add_option("--problem", spec.problem, "Problem name (drivencavity)");
    steady->add_option("--N", spec.N, "Segments per boundary side")->check(CLI::Range(2, 200));
    steady->add_option("--Re", spec.Re, "Reynolds number");
    steady->add_flag("--stokes-only", spec.stokes_only, "Stop after the Stokes solve");
    steady->add_flag("--no-continuation", spec.no_continuation, "Solve directly at the target Re");
    steady->add_option("--picard", spec.picard, "Picard steps before switching to Newton");
    steady->add_option("--tol", spec.tol, "Relative residual tolerance");
    add_common(steady);

    CLI::App* sim = app.add_subcommand("simulate", "Run a transient IMEX-Euler simulation");
    sim->add_option("--problem", spec.problem, "Problem name (drivencavity)");
    sim->add_option("--bundle", spec.bundle_path, "Run on an external bundle manifest instead of a mesh");
    sim->add_option("--N", spec.N, "Segments per boundary side")->check(CLI::Range(2, 200));
    sim->add_option("--Re", spec.Re, "Reynolds number");
    sim->add_option("--t0", spec.t0, "Start time");
    sim->add_option("--tE", spec.tE, "End time");
    sim->add_option("--Nts", spec.Nts, "Number of time steps")->check(CLI::PositiveNumber);
    sim->add_option("--control", spec.control, "Control setup: none, distributed, robin");
    sim->add_option("--Nu", spec.Nu, "Input dimension (even)");
    sim->add_option("--q", spec.q, "Output dimension (even)");
    sim->add_option("--input", spec.input, "Input signal: none, sincos");
    sim->add_option("--omega-mult", spec.omega_mult, "omega = mult*pi/(tE - t0) for the sincos input");
    sim->add_option("--palpha", spec.palpha, "Robin penalization parameter");
    sim->add_option("--record-every", spec.record_every, "Record signals every k steps")->check(CLI::PositiveNumber);
    sim->add_option("--snapshots", spec.snapshots, "Number of VTU snapshots (0 disables)");
    add_common(sim);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e); // --help
        std::cerr << "error:validation: " << e.what() << "\n";
        return 1;
    }

    try {
        if (app.got_subcommand(assemble)) return cmd_assemble(spec);
        if (app.got_subcommand(steady)) return cmd_steady(spec);
        if (app.got_subcommand(sim)) return cmd_simulate(spec);
        std::cerr << "error:validation: no subcommand given\n";
        return 1;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error:validation: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error:runtime: " << e.what() << "\n";
        return 2;
    }
}
