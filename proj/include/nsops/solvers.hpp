#pragma once

#include <functional>
#include <optional>
#include <utility>

#include "nsops/assembly.hpp"
#include "nsops/control.hpp"
#include "nsops/saddle.hpp"

namespace nsops {

struct SteadyOptions {
    double Re = 1.0;
    int picard_steps = 5;
    double newton_tol = 1e-11; // relative residual target
    int max_newton = 25;
};

/// Robin boundary actuation reduced to the inner DOFs, stored with alpha = 1;
/// the solver applies the 1/alpha scaling.
struct RobinControl {
    SparseMatrix Abc; // NV x NV
    SparseMatrix Bbc; // NV x Nu_bc
    double alpha = 1.0;
};

using InputSignal = std::function<Vector(double)>;
using SnapshotSink = std::function<void(double t, const Vector& v_inner, const Vector& p)>;

struct TransientOptions {
    double Re = 1.0;
    double t0 = 0.0;
    double tE = 1.0;
    index_t Nts = 1;
    InputSignal input_signal;     // t -> coefficient vector u(t); may be empty
    std::optional<double> robin_alpha;
    index_t record_every = 1;
    index_t snapshot_every = 0;   // 0 disables snapshots
    std::optional<Vector> initial_velocity; // default: Stokes solution
    std::optional<Vector> initial_pressure;
};

/// Time-stamped input and output signals of a transient run.
struct SignalSeries {
    Vector times;
    std::vector<Vector> y_v; // velocity output coefficients, q per record
    Vector y_p;              // pressure output per record
    std::vector<Vector> u;   // applied input per record
};

struct SteadyResult {
    Vector v, p;
    std::vector<double> residual_trace; // relative residual per iteration
    bool converged = false;
};

namespace detail {

inline Vector steady_rhs_v(const FlowSystem& sys, double Re) {
    Vector rhs = sys.fv;
    axpy(-1.0, sys.gv, rhs);
    axpy(-1.0 / Re, sys.fv_diff, rhs);
    return rhs;
}

/// An unpinned pure-Dirichlet system carries the constant-pressure nullspace
/// (J^T 1 = 0 when no velocity DOF has boundary support); reject it before a
/// direct solve silently picks an arbitrary pressure level.
inline void require_solvable(const FlowSystem& sys) {
    if (sys.pinned || sys.m_rows() == 0) return;
    const Vector jt_ones = spmv_transpose(sys.J, Vector(sys.m_rows(), 1.0));
    double j_scale = 0.0;
    for (double v : sys.J.values) j_scale = std::max(j_scale, std::abs(v));
    if (norm2(jt_ones) <= 1e-10 * j_scale * std::sqrt(static_cast<double>(sys.m_rows())))
        throw std::runtime_error(
            "singular system: constant-pressure nullspace present (pin the pressure or supply Robin nodes)");
}

} // namespace detail

/// Momentum/continuity residual of the steady Navier-Stokes system.
inline std::pair<Vector, Vector> steady_residual(const FlowSystem& sys, double Re, const Vector& v,
                                                 const Vector& p) {
    Vector rv = spmv(sys.A, v);
    scale(rv, 1.0 / Re);
    axpy(1.0, spmv(sys.L1, v), rv);
    axpy(1.0, spmv(sys.L2, v), rv);
    axpy(1.0, apply_kron(sys.H, v, v), rv);
    axpy(-1.0, spmv_transpose(sys.J, p), rv);
    axpy(1.0, sys.fv_conv, rv);
    axpy(1.0 / Re, sys.fv_diff, rv);
    axpy(1.0, sys.gv, rv);
    axpy(-1.0, sys.fv, rv);
    Vector rp = spmv(sys.J, v);
    axpy(1.0, sys.fp_div, rp);
    return {std::move(rv), std::move(rp)};
}

/// Solve the steady Stokes system [[1/Re A, -J^T],[J, 0]].
inline std::pair<Vector, Vector> solve_stokes(const FlowSystem& sys, double Re) {
    detail::require_solvable(sys);
    SparseMatrix S = scaled(sys.A, 1.0 / Re);
    SaddleFactorization F(S, sys.J);
    Vector rhs_v = detail::steady_rhs_v(sys, Re);
    Vector rhs_p = sys.fp_div;
    scale(rhs_p, -1.0);
    return F.solve(rhs_v, rhs_p);
}

/// Steady Navier-Stokes via Picard iterations followed by Newton. The Picard
/// system matrix is 1/Re A + L1 + L2 + H1(a); Newton adds H2(a) to the matrix
/// and H(a (x) a) to the right-hand side. Steps are damped by a backtracking
/// line search on the residual norm; full steps win near the solution, so the
/// Newton tail stays quadratic.
inline SteadyResult solve_steady_ns(const FlowSystem& sys, const SteadyOptions& opts,
                                    const std::optional<std::pair<Vector, Vector>>& start = std::nullopt) {
    require(opts.newton_tol > 0.0, "solve_steady_ns: tolerance must be positive");
    detail::require_solvable(sys);
    const double Re = opts.Re;
    SteadyResult res;
    if (start) {
        res.v = start->first;
        res.p = start->second;
    } else {
        std::tie(res.v, res.p) = solve_stokes(sys, Re);
    }

    const SparseMatrix K0 = add_scaled(add_scaled(sys.A, 1.0 / Re, sys.L1, 1.0), 1.0, sys.L2, 1.0);
    Vector rhs_v = detail::steady_rhs_v(sys, Re);
    axpy(-1.0, sys.fv_conv, rhs_v);
    Vector rhs_p = sys.fp_div;
    scale(rhs_p, -1.0);
    const double denom = 1.0 + std::sqrt(dot(rhs_v, rhs_v) + dot(rhs_p, rhs_p));

    auto residual_norm = [&](const Vector& v, const Vector& p) {
        const auto [rv, rp] = steady_residual(sys, Re, v, p);
        return std::sqrt(dot(rv, rv) + dot(rp, rp));
    };

    double r_abs = residual_norm(res.v, res.p);
    const int max_iter = opts.picard_steps + opts.max_newton;
    for (int it = 0; it <= max_iter; ++it) {
        res.residual_trace.push_back(r_abs / denom);
        if (r_abs / denom <= opts.newton_tol) {
            res.converged = true;
            return res;
        }
        if (it == max_iter) break;

        Vector v_cand, p_cand;
        if (it < opts.picard_steps) {
            const SparseMatrix K = add_scaled(K0, 1.0, linearize_left(sys.H, res.v), 1.0);
            SaddleFactorization F(K, sys.J);
            std::tie(v_cand, p_cand) = F.solve(rhs_v, rhs_p);
        } else {
            SparseMatrix K = add_scaled(K0, 1.0, linearize_left(sys.H, res.v), 1.0);
            K = add_scaled(K, 1.0, linearize_right(sys.H, res.v), 1.0);
            Vector rhs_n = rhs_v;
            axpy(1.0, apply_kron(sys.H, res.v, res.v), rhs_n);
            SaddleFactorization F(K, sys.J);
            std::tie(v_cand, p_cand) = F.solve(rhs_n, rhs_p);
        }

        axpy(-1.0, res.v, v_cand); // candidate becomes the update direction
        axpy(-1.0, res.p, p_cand);
        double lambda = 1.0;
        Vector v_trial, p_trial;
        double r_trial = 0.0;
        for (int cut = 0; cut < 12; ++cut) {
            v_trial = res.v;
            p_trial = res.p;
            axpy(lambda, v_cand, v_trial);
            axpy(lambda, p_cand, p_trial);
            r_trial = residual_norm(v_trial, p_trial);
            if (r_trial <= (1.0 - 1e-4 * lambda) * r_abs) break;
            lambda *= 0.5;
        }
        res.v = std::move(v_trial);
        res.p = std::move(p_trial);
        r_abs = r_trial;
    }
    return res; // non-converged; trace carries the diagnosis
}

struct ContinuationResult {
    SteadyResult final;            // result at the target Reynolds number
    std::vector<double> stages;    // Reynolds numbers actually solved
};

/// Reach a high Reynolds number by chaining steady solves along the schedule
/// {100, 400, 800} extended in steps of 100 beyond 800 (Newton's basin
/// shrinks with Re), capped at the target. A stage that fails to converge is
/// bisected toward the last converged Reynolds number.
inline ContinuationResult solve_steady_ns_continuation(const FlowSystem& sys, double Re_target,
                                                       SteadyOptions opts = {}) {
    require(Re_target > 0.0, "continuation: Re must be positive");
    std::vector<double> pending;
    for (double s : {100.0, 400.0, 800.0})
        if (s < Re_target) pending.push_back(s);
    for (double s = 900.0; s < Re_target; s += 100.0) pending.push_back(s);
    pending.push_back(Re_target);

    ContinuationResult out;
    std::optional<std::pair<Vector, Vector>> start;
    double reached = 0.0;
    std::size_t i = 0;
    int attempts = 0;
    while (i < pending.size()) {
        if (++attempts > 64) throw std::runtime_error("continuation: too many stages");
        opts.Re = pending[i];
        out.final = solve_steady_ns(sys, opts, start);
        if (out.final.converged) {
            out.stages.push_back(pending[i]);
            start = std::make_pair(out.final.v, out.final.p);
            reached = pending[i];
            ++i;
        } else {
            const double gap = pending[i] - reached;
            if (gap < 1.0)
                throw std::runtime_error("continuation: stalled near Re=" + std::to_string(pending[i]));
            pending.insert(pending.begin() + i, reached + 0.5 * gap);
        }
    }
    return out;
}

/// One IMEX-Euler time stepper: diffusion, the boundary-induced linear
/// convection parts and the pressure coupling are implicit, the quadratic
/// convection and the inputs explicit. The block matrix is factored once.
class ImexStepper {
public:
    ImexStepper(const FlowSystem& sys, double Re, double dt, const SparseMatrix* B = nullptr,
                const RobinControl* robin = nullptr, std::optional<double> robin_alpha = std::nullopt)
        : sys_(sys), Re_(Re), dt_(dt), B_(B), robin_(robin) {
        require(dt > 0.0, "ImexStepper: dt must be positive");
        detail::require_solvable(sys);
        SparseMatrix K = add_scaled(add_scaled(sys.A, 1.0 / Re, sys.L1, 1.0), 1.0, sys.L2, 1.0);
        if (robin_) {
            alpha_ = robin_alpha.value_or(robin_->alpha);
            require(alpha_ > 0.0, "ImexStepper: robin alpha must be positive");
            K = add_scaled(K, 1.0, robin_->Abc, 1.0 / alpha_);
        }
        SparseMatrix S = add_scaled(sys.M, 1.0, K, dt);
        fact_ = std::make_unique<SaddleFactorization>(S, sys.J, dt);
        rhs_const_ = sys.fv;
        axpy(-1.0, sys.gv, rhs_const_);
        axpy(-1.0 / Re, sys.fv_diff, rhs_const_);
        axpy(-1.0, sys.fv_conv, rhs_const_);
        rhs_p_ = sys.fp_div;
        scale(rhs_p_, -1.0);
    }

    /// Advance one step from v_old with input coefficients u (may be empty).
    std::pair<Vector, Vector> step(const Vector& v_old, const Vector& u = {}) const {
        Vector rv = rhs_const_;
        axpy(-1.0, apply_kron(sys_.H, v_old, v_old), rv);
        if (!u.empty()) {
            if (robin_)
                axpy(1.0 / alpha_, spmv(robin_->Bbc, u), rv);
            else if (B_)
                axpy(1.0, spmv(*B_, u), rv);
            else
                throw std::invalid_argument("ImexStepper: input given but no input operator");
        }
        scale(rv, dt_);
        axpy(1.0, spmv(sys_.M, v_old), rv);
        return fact_->solve(rv, rhs_p_);
    }

    double dt() const { return dt_; }

private:
    const FlowSystem& sys_;
    double Re_, dt_;
    const SparseMatrix* B_;
    const RobinControl* robin_;
    double alpha_ = 1.0;
    std::unique_ptr<SaddleFactorization> fact_;
    Vector rhs_const_, rhs_p_;
};

/// Single IMEX-Euler step (factors the block matrix for this one call; use
/// ImexStepper directly to reuse the factorization across steps).
inline std::pair<Vector, Vector> imex_step(const FlowSystem& sys, double Re, double dt, const Vector& v_old,
                                           const Vector& u = {}, const SparseMatrix* B = nullptr,
                                           const RobinControl* robin = nullptr,
                                           std::optional<double> robin_alpha = std::nullopt) {
    return ImexStepper(sys, Re, dt, B, robin, robin_alpha).step(v_old, u);
}

namespace detail {

/// Cp columns cover the unpinned pressure space; re-append the pinned zero.
inline double pressure_output(const FlowSystem& sys, const SparseMatrix& Cp, const Vector& p) {
    if (Cp.ncols == static_cast<index_t>(p.size())) return spmv(Cp, p)[0];
    require(sys.pinned && Cp.ncols == static_cast<index_t>(p.size()) + 1,
            "pressure_output: dimension mismatch");
    Vector full = p;
    full.push_back(0.0);
    return spmv(Cp, full)[0];
}

} // namespace detail

/// Transient IMEX-Euler simulation on a uniform time grid, starting from the
/// Stokes solution unless an initial state is supplied. Records the input and
/// the observed outputs every record_every steps. Deterministic.
inline SignalSeries simulate(const FlowSystem& sys, const ControlOperators* ctrl, const TransientOptions& topts,
                             const RobinControl* robin = nullptr, const SnapshotSink& snapshot = nullptr) {
    require(topts.tE > topts.t0, "simulate: tE must exceed t0");
    require(topts.Nts >= 1, "simulate: Nts must be >= 1");
    require(topts.record_every >= 1, "simulate: record_every must be >= 1");
    const double dt = (topts.tE - topts.t0) / static_cast<double>(topts.Nts);

    Vector v, p;
    if (topts.initial_velocity) {
        v = *topts.initial_velocity;
        require(static_cast<index_t>(v.size()) == sys.nv(), "simulate: initial velocity dimension mismatch");
        if (topts.initial_pressure)
            p = *topts.initial_pressure;
        else
            p.assign(sys.m_rows(), 0.0);
    } else {
        std::tie(v, p) = solve_stokes(sys, topts.Re);
    }

    ImexStepper stepper(sys, topts.Re, dt, ctrl ? &ctrl->B : nullptr, robin, topts.robin_alpha);

    SignalSeries series;
    auto record = [&](index_t step, const Vector& u_now) {
        series.times.push_back(topts.t0 + step * dt);
        if (ctrl) {
            series.y_v.push_back(spmv(ctrl->Cv, v));
            series.y_p.push_back(detail::pressure_output(sys, ctrl->Cp, p));
        }
        series.u.push_back(u_now);
    };

    Vector u_now = topts.input_signal ? topts.input_signal(topts.t0) : Vector{};
    record(0, u_now);
    if (snapshot && topts.snapshot_every > 0) snapshot(topts.t0, v, p);

    for (index_t step = 1; step <= topts.Nts; ++step) {
        // input applied over [t_{k-1}, t_k) is evaluated at the old time level
        u_now = topts.input_signal ? topts.input_signal(topts.t0 + (step - 1) * dt) : Vector{};
        std::tie(v, p) = stepper.step(v, u_now);
        if (step % topts.record_every == 0) record(step, u_now);
        if (snapshot && topts.snapshot_every > 0 && step % topts.snapshot_every == 0)
            snapshot(topts.t0 + step * dt, v, p);
    }
    return series;
}

} // namespace nsops
