#pragma once

#include <array>
#include <functional>

#include <Eigen/Dense>

#include "nsops/assembly.hpp"
#include "nsops/mesh.hpp"
#include "nsops/quadrature.hpp"
#include "nsops/sparse.hpp"

namespace nsops {

/// Piecewise linear hat on [0,1]: 0 outside [left,right], 1 at peak.
/// left == peak or peak == right makes a boundary half-hat.
struct Hat1D {
    double left, peak, right;

    double operator()(double t) const {
        if (t < left || t > right) return 0.0;
        if (t < peak) return (t - left) / (peak - left);
        if (t > peak) return (right - t) / (right - peak);
        return 1.0;
    }
};

enum class SignalBasisKind { Hierarchical, EquidistantHat };

/// One-component signal basis on [0,1]; a full input/output space stacks two
/// copies of it (one per velocity component).
struct SignalBasis {
    SignalBasisKind kind;
    std::vector<Hat1D> funcs;

    index_t size() const { return static_cast<index_t>(funcs.size()); }

    static SignalBasis from_hats(SignalBasisKind kind, std::vector<Hat1D> hats) { return {kind, std::move(hats)}; }
};

/// Nested hat functions: function 1 spans [0,1] peaking at 1/2; level l >= 2
/// adds hats of support width 2^(1-l) peaking at the odd multiples of 2^(-l),
/// left to right.
inline SignalBasis hierarchical_basis(index_t count) {
    require(count >= 1, "hierarchical_basis: count must be >= 1");
    SignalBasis basis{SignalBasisKind::Hierarchical, {}};
    basis.funcs.push_back({0.0, 0.5, 1.0});
    index_t level = 2;
    while (static_cast<index_t>(basis.funcs.size()) < count) {
        const double half = std::ldexp(1.0, -level); // 2^-level
        const index_t in_level = index_t{1} << (level - 1);
        for (index_t i = 0; i < in_level && static_cast<index_t>(basis.funcs.size()) < count; ++i) {
            const double peak = (2 * i + 1) * half;
            basis.funcs.push_back({peak - half, peak, peak + half});
        }
        ++level;
    }
    return basis;
}

/// count standard hats on [0,1] split into count-1 equidistant segments,
/// with half-hats at both ends. Reproduces constants and affine functions.
inline SignalBasis equidistant_hat_basis(index_t count) {
    require(count >= 2, "equidistant_hat_basis: count must be >= 2");
    SignalBasis basis{SignalBasisKind::EquidistantHat, {}};
    const double d = 1.0 / static_cast<double>(count - 1);
    for (index_t i = 0; i < count; ++i) {
        const double peak = i * d;
        basis.funcs.push_back({std::max(0.0, peak - d), peak, std::min(1.0, peak + d)});
    }
    return basis;
}

struct Rect {
    double xmin, xmax, ymin, ymax;

    double extent(int axis) const { return axis == 0 ? xmax - xmin : ymax - ymin; }
    double lo(int axis) const { return axis == 0 ? xmin : ymin; }
    double area() const { return (xmax - xmin) * (ymax - ymin); }

    void validate(const std::string& name) const {
        require(xmin < xmax && ymin < ymax, name + ": degenerate rectangle");
        require(xmin >= 0.0 && ymin >= 0.0 && xmax <= 1.0 && ymax <= 1.0, name + ": rectangle outside the domain");
    }
};

/// Control/observation geometry and signal-space dimensions.
struct ControlConfig {
    Rect omega_c, omega_o, omega_p;
    int input_varying_axis = 0;  // axis along which the input profile varies
    int output_varying_axis = 1; // axis along which the output is resolved
    index_t Nu = 8;              // input dimension (even; Nu/2 per component)
    index_t q = 10;              // output dimension (even; q/2 per component)
};

/// The cavity setup: control in [0.4,0.6]x[0.2,0.3], velocity observation in
/// [0.45,0.55]x[0.5,0.7], pressure observation in [0.45,0.55]x[0.7,0.8];
/// input varies along x0, output along x1.
inline ControlConfig cavity_control_config(index_t Nu = 8, index_t q = 10) {
    ControlConfig cfg;
    cfg.omega_c = {0.4, 0.6, 0.2, 0.3};
    cfg.omega_o = {0.45, 0.55, 0.5, 0.7};
    cfg.omega_p = {0.45, 0.55, 0.7, 0.8};
    cfg.input_varying_axis = 0;
    cfg.output_varying_axis = 1;
    cfg.Nu = Nu;
    cfg.q = q;
    return cfg;
}

/// Discrete input/output operators; B and Cv are kept both over the full DOF
/// set and reduced to the inner DOFs.
struct ControlOperators {
    SparseMatrix B_full;  // n_full x Nu
    SparseMatrix B;       // NV x Nu
    SparseMatrix Cv_full; // q x n_full
    SparseMatrix Cv;      // q x NV
    SparseMatrix Cp;      // 1 x m (unpinned pressure size)
    SparseMatrix My;      // q x q
    SparseMatrix Mu;      // Nu x Nu
    ControlConfig cfg;
};

namespace detail {

using Point2 = std::array<double, 2>;
using Polygon = std::vector<Point2>;

/// Sutherland-Hodgman clip against the half-plane a*x + b*y <= c.
inline Polygon clip_halfplane(const Polygon& poly, double a, double b, double c) {
    Polygon out;
    const std::size_t n = poly.size();
    if (n == 0) return out;
    for (std::size_t i = 0; i < n; ++i) {
        const Point2& p = poly[i];
        const Point2& q = poly[(i + 1) % n];
        const double fp = a * p[0] + b * p[1] - c;
        const double fq = a * q[0] + b * q[1] - c;
        if (fp <= 0.0) out.push_back(p);
        if ((fp < 0.0 && fq > 0.0) || (fp > 0.0 && fq < 0.0)) {
            const double t = fp / (fp - fq);
            out.push_back({p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])});
        }
    }
    return out;
}

inline Polygon clip_rect(Polygon poly, const Rect& r) {
    poly = clip_halfplane(poly, -1.0, 0.0, -r.xmin);
    poly = clip_halfplane(poly, 1.0, 0.0, r.xmax);
    poly = clip_halfplane(poly, 0.0, -1.0, -r.ymin);
    poly = clip_halfplane(poly, 0.0, 1.0, r.ymax);
    return poly;
}

inline Polygon clip_axis_strip(Polygon poly, int axis, double lo, double hi) {
    if (axis == 0) {
        poly = clip_halfplane(poly, -1.0, 0.0, -lo);
        poly = clip_halfplane(poly, 1.0, 0.0, hi);
    } else {
        poly = clip_halfplane(poly, 0.0, -1.0, -lo);
        poly = clip_halfplane(poly, 0.0, 1.0, hi);
    }
    return poly;
}

/// Integrate f over a convex polygon by fanning into triangles and applying
/// the degree-5 rule; exact for polynomial integrands up to degree 5.
template <typename F>
double integrate_polygon(const Polygon& poly, F&& f) {
    if (poly.size() < 3) return 0.0;
    double total = 0.0;
    for (std::size_t i = 1; i + 1 < poly.size(); ++i) {
        const Point2& a = poly[0];
        const Point2& b = poly[i];
        const Point2& c = poly[i + 1];
        const double area = 0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]));
        if (area == 0.0) continue;
        for (const auto& qp : triangle_rule_deg5()) {
            const double x = qp.l0 * a[0] + qp.l1 * b[0] + qp.l2 * c[0];
            const double y = qp.l0 * a[1] + qp.l1 * b[1] + qp.l2 * c[1];
            total += qp.weight * area * f(x, y);
        }
    }
    return total;
}

/// Barycentric coordinates of a physical point within a triangle.
struct BarycentricMap {
    Point2 a;
    std::array<std::array<double, 2>, 2> inv; // maps (x - a) to (l1, l2)

    static BarycentricMap from(const Point2& a, const Point2& b, const Point2& c) {
        BarycentricMap m;
        m.a = a;
        const double b00 = b[0] - a[0], b01 = c[0] - a[0];
        const double b10 = b[1] - a[1], b11 = c[1] - a[1];
        const double det = b00 * b11 - b01 * b10;
        m.inv = {{{b11 / det, -b01 / det}, {-b10 / det, b00 / det}}};
        return m;
    }

    std::array<double, 3> operator()(double x, double y) const {
        const double dx = x - a[0], dy = y - a[1];
        const double l1 = inv[0][0] * dx + inv[0][1] * dy;
        const double l2 = inv[1][0] * dx + inv[1][1] * dy;
        return {1.0 - l1 - l2, l1, l2};
    }
};

/// Per-scalar-node integrals int_rect N_b(x) * hat(theta(x_axis)) dx, where
/// theta maps the rectangle's extent along `axis` onto [0,1]. The polygon is
/// clipped to each linear piece of the hat so every integrand is polynomial.
inline Vector integrate_p2_times_hat(const CavityMesh& mesh, const Rect& rect, int axis, const Hat1D& hat) {
    Vector out(mesh.n_p2(), 0.0);
    const double lo = rect.lo(axis), w = rect.extent(axis);
    std::array<std::array<double, 2>, 3> pieces_t{}; // hat pieces in [0,1]
    int n_pieces = 0;
    if (hat.peak > hat.left) pieces_t[n_pieces++] = {hat.left, hat.peak};
    if (hat.right > hat.peak) pieces_t[n_pieces++] = {hat.peak, hat.right};

    for (const auto& tri : mesh.triangles) {
        const Point2 a = mesh.p1_coords[tri.p1[0]];
        const Point2 b = mesh.p1_coords[tri.p1[1]];
        const Point2 c = mesh.p1_coords[tri.p1[2]];
        const Polygon base = clip_rect({a, b, c}, rect);
        if (base.size() < 3) continue;
        const auto bary = BarycentricMap::from(a, b, c);
        for (int pc = 0; pc < n_pieces; ++pc) {
            const double plo = lo + w * pieces_t[pc][0];
            const double phi = lo + w * pieces_t[pc][1];
            const Polygon poly = clip_axis_strip(base, axis, plo, phi);
            if (poly.size() < 3) continue;
            for (int loc = 0; loc < 6; ++loc) {
                const double val = integrate_polygon(poly, [&](double x, double y) {
                    const auto l = bary(x, y);
                    const double nb = p2_values(l[0], l[1], l[2])[loc];
                    const double t = ((axis == 0 ? x : y) - lo) / w;
                    return nb * hat(t);
                });
                out[tri.p2[loc]] += val;
            }
        }
    }
    return out;
}

/// Per-vertex integrals int_rect psi_k dx over the P1 basis.
inline Vector integrate_p1_over_rect(const CavityMesh& mesh, const Rect& rect) {
    Vector out(mesh.n_p1(), 0.0);
    for (const auto& tri : mesh.triangles) {
        const Point2 a = mesh.p1_coords[tri.p1[0]];
        const Point2 b = mesh.p1_coords[tri.p1[1]];
        const Point2 c = mesh.p1_coords[tri.p1[2]];
        const Polygon poly = clip_rect({a, b, c}, rect);
        if (poly.size() < 3) continue;
        const auto bary = BarycentricMap::from(a, b, c);
        for (int loc = 0; loc < 3; ++loc) {
            out[tri.p1[loc]] += integrate_polygon(poly, [&](double x, double y) { return bary(x, y)[loc]; });
        }
    }
    return out;
}

/// Exact Gram matrix of two hat families via piecewise Gauss quadrature.
inline std::vector<std::vector<double>> hat_gram(const std::vector<Hat1D>& fam) {
    std::vector<double> breaks;
    for (const auto& h : fam) {
        breaks.push_back(h.left);
        breaks.push_back(h.peak);
        breaks.push_back(h.right);
    }
    breaks.push_back(0.0);
    breaks.push_back(1.0);
    std::sort(breaks.begin(), breaks.end());
    breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());

    const std::size_t n = fam.size();
    std::vector<std::vector<double>> g(n, std::vector<double>(n, 0.0));
    for (std::size_t s = 0; s + 1 < breaks.size(); ++s) {
        const double x0 = breaks[s], len = breaks[s + 1] - breaks[s];
        if (len <= 0.0) continue;
        for (const auto& qp : segment_rule_gauss3()) {
            const double t = x0 + qp.t * len;
            const double w = qp.weight * len;
            for (std::size_t i = 0; i < n; ++i) {
                const double vi = fam[i](t);
                if (vi == 0.0) continue;
                for (std::size_t j = 0; j < n; ++j) {
                    const double vj = fam[j](t);
                    if (vj != 0.0) g[i][j] += w * vi * vj;
                }
            }
        }
    }
    return g;
}

/// Two identical blocks (one per velocity component) of a scalar Gram matrix.
inline SparseMatrix block_diag_gram(const std::vector<Hat1D>& fam) {
    const auto g = hat_gram(fam);
    const index_t half = static_cast<index_t>(fam.size());
    CooBuilder coo(2 * half, 2 * half);
    for (index_t i = 0; i < half; ++i)
        for (index_t j = 0; j < half; ++j)
            if (g[i][j] != 0.0) {
                coo.add(i, j, g[i][j]);
                coo.add(half + i, half + j, g[i][j]);
            }
    return coo.finalize();
}

} // namespace detail

/// Distributed input operator: column l tests the velocity basis against the
/// hat profile nu_l(theta_c(x_axis)) over Omega_c; the first Nu/2 columns act
/// on the x0 component, the last Nu/2 on the x1 component.
inline SparseMatrix assemble_B(const CavityMesh& mesh, const DofMap& dm, const ControlConfig& cfg,
                               const SignalBasis& basis) {
    cfg.omega_c.validate("Omega_c");
    require(cfg.Nu >= 2 && cfg.Nu % 2 == 0, "assemble_B: Nu must be even and positive");
    require(basis.size() == cfg.Nu / 2, "assemble_B: basis size must equal Nu/2");
    CooBuilder coo(dm.n_full, cfg.Nu);
    for (index_t l = 0; l < cfg.Nu / 2; ++l) {
        const Vector wts = detail::integrate_p2_times_hat(mesh, cfg.omega_c, cfg.input_varying_axis, basis.funcs[l]);
        for (index_t node = 0; node < mesh.n_p2(); ++node)
            if (wts[node] != 0.0) {
                coo.add(DofMap::dof_of(node, 0), l, wts[node]);
                coo.add(DofMap::dof_of(node, 1), cfg.Nu / 2 + l, wts[node]);
            }
    }
    return coo.finalize();
}

/// Velocity output: the observed field is averaged across Omega_o along the
/// non-varying axis, expanded in the equidistant hat basis, and premultiplied
/// by the inverse signal mass matrix. Returns (Cv, My).
inline std::pair<SparseMatrix, SparseMatrix> assemble_Cv(const CavityMesh& mesh, const DofMap& dm,
                                                         const ControlConfig& cfg, const SignalBasis& basis) {
    cfg.omega_o.validate("Omega_o");
    require(cfg.q >= 4 && cfg.q % 2 == 0, "assemble_Cv: q must be even and >= 4");
    require(basis.size() == cfg.q / 2, "assemble_Cv: basis size must equal q/2");
    const index_t half = cfg.q / 2;
    const int axis = cfg.output_varying_axis;
    const double w_var = cfg.omega_o.extent(axis);
    const double w_avg = cfg.omega_o.extent(1 - axis);

    // raw moment matrix R[l, node] = int_0^1 nu_l(eta) (Cv phi)(eta) d eta
    Eigen::MatrixXd R(half, mesh.n_p2());
    for (index_t l = 0; l < half; ++l) {
        const Vector wts = detail::integrate_p2_times_hat(mesh, cfg.omega_o, axis, basis.funcs[l]);
        for (index_t node = 0; node < mesh.n_p2(); ++node) R(l, node) = wts[node] / (w_var * w_avg);
    }

    const auto gram = detail::hat_gram(basis.funcs);
    Eigen::MatrixXd G(half, half);
    for (index_t i = 0; i < half; ++i)
        for (index_t j = 0; j < half; ++j) G(i, j) = gram[i][j];
    const Eigen::MatrixXd C = G.llt().solve(R);

    CooBuilder coo(cfg.q, dm.n_full);
    for (index_t l = 0; l < half; ++l)
        for (index_t node = 0; node < mesh.n_p2(); ++node)
            if (C(l, node) != 0.0) {
                coo.add(l, DofMap::dof_of(node, 0), C(l, node));
                coo.add(half + l, DofMap::dof_of(node, 1), C(l, node));
            }
    return {coo.finalize(), detail::block_diag_gram(basis.funcs)};
}

/// Pressure output: the mean of the P1 pressure over Omega_p.
inline SparseMatrix assemble_Cp(const CavityMesh& mesh, const ControlConfig& cfg) {
    cfg.omega_p.validate("Omega_p");
    const Vector wts = detail::integrate_p1_over_rect(mesh, cfg.omega_p);
    const double area = cfg.omega_p.area();
    CooBuilder coo(1, mesh.n_p1());
    for (index_t k = 0; k < mesh.n_p1(); ++k)
        if (wts[k] != 0.0) coo.add(0, k, wts[k] / area);
    return coo.finalize();
}

/// Evaluate the two-component input profile at xi for coefficients s.
inline std::array<double, 2> evaluate_input(const SignalBasis& basis, const Vector& s, double xi) {
    require(xi >= 0.0 && xi <= 1.0, "evaluate_input: xi outside [0,1]");
    const index_t half = basis.size();
    require(static_cast<index_t>(s.size()) == 2 * half, "evaluate_input: coefficient length mismatch");
    std::array<double, 2> u = {0.0, 0.0};
    for (index_t l = 0; l < half; ++l) {
        const double v = basis.funcs[l](xi);
        u[0] += s[l] * v;
        u[1] += s[half + l] * v;
    }
    return u;
}

/// Assemble the full distributed control/observation operator set for a mesh.
inline ControlOperators assemble_control_ops(const CavityMesh& mesh, const DofMap& dm, const ControlConfig& cfg) {
    ControlOperators ops;
    ops.cfg = cfg;
    const SignalBasis input_basis = hierarchical_basis(cfg.Nu / 2);
    const SignalBasis output_basis = equidistant_hat_basis(cfg.q / 2);
    ops.B_full = assemble_B(mesh, dm, cfg, input_basis);
    auto [cv, my] = assemble_Cv(mesh, dm, cfg, output_basis);
    ops.Cv_full = std::move(cv);
    ops.My = std::move(my);
    ops.Cp = assemble_Cp(mesh, cfg);
    ops.Mu = detail::block_diag_gram(input_basis.funcs);

    // reduce to inner DOFs
    CooBuilder bred(dm.nv(), cfg.Nu);
    for (index_t i = 0; i < ops.B_full.nrows; ++i) {
        if (dm.full_to_inner[i] < 0) continue;
        for (index_t k = ops.B_full.row_ptr[i]; k < ops.B_full.row_ptr[i + 1]; ++k)
            bred.add(dm.full_to_inner[i], ops.B_full.col_idx[k], ops.B_full.values[k]);
    }
    ops.B = bred.finalize();

    CooBuilder cred(cfg.q, dm.nv());
    for (index_t r = 0; r < ops.Cv_full.nrows; ++r)
        for (index_t k = ops.Cv_full.row_ptr[r]; k < ops.Cv_full.row_ptr[r + 1]; ++k)
            if (dm.full_to_inner[ops.Cv_full.col_idx[k]] >= 0)
                cred.add(r, dm.full_to_inner[ops.Cv_full.col_idx[k]], ops.Cv_full.values[k]);
    ops.Cv = cred.finalize();
    return ops;
}

} // namespace nsops
