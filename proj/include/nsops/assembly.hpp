#pragma once

#include <array>
#include <functional>

#include "nsops/conv_tensor.hpp"
#include "nsops/mesh.hpp"
#include "nsops/quadrature.hpp"
#include "nsops/sparse.hpp"

namespace nsops {

/// Operators over the full (unreduced) DOF set.
struct FullOperators {
    SparseMatrix M_full; // vector mass
    SparseMatrix A_full; // vector stiffness (Frobenius gradient product)
    SparseMatrix J_full; // divergence, m x n_full
    ConvTensor H_full;   // convection tensor over n_full
    Vector f_full;       // source term
};

/// The reduced operator bundle that fully defines the semi-discrete system.
/// A and fv_diff are stored unscaled; multiply them by 1/Re when simulating.
struct FlowSystem {
    SparseMatrix M, A, L1, L2; // NV x NV
    ConvTensor H;              // over NV
    SparseMatrix J;            // m' x NV (m' = m, or m-1 when pinned)
    Vector fv, fv_diff, fv_conv, gv; // length NV
    Vector fp_div;                   // length m'
    bool pinned = false;
    bool re_scaling_unapplied = true; // A, fv_diff carry no 1/Re factor

    index_t nv() const { return M.nrows; }
    index_t m_rows() const { return J.nrows; }
};

using SourceFn = std::function<std::array<double, 2>(double, double)>;

namespace detail {

struct ElementGeometry {
    std::array<index_t, 6> nodes;
    std::array<index_t, 3> verts;
    double area;
    // physical gradient = invBT * reference gradient
    std::array<std::array<double, 2>, 2> invBT;
};

inline ElementGeometry element_geometry(const CavityMesh& mesh, const CavityMesh::Triangle& tri) {
    ElementGeometry g;
    g.nodes = tri.p2;
    g.verts = tri.p1;
    const auto& a = mesh.p1_coords[tri.p1[0]];
    const auto& b = mesh.p1_coords[tri.p1[1]];
    const auto& c = mesh.p1_coords[tri.p1[2]];
    const double b00 = b[0] - a[0], b01 = c[0] - a[0];
    const double b10 = b[1] - a[1], b11 = c[1] - a[1];
    const double det = b00 * b11 - b01 * b10;
    g.area = 0.5 * det;
    // B^{-T} = (1/det) [[b11, -b10], [-b01, b00]]
    g.invBT = {{{b11 / det, -b10 / det}, {-b01 / det, b00 / det}}};
    return g;
}

inline std::array<std::array<double, 2>, 6> physical_gradients(const ElementGeometry& g,
                                                               const std::array<std::array<double, 2>, 6>& ref) {
    std::array<std::array<double, 2>, 6> out{};
    for (int i = 0; i < 6; ++i) {
        out[i][0] = g.invBT[0][0] * ref[i][0] + g.invBT[0][1] * ref[i][1];
        out[i][1] = g.invBT[1][0] * ref[i][0] + g.invBT[1][1] * ref[i][1];
    }
    return out;
}

} // namespace detail

/// Assemble mass, stiffness, divergence and the source vector over the full
/// DOF set with the degree-5 triangle rule.
inline FullOperators assemble_linear(const CavityMesh& mesh, const DofMap& dm, const SourceFn& f = nullptr) {
    const auto& rule = triangle_rule_deg5();
    CooBuilder mass(dm.n_full, dm.n_full);
    CooBuilder stiff(dm.n_full, dm.n_full);
    CooBuilder divb(dm.m, dm.n_full);
    Vector fvec(dm.n_full, 0.0);
    mass.reserve(mesh.triangles.size() * 72);
    stiff.reserve(mesh.triangles.size() * 72);
    divb.reserve(mesh.triangles.size() * 36);

    for (const auto& tri : mesh.triangles) {
        const auto g = detail::element_geometry(mesh, tri);
        double m_loc[6][6] = {};
        double a_loc[6][6] = {};
        double j_loc[3][6][2] = {};
        double f_loc[6][2] = {};
        for (const auto& qp : rule) {
            const double w = qp.weight * g.area;
            const auto val = p2_values(qp.l0, qp.l1, qp.l2);
            const auto grad = detail::physical_gradients(g, p2_ref_gradients(qp.l0, qp.l1, qp.l2));
            const auto pval = p1_values(qp.l0, qp.l1, qp.l2);
            for (int i = 0; i < 6; ++i)
                for (int j = 0; j < 6; ++j) {
                    m_loc[i][j] += w * val[i] * val[j];
                    a_loc[i][j] += w * (grad[i][0] * grad[j][0] + grad[i][1] * grad[j][1]);
                }
            for (int k = 0; k < 3; ++k)
                for (int j = 0; j < 6; ++j)
                    for (int c = 0; c < 2; ++c)
                        j_loc[k][j][c] += w * pval[k] * grad[j][c];
            if (f) {
                const auto& va = mesh.p1_coords[tri.p1[0]];
                const auto& vb = mesh.p1_coords[tri.p1[1]];
                const auto& vc = mesh.p1_coords[tri.p1[2]];
                const double x = qp.l0 * va[0] + qp.l1 * vb[0] + qp.l2 * vc[0];
                const double y = qp.l0 * va[1] + qp.l1 * vb[1] + qp.l2 * vc[1];
                const auto fx = f(x, y);
                for (int i = 0; i < 6; ++i)
                    for (int c = 0; c < 2; ++c)
                        f_loc[i][c] += w * val[i] * fx[c];
            }
        }
        for (int i = 0; i < 6; ++i)
            for (int j = 0; j < 6; ++j)
                for (index_t c = 0; c < 2; ++c) {
                    mass.add(DofMap::dof_of(g.nodes[i], c), DofMap::dof_of(g.nodes[j], c), m_loc[i][j]);
                    stiff.add(DofMap::dof_of(g.nodes[i], c), DofMap::dof_of(g.nodes[j], c), a_loc[i][j]);
                }
        for (int k = 0; k < 3; ++k)
            for (int j = 0; j < 6; ++j)
                for (index_t c = 0; c < 2; ++c)
                    divb.add(g.verts[k], DofMap::dof_of(g.nodes[j], c), j_loc[k][j][c]);
        if (f)
            for (int i = 0; i < 6; ++i)
                for (index_t c = 0; c < 2; ++c)
                    fvec[DofMap::dof_of(g.nodes[i], c)] += f_loc[i][c];
    }

    FullOperators ops;
    ops.M_full = mass.finalize();
    ops.A_full = stiff.finalize();
    ops.J_full = divb.finalize();
    ops.f_full = std::move(fvec);
    return ops;
}

/// Assemble the convection tensor entries int (phi_j . grad) phi_k . phi_i
/// over the full DOF set. The integrand has total degree 5, which the
/// triangle rule integrates exactly.
inline ConvTensor assemble_convection_tensor(const CavityMesh& mesh, const DofMap& dm) {
    const auto& rule = triangle_rule_deg5();
    ConvTensorBuilder builder(dm.n_full);
    builder.reserve(mesh.triangles.size() * 864);

    for (const auto& tri : mesh.triangles) {
        const auto g = detail::element_geometry(mesh, tri);
        // loc[p][d][q][r] = int N_p dN_q/dx_d N_r
        double loc[6][2][6][6] = {};
        for (const auto& qp : rule) {
            const double w = qp.weight * g.area;
            const auto val = p2_values(qp.l0, qp.l1, qp.l2);
            const auto grad = detail::physical_gradients(g, p2_ref_gradients(qp.l0, qp.l1, qp.l2));
            for (int p = 0; p < 6; ++p) {
                const double wp = w * val[p];
                for (int d = 0; d < 2; ++d)
                    for (int q = 0; q < 6; ++q) {
                        const double wpq = wp * grad[q][d];
                        for (int r = 0; r < 6; ++r) loc[p][d][q][r] += wpq * val[r];
                    }
            }
        }
        for (int p = 0; p < 6; ++p)
            for (index_t d = 0; d < 2; ++d)
                for (int q = 0; q < 6; ++q)
                    for (int r = 0; r < 6; ++r) {
                        const double v = loc[p][d][q][r];
                        if (v == 0.0) continue;
                        for (index_t e = 0; e < 2; ++e)
                            builder.add(DofMap::dof_of(g.nodes[r], e), DofMap::dof_of(g.nodes[p], d),
                                        DofMap::dof_of(g.nodes[q], e), v);
                    }
    }
    return builder.finalize();
}

/// Resolve Dirichlet boundary conditions: restrict every operator to the
/// inner DOFs, fold the boundary columns of the convection tensor into the
/// linear parts L1, L2 and the source correction fv_conv, and collect the
/// diffusion/divergence boundary contributions fv_diff, fp_div.
inline FlowSystem reduce_system(const FullOperators& full, const DofMap& dm, const Vector& v_gamma,
                                bool pin_pressure) {
    require(static_cast<index_t>(v_gamma.size()) == dm.n_full, "reduce_system: v_gamma length mismatch");
    for (index_t dof : dm.inner_idx)
        require(v_gamma[dof] == 0.0, "reduce_system: v_gamma must vanish on inner DOFs");

    const index_t nv = dm.nv();
    const auto& map = dm.full_to_inner;

    auto restrict_matrix = [&](const SparseMatrix& Afull) {
        CooBuilder coo(nv, nv);
        coo.reserve(Afull.values.size());
        for (index_t i = 0; i < Afull.nrows; ++i) {
            if (map[i] < 0) continue;
            for (index_t k = Afull.row_ptr[i]; k < Afull.row_ptr[i + 1]; ++k)
                if (map[Afull.col_idx[k]] >= 0) coo.add(map[i], map[Afull.col_idx[k]], Afull.values[k]);
        }
        return coo.finalize();
    };

    FlowSystem sys;
    sys.M = restrict_matrix(full.M_full);
    sys.A = restrict_matrix(full.A_full);

    CooBuilder jcoo(full.J_full.nrows, nv);
    jcoo.reserve(full.J_full.values.size());
    for (index_t r = 0; r < full.J_full.nrows; ++r)
        for (index_t k = full.J_full.row_ptr[r]; k < full.J_full.row_ptr[r + 1]; ++k)
            if (map[full.J_full.col_idx[k]] >= 0) jcoo.add(r, map[full.J_full.col_idx[k]], full.J_full.values[k]);
    SparseMatrix J_all = jcoo.finalize();

    ConvTensorBuilder hb(nv);
    CooBuilder l1coo(nv, nv), l2coo(nv, nv);
    for (const auto& e : full.H_full.entries) {
        const index_t ii = map[e.i];
        if (ii < 0) continue;
        const index_t ji = map[e.j], ki = map[e.k];
        if (ji >= 0 && ki >= 0)
            hb.add(ii, ji, ki, e.value);
        else if (ji >= 0 && ki < 0)
            l1coo.add(ii, ji, e.value * v_gamma[e.k]);
        else if (ji < 0 && ki >= 0)
            l2coo.add(ii, ki, e.value * v_gamma[e.j]);
        // both boundary: carried by fv_conv below
    }
    sys.H = hb.finalize();
    sys.L1 = l1coo.finalize();
    sys.L2 = l2coo.finalize();

    sys.fv = dm.restrict_inner(full.f_full);
    sys.fv_diff = dm.restrict_inner(spmv(full.A_full, v_gamma));
    sys.fv_conv = dm.restrict_inner(apply_kron(full.H_full, v_gamma, v_gamma));
    sys.gv.assign(nv, 0.0);
    Vector fp = spmv(full.J_full, v_gamma);

    if (pin_pressure) {
        // drop the last pressure row
        CooBuilder jp(J_all.nrows - 1, nv);
        jp.reserve(J_all.values.size());
        for (index_t r = 0; r + 1 < J_all.nrows; ++r)
            for (index_t k = J_all.row_ptr[r]; k < J_all.row_ptr[r + 1]; ++k)
                jp.add(r, J_all.col_idx[k], J_all.values[k]);
        sys.J = jp.finalize();
        fp.pop_back();
        sys.pinned = true;
    } else {
        sys.J = std::move(J_all);
    }
    sys.fp_div = std::move(fp);
    return sys;
}

/// Shape function for boundary-control outlets: 1 at the segment center,
/// smoothly zero at both ends.
inline double robin_outlet_shape(double s) {
    return 1.0 - 0.5 * (1.0 + std::sin((2.0 * s + 0.5) * kPi));
}

/// Parabolic inflow profile of the channel benchmark, over s in [0, 0.41].
inline double parabolic_inflow_profile(double s) {
    return 4.0 * (1.0 - s / 0.41) * (s / 0.41);
}

/// Assemble the Robin boundary operators over a control segment with alpha=1
/// (scale by 1/alpha when simulating): Abc is the trace Gram matrix of the
/// velocity basis on the segment, Bbc tests the basis against the per-shape
/// actuation directions n_l * g_l.
inline std::pair<SparseMatrix, SparseMatrix> assemble_robin_boundary(
    const CavityMesh& mesh, const DofMap& dm, const BoundarySegment& seg,
    const std::vector<std::function<double(double)>>& shapes,
    const std::vector<std::array<double, 2>>& normal_dirs) {
    require(shapes.size() == normal_dirs.size(), "assemble_robin_boundary: shapes/normals size mismatch");
    require(seg.lo < seg.hi && seg.lo >= 0.0 && seg.hi <= 1.0,
            "assemble_robin_boundary: segment must lie on the boundary");
    const index_t N = mesh.N;
    const double h = mesh.h();
    {
        const double s0 = seg.lo * N, s1 = seg.hi * N;
        require(std::abs(s0 - std::round(s0)) < 1e-9 && std::abs(s1 - std::round(s1)) < 1e-9,
                "assemble_robin_boundary: segment must align with mesh cell edges");
    }
    const index_t c0 = static_cast<index_t>(std::llround(seg.lo * N));
    const index_t c1 = static_cast<index_t>(std::llround(seg.hi * N));

    // the three trace nodes of the boundary edge of cell index c along the side
    auto edge_nodes = [&](index_t c) -> std::array<index_t, 3> {
        switch (seg.side) {
            case Side::Bottom: return {mesh.fine_node(2 * c, 0), mesh.fine_node(2 * c + 1, 0), mesh.fine_node(2 * c + 2, 0)};
            case Side::Top: return {mesh.fine_node(2 * c, 2 * N), mesh.fine_node(2 * c + 1, 2 * N), mesh.fine_node(2 * c + 2, 2 * N)};
            case Side::Left: return {mesh.fine_node(0, 2 * c), mesh.fine_node(0, 2 * c + 1), mesh.fine_node(0, 2 * c + 2)};
            case Side::Right: return {mesh.fine_node(2 * N, 2 * c), mesh.fine_node(2 * N, 2 * c + 1), mesh.fine_node(2 * N, 2 * c + 2)};
        }
        return {};
    };

    const index_t n_shapes = static_cast<index_t>(shapes.size());
    CooBuilder acoo(dm.n_full, dm.n_full);
    CooBuilder bcoo(dm.n_full, n_shapes);
    const auto& rule = segment_rule_gauss3();
    const double seg_len = seg.hi - seg.lo;

    for (index_t c = c0; c < c1; ++c) {
        const auto nodes = edge_nodes(c);
        double a_loc[3][3] = {};
        std::vector<std::array<double, 3>> b_loc(shapes.size(), {0.0, 0.0, 0.0});
        for (const auto& qp : rule) {
            const double w = qp.weight * h;
            const double t = qp.t;
            // quadratic traces of the P2 basis along the edge
            const std::array<double, 3> tr = {(1.0 - t) * (1.0 - 2.0 * t), 4.0 * t * (1.0 - t), t * (2.0 * t - 1.0)};
            for (int i = 0; i < 3; ++i)
                for (int j = 0; j < 3; ++j) a_loc[i][j] += w * tr[i] * tr[j];
            const double arc = (static_cast<double>(c) + t) * h;     // position along the side
            const double s = (arc - seg.lo) / seg_len;               // segment parameter in [0,1]
            for (std::size_t l = 0; l < shapes.size(); ++l) {
                const double gl = shapes[l](s);
                for (int i = 0; i < 3; ++i) b_loc[l][i] += w * tr[i] * gl;
            }
        }
        for (int i = 0; i < 3; ++i) {
            for (int j = 0; j < 3; ++j)
                for (index_t comp = 0; comp < 2; ++comp)
                    acoo.add(DofMap::dof_of(nodes[i], comp), DofMap::dof_of(nodes[j], comp), a_loc[i][j]);
            for (std::size_t l = 0; l < shapes.size(); ++l)
                for (index_t comp = 0; comp < 2; ++comp)
                    bcoo.add(DofMap::dof_of(nodes[i], comp), static_cast<index_t>(l),
                             b_loc[l][i] * normal_dirs[l][comp]);
        }
    }
    return {acoo.finalize(), bcoo.finalize()};
}

} // namespace nsops
