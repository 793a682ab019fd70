#pragma once

#include <array>
#include <cmath>

#include "nsops/types.hpp"

namespace nsops {

enum class BoundaryTag { Interior, Lid, Wall };

enum class Side { Bottom, Right, Top, Left };

/// Axis-aligned arc on the boundary of the unit square. The interval [lo, hi]
/// is measured in the side's running coordinate (x0 for Bottom/Top, x1 for
/// Left/Right) and must align with mesh cell edges.
struct BoundarySegment {
    Side side;
    double lo, hi;
};

/// Structured P2/P1 (Taylor-Hood) triangulation of the unit square.
/// Each of the N*N cells is split along the diagonal from its lower-left to
/// its upper-right corner; triangles are counterclockwise.
struct CavityMesh {
    struct Triangle {
        std::array<index_t, 3> p1;     // P1 vertex indices, CCW
        std::array<index_t, 6> p2;     // P2 nodes: 3 vertices + mid(0,1), mid(1,2), mid(2,0)
    };

    index_t N = 0;
    std::vector<std::array<double, 2>> p1_coords; // (N+1)^2 vertices
    std::vector<std::array<double, 2>> p2_coords; // (2N+1)^2 nodes
    std::vector<Triangle> triangles;              // 2 N^2
    std::vector<BoundaryTag> boundary_tag;        // per P2 node

    index_t n_p1() const { return static_cast<index_t>(p1_coords.size()); }
    index_t n_p2() const { return static_cast<index_t>(p2_coords.size()); }
    double h() const { return 1.0 / static_cast<double>(N); }

    index_t fine_node(index_t ix, index_t iy) const { return iy * (2 * N + 1) + ix; }
    index_t vertex(index_t vx, index_t vy) const { return vy * (N + 1) + vx; }
};

inline CavityMesh build_cavity_mesh(index_t N) {
    require(N >= 2, "build_cavity_mesh: N must be >= 2");
    CavityMesh mesh;
    mesh.N = N;
    const index_t f = 2 * N + 1;
    const double hh = 0.5 / static_cast<double>(N);

    mesh.p1_coords.reserve(static_cast<std::size_t>(N + 1) * (N + 1));
    for (index_t vy = 0; vy <= N; ++vy)
        for (index_t vx = 0; vx <= N; ++vx)
            mesh.p1_coords.push_back({static_cast<double>(vx) / N, static_cast<double>(vy) / N});

    mesh.p2_coords.reserve(static_cast<std::size_t>(f) * f);
    mesh.boundary_tag.reserve(static_cast<std::size_t>(f) * f);
    for (index_t iy = 0; iy < f; ++iy)
        for (index_t ix = 0; ix < f; ++ix) {
            mesh.p2_coords.push_back({ix * hh, iy * hh});
            BoundaryTag tag = BoundaryTag::Interior;
            if (iy == 2 * N)
                tag = BoundaryTag::Lid;
            else if (ix == 0 || ix == 2 * N || iy == 0)
                tag = BoundaryTag::Wall;
            mesh.boundary_tag.push_back(tag);
        }

    mesh.triangles.reserve(static_cast<std::size_t>(2) * N * N);
    for (index_t cy = 0; cy < N; ++cy)
        for (index_t cx = 0; cx < N; ++cx) {
            const index_t x0 = 2 * cx, y0 = 2 * cy;
            const index_t ll = mesh.vertex(cx, cy), lr = mesh.vertex(cx + 1, cy);
            const index_t ul = mesh.vertex(cx, cy + 1), ur = mesh.vertex(cx + 1, cy + 1);
            // lower triangle (LL, LR, UR)
            mesh.triangles.push_back({{ll, lr, ur},
                                      {mesh.fine_node(x0, y0), mesh.fine_node(x0 + 2, y0), mesh.fine_node(x0 + 2, y0 + 2),
                                       mesh.fine_node(x0 + 1, y0), mesh.fine_node(x0 + 2, y0 + 1), mesh.fine_node(x0 + 1, y0 + 1)}});
            // upper triangle (LL, UR, UL)
            mesh.triangles.push_back({{ll, ur, ul},
                                      {mesh.fine_node(x0, y0), mesh.fine_node(x0 + 2, y0 + 2), mesh.fine_node(x0, y0 + 2),
                                       mesh.fine_node(x0 + 1, y0 + 1), mesh.fine_node(x0 + 1, y0 + 2), mesh.fine_node(x0, y0 + 1)}});
        }
    return mesh;
}

/// Velocity/pressure DOF model. Velocity DOFs interleave components:
/// dof = 2*node + component. gamma_idx holds the Dirichlet-prescribed DOFs,
/// inner_idx everything that is solved for (including Robin nodes, if any).
struct DofMap {
    index_t n_full = 0; // 2*(2N+1)^2
    index_t m = 0;      // (N+1)^2
    std::vector<index_t> inner_idx;    // sorted
    std::vector<index_t> gamma_idx;    // sorted
    std::vector<index_t> full_to_inner; // length n_full, -1 on gamma DOFs
    std::vector<bool> robin_node;       // per P2 node

    static index_t dof_of(index_t node, index_t component) { return 2 * node + component; }

    index_t nv() const { return static_cast<index_t>(inner_idx.size()); }

    bool is_inner(index_t dof) const { return full_to_inner[dof] >= 0; }

    Vector restrict_inner(const Vector& full) const {
        require(static_cast<index_t>(full.size()) == n_full, "restrict_inner: dimension mismatch");
        Vector out(inner_idx.size());
        for (std::size_t i = 0; i < inner_idx.size(); ++i) out[i] = full[inner_idx[i]];
        return out;
    }

    /// Scatter an inner vector into a full-length vector (gamma entries zero).
    Vector embed_inner(const Vector& inner) const {
        require(inner.size() == inner_idx.size(), "embed_inner: dimension mismatch");
        Vector out(n_full, 0.0);
        for (std::size_t i = 0; i < inner_idx.size(); ++i) out[inner_idx[i]] = inner[i];
        return out;
    }
};

namespace detail {

inline bool node_on_segment(const CavityMesh& mesh, index_t node, const BoundarySegment& seg) {
    const double x = mesh.p2_coords[node][0];
    const double y = mesh.p2_coords[node][1];
    const double eps = 1e-12;
    switch (seg.side) {
        case Side::Bottom: return std::abs(y) < eps && x > seg.lo + eps && x < seg.hi - eps;
        case Side::Top: return std::abs(y - 1.0) < eps && x > seg.lo + eps && x < seg.hi - eps;
        case Side::Left: return std::abs(x) < eps && y > seg.lo + eps && y < seg.hi - eps;
        case Side::Right: return std::abs(x - 1.0) < eps && y > seg.lo + eps && y < seg.hi - eps;
    }
    return false;
}

} // namespace detail

/// Nodes strictly inside a Robin segment are treated as unknowns: they leave
/// the Dirichlet set and join the inner DOFs. Segment endpoints stay Dirichlet.
inline DofMap build_dofmap(const CavityMesh& mesh, const std::vector<BoundarySegment>& robin_segments = {}) {
    DofMap dm;
    dm.n_full = 2 * mesh.n_p2();
    dm.m = mesh.n_p1();
    dm.robin_node.assign(mesh.n_p2(), false);
    for (const auto& seg : robin_segments) {
        require(seg.lo < seg.hi && seg.lo >= 0.0 && seg.hi <= 1.0, "build_dofmap: bad Robin segment interval");
        const double steps = seg.lo * mesh.N;
        const double steps2 = seg.hi * mesh.N;
        require(std::abs(steps - std::round(steps)) < 1e-9 && std::abs(steps2 - std::round(steps2)) < 1e-9,
                "build_dofmap: Robin segment must align with mesh cell edges");
        for (index_t node = 0; node < mesh.n_p2(); ++node)
            if (mesh.boundary_tag[node] != BoundaryTag::Interior && detail::node_on_segment(mesh, node, seg))
                dm.robin_node[node] = true;
    }
    dm.full_to_inner.assign(dm.n_full, -1);
    for (index_t node = 0; node < mesh.n_p2(); ++node) {
        const bool dirichlet = mesh.boundary_tag[node] != BoundaryTag::Interior && !dm.robin_node[node];
        for (index_t c = 0; c < 2; ++c) {
            const index_t dof = DofMap::dof_of(node, c);
            if (dirichlet)
                dm.gamma_idx.push_back(dof);
            else
                dm.inner_idx.push_back(dof);
        }
    }
    for (std::size_t i = 0; i < dm.inner_idx.size(); ++i) dm.full_to_inner[dm.inner_idx[i]] = static_cast<index_t>(i);
    return dm;
}

/// The lifting vector for the non-regularized cavity: x0-velocity 1 on the
/// lid, 0 elsewhere. The two top corners belong to the walls and stay 0.
inline Vector lid_boundary_values(const CavityMesh& mesh, const DofMap& dm) {
    Vector v(dm.n_full, 0.0);
    for (index_t node = 0; node < mesh.n_p2(); ++node) {
        if (mesh.boundary_tag[node] != BoundaryTag::Lid) continue;
        const double x = mesh.p2_coords[node][0];
        if (x <= 0.0 || x >= 1.0) continue; // corners keep the wall value
        if (dm.robin_node[node]) continue;
        v[DofMap::dof_of(node, 0)] = 1.0;
    }
    return v;
}

} // namespace nsops
