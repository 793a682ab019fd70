#pragma once

#include <algorithm>
#include <tuple>

#include "nsops/sparse.hpp"
#include "nsops/types.hpp"

namespace nsops {

/// Sparse unfolded convection tensor over an n-dimensional velocity space.
/// Entry (i, j, k, value) sits in row i and Kronecker column j*n + k, so that
/// apply_kron(H, v, w) realizes H*(v (x) w) with v indexed by j and w by k.
struct ConvTensor {
    struct Entry {
        index_t i, j, k;
        double value;
    };

    index_t n = 0;
    std::vector<Entry> entries; // sorted by (i, j, k), deduplicated

    index_t nnz() const { return static_cast<index_t>(entries.size()); }
};

/// Accumulates raw tensor contributions; finalize() sorts by (i, j, k, value),
/// sums duplicates in that order and drops exact zeros.
class ConvTensorBuilder {
public:
    explicit ConvTensorBuilder(index_t n) : n_(n) { require(n >= 0, "ConvTensorBuilder: negative dimension"); }

    void add(index_t i, index_t j, index_t k, double value) {
        require(i >= 0 && i < n_ && j >= 0 && j < n_ && k >= 0 && k < n_,
                "ConvTensorBuilder::add: index out of range");
        raw_.push_back({i, j, k, value});
    }

    void reserve(std::size_t n) { raw_.reserve(n); }

    ConvTensor finalize() const {
        std::vector<ConvTensor::Entry> t = raw_;
        std::sort(t.begin(), t.end(), [](const ConvTensor::Entry& a, const ConvTensor::Entry& b) {
            return std::tie(a.i, a.j, a.k, a.value) < std::tie(b.i, b.j, b.k, b.value);
        });
        ConvTensor H;
        H.n = n_;
        H.entries.reserve(t.size());
        std::size_t pos = 0;
        while (pos < t.size()) {
            const index_t i = t[pos].i, j = t[pos].j, k = t[pos].k;
            double s = 0.0;
            while (pos < t.size() && t[pos].i == i && t[pos].j == j && t[pos].k == k) {
                s += t[pos].value;
                ++pos;
            }
            if (s != 0.0) H.entries.push_back({i, j, k, s});
        }
        return H;
    }

private:
    index_t n_;
    std::vector<ConvTensor::Entry> raw_;
};

/// out[i] = sum_entries value * v[j] * w[k]; the Kronecker vector v (x) w is
/// never materialized.
inline Vector apply_kron(const ConvTensor& H, const Vector& v, const Vector& w) {
    require(static_cast<index_t>(v.size()) == H.n && static_cast<index_t>(w.size()) == H.n,
            "apply_kron: dimension mismatch");
    Vector out(H.n, 0.0);
    for (const auto& e : H.entries) out[e.i] += e.value * v[e.j] * w[e.k];
    return out;
}

/// H1 with H1[i,k] = sum_j value(i,j,k)*a[j]; spmv(H1, v) == apply_kron(H, a, v).
inline SparseMatrix linearize_left(const ConvTensor& H, const Vector& a) {
    require(static_cast<index_t>(a.size()) == H.n, "linearize_left: dimension mismatch");
    CooBuilder coo(H.n, H.n);
    coo.reserve(H.entries.size());
    for (const auto& e : H.entries) coo.add(e.i, e.k, e.value * a[e.j]);
    return coo.finalize();
}

/// H2 with H2[i,j] = sum_k value(i,j,k)*a[k]; spmv(H2, v) == apply_kron(H, v, a).
inline SparseMatrix linearize_right(const ConvTensor& H, const Vector& a) {
    require(static_cast<index_t>(a.size()) == H.n, "linearize_right: dimension mismatch");
    CooBuilder coo(H.n, H.n);
    coo.reserve(H.entries.size());
    for (const auto& e : H.entries) coo.add(e.i, e.j, e.value * a[e.k]);
    return coo.finalize();
}

} // namespace nsops
