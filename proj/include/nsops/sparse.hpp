#pragma once

#include <algorithm>
#include <tuple>

#include "nsops/types.hpp"

namespace nsops {

/// Compressed-sparse-row real matrix. Immutable once built (use CooBuilder).
///
/// Invariants: row_ptr nondecreasing with nrows+1 entries; column indices
/// strictly increasing within each row; no explicit zeros after finalization.
struct SparseMatrix {
    index_t nrows = 0;
    index_t ncols = 0;
    std::vector<index_t> row_ptr;
    std::vector<index_t> col_idx;
    Vector values;

    SparseMatrix() : row_ptr(1, 0) {}
    SparseMatrix(index_t r, index_t c) : nrows(r), ncols(c), row_ptr(static_cast<std::size_t>(r) + 1, 0) {}

    index_t nnz() const { return static_cast<index_t>(values.size()); }

    static SparseMatrix identity(index_t n) {
        SparseMatrix m(n, n);
        m.row_ptr.resize(static_cast<std::size_t>(n) + 1);
        for (index_t i = 0; i <= n; ++i) m.row_ptr[i] = i;
        m.col_idx.resize(n);
        for (index_t i = 0; i < n; ++i) m.col_idx[i] = i;
        m.values.assign(n, 1.0);
        return m;
    }

    double coeff(index_t i, index_t j) const {
        for (index_t k = row_ptr[i]; k < row_ptr[i + 1]; ++k)
            if (col_idx[k] == j) return values[k];
        return 0.0;
    }
};

/// y = A*x
inline Vector spmv(const SparseMatrix& A, const Vector& x) {
    require(static_cast<index_t>(x.size()) == A.ncols, "spmv: dimension mismatch");
    Vector y(A.nrows, 0.0);
    for (index_t i = 0; i < A.nrows; ++i) {
        double s = 0.0;
        for (index_t k = A.row_ptr[i]; k < A.row_ptr[i + 1]; ++k)
            s += A.values[k] * x[A.col_idx[k]];
        y[i] = s;
    }
    return y;
}

/// y = A^T*x without forming the transpose
inline Vector spmv_transpose(const SparseMatrix& A, const Vector& x) {
    require(static_cast<index_t>(x.size()) == A.nrows, "spmv_transpose: dimension mismatch");
    Vector y(A.ncols, 0.0);
    for (index_t i = 0; i < A.nrows; ++i)
        for (index_t k = A.row_ptr[i]; k < A.row_ptr[i + 1]; ++k)
            y[A.col_idx[k]] += A.values[k] * x[i];
    return y;
}

/// Triplet accumulator. finalize() sums duplicates in a deterministic order
/// (sorted by row, column, value) so that the result does not depend on
/// insertion order, and drops entries that sum to exactly zero.
class CooBuilder {
public:
    CooBuilder(index_t nrows, index_t ncols) : nrows_(nrows), ncols_(ncols) {
        require(nrows >= 0 && ncols >= 0, "CooBuilder: negative dimension");
    }

    void add(index_t row, index_t col, double value) {
        require(row >= 0 && row < nrows_ && col >= 0 && col < ncols_, "CooBuilder::add: index out of range");
        triplets_.push_back({row, col, value});
    }

    void reserve(std::size_t n) { triplets_.reserve(n); }

    index_t rows() const { return nrows_; }
    index_t cols() const { return ncols_; }

    SparseMatrix finalize() const {
        std::vector<Entry> t = triplets_;
        std::sort(t.begin(), t.end(), [](const Entry& a, const Entry& b) {
            return std::tie(a.row, a.col, a.value) < std::tie(b.row, b.col, b.value);
        });
        SparseMatrix m(nrows_, ncols_);
        m.col_idx.reserve(t.size());
        m.values.reserve(t.size());
        std::size_t pos = 0;
        for (index_t i = 0; i < nrows_; ++i) {
            while (pos < t.size() && t[pos].row == i) {
                const index_t j = t[pos].col;
                double s = 0.0;
                while (pos < t.size() && t[pos].row == i && t[pos].col == j) {
                    s += t[pos].value;
                    ++pos;
                }
                if (s != 0.0) {
                    m.col_idx.push_back(j);
                    m.values.push_back(s);
                }
            }
            m.row_ptr[i + 1] = static_cast<index_t>(m.col_idx.size());
        }
        return m;
    }

private:
    struct Entry {
        index_t row, col;
        double value;
    };
    index_t nrows_, ncols_;
    std::vector<Entry> triplets_;
};

/// alpha*A + beta*B entrywise
inline SparseMatrix add_scaled(const SparseMatrix& A, double alpha, const SparseMatrix& B, double beta) {
    require(A.nrows == B.nrows && A.ncols == B.ncols, "add_scaled: shape mismatch");
    CooBuilder coo(A.nrows, A.ncols);
    coo.reserve(A.values.size() + B.values.size());
    for (index_t i = 0; i < A.nrows; ++i)
        for (index_t k = A.row_ptr[i]; k < A.row_ptr[i + 1]; ++k)
            coo.add(i, A.col_idx[k], alpha * A.values[k]);
    for (index_t i = 0; i < B.nrows; ++i)
        for (index_t k = B.row_ptr[i]; k < B.row_ptr[i + 1]; ++k)
            coo.add(i, B.col_idx[k], beta * B.values[k]);
    return coo.finalize();
}

inline SparseMatrix scaled(const SparseMatrix& A, double alpha) {
    SparseMatrix m = A;
    for (double& v : m.values) v *= alpha;
    return m;
}

} // namespace nsops
