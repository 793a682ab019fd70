#pragma once

#include <memory>
#include <utility>

#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

#include "nsops/sparse.hpp"
#include "nsops/types.hpp"

namespace nsops {

/// Direct factorization of the block matrix [[S, -J^T], [J, 0]] for a square S
/// and an m x n divergence block J (m may be zero). Factor once, solve many.
///
/// solve() guarantees ||block*x - rhs||_2 <= 1e-9*(1 + ||rhs||_2) on well-posed
/// systems and throws otherwise.
class SaddleFactorization {
public:
    /// jt_scale scales the gradient block: the assembled matrix is
    /// [[S, -jt_scale*J^T], [J, 0]].
    SaddleFactorization(const SparseMatrix& S, const SparseMatrix& J, double jt_scale = 1.0)
        : n_(S.nrows), m_(J.nrows) {
        require(S.nrows == S.ncols, "factor_saddle: S must be square");
        require(J.ncols == S.nrows, "factor_saddle: J column count must match S");
        const index_t dim = n_ + m_;
        std::vector<Eigen::Triplet<double>> trip;
        trip.reserve(S.values.size() + 2 * J.values.size());
        for (index_t i = 0; i < S.nrows; ++i)
            for (index_t k = S.row_ptr[i]; k < S.row_ptr[i + 1]; ++k)
                trip.emplace_back(i, S.col_idx[k], S.values[k]);
        for (index_t r = 0; r < J.nrows; ++r)
            for (index_t k = J.row_ptr[r]; k < J.row_ptr[r + 1]; ++k) {
                trip.emplace_back(J.col_idx[k], n_ + r, -jt_scale * J.values[k]); // -J^T
                trip.emplace_back(n_ + r, J.col_idx[k], J.values[k]);             // J
            }
        block_.resize(dim, dim);
        block_.setFromTriplets(trip.begin(), trip.end());
        block_.makeCompressed();
        lu_ = std::make_unique<Eigen::SparseLU<Eigen::SparseMatrix<double>>>();
        lu_->analyzePattern(block_);
        lu_->factorize(block_);
        if (lu_->info() != Eigen::Success)
            throw std::runtime_error("factor_saddle: singular block matrix: " + lu_->lastErrorMessage());
    }

    index_t velocity_dim() const { return n_; }
    index_t pressure_dim() const { return m_; }

    /// Solve [[S, -J^T],[J, 0]] [v; p] = [rv; rp].
    std::pair<Vector, Vector> solve(const Vector& rv, const Vector& rp) const {
        require(static_cast<index_t>(rv.size()) == n_, "solve_saddle: rv dimension mismatch");
        require(static_cast<index_t>(rp.size()) == m_, "solve_saddle: rp dimension mismatch");
        const index_t dim = n_ + m_;
        Eigen::VectorXd rhs(dim);
        for (index_t i = 0; i < n_; ++i) rhs[i] = rv[i];
        for (index_t i = 0; i < m_; ++i) rhs[n_ + i] = rp[i];

        Eigen::VectorXd x = lu_->solve(rhs);
        if (lu_->info() != Eigen::Success)
            throw std::runtime_error("solve_saddle: numerically singular factorization");

        const double rhs_norm = rhs.norm();
        double res = (block_ * x - rhs).norm();
        if (res > tol_ * (1.0 + rhs_norm)) {
            // one step of iterative refinement before giving up
            Eigen::VectorXd dx = lu_->solve(rhs - block_ * x);
            x += dx;
            res = (block_ * x - rhs).norm();
            if (res > tol_ * (1.0 + rhs_norm))
                throw std::runtime_error("solve_saddle: residual bound violated (numerically singular system)");
        }

        Vector v(n_), p(m_);
        for (index_t i = 0; i < n_; ++i) v[i] = x[i];
        for (index_t i = 0; i < m_; ++i) p[i] = x[n_ + i];
        return {std::move(v), std::move(p)};
    }

private:
    index_t n_, m_;
    Eigen::SparseMatrix<double> block_;
    std::unique_ptr<Eigen::SparseLU<Eigen::SparseMatrix<double>>> lu_;
    static constexpr double tol_ = 1e-9;
};

inline SaddleFactorization factor_saddle(const SparseMatrix& S, const SparseMatrix& J) {
    return SaddleFactorization(S, J);
}

inline std::pair<Vector, Vector> solve_saddle(const SaddleFactorization& F, const Vector& rv, const Vector& rp) {
    return F.solve(rv, rp);
}

} // namespace nsops
