#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "lossykf/errors.hpp"

namespace lossykf::linalg {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Relative tolerance for positive-semidefiniteness tests. The effective
/// absolute slack is rel_tol * (1 + max |eigenvalue|), so verdicts are
/// scale-free across randomly generated systems.
struct PsdTolerance {
  double rel_tol = 1e-9;
};

namespace detail {

inline void check_tolerance(const PsdTolerance& tol) {
  if (!(tol.rel_tol > 0.0)) {
    throw DomainError("PsdTolerance.rel_tol must be > 0");
  }
}

inline std::string shape_string(const MatrixXd& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

inline void require_square(const MatrixXd& m, const char* op) {
  if (m.rows() != m.cols() || m.rows() == 0) {
    throw DimensionError(std::string(op) + ": expected a nonempty square matrix, got " +
                         shape_string(m));
  }
}

}  // namespace detail

/// (M + M^T) / 2.
inline MatrixXd symmetrize(const MatrixXd& m) {
  detail::require_square(m, "symmetrize");
  return 0.5 * (m + m.transpose());
}

/// Eigenvalues of the symmetric part of m, ascending.
inline VectorXd symmetric_eigenvalues(const MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(symmetrize(m), Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) {
    throw NumericError("symmetric eigendecomposition failed");
  }
  return es.eigenvalues();
}

/// True iff the symmetric part of m has min eigenvalue >= -rel_tol * (1 + max|eig|).
inline bool is_psd(const MatrixXd& m, PsdTolerance tol = {}) {
  detail::check_tolerance(tol);
  detail::require_square(m, "is_psd");
  if (!m.allFinite()) {
    throw NumericError("is_psd: matrix has non-finite entries");
  }
  const VectorXd evs = symmetric_eigenvalues(m);
  const double max_abs = evs.cwiseAbs().maxCoeff();
  return evs.minCoeff() >= -tol.rel_tol * (1.0 + max_abs);
}

/// Symmetric positive-semidefinite matrix. Construction symmetrizes the
/// input and rejects matrices whose min eigenvalue falls below the scaled
/// tolerance, so a held CovMatrix is always exactly symmetric and PSD
/// within tolerance.
class CovMatrix {
 public:
  CovMatrix() = default;

  explicit CovMatrix(MatrixXd m, PsdTolerance tol = {}) : mat_(symmetrize(m)) {
    if (!mat_.allFinite()) {
      throw NumericError("covariance matrix has non-finite entries");
    }
    const VectorXd evs = symmetric_eigenvalues(mat_);
    const double max_abs = evs.cwiseAbs().maxCoeff();
    detail::check_tolerance(tol);
    if (evs.minCoeff() < -tol.rel_tol * (1.0 + max_abs)) {
      throw NumericError("covariance matrix is not positive semidefinite (min eigenvalue " +
                         std::to_string(evs.minCoeff()) + ")");
    }
  }

  static CovMatrix zero(int n) { return CovMatrix(MatrixXd::Zero(n, n)); }
  static CovMatrix identity(int n) { return CovMatrix(MatrixXd::Identity(n, n)); }

  const MatrixXd& matrix() const { return mat_; }
  int dim() const { return static_cast<int>(mat_.rows()); }
  double trace() const { return mat_.trace(); }
  double operator()(int i, int j) const { return mat_(i, j); }

 private:
  MatrixXd mat_;
};

/// X <= Y in the Loewner order: Y - X is PSD within tolerance.
inline bool loewner_leq(const MatrixXd& x, const MatrixXd& y, PsdTolerance tol = {}) {
  if (x.rows() != y.rows() || x.cols() != y.cols()) {
    throw DimensionError("loewner_leq: dimension mismatch (" + detail::shape_string(x) +
                         " vs " + detail::shape_string(y) + ")");
  }
  return is_psd(y - x, tol);
}

inline bool loewner_leq(const CovMatrix& x, const CovMatrix& y, PsdTolerance tol = {}) {
  return loewner_leq(x.matrix(), y.matrix(), tol);
}

/// Vertical stacking of blocks sharing a column count.
inline MatrixXd blkcol(const std::vector<MatrixXd>& blocks) {
  if (blocks.empty()) {
    throw DimensionError("blkcol: empty block list");
  }
  const Eigen::Index cols = blocks.front().cols();
  Eigen::Index rows = 0;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    if (blocks[i].cols() != cols) {
      throw DimensionError("blkcol: block " + std::to_string(i) + " has " +
                           std::to_string(blocks[i].cols()) + " columns, expected " +
                           std::to_string(cols));
    }
    rows += blocks[i].rows();
  }
  MatrixXd out(rows, cols);
  Eigen::Index at = 0;
  for (const MatrixXd& b : blocks) {
    out.middleRows(at, b.rows()) = b;
    at += b.rows();
  }
  return out;
}

/// Block-diagonal assembly of square blocks.
inline MatrixXd blkdiag(const std::vector<MatrixXd>& blocks) {
  if (blocks.empty()) {
    throw DimensionError("blkdiag: empty block list");
  }
  Eigen::Index n = 0;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    if (blocks[i].rows() != blocks[i].cols()) {
      throw DimensionError("blkdiag: block " + std::to_string(i) + " is not square (" +
                           detail::shape_string(blocks[i]) + ")");
    }
    n += blocks[i].rows();
  }
  MatrixXd out = MatrixXd::Zero(n, n);
  Eigen::Index at = 0;
  for (const MatrixXd& b : blocks) {
    out.block(at, at, b.rows(), b.rows()) = b;
    at += b.rows();
  }
  return out;
}

/// Symmetric square root of a PSD matrix via eigendecomposition; tiny
/// negative eigenvalue ripple is clamped to zero.
inline MatrixXd psd_sqrt(const MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(symmetrize(m));
  if (es.info() != Eigen::Success) {
    throw NumericError("psd_sqrt: eigendecomposition failed");
  }
  VectorXd d = es.eigenvalues();
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    d[i] = d[i] > 0.0 ? std::sqrt(d[i]) : 0.0;
  }
  return es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace lossykf::linalg
