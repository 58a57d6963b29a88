#pragma once

#include <Eigen/Dense>

#include <string>
#include <utility>
#include <vector>

#include "lossykf/errors.hpp"
#include "lossykf/filter.hpp"
#include "lossykf/linalg.hpp"
#include "lossykf/model.hpp"

namespace lossykf::expectation {

using linalg::CovMatrix;
using linalg::MatrixXd;
using linalg::VectorXd;

/// Probability of outcome omega under independent per-sensor arrivals:
/// prod_{j in omega} lambda_j * prod_{j not in omega} (1 - lambda_j).
/// Returns the true probability for every subset including the empty one;
/// the zero-weighting of the empty set happens inside expected_next_cov.
inline double subset_weight(const std::vector<double>& lambda,
                            const model::SensorSubset& omega) {
  const int n = static_cast<int>(lambda.size());
  for (double l : lambda) {
    if (!(l >= 0.0 && l <= 1.0)) {
      throw DomainError("arrival probability " + std::to_string(l) + " outside [0, 1]");
    }
  }
  if (!omega.empty() && omega.indices().back() >= n) {
    throw DimensionError("subset " + omega.to_string() + " references a sensor beyond " +
                         std::to_string(n));
  }
  double w = 1.0;
  for (int j = 0; j < n; ++j) {
    w *= omega.contains(j) ? lambda[j] : (1.0 - lambda[j]);
  }
  return w;
}

/// E[P_{k+1} | P_k] over the power set of received subsets:
///   A P A^T + Q - sum_{omega != empty} alpha_omega K_omega F_omega P A^T.
/// The empty subset contributes no correction; its probability mass is
/// carried by the A P A^T + Q term.
inline CovMatrix expected_next_cov(const CovMatrix& p, const model::Scenario& scenario,
                                   const std::vector<double>& lambda) {
  const int n_sensors = scenario.sensor_count();
  if (static_cast<int>(lambda.size()) != n_sensors) {
    throw DimensionError("lambda has " + std::to_string(lambda.size()) + " entries for " +
                         std::to_string(n_sensors) + " sensors");
  }
  const model::LinearSystem& sys = scenario.system();
  if (p.dim() != sys.state_dim()) {
    throw DimensionError("covariance dimension does not match state dimension");
  }
  MatrixXd expected =
      sys.A() * p.matrix() * sys.A().transpose() + sys.Q().matrix();
  for (const model::SensorSubset& omega : model::enumerate_subsets(n_sensors)) {
    if (omega.empty()) continue;
    const double alpha = subset_weight(lambda, omega);
    if (alpha == 0.0) continue;
    const auto [f, g] = model::stack_subset(scenario.sensors(), omega);
    const MatrixXd innovation = linalg::symmetrize(f * p.matrix() * f.transpose() + g);
    Eigen::LLT<MatrixXd> llt(innovation);
    if (llt.info() != Eigen::Success) {
      throw NumericError("innovation covariance not positive definite for subset " +
                         omega.to_string());
    }
    const MatrixXd fpat = f * p.matrix() * sys.A().transpose();
    expected.noalias() -= alpha * (llt.solve(fpat).transpose() * fpat);
  }
  return CovMatrix(std::move(expected));
}

enum class SignVerdict { positive_semidefinite, negative_semidefinite, indefinite, zero };

inline const char* to_string(SignVerdict v) {
  switch (v) {
    case SignVerdict::positive_semidefinite: return "PSD";
    case SignVerdict::negative_semidefinite: return "NSD";
    case SignVerdict::indefinite: return "indefinite";
    case SignVerdict::zero: return "zero";
  }
  return "?";
}

/// Eigenvalue-sign classification with the usual scaled tolerance.
inline SignVerdict classify_sign(const MatrixXd& m, linalg::PsdTolerance tol = {}) {
  const VectorXd evs = linalg::symmetric_eigenvalues(m);
  const double max_abs = evs.cwiseAbs().maxCoeff();
  const double band = tol.rel_tol * (1.0 + max_abs);
  const double lo = evs.minCoeff();
  const double hi = evs.maxCoeff();
  if (lo >= -band && hi <= band) return SignVerdict::zero;
  if (lo >= -band) return SignVerdict::positive_semidefinite;
  if (hi <= band) return SignVerdict::negative_semidefinite;
  return SignVerdict::indefinite;
}

/// Closed-form pieces of the two-sensor one-step expectation, for a shared
/// observation matrix C and noise covariances R1, R2:
///   T  = C P C^T
///   S  = A P A^T + Q
///   M0 = A P [C;C]^T [[T+R1, T], [T, T+R2]]^-1 [C;C] P A^T   (joint)
///   M1 = A P C^T (T + R1)^-1 C P A^T                          (sensor 1 alone)
///   M2 = A P C^T (T + R2)^-1 C P A^T                          (sensor 2 alone)
struct TwoSensorTerms {
  MatrixXd S;
  MatrixXd M0;
  MatrixXd M1;
  MatrixXd M2;
  MatrixXd T;
  int measurement_dim = 0;
};

inline TwoSensorTerms two_sensor_terms(const CovMatrix& p, const model::LinearSystem& system,
                                       const MatrixXd& c, const CovMatrix& r1,
                                       const CovMatrix& r2) {
  const int n = system.state_dim();
  const int m = static_cast<int>(c.rows());
  if (c.cols() != n) {
    throw DimensionError("C has " + std::to_string(c.cols()) + " columns, expected " +
                         std::to_string(n));
  }
  if (p.dim() != n || r1.dim() != m || r2.dim() != m) {
    throw DimensionError("two_sensor_terms: inconsistent dimensions");
  }

  TwoSensorTerms t;
  t.measurement_dim = m;
  t.T = linalg::symmetrize(c * p.matrix() * c.transpose());
  t.S = linalg::symmetrize(system.A() * p.matrix() * system.A().transpose() +
                           system.Q().matrix());

  const MatrixXd b = c * p.matrix() * system.A().transpose();  // m x n

  auto correction = [&](const CovMatrix& r) {
    const MatrixXd innovation = linalg::symmetrize(t.T + r.matrix());
    Eigen::LLT<MatrixXd> llt(innovation);
    if (llt.info() != Eigen::Success) {
      throw NumericError("two_sensor_terms: singular single-sensor innovation block");
    }
    return linalg::symmetrize(b.transpose() * llt.solve(b));
  };
  t.M1 = correction(r1);
  t.M2 = correction(r2);

  MatrixXd joint(2 * m, 2 * m);
  joint.topLeftCorner(m, m) = t.T + r1.matrix();
  joint.topRightCorner(m, m) = t.T;
  joint.bottomLeftCorner(m, m) = t.T;
  joint.bottomRightCorner(m, m) = t.T + r2.matrix();
  Eigen::LLT<MatrixXd> llt(linalg::symmetrize(joint));
  if (llt.info() != Eigen::Success) {
    throw NumericError("two_sensor_terms: singular joint innovation block");
  }
  MatrixXd stacked(2 * m, n);
  stacked.topRows(m) = b;
  stacked.bottomRows(m) = b;
  t.M0 = linalg::symmetrize(stacked.transpose() * llt.solve(stacked));

  // Type invariants: every correction is PSD and dominated by the joint one.
  const linalg::PsdTolerance tol{};
  if (!linalg::is_psd(t.M0, tol) || !linalg::is_psd(t.M1, tol) || !linalg::is_psd(t.M2, tol) ||
      !linalg::loewner_leq(t.M1, t.M0, tol) || !linalg::loewner_leq(t.M2, t.M0, tol)) {
    throw NumericError("two_sensor_terms: correction terms violate PSD/dominance invariants");
  }
  return t;
}

/// Signed difference M0 - M1 - M2 with its eigenvalue-sign verdict.
/// The empirically correct direction is NSD (M0 <= M1 + M2 in the Loewner
/// order); the verdict is reported, never assumed.
struct LemmaGap {
  MatrixXd gap;
  SignVerdict verdict;
  double min_eigenvalue;
  double max_eigenvalue;
};

inline LemmaGap lemma_gap(const TwoSensorTerms& terms, linalg::PsdTolerance tol = {}) {
  if (terms.measurement_dim != 1) {
    throw DomainError("lemma_gap requires scalar (1-row) measurements");
  }
  LemmaGap g;
  g.gap = linalg::symmetrize(terms.M0 - terms.M1 - terms.M2);
  const VectorXd evs = linalg::symmetric_eigenvalues(g.gap);
  g.min_eigenvalue = evs.minCoeff();
  g.max_eigenvalue = evs.maxCoeff();
  g.verdict = classify_sign(g.gap, tol);
  return g;
}

enum class TwoSensorForm {
  auto_select,     ///< equal_noise when R1 == R2 within tolerance, else distinct_noise
  equal_noise,     ///< shared R: S - f f' M2(R/2) - (f + f' - 2 f f') M1(R)
  distinct_noise,  ///< scalar C: S - f f' M0 - f (1-f') M1 - f' (1-f) M2
};

/// Closed-form one-step expectation for two sensors at positions 0 and 1
/// with the base station at d in [0, 1], so lambda = (f(d), f(1-d)).
inline CovMatrix two_sensor_expected_cov(const CovMatrix& p, const model::LinearSystem& system,
                                         const MatrixXd& c, const CovMatrix& r1,
                                         const CovMatrix& r2, double d,
                                         const model::LossModel& f,
                                         TwoSensorForm form = TwoSensorForm::auto_select) {
  if (!(d >= 0.0 && d <= 1.0)) {
    throw DomainError("base location d = " + std::to_string(d) + " outside [0, 1]");
  }
  const bool equal_r =
      (r1.matrix() - r2.matrix()).norm() <= 1e-12 * (1.0 + r1.matrix().norm());
  if (form == TwoSensorForm::auto_select) {
    form = equal_r ? TwoSensorForm::equal_noise : TwoSensorForm::distinct_noise;
  }

  const double f1 = f(d);
  const double f2 = f(1.0 - d);

  if (form == TwoSensorForm::equal_noise) {
    if (!equal_r) {
      throw DomainError("equal_noise form requires R1 == R2");
    }
    const CovMatrix half_r(0.5 * r1.matrix());
    const TwoSensorTerms t = two_sensor_terms(p, system, c, r1, half_r);
    // Outcome table: both received -> R/2 correction, exactly one -> R correction.
    MatrixXd e = t.S - (f1 * f2) * t.M2 - (f1 + f2 - 2.0 * f1 * f2) * t.M1;
    return CovMatrix(std::move(e));
  }

  if (c.rows() != 1) {
    throw DomainError("distinct_noise form requires scalar (1-row) C");
  }
  const TwoSensorTerms t = two_sensor_terms(p, system, c, r1, r2);
  MatrixXd e = t.S - (f1 * f2) * t.M0 - (f1 * (1.0 - f2)) * t.M1 -
               (f2 * (1.0 - f1)) * t.M2;
  return CovMatrix(std::move(e));
}

/// Central second difference (J(d+h) - 2 J(d) + J(d-h)) / h^2, symmetrized.
template <typename MatrixFn>
inline MatrixXd concavity_second_difference(MatrixFn&& j, double d, double h) {
  if (!(h > 0.0)) {
    throw DomainError("second-difference step h must be > 0");
  }
  const MatrixXd jm = j(d - h);
  const MatrixXd j0 = j(d);
  const MatrixXd jp = j(d + h);
  if (jm.rows() != j0.rows() || jp.rows() != j0.rows() || jm.cols() != j0.cols() ||
      jp.cols() != j0.cols()) {
    throw DimensionError("second difference: stencil evaluations disagree in shape");
  }
  return linalg::symmetrize((jp - 2.0 * j0 + jm) / (h * h));
}

}  // namespace lossykf::expectation
