#pragma once

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <utility>

#include "lossykf/errors.hpp"
#include "lossykf/linalg.hpp"
#include "lossykf/model.hpp"

namespace lossykf::filter {

using linalg::CovMatrix;
using linalg::MatrixXd;
using linalg::VectorXd;

/// Estimate and error covariance at time k.
struct FilterState {
  VectorXd x_hat;
  CovMatrix P;
  int k = 0;
};

/// One advanced filter state plus the gain that produced it; the gain is
/// absent for the pure-prediction branch.
struct StepResult {
  FilterState state;
  std::optional<MatrixXd> gain;
};

namespace detail {

struct CovUpdate {
  CovMatrix next;
  MatrixXd gain;
};

/// Covariance side of a measurement update with stacked observation F and
/// noise G:  K = A P F^T (F P F^T + G)^-1,  P' = A P A^T + Q - K F P A^T.
/// The innovation covariance is inverted via Cholesky; failure means the
/// scenario is malformed (every sensor R is strictly PD) and raises.
inline CovUpdate covariance_update(const CovMatrix& p, const model::LinearSystem& system,
                                   const MatrixXd& f, const MatrixXd& g) {
  const MatrixXd& a = system.A();
  const int n = system.state_dim();
  if (p.dim() != n) {
    throw DimensionError("covariance dimension " + std::to_string(p.dim()) +
                         " does not match state dimension " + std::to_string(n));
  }
  if (f.cols() != n) {
    throw DimensionError("observation matrix has " + std::to_string(f.cols()) +
                         " columns, expected " + std::to_string(n));
  }
  if (g.rows() != f.rows() || g.cols() != f.rows()) {
    throw DimensionError("noise covariance must be square of dimension " +
                         std::to_string(f.rows()));
  }
  const MatrixXd innovation = linalg::symmetrize(f * p.matrix() * f.transpose() + g);
  Eigen::LLT<MatrixXd> llt(innovation);
  if (llt.info() != Eigen::Success) {
    throw NumericError("innovation covariance not positive definite");
  }
  const MatrixXd fpat = f * p.matrix() * a.transpose();
  const MatrixXd gain = llt.solve(fpat).transpose();  // A P F^T S^-1
  MatrixXd next = a * p.matrix() * a.transpose() + system.Q().matrix() - gain * fpat;
  return {CovMatrix(std::move(next)), gain};
}

}  // namespace detail

/// Prediction branch: x' = A x_hat, P' = A P A^T + Q.
inline StepResult predict(const FilterState& state, const model::LinearSystem& system) {
  const MatrixXd& a = system.A();
  const int n = system.state_dim();
  if (state.P.dim() != n || state.x_hat.size() != n) {
    throw DimensionError("filter state does not match state dimension " + std::to_string(n));
  }
  FilterState next;
  next.x_hat = a * state.x_hat;
  next.P = CovMatrix(a * state.P.matrix() * a.transpose() + system.Q().matrix());
  next.k = state.k + 1;
  return {std::move(next), std::nullopt};
}

/// Measurement update with explicit stacked (F, G) and measurement y.
inline StepResult kf_step(const FilterState& state, const model::LinearSystem& system,
                          const MatrixXd& f, const MatrixXd& g, const VectorXd& y) {
  const int n = system.state_dim();
  if (state.x_hat.size() != n) {
    throw DimensionError("estimate dimension does not match state dimension");
  }
  if (y.size() != f.rows()) {
    throw DimensionError("measurement has dimension " + std::to_string(y.size()) +
                         " but F has " + std::to_string(f.rows()) + " rows");
  }
  detail::CovUpdate upd = detail::covariance_update(state.P, system, f, g);
  FilterState next;
  next.x_hat = system.A() * state.x_hat + upd.gain * (y - f * state.x_hat);
  next.P = std::move(upd.next);
  next.k = state.k + 1;
  return {std::move(next), std::move(upd.gain)};
}

/// One filter step driven by the received subset: prediction when nothing
/// arrived, stacked measurement update otherwise.
inline StepResult lossy_step(const FilterState& state, const model::Scenario& scenario,
                             const model::SensorSubset& omega, const VectorXd& y_omega) {
  if (omega.empty()) {
    if (y_omega.size() != 0) {
      throw DimensionError("empty subset carries no measurement, got dimension " +
                           std::to_string(y_omega.size()));
    }
    return predict(state, scenario.system());
  }
  const auto [f, g] = model::stack_subset(scenario.sensors(), omega);
  if (y_omega.size() != f.rows()) {
    throw DimensionError("measurement dimension " + std::to_string(y_omega.size()) +
                         " does not match stacked subset " + omega.to_string() + " rows " +
                         std::to_string(f.rows()));
  }
  try {
    return kf_step(state, scenario.system(), f, g, y_omega);
  } catch (const NumericError& e) {
    throw NumericError(std::string(e.what()) + " for subset " + omega.to_string());
  }
}

}  // namespace lossykf::filter
