#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "lossykf/errors.hpp"
#include "lossykf/linalg.hpp"

namespace lossykf::model {

using linalg::CovMatrix;
using linalg::MatrixXd;
using linalg::VectorXd;

/// Spatial location in R^1 or R^2 (abstract distance units).
using Point = Eigen::VectorXd;

inline Point point1(double x) {
  Point p(1);
  p << x;
  return p;
}

inline Point point2(double x, double y) {
  Point p(2);
  p << x, y;
  return p;
}

inline double distance(const Point& a, const Point& b) {
  if (a.size() != b.size()) {
    throw DimensionError("distance: points have dimensions " + std::to_string(a.size()) +
                         " and " + std::to_string(b.size()));
  }
  return (a - b).norm();
}

/// x_{k+1} = A x_k + w_k with w ~ N(0, Q) and x_0 ~ N(0, P0).
class LinearSystem {
 public:
  LinearSystem(MatrixXd a, CovMatrix q, CovMatrix p0)
      : a_(std::move(a)), q_(std::move(q)), p0_(std::move(p0)) {
    linalg::detail::require_square(a_, "LinearSystem.A");
    if (!a_.allFinite()) {
      throw ValidationError("system.A has non-finite entries");
    }
    const int n = static_cast<int>(a_.rows());
    if (q_.dim() != n) {
      throw DimensionError("system.Q is " + std::to_string(q_.dim()) + "x" +
                           std::to_string(q_.dim()) + ", expected " + std::to_string(n));
    }
    if (p0_.dim() != n) {
      throw DimensionError("system.P0 is " + std::to_string(p0_.dim()) + "x" +
                           std::to_string(p0_.dim()) + ", expected " + std::to_string(n));
    }
  }

  const MatrixXd& A() const { return a_; }
  const CovMatrix& Q() const { return q_; }
  const CovMatrix& P0() const { return p0_; }
  int state_dim() const { return static_cast<int>(a_.rows()); }

 private:
  MatrixXd a_;
  CovMatrix q_;
  CovMatrix p0_;
};

/// One sensor: y = C x + v with v ~ N(0, R), at a fixed position.
/// R must be strictly positive definite so every innovation covariance
/// built from it stays invertible.
class Sensor {
 public:
  Sensor(MatrixXd c, CovMatrix r, Point position)
      : c_(std::move(c)), r_(std::move(r)), position_(std::move(position)) {
    if (c_.rows() == 0 || c_.cols() == 0 || !c_.allFinite()) {
      throw ValidationError("sensor C must be a nonempty finite matrix");
    }
    if (r_.dim() != c_.rows()) {
      throw DimensionError("sensor R is " + std::to_string(r_.dim()) + "x" +
                           std::to_string(r_.dim()) + " but C has " +
                           std::to_string(c_.rows()) + " rows");
    }
    const VectorXd evs = linalg::symmetric_eigenvalues(r_.matrix());
    const double max_abs = evs.cwiseAbs().maxCoeff();
    if (!(evs.minCoeff() > 1e-12 * (1.0 + max_abs))) {
      throw ValidationError("sensor R not positive definite (min eigenvalue " +
                            std::to_string(evs.minCoeff()) + ")");
    }
    if (position_.size() != 1 && position_.size() != 2) {
      throw DimensionError("sensor position must have dimension 1 or 2");
    }
  }

  const MatrixXd& C() const { return c_; }
  const CovMatrix& R() const { return r_; }
  const Point& position() const { return position_; }
  int output_dim() const { return static_cast<int>(c_.rows()); }

 private:
  MatrixXd c_;
  CovMatrix r_;
  Point position_;
};

/// Packet-arrival probability as a function of distance: convex,
/// nonincreasing, f(0) = 1, range [0,1] on [0, d_max]. Built-in families:
///   exponential: f(d) = exp(-kappa d), kappa > 0
///   linear:      f(d) = max(0, 1 - c d), c in (0, 1]
/// Custom callables go through the same sampled validation; the
/// *_unchecked factory exists for tests that need to inject an invalid f.
class LossModel {
 public:
  enum class Family { exponential, linear, custom };

  static LossModel exponential(double kappa, double d_max) {
    if (!(kappa > 0.0)) {
      throw ValidationError("loss_model.kappa must be > 0");
    }
    LossModel m(Family::exponential, kappa, d_max, {});
    m.validate();
    return m;
  }

  static LossModel linear(double slope, double d_max) {
    if (!(slope > 0.0 && slope <= 1.0)) {
      throw ValidationError("loss_model.slope must lie in (0, 1]");
    }
    LossModel m(Family::linear, slope, d_max, {});
    m.validate();
    return m;
  }

  static LossModel custom(std::function<double(double)> f, double d_max) {
    LossModel m(Family::custom, 0.0, d_max, std::move(f));
    m.validate();
    return m;
  }

  /// Test hook: skips the convex/decreasing/f(0)=1 validation.
  static LossModel custom_unchecked(std::function<double(double)> f, double d_max) {
    if (!(d_max > 0.0)) {
      throw ValidationError("loss_model.d_max must be > 0");
    }
    return LossModel(Family::custom, 0.0, d_max, std::move(f));
  }

  /// Arrival probability at distance d in [0, d_max].
  double operator()(double d) const {
    if (!(d >= 0.0)) {
      throw DomainError("loss model evaluated at negative distance " + std::to_string(d));
    }
    if (d > d_max_ * (1.0 + 1e-12)) {
      throw DomainError("loss model evaluated at distance " + std::to_string(d) +
                        " beyond d_max " + std::to_string(d_max_));
    }
    return raw(d);
  }

  Family family() const { return family_; }
  double d_max() const { return d_max_; }

  double kappa() const {
    if (family_ != Family::exponential) {
      throw DomainError("kappa() is only defined for the exponential family");
    }
    return param_;
  }

  double slope() const {
    if (family_ != Family::linear) {
      throw DomainError("slope() is only defined for the linear family");
    }
    return param_;
  }

 private:
  LossModel(Family family, double param, double d_max, std::function<double(double)> f)
      : family_(family), param_(param), d_max_(d_max), custom_(std::move(f)) {}

  double raw(double d) const {
    switch (family_) {
      case Family::exponential:
        return std::exp(-param_ * d);
      case Family::linear:
        return std::max(0.0, 1.0 - param_ * d);
      case Family::custom:
        return custom_(d);
    }
    throw Error("unreachable loss family");
  }

  // Sampled validation: f(0) = 1, range [0,1], first differences <= 1e-12
  // (nonincreasing), second central differences >= -1e-10 (convex).
  void validate() const {
    if (!(d_max_ > 0.0) || !std::isfinite(d_max_)) {
      throw ValidationError("loss_model.d_max must be a positive finite number");
    }
    if (raw(0.0) != 1.0) {
      throw ValidationError("loss_model: f(0) must equal 1");
    }
    constexpr int kSamples = 1025;
    const double step = d_max_ / (kSamples - 1);
    std::vector<double> v(kSamples);
    for (int i = 0; i < kSamples; ++i) {
      v[i] = raw(i * step);
      if (!std::isfinite(v[i]) || v[i] < -1e-12 || v[i] > 1.0 + 1e-12) {
        throw ValidationError("loss_model: f(" + std::to_string(i * step) +
                              ") = " + std::to_string(v[i]) + " outside [0, 1]");
      }
    }
    for (int i = 0; i + 1 < kSamples; ++i) {
      if (v[i + 1] - v[i] > 1e-12) {
        throw ValidationError("loss_model: f not nonincreasing near d = " +
                              std::to_string(i * step));
      }
    }
    for (int i = 1; i + 1 < kSamples; ++i) {
      if (v[i + 1] - 2.0 * v[i] + v[i - 1] < -1e-10) {
        throw ValidationError("loss_model: f not convex near d = " + std::to_string(i * step));
      }
    }
  }

  Family family_;
  double param_;
  double d_max_;
  std::function<double(double)> custom_;
};

/// Subset of sensor indices (0-based, strictly increasing, possibly empty).
class SensorSubset {
 public:
  SensorSubset() = default;

  explicit SensorSubset(std::vector<int> indices) : indices_(std::move(indices)) {
    for (std::size_t i = 0; i < indices_.size(); ++i) {
      if (indices_[i] < 0) {
        throw DomainError("sensor subset index " + std::to_string(indices_[i]) +
                          " is negative");
      }
      if (i > 0 && indices_[i] <= indices_[i - 1]) {
        throw DomainError("sensor subset indices must be strictly increasing");
      }
    }
  }

  static SensorSubset from_bitmask(std::uint32_t mask) {
    std::vector<int> idx;
    for (int j = 0; j < 32; ++j) {
      if (mask & (1u << j)) {
        idx.push_back(j);
      }
    }
    return SensorSubset(std::move(idx));
  }

  std::uint32_t bitmask() const {
    std::uint32_t mask = 0;
    for (int j : indices_) {
      if (j >= 32) {
        throw DomainError("bitmask() requires sensor indices < 32");
      }
      mask |= (1u << j);
    }
    return mask;
  }

  const std::vector<int>& indices() const { return indices_; }
  bool empty() const { return indices_.empty(); }
  std::size_t size() const { return indices_.size(); }

  bool contains(int j) const {
    return std::binary_search(indices_.begin(), indices_.end(), j);
  }

  std::string to_string() const {
    std::string s = "{";
    for (std::size_t i = 0; i < indices_.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(indices_[i]);
    }
    return s + "}";
  }

  friend bool operator==(const SensorSubset& a, const SensorSubset& b) {
    return a.indices_ == b.indices_;
  }

 private:
  std::vector<int> indices_;
};

/// Candidate base-station region: interval in 1D, axis-aligned box in 2D.
struct Region {
  Point lo;
  Point hi;

  Region(Point lo_in, Point hi_in) : lo(std::move(lo_in)), hi(std::move(hi_in)) {
    if (lo.size() != hi.size() || (lo.size() != 1 && lo.size() != 2)) {
      throw DimensionError("region lo/hi must both have dimension 1 or 2");
    }
    for (Eigen::Index i = 0; i < lo.size(); ++i) {
      if (!std::isfinite(lo[i]) || !std::isfinite(hi[i]) || lo[i] > hi[i]) {
        throw ValidationError("region requires finite lo <= hi per coordinate");
      }
    }
  }

  int dim() const { return static_cast<int>(lo.size()); }

  bool contains(const Point& p, double eps = 1e-12) const {
    if (p.size() != lo.size()) return false;
    const double slack = eps * (1.0 + (hi - lo).norm());
    for (Eigen::Index i = 0; i < lo.size(); ++i) {
      if (p[i] < lo[i] - slack || p[i] > hi[i] + slack) return false;
    }
    return true;
  }

  bool degenerate() const { return (hi - lo).norm() == 0.0; }
  double diameter() const { return (hi - lo).norm(); }
};

/// A complete placement problem: system + sensors + loss model + region.
class Scenario {
 public:
  Scenario(LinearSystem system, std::vector<Sensor> sensors, LossModel loss_model,
           Region region)
      : system_(std::move(system)),
        sensors_(std::move(sensors)),
        loss_model_(std::move(loss_model)),
        region_(std::move(region)) {
    if (sensors_.empty()) {
      throw ValidationError("scenario requires at least one sensor");
    }
    for (std::size_t j = 0; j < sensors_.size(); ++j) {
      const std::string path = "sensors[" + std::to_string(j) + "]";
      if (sensors_[j].C().cols() != system_.state_dim()) {
        throw DimensionError(path + ".C has " + std::to_string(sensors_[j].C().cols()) +
                             " columns, expected state dimension " +
                             std::to_string(system_.state_dim()));
      }
      if (sensors_[j].position().size() != region_.dim()) {
        throw DimensionError(path + ".position dimension does not match region");
      }
      if (!region_.contains(sensors_[j].position())) {
        throw ValidationError(path + ".position lies outside the candidate region");
      }
    }
  }

  const LinearSystem& system() const { return system_; }
  const std::vector<Sensor>& sensors() const { return sensors_; }
  const LossModel& loss_model() const { return loss_model_; }
  const Region& region() const { return region_; }
  int sensor_count() const { return static_cast<int>(sensors_.size()); }

 private:
  LinearSystem system_;
  std::vector<Sensor> sensors_;
  LossModel loss_model_;
  Region region_;
};

inline double eval_f(const LossModel& model, double d) { return model(d); }

/// Per-sensor arrival probabilities for a base station at `base_location`.
inline std::vector<double> arrival_probs(const Scenario& scenario, const Point& base_location) {
  if (!scenario.region().contains(base_location)) {
    throw DomainError("base location outside the candidate region");
  }
  std::vector<double> lambda;
  lambda.reserve(scenario.sensors().size());
  for (const Sensor& s : scenario.sensors()) {
    lambda.push_back(scenario.loss_model()(distance(s.position(), base_location)));
  }
  return lambda;
}

/// Stacked observation matrix F and block-diagonal noise covariance G for a
/// received subset. The empty subset has no stacked form; callers must take
/// the prediction branch instead.
inline std::pair<MatrixXd, MatrixXd> stack_subset(const std::vector<Sensor>& sensors,
                                                  const SensorSubset& omega) {
  if (omega.empty()) {
    throw DomainError("stack_subset: empty subset has no stacked form; use the "
                      "prediction branch");
  }
  std::vector<MatrixXd> cs;
  std::vector<MatrixXd> rs;
  cs.reserve(omega.size());
  rs.reserve(omega.size());
  for (int j : omega.indices()) {
    if (j >= static_cast<int>(sensors.size())) {
      throw DimensionError("stack_subset: sensor index " + std::to_string(j) +
                           " out of range for " + std::to_string(sensors.size()) +
                           " sensors");
    }
    cs.push_back(sensors[j].C());
    rs.push_back(sensors[j].R().matrix());
  }
  return {linalg::blkcol(cs), linalg::blkdiag(rs)};
}

/// Maximum sensor count for power-set enumeration.
inline constexpr int kMaxSubsetSensors = 20;

/// All 2^N subsets: empty set first, then ascending cardinality,
/// lexicographic within each cardinality.
inline std::vector<SensorSubset> enumerate_subsets(int n_sensors) {
  if (n_sensors < 1 || n_sensors > kMaxSubsetSensors) {
    throw DomainError("enumerate_subsets: sensor count " + std::to_string(n_sensors) +
                      " outside [1, " + std::to_string(kMaxSubsetSensors) + "]");
  }
  std::vector<SensorSubset> out;
  out.reserve(std::size_t{1} << n_sensors);
  out.emplace_back();
  for (int k = 1; k <= n_sensors; ++k) {
    std::vector<int> comb(k);
    for (int i = 0; i < k; ++i) comb[i] = i;
    while (true) {
      out.emplace_back(comb);
      int i = k - 1;
      while (i >= 0 && comb[i] == n_sensors - k + i) --i;
      if (i < 0) break;
      ++comb[i];
      for (int j = i + 1; j < k; ++j) comb[j] = comb[j - 1] + 1;
    }
  }
  return out;
}

}  // namespace lossykf::model
