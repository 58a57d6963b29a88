#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "lossykf/errors.hpp"
#include "lossykf/expectation.hpp"
#include "lossykf/linalg.hpp"
#include "lossykf/model.hpp"

namespace lossykf::placement {

using linalg::CovMatrix;
using linalg::MatrixXd;
using linalg::VectorXd;
using model::Point;

/// Outcome of a placement search over sampled candidate locations.
struct PlacementResult {
  Point best_location;
  double best_cost = 0.0;
  std::vector<std::pair<Point, double>> cost_curve;
  bool endpoint_optimal = false;  ///< argmin sits at a sensor position
  bool loewner_dominant = false;  ///< best expected covariance <= every sampled one
  std::vector<Point> local_minima;  ///< strict grid local minima (2D search)
};

/// Second-difference data at one interior grid location. The coarse fields
/// use step h, the plain fields the h/2 refinement.
struct ConcavityPoint {
  double location = 0.0;
  double min_eig = 0.0;
  double max_eig = 0.0;
  double min_eig_coarse = 0.0;
  double max_eig_coarse = 0.0;
  double tolerance = 0.0;  ///< scaled NSD tolerance at this point
};

/// Per-interval verdicts for the piecewise scan.
struct IntervalVerdict {
  double lo = 0.0;
  double hi = 0.0;
  bool trace_nsd = false;
  bool matrix_nsd = false;
  double worst_trace_second_diff = 0.0;
  double worst_matrix_eig = 0.0;
};

struct ConcavityReport {
  std::vector<double> grid;
  std::vector<ConcavityPoint> points;
  bool all_nsd = false;
  bool hypotheses_met = false;
  std::string hypothesis_note;
  std::vector<IntervalVerdict> intervals;
};

/// Default absolute tolerance factor for NSD verdicts; the per-point bound
/// is nsd_tol * (1 + ||J(d)||_F).
inline constexpr double kNsdTolerance = 1e-7;

/// trace of the expected one-step covariance with the base station at
/// `location` -- the scalarized search objective.
inline double objective(const CovMatrix& p, const model::Scenario& scenario,
                        const Point& location) {
  return expectation::expected_next_cov(p, scenario, model::arrival_probs(scenario, location))
      .trace();
}

namespace detail {

inline std::vector<double> sorted_sensor_coords(const model::Scenario& scenario) {
  std::vector<double> pos;
  pos.reserve(scenario.sensors().size());
  for (const model::Sensor& s : scenario.sensors()) pos.push_back(s.position()[0]);
  std::sort(pos.begin(), pos.end());
  return pos;
}

/// Uniform grid on [lo, hi] with every value in `extra` inserted exactly.
inline std::vector<double> grid_with(double lo, double hi, int count,
                                     const std::vector<double>& extra) {
  std::vector<double> xs;
  xs.reserve(static_cast<std::size_t>(count) + extra.size());
  for (int i = 0; i < count; ++i) {
    xs.push_back(lo + (hi - lo) * static_cast<double>(i) / (count - 1));
  }
  xs.back() = hi;
  for (double e : extra) {
    if (e >= lo && e <= hi) xs.push_back(e);
  }
  std::sort(xs.begin(), xs.end());
  const double eps = 1e-15 * (1.0 + std::abs(hi - lo));
  xs.erase(std::unique(xs.begin(), xs.end(),
                       [eps](double a, double b) { return std::abs(a - b) <= eps; }),
           xs.end());
  return xs;
}

inline void require_1d(const model::Scenario& scenario, const char* op) {
  if (scenario.region().dim() != 1) {
    throw DomainError(std::string(op) + " requires a 1D scenario");
  }
}

/// Argmin with ties (within 1e-12 relative) broken toward the earlier,
/// i.e. smaller-coordinate, candidate.
inline std::size_t argmin_with_ties(const std::vector<double>& costs) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < costs.size(); ++i) {
    const double tie = 1e-12 * (1.0 + std::abs(costs[best]));
    if (costs[i] < costs[best] - tie) best = i;
  }
  return best;
}

inline bool at_sensor_position_1d(const model::Scenario& scenario, double x) {
  for (const model::Sensor& s : scenario.sensors()) {
    if (std::abs(s.position()[0] - x) <= 1e-14 * (1.0 + std::abs(x))) return true;
  }
  return false;
}

}  // namespace detail

/// Grid search over the 1D candidate region. The grid always contains both
/// region endpoints and every sensor position exactly.
inline PlacementResult place_1d(const CovMatrix& p, const model::Scenario& scenario,
                                int grid_points) {
  detail::require_1d(scenario, "place_1d");
  if (grid_points < 3) {
    throw DomainError("place_1d requires at least 3 grid points");
  }
  const double lo = scenario.region().lo[0];
  const double hi = scenario.region().hi[0];
  if (!(hi > lo)) {
    throw DomainError("place_1d: degenerate candidate region (lo == hi)");
  }
  const std::vector<double> xs =
      detail::grid_with(lo, hi, grid_points, detail::sorted_sensor_coords(scenario));

  PlacementResult result;
  std::vector<MatrixXd> covs;
  std::vector<double> costs;
  covs.reserve(xs.size());
  costs.reserve(xs.size());
  for (double x : xs) {
    const CovMatrix e = expectation::expected_next_cov(
        p, scenario, model::arrival_probs(scenario, model::point1(x)));
    covs.push_back(e.matrix());
    costs.push_back(e.trace());
    result.cost_curve.emplace_back(model::point1(x), costs.back());
  }

  const std::size_t best = detail::argmin_with_ties(costs);
  result.best_location = model::point1(xs[best]);
  result.best_cost = costs[best];
  result.endpoint_optimal = detail::at_sensor_position_1d(scenario, xs[best]);
  result.loewner_dominant = true;
  for (std::size_t i = 0; i < covs.size(); ++i) {
    if (i == best) continue;
    if (!linalg::loewner_leq(covs[best], covs[i])) {
      result.loewner_dominant = false;
      break;
    }
  }
  return result;
}

namespace detail {

struct StencilVerdict {
  ConcavityPoint point;
  double trace_fine = 0.0;
  double trace_coarse = 0.0;
  bool matrix_nsd = false;
  bool trace_nsd = false;
};

/// Evaluate the h and h/2 second-difference stencils of J at x. NSD holds
/// when the h stencil clears tol*(1+||J||_F) and the h/2 stencil clears
/// four times that bound (its floating-point noise floor is 4x higher).
template <typename MatrixFn>
inline StencilVerdict stencil_verdict(MatrixFn&& j, double x, double h, double nsd_tol) {
  StencilVerdict v;
  const MatrixXd j0 = j(x);
  const double scale = nsd_tol * (1.0 + j0.norm());

  const MatrixXd coarse = expectation::concavity_second_difference(j, x, h);
  const MatrixXd fine = expectation::concavity_second_difference(j, x, 0.5 * h);
  const VectorXd ev_c = linalg::symmetric_eigenvalues(coarse);
  const VectorXd ev_f = linalg::symmetric_eigenvalues(fine);

  v.point.location = x;
  v.point.min_eig = ev_f.minCoeff();
  v.point.max_eig = ev_f.maxCoeff();
  v.point.min_eig_coarse = ev_c.minCoeff();
  v.point.max_eig_coarse = ev_c.maxCoeff();
  v.point.tolerance = scale;
  v.trace_fine = fine.trace();
  v.trace_coarse = coarse.trace();
  v.matrix_nsd = ev_c.maxCoeff() <= scale && ev_f.maxCoeff() <= 4.0 * scale;
  v.trace_nsd = coarse.trace() <= scale && fine.trace() <= 4.0 * scale;
  return v;
}

}  // namespace detail

/// Second-difference concavity check of the full matrix-valued expected
/// covariance between the two sensor positions. Hypothesis violations are
/// reported in the result, not raised, so exploratory scans remain possible.
inline ConcavityReport verify_concavity_1d(const CovMatrix& p, const model::Scenario& scenario,
                                           int grid_points = 101, double h = 1e-3) {
  detail::require_1d(scenario, "verify_concavity_1d");
  if (scenario.sensor_count() != 2) {
    throw DomainError("verify_concavity_1d requires exactly 2 sensors");
  }
  if (grid_points < 3) {
    throw DomainError("verify_concavity_1d requires at least 3 grid points");
  }
  if (!(h > 0.0)) {
    throw DomainError("verify_concavity_1d requires h > 0");
  }

  ConcavityReport report;
  const model::Sensor& s1 = scenario.sensors()[0];
  const model::Sensor& s2 = scenario.sensors()[1];
  if (s1.C() == s2.C()) {
    const double rdiff = (s1.R().matrix() - s2.R().matrix()).norm();
    if (rdiff <= 1e-9 * (1.0 + s1.R().matrix().norm())) {
      report.hypotheses_met = true;
      report.hypothesis_note = "equal C and equal R";
    } else if (s1.C().rows() == 1) {
      report.hypotheses_met = true;
      report.hypothesis_note = "scalar C with distinct R";
    } else {
      report.hypothesis_note = "hypotheses not met: R1 != R2 and C is not scalar";
    }
  } else {
    report.hypothesis_note = "hypotheses not met: C1 != C2";
  }

  const double p1 = s1.position()[0];
  const double p2 = s2.position()[0];
  const double lo = std::min(p1, p2);
  const double hi = std::max(p1, p2);
  if (!(hi > lo)) {
    throw DomainError("verify_concavity_1d: sensors are co-located");
  }

  auto j = [&](double x) {
    return expectation::expected_next_cov(p, scenario,
                                          model::arrival_probs(scenario, model::point1(x)))
        .matrix();
  };

  report.grid = detail::grid_with(lo, hi, grid_points, {});
  report.all_nsd = true;
  IntervalVerdict iv;
  iv.lo = lo;
  iv.hi = hi;
  iv.trace_nsd = true;
  iv.matrix_nsd = true;
  iv.worst_matrix_eig = -std::numeric_limits<double>::infinity();
  iv.worst_trace_second_diff = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i + 1 < report.grid.size(); ++i) {
    const double x = report.grid[i];
    if (x - h < lo || x + h > hi) continue;  // keep the stencil inside the span
    const detail::StencilVerdict v = detail::stencil_verdict(j, x, h, kNsdTolerance);
    report.points.push_back(v.point);
    report.all_nsd = report.all_nsd && v.matrix_nsd;
    iv.matrix_nsd = iv.matrix_nsd && v.matrix_nsd;
    iv.trace_nsd = iv.trace_nsd && v.trace_nsd;
    iv.worst_matrix_eig = std::max(iv.worst_matrix_eig, v.point.max_eig_coarse);
    iv.worst_trace_second_diff = std::max(iv.worst_trace_second_diff, v.trace_coarse);
  }
  report.intervals.push_back(iv);
  return report;
}

/// Piecewise concavity scan for colinear sensors: partitions the candidate
/// region at the sensor positions and checks second-difference NSD verdicts
/// on both the trace curve and the matrix curve per interval.
inline ConcavityReport scan_piecewise_concavity(const CovMatrix& p,
                                                const model::Scenario& scenario,
                                                int grid_points = 101) {
  detail::require_1d(scenario, "scan_piecewise_concavity");
  if (scenario.sensor_count() < 2) {
    throw DomainError("scan_piecewise_concavity requires at least 2 sensors");
  }
  if (grid_points < 3) {
    throw DomainError("scan_piecewise_concavity requires at least 3 grid points");
  }
  std::vector<double> pos;
  for (const model::Sensor& s : scenario.sensors()) pos.push_back(s.position()[0]);
  for (std::size_t i = 1; i < pos.size(); ++i) {
    if (!(pos[i] > pos[i - 1])) {
      throw ValidationError("scan_piecewise_concavity: sensor positions must be sorted "
                            "strictly increasing");
    }
  }

  const double lo = scenario.region().lo[0];
  const double hi = scenario.region().hi[0];
  std::vector<double> bounds{lo};
  for (double x : pos) {
    if (x > lo && x < hi) bounds.push_back(x);
  }
  bounds.push_back(hi);
  const double eps = 1e-12 * (1.0 + hi - lo);

  auto j = [&](double x) {
    return expectation::expected_next_cov(p, scenario,
                                          model::arrival_probs(scenario, model::point1(x)))
        .matrix();
  };

  ConcavityReport report;
  report.hypotheses_met = true;
  report.hypothesis_note = "empirical piecewise scan";
  report.all_nsd = true;
  for (std::size_t b = 0; b + 1 < bounds.size(); ++b) {
    const double a0 = bounds[b];
    const double a1 = bounds[b + 1];
    if (a1 - a0 <= eps) continue;
    const std::vector<double> xs = detail::grid_with(a0, a1, grid_points, {});
    const double spacing = (a1 - a0) / (grid_points - 1);
    const double h = std::min(1e-3, 0.5 * spacing);
    IntervalVerdict iv;
    iv.lo = a0;
    iv.hi = a1;
    iv.trace_nsd = true;
    iv.matrix_nsd = true;
    iv.worst_matrix_eig = -std::numeric_limits<double>::infinity();
    iv.worst_trace_second_diff = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 1; i + 1 < xs.size(); ++i) {
      const detail::StencilVerdict v = detail::stencil_verdict(j, xs[i], h, kNsdTolerance);
      report.grid.push_back(xs[i]);
      report.points.push_back(v.point);
      iv.matrix_nsd = iv.matrix_nsd && v.matrix_nsd;
      iv.trace_nsd = iv.trace_nsd && v.trace_nsd;
      iv.worst_matrix_eig = std::max(iv.worst_matrix_eig, v.point.max_eig_coarse);
      iv.worst_trace_second_diff = std::max(iv.worst_trace_second_diff, v.trace_coarse);
    }
    report.all_nsd = report.all_nsd && iv.matrix_nsd;
    report.intervals.push_back(iv);
  }
  return report;
}

namespace detail {

/// Monotone-chain convex hull (counterclockwise, no repeated last point).
inline std::vector<Point> convex_hull(std::vector<Point> pts) {
  std::sort(pts.begin(), pts.end(), [](const Point& a, const Point& b) {
    return a[0] < b[0] || (a[0] == b[0] && a[1] < b[1]);
  });
  pts.erase(std::unique(pts.begin(), pts.end(),
                        [](const Point& a, const Point& b) {
                          return a[0] == b[0] && a[1] == b[1];
                        }),
            pts.end());
  const auto cross = [](const Point& o, const Point& a, const Point& b) {
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
  };
  if (pts.size() < 3) return pts;
  std::vector<Point> hull;
  for (const Point& pt : pts) {
    while (hull.size() >= 2 && cross(hull[hull.size() - 2], hull.back(), pt) <= 0) {
      hull.pop_back();
    }
    hull.push_back(pt);
  }
  const std::size_t lower = hull.size() + 1;
  for (auto it = pts.rbegin(); it != pts.rend(); ++it) {
    while (hull.size() >= lower && cross(hull[hull.size() - 2], hull.back(), *it) <= 0) {
      hull.pop_back();
    }
    hull.push_back(*it);
  }
  hull.pop_back();
  return hull;
}

}  // namespace detail

/// True when p lies strictly inside the convex hull of the sensor positions
/// (margin in the same distance units). Degenerate hulls have no interior.
inline bool strictly_inside_hull(const model::Scenario& scenario, const Point& p,
                                 double margin = 1e-9) {
  std::vector<Point> pts;
  for (const model::Sensor& s : scenario.sensors()) pts.push_back(s.position());
  const std::vector<Point> hull = detail::convex_hull(std::move(pts));
  if (hull.size() < 3) return false;
  for (std::size_t i = 0; i < hull.size(); ++i) {
    const Point& a = hull[i];
    const Point& b = hull[(i + 1) % hull.size()];
    const double edge = std::hypot(b[0] - a[0], b[1] - a[1]);
    const double cross =
        (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
    if (cross <= margin * edge) return false;
  }
  return true;
}

/// Grid search over the bounding box of the sensor positions in 2D. Sensor
/// positions are always evaluated exactly as extra argmin candidates; local
/// minima are strict 8-neighborhood minima on the lattice. Colinear sensor
/// sets fall back to a 1D search along their common line.
inline PlacementResult place_2d(const CovMatrix& p, const model::Scenario& scenario,
                                double grid_resolution) {
  if (scenario.region().dim() != 2) {
    throw DomainError("place_2d requires a 2D scenario");
  }
  if (!(grid_resolution > 0.0)) {
    throw DomainError("place_2d requires a positive grid resolution");
  }

  std::vector<Point> pos;
  for (const model::Sensor& s : scenario.sensors()) pos.push_back(s.position());
  double xmin = pos[0][0], xmax = pos[0][0], ymin = pos[0][1], ymax = pos[0][1];
  for (const Point& q : pos) {
    xmin = std::min(xmin, q[0]);
    xmax = std::max(xmax, q[0]);
    ymin = std::min(ymin, q[1]);
    ymax = std::max(ymax, q[1]);
  }

  auto cost_at = [&](const Point& q) {
    return expectation::expected_next_cov(p, scenario, model::arrival_probs(scenario, q));
  };

  PlacementResult result;

  // All sensors co-located: nothing to search.
  if (xmax - xmin <= 0.0 && ymax - ymin <= 0.0) {
    const CovMatrix e = cost_at(pos[0]);
    result.best_location = pos[0];
    result.best_cost = e.trace();
    result.cost_curve.emplace_back(pos[0], e.trace());
    result.endpoint_optimal = true;
    result.loewner_dominant = true;
    result.local_minima.push_back(pos[0]);
    return result;
  }

  // Colinearity: second moment of the centered positions.
  Point center = model::point2(0.0, 0.0);
  for (const Point& q : pos) center += q;
  center /= static_cast<double>(pos.size());
  Eigen::Matrix2d moment = Eigen::Matrix2d::Zero();
  for (const Point& q : pos) {
    const Eigen::Vector2d d(q[0] - center[0], q[1] - center[1]);
    moment += d * d.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(moment);
  const double spread = es.eigenvalues()[1];
  const bool colinear = es.eigenvalues()[0] <= 1e-12 * (1.0 + spread);

  if (colinear) {
    // Degenerate hull: search along the common line through the sensors.
    // Orient the axis lexicographically so tie-breaking is deterministic.
    Eigen::Vector2d axis = es.eigenvectors().col(1);
    if (axis[0] < 0.0 || (axis[0] == 0.0 && axis[1] < 0.0)) axis = -axis;
    std::vector<double> ts;
    for (const Point& q : pos) {
      ts.push_back(axis.dot(Eigen::Vector2d(q[0] - center[0], q[1] - center[1])));
    }
    const double tmin = *std::min_element(ts.begin(), ts.end());
    const double tmax = *std::max_element(ts.begin(), ts.end());
    const int count = std::max(3, static_cast<int>(std::lround((tmax - tmin) / grid_resolution)) + 1);
    const std::vector<double> grid = detail::grid_with(tmin, tmax, count, ts);
    auto at_t = [&](double t) {
      return model::point2(center[0] + t * axis[0], center[1] + t * axis[1]);
    };
    std::vector<double> costs;
    std::vector<MatrixXd> covs;
    for (double t : grid) {
      const Point q = at_t(t);
      const CovMatrix e = cost_at(q);
      covs.push_back(e.matrix());
      costs.push_back(e.trace());
      result.cost_curve.emplace_back(q, e.trace());
    }
    const std::size_t best = detail::argmin_with_ties(costs);
    result.best_location = at_t(grid[best]);
    result.best_cost = costs[best];
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const bool left_ok = (i == 0) || costs[i] < costs[i - 1];
      const bool right_ok = (i + 1 == grid.size()) || costs[i] < costs[i + 1];
      if (left_ok && right_ok) result.local_minima.push_back(at_t(grid[i]));
    }
    result.loewner_dominant = true;
    for (std::size_t i = 0; i < covs.size(); ++i) {
      if (i != best && !linalg::loewner_leq(covs[best], covs[i])) {
        result.loewner_dominant = false;
        break;
      }
    }
    for (const Point& q : pos) {
      if ((q - result.best_location).norm() <= 1e-12 * (1.0 + (q - center).norm())) {
        result.endpoint_optimal = true;
      }
    }
    return result;
  }

  const int nx = std::max(2, static_cast<int>(std::lround((xmax - xmin) / grid_resolution)) + 1);
  const int ny = std::max(2, static_cast<int>(std::lround((ymax - ymin) / grid_resolution)) + 1);
  std::vector<double> xs(nx), ys(ny);
  for (int i = 0; i < nx; ++i) xs[i] = xmin + (xmax - xmin) * static_cast<double>(i) / (nx - 1);
  for (int j = 0; j < ny; ++j) ys[j] = ymin + (ymax - ymin) * static_cast<double>(j) / (ny - 1);

  std::vector<double> costs(static_cast<std::size_t>(nx) * ny);
  std::vector<MatrixXd> covs(costs.size());
  auto idx = [ny](int i, int j) { return static_cast<std::size_t>(i) * ny + j; };
  for (int i = 0; i < nx; ++i) {
    for (int j = 0; j < ny; ++j) {
      const CovMatrix e = cost_at(model::point2(xs[i], ys[j]));
      covs[idx(i, j)] = e.matrix();
      costs[idx(i, j)] = e.trace();
      result.cost_curve.emplace_back(model::point2(xs[i], ys[j]), e.trace());
    }
  }

  // Lattice argmin in lexicographic order, ties toward the earlier point.
  std::size_t best = 0;
  for (std::size_t c = 1; c < costs.size(); ++c) {
    if (costs[c] < costs[best] - 1e-12 * (1.0 + std::abs(costs[best]))) best = c;
  }
  Point best_point = model::point2(xs[best / ny], ys[best % ny]);
  double best_cost = costs[best];
  MatrixXd best_cov = covs[best];

  // Off-lattice sensor positions still compete for the argmin.
  for (const Point& q : pos) {
    const CovMatrix e = cost_at(q);
    result.cost_curve.emplace_back(q, e.trace());
    if (e.trace() < best_cost - 1e-12 * (1.0 + std::abs(best_cost))) {
      best_point = q;
      best_cost = e.trace();
      best_cov = e.matrix();
    }
  }

  result.best_location = best_point;
  result.best_cost = best_cost;
  for (const Point& q : pos) {
    if ((q - best_point).norm() <= 1e-12) result.endpoint_optimal = true;
  }

  // Strict 8-neighborhood local minima; the 4-neighborhood reports spurious
  // minima along diagonal valleys of this cost surface.
  for (int i = 0; i < nx; ++i) {
    for (int j = 0; j < ny; ++j) {
      bool strict_min = true;
      for (int di = -1; di <= 1 && strict_min; ++di) {
        for (int dj = -1; dj <= 1; ++dj) {
          if (di == 0 && dj == 0) continue;
          const int ii = i + di;
          const int jj = j + dj;
          if (ii < 0 || ii >= nx || jj < 0 || jj >= ny) continue;
          if (costs[idx(ii, jj)] <= costs[idx(i, j)]) {
            strict_min = false;
            break;
          }
        }
      }
      if (strict_min) result.local_minima.push_back(model::point2(xs[i], ys[j]));
    }
  }

  result.loewner_dominant = true;
  for (std::size_t c = 0; c < covs.size(); ++c) {
    if (!linalg::loewner_leq(best_cov, covs[c])) {
      result.loewner_dominant = false;
      break;
    }
  }
  return result;
}

}  // namespace lossykf::placement
