#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "lossykf/errors.hpp"
#include "lossykf/expectation.hpp"
#include "lossykf/filter.hpp"
#include "lossykf/linalg.hpp"
#include "lossykf/model.hpp"

namespace lossykf::mc {

using linalg::CovMatrix;
using linalg::MatrixXd;
using linalg::VectorXd;

struct SimConfig {
  int horizon = 100;
  int trials = 1;
  std::uint64_t master_seed = 0;
  model::Point base_location;
};

/// One trial: trace(P_k) for k = 1..horizon plus the arrival bitmask used
/// at each step.
struct TrajectoryRecord {
  std::vector<double> trace_p;
  std::vector<std::uint32_t> arrival_masks;
};

/// SplitMix64. Together with substream_seed below this is the entire
/// reproducibility contract: trial t of run (scenario, config) draws from
/// mt19937_64(substream_seed(master_seed, t)), independent of threading.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

inline std::uint64_t substream_seed(std::uint64_t master_seed, std::uint64_t stream_index) {
  std::uint64_t s = master_seed;
  const std::uint64_t mixed_master = splitmix64(s);
  s = mixed_master ^ (0x9E3779B97F4A7C15ull * (stream_index + 1));
  return splitmix64(s);
}

inline std::mt19937_64 substream(std::uint64_t master_seed, std::uint64_t stream_index) {
  return std::mt19937_64(substream_seed(master_seed, stream_index));
}

/// Draw z ~ N(0, I) and return sqrt_cov * z. A fresh distribution per call
/// keeps the draw count a pure function of the dimension.
inline VectorXd sample_gaussian(const MatrixXd& sqrt_cov, std::mt19937_64& rng) {
  std::normal_distribution<double> n01(0.0, 1.0);
  VectorXd z(sqrt_cov.cols());
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = n01(rng);
  return sqrt_cov * z;
}

/// Independent Bernoulli inclusion per sensor. Always consumes exactly one
/// uniform per sensor so downstream draws stay aligned.
inline model::SensorSubset sample_arrivals(const std::vector<double>& lambda,
                                           std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::vector<int> idx;
  for (std::size_t j = 0; j < lambda.size(); ++j) {
    if (!(lambda[j] >= 0.0 && lambda[j] <= 1.0)) {
      throw DomainError("arrival probability " + std::to_string(lambda[j]) +
                        " outside [0, 1]");
    }
    const double u = u01(rng);
    if (u < lambda[j]) idx.push_back(static_cast<int>(j));
  }
  return model::SensorSubset(std::move(idx));
}

namespace detail {

/// Per-scenario constants hoisted out of the trial loop.
struct SimContext {
  std::vector<double> lambda;
  MatrixXd sqrt_p0;
  MatrixXd sqrt_q;
  std::vector<MatrixXd> sqrt_r;

  SimContext(const model::Scenario& scenario, const model::Point& base_location)
      : lambda(model::arrival_probs(scenario, base_location)),
        sqrt_p0(linalg::psd_sqrt(scenario.system().P0().matrix())),
        sqrt_q(linalg::psd_sqrt(scenario.system().Q().matrix())) {
    for (const model::Sensor& s : scenario.sensors()) {
      sqrt_r.push_back(linalg::psd_sqrt(s.R().matrix()));
    }
  }
};

/// Draw order per trial: x0; then per step: one v_j per sensor (index
/// order), N arrival uniforms, then w. Fixed regardless of which packets
/// arrive, so records are bit-stable.
inline TrajectoryRecord run_trial(const model::Scenario& scenario, const SimContext& ctx,
                                  const SimConfig& config, int trial_index) {
  const model::LinearSystem& sys = scenario.system();
  const int n_sensors = scenario.sensor_count();
  std::mt19937_64 rng = substream(config.master_seed, static_cast<std::uint64_t>(trial_index));

  VectorXd x = sample_gaussian(ctx.sqrt_p0, rng);
  filter::FilterState state{VectorXd::Zero(sys.state_dim()), sys.P0(), 0};

  TrajectoryRecord rec;
  rec.trace_p.reserve(config.horizon);
  rec.arrival_masks.reserve(config.horizon);
  for (int k = 0; k < config.horizon; ++k) {
    std::vector<VectorXd> measurements(n_sensors);
    for (int j = 0; j < n_sensors; ++j) {
      const model::Sensor& s = scenario.sensors()[j];
      measurements[j] = s.C() * x + sample_gaussian(ctx.sqrt_r[j], rng);
    }
    const model::SensorSubset omega = sample_arrivals(ctx.lambda, rng);

    Eigen::Index rows = 0;
    for (int j : omega.indices()) rows += measurements[j].size();
    VectorXd y(rows);
    Eigen::Index at = 0;
    for (int j : omega.indices()) {
      y.segment(at, measurements[j].size()) = measurements[j];
      at += measurements[j].size();
    }

    state = filter::lossy_step(state, scenario, omega, y).state;
    rec.trace_p.push_back(state.P.trace());
    rec.arrival_masks.push_back(omega.bitmask());

    x = sys.A() * x + sample_gaussian(ctx.sqrt_q, rng);
  }
  return rec;
}

inline void check_config(const SimConfig& config) {
  if (config.horizon < 1) throw DomainError("simulation horizon must be >= 1");
  if (config.trials < 1) throw DomainError("simulation trials must be >= 1");
}

}  // namespace detail

/// Simulate one trial: a synthetic state path, per-sensor measurements,
/// sampled arrivals, and the lossy filter, all on the trial's substream.
inline TrajectoryRecord simulate_trial(const model::Scenario& scenario, const SimConfig& config,
                                       int trial_index) {
  detail::check_config(config);
  if (trial_index < 0) throw DomainError("trial index must be >= 0");
  const detail::SimContext ctx(scenario, config.base_location);
  return detail::run_trial(scenario, ctx, config, trial_index);
}

/// Monte Carlo estimate of E[P_{k+1} | P_k]: average one-step covariance
/// under sampled arrival subsets. The covariance update does not depend on
/// the measurement values, so none are synthesized; sampled outcomes are
/// grouped and the per-outcome updates weighted by their frequencies.
inline CovMatrix empirical_one_step(const CovMatrix& p, const model::Scenario& scenario,
                                    const std::vector<double>& lambda, int trials,
                                    std::uint64_t seed) {
  if (trials < 1) throw DomainError("empirical_one_step requires trials >= 1");
  if (static_cast<int>(lambda.size()) != scenario.sensor_count()) {
    throw DimensionError("lambda length does not match sensor count");
  }
  std::mt19937_64 rng = substream(seed, 0);
  std::map<std::uint32_t, long> counts;
  for (int t = 0; t < trials; ++t) {
    ++counts[sample_arrivals(lambda, rng).bitmask()];
  }
  const model::LinearSystem& sys = scenario.system();
  const MatrixXd prediction =
      linalg::symmetrize(sys.A() * p.matrix() * sys.A().transpose() + sys.Q().matrix());
  MatrixXd acc = MatrixXd::Zero(sys.state_dim(), sys.state_dim());
  for (const auto& [mask, count] : counts) {
    const double weight = static_cast<double>(count) / trials;
    if (mask == 0) {
      acc += weight * prediction;
      continue;
    }
    const model::SensorSubset omega = model::SensorSubset::from_bitmask(mask);
    const auto [f, g] = model::stack_subset(scenario.sensors(), omega);
    acc += weight * filter::detail::covariance_update(p, sys, f, g).next.matrix();
  }
  return CovMatrix(std::move(acc));
}

struct StepStats {
  double mean_trace = 0.0;
  double stderr_trace = 0.0;
};

/// Across-trial mean and standard error of trace(P_k) at each step.
/// Trials are aggregated in fixed blocks of 64 and the blocks reduced in
/// index order, so the result is bit-identical for any thread count.
inline std::vector<StepStats> mean_trace_curve(const model::Scenario& scenario,
                                               const SimConfig& config, int threads = 1) {
  detail::check_config(config);
  if (threads < 1) throw DomainError("thread count must be >= 1");
  const detail::SimContext ctx(scenario, config.base_location);

  constexpr int kBlock = 64;
  const int n_blocks = (config.trials + kBlock - 1) / kBlock;
  std::vector<std::vector<double>> block_sum(n_blocks);
  std::vector<std::vector<double>> block_sumsq(n_blocks);

  std::atomic<int> next_block{0};
  auto worker = [&]() {
    while (true) {
      const int b = next_block.fetch_add(1);
      if (b >= n_blocks) break;
      std::vector<double> sum(config.horizon, 0.0);
      std::vector<double> sumsq(config.horizon, 0.0);
      const int t_end = std::min(config.trials, (b + 1) * kBlock);
      for (int t = b * kBlock; t < t_end; ++t) {
        const TrajectoryRecord rec = detail::run_trial(scenario, ctx, config, t);
        for (int k = 0; k < config.horizon; ++k) {
          sum[k] += rec.trace_p[k];
          sumsq[k] += rec.trace_p[k] * rec.trace_p[k];
        }
      }
      block_sum[b] = std::move(sum);
      block_sumsq[b] = std::move(sumsq);
    }
  };

  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    const int n_workers = std::min(threads, n_blocks);
    pool.reserve(n_workers);
    for (int i = 0; i < n_workers; ++i) pool.emplace_back(worker);
    for (std::thread& th : pool) th.join();
  }

  std::vector<StepStats> out(config.horizon);
  const double t = config.trials;
  for (int k = 0; k < config.horizon; ++k) {
    double sum = 0.0;
    double sumsq = 0.0;
    for (int b = 0; b < n_blocks; ++b) {
      sum += block_sum[b][k];
      sumsq += block_sumsq[b][k];
    }
    const double mean = sum / t;
    out[k].mean_trace = mean;
    if (config.trials > 1) {
      const double var = std::max(0.0, (sumsq - t * mean * mean) / (t - 1.0));
      out[k].stderr_trace = std::sqrt(var / t);
    }
  }
  return out;
}

}  // namespace lossykf::mc
