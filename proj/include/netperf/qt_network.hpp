#pragma once

#include <vector>

#include "netperf/net_model.hpp"
#include "netperf/qt_engine.hpp"

namespace netperf::qt {

struct NetworkOptions {
  double tolerance = 1e-6;  // max rate change, packets/s
  int max_iterations = 50;
  /// Halve rate updates once the residual grows between iterations.
  bool damping = false;
  double damping_factor = 0.5;
  std::size_t max_states = kDefaultStateCap;
};

struct FixedPointState {
  std::vector<std::vector<double>> hop_rates;  // offered rate per flow per hop
  std::vector<double> queue_rates;             // aggregate per global queue
  std::vector<QueueMetrics> ports;             // per link index, classes by priority
  std::vector<std::vector<double>> port_inputs;  // rates the metrics were computed from
  int iterations = 0;
  double residual = 0.0;
  bool converged = false;
  std::vector<double> residual_history;
};

/// Zero-loss start: every hop sees the flow's source rate.
FixedPointState initial_state(const NetworkSample& sample, const SampleIndex& index);

/// Recomputes every port's metrics from the current aggregate rates.
void map_queues(FixedPointState& state, const NetworkSample& sample, const SampleIndex& index,
                std::size_t max_states = kDefaultStateCap);

/// Propagates losses along the paths; returns the max absolute rate change.
/// With `damping` in (0, 1] the new rates are blended with the old ones.
double map_paths(FixedPointState& state, const NetworkSample& sample, const SampleIndex& index,
                 double damping = 0.0);

/// Per-flow sums of hop delays and variances, loss from the hop product;
/// per-queue occupancy E[q]/b and blocking.
PerfLabels reduce(const FixedPointState& state, const NetworkSample& sample, const SampleIndex& index);

struct NetworkResult {
  PerfLabels labels;
  FixedPointState state;
};

/// Alternates map_queues and map_paths until the residual drops below the
/// tolerance. Without convergence the lowest-residual iterate is returned
/// with state.converged = false.
NetworkResult solve(const NetworkSample& sample, const NetworkOptions& options = {});

/// Service rate of a queue's aggregate: capacity over the rate-weighted mean
/// packet size of its flows.
double service_rate(const FixedPointState& state, const NetworkSample& sample, const SampleIndex& index, int queue);

}  // namespace netperf::qt
