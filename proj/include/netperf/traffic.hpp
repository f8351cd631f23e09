#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "netperf/random.hpp"
#include "netperf/traffic_descriptor.hpp"

namespace netperf {

/// Streaming state of one flow's arrival process. Single owner.
struct TrafficState {
  Rng rng{0};
  double z = 0.0;           // AR(1) latent for the autocorrelated models
  bool on = true;           // On-Off phase
  double clock = 0.0;       // time of the last emitted arrival (On-Off only)
  double phase_end = 0.0;   // end of the current On-Off phase
};

/// Fresh state for `desc`, seeded so that a flow's stream depends only on
/// (dataset seed, flow id). The AR latent starts in its stationary law.
TrafficState make_traffic_state(const TrafficDescriptor& desc, std::uint64_t seed);
TrafficState make_traffic_state(const TrafficDescriptor& desc, std::uint64_t dataset_seed, std::uint64_t flow_id);

/// Next inter-arrival time in seconds; +infinity for a zero-rate flow.
double next_interarrival(const TrafficDescriptor& desc, TrafficState& state);

/// z' = a z + N(0, sigma2). Throws Error when |a| >= 1 or sigma2 <= 0.
double ar1_step(double a, double sigma2, double z, Rng& rng);

/// log(1 - Phi(x)) accurate in both tails.
double log_normal_survival(double x);

/// Inverse-CDF map from a N(0, s2) draw to an Exp(rate) draw.
double copula_interarrival(double z, double s2, double rate);

struct EmpiricalStats {
  double mean_rate = 0.0;
  double cv2 = 0.0;
  std::vector<double> autocorr;  // autocorr[k-1] is the lag-k coefficient
};

/// Mean rate, squared coefficient of variation (unbiased variance) and lag
/// 1..max_lag autocorrelations. Throws Error for fewer than two values.
EmpiricalStats empirical_stats(std::span<const double> seq, int max_lag = 1);

}  // namespace netperf
