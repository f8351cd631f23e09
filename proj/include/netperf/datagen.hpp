#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "netperf/net_model.hpp"
#include "netperf/random.hpp"
#include "netperf/sample_io.hpp"
#include "netperf/simulator.hpp"

namespace netperf::datagen {

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

struct GenConfig {
  std::uint64_t seed = 1;
  int min_nodes = 8;
  int max_nodes = 24;
  double alpha = 0.6;  // degree-rank exponent
  double beta = 1.5;   // credit of the lowest-ranked node
  std::vector<double> capacities{10e6, 25e6, 50e6, 100e6};  // bits/s
  std::vector<double> sf_factors{1, 2, 5, 10};
  Range c_ref{1e6, 100e6};
  std::array<double, kNumPolicies> policy_mix{1, 1, 1, 1};  // FIFO, SP, WFQ, DRR
  std::vector<int> buffer_sizes{16, 32};
  Range queue_weight{1, 10};
  std::array<double, kNumTrafficModels> traffic_mix{1, 1, 1, 1, 1};
  Range rate{40, 2000};
  Range ar_a{0.0, 0.9};
  Range ar_s2{3, 12};
  Range mod_a{0.0, 0.9};
  Range mod_variance{0.25, 1.0};  // stationary variance of the modulating AR
  OnOffParams on_off{0.05, 0.15, 0.05, 0.15};
  Range flows_per_node{2, 4};
  Range utilization{0.5, 0.95};  // busiest-link offered load
  int num_topologies = 0;        // 0: a fresh topology per sample
  double pkt_bits = 1000.0;
  /// When set, the traffic multiplier is retuned with simulations until the
  /// largest per-flow loss falls inside this band.
  std::optional<Range> target_max_loss;
  /// Probe horizon; 0 reuses the labeling run inside build_dataset.
  std::uint64_t probe_packets = 0;
};

Json to_json(const GenConfig& config);
/// Missing keys keep their defaults.
GenConfig config_from_json(const Json& j);
void check_config(const GenConfig& config);

/// Power-law degree topology: node at rank r gets credit beta (r/n)^-alpha,
/// stubs are paired at random, every undirected edge becomes two links and
/// components are bridged. Node ids 0..n-1.
Topology generate_topology(int n, double alpha, double beta, std::uint64_t seed);

/// Splits a capacity into (c_ref, s_f) with s_f from the factor set and
/// c_ref inside its range.
std::pair<double, double> augment_capacity(double capacity, const GenConfig& config, std::uint64_t seed);
std::pair<double, double> augment_capacity(double capacity, const GenConfig& config, Rng& rng);

/// Hop-count shortest path as link ids; ties go to the lowest next node id.
std::vector<LinkId> shortest_path(const Topology& topology, NodeId src, NodeId dst);

/// Unlabeled random sample. With `topology` given, only ports, flows and
/// traffic are drawn. `probe` is the simulator setup used for congestion
/// tuning; by default probe_packets with the sample seed.
NetworkSample generate_sample(const GenConfig& config, std::uint64_t seed,
                              const std::optional<Topology>& topology = std::nullopt,
                              const std::optional<sim::SimOptions>& probe = std::nullopt);

/// Multiplier that puts the busiest link at `target` offered load.
double calibrate_rates(NetworkSample& sample, double target);

/// Multiplies every flow rate by `factor`.
void scale_rates(NetworkSample& sample, double factor);

/// Bisects a rate multiplier until the simulated largest per-flow loss lies
/// in `band`; returns the applied multiplier. The sample keeps the closest
/// setting found when the band is not reached.
double tune_congestion(NetworkSample& sample, const Range& band, const sim::SimOptions& probe);

struct Dataset {
  std::vector<NetworkSample> samples;
  Json manifest;
};

/// `count` samples labeled by the simulator. Sample i uses seed
/// derive_seed(config.seed, i) for both generation and simulation.
Dataset build_dataset(const GenConfig& config, int count, const sim::SimOptions& sim);

/// Splits so that no topology id appears on both sides; roughly `fraction`
/// of the topologies go to the second set.
std::pair<std::vector<NetworkSample>, std::vector<NetworkSample>> split_by_topology(
    const std::vector<NetworkSample>& samples, double fraction, std::uint64_t seed);

}  // namespace netperf::datagen
