#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "netperf/net_model.hpp"

namespace netperf::qt {

/// Per-class stationary metrics of one output port. Delays include the
/// class's own transmission time.
struct QueueMetrics {
  std::vector<double> blocking;    // p_b[i]
  std::vector<double> delay;       // W[i], seconds
  std::vector<double> delay_var;   // Var[i], seconds^2
  std::vector<double> mean_queue;  // E[q_i], packets in system

  std::size_t classes() const { return blocking.size(); }
};

/// M/M/1/b with b counting the customer in service.
QueueMetrics mm1b_metrics(double lambda, double mu, int b);

enum class SchedulerKind { kStrictPriority, kGps };

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// Enumerated state space and generator of a scheduled output port.
///
/// Strict priority states are (s, q_1..q_p) where s is the 1-based class in
/// service or 0 when idle; GPS states are the tuples q. State 0 is always the
/// empty system. Classes are 0-based in the API, 0 having top priority.
class CtmcModel {
 public:
  SchedulerKind kind() const { return kind_; }
  int classes() const { return static_cast<int>(buffers_.size()); }
  std::size_t size() const { return states_.size() / stride_; }

  std::span<const double> arrival_rates() const { return lambda_; }
  std::span<const double> service_rates() const { return mu_; }
  std::span<const double> weights() const { return weight_; }
  std::span<const int> buffers() const { return buffers_; }

  /// Queue lengths of every class in state `s`.
  std::span<const int> queue_lengths(std::size_t s) const;
  /// 1-based class in service, 0 when idle. Always 0 for GPS.
  int in_service(std::size_t s) const;

  /// Index of a state or -1. `served` is ignored for GPS.
  long index_of(int served, std::span<const int> q) const;

  /// State entered when a class-`cls` customer is admitted in state `s`;
  /// -1 when its buffer is full.
  long arrival_target(std::size_t s, int cls) const;

  const SparseMatrix& generator() const { return generator_; }

  /// Same state space with some arrival rates replaced.
  CtmcModel with_arrival_rates(std::vector<double> lambda) const;

  friend CtmcModel build_sp_generator(std::vector<double>, std::vector<double>, std::vector<int>, std::size_t);
  friend CtmcModel build_gps_generator(std::vector<double>, std::vector<double>, std::vector<double>,
                                       std::vector<int>, std::size_t);

 private:
  void enumerate(std::size_t max_states);
  void assemble();
  long flat_key(int served, std::span<const int> q) const;

  SchedulerKind kind_ = SchedulerKind::kGps;
  std::vector<double> lambda_;
  std::vector<double> mu_;
  std::vector<double> weight_;
  std::vector<int> buffers_;
  std::size_t stride_ = 1;       // ints per stored state
  std::vector<int> states_;      // SP: [s, q...]; GPS: [q...]
  std::vector<long> lookup_;     // flat key -> state index or -1
  SparseMatrix generator_;
};

inline constexpr std::size_t kDefaultStateCap = 1'000'000;

/// Strict priority, non-preemptive, per-class buffers.
CtmcModel build_sp_generator(std::vector<double> lambda, std::vector<double> mu, std::vector<int> buffers,
                             std::size_t max_states = kDefaultStateCap);

/// Generalized processor sharing; shared by WFQ and DRR ports.
CtmcModel build_gps_generator(std::vector<double> lambda, std::vector<double> mu, std::vector<double> weights,
                              std::vector<int> buffers, std::size_t max_states = kDefaultStateCap);

struct GeneratorAudit {
  double max_abs_row_sum = 0.0;
  double min_off_diagonal = 0.0;
  bool closed = true;  // every transition lands on an enumerated state
};

GeneratorAudit audit_generator(const CtmcModel& model);

enum class StationaryMethod { kAuto, kArnoldi, kDirect };

struct StationaryOptions {
  StationaryMethod method = StationaryMethod::kAuto;
  double tolerance = 1e-10;  // on the rate-normalized residual
  int krylov_dim = 30;
  int max_restarts = 40;
};

struct StationaryResult {
  Eigen::VectorXd pi;
  double residual = 0.0;             // ||pi Q||_inf / max|Q_ii|
  double raw_residual = 0.0;         // ||pi Q||_inf
  StationaryMethod used = StationaryMethod::kDirect;
  int restarts = 0;
};

/// Stationary law on the class reachable from the empty state (zero mass on
/// the pruned states). Throws Error with the residual when neither the Krylov
/// eigensolve nor the direct sparse solve reaches the tolerance.
StationaryResult stationary_distribution(const CtmcModel& model, const StationaryOptions& options = {});

std::vector<double> blocking_probabilities(const CtmcModel& model, const Eigen::VectorXd& pi);
std::vector<double> mean_queue_lengths(const CtmcModel& model, const Eigen::VectorXd& pi);

/// Little's law per class; nullopt where the accepted rate is zero.
std::vector<std::optional<double>> class_delay(const CtmcModel& model, const Eigen::VectorXd& pi,
                                               std::span<const double> lambda, std::span<const double> blocking);

struct DelayMoments {
  double mean = 0.0;
  double second = 0.0;
  double var = 0.0;
};

/// Sojourn-time moments of an admitted class-`cls` customer, from the
/// first-passage time to "queue cls empty" with the arrivals that cannot
/// overtake it switched off, mixed over admission states with PASTA weights.
DelayMoments first_passage_delay_moments(const CtmcModel& model, const Eigen::VectorXd& pi, int cls);

/// Dispatches on the port's policy: FIFO to mm1b_metrics, SP to the priority
/// chain, WFQ and DRR to the GPS chain.
QueueMetrics port_metrics(Policy policy, std::span<const double> lambda, std::span<const double> mu,
                          std::span<const int> buffers, std::span<const double> weights,
                          std::size_t max_states = kDefaultStateCap);

}  // namespace netperf::qt
