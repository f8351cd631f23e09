#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "netperf/net_model.hpp"
#include "netperf/sample_io.hpp"

namespace netperf::gnn {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

inline constexpr int kLinkFeatures = 2 + kNumPolicies;
inline constexpr int kMaxClasses = 3;
inline constexpr int kQueueFeatures = 2 + kMaxClasses;
inline constexpr int kFlowFeatures = static_cast<int>(kDescriptorVectorSize);

struct Hyper {
  int d = 32;
  int T = 8;
  int l_max = 32;
};

enum class Target { kDelay, kJitter, kLoss };

std::string to_string(Target target);
Target target_from_string(const std::string& name);

/// Named slice of the flat parameter vector, a rows x cols column-major matrix.
struct Block {
  std::string name;
  std::size_t offset = 0;
  int rows = 0;
  int cols = 0;

  std::size_t size() const { return static_cast<std::size_t>(rows) * cols; }
};

/// All weights in one flat vector. Three GRU cells (frnn, uq, lrnn) with
/// W = [Wz; Wr; Wh], U = [Uz; Ur; Uh], b; readouts rf (d -> d -> d -> 1) and
/// rq (d -> d -> d -> 2) with ReLU hidden layers.
class Params {
 public:
  Params() = default;
  explicit Params(int d);

  int d() const { return d_; }
  const std::vector<Block>& blocks() const { return blocks_; }
  const Block& block(const std::string& name) const;

  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }

  Eigen::Map<const Mat> mat(const Block& b) const { return {values_.data() + b.offset, b.rows, b.cols}; }
  Eigen::Map<Mat> mat(const Block& b) { return {values_.data() + b.offset, b.rows, b.cols}; }

  /// Uniform(-sqrt(3/fan_in), sqrt(3/fan_in)) weights, zero biases.
  void init(std::uint64_t seed);

  static std::size_t count(int d);

 private:
  int d_ = 0;
  std::vector<Block> blocks_;
  std::vector<double> values_;
};

/// Min-max constants per numeric feature; rates and capacities are taken in
/// log space before scaling.
struct FeatureScaler {
  std::array<double, 2> link_lo{}, link_hi{};
  std::array<double, 2> queue_lo{}, queue_hi{};
  std::array<double, kFlowFeatures> flow_lo{}, flow_hi{};
  std::array<bool, kNumPolicies> policies{};  // vocabulary seen in training
  int max_classes = 0;

  static FeatureScaler fit(const std::vector<NetworkSample>& samples);

  std::array<double, kLinkFeatures> link(const Link& link, Policy policy) const;
  std::array<double, kQueueFeatures> queue(const QueueSpec& spec, int cls) const;
  std::array<double, kFlowFeatures> flow(const TrafficDescriptor& desc) const;
};

struct Model {
  Hyper hyper;
  Target target = Target::kDelay;
  FeatureScaler scaler;
  Params params;

  /// Fresh model with normalizers fitted on `samples`.
  static Model create(const std::vector<NetworkSample>& samples, const Hyper& hyper, Target target,
                      std::uint64_t seed);
};

Json to_json(const Model& model);
Model model_from_json(const Json& j);
void save_model(const std::filesystem::path& path, const Model& model);
Model load_model(const std::filesystem::path& path);

/// One GRU step. `prefix` names the cell ("frnn", "uq", "lrnn").
Vec gru_cell(const Params& params, const std::string& prefix, const Vec& x, const Vec& h);

struct ForwardOutput {
  std::vector<double> occupancy;  // per queue, queue_order()
  std::vector<double> jitter;     // per queue, dimensionless
  std::vector<double> loss;       // per flow
  std::vector<Vec> h_f, h_q, h_l;
};

ForwardOutput forward(const Model& model, const NetworkSample& sample);

struct FlowEstimate {
  double delay = 0.0;
  double jitter = 0.0;
};

/// delay = sum over hops of (O b + 1) S / Cap; jitter = sum of J (S / Cap)^2.
std::vector<FlowEstimate> assemble_flow_delay_jitter(const NetworkSample& sample,
                                                     const std::vector<double>& occupancy,
                                                     const std::vector<double>& jitter);

/// Mean squared error over flows of the chosen metric; unreliable true flows
/// are skipped for delay and jitter.
double loss_mse(const PerfLabels& pred, const PerfLabels& truth, Target target);

/// Training objective: squared relative error of the assembled delay or
/// jitter (falling back to transmission-time scaling when the label is 0), or
/// squared error of the loss ratio, averaged over every usable flow in the
/// batch.
double objective(const Model& model, const std::vector<const NetworkSample*>& batch);

struct Gradient {
  double loss = 0.0;
  int flows = 0;
  std::vector<double> values;  // same layout as Params::values()
};

/// Reverse-mode gradient of objective(). Across L_max segment boundaries the
/// flow state gradient is cut.
Gradient grad(const Model& model, const std::vector<const NetworkSample*>& batch);

struct TrainOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double lr_decay = 1.0;  // learning rate multiplier per epoch
  int epochs = 200;
  int batch_size = 8;
  std::uint64_t seed = 7;
  std::function<void(int epoch, double train, double validation)> on_epoch;
};

struct EpochLog {
  int epoch = 0;
  double train = 0.0;
  double validation = 0.0;
};

struct TrainResult {
  Model model;  // best validation epoch
  std::vector<EpochLog> curve;
  int best_epoch = 0;
};

/// Adam on objective(). Without validation samples the training loss picks
/// the best epoch.
TrainResult train(Model model, const std::vector<NetworkSample>& train_set,
                  const std::vector<NetworkSample>& validation, const TrainOptions& options);

/// Objective averaged over a whole set.
double evaluate(const Model& model, const std::vector<NetworkSample>& samples);

struct Inference {
  PerfLabels labels;
  double wall_ms = 0.0;
};

Inference infer(const Model& model, const NetworkSample& sample);

}  // namespace netperf::gnn
