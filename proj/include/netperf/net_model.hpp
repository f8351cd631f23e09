#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "netperf/traffic_descriptor.hpp"

namespace netperf {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using NodeId = int;
using LinkId = int;
using FlowId = int;

struct Link {
  LinkId id = 0;
  NodeId src = 0;
  NodeId dst = 0;
  double c_ref = 0.0;  // bits per second
  double s_f = 1.0;

  double capacity() const { return c_ref * s_f; }
};

struct Topology {
  std::vector<NodeId> nodes;
  std::vector<Link> links;
};

enum class Policy { kFifo, kSp, kWfq, kDrr };
inline constexpr int kNumPolicies = 4;

std::string_view to_string(Policy policy);
Policy policy_from_string(std::string_view name);

struct QueueSpec {
  int buffer_size = 32;  // packets, including the one in transmission
  int priority = 0;      // 0 is served first under SP
  double weight = 1.0;
};

struct OutputPort {
  LinkId link_id = 0;
  Policy policy = Policy::kFifo;
  std::vector<QueueSpec> queues;
};

/// A queue is named by the link its port feeds and its priority value, which
/// is unique within the port.
struct QueueRef {
  LinkId link = 0;
  int priority = 0;

  auto operator<=>(const QueueRef&) const = default;
};

struct Hop {
  QueueRef queue;
  LinkId link = 0;
};

struct Flow {
  FlowId id = 0;
  NodeId src = 0;
  NodeId dst = 0;
  std::vector<Hop> path;
  TrafficDescriptor descriptor;
  double mean_pkt_bits = 1000.0;
};

struct FlowLabel {
  FlowId flow_id = 0;
  double mean_delay = 0.0;  // seconds
  double jitter = 0.0;      // delay variance, seconds^2
  double loss_ratio = 0.0;
  bool reliable = true;     // false when the flow delivered no packets
};

struct QueueLabel {
  QueueRef queue;
  double mean_occupancy = 0.0;  // fraction of buffer_size
  double loss_ratio = 0.0;
};

/// Per-flow entries follow the sample's flow order; per-queue entries follow
/// queue_order().
struct PerfLabels {
  std::vector<FlowLabel> flows;
  std::vector<QueueLabel> queues;
};

/// Provenance carried alongside generated samples.
struct SampleMeta {
  std::uint64_t seed = 0;
  std::string topology_id;
  std::string tag;
};

struct NetworkSample {
  Topology topology;
  std::vector<OutputPort> ports;
  std::vector<Flow> flows;
  std::optional<PerfLabels> labels;
  std::optional<SampleMeta> meta;
};

/// Returns one human-readable message per broken invariant; empty when the
/// sample is well formed.
std::vector<std::string> validate(const NetworkSample& sample);

/// Throws Error listing the violations when validate() is not empty.
void require_valid(const NetworkSample& sample);

std::set<FlowId> flows_through_queue(const NetworkSample& sample, const QueueRef& queue);

/// Queues of the port feeding `link`, ascending by priority.
std::vector<QueueRef> queues_of_link(const NetworkSample& sample, LinkId link);

/// Every queue in the sample: links ascending by id, then ascending priority.
std::vector<QueueRef> queue_order(const NetworkSample& sample);

const Link& find_link(const NetworkSample& sample, LinkId id);
const OutputPort& find_port(const NetworkSample& sample, LinkId link);
const QueueSpec& find_queue(const NetworkSample& sample, const QueueRef& queue);

/// Dense integer indexing of a validated sample. Links are indexed in
/// ascending id order, queues in queue_order(), flows in sample order.
class SampleIndex {
 public:
  explicit SampleIndex(const NetworkSample& sample);

  struct HopIndex {
    int queue = 0;  // global queue index
    int link = 0;   // link index
    int cls = 0;    // class position inside the port (priority rank)
  };

  int num_links() const { return static_cast<int>(links_.size()); }
  int num_queues() const { return static_cast<int>(queues_.size()); }
  int num_flows() const { return static_cast<int>(flow_paths_.size()); }

  const Link& link(int index) const { return *links_[index]; }
  const OutputPort& port(int link_index) const { return *ports_[link_index]; }
  const QueueRef& queue_ref(int index) const { return queues_[index]; }
  const QueueSpec& queue_spec(int index) const { return *queue_specs_[index]; }
  int queue_link(int index) const { return queue_link_[index]; }
  int queue_class(int index) const { return queue_class_[index]; }

  /// Global queue indices of the link's port, ascending priority.
  const std::vector<int>& link_queues(int link_index) const { return link_queues_[link_index]; }
  const std::vector<HopIndex>& flow_path(int flow) const { return flow_paths_[flow]; }
  /// Flow indices through each queue, ascending.
  const std::vector<int>& queue_flows(int queue) const { return queue_flows_[queue]; }

  int link_index(LinkId id) const;
  int queue_index(const QueueRef& ref) const;

 private:
  std::vector<const Link*> links_;
  std::vector<const OutputPort*> ports_;
  std::vector<QueueRef> queues_;
  std::vector<const QueueSpec*> queue_specs_;
  std::vector<int> queue_link_;
  std::vector<int> queue_class_;
  std::vector<std::vector<int>> link_queues_;
  std::vector<std::vector<HopIndex>> flow_paths_;
  std::vector<std::vector<int>> queue_flows_;
  std::map<LinkId, int> link_lookup_;
  std::map<QueueRef, int> queue_lookup_;
};

/// Offered load of each link (bits/s over capacity) ignoring losses, in link
/// index order.
std::vector<double> link_utilization(const NetworkSample& sample);
double max_link_utilization(const NetworkSample& sample);

}  // namespace netperf
