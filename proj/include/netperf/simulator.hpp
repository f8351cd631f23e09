#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <vector>

#include "netperf/net_model.hpp"

namespace netperf::sim {

struct Packet {
  std::uint64_t id = 0;
  int flow = 0;      // flow index
  int hop = 0;       // position in the flow's path
  double bits = 0.0;
  double birth = 0.0;
  double tag = 0.0;  // WFQ virtual finish tag at the current port
  bool measured = false;
};

/// Buffers and scheduler state of one output port. Classes are the port's
/// queues in ascending priority order; buffer counts include the packet in
/// transmission.
class PortState {
 public:
  explicit PortState(const OutputPort& port);

  Policy policy() const { return policy_; }
  int classes() const { return static_cast<int>(buffers_.size()); }
  /// Packets of class `cls` in the port, including one in service.
  int occupancy(int cls) const;
  bool busy() const { return in_service_.has_value(); }
  const std::optional<Packet>& in_service() const { return in_service_; }
  int serving_class() const { return serving_class_; }
  double deficit(int cls) const { return deficit_[cls]; }
  double quantum_unit() const { return quantum_unit_; }

  /// Tail drop: false when the class buffer is full.
  bool enqueue(int cls, Packet packet);

  /// Next class to transmit or nullopt when every buffer is empty. Updates
  /// DRR deficits and the round-robin cursor. Only call when not busy.
  std::optional<int> scheduler_select();

  /// Moves the head of `cls` into service.
  const Packet& start_service(int cls);
  /// Ends the current transmission and returns the packet.
  Packet finish_service();

 private:
  Policy policy_;
  std::vector<int> buffers_;
  std::vector<double> weights_;
  std::vector<std::deque<Packet>> waiting_;
  std::optional<Packet> in_service_;
  int serving_class_ = -1;

  // WFQ (self-clocked virtual finish times).
  double virtual_time_ = 0.0;
  std::vector<double> last_finish_;

  // DRR.
  std::vector<double> deficit_;
  std::vector<char> granted_;
  int cursor_ = 0;
  double quantum_unit_ = 0.0;
};

enum class PacketSizeModel { kExponential, kFixed };

struct SimOptions {
  std::uint64_t seed = 1;
  /// Exactly one horizon applies; the packet budget wins when both are set.
  std::optional<std::uint64_t> packet_budget;
  std::optional<double> sim_seconds;
  double warmup_fraction = 0.1;
  PacketSizeModel sizes = PacketSizeModel::kExponential;
  /// Keep serving after the last arrival until the network is empty.
  bool drain = true;
};

struct FlowStats {
  std::uint64_t sent = 0;       // measured packets generated
  std::uint64_t delivered = 0;
  std::uint64_t dropped = 0;
  std::uint64_t in_flight = 0;  // still in the network when the run stopped
};

struct QueueStats {
  double mean_packets = 0.0;         // time average over the window
  double arrival_seen_packets = 0.0; // average seen by measured arrivals
  std::uint64_t arrivals = 0;        // measured arrivals, dropped included
  std::uint64_t drops = 0;
  std::uint64_t served_packets = 0;  // transmissions started in the window
  double served_bits = 0.0;
};

struct SimResult {
  PerfLabels labels;
  std::vector<FlowStats> flows;    // sample flow order
  std::vector<QueueStats> queues;  // queue_order()
  double window_start = 0.0;
  double window_end = 0.0;
  std::uint64_t events = 0;
};

enum class TraceKind { kEnqueue, kDrop, kStart, kDepart, kDeliver };

struct TraceEvent {
  TraceKind kind;
  double time;
  int queue;  // global queue index
  std::uint64_t packet;
  int flow;
};

using TraceFn = std::function<void(const TraceEvent&)>;

/// Packet-level run of a validated sample. Labels use only packets generated
/// after the warmup cut; occupancy is averaged over the same window.
SimResult run(const NetworkSample& sample, const SimOptions& options, const TraceFn& trace = {});

}  // namespace netperf::sim
