#include "netperf/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>

#include "netperf/random.hpp"
#include "netperf/traffic.hpp"

namespace netperf::sim {

PortState::PortState(const OutputPort& port) : policy_(port.policy) {
  std::vector<QueueSpec> specs = port.queues;
  std::sort(specs.begin(), specs.end(), [](const QueueSpec& a, const QueueSpec& b) { return a.priority < b.priority; });
  for (const auto& q : specs) {
    buffers_.push_back(q.buffer_size);
    weights_.push_back(q.weight);
  }
  waiting_.resize(specs.size());
  last_finish_.assign(specs.size(), 0.0);
  deficit_.assign(specs.size(), 0.0);
  granted_.assign(specs.size(), 0);
}

int PortState::occupancy(int cls) const {
  return static_cast<int>(waiting_[cls].size()) + (serving_class_ == cls ? 1 : 0);
}

bool PortState::enqueue(int cls, Packet packet) {
  if (!(packet.bits > 0.0)) throw Error("enqueue: packet size must be > 0");
  if (occupancy(cls) >= buffers_[cls]) return false;
  if (policy_ == Policy::kWfq) {
    packet.tag = std::max(virtual_time_, last_finish_[cls]) + packet.bits / weights_[cls];
    last_finish_[cls] = packet.tag;
  }
  quantum_unit_ = std::max(quantum_unit_, packet.bits);
  waiting_[cls].push_back(packet);
  return true;
}

std::optional<int> PortState::scheduler_select() {
  const int n = classes();
  bool any = false;
  for (const auto& q : waiting_) any = any || !q.empty();
  if (!any) {
    // Idle port: the virtual clock restarts.
    virtual_time_ = 0.0;
    std::fill(last_finish_.begin(), last_finish_.end(), 0.0);
    return std::nullopt;
  }
  switch (policy_) {
    case Policy::kFifo:
    case Policy::kSp:
      for (int c = 0; c < n; ++c) {
        if (!waiting_[c].empty()) return c;
      }
      break;
    case Policy::kWfq: {
      int best = -1;
      for (int c = 0; c < n; ++c) {
        if (waiting_[c].empty()) continue;
        if (best < 0 || waiting_[c].front().tag < waiting_[best].front().tag) best = c;
      }
      return best;
    }
    case Policy::kDrr:
      while (true) {
        const int c = cursor_;
        if (waiting_[c].empty()) {
          deficit_[c] = 0.0;
          granted_[c] = 0;
          cursor_ = (cursor_ + 1) % n;
          continue;
        }
        if (!granted_[c]) {
          deficit_[c] += weights_[c] * quantum_unit_;
          granted_[c] = 1;
        }
        if (deficit_[c] >= waiting_[c].front().bits) {
          deficit_[c] -= waiting_[c].front().bits;
          return c;
        }
        granted_[c] = 0;
        cursor_ = (cursor_ + 1) % n;
      }
  }
  return std::nullopt;
}

const Packet& PortState::start_service(int cls) {
  if (busy()) throw Error("start_service: port is already transmitting");
  if (waiting_[cls].empty()) throw Error("start_service: queue is empty");
  in_service_ = waiting_[cls].front();
  waiting_[cls].pop_front();
  serving_class_ = cls;
  if (policy_ == Policy::kWfq) virtual_time_ = in_service_->tag;
  return *in_service_;
}

Packet PortState::finish_service() {
  if (!busy()) throw Error("finish_service: port is idle");
  Packet p = *in_service_;
  const int cls = serving_class_;
  in_service_.reset();
  serving_class_ = -1;
  if (policy_ == Policy::kDrr && waiting_[cls].empty()) {
    deficit_[cls] = 0.0;
    granted_[cls] = 0;
  }
  return p;
}

namespace {

struct Event {
  double time;
  std::uint64_t seq;
  int kind;  // 0 = flow arrival, 1 = transmission end on a link
  int id;
  bool operator>(const Event& o) const { return time != o.time ? time > o.time : seq > o.seq; }
};

struct Welford {
  std::uint64_t n = 0;
  double mean = 0.0;
  double m2 = 0.0;
  void add(double x) {
    ++n;
    const double d = x - mean;
    mean += d / static_cast<double>(n);
    m2 += d * (x - mean);
  }
  double variance() const { return n > 1 ? m2 / static_cast<double>(n - 1) : 0.0; }
};

class Simulation {
 public:
  Simulation(const NetworkSample& sample, const SimOptions& opt, const TraceFn& trace)
      : sample_(sample), index_(sample), opt_(opt), trace_(trace) {
    if (!opt.packet_budget && !opt.sim_seconds) throw Error("simulate: no horizon given");
    if (opt.packet_budget && *opt.packet_budget == 0) throw Error("simulate: packet budget must be positive");
    if (!opt.packet_budget && !(*opt.sim_seconds > 0.0)) throw Error("simulate: horizon must be positive");
    if (!(opt.warmup_fraction >= 0.0 && opt.warmup_fraction < 1.0)) {
      throw Error("simulate: warmup fraction must lie in [0, 1)");
    }
    for (int l = 0; l < index_.num_links(); ++l) ports_.emplace_back(index_.port(l));
    const int nq = index_.num_queues();
    queue_stats_.resize(nq);
    area_.assign(nq, 0.0);
    last_change_.assign(nq, 0.0);
    seen_sum_.assign(nq, 0.0);
    flow_stats_.resize(index_.num_flows());
    delays_.resize(index_.num_flows());
    for (int f = 0; f < index_.num_flows(); ++f) {
      const auto& flow = sample.flows[f];
      traffic_.push_back(make_traffic_state(flow.descriptor, opt.seed, static_cast<std::uint64_t>(flow.id)));
      size_rng_.emplace_back(derive_seed(opt.seed, (std::uint64_t{1} << 40) + static_cast<std::uint64_t>(flow.id)));
      schedule_arrival(f, 0.0);
    }
    if (opt.packet_budget) {
      warmup_count_ = static_cast<std::uint64_t>(std::floor(opt.warmup_fraction * static_cast<double>(*opt.packet_budget)));
    } else {
      cut_ = opt.warmup_fraction * *opt.sim_seconds;
      stop_ = *opt.sim_seconds;
    }
  }

  SimResult execute() {
    std::uint64_t events = 0;
    while (!heap_.empty()) {
      const Event ev = heap_.top();
      if (!opt_.drain && ev.time > stop_) break;
      if (ev.kind == 0 && stopped_) {
        heap_.pop();
        continue;
      }
      heap_.pop();
      ++events;
      now_ = ev.time;
      if (ev.kind == 0) {
        on_arrival(ev.id);
      } else {
        on_departure(ev.id);
      }
    }
    const double end = opt_.drain ? now_ : std::min(now_, stop_);
    for (int q = 0; q < index_.num_queues(); ++q) touch(q, end);
    return collect(events);
  }

 private:
  void push(double t, int kind, int id) { heap_.push(Event{t, seq_++, kind, id}); }

  void schedule_arrival(int f, double from) {
    const double gap = next_interarrival(sample_.flows[f].descriptor, traffic_[f]);
    if (std::isfinite(gap)) push(from + gap, 0, f);
  }

  void emit(TraceKind kind, int queue, const Packet& p) {
    if (trace_) trace_(TraceEvent{kind, now_, queue, p.id, p.flow});
  }

  // Integrates occupancy of queue q up to time t, clipped to [cut, stop].
  void touch(int q, double t) {
    const double lo = std::max(last_change_[q], cut_);
    const double hi = std::min(t, stop_);
    if (hi > lo) {
      const auto& hop = queue_pos(q);
      area_[q] += (hi - lo) * ports_[hop.first].occupancy(hop.second);
    }
    last_change_[q] = t;
  }

  std::pair<int, int> queue_pos(int q) const { return {index_.queue_link(q), index_.queue_class(q)}; }

  void on_arrival(int f) {
    if (opt_.sim_seconds && !opt_.packet_budget && now_ > stop_) {
      stopped_ = true;
      return;
    }
    const auto& flow = sample_.flows[f];
    Packet p;
    p.id = generated_;
    p.flow = f;
    p.birth = now_;
    p.bits = opt_.sizes == PacketSizeModel::kFixed ? flow.mean_pkt_bits
                                                   : size_rng_[f].exponential(1.0 / flow.mean_pkt_bits);
    if (opt_.packet_budget) {
      if (generated_ == warmup_count_) cut_ = now_;
      p.measured = generated_ >= warmup_count_;
      if (generated_ + 1 == *opt_.packet_budget) {
        stop_ = now_;
        stopped_ = true;
      }
    } else {
      p.measured = now_ >= cut_;
    }
    ++generated_;
    if (p.measured) {
      ++flow_stats_[f].sent;
      ++flow_stats_[f].in_flight;
    }
    forward(p);
    if (!stopped_) schedule_arrival(f, now_);
  }

  void forward(Packet p) {
    const auto& hop = index_.flow_path(p.flow)[p.hop];
    auto& port = ports_[hop.link];
    touch(hop.queue, now_);
    auto& qs = queue_stats_[hop.queue];
    if (p.measured) {
      ++qs.arrivals;
      seen_sum_[hop.queue] += port.occupancy(hop.cls);
    }
    if (!port.enqueue(hop.cls, p)) {
      emit(TraceKind::kDrop, hop.queue, p);
      if (p.measured) {
        ++qs.drops;
        ++flow_stats_[p.flow].dropped;
        --flow_stats_[p.flow].in_flight;
      }
      return;
    }
    emit(TraceKind::kEnqueue, hop.queue, p);
    if (!port.busy()) start_next(hop.link);
  }

  void start_next(int link) {
    auto& port = ports_[link];
    const auto cls = port.scheduler_select();
    if (!cls) return;
    const int q = index_.link_queues(link)[*cls];
    touch(q, now_);
    const Packet& p = port.start_service(*cls);
    emit(TraceKind::kStart, q, p);
    if (now_ >= cut_ && now_ <= stop_) {
      ++queue_stats_[q].served_packets;
      queue_stats_[q].served_bits += p.bits;
    }
    push(now_ + p.bits / index_.link(link).capacity(), 1, link);
  }

  void on_departure(int link) {
    auto& port = ports_[link];
    const int q = index_.link_queues(link)[port.serving_class()];
    touch(q, now_);
    Packet p = port.finish_service();
    emit(TraceKind::kDepart, q, p);
    start_next(link);
    if (++p.hop < static_cast<int>(index_.flow_path(p.flow).size())) {
      forward(p);
      return;
    }
    emit(TraceKind::kDeliver, q, p);
    if (p.measured) {
      auto& fs = flow_stats_[p.flow];
      ++fs.delivered;
      --fs.in_flight;
      delays_[p.flow].add(now_ - p.birth);
    }
  }

  SimResult collect(std::uint64_t events) {
    SimResult r;
    r.events = events;
    r.window_start = std::isfinite(cut_) ? cut_ : 0.0;
    r.window_end = std::isfinite(stop_) ? stop_ : now_;
    r.flows = flow_stats_;
    const double window = r.window_end - r.window_start;
    for (int f = 0; f < index_.num_flows(); ++f) {
      const auto& fs = flow_stats_[f];
      FlowLabel label;
      label.flow_id = sample_.flows[f].id;
      label.mean_delay = delays_[f].n ? delays_[f].mean : 0.0;
      label.jitter = delays_[f].variance();
      const auto resolved = fs.delivered + fs.dropped;
      label.loss_ratio = resolved ? static_cast<double>(fs.dropped) / static_cast<double>(resolved) : 0.0;
      label.reliable = fs.delivered > 0;
      r.labels.flows.push_back(label);
    }
    for (int q = 0; q < index_.num_queues(); ++q) {
      auto qs = queue_stats_[q];
      qs.mean_packets = window > 0.0 ? area_[q] / window : 0.0;
      qs.arrival_seen_packets = qs.arrivals ? seen_sum_[q] / static_cast<double>(qs.arrivals) : 0.0;
      r.queues.push_back(qs);
      QueueLabel label;
      label.queue = index_.queue_ref(q);
      label.mean_occupancy = qs.mean_packets / index_.queue_spec(q).buffer_size;
      label.loss_ratio = qs.arrivals ? static_cast<double>(qs.drops) / static_cast<double>(qs.arrivals) : 0.0;
      r.labels.queues.push_back(label);
    }
    return r;
  }

  const NetworkSample& sample_;
  SampleIndex index_;
  SimOptions opt_;
  const TraceFn& trace_;

  std::vector<PortState> ports_;
  std::vector<TrafficState> traffic_;
  std::vector<Rng> size_rng_;
  std::priority_queue<Event, std::vector<Event>, std::greater<>> heap_;
  std::uint64_t seq_ = 0;
  double now_ = 0.0;

  std::uint64_t generated_ = 0;
  std::uint64_t warmup_count_ = 0;
  bool stopped_ = false;
  double cut_ = std::numeric_limits<double>::infinity();
  double stop_ = std::numeric_limits<double>::infinity();

  std::vector<FlowStats> flow_stats_;
  std::vector<Welford> delays_;
  std::vector<QueueStats> queue_stats_;
  std::vector<double> area_;
  std::vector<double> last_change_;
  std::vector<double> seen_sum_;
};

}  // namespace

SimResult run(const NetworkSample& sample, const SimOptions& options, const TraceFn& trace) {
  require_valid(sample);
  Simulation sim(sample, options, trace);
  return sim.execute();
}

}  // namespace netperf::sim
