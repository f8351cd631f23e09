#include "netperf/net_model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace netperf {

namespace {

template <typename... Args>
std::string cat(const Args&... args) {
  std::ostringstream os;
  (os << ... << args);
  return os.str();
}

std::string describe(const QueueRef& q) {
  return cat("queue(link ", q.link, ", priority ", q.priority, ")");
}

bool is_weakly_connected(const Topology& topo) {
  if (topo.nodes.empty()) return true;
  std::map<NodeId, int> index;
  for (const auto n : topo.nodes) index.emplace(n, static_cast<int>(index.size()));
  std::vector<int> parent(index.size());
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (const auto& l : topo.links) {
    const auto a = index.find(l.src);
    const auto b = index.find(l.dst);
    if (a == index.end() || b == index.end()) continue;
    parent[find(a->second)] = find(b->second);
  }
  const int root = find(0);
  for (std::size_t i = 1; i < parent.size(); ++i) {
    if (find(static_cast<int>(i)) != root) return false;
  }
  return true;
}

void check_descriptor(const Flow& f, std::vector<std::string>& out) {
  const auto& d = f.descriptor;
  const auto who = cat("flow ", f.id, ": ");
  if (!(d.rate >= 0.0) || !std::isfinite(d.rate)) out.push_back(who + "rate must be a finite value >= 0");
  switch (d.model) {
    case TrafficModel::kOnOff: {
      const auto& p = d.on_off;
      if (!(p.on_min > 0 && p.on_min <= p.on_max && p.off_min >= 0 && p.off_min <= p.off_max)) {
        out.push_back(who + "on/off period bounds are inconsistent");
      }
      break;
    }
    case TrafficModel::kAutocorrExp:
      if (!(std::abs(d.ar.a) < 1.0)) out.push_back(who + "AR coefficient must satisfy |a| < 1");
      if (!(d.ar.s2 > 0.0)) out.push_back(who + "AR marginal variance must be > 0");
      break;
    case TrafficModel::kModulatedExp:
      if (!(std::abs(d.mod.a) < 1.0)) out.push_back(who + "AR coefficient must satisfy |a| < 1");
      if (!(d.mod.sigma2 > 0.0)) out.push_back(who + "AR innovation variance must be > 0");
      if (d.rate > 0.0 && !(d.mod.scale > 0.0)) out.push_back(who + "modulation scale A must be > 0");
      break;
    default:
      break;
  }
}

}  // namespace

std::string_view to_string(Policy policy) {
  switch (policy) {
    case Policy::kFifo: return "FIFO";
    case Policy::kSp: return "SP";
    case Policy::kWfq: return "WFQ";
    case Policy::kDrr: return "DRR";
  }
  return "?";
}

Policy policy_from_string(std::string_view name) {
  std::string upper(name);
  std::transform(upper.begin(), upper.end(), upper.begin(), [](unsigned char c) { return std::toupper(c); });
  if (upper == "FIFO") return Policy::kFifo;
  if (upper == "SP") return Policy::kSp;
  if (upper == "WFQ") return Policy::kWfq;
  if (upper == "DRR") return Policy::kDrr;
  throw Error(cat("unknown scheduling policy '", name, "'"));
}

std::vector<std::string> validate(const NetworkSample& sample) {
  std::vector<std::string> out;
  const auto& topo = sample.topology;

  std::set<NodeId> nodes;
  for (const auto n : topo.nodes) {
    if (!nodes.insert(n).second) out.push_back(cat("node ", n, ": duplicate id"));
  }

  std::map<LinkId, const Link*> links;
  std::set<std::pair<NodeId, NodeId>> endpoints;
  for (const auto& l : topo.links) {
    if (!links.emplace(l.id, &l).second) out.push_back(cat("link ", l.id, ": duplicate id"));
    if (!nodes.contains(l.src) || !nodes.contains(l.dst)) {
      out.push_back(cat("link ", l.id, ": endpoint references unknown node"));
    }
    if (l.src == l.dst) out.push_back(cat("link ", l.id, ": self loop"));
    if (!endpoints.emplace(l.src, l.dst).second) {
      out.push_back(cat("link ", l.id, ": second directed link ", l.src, "->", l.dst));
    }
    if (!(l.c_ref > 0.0)) out.push_back(cat("link ", l.id, ": c_ref must be > 0"));
    if (!(l.s_f >= 1.0)) out.push_back(cat("link ", l.id, ": s_f must be >= 1"));
  }
  if (!is_weakly_connected(topo)) out.push_back("topology: graph is not weakly connected");

  std::map<LinkId, const OutputPort*> ports;
  for (const auto& p : sample.ports) {
    if (!links.contains(p.link_id)) out.push_back(cat("port of link ", p.link_id, ": unknown link"));
    if (!ports.emplace(p.link_id, &p).second) out.push_back(cat("port of link ", p.link_id, ": duplicate port"));
    const auto nq = p.queues.size();
    if (p.policy == Policy::kFifo && nq != 1) {
      out.push_back(cat("port of link ", p.link_id, ": FIFO requires exactly 1 queue, found ", nq));
    } else if (p.policy != Policy::kFifo && nq < 2) {
      out.push_back(cat("port of link ", p.link_id, ": ", to_string(p.policy), " requires at least 2 queues, found ", nq));
    }
    std::set<int> priorities;
    for (const auto& q : p.queues) {
      if (q.buffer_size < 1) out.push_back(cat("port of link ", p.link_id, ": buffer_size must be >= 1"));
      if (!(q.weight > 0.0)) out.push_back(cat("port of link ", p.link_id, ": weight must be > 0"));
      if (q.priority < 0) out.push_back(cat("port of link ", p.link_id, ": negative priority"));
      if (!priorities.insert(q.priority).second) {
        out.push_back(cat("port of link ", p.link_id, ": duplicate priority ", q.priority));
      }
    }
  }
  for (const auto& [id, l] : links) {
    if (!ports.contains(id)) out.push_back(cat("link ", id, ": has no output port"));
  }

  std::set<FlowId> flow_ids;
  for (const auto& f : sample.flows) {
    const auto who = cat("flow ", f.id, ": ");
    if (!flow_ids.insert(f.id).second) out.push_back(who + "duplicate id");
    if (f.path.empty()) {
      out.push_back(who + "empty path");
      continue;
    }
    if (!(f.mean_pkt_bits > 0.0)) out.push_back(who + "mean_pkt_bits must be > 0");
    check_descriptor(f, out);
    const Link* prev = nullptr;
    for (std::size_t k = 0; k < f.path.size(); ++k) {
      const auto& hop = f.path[k];
      const auto li = links.find(hop.link);
      if (li == links.end()) {
        out.push_back(cat(who, "hop ", k, " references unknown link ", hop.link));
        prev = nullptr;
        continue;
      }
      const Link* link = li->second;
      if (hop.queue.link != hop.link) {
        out.push_back(cat(who, "hop ", k, " uses ", describe(hop.queue), " outside the port of link ", hop.link));
      } else if (const auto pi = ports.find(hop.link); pi != ports.end()) {
        const auto& qs = pi->second->queues;
        const bool found = std::any_of(qs.begin(), qs.end(),
                                       [&](const QueueSpec& q) { return q.priority == hop.queue.priority; });
        if (!found) out.push_back(cat(who, "hop ", k, " references unresolved ", describe(hop.queue)));
      }
      if (k == 0 && link->src != f.src) out.push_back(cat(who, "path does not start at src ", f.src));
      if (prev != nullptr && prev->dst != link->src) {
        out.push_back(cat(who, "hops ", k - 1, " and ", k, " are not adjacent (", prev->dst, " != ", link->src, ")"));
      }
      if (k + 1 == f.path.size() && link->dst != f.dst) out.push_back(cat(who, "path does not end at dst ", f.dst));
      prev = link;
    }
  }

  if (sample.labels) {
    const auto& lab = *sample.labels;
    if (lab.flows.size() != sample.flows.size()) out.push_back("labels: flow count does not match the sample");
    for (const auto& fl : lab.flows) {
      const auto who = cat("labels of flow ", fl.flow_id, ": ");
      if (!(fl.mean_delay >= 0.0)) out.push_back(who + "negative delay");
      if (!(fl.jitter >= 0.0)) out.push_back(who + "negative jitter");
      if (!(fl.loss_ratio >= 0.0 && fl.loss_ratio <= 1.0)) out.push_back(who + "loss ratio outside [0,1]");
    }
    for (const auto& ql : lab.queues) {
      const auto who = cat("labels of ", describe(ql.queue), ": ");
      if (!(ql.mean_occupancy >= 0.0 && ql.mean_occupancy <= 1.0)) out.push_back(who + "occupancy outside [0,1]");
      if (!(ql.loss_ratio >= 0.0 && ql.loss_ratio <= 1.0)) out.push_back(who + "loss ratio outside [0,1]");
    }
  }
  return out;
}

void require_valid(const NetworkSample& sample) {
  const auto violations = validate(sample);
  if (violations.empty()) return;
  std::string msg = "invalid sample:";
  for (const auto& v : violations) msg += "\n  " + v;
  throw Error(msg);
}

const Link& find_link(const NetworkSample& sample, LinkId id) {
  for (const auto& l : sample.topology.links) {
    if (l.id == id) return l;
  }
  throw Error(cat("unknown link ", id));
}

const OutputPort& find_port(const NetworkSample& sample, LinkId link) {
  for (const auto& p : sample.ports) {
    if (p.link_id == link) return p;
  }
  throw Error(cat("unknown link ", link));
}

const QueueSpec& find_queue(const NetworkSample& sample, const QueueRef& queue) {
  for (const auto& q : find_port(sample, queue.link).queues) {
    if (q.priority == queue.priority) return q;
  }
  throw Error(cat("unresolved ", describe(queue)));
}

std::set<FlowId> flows_through_queue(const NetworkSample& sample, const QueueRef& queue) {
  find_queue(sample, queue);
  std::set<FlowId> out;
  for (const auto& f : sample.flows) {
    for (const auto& hop : f.path) {
      if (hop.queue == queue) {
        out.insert(f.id);
        break;
      }
    }
  }
  return out;
}

std::vector<QueueRef> queues_of_link(const NetworkSample& sample, LinkId link) {
  find_link(sample, link);
  const auto& port = find_port(sample, link);
  std::vector<QueueRef> out;
  out.reserve(port.queues.size());
  for (const auto& q : port.queues) out.push_back({link, q.priority});
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<QueueRef> queue_order(const NetworkSample& sample) {
  std::vector<LinkId> ids;
  for (const auto& l : sample.topology.links) ids.push_back(l.id);
  std::sort(ids.begin(), ids.end());
  std::vector<QueueRef> out;
  for (const auto id : ids) {
    const auto qs = queues_of_link(sample, id);
    out.insert(out.end(), qs.begin(), qs.end());
  }
  return out;
}

SampleIndex::SampleIndex(const NetworkSample& sample) {
  for (const auto& l : sample.topology.links) links_.push_back(&l);
  std::sort(links_.begin(), links_.end(), [](const Link* a, const Link* b) { return a->id < b->id; });
  for (std::size_t i = 0; i < links_.size(); ++i) link_lookup_.emplace(links_[i]->id, static_cast<int>(i));

  ports_.assign(links_.size(), nullptr);
  for (const auto& p : sample.ports) {
    const auto it = link_lookup_.find(p.link_id);
    if (it == link_lookup_.end()) throw Error(cat("port references unknown link ", p.link_id));
    ports_[it->second] = &p;
  }

  link_queues_.resize(links_.size());
  for (std::size_t li = 0; li < links_.size(); ++li) {
    const OutputPort* port = ports_[li];
    if (port == nullptr) throw Error(cat("link ", links_[li]->id, " has no output port"));
    std::vector<const QueueSpec*> specs;
    for (const auto& q : port->queues) specs.push_back(&q);
    std::sort(specs.begin(), specs.end(), [](const QueueSpec* a, const QueueSpec* b) { return a->priority < b->priority; });
    for (std::size_t c = 0; c < specs.size(); ++c) {
      const int gi = static_cast<int>(queues_.size());
      const QueueRef ref{links_[li]->id, specs[c]->priority};
      queues_.push_back(ref);
      queue_specs_.push_back(specs[c]);
      queue_link_.push_back(static_cast<int>(li));
      queue_class_.push_back(static_cast<int>(c));
      link_queues_[li].push_back(gi);
      queue_lookup_.emplace(ref, gi);
    }
  }

  queue_flows_.resize(queues_.size());
  flow_paths_.resize(sample.flows.size());
  for (std::size_t fi = 0; fi < sample.flows.size(); ++fi) {
    for (const auto& hop : sample.flows[fi].path) {
      HopIndex h;
      h.link = link_index(hop.link);
      h.queue = queue_index(hop.queue);
      h.cls = queue_class_[h.queue];
      flow_paths_[fi].push_back(h);
      auto& qf = queue_flows_[h.queue];
      if (qf.empty() || qf.back() != static_cast<int>(fi)) qf.push_back(static_cast<int>(fi));
    }
  }
}

int SampleIndex::link_index(LinkId id) const {
  const auto it = link_lookup_.find(id);
  if (it == link_lookup_.end()) throw Error(cat("unknown link ", id));
  return it->second;
}

int SampleIndex::queue_index(const QueueRef& ref) const {
  const auto it = queue_lookup_.find(ref);
  if (it == queue_lookup_.end()) throw Error(cat("unresolved ", describe(ref)));
  return it->second;
}

std::vector<double> link_utilization(const NetworkSample& sample) {
  const SampleIndex index(sample);
  std::vector<double> bits(index.num_links(), 0.0);
  for (int f = 0; f < index.num_flows(); ++f) {
    const auto& flow = sample.flows[f];
    for (const auto& hop : index.flow_path(f)) bits[hop.link] += flow.descriptor.rate * flow.mean_pkt_bits;
  }
  for (int l = 0; l < index.num_links(); ++l) bits[l] /= index.link(l).capacity();
  return bits;
}

double max_link_utilization(const NetworkSample& sample) {
  const auto u = link_utilization(sample);
  return u.empty() ? 0.0 : *std::max_element(u.begin(), u.end());
}

}  // namespace netperf
