#include "netperf/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <string>

namespace netperf::datagen {

namespace {

Json range_json(const Range& r) { return Json::array({r.lo, r.hi}); }

Range range_from(const Json& j, const Range& fallback) {
  if (!j.is_array() || j.size() != 2) return fallback;
  return Range{j[0].get<double>(), j[1].get<double>()};
}

double draw(Rng& rng, const Range& r) { return r.hi > r.lo ? rng.uniform(r.lo, r.hi) : r.lo; }

template <typename Weights>
int pick_weighted(Rng& rng, const Weights& w) {
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  double u = rng.uniform() * total;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (w[i] <= 0.0) continue;
    if (u < w[i]) return static_cast<int>(i);
    u -= w[i];
  }
  for (std::size_t i = w.size(); i-- > 0;) {
    if (w[i] > 0.0) return static_cast<int>(i);
  }
  return 0;
}

void check_range(const Range& r, const char* name) {
  if (!(r.lo <= r.hi)) throw Error(std::string("generator config: empty range for ") + name);
}

}  // namespace

Json to_json(const GenConfig& c) {
  Json policies = Json::object();
  for (int p = 0; p < kNumPolicies; ++p) policies[std::string(to_string(static_cast<Policy>(p)))] = c.policy_mix[p];
  Json traffic = Json::object();
  for (int m = 0; m < kNumTrafficModels; ++m) {
    traffic[std::string(to_string(static_cast<TrafficModel>(m)))] = c.traffic_mix[m];
  }
  return Json{{"seed", c.seed},
              {"nodes", Json::array({c.min_nodes, c.max_nodes})},
              {"alpha", c.alpha},
              {"beta", c.beta},
              {"capacities", c.capacities},
              {"sf_factors", c.sf_factors},
              {"c_ref", range_json(c.c_ref)},
              {"policy_mix", policies},
              {"buffer_sizes", c.buffer_sizes},
              {"queue_weight", range_json(c.queue_weight)},
              {"traffic_mix", traffic},
              {"rate", range_json(c.rate)},
              {"ar_a", range_json(c.ar_a)},
              {"ar_s2", range_json(c.ar_s2)},
              {"mod_a", range_json(c.mod_a)},
              {"mod_variance", range_json(c.mod_variance)},
              {"on_off", Json::array({c.on_off.on_min, c.on_off.on_max, c.on_off.off_min, c.on_off.off_max})},
              {"flows_per_node", range_json(c.flows_per_node)},
              {"utilization", range_json(c.utilization)},
              {"num_topologies", c.num_topologies},
              {"pkt_bits", c.pkt_bits},
              {"target_max_loss", c.target_max_loss ? range_json(*c.target_max_loss) : Json()},
              {"probe_packets", c.probe_packets}};
}

GenConfig config_from_json(const Json& j) {
  GenConfig c;
  if (!j.is_object()) throw Error("generator config must be a JSON object");
  c.seed = j.value("seed", c.seed);
  if (j.contains("nodes")) {
    c.min_nodes = j["nodes"].at(0).get<int>();
    c.max_nodes = j["nodes"].at(1).get<int>();
  }
  c.alpha = j.value("alpha", c.alpha);
  c.beta = j.value("beta", c.beta);
  c.capacities = j.value("capacities", c.capacities);
  c.sf_factors = j.value("sf_factors", c.sf_factors);
  c.c_ref = range_from(j.value("c_ref", Json()), c.c_ref);
  if (j.contains("policy_mix")) {
    c.policy_mix.fill(0.0);
    for (const auto& [k, v] : j["policy_mix"].items()) c.policy_mix[static_cast<int>(policy_from_string(k))] = v;
  }
  c.buffer_sizes = j.value("buffer_sizes", c.buffer_sizes);
  c.queue_weight = range_from(j.value("queue_weight", Json()), c.queue_weight);
  if (j.contains("traffic_mix")) {
    c.traffic_mix.fill(0.0);
    for (const auto& [k, v] : j["traffic_mix"].items()) {
      c.traffic_mix[static_cast<int>(traffic_model_from_string(k))] = v;
    }
  }
  c.rate = range_from(j.value("rate", Json()), c.rate);
  c.ar_a = range_from(j.value("ar_a", Json()), c.ar_a);
  c.ar_s2 = range_from(j.value("ar_s2", Json()), c.ar_s2);
  c.mod_a = range_from(j.value("mod_a", Json()), c.mod_a);
  c.mod_variance = range_from(j.value("mod_variance", Json()), c.mod_variance);
  if (j.contains("on_off")) {
    const auto& o = j["on_off"];
    c.on_off = {o.at(0).get<double>(), o.at(1).get<double>(), o.at(2).get<double>(), o.at(3).get<double>()};
  }
  c.flows_per_node = range_from(j.value("flows_per_node", Json()), c.flows_per_node);
  c.utilization = range_from(j.value("utilization", Json()), c.utilization);
  c.num_topologies = j.value("num_topologies", c.num_topologies);
  c.pkt_bits = j.value("pkt_bits", c.pkt_bits);
  if (j.contains("target_max_loss") && !j["target_max_loss"].is_null()) {
    c.target_max_loss = range_from(j["target_max_loss"], Range{0.01, 0.06});
  }
  c.probe_packets = j.value("probe_packets", c.probe_packets);
  check_config(c);
  return c;
}

void check_config(const GenConfig& c) {
  if (c.min_nodes < 3 || c.max_nodes < c.min_nodes) throw Error("generator config: node range must satisfy 3 <= min <= max");
  if (!(c.alpha > 0.0) || !(c.beta > 0.0)) throw Error("generator config: alpha and beta must be > 0");
  if (c.capacities.empty() || c.sf_factors.empty() || c.buffer_sizes.empty()) {
    throw Error("generator config: capacities, sf_factors and buffer_sizes must be non-empty");
  }
  for (const double f : c.sf_factors) {
    if (!(f >= 1.0)) throw Error("generator config: scale factors must be >= 1");
  }
  for (const int b : c.buffer_sizes) {
    if (b < 1) throw Error("generator config: buffer sizes must be >= 1");
  }
  check_range(c.c_ref, "c_ref");
  check_range(c.queue_weight, "queue_weight");
  check_range(c.rate, "rate");
  check_range(c.ar_a, "ar_a");
  check_range(c.ar_s2, "ar_s2");
  check_range(c.mod_a, "mod_a");
  check_range(c.mod_variance, "mod_variance");
  check_range(c.flows_per_node, "flows_per_node");
  check_range(c.utilization, "utilization");
  if (c.target_max_loss) check_range(*c.target_max_loss, "target_max_loss");
  if (!(c.queue_weight.lo > 0.0) || !(c.rate.lo > 0.0) || !(c.utilization.lo > 0.0)) {
    throw Error("generator config: weights, rates and utilization must be positive");
  }
  if (c.ar_a.lo <= -1.0 || c.ar_a.hi >= 1.0 || c.mod_a.lo <= -1.0 || c.mod_a.hi >= 1.0) {
    throw Error("generator config: AR coefficients must lie in (-1, 1)");
  }
  if (std::accumulate(c.policy_mix.begin(), c.policy_mix.end(), 0.0) <= 0.0 ||
      std::accumulate(c.traffic_mix.begin(), c.traffic_mix.end(), 0.0) <= 0.0) {
    throw Error("generator config: policy and traffic mixes need a positive weight");
  }
}

Topology generate_topology(int n, double alpha, double beta, std::uint64_t seed) {
  if (n < 3) throw Error("generate_topology: need at least 3 nodes");
  if (!(alpha > 0.0) || !(beta > 0.0)) throw Error("generate_topology: alpha and beta must be > 0");
  Rng rng(seed);

  std::vector<int> rank(n);
  std::iota(rank.begin(), rank.end(), 1);
  rng.shuffle(rank);
  std::vector<int> credit(n);
  long total = 0;
  for (int v = 0; v < n; ++v) {
    const double c = beta * std::pow(static_cast<double>(rank[v]) / n, -alpha);
    const double fl = std::floor(c);
    credit[v] = std::min(n - 1, static_cast<int>(fl) + (rng.bernoulli(c - fl) ? 1 : 0));
    total += credit[v];
  }
  if (total < 2) throw Error("generate_topology: parameters give no edges");

  std::set<std::pair<int, int>> edges;
  std::vector<int> stubs;
  for (int v = 0; v < n; ++v) stubs.insert(stubs.end(), credit[v], v);
  int failures = 0;
  while (stubs.size() >= 2 && failures < 50 * n) {
    const auto i = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(stubs.size()) - 1));
    auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(stubs.size()) - 2));
    if (j >= i) ++j;
    const int a = stubs[i];
    const int b = stubs[j];
    if (a == b || edges.count({std::min(a, b), std::max(a, b)})) {
      ++failures;
      continue;
    }
    edges.insert({std::min(a, b), std::max(a, b)});
    stubs.erase(stubs.begin() + static_cast<long>(std::max(i, j)));
    stubs.erase(stubs.begin() + static_cast<long>(std::min(i, j)));
  }

  // Bridge every component to the one holding node 0.
  std::vector<int> comp(n, -1);
  std::vector<std::vector<int>> adj(n);
  for (const auto& [a, b] : edges) {
    adj[a].push_back(b);
    adj[b].push_back(a);
  }
  std::vector<std::vector<int>> members;
  for (int s = 0; s < n; ++s) {
    if (comp[s] >= 0) continue;
    members.emplace_back();
    std::deque<int> todo{s};
    comp[s] = static_cast<int>(members.size()) - 1;
    while (!todo.empty()) {
      const int v = todo.front();
      todo.pop_front();
      members.back().push_back(v);
      for (const int w : adj[v]) {
        if (comp[w] < 0) {
          comp[w] = comp[s];
          todo.push_back(w);
        }
      }
    }
  }
  std::vector<int> joined = members[0];
  for (std::size_t c = 1; c < members.size(); ++c) {
    const int a = members[c][rng.uniform_int(0, static_cast<std::int64_t>(members[c].size()) - 1)];
    const int b = joined[rng.uniform_int(0, static_cast<std::int64_t>(joined.size()) - 1)];
    edges.insert({std::min(a, b), std::max(a, b)});
    joined.insert(joined.end(), members[c].begin(), members[c].end());
  }

  Topology topo;
  for (int v = 0; v < n; ++v) topo.nodes.push_back(v);
  LinkId id = 0;
  for (const auto& [a, b] : edges) {
    topo.links.push_back(Link{id++, a, b, 1.0, 1.0});
    topo.links.push_back(Link{id++, b, a, 1.0, 1.0});
  }
  return topo;
}

std::pair<double, double> augment_capacity(double capacity, const GenConfig& config, Rng& rng) {
  if (!(capacity > 0.0)) throw Error("augment_capacity: capacity must be > 0");
  std::vector<double> feasible;
  for (const double f : config.sf_factors) {
    const double c_ref = capacity / f;
    if (c_ref >= config.c_ref.lo * (1 - 1e-12) && c_ref <= config.c_ref.hi * (1 + 1e-12)) feasible.push_back(f);
  }
  if (feasible.empty()) {
    throw Error("augment_capacity: no scale factor puts c_ref in range for capacity " + std::to_string(capacity));
  }
  const double s_f = feasible[rng.uniform_int(0, static_cast<std::int64_t>(feasible.size()) - 1)];
  return {capacity / s_f, s_f};
}

std::pair<double, double> augment_capacity(double capacity, const GenConfig& config, std::uint64_t seed) {
  Rng rng(seed);
  return augment_capacity(capacity, config, rng);
}

std::vector<LinkId> shortest_path(const Topology& topology, NodeId src, NodeId dst) {
  std::map<NodeId, std::vector<const Link*>> out, in;
  for (const auto& l : topology.links) {
    out[l.src].push_back(&l);
    in[l.dst].push_back(&l);
  }
  for (auto& [node, links] : out) {
    std::sort(links.begin(), links.end(), [](const Link* a, const Link* b) { return a->dst < b->dst; });
  }
  // Distances to dst over reversed links, then walk greedily from src.
  std::map<NodeId, int> dist{{dst, 0}};
  std::deque<NodeId> todo{dst};
  while (!todo.empty()) {
    const NodeId v = todo.front();
    todo.pop_front();
    for (const Link* l : in[v]) {
      if (!dist.count(l->src)) {
        dist[l->src] = dist[v] + 1;
        todo.push_back(l->src);
      }
    }
  }
  if (!dist.count(src)) {
    throw Error("shortest_path: node " + std::to_string(dst) + " is unreachable from " + std::to_string(src));
  }
  std::vector<LinkId> path;
  NodeId v = src;
  while (v != dst) {
    for (const Link* l : out[v]) {
      const auto it = dist.find(l->dst);
      if (it != dist.end() && it->second == dist[v] - 1) {
        path.push_back(l->id);
        v = l->dst;
        break;
      }
    }
  }
  return path;
}

void scale_rates(NetworkSample& sample, double factor) {
  for (auto& f : sample.flows) {
    f.descriptor.rate *= factor;
    if (f.descriptor.model == TrafficModel::kModulatedExp) f.descriptor.mod.scale *= factor;
  }
}

double calibrate_rates(NetworkSample& sample, double target) {
  const double current = max_link_utilization(sample);
  if (!(current > 0.0)) return 1.0;
  // Offered load is linear in a common multiplier.
  const double m = target / current;
  scale_rates(sample, m);
  return m;
}

double tune_congestion(NetworkSample& sample, const Range& band, const sim::SimOptions& opt) {
  const NetworkSample base = sample;
  auto max_loss = [&](double m) {
    NetworkSample s = base;
    scale_rates(s, m);
    double worst = 0.0;
    for (const auto& f : sim::run(s, opt).labels.flows) worst = std::max(worst, f.loss_ratio);
    return worst;
  };
  const double centre = std::sqrt(std::max(band.lo, 1e-6) * band.hi);
  double lo = 0.0;
  double hi = std::numeric_limits<double>::infinity();
  double m = 1.0;
  double best_m = 1.0;
  double best_gap = std::numeric_limits<double>::infinity();
  for (int it = 0; it < 30; ++it) {
    const double loss = max_loss(m);
    const double gap = std::abs(std::log(std::max(loss, 1e-9) / centre));
    if (gap < best_gap) {
      best_gap = gap;
      best_m = m;
    }
    if (loss >= band.lo && loss <= band.hi) break;
    if (loss > band.hi) {
      hi = m;
      m = lo > 0.0 ? 0.5 * (lo + m) : 0.8 * m;
    } else {
      lo = m;
      m = std::isfinite(hi) ? 0.5 * (m + hi) : 1.25 * m;
    }
  }
  scale_rates(sample, best_m);
  return best_m;
}

NetworkSample generate_sample(const GenConfig& config, std::uint64_t seed, const std::optional<Topology>& topology,
                              const std::optional<sim::SimOptions>& probe) {
  check_config(config);
  Rng rng(seed);
  NetworkSample s;
  if (topology) {
    s.topology = *topology;
  } else {
    const int n = static_cast<int>(rng.uniform_int(config.min_nodes, config.max_nodes));
    s.topology = generate_topology(n, config.alpha, config.beta, rng.next_u64());
  }

  for (auto& l : s.topology.links) {
    const double cap = config.capacities[rng.uniform_int(0, static_cast<std::int64_t>(config.capacities.size()) - 1)];
    std::tie(l.c_ref, l.s_f) = augment_capacity(cap, config, rng);
  }

  constexpr int kClasses = 3;
  for (const auto& l : s.topology.links) {
    OutputPort port{l.id, static_cast<Policy>(pick_weighted(rng, config.policy_mix)), {}};
    const int nq = port.policy == Policy::kFifo ? 1 : kClasses;
    for (int q = 0; q < nq; ++q) {
      const int b = config.buffer_sizes[rng.uniform_int(0, static_cast<std::int64_t>(config.buffer_sizes.size()) - 1)];
      const double w = port.policy == Policy::kWfq || port.policy == Policy::kDrr ? draw(rng, config.queue_weight) : 1.0;
      port.queues.push_back(QueueSpec{b, q, w});
    }
    s.ports.push_back(std::move(port));
  }

  const int n = static_cast<int>(s.topology.nodes.size());
  const int flows = std::max(1, static_cast<int>(std::lround(draw(rng, config.flows_per_node) * n)));
  std::set<std::pair<NodeId, NodeId>> used;
  const long pairs = static_cast<long>(n) * (n - 1);
  for (int f = 0; f < flows && static_cast<long>(used.size()) < pairs; ++f) {
    NodeId a = 0, b = 0;
    do {
      a = s.topology.nodes[rng.uniform_int(0, n - 1)];
      b = s.topology.nodes[rng.uniform_int(0, n - 1)];
    } while (a == b || used.count({a, b}));
    used.insert({a, b});

    Flow flow;
    flow.id = f;
    flow.src = a;
    flow.dst = b;
    flow.mean_pkt_bits = config.pkt_bits;
    const int cls = static_cast<int>(rng.uniform_int(0, kClasses - 1));
    for (const LinkId l : shortest_path(s.topology, a, b)) {
      const bool fifo = s.ports[static_cast<std::size_t>(l)].policy == Policy::kFifo;
      flow.path.push_back(Hop{{l, fifo ? 0 : cls}, l});
    }
    const double rate = draw(rng, config.rate);
    switch (static_cast<TrafficModel>(pick_weighted(rng, config.traffic_mix))) {
      case TrafficModel::kPoisson:
        flow.descriptor = TrafficDescriptor::poisson(rate);
        break;
      case TrafficModel::kCbr:
        flow.descriptor = TrafficDescriptor::cbr(rate);
        break;
      case TrafficModel::kOnOff:
        flow.descriptor = TrafficDescriptor::on_off_model(rate, config.on_off);
        break;
      case TrafficModel::kAutocorrExp:
        flow.descriptor = TrafficDescriptor::autocorr_exp(rate, draw(rng, config.ar_a), draw(rng, config.ar_s2));
        break;
      case TrafficModel::kModulatedExp: {
        const double a = draw(rng, config.mod_a);
        flow.descriptor = TrafficDescriptor::modulated_exp(rate, a, draw(rng, config.mod_variance) * (1 - a * a));
        break;
      }
    }
    s.flows.push_back(std::move(flow));
  }

  calibrate_rates(s, draw(rng, config.utilization));
  if (config.target_max_loss) {
    sim::SimOptions opt;
    if (probe) {
      opt = *probe;
    } else {
      if (config.probe_packets == 0) throw Error("generate_sample: congestion tuning needs probe_packets > 0");
      opt.packet_budget = config.probe_packets;
    }
    opt.seed = seed;
    tune_congestion(s, *config.target_max_loss, opt);
  }
  s.meta = SampleMeta{seed, "", ""};
  require_valid(s);
  return s;
}

Dataset build_dataset(const GenConfig& config, int count, const sim::SimOptions& sim) {
  check_config(config);
  if (count < 0) throw Error("build_dataset: count must be >= 0");
  Dataset out;
  Json entries = Json::array();
  std::vector<Topology> pool;
  for (int k = 0; k < config.num_topologies; ++k) {
    Rng rng(derive_seed(config.seed, (std::uint64_t{1} << 32) + static_cast<std::uint64_t>(k)));
    const int n = static_cast<int>(rng.uniform_int(config.min_nodes, config.max_nodes));
    pool.push_back(generate_topology(n, config.alpha, config.beta, rng.next_u64()));
  }
  for (int i = 0; i < count; ++i) {
    const std::uint64_t seed = derive_seed(config.seed, static_cast<std::uint64_t>(i));
    const int k = pool.empty() ? -1 : i % static_cast<int>(pool.size());
    Json entry{{"index", i}, {"seed", seed}};
    try {
      sim::SimOptions opt = sim;
      opt.seed = seed;
      std::optional<sim::SimOptions> probe;
      if (config.probe_packets == 0) probe = opt;
      NetworkSample s =
          generate_sample(config, seed, k >= 0 ? std::optional<Topology>(pool[k]) : std::nullopt, probe);
      s.meta->topology_id = k >= 0 ? "t" + std::to_string(k) : "s" + std::to_string(i);
      entry["topology_id"] = s.meta->topology_id;
      s.labels = sim::run(s, opt).labels;
      entry["status"] = "ok";
      out.samples.push_back(std::move(s));
    } catch (const std::exception& e) {
      entry["status"] = "failed";
      entry["error"] = e.what();
    }
    entries.push_back(entry);
  }
  Json sim_json{{"warmup_fraction", sim.warmup_fraction},
                {"sizes", sim.sizes == sim::PacketSizeModel::kFixed ? "fixed" : "exponential"},
                {"drain", sim.drain}};
  if (sim.packet_budget) sim_json["packets"] = *sim.packet_budget;
  if (sim.sim_seconds) sim_json["seconds"] = *sim.sim_seconds;
  out.manifest = Json{{"format", "netperf-dataset"}, {"version", 1},     {"count", count},
                      {"config", to_json(config)},   {"simulator", sim_json}, {"samples", entries}};
  return out;
}

std::pair<std::vector<NetworkSample>, std::vector<NetworkSample>> split_by_topology(
    const std::vector<NetworkSample>& samples, double fraction, std::uint64_t seed) {
  std::vector<std::string> ids;
  for (const auto& s : samples) {
    const std::string id = s.meta ? s.meta->topology_id : std::string();
    if (std::find(ids.begin(), ids.end(), id) == ids.end()) ids.push_back(id);
  }
  Rng rng(seed);
  rng.shuffle(ids);
  const auto held = static_cast<std::size_t>(std::lround(fraction * static_cast<double>(ids.size())));
  const std::set<std::string> second(ids.begin(), ids.begin() + static_cast<long>(std::min(held, ids.size())));
  std::pair<std::vector<NetworkSample>, std::vector<NetworkSample>> out;
  for (const auto& s : samples) {
    const std::string id = s.meta ? s.meta->topology_id : std::string();
    (second.count(id) ? out.second : out.first).push_back(s);
  }
  return out;
}

}  // namespace netperf::datagen
