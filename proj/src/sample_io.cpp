#include "netperf/sample_io.hpp"

#include <fstream>

namespace netperf {

namespace {

Json queue_ref_json(const QueueRef& q) { return {{"link", q.link}, {"priority", q.priority}}; }

QueueRef queue_ref_from(const Json& j) { return {j.at("link").get<int>(), j.at("priority").get<int>()}; }

}  // namespace

Json to_json(const TrafficDescriptor& d) {
  Json j = {{"model", std::string(to_string(d.model))}, {"rate", d.rate}};
  switch (d.model) {
    case TrafficModel::kOnOff:
      j["on_off"] = {{"on_min", d.on_off.on_min}, {"on_max", d.on_off.on_max},
                     {"off_min", d.on_off.off_min}, {"off_max", d.on_off.off_max}};
      break;
    case TrafficModel::kAutocorrExp:
      j["ar"] = {{"a", d.ar.a}, {"s2", d.ar.s2}};
      break;
    case TrafficModel::kModulatedExp:
      j["mod"] = {{"A", d.mod.scale}, {"a", d.mod.a}, {"sigma2", d.mod.sigma2}};
      break;
    default:
      break;
  }
  return j;
}

TrafficDescriptor descriptor_from_json(const Json& j) {
  TrafficDescriptor d;
  d.model = traffic_model_from_string(j.at("model").get<std::string>());
  d.rate = j.at("rate").get<double>();
  if (j.contains("on_off")) {
    const auto& o = j["on_off"];
    d.on_off = {o.at("on_min").get<double>(), o.at("on_max").get<double>(), o.at("off_min").get<double>(),
                o.at("off_max").get<double>()};
  }
  if (j.contains("ar")) d.ar = {j["ar"].at("a").get<double>(), j["ar"].at("s2").get<double>()};
  if (j.contains("mod")) {
    const auto& m = j["mod"];
    d.mod = {m.at("A").get<double>(), m.at("a").get<double>(), m.at("sigma2").get<double>()};
  }
  return d;
}

Json to_json(const PerfLabels& labels) {
  Json flows = Json::array();
  for (const auto& f : labels.flows) {
    Json e = {{"id", f.flow_id}, {"mean_delay", f.mean_delay}, {"jitter", f.jitter}, {"loss_ratio", f.loss_ratio}};
    if (!f.reliable) e["reliable"] = false;
    flows.push_back(std::move(e));
  }
  Json queues = Json::array();
  for (const auto& q : labels.queues) {
    queues.push_back({{"queue", queue_ref_json(q.queue)}, {"mean_occupancy", q.mean_occupancy}, {"loss_ratio", q.loss_ratio}});
  }
  return {{"flows", std::move(flows)}, {"queues", std::move(queues)}};
}

PerfLabels labels_from_json(const Json& j) {
  PerfLabels out;
  for (const auto& e : j.at("flows")) {
    FlowLabel f;
    f.flow_id = e.at("id").get<int>();
    f.mean_delay = e.at("mean_delay").get<double>();
    f.jitter = e.at("jitter").get<double>();
    f.loss_ratio = e.at("loss_ratio").get<double>();
    f.reliable = e.value("reliable", true);
    out.flows.push_back(f);
  }
  if (j.contains("queues")) {
    for (const auto& e : j["queues"]) {
      out.queues.push_back({queue_ref_from(e.at("queue")), e.at("mean_occupancy").get<double>(),
                            e.at("loss_ratio").get<double>()});
    }
  }
  return out;
}

Json to_json(const NetworkSample& s) {
  Json links = Json::array();
  for (const auto& l : s.topology.links) {
    links.push_back({{"id", l.id}, {"src", l.src}, {"dst", l.dst}, {"c_ref", l.c_ref}, {"s_f", l.s_f}});
  }
  Json ports = Json::array();
  for (const auto& p : s.ports) {
    Json queues = Json::array();
    for (const auto& q : p.queues) {
      queues.push_back({{"buffer_size", q.buffer_size}, {"priority", q.priority}, {"weight", q.weight}});
    }
    ports.push_back({{"link_id", p.link_id}, {"policy", std::string(to_string(p.policy))}, {"queues", std::move(queues)}});
  }
  Json flows = Json::array();
  for (const auto& f : s.flows) {
    Json path = Json::array();
    for (const auto& h : f.path) path.push_back({{"queue", queue_ref_json(h.queue)}, {"link", h.link}});
    flows.push_back({{"id", f.id},
                     {"src", f.src},
                     {"dst", f.dst},
                     {"path", std::move(path)},
                     {"descriptor", to_json(f.descriptor)},
                     {"mean_pkt_bits", f.mean_pkt_bits}});
  }
  Json j = {{"topology", {{"nodes", s.topology.nodes}, {"links", std::move(links)}}},
            {"ports", std::move(ports)},
            {"flows", std::move(flows)}};
  if (s.labels) j["labels"] = to_json(*s.labels);
  if (s.meta) j["meta"] = {{"seed", s.meta->seed}, {"topology_id", s.meta->topology_id}, {"tag", s.meta->tag}};
  return j;
}

NetworkSample sample_from_json(const Json& j) {
  NetworkSample s;
  const auto& topo = j.at("topology");
  s.topology.nodes = topo.at("nodes").get<std::vector<int>>();
  for (const auto& l : topo.at("links")) {
    s.topology.links.push_back({l.at("id").get<int>(), l.at("src").get<int>(), l.at("dst").get<int>(),
                                l.at("c_ref").get<double>(), l.at("s_f").get<double>()});
  }
  for (const auto& p : j.at("ports")) {
    OutputPort port;
    port.link_id = p.at("link_id").get<int>();
    port.policy = policy_from_string(p.at("policy").get<std::string>());
    for (const auto& q : p.at("queues")) {
      port.queues.push_back({q.at("buffer_size").get<int>(), q.at("priority").get<int>(), q.value("weight", 1.0)});
    }
    s.ports.push_back(std::move(port));
  }
  for (const auto& f : j.at("flows")) {
    Flow flow;
    flow.id = f.at("id").get<int>();
    flow.src = f.at("src").get<int>();
    flow.dst = f.at("dst").get<int>();
    for (const auto& h : f.at("path")) flow.path.push_back({queue_ref_from(h.at("queue")), h.at("link").get<int>()});
    flow.descriptor = descriptor_from_json(f.at("descriptor"));
    flow.mean_pkt_bits = f.value("mean_pkt_bits", 1000.0);
    s.flows.push_back(std::move(flow));
  }
  if (j.contains("labels") && !j["labels"].is_null()) s.labels = labels_from_json(j["labels"]);
  if (j.contains("meta")) {
    const auto& m = j["meta"];
    s.meta = SampleMeta{m.value("seed", std::uint64_t{0}), m.value("topology_id", std::string{}),
                        m.value("tag", std::string{})};
  }
  return s;
}

Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  return Json::parse(in);
}

void write_json_file(const std::filesystem::path& path, const Json& j) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

NetworkSample read_sample(const std::filesystem::path& path) { return sample_from_json(read_json_file(path)); }

void write_sample(const std::filesystem::path& path, const NetworkSample& sample) {
  write_json_file(path, to_json(sample));
}

std::vector<NetworkSample> read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<NetworkSample> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(sample_from_json(Json::parse(line)));
  }
  return out;
}

void write_dataset(const std::filesystem::path& path, const std::vector<NetworkSample>& samples) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& s : samples) out << to_json(s).dump() << '\n';
}

}  // namespace netperf
