// Small hand-built samples shared by the unit tests.
#pragma once

#include <vector>

#include "netperf/net_model.hpp"
#include "netperf/random.hpp"

namespace fixture {

using namespace netperf;

inline OutputPort fifo_port(LinkId link, int buffer = 32) {
  return OutputPort{link, Policy::kFifo, {QueueSpec{buffer, 0, 1.0}}};
}

inline OutputPort multi_port(LinkId link, Policy policy, std::vector<int> buffers = {8, 8, 8},
                             std::vector<double> weights = {1.0, 1.0, 1.0}) {
  OutputPort p{link, policy, {}};
  for (std::size_t i = 0; i < buffers.size(); ++i) {
    p.queues.push_back(QueueSpec{buffers[i], static_cast<int>(i), weights[i]});
  }
  return p;
}

/// 0 -> 1 with one FIFO link and one Poisson flow.
inline NetworkSample single_link(double capacity = 1e6, double rate = 500.0, int buffer = 32) {
  NetworkSample s;
  s.topology.nodes = {0, 1};
  s.topology.links = {Link{0, 0, 1, capacity, 1.0}};
  s.ports = {fifo_port(0, buffer)};
  s.flows = {Flow{0, 0, 1, {Hop{{0, 0}, 0}}, TrafficDescriptor::poisson(rate), 1000.0}};
  return s;
}

/// Chain 0 -> 1 -> ... -> n with FIFO links.
inline NetworkSample chain(int hops, double capacity = 1e6) {
  NetworkSample s;
  for (int i = 0; i <= hops; ++i) s.topology.nodes.push_back(i);
  for (int i = 0; i < hops; ++i) {
    s.topology.links.push_back(Link{i, i, i + 1, capacity, 1.0});
    s.ports.push_back(fifo_port(i));
  }
  return s;
}

inline Flow path_flow(FlowId id, const NetworkSample& s, std::vector<LinkId> links, TrafficDescriptor d,
                      int priority = 0) {
  Flow f;
  f.id = id;
  f.descriptor = d;
  for (const LinkId l : links) f.path.push_back(Hop{{l, priority}, l});
  f.src = find_link(s, links.front()).src;
  f.dst = find_link(s, links.back()).dst;
  return f;
}

/// Random chain-plus-shortcuts sample with `flows` flows over contiguous
/// sub-paths of a ring-shaped chain.
inline NetworkSample random_chain_sample(Rng& rng, int nodes, int flows, Policy policy = Policy::kFifo) {
  NetworkSample s;
  for (int i = 0; i < nodes; ++i) s.topology.nodes.push_back(i);
  for (int i = 0; i + 1 < nodes; ++i) {
    s.topology.links.push_back(Link{i, i, i + 1, rng.uniform(5e5, 2e6), 1.0});
    s.ports.push_back(policy == Policy::kFifo ? fifo_port(i, 16) : multi_port(i, policy, {4, 4, 4}, {1, 2, 3}));
  }
  for (int f = 0; f < flows; ++f) {
    const int a = static_cast<int>(rng.uniform_int(0, nodes - 2));
    const int b = static_cast<int>(rng.uniform_int(a + 1, nodes - 1));
    std::vector<LinkId> links;
    for (int l = a; l < b; ++l) links.push_back(l);
    const int prio = policy == Policy::kFifo ? 0 : static_cast<int>(rng.uniform_int(0, 2));
    s.flows.push_back(path_flow(f, s, links, TrafficDescriptor::poisson(rng.uniform(20, 200)), prio));
  }
  return s;
}

}  // namespace fixture
