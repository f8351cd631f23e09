#include <doctest.h>

#include <cmath>
#include <map>

#include "fixtures.hpp"
#include "netperf/qt_engine.hpp"
#include "netperf/simulator.hpp"

using namespace netperf;
using namespace netperf::sim;

namespace {

SimOptions budget(std::uint64_t packets, std::uint64_t seed = 1) {
  SimOptions o;
  o.seed = seed;
  o.packet_budget = packets;
  return o;
}

Packet pkt(double bits, std::uint64_t id = 0) {
  Packet p;
  p.bits = bits;
  p.id = id;
  return p;
}

}  // namespace

TEST_CASE("scheduler selection") {
  SUBCASE("strict priority serves the first nonempty class") {
    PortState port(fixture::multi_port(0, Policy::kSp));
    port.enqueue(1, pkt(1000));
    port.enqueue(2, pkt(1000));
    CHECK(port.scheduler_select() == 1);
  }
  SUBCASE("priority order comes from the priority field") {
    OutputPort op{0, Policy::kSp, {QueueSpec{4, 2, 1}, QueueSpec{4, 0, 1}, QueueSpec{4, 1, 1}}};
    PortState port(op);
    port.enqueue(0, pkt(1000));
    port.enqueue(2, pkt(1000));
    CHECK(port.scheduler_select() == 0);
  }
  SUBCASE("idle when empty") {
    PortState port(fixture::multi_port(0, Policy::kWfq));
    CHECK_FALSE(port.scheduler_select().has_value());
  }
  SUBCASE("WFQ weights 2:1 share the link 2:1") {
    PortState port(fixture::multi_port(0, Policy::kWfq, {1000, 1000}, {2.0, 1.0}));
    std::uint64_t id = 0;
    for (int i = 0; i < 900; ++i) {
      port.enqueue(0, pkt(1000, id++));
      port.enqueue(1, pkt(1000, id++));
    }
    std::map<int, int> served;
    for (int i = 0; i < 900; ++i) {
      const auto c = port.scheduler_select();
      REQUIRE(c);
      ++served[*c];
      port.start_service(*c);
      port.finish_service();
      port.enqueue(*c, pkt(1000, id++));
    }
    CHECK(static_cast<double>(served[0]) / served[1] == doctest::Approx(2.0).epsilon(0.02));
  }
  SUBCASE("DRR with equal weights alternates") {
    PortState port(fixture::multi_port(0, Policy::kDrr, {100, 100}, {1.0, 1.0}));
    for (int i = 0; i < 50; ++i) {
      port.enqueue(0, pkt(1000));
      port.enqueue(1, pkt(1000));
    }
    int prev = -1;
    for (int i = 0; i < 100; ++i) {
      const auto c = port.scheduler_select();
      REQUIRE(c);
      CHECK(*c != prev);
      prev = *c;
      port.start_service(*c);
      port.finish_service();
      CHECK(port.deficit(0) >= 0.0);
      CHECK(port.deficit(1) >= 0.0);
    }
  }
  SUBCASE("DRR weights 3:1 with variable sizes") {
    PortState port(fixture::multi_port(0, Policy::kDrr, {100, 100}, {3.0, 1.0}));
    Rng rng(2);
    double bits[2] = {0, 0};
    for (int i = 0; i < 60; ++i) {
      port.enqueue(0, pkt(rng.uniform(100, 1500)));
      port.enqueue(1, pkt(rng.uniform(100, 1500)));
    }
    for (int i = 0; i < 20000; ++i) {
      const auto c = port.scheduler_select();
      REQUIRE(c);
      port.start_service(*c);
      bits[*c] += port.finish_service().bits;
      port.enqueue(*c, pkt(rng.uniform(100, 1500)));
    }
    CHECK(bits[0] / bits[1] == doctest::Approx(3.0).epsilon(0.02));
  }
}

TEST_CASE("tail drop") {
  PortState port(fixture::fifo_port(0, 16));
  CHECK(port.enqueue(0, pkt(1000)));
  for (int i = 1; i < 16; ++i) CHECK(port.enqueue(0, pkt(1000)));
  CHECK_FALSE(port.enqueue(0, pkt(1000)));
  CHECK(port.occupancy(0) == 16);
  // The packet in transmission still holds a slot.
  port.start_service(0);
  CHECK_FALSE(port.enqueue(0, pkt(1000)));
  port.finish_service();
  CHECK(port.enqueue(0, pkt(1000)));
  CHECK_THROWS_AS(port.enqueue(0, pkt(0.0)), Error);
}

TEST_CASE("single M/M/1/16 queue matches the closed form") {
  const auto s = fixture::single_link(1e6, 900.0, 16);
  const auto r = run(s, budget(1'000'000, 3));
  const auto ref = qt::mm1b_metrics(900.0, 1000.0, 16);
  CHECK(r.labels.flows[0].mean_delay == doctest::Approx(ref.delay[0]).epsilon(0.03));
  CHECK(r.labels.flows[0].loss_ratio == doctest::Approx(ref.blocking[0]).epsilon(0.03));
  CHECK(r.labels.queues[0].mean_occupancy == doctest::Approx(ref.mean_queue[0] / 16).epsilon(0.03));
  CHECK(r.labels.flows[0].jitter == doctest::Approx(ref.delay_var[0]).epsilon(0.05));
  // PASTA: Poisson arrivals see time averages.
  CHECK(r.queues[0].arrival_seen_packets == doctest::Approx(r.queues[0].mean_packets).epsilon(0.02));
}

TEST_CASE("zero-rate flow") {
  auto s = fixture::chain(2);
  s.flows = {fixture::path_flow(0, s, {0, 1}, TrafficDescriptor::poisson(300.0)),
             fixture::path_flow(1, s, {1}, TrafficDescriptor::poisson(0.0))};
  const auto r = run(s, budget(20'000));
  CHECK(r.flows[1].sent == 0);
  CHECK(r.labels.flows[1].loss_ratio == 0.0);
  CHECK_FALSE(r.labels.flows[1].reliable);
  CHECK(r.labels.flows[0].reliable);
}

TEST_CASE("symmetric disjoint paths give equal delays") {
  NetworkSample s;
  s.topology.nodes = {0, 1, 2, 3, 4};
  for (int i = 0; i < 4; ++i) s.topology.links.push_back(Link{i, i < 2 ? 0 : 2, i < 2 ? i + 1 : i + 1, 1e6, 1.0});
  s.topology.links[0] = Link{0, 0, 1, 1e6, 1};
  s.topology.links[1] = Link{1, 1, 2, 1e6, 1};
  s.topology.links[2] = Link{2, 0, 3, 1e6, 1};
  s.topology.links[3] = Link{3, 3, 4, 1e6, 1};
  for (int i = 0; i < 4; ++i) s.ports.push_back(fixture::fifo_port(i, 16));
  s.flows = {fixture::path_flow(0, s, {0, 1}, TrafficDescriptor::poisson(600.0)),
             fixture::path_flow(1, s, {2, 3}, TrafficDescriptor::poisson(600.0))};
  REQUIRE(validate(s).empty());
  // Replication means are independent; compare them with Welch's t statistic.
  std::vector<double> a, b;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto r = run(s, budget(40'000, seed));
    a.push_back(r.labels.flows[0].mean_delay);
    b.push_back(r.labels.flows[1].mean_delay);
  }
  auto mv = [](const std::vector<double>& v) {
    double m = 0.0;
    for (const double x : v) m += x;
    m /= v.size();
    double s2 = 0.0;
    for (const double x : v) s2 += (x - m) * (x - m);
    return std::pair{m, s2 / (v.size() - 1)};
  };
  const auto [ma, va] = mv(a);
  const auto [mb, vb] = mv(b);
  const double t = (ma - mb) / std::sqrt(va / a.size() + vb / b.size());
  CHECK(std::abs(t) < 2.71);
}

TEST_CASE("conservation, causality and work conservation") {
  Rng rng(29);
  for (const auto policy : {Policy::kFifo, Policy::kSp, Policy::kWfq, Policy::kDrr}) {
    CAPTURE(to_string(policy));
    auto s = fixture::random_chain_sample(rng, 6, 8, policy);
    for (auto& f : s.flows) f.descriptor.rate *= 4.0;  // enough load to drop
    std::map<std::uint64_t, double> enq;
    std::map<int, std::vector<std::uint64_t>> order_in, order_out;
    bool causal = true, fifo = true;
    auto trace = [&](const TraceEvent& e) {
      switch (e.kind) {
        case TraceKind::kEnqueue:
          enq[e.packet] = e.time;
          order_in[e.queue].push_back(e.packet);
          break;
        case TraceKind::kStart: {
          causal = causal && e.time >= enq[e.packet];
          order_out[e.queue].push_back(e.packet);
          break;
        }
        default:
          break;
      }
    };
    SimOptions o = budget(30'000, 5);
    o.drain = false;
    const auto r = run(s, o, trace);
    for (const auto& [q, out] : order_out) {
      const auto& in = order_in[q];
      for (std::size_t i = 0; i < out.size(); ++i) fifo = fifo && out[i] == in[i];
    }
    CHECK(causal);
    CHECK(fifo);
    std::uint64_t drops = 0;
    for (const auto& f : r.flows) {
      CHECK(f.sent == f.delivered + f.dropped + f.in_flight);
      drops += f.dropped;
    }
    CHECK(drops > 0);

    // With draining nothing is left in flight.
    const auto drained = run(s, budget(30'000, 5));
    for (const auto& f : drained.flows) CHECK(f.in_flight == 0);
  }
}

TEST_CASE("ports never idle with a backlog") {
  Rng rng(31);
  for (const auto policy : {Policy::kSp, Policy::kWfq, Policy::kDrr}) {
    auto s = fixture::random_chain_sample(rng, 4, 6, policy);
    for (auto& f : s.flows) f.descriptor.rate *= 5.0;
    const SampleIndex idx(s);
    std::map<int, int> backlog;     // waiting packets per link
    std::map<int, bool> busy;
    bool ok = true;
    auto trace = [&](const TraceEvent& e) {
      const int link = idx.queue_link(e.queue);
      if (e.kind == TraceKind::kEnqueue) ++backlog[link];
      if (e.kind == TraceKind::kStart) {
        --backlog[link];
        busy[link] = true;
      }
      if (e.kind == TraceKind::kDepart) busy[link] = false;
      // Checked after every event: a waiting packet implies a busy link,
      // except in the instant between a departure and the next start.
      if (e.kind == TraceKind::kEnqueue) ok = ok && (busy[link] || backlog[link] == 1);
    };
    run(s, budget(20'000, 2), trace);
    CHECK(ok);
  }
}

TEST_CASE("priority protects the top class") {
  auto s = fixture::single_link(1e6, 0.0);
  s.ports[0] = fixture::multi_port(0, Policy::kSp, {16, 16, 16});
  s.flows.clear();
  for (int c = 0; c < 3; ++c) {
    s.flows.push_back(fixture::path_flow(c, s, {0}, TrafficDescriptor::poisson(300.0), c));
  }
  const auto r = run(s, budget(200'000));
  CHECK(r.labels.flows[0].mean_delay < r.labels.flows[1].mean_delay);
  CHECK(r.labels.flows[1].mean_delay < r.labels.flows[2].mean_delay);
}

TEST_CASE("determinism and horizons") {
  Rng rng(8);
  const auto s = fixture::random_chain_sample(rng, 5, 6, Policy::kWfq);
  const auto a = run(s, budget(10'000, 4));
  const auto b = run(s, budget(10'000, 4));
  CHECK(a.labels.flows[2].mean_delay == b.labels.flows[2].mean_delay);
  SimOptions t;
  t.sim_seconds = 20.0;
  const auto c = run(s, t);
  CHECK(c.window_start == doctest::Approx(2.0));
  CHECK(c.window_end == doctest::Approx(20.0));
  SimOptions none;
  CHECK_THROWS_AS(run(s, none), Error);
}
