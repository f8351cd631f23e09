#include "netperf/qt_network.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace netperf::qt {

FixedPointState initial_state(const NetworkSample& sample, const SampleIndex& index) {
  FixedPointState st;
  st.hop_rates.resize(index.num_flows());
  st.queue_rates.assign(index.num_queues(), 0.0);
  for (int f = 0; f < index.num_flows(); ++f) {
    const double rate = std::max(0.0, sample.flows[f].descriptor.rate);
    st.hop_rates[f].assign(index.flow_path(f).size(), rate);
    for (const auto& hop : index.flow_path(f)) st.queue_rates[hop.queue] += rate;
  }
  st.ports.resize(index.num_links());
  st.port_inputs.resize(index.num_links());
  return st;
}

double service_rate(const FixedPointState& state, const NetworkSample& sample, const SampleIndex& index, int queue) {
  double rate = 0.0;
  double bits = 0.0;
  double plain = 0.0;
  const auto& flows = index.queue_flows(queue);
  for (const int f : flows) {
    const auto& path = index.flow_path(f);
    for (std::size_t h = 0; h < path.size(); ++h) {
      if (path[h].queue != queue) continue;
      rate += state.hop_rates[f][h];
      bits += state.hop_rates[f][h] * sample.flows[f].mean_pkt_bits;
    }
    plain += sample.flows[f].mean_pkt_bits;
  }
  double mean_bits = 1000.0;
  if (rate > 0.0) {
    mean_bits = bits / rate;
  } else if (!flows.empty()) {
    mean_bits = plain / static_cast<double>(flows.size());
  }
  return index.link(index.queue_link(queue)).capacity() / mean_bits;
}

void map_queues(FixedPointState& state, const NetworkSample& sample, const SampleIndex& index,
                std::size_t max_states) {
  for (int l = 0; l < index.num_links(); ++l) {
    const auto& queues = index.link_queues(l);
    std::vector<double> lambda, mu, weights;
    std::vector<int> buffers;
    for (const int q : queues) {
      lambda.push_back(state.queue_rates[q]);
      mu.push_back(service_rate(state, sample, index, q));
      buffers.push_back(index.queue_spec(q).buffer_size);
      weights.push_back(index.queue_spec(q).weight);
    }
    // Skip ports whose inputs did not move.
    std::vector<double> inputs = lambda;
    inputs.insert(inputs.end(), mu.begin(), mu.end());
    if (!state.ports[l].blocking.empty() && state.port_inputs[l] == inputs) continue;
    state.ports[l] = port_metrics(index.port(l).policy, lambda, mu, buffers, weights, max_states);
    state.port_inputs[l] = std::move(inputs);
  }
}

double map_paths(FixedPointState& state, const NetworkSample& sample, const SampleIndex& index, double damping) {
  double residual = 0.0;
  std::fill(state.queue_rates.begin(), state.queue_rates.end(), 0.0);
  for (int f = 0; f < index.num_flows(); ++f) {
    const auto& path = index.flow_path(f);
    double offered = std::max(0.0, sample.flows[f].descriptor.rate);
    for (std::size_t h = 0; h < path.size(); ++h) {
      double& r = state.hop_rates[f][h];
      const double next = damping > 0.0 ? (1.0 - damping) * r + damping * offered : offered;
      residual = std::max(residual, std::abs(next - r));
      r = next;
      state.queue_rates[path[h].queue] += r;
      offered *= 1.0 - state.ports[path[h].link].blocking[path[h].cls];
    }
  }
  return residual;
}

PerfLabels reduce(const FixedPointState& state, const NetworkSample& sample, const SampleIndex& index) {
  PerfLabels out;
  for (int f = 0; f < index.num_flows(); ++f) {
    FlowLabel label;
    label.flow_id = sample.flows[f].id;
    double pass = 1.0;
    for (const auto& hop : index.flow_path(f)) {
      const auto& m = state.ports[hop.link];
      label.mean_delay += m.delay[hop.cls];
      label.jitter += m.delay_var[hop.cls];
      pass *= 1.0 - m.blocking[hop.cls];
    }
    label.loss_ratio = 1.0 - pass;
    out.flows.push_back(label);
  }
  for (int q = 0; q < index.num_queues(); ++q) {
    const auto& m = state.ports[index.queue_link(q)];
    const int cls = index.queue_class(q);
    QueueLabel label;
    label.queue = index.queue_ref(q);
    label.mean_occupancy = m.mean_queue[cls] / index.queue_spec(q).buffer_size;
    label.loss_ratio = m.blocking[cls];
    out.queues.push_back(label);
  }
  return out;
}

NetworkResult solve(const NetworkSample& sample, const NetworkOptions& options) {
  require_valid(sample);
  if (options.max_iterations < 1) throw Error("qt solve: max_iterations must be >= 1");
  const SampleIndex index(sample);
  FixedPointState st = initial_state(sample, index);
  FixedPointState best;
  double best_residual = std::numeric_limits<double>::infinity();
  bool damp = false;

  for (int it = 1; it <= options.max_iterations; ++it) {
    map_queues(st, sample, index, options.max_states);
    const double residual = map_paths(st, sample, index, damp ? options.damping_factor : 0.0);
    if (options.damping && !st.residual_history.empty() && residual > st.residual_history.back()) damp = true;
    st.iterations = it;
    st.residual = residual;
    st.residual_history.push_back(residual);
    if (residual < options.tolerance) {
      st.converged = true;
      return NetworkResult{reduce(st, sample, index), std::move(st)};
    }
    if (residual < best_residual) {
      best_residual = residual;
      best = st;
    }
  }
  best.converged = false;
  best.iterations = st.iterations;
  best.residual_history = st.residual_history;
  return NetworkResult{reduce(best, sample, index), std::move(best)};
}

}  // namespace netperf::qt
