#include <algorithm>
#include <string>

#include "netperf/qt_engine.hpp"

namespace netperf::qt {

namespace {

void check_inputs(std::span<const double> lambda, std::span<const double> mu, std::span<const int> buffers) {
  if (lambda.empty()) throw Error("CTMC port model needs at least one class");
  if (lambda.size() != mu.size() || lambda.size() != buffers.size()) {
    throw Error("CTMC port model: per-class parameter lengths differ");
  }
  for (std::size_t i = 0; i < lambda.size(); ++i) {
    if (!(lambda[i] >= 0.0)) throw Error("CTMC port model: arrival rates must be >= 0");
    if (!(mu[i] > 0.0)) throw Error("CTMC port model: service rates must be > 0");
    if (buffers[i] < 1) throw Error("CTMC port model: buffers must be >= 1");
  }
}

}  // namespace

std::span<const int> CtmcModel::queue_lengths(std::size_t s) const {
  const int offset = kind_ == SchedulerKind::kStrictPriority ? 1 : 0;
  return {states_.data() + s * stride_ + offset, buffers_.size()};
}

int CtmcModel::in_service(std::size_t s) const {
  return kind_ == SchedulerKind::kStrictPriority ? states_[s * stride_] : 0;
}

long CtmcModel::flat_key(int served, std::span<const int> q) const {
  long key = 0;
  for (std::size_t i = 0; i < buffers_.size(); ++i) {
    if (q[i] < 0 || q[i] > buffers_[i]) return -1;
    key = key * (buffers_[i] + 1) + q[i];
  }
  if (kind_ == SchedulerKind::kStrictPriority) {
    if (served < 0 || served > classes()) return -1;
    long cells = 1;
    for (const int b : buffers_) cells *= b + 1;
    key += served * cells;
  }
  return key;
}

long CtmcModel::index_of(int served, std::span<const int> q) const {
  const long key = flat_key(served, q);
  return key < 0 ? -1 : lookup_[key];
}

long CtmcModel::arrival_target(std::size_t s, int cls) const {
  const auto q = queue_lengths(s);
  if (q[cls] >= buffers_[cls]) return -1;
  std::vector<int> next(q.begin(), q.end());
  ++next[cls];
  int served = in_service(s);
  if (kind_ == SchedulerKind::kStrictPriority && served == 0) served = cls + 1;
  return index_of(served, next);
}

void CtmcModel::enumerate(std::size_t max_states) {
  const int p = classes();
  double cells = 1.0;
  for (const int b : buffers_) cells *= b + 1;

  double expected = cells;
  if (kind_ == SchedulerKind::kStrictPriority) {
    expected = 1.0;
    for (int s = 0; s < p; ++s) expected += cells / (buffers_[s] + 1) * buffers_[s];
  }
  if (expected > static_cast<double>(max_states)) {
    throw Error("CTMC state space of " + std::to_string(static_cast<long long>(expected)) +
                " states exceeds the cap of " + std::to_string(max_states));
  }

  stride_ = kind_ == SchedulerKind::kStrictPriority ? p + 1 : p;
  const long lookup_size = static_cast<long>(cells) * (kind_ == SchedulerKind::kStrictPriority ? p + 1 : 1);
  lookup_.assign(lookup_size, -1);
  states_.clear();
  states_.reserve(static_cast<std::size_t>(expected) * stride_);

  auto push = [&](int served, const std::vector<int>& q) {
    lookup_[flat_key(served, q)] = static_cast<long>(size());
    if (kind_ == SchedulerKind::kStrictPriority) states_.push_back(served);
    states_.insert(states_.end(), q.begin(), q.end());
  };

  std::vector<int> q(p, 0);
  if (kind_ == SchedulerKind::kStrictPriority) push(0, q);
  // Mixed-radix walk over all queue vectors; the all-zero vector comes first.
  while (true) {
    if (kind_ == SchedulerKind::kGps) {
      push(0, q);
    } else {
      for (int s = 0; s < p; ++s) {
        if (q[s] >= 1) push(s + 1, q);
      }
    }
    int i = p - 1;
    while (i >= 0 && q[i] == buffers_[i]) q[i--] = 0;
    if (i < 0) break;
    ++q[i];
  }
}

void CtmcModel::assemble() {
  const int p = classes();
  const std::size_t n = size();
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(n * (p + 2));
  std::vector<int> next(p);

  for (std::size_t s = 0; s < n; ++s) {
    const auto q = queue_lengths(s);
    const int served = in_service(s);
    double out_rate = 0.0;
    auto add = [&](long target, double rate) {
      if (rate <= 0.0) return;
      triplets.emplace_back(static_cast<int>(s), static_cast<int>(target), rate);
      out_rate += rate;
    };

    for (int i = 0; i < p; ++i) {
      const long t = arrival_target(s, i);
      if (t >= 0) add(t, lambda_[i]);
    }

    if (kind_ == SchedulerKind::kStrictPriority) {
      if (served > 0) {
        const int c = served - 1;
        next.assign(q.begin(), q.end());
        --next[c];
        const auto head = std::find_if(next.begin(), next.end(), [](int x) { return x > 0; });
        const int next_served = head == next.end() ? 0 : static_cast<int>(head - next.begin()) + 1;
        add(index_of(next_served, next), mu_[c]);
      }
    } else {
      double active = 0.0;
      for (int i = 0; i < p; ++i) {
        if (q[i] > 0) active += weight_[i];
      }
      for (int i = 0; i < p; ++i) {
        if (q[i] == 0) continue;
        next.assign(q.begin(), q.end());
        --next[i];
        add(index_of(0, next), weight_[i] / active * mu_[i]);
      }
    }
    triplets.emplace_back(static_cast<int>(s), static_cast<int>(s), -out_rate);
  }

  generator_.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  generator_.setFromTriplets(triplets.begin(), triplets.end());
  generator_.makeCompressed();
}

CtmcModel CtmcModel::with_arrival_rates(std::vector<double> lambda) const {
  if (lambda.size() != lambda_.size()) throw Error("with_arrival_rates: class count mismatch");
  CtmcModel m = *this;
  m.lambda_ = std::move(lambda);
  m.assemble();
  return m;
}

CtmcModel build_sp_generator(std::vector<double> lambda, std::vector<double> mu, std::vector<int> buffers,
                             std::size_t max_states) {
  check_inputs(lambda, mu, buffers);
  CtmcModel m;
  m.kind_ = SchedulerKind::kStrictPriority;
  m.weight_.assign(lambda.size(), 1.0);
  m.lambda_ = std::move(lambda);
  m.mu_ = std::move(mu);
  m.buffers_ = std::move(buffers);
  m.enumerate(max_states);
  m.assemble();
  return m;
}

CtmcModel build_gps_generator(std::vector<double> lambda, std::vector<double> mu, std::vector<double> weights,
                              std::vector<int> buffers, std::size_t max_states) {
  check_inputs(lambda, mu, buffers);
  if (weights.size() != lambda.size()) throw Error("GPS port model: weight count mismatch");
  for (const double w : weights) {
    if (!(w > 0.0)) throw Error("GPS port model: weights must be > 0");
  }
  CtmcModel m;
  m.kind_ = SchedulerKind::kGps;
  m.lambda_ = std::move(lambda);
  m.mu_ = std::move(mu);
  m.weight_ = std::move(weights);
  m.buffers_ = std::move(buffers);
  m.enumerate(max_states);
  m.assemble();
  return m;
}

GeneratorAudit audit_generator(const CtmcModel& model) {
  GeneratorAudit audit;
  const auto& Q = model.generator();
  const auto n = static_cast<Eigen::Index>(model.size());
  for (Eigen::Index r = 0; r < Q.outerSize(); ++r) {
    double sum = 0.0;
    for (SparseMatrix::InnerIterator it(Q, r); it; ++it) {
      sum += it.value();
      if (it.col() != r) audit.min_off_diagonal = std::min(audit.min_off_diagonal, it.value());
      if (it.col() < 0 || it.col() >= n) audit.closed = false;
    }
    audit.max_abs_row_sum = std::max(audit.max_abs_row_sum, std::abs(sum));
  }
  // Every admissible arrival must resolve to an enumerated state.
  for (std::size_t s = 0; s < model.size(); ++s) {
    const auto q = model.queue_lengths(s);
    for (int c = 0; c < model.classes(); ++c) {
      if (q[c] < model.buffers()[c] && model.arrival_target(s, c) < 0) audit.closed = false;
    }
  }
  return audit;
}

}  // namespace netperf::qt
