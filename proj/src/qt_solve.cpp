#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Eigenvalues>
#include <Eigen/SparseLU>

#include "netperf/qt_engine.hpp"

namespace netperf::qt {

namespace {

using ColMatrix = Eigen::SparseMatrix<double, Eigen::ColMajor>;

constexpr double kPolishTarget = 1e-14;
// Above this size the sparse LU fill-in dominates and Krylov goes first.
constexpr std::size_t kDirectFirstLimit = 20000;

/// States reachable from the empty state, ascending.
std::vector<int> reachable_states(const SparseMatrix& Q) {
  const auto n = Q.rows();
  std::vector<char> seen(n, 0);
  std::vector<int> stack{0};
  seen[0] = 1;
  while (!stack.empty()) {
    const int s = stack.back();
    stack.pop_back();
    for (SparseMatrix::InnerIterator it(Q, s); it; ++it) {
      if (it.col() != s && it.value() > 0.0 && !seen[it.col()]) {
        seen[it.col()] = 1;
        stack.push_back(static_cast<int>(it.col()));
      }
    }
  }
  std::vector<int> out;
  for (Eigen::Index s = 0; s < n; ++s) {
    if (seen[s]) out.push_back(static_cast<int>(s));
  }
  return out;
}

SparseMatrix restrict(const SparseMatrix& Q, const std::vector<int>& keep) {
  std::vector<int> local(Q.rows(), -1);
  for (std::size_t i = 0; i < keep.size(); ++i) local[keep[i]] = static_cast<int>(i);
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(Q.nonZeros());
  for (std::size_t i = 0; i < keep.size(); ++i) {
    for (SparseMatrix::InnerIterator it(Q, keep[i]); it; ++it) {
      const int c = local[it.col()];
      if (c >= 0) trip.emplace_back(static_cast<int>(i), c, it.value());
    }
  }
  SparseMatrix out(static_cast<Eigen::Index>(keep.size()), static_cast<Eigen::Index>(keep.size()));
  out.setFromTriplets(trip.begin(), trip.end());
  out.makeCompressed();
  return out;
}

double max_exit_rate(const SparseMatrix& Q) {
  double m = 0.0;
  for (Eigen::Index r = 0; r < Q.outerSize(); ++r) m = std::max(m, -Q.coeff(r, r));
  return m;
}

void normalize_probability(Eigen::VectorXd& pi) {
  pi = pi.cwiseMax(0.0);
  pi /= pi.sum();
}

double residual_inf(const SparseMatrix& Q, const Eigen::VectorXd& pi) {
  return (Q.transpose() * pi).cwiseAbs().maxCoeff();
}

/// Restarted Arnoldi on the transposed uniformized matrix; the Ritz vector of
/// the eigenvalue nearest 1 seeds the next cycle.
bool arnoldi_stationary(const SparseMatrix& Q, double scale, const StationaryOptions& opt, Eigen::VectorXd& pi,
                        int& restarts) {
  const auto n = Q.rows();
  const double uniformization = 1.1 * scale;
  const int m = static_cast<int>(std::min<Eigen::Index>(opt.krylov_dim, n));
  Eigen::MatrixXd V(n, m + 1);
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(m + 1, m);
  Eigen::VectorXd v = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
  const SparseMatrix Qt = Q.transpose();
  double best_res = std::numeric_limits<double>::infinity();
  double previous = best_res;

  for (restarts = 0; restarts < opt.max_restarts; ++restarts) {
    H.setZero();
    V.col(0) = v / v.norm();
    int dim = m;
    for (int j = 0; j < m; ++j) {
      Eigen::VectorXd w = V.col(j) + (Qt * V.col(j)) / uniformization;
      for (int pass = 0; pass < 2; ++pass) {
        for (int i = 0; i <= j; ++i) {
          const double h = V.col(i).dot(w);
          H(i, j) += h;
          w -= h * V.col(i);
        }
      }
      H(j + 1, j) = w.norm();
      if (H(j + 1, j) < 1e-14) {
        dim = j + 1;
        break;
      }
      V.col(j + 1) = w / H(j + 1, j);
    }
    Eigen::EigenSolver<Eigen::MatrixXd> es(H.topLeftCorner(dim, dim));
    if (es.info() != Eigen::Success) return false;
    Eigen::Index best = 0;
    for (Eigen::Index k = 1; k < es.eigenvalues().size(); ++k) {
      if (std::abs(es.eigenvalues()[k] - 1.0) < std::abs(es.eigenvalues()[best] - 1.0)) best = k;
    }
    Eigen::VectorXd y = V.leftCols(dim) * es.eigenvectors().col(best).real();
    if (y.sum() < 0.0) y = -y;
    if (!(std::abs(y.sum()) > 0.0)) return false;
    Eigen::VectorXd candidate = y;
    normalize_probability(candidate);
    const double res = residual_inf(Q, candidate) / scale;
    if (res < best_res) {
      best_res = res;
      pi = candidate;
    }
    // Keep going past the tolerance while it is cheap; stop on stagnation.
    if (res <= kPolishTarget || (res <= opt.tolerance && res > 0.5 * previous)) break;
    previous = res;
    v = candidate;
  }
  ++restarts;
  return best_res <= opt.tolerance;
}

bool direct_stationary(const SparseMatrix& Q, double scale, double tolerance, Eigen::VectorXd& pi) {
  const auto n = Q.rows();
  // Pin pi_0 = 1 and drop the last balance equation; a dense normalization
  // row would wreck the sparsity of the factors.
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(Q.nonZeros());
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n - 1);
  for (Eigen::Index r = 0; r < Q.outerSize(); ++r) {
    for (SparseMatrix::InnerIterator it(Q, r); it; ++it) {
      if (it.col() == n - 1) continue;
      if (r == 0) {
        rhs[it.col()] -= it.value() / scale;
      } else {
        trip.emplace_back(static_cast<int>(it.col()), static_cast<int>(r - 1), it.value() / scale);
      }
    }
  }
  ColMatrix A(n - 1, n - 1);
  A.setFromTriplets(trip.begin(), trip.end());
  A.makeCompressed();

  Eigen::SparseLU<ColMatrix, Eigen::COLAMDOrdering<int>> lu;
  lu.compute(A);
  if (lu.info() != Eigen::Success) return false;
  Eigen::VectorXd x = lu.solve(rhs);
  for (int refine = 0; refine < 2; ++refine) {
    const Eigen::VectorXd r = A * x - rhs;
    if (r.cwiseAbs().maxCoeff() < 1e-16) break;
    x -= lu.solve(r);
  }
  pi.resize(n);
  pi[0] = 1.0;
  pi.tail(n - 1) = x;
  normalize_probability(pi);
  return residual_inf(Q, pi) / scale <= tolerance;
}

}  // namespace

StationaryResult stationary_distribution(const CtmcModel& model, const StationaryOptions& options) {
  const auto& Q = model.generator();
  const auto keep = reachable_states(Q);
  const SparseMatrix Qr = restrict(Q, keep);
  const double scale = std::max(max_exit_rate(Qr), 1e-300);

  StationaryResult result;
  Eigen::VectorXd local;
  bool ok = false;
  if (keep.size() == 1) {
    local = Eigen::VectorXd::Ones(1);
    ok = true;
    result.used = StationaryMethod::kDirect;
  }
  auto try_direct = [&] {
    if (ok || options.method == StationaryMethod::kArnoldi) return;
    ok = direct_stationary(Qr, scale, options.tolerance, local);
    result.used = StationaryMethod::kDirect;
  };
  if (options.method == StationaryMethod::kAuto && keep.size() <= kDirectFirstLimit) try_direct();
  if (!ok && options.method != StationaryMethod::kDirect) {
    ok = arnoldi_stationary(Qr, scale, options, local, result.restarts);
    result.used = StationaryMethod::kArnoldi;
  }
  try_direct();

  result.pi = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(model.size()));
  if (local.size() == static_cast<Eigen::Index>(keep.size())) {
    for (std::size_t i = 0; i < keep.size(); ++i) result.pi[keep[i]] = local[static_cast<Eigen::Index>(i)];
    result.raw_residual = residual_inf(Q, result.pi);
    result.residual = result.raw_residual / scale;
  }
  if (!ok) {
    throw Error("stationary distribution did not converge; residual " + std::to_string(result.residual));
  }
  return result;
}

std::vector<double> blocking_probabilities(const CtmcModel& model, const Eigen::VectorXd& pi) {
  std::vector<double> out(model.classes(), 0.0);
  const auto b = model.buffers();
  for (std::size_t s = 0; s < model.size(); ++s) {
    const auto q = model.queue_lengths(s);
    for (int c = 0; c < model.classes(); ++c) {
      if (q[c] == b[c]) out[c] += pi[static_cast<Eigen::Index>(s)];
    }
  }
  return out;
}

std::vector<double> mean_queue_lengths(const CtmcModel& model, const Eigen::VectorXd& pi) {
  std::vector<double> out(model.classes(), 0.0);
  for (std::size_t s = 0; s < model.size(); ++s) {
    const auto q = model.queue_lengths(s);
    for (int c = 0; c < model.classes(); ++c) out[c] += q[c] * pi[static_cast<Eigen::Index>(s)];
  }
  return out;
}

std::vector<std::optional<double>> class_delay(const CtmcModel& model, const Eigen::VectorXd& pi,
                                               std::span<const double> lambda, std::span<const double> blocking) {
  const auto L = mean_queue_lengths(model, pi);
  std::vector<std::optional<double>> out(model.classes());
  for (int c = 0; c < model.classes(); ++c) {
    const double accepted = lambda[c] * (1.0 - blocking[c]);
    if (accepted > 0.0) out[c] = L[c] / accepted;
  }
  return out;
}

DelayMoments first_passage_delay_moments(const CtmcModel& model, const Eigen::VectorXd& pi, int cls) {
  if (cls < 0 || cls >= model.classes()) throw Error("first_passage_delay_moments: class out of range");

  // Arrivals that cannot be served ahead of the tagged customer are switched
  // off: its own class (FIFO behind it) and, under strict priority, every
  // lower-priority class.
  std::vector<double> lambda(model.arrival_rates().begin(), model.arrival_rates().end());
  for (int j = 0; j < model.classes(); ++j) {
    const bool off = model.kind() == SchedulerKind::kStrictPriority ? j >= cls : j == cls;
    if (off) lambda[j] = 0.0;
  }
  const CtmcModel tagged = model.with_arrival_rates(std::move(lambda));

  std::vector<int> transient;
  for (std::size_t s = 0; s < model.size(); ++s) {
    if (model.queue_lengths(s)[cls] > 0) transient.push_back(static_cast<int>(s));
  }
  std::vector<long> local(model.size(), -1);
  for (std::size_t i = 0; i < transient.size(); ++i) local[transient[i]] = static_cast<long>(i);

  const SparseMatrix block = restrict(tagged.generator(), transient);
  const ColMatrix A = block;
  Eigen::SparseLU<ColMatrix, Eigen::COLAMDOrdering<int>> lu;
  lu.compute(A);
  if (lu.info() != Eigen::Success) {
    throw Error("first-passage system is singular: the empty-queue set is unreachable for class " +
                std::to_string(cls));
  }
  const auto n = static_cast<Eigen::Index>(transient.size());
  const Eigen::VectorXd m1 = lu.solve(Eigen::VectorXd::Constant(n, -1.0));
  const Eigen::VectorXd m2 = lu.solve(-2.0 * m1);

  double weight = 0.0;
  double e1 = 0.0;
  double e2 = 0.0;
  for (std::size_t s = 0; s < model.size(); ++s) {
    const double p = pi[static_cast<Eigen::Index>(s)];
    if (p <= 0.0) continue;
    const long entry = model.arrival_target(s, cls);
    if (entry < 0) continue;
    const long t = local[entry];
    weight += p;
    e1 += p * m1[t];
    e2 += p * m2[t];
  }
  if (!(weight > 0.0)) throw Error("first_passage_delay_moments: class can never be admitted");

  DelayMoments out;
  out.mean = e1 / weight;
  out.second = e2 / weight;
  out.var = std::max(0.0, out.second - out.mean * out.mean);
  return out;
}

QueueMetrics port_metrics(Policy policy, std::span<const double> lambda, std::span<const double> mu,
                          std::span<const int> buffers, std::span<const double> weights, std::size_t max_states) {
  if (policy == Policy::kFifo) {
    if (lambda.size() != 1 || mu.size() != 1 || buffers.size() != 1) {
      throw Error("port_metrics: a FIFO port has exactly one queue");
    }
    return mm1b_metrics(lambda[0], mu[0], buffers[0]);
  }

  std::vector<double> l(lambda.begin(), lambda.end());
  std::vector<double> m(mu.begin(), mu.end());
  std::vector<int> b(buffers.begin(), buffers.end());
  const CtmcModel model =
      policy == Policy::kSp
          ? build_sp_generator(l, m, b, max_states)
          : build_gps_generator(l, m, std::vector<double>(weights.begin(), weights.end()), b, max_states);

  const auto st = stationary_distribution(model);
  QueueMetrics out;
  out.blocking = blocking_probabilities(model, st.pi);
  out.mean_queue = mean_queue_lengths(model, st.pi);
  const auto little = class_delay(model, st.pi, lambda, out.blocking);
  for (int c = 0; c < model.classes(); ++c) {
    const auto moments = first_passage_delay_moments(model, st.pi, c);
    out.delay.push_back(little[c].value_or(moments.mean));
    out.delay_var.push_back(moments.var);
  }
  return out;
}

}  // namespace netperf::qt
