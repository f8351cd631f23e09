// Independent reference computations used only by the test suites.
#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/LU>

#include "netperf/qt_engine.hpp"

namespace oracle {

inline Eigen::MatrixXd dense(const netperf::qt::SparseMatrix& Q) { return Eigen::MatrixXd(Q); }

/// Stationary law from the one-dimensional null space of Q^T.
inline Eigen::VectorXd null_space_stationary(const Eigen::MatrixXd& Q) {
  Eigen::FullPivLU<Eigen::MatrixXd> lu(Q.transpose());
  lu.setThreshold(1e-11);
  Eigen::MatrixXd kernel = lu.kernel();
  Eigen::VectorXd v = kernel.col(0);
  return v / v.sum();
}

/// Restrict a dense generator to the states reachable from state 0 and solve.
inline Eigen::VectorXd reachable_null_space_stationary(const Eigen::MatrixXd& Q) {
  const auto n = Q.rows();
  std::vector<int> keep{0};
  std::vector<char> seen(n, 0);
  seen[0] = 1;
  for (std::size_t k = 0; k < keep.size(); ++k) {
    for (Eigen::Index c = 0; c < n; ++c) {
      if (c != keep[k] && Q(keep[k], c) > 0 && !seen[c]) {
        seen[c] = 1;
        keep.push_back(static_cast<int>(c));
      }
    }
  }
  Eigen::MatrixXd sub(keep.size(), keep.size());
  for (std::size_t i = 0; i < keep.size(); ++i)
    for (std::size_t j = 0; j < keep.size(); ++j) sub(i, j) = Q(keep[i], keep[j]);
  const Eigen::VectorXd local = null_space_stationary(sub);
  Eigen::VectorXd pi = Eigen::VectorXd::Zero(n);
  for (std::size_t i = 0; i < keep.size(); ++i) pi[keep[i]] = local[i];
  return pi;
}

/// Strict-priority state space by breadth-first application of the
/// transition rules, written without reference to the library builder.
/// States are encoded as {s, q_1..q_p} with s = 0 when idle.
inline std::set<std::vector<int>> sp_reachable_states(const std::vector<int>& b) {
  const int p = static_cast<int>(b.size());
  std::set<std::vector<int>> seen;
  std::vector<std::vector<int>> frontier{std::vector<int>(p + 1, 0)};
  seen.insert(frontier[0]);
  while (!frontier.empty()) {
    auto st = frontier.back();
    frontier.pop_back();
    std::vector<std::vector<int>> next;
    const int s = st[0];
    for (int i = 1; i <= p; ++i) {
      if (s == 0) {
        auto t = st;
        t[0] = i;
        t[i] = 1;
        next.push_back(t);
      } else if (st[i] < b[i - 1]) {
        auto t = st;
        t[i] += 1;
        next.push_back(t);
      }
    }
    if (s > 0) {
      auto t = st;
      t[s] -= 1;
      int served = 0;
      for (int i = 1; i <= p; ++i) {
        if (t[i] > 0) {
          served = i;
          break;
        }
      }
      t[0] = served;
      next.push_back(t);
    }
    for (auto& t : next) {
      if (seen.insert(t).second) frontier.push_back(t);
    }
  }
  return seen;
}

inline double relative_error(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

}  // namespace oracle

namespace oracle {

/// Two-sided Kolmogorov-Smirnov statistic against Exp(rate).
inline double ks_statistic_exp(std::vector<double> x, double rate) {
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double f = 1.0 - std::exp(-rate * x[i]);
    d = std::max({d, (i + 1) / n - f, f - i / n});
  }
  return d;
}

/// Asymptotic Kolmogorov p-value, P(sqrt(n) D > t).
inline double ks_p_value(double d, std::size_t n) {
  const double t = (std::sqrt(static_cast<double>(n)) + 0.12 + 0.11 / std::sqrt(static_cast<double>(n))) * d;
  double p = 0.0;
  for (int k = 1; k < 200; ++k) {
    const double term = std::exp(-2.0 * k * k * t * t);
    p += (k % 2 ? 2.0 : -2.0) * term;
    if (term < 1e-18) break;
  }
  return std::clamp(p, 0.0, 1.0);
}

/// Scalar GRU step. W is 3d x n, U is 3d x d, both row-major nested vectors.
inline std::vector<double> gru_reference(const std::vector<std::vector<double>>& W,
                                         const std::vector<std::vector<double>>& U, const std::vector<double>& b,
                                         const std::vector<double>& x, const std::vector<double>& h) {
  const std::size_t d = h.size();
  auto sig = [](double a) { return 1.0 / (1.0 + std::exp(-a)); };
  std::vector<double> z(d), r(d), out(d);
  for (std::size_t i = 0; i < d; ++i) {
    double az = b[i], ar = b[d + i];
    for (std::size_t j = 0; j < x.size(); ++j) {
      az += W[i][j] * x[j];
      ar += W[d + i][j] * x[j];
    }
    for (std::size_t j = 0; j < d; ++j) {
      az += U[i][j] * h[j];
      ar += U[d + i][j] * h[j];
    }
    z[i] = sig(az);
    r[i] = sig(ar);
  }
  for (std::size_t i = 0; i < d; ++i) {
    double ah = b[2 * d + i];
    for (std::size_t j = 0; j < x.size(); ++j) ah += W[2 * d + i][j] * x[j];
    for (std::size_t j = 0; j < d; ++j) ah += U[2 * d + i][j] * r[j] * h[j];
    out[i] = (1.0 - z[i]) * h[i] + z[i] * std::tanh(ah);
  }
  return out;
}

/// Central differences of f at the listed coordinates of theta.
template <class F>
std::vector<double> central_difference(F&& f, std::vector<double>& theta, const std::vector<std::size_t>& coords,
                                       double step) {
  std::vector<double> out;
  for (const std::size_t i : coords) {
    const double keep = theta[i];
    theta[i] = keep + step;
    const double up = f();
    theta[i] = keep - step;
    const double down = f();
    theta[i] = keep;
    out.push_back((up - down) / (2.0 * step));
  }
  return out;
}

}  // namespace oracle
