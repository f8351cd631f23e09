#include <cmath>

#include "netperf/qt_engine.hpp"

namespace netperf::qt {

QueueMetrics mm1b_metrics(double lambda, double mu, int b) {
  if (!(mu > 0.0)) throw Error("mm1b_metrics: service rate must be > 0");
  if (!(lambda >= 0.0)) throw Error("mm1b_metrics: arrival rate must be >= 0");
  if (b < 1) throw Error("mm1b_metrics: buffer must hold at least one packet");

  // pi_n proportional to rho^n, scaled by the largest term to avoid overflow.
  const double rho = lambda / mu;
  std::vector<double> pi(b + 1);
  if (rho <= 1.0) {
    for (int n = 0; n <= b; ++n) pi[n] = std::pow(rho, n);
  } else {
    for (int n = 0; n <= b; ++n) pi[n] = std::pow(1.0 / rho, b - n);
  }
  double total = 0.0;
  for (const double p : pi) total += p;
  for (auto& p : pi) p /= total;

  const double blocking = pi[b];
  double mean_queue = 0.0;
  for (int n = 0; n <= b; ++n) mean_queue += n * pi[n];

  // An admitted customer finding n in system leaves after n + 1 exponential
  // services: Erlang(n + 1, mu).
  double admitted = 0.0;
  double m1 = 0.0;
  double m2 = 0.0;
  for (int n = 0; n < b; ++n) {
    admitted += pi[n];
    m1 += pi[n] * (n + 1) / mu;
    m2 += pi[n] * (n + 1) * (n + 2) / (mu * mu);
  }
  m1 /= admitted;
  m2 /= admitted;

  QueueMetrics out;
  out.blocking = {blocking};
  out.delay = {lambda > 0.0 ? mean_queue / (lambda * (1.0 - blocking)) : m1};
  out.delay_var = {std::max(0.0, m2 - m1 * m1)};
  out.mean_queue = {mean_queue};
  return out;
}

}  // namespace netperf::qt
