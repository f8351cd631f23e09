#include "netperf/traffic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "netperf/net_model.hpp"

namespace netperf {

std::string_view to_string(TrafficModel model) {
  switch (model) {
    case TrafficModel::kPoisson: return "Poisson";
    case TrafficModel::kCbr: return "CBR";
    case TrafficModel::kOnOff: return "OnOff";
    case TrafficModel::kAutocorrExp: return "AutocorrExp";
    case TrafficModel::kModulatedExp: return "ModulatedExp";
  }
  return "?";
}

TrafficModel traffic_model_from_string(std::string_view name) {
  for (int m = 0; m < kNumTrafficModels; ++m) {
    if (to_string(static_cast<TrafficModel>(m)) == name) return static_cast<TrafficModel>(m);
  }
  throw Error("unknown traffic model '" + std::string(name) + "'");
}

double modulated_scale_for_rate(double rate, double marginal_variance) {
  return rate * std::exp(0.5 * marginal_variance);
}

TrafficDescriptor TrafficDescriptor::poisson(double rate) {
  TrafficDescriptor d;
  d.model = TrafficModel::kPoisson;
  d.rate = rate;
  return d;
}

TrafficDescriptor TrafficDescriptor::cbr(double rate) {
  auto d = poisson(rate);
  d.model = TrafficModel::kCbr;
  return d;
}

TrafficDescriptor TrafficDescriptor::on_off_model(double rate, OnOffParams periods) {
  auto d = poisson(rate);
  d.model = TrafficModel::kOnOff;
  d.on_off = periods;
  return d;
}

TrafficDescriptor TrafficDescriptor::autocorr_exp(double rate, double a, double s2) {
  auto d = poisson(rate);
  d.model = TrafficModel::kAutocorrExp;
  d.ar = {a, s2};
  return d;
}

TrafficDescriptor TrafficDescriptor::modulated_exp(double rate, double a, double sigma2) {
  auto d = poisson(rate);
  d.model = TrafficModel::kModulatedExp;
  d.mod.a = a;
  d.mod.sigma2 = sigma2;
  d.mod.scale = modulated_scale_for_rate(rate, d.mod.marginal_variance());
  return d;
}

std::array<double, kDescriptorVectorSize> TrafficDescriptor::encode_vector(double max_rate) const {
  std::array<double, kDescriptorVectorSize> v{};
  v[static_cast<int>(model)] = 1.0;
  const double norm = max_rate > 0.0 ? max_rate : 1.0;
  v[5] = rate / norm;
  switch (model) {
    case TrafficModel::kOnOff:
      v[9] = on_off.on_fraction();
      break;
    case TrafficModel::kAutocorrExp:
      v[6] = ar.a;
      v[7] = ar.s2;
      break;
    case TrafficModel::kModulatedExp:
      v[6] = mod.a;
      v[7] = mod.marginal_variance();
      v[8] = mod.scale / norm;
      break;
    default:
      break;
  }
  return v;
}

TrafficState make_traffic_state(const TrafficDescriptor& desc, std::uint64_t seed) {
  TrafficState st;
  st.rng = Rng(seed);
  switch (desc.model) {
    case TrafficModel::kAutocorrExp:
      st.z = st.rng.normal(0.0, std::sqrt(desc.ar.s2));
      break;
    case TrafficModel::kModulatedExp:
      st.z = st.rng.normal(0.0, std::sqrt(desc.mod.marginal_variance()));
      break;
    case TrafficModel::kOnOff: {
      const auto& p = desc.on_off;
      st.on = st.rng.bernoulli(p.on_fraction());
      st.phase_end = st.on ? st.rng.uniform(p.on_min, p.on_max) : st.rng.uniform(p.off_min, p.off_max);
      break;
    }
    default:
      break;
  }
  return st;
}

TrafficState make_traffic_state(const TrafficDescriptor& desc, std::uint64_t dataset_seed, std::uint64_t flow_id) {
  return make_traffic_state(desc, derive_seed(dataset_seed, flow_id));
}

double ar1_step(double a, double sigma2, double z, Rng& rng) {
  if (!(std::abs(a) < 1.0)) throw Error("AR(1) coefficient must satisfy |a| < 1");
  if (!(sigma2 > 0.0)) throw Error("AR(1) innovation variance must be > 0");
  return a * z + std::sqrt(sigma2) * rng.normal();
}

double log_normal_survival(double x) {
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  if (x < 0.0) return std::log1p(-0.5 * std::erfc(-x * kInvSqrt2));
  if (x < 35.0) return std::log(0.5 * std::erfc(x * kInvSqrt2));
  // Mills-ratio expansion; erfc underflows past this point.
  const double x2 = x * x;
  return -0.5 * x2 - std::log(x * std::sqrt(2.0 * std::numbers::pi)) + std::log1p(-1.0 / x2 + 3.0 / (x2 * x2));
}

double copula_interarrival(double z, double s2, double rate) {
  // Far in the left tail 1 - Phi rounds to 1; keep the draw strictly positive.
  return std::max(-log_normal_survival(z / std::sqrt(s2)), std::numeric_limits<double>::min()) / rate;
}

double next_interarrival(const TrafficDescriptor& desc, TrafficState& st) {
  if (desc.rate <= 0.0) return std::numeric_limits<double>::infinity();
  switch (desc.model) {
    case TrafficModel::kPoisson:
      return st.rng.exponential(desc.rate);
    case TrafficModel::kCbr:
      return 1.0 / desc.rate;
    case TrafficModel::kOnOff: {
      const auto& p = desc.on_off;
      const double on_rate = desc.rate / p.on_fraction();
      double t = st.clock;
      while (true) {
        if (!st.on) {
          t = st.phase_end;
          st.on = true;
          st.phase_end = t + st.rng.uniform(p.on_min, p.on_max);
          continue;
        }
        const double gap = st.rng.exponential(on_rate);
        if (t + gap <= st.phase_end) {
          t += gap;
          break;
        }
        // Memoryless: the unused part of the draw is discarded at the phase edge.
        t = st.phase_end;
        st.on = false;
        st.phase_end = t + st.rng.uniform(p.off_min, p.off_max);
      }
      const double delta = t - st.clock;
      st.clock = t;
      return delta;
    }
    case TrafficModel::kAutocorrExp: {
      const double delta = copula_interarrival(st.z, desc.ar.s2, desc.rate);
      st.z = ar1_step(desc.ar.a, desc.ar.s2 * (1.0 - desc.ar.a * desc.ar.a), st.z, st.rng);
      return delta;
    }
    case TrafficModel::kModulatedExp: {
      const double delta = st.rng.exponential(desc.mod.scale * std::exp(st.z));
      st.z = ar1_step(desc.mod.a, desc.mod.sigma2, st.z, st.rng);
      return delta;
    }
  }
  return std::numeric_limits<double>::infinity();
}

EmpiricalStats empirical_stats(std::span<const double> seq, int max_lag) {
  const auto n = seq.size();
  if (n < 2) throw Error("empirical_stats needs at least two values");
  double mean = 0.0;
  for (const double x : seq) mean += x;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (const double x : seq) ss += (x - mean) * (x - mean);
  // Shifted by the first value so a constant sequence gives exactly zero.
  double sx = 0.0;
  double sxx = 0.0;
  for (const double x : seq) {
    sx += x - seq[0];
    sxx += (x - seq[0]) * (x - seq[0]);
  }
  const double var = std::max(0.0, (sxx - sx * sx / static_cast<double>(n)) / static_cast<double>(n - 1));

  EmpiricalStats out;
  out.mean_rate = 1.0 / mean;
  out.cv2 = var / (mean * mean);
  for (int k = 1; k <= max_lag; ++k) {
    if (static_cast<std::size_t>(k) >= n || ss == 0.0) {
      out.autocorr.push_back(0.0);
      continue;
    }
    double acc = 0.0;
    for (std::size_t i = 0; i + k < n; ++i) acc += (seq[i] - mean) * (seq[i + k] - mean);
    out.autocorr.push_back(acc / ss);
  }
  return out;
}

}  // namespace netperf
