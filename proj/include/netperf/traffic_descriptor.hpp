#pragma once

#include <array>
#include <string>
#include <string_view>

namespace netperf {

enum class TrafficModel { kPoisson, kCbr, kOnOff, kAutocorrExp, kModulatedExp };

inline constexpr int kNumTrafficModels = 5;
inline constexpr std::size_t kDescriptorVectorSize = 10;

std::string_view to_string(TrafficModel model);
TrafficModel traffic_model_from_string(std::string_view name);

/// Period bounds in seconds; each On and Off period length is uniform in its range.
struct OnOffParams {
  double on_min = 5.0;
  double on_max = 15.0;
  double off_min = 5.0;
  double off_max = 15.0;

  double on_fraction() const {
    const double on = 0.5 * (on_min + on_max);
    const double off = 0.5 * (off_min + off_max);
    return on / (on + off);
  }
};

/// AR(1) latent process for the copula model. `s2` is the stationary marginal
/// variance of z; the innovation variance is s2 * (1 - a^2).
struct ArParams {
  double a = 0.0;
  double s2 = 1.0;
};

/// Hidden AR(1) driving the rate of the modulated model. `sigma2` is the
/// innovation variance; `scale` is the constant A in lambda_t = A exp(z_t).
struct ModParams {
  double scale = 0.0;
  double a = 0.0;
  double sigma2 = 1.0;

  double marginal_variance() const { return sigma2 / (1.0 - a * a); }
};

/// Tagged union of the five supported arrival processes. Only the parameter
/// group of the active model is read.
struct TrafficDescriptor {
  TrafficModel model = TrafficModel::kPoisson;
  double rate = 0.0;  // mean packets per second
  OnOffParams on_off{};
  ArParams ar{};
  ModParams mod{};

  static TrafficDescriptor poisson(double rate);
  static TrafficDescriptor cbr(double rate);
  static TrafficDescriptor on_off_model(double rate, OnOffParams periods = {});
  static TrafficDescriptor autocorr_exp(double rate, double a, double s2);
  /// Chooses A so that the long-run packet rate equals `rate`.
  static TrafficDescriptor modulated_exp(double rate, double a, double sigma2);

  /// [one-hot(model) x5, rate / max_rate, a, s^2, A / max_rate, on_frac].
  std::array<double, kDescriptorVectorSize> encode_vector(double max_rate) const;
};

/// A such that E[1 / (A e^z)] = 1 / rate for z ~ N(0, s2).
double modulated_scale_for_rate(double rate, double marginal_variance);

}  // namespace netperf
