#include "jdd/schedules.hpp"

#include <algorithm>
#include <cmath>

#include "jdd/error.hpp"

namespace jdd {
namespace {

// Interior Karras points need a finite sigma(t_max) = t / (1 - t).
constexpr double kKarrasTCap = 1.0 - 1e-4;

double to_karras_sigma(double t) { return t / (1.0 - t); }
double from_karras_sigma(double s) { return s / (s + 1.0); }

}  // namespace

Warp parse_warp(const std::string& name) {
  if (name == "linear") return Warp::kLinear;
  if (name == "karras") return Warp::kKarras;
  throw ConfigError("schedule.warp", "unknown warp '" + name + "' (expected linear|karras)");
}

std::string warp_name(Warp warp) { return warp == Warp::kKarras ? "karras" : "linear"; }

double TimestepGrid::at(Level k) const {
  if (k < 0 || static_cast<std::size_t>(k) >= values.size()) {
    throw IndexError("grid index " + std::to_string(k) + " outside [0, " +
                     std::to_string(values.size()) + ")");
  }
  return values[static_cast<std::size_t>(k)];
}

double TimestepGrid::next(Level k) const {
  at(k);
  return is_terminal(k) ? 0.0 : values[static_cast<std::size_t>(k) + 1];
}

Schedule build_schedule(const ScheduleParams& p) {
  if (p.steps < 1 || p.steps > 10000) {
    throw ConfigError("schedule.steps", "must be in [1, 10000], got " + std::to_string(p.steps));
  }
  if (!(p.t_min > 0.0)) throw ConfigError("schedule.t_min", "t_min > 0 required");
  if (!(p.t_max <= 1.0)) throw ConfigError("schedule.t_max", "t_max <= 1 required");
  if (!(p.t_min < p.t_max)) throw ConfigError("schedule.t_min", "t_min < t_max required");
  if (p.warp == Warp::kKarras && !(p.rho > 0.0)) {
    throw ConfigError("schedule.rho", "rho > 0 required");
  }

  Schedule out;
  TimestepGrid& grid = out.grid;
  grid.warp = p.warp;
  grid.rho = p.rho;
  const auto n = static_cast<std::size_t>(p.steps);
  grid.values.resize(n);
  if (n == 1) {
    grid.values[0] = p.t_max;
    return out;
  }
  const double denom = static_cast<double>(n - 1);
  if (p.warp == Warp::kLinear) {
    for (std::size_t i = 0; i < n; ++i) {
      grid.values[i] = p.t_max + static_cast<double>(i) / denom * (p.t_min - p.t_max);
    }
  } else {
    const double s_max = to_karras_sigma(std::min(p.t_max, kKarrasTCap));
    const double s_min = to_karras_sigma(p.t_min);
    const double a = std::pow(s_max, 1.0 / p.rho);
    const double b = std::pow(s_min, 1.0 / p.rho);
    for (std::size_t i = 0; i < n; ++i) {
      const double s = std::pow(a + static_cast<double>(i) / denom * (b - a), p.rho);
      grid.values[i] = from_karras_sigma(s);
    }
  }
  grid.values.front() = p.t_max;
  grid.values.back() = p.t_min;
  for (std::size_t i = 1; i < n; ++i) {
    if (!(grid.values[i] < grid.values[i - 1])) {
      throw ConfigError("schedule.steps", "grid is not strictly decreasing at index " +
                                              std::to_string(i) + "; bounds too close for T");
    }
  }
  return out;
}

DenoiseCoefficients denoise_coefficients(Level k, const TimestepGrid& grid,
                                         const NoiseCoeffs& coeffs) {
  DenoiseCoefficients c;
  c.t_from = grid.at(k);
  c.t_to = grid.next(k);
  const double s_from = coeffs.sigma(c.t_from);
  if (s_from == 0.0) throw DomainError("denoise_step source timestep has sigma = 0");
  const double ratio = coeffs.sigma(c.t_to) / s_from;
  c.c_current = ratio;
  // alpha_from * (alpha_to / alpha_from - ratio), expanded so alpha_from = 0 is safe.
  c.c_prediction = coeffs.alpha(c.t_to) - coeffs.alpha(c.t_from) * ratio;
  return c;
}

Vec denoise_step(std::span<const double> current, std::span<const double> prediction, Level k,
                 const TimestepGrid& grid, const NoiseCoeffs& coeffs) {
  if (current.size() != prediction.size()) {
    throw ShapeError("denoise_step: embeddings differ in dimension (" +
                     std::to_string(current.size()) + " vs " +
                     std::to_string(prediction.size()) + ")");
  }
  const DenoiseCoefficients c = denoise_coefficients(k, grid, coeffs);
  if (grid.is_terminal(k)) return Vec(prediction.begin(), prediction.end());
  Vec out(current.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = c.c_current * current[i] + c.c_prediction * prediction[i];
  }
  return out;
}

Vec perturb(std::span<const double> clean, double t, std::span<const double> eps,
            const NoiseCoeffs& coeffs) {
  if (clean.size() != eps.size()) {
    throw ShapeError("perturb: noise dimension " + std::to_string(eps.size()) +
                     " != embedding dimension " + std::to_string(clean.size()));
  }
  if (!(t >= 0.0 && t <= 1.0)) throw DomainError("perturb: t must lie in [0, 1]");
  const double a = coeffs.alpha(t);
  const double s = coeffs.sigma(t);
  Vec out(clean.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * clean[i] + s * eps[i];
  return out;
}

}  // namespace jdd
