#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "jdd/types.hpp"

namespace jdd {

enum class NoiseKind { kFlowMatching };

// Interpolation coefficients of the forward noising process
// x_t = alpha(t) x_0 + sigma(t) eps.
struct NoiseCoeffs {
  NoiseKind kind = NoiseKind::kFlowMatching;

  double alpha(double t) const { return 1.0 - t; }
  double sigma(double t) const { return t; }
};

enum class Warp { kLinear, kKarras };

Warp parse_warp(const std::string& name);
std::string warp_name(Warp warp);

// Strictly decreasing timesteps t_max = values[0] > ... > values[T-1] = t_min.
// The final step to t = 0 is implicit and taken from the last index.
struct TimestepGrid {
  std::vector<double> values;
  Warp warp = Warp::kLinear;
  double rho = 7.0;

  std::size_t size() const { return values.size(); }
  double at(Level k) const;
  // Timestep reached by a denoising step taken from index k.
  double next(Level k) const;
  bool is_terminal(Level k) const { return static_cast<std::size_t>(k) + 1 == values.size(); }
};

struct ScheduleParams {
  int steps = 25;
  double t_min = 1e-3;
  double t_max = 1.0;
  Warp warp = Warp::kLinear;
  double rho = 7.0;
};

struct Schedule {
  NoiseCoeffs coeffs;
  TimestepGrid grid;
};

// Throws ConfigError naming the offending field on invalid bounds.
Schedule build_schedule(const ScheduleParams& params);

struct DenoiseCoefficients {
  double t_from = 0.0;
  double t_to = 0.0;
  double c_current = 0.0;     // multiplies the current noisy embedding
  double c_prediction = 0.0;  // multiplies the predicted clean embedding
};

DenoiseCoefficients denoise_coefficients(Level k, const TimestepGrid& grid,
                                         const NoiseCoeffs& coeffs);

// One solver step from grid.values[k] to grid.next(k). The terminal step
// returns the prediction exactly.
Vec denoise_step(std::span<const double> current, std::span<const double> prediction, Level k,
                 const TimestepGrid& grid, const NoiseCoeffs& coeffs);

// alpha(t) * clean + sigma(t) * eps.
Vec perturb(std::span<const double> clean, double t, std::span<const double> eps,
            const NoiseCoeffs& coeffs);

}  // namespace jdd
