#include "ctlab/schedules.hpp"

#include <cmath>
#include <stdexcept>

namespace ctlab {

namespace {

constexpr double kLinearBetaStart = 1e-4;
constexpr double kLinearBetaEnd = 0.02;
constexpr double kCosineOffset = 0.008;
constexpr double kBetaClip = 0.999;

double cosine_f(double t, double total) {
  const double u = (t / total + kCosineOffset) / (1.0 + kCosineOffset);
  const double c = std::cos(u * M_PI / 2.0);
  return c * c;
}

}  // namespace

double NoiseSchedule::alpha_bar_at(int t) const {
  if (t < 0 || t > total_steps)
    throw std::out_of_range("NoiseSchedule: timestep out of [0, T]");
  return alpha_bar[t];
}

GammaSchedule GammaSchedule::constant(double gamma) {
  if (gamma < 0) throw std::invalid_argument("GammaSchedule: weight must be >= 0");
  GammaSchedule s;
  s.kind = GammaKind::constant;
  s.gamma_const = gamma;
  return s;
}

GammaSchedule GammaSchedule::linear_decay(double gamma_max, double gamma_min) {
  if (gamma_min < 0 || gamma_max < gamma_min)
    throw std::invalid_argument("GammaSchedule: need gamma_max >= gamma_min >= 0");
  GammaSchedule s;
  s.kind = GammaKind::linear_decay;
  s.gamma_max = gamma_max;
  s.gamma_min = gamma_min;
  return s;
}

NoiseSchedule build_schedule(ScheduleKind kind, int total_steps) {
  if (total_steps < 1) throw std::invalid_argument("build_schedule: T must be >= 1");

  NoiseSchedule sched;
  sched.kind = kind;
  sched.total_steps = total_steps;
  sched.alpha_bar.resize(total_steps + 1);
  sched.alpha_bar[0] = 1.0;

  if (kind == ScheduleKind::linear) {
    const double scale = 1000.0 / total_steps;
    double prod = 1.0;
    for (int t = 1; t <= total_steps; ++t) {
      const double frac = total_steps == 1 ? 0.0 : (t - 1) / double(total_steps - 1);
      const double beta = scale * (kLinearBetaStart + frac * (kLinearBetaEnd - kLinearBetaStart));
      prod *= 1.0 - beta;
      sched.alpha_bar[t] = prod;
    }
  } else {
    // Telescoping product of the clipped per-step betas; without the clip
    // this is exactly f(t) / f(0).
    double prod = 1.0;
    for (int t = 1; t <= total_steps; ++t) {
      const double ratio = cosine_f(t, total_steps) / cosine_f(t - 1.0, total_steps);
      const double beta = std::min(1.0 - ratio, kBetaClip);
      prod *= 1.0 - beta;
      sched.alpha_bar[t] = prod;
    }
  }

  for (int t = 1; t <= total_steps; ++t) {
    if (!(sched.alpha_bar[t] > 0.0) || !(sched.alpha_bar[t] < sched.alpha_bar[t - 1]))
      throw std::runtime_error("build_schedule: alpha_bar not strictly decreasing in (0, 1]");
  }
  return sched;
}

TimestepPlan make_timesteps(int total_steps, int nfe) {
  if (nfe < 1) throw std::invalid_argument("make_timesteps: nfe must be >= 1");
  if (nfe > total_steps) throw std::invalid_argument("make_timesteps: nfe exceeds T");

  TimestepPlan plan;
  plan.steps.resize(nfe);
  if (nfe == 1) {
    plan.steps[0] = total_steps;
    return plan;
  }
  for (int k = 0; k < nfe; ++k) {
    const double v = total_steps + (1.0 - total_steps) * k / (nfe - 1.0);
    plan.steps[k] = static_cast<int>(std::lround(v));
  }
  return plan;
}

double gamma_at(const GammaSchedule& sched, int t, int total_steps) {
  if (t < 0 || t > total_steps)
    throw std::out_of_range("gamma_at: timestep out of [0, T]");
  if (sched.kind == GammaKind::constant) return sched.gamma_const;
  return sched.gamma_min + (sched.gamma_max - sched.gamma_min) * t / double(total_steps);
}

}  // namespace ctlab
