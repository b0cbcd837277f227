#pragma once

#include <Eigen/Dense>

#include <vector>

namespace ctlab {

enum class ScheduleKind { linear, cosine };

/// Cumulative signal-retention table alpha_bar[0..T], alpha_bar[0] = 1,
/// strictly decreasing, all entries in (0, 1].
struct NoiseSchedule {
  ScheduleKind kind = ScheduleKind::cosine;
  int total_steps = 0;  // T
  Eigen::VectorXd alpha_bar;  // T + 1 entries

  double alpha_bar_at(int t) const;
};

/// Strictly decreasing subsequence of timestep indices in [1, T]; the
/// successor of the last entry is 0.
struct TimestepPlan {
  std::vector<int> steps;

  int nfe() const { return static_cast<int>(steps.size()); }
};

enum class GammaKind { constant, linear_decay };

/// Likelihood weight as a function of the timestep. The linear decay ramp is
/// evaluated on the continuous fraction t / T, so reduced-budget plans sample
/// the same ramp.
struct GammaSchedule {
  GammaKind kind = GammaKind::constant;
  double gamma_const = 1.0;
  double gamma_max = 0.0;
  double gamma_min = 0.0;

  static GammaSchedule constant(double gamma);
  static GammaSchedule linear_decay(double gamma_max, double gamma_min = 0.0);
};

/// linear: beta linearly spaced over (1e-4, 0.02) scaled by 1000 / T;
/// cosine: alpha_bar(t) = f(t)/f(0) with f(t) = cos^2(((t/T + s)/(1+s)) pi/2),
/// s = 0.008, per-step beta clipped at 0.999.
NoiseSchedule build_schedule(ScheduleKind kind, int total_steps);

/// Uniform-stride plan from T down to 1, inclusive of both extremes
/// (values round(linspace(T, 1, nfe))).
TimestepPlan make_timesteps(int total_steps, int nfe);

double gamma_at(const GammaSchedule& sched, int t, int total_steps);

}  // namespace ctlab
