#pragma once

#include <vector>

#include "mslab/field.hpp"

namespace mslab {

/// States at t_n = n * T / nt, n = 0..nt.
template <class State>
struct TimeSeries {
  double T = 1.0;
  int nt = 1;
  std::vector<State> states;

  double dt() const { return T / nt; }
  double time(int n) const { return n == nt ? T : n * dt(); }
  std::size_t size() const { return states.size(); }
  State& operator[](std::size_t n) { return states[n]; }
  const State& operator[](std::size_t n) const { return states[n]; }
};

/// Two-state trajectory produced by the forward solver.
using Trajectory = TimeSeries<TwoStateField>;
/// A single complex space-time field.
using SpaceTimeField = TimeSeries<ScalarField>;

namespace detail {

template <class State>
void axpy(State& y, double a, const State& x) {
  y += x * cplx(a);
}

inline void axpy(std::vector<cplx>& y, double a, const std::vector<cplx>& x) {
  for (std::size_t k = 0; k < y.size(); ++k) y[k] += a * x[k];
}

template <class State>
State scaled(const State& x, double a) {
  return x * cplx(a);
}

inline std::vector<cplx> scaled(const std::vector<cplx>& x, double a) {
  std::vector<cplx> out(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) out[k] = a * x[k];
  return out;
}

}  // namespace detail

/// Centred differences inside, second-order one-sided at t = 0 and t = T.
template <class State>
TimeSeries<State> time_derivative(const TimeSeries<State>& traj) {
  if (traj.nt < 2 || traj.states.size() != static_cast<std::size_t>(traj.nt) + 1)
    throw PreconditionError("time_derivative needs nt >= 2 and nt+1 states");
  const double dt = traj.dt();
  const auto n = static_cast<std::size_t>(traj.nt);
  TimeSeries<State> out{traj.T, traj.nt, {}};
  out.states.reserve(n + 1);

  State first = detail::scaled(traj[0], -1.5 / dt);
  detail::axpy(first, 2.0 / dt, traj[1]);
  detail::axpy(first, -0.5 / dt, traj[2]);
  out.states.push_back(std::move(first));
  for (std::size_t k = 1; k < n; ++k) {
    State d = detail::scaled(traj[k + 1], 0.5 / dt);
    detail::axpy(d, -0.5 / dt, traj[k - 1]);
    out.states.push_back(std::move(d));
  }
  State last = detail::scaled(traj[n], 1.5 / dt);
  detail::axpy(last, -2.0 / dt, traj[n - 1]);
  detail::axpy(last, 0.5 / dt, traj[n - 2]);
  out.states.push_back(std::move(last));
  return out;
}

/// Cumulative trapezoid integral from t = 0 (starts at zero).
template <class State>
TimeSeries<State> time_antiderivative(const TimeSeries<State>& traj) {
  if (traj.states.empty()) throw PreconditionError("empty trajectory");
  const double dt = traj.dt();
  TimeSeries<State> out{traj.T, traj.nt, {}};
  out.states.reserve(traj.size());
  out.states.push_back(detail::scaled(traj[0], 0.0));
  for (std::size_t k = 1; k < traj.size(); ++k) {
    State next = out.states.back();
    detail::axpy(next, 0.5 * dt, traj[k - 1]);
    detail::axpy(next, 0.5 * dt, traj[k]);
    out.states.push_back(std::move(next));
  }
  return out;
}

inline SpaceTimeField component(const Trajectory& traj, int kappa) {
  SpaceTimeField out{traj.T, traj.nt, {}};
  out.states.reserve(traj.size());
  for (const auto& s : traj.states) out.states.push_back(s[kappa]);
  return out;
}

}  // namespace mslab
