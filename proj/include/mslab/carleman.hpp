#pragma once

#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "mslab/quadrature.hpp"
#include "mslab/rng.hpp"
#include "mslab/stencil.hpp"
#include "mslab/trajectory.hpp"

namespace mslab {

struct WeightOptions {
  bool strict = false;          ///< enforce lambda >= 2 ln(2) K - 1 with unscaled beta
  bool normalize_beta = true;   ///< non-strict only: scale beta to sup 1
  bool log_scale = true;        ///< keep s*alpha and reduced brackets instead of raw products
  std::vector<double> s_grid{1.0, 2.0, 4.0, 8.0, 16.0};
};

/// beta = sigma |x - x0|^2, l(t) = (T - t)(T + t),
/// alpha = (exp(2 lambda beta) - exp(lambda K)) / l^2, K = 2 sup beta.
///
/// alpha is 0 at the nodes where beta attains its sup and negative elsewhere;
/// at t = T it is -inf, so the weight exp(s alpha) is exactly 0.
struct CarlemanWeights {
  Grid grid;
  Point x0{};
  double lambda = 1.0;
  double beta_scale = 1.0;  ///< sigma
  double T = 1.0;
  int nt = 1;
  double K = 0.0;
  std::vector<double> beta;
  std::vector<double> ell;
  std::vector<double> exp_beta;  ///< exp(2 lambda beta)
  double exp_k = 0.0;            ///< exp(lambda K)
  std::vector<std::vector<double>> alpha;
  double c0 = 0.0;
  double eps_pc = 0.0;
  std::vector<std::size_t> gamma0;
  std::vector<double> s_grid;
  bool log_scale = true;
  bool strict = false;

  double dt() const { return T / nt; }
  double time(int n) const { return n == nt ? T : n * dt(); }

  Point grad_beta(std::size_t k) const {
    const Point p = grid.point(k);
    return {2.0 * beta_scale * (p[0] - x0[0]), 2.0 * beta_scale * (p[1] - x0[1])};
  }
  double lap_beta() const { return 2.0 * kDim * beta_scale; }

  Point grad_alpha(int n, std::size_t k) const {
    const double l = ell[static_cast<std::size_t>(n)];
    const double c = 2.0 * lambda * exp_beta[k] / (l * l);
    const Point gb = grad_beta(k);
    return {c * gb[0], c * gb[1]};
  }
  double lap_alpha(int n, std::size_t k) const {
    const double l = ell[static_cast<std::size_t>(n)];
    const Point gb = grad_beta(k);
    return 2.0 * lambda * exp_beta[k] / (l * l) * (lap_beta() + 2.0 * lambda * (gb[0] * gb[0] + gb[1] * gb[1]));
  }
  double alpha_t(int n, std::size_t k) const {
    const double l = ell[static_cast<std::size_t>(n)];
    return 4.0 * time(n) * (exp_beta[k] - exp_k) / (l * l * l);
  }
};

inline double strict_lambda_bound(double K) { return 2.0 * std::numbers::ln2 * K - 1.0; }

inline bool inside_closed_rectangle(const Grid& g, Point x0) {
  return x0[0] >= 0.0 && x0[0] <= g.lx() && x0[1] >= 0.0 && x0[1] <= g.ly();
}

/// Boundary nodes with grad beta . nu >= 0 (analytic gradient).
inline std::vector<std::size_t> compute_gamma0(const CarlemanWeights& w, const Grid& grid) {
  require_same_grid(w.grid, grid);
  std::vector<std::size_t> out;
  for (std::size_t k : grid.boundary_nodes()) {
    const Point gb = w.grad_beta(k), nu = grid.normal(k);
    if (gb[0] * nu[0] + gb[1] * nu[1] >= 0.0) out.push_back(k);
  }
  return out;
}

inline CarlemanWeights build_weights(const Grid& grid, Point x0, double lambda, double T, int nt,
                                     const WeightOptions& opts = {}) {
  if (inside_closed_rectangle(grid, x0)) throw PreconditionError("x0 must lie outside the closed domain");
  detail::require(lambda > 0.0, "lambda must be positive");
  detail::require(T > 0.0 && nt >= 2, "T must be positive and nt >= 2");
  CarlemanWeights w;
  w.grid = grid;
  w.x0 = x0;
  w.lambda = lambda;
  w.T = T;
  w.nt = nt;
  w.strict = opts.strict;
  w.log_scale = opts.log_scale;
  w.s_grid = opts.s_grid;

  double sup_dist2 = 0.0, min_dist2 = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const Point p = grid.point(k);
    const double d2 = (p[0] - x0[0]) * (p[0] - x0[0]) + (p[1] - x0[1]) * (p[1] - x0[1]);
    sup_dist2 = std::max(sup_dist2, d2);
    min_dist2 = std::min(min_dist2, d2);
  }
  w.beta_scale = (!opts.strict && opts.normalize_beta) ? 1.0 / sup_dist2 : 1.0;
  w.beta.resize(grid.size());
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const Point p = grid.point(k);
    w.beta[k] = w.beta_scale * ((p[0] - x0[0]) * (p[0] - x0[0]) + (p[1] - x0[1]) * (p[1] - x0[1]));
  }
  w.K = 2.0 * w.beta_scale * sup_dist2;
  if (opts.strict && lambda < strict_lambda_bound(w.K))
    throw PreconditionError("strict mode needs lambda >= " + std::to_string(strict_lambda_bound(w.K)));
  if (!opts.log_scale && lambda * w.K > 700.0)
    throw NumericalError("exp(lambda K) overflows without log_scale; enable log_scale");

  w.exp_k = std::exp(lambda * w.K);
  w.exp_beta.resize(grid.size());
  for (std::size_t k = 0; k < grid.size(); ++k) w.exp_beta[k] = std::exp(2.0 * lambda * w.beta[k]);

  w.ell.resize(static_cast<std::size_t>(nt) + 1);
  w.alpha.resize(static_cast<std::size_t>(nt) + 1);
  for (int n = 0; n <= nt; ++n) {
    const double t = w.time(n);
    const double l = n == nt ? 0.0 : (T - t) * (T + t);
    w.ell[static_cast<std::size_t>(n)] = l;
    auto& a = w.alpha[static_cast<std::size_t>(n)];
    a.resize(grid.size());
    for (std::size_t k = 0; k < grid.size(); ++k)
      a[k] = n == nt ? -std::numeric_limits<double>::infinity() : std::min(0.0, w.exp_beta[k] - w.exp_k) / (l * l);
  }
  w.c0 = 2.0 * w.beta_scale * std::sqrt(min_dist2);
  w.eps_pc = 2.0 * w.beta_scale;
  w.gamma0 = compute_gamma0(w, grid);
  return w;
}

struct BetaConditions {
  double c0 = 0.0;
  double eps_pc = 0.0;
  double lambda0 = 0.0;
  double c0_numeric = 0.0;
  double eps_numeric = 0.0;
};

/// Analytic (c0, eps_pc, lambda0) for beta = sigma |x - x0|^2, cross-checked
/// against stencil derivatives of the stored beta and random unit directions.
inline BetaConditions check_beta_conditions(const CarlemanWeights& w, int directions = 64, std::uint64_t seed = 1) {
  BetaConditions r{w.c0, w.eps_pc, 0.0, 0.0, 0.0};
  const ScalarField b(w.grid, std::vector<cplx>(w.beta.begin(), w.beta.end()));
  const VectorField gb = gradient(b);
  const ScalarField bxx = second_partial(b, 0), byy = second_partial(b, 1), bxy = partial(partial(b, 0), 1);
  double c0n = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < w.grid.size(); ++k) c0n = std::min(c0n, gb.magnitude(k));
  Rng rng(seed);
  double epsn = std::numeric_limits<double>::infinity();
  for (int d = 0; d < directions; ++d) {
    const double th = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double xi0 = std::cos(th), xi1 = std::sin(th);
    for (std::size_t k = 0; k < w.grid.size(); ++k) {
      const double q = bxx[k].real() * xi0 * xi0 + 2.0 * bxy[k].real() * xi0 * xi1 + byy[k].real() * xi1 * xi1;
      const double g = gb[0][k].real() * xi0 + gb[1][k].real() * xi1;
      epsn = std::min(epsn, r.lambda0 * g * g + q);
    }
  }
  r.c0_numeric = c0n;
  r.eps_numeric = epsn;
  const double tol = 1e-8 * std::max(1.0, r.c0);
  if (std::abs(r.c0_numeric - r.c0) > tol || std::abs(r.eps_numeric - r.eps_pc) > 1e-8 * std::max(1.0, r.eps_pc))
    throw NumericalError("beta condition check disagrees with the analytic values");
  return r;
}

// --- conjugated operators -------------------------------------------------

/// R1(e^{s alpha} v) and R2(e^{s alpha} v) stored as exp(log_weight) * reduced.
///
/// In log-scale mode log_weight = s alpha and the reduced fields are the
/// brackets obtained from the product rule; otherwise log_weight = 0 and the
/// reduced fields are the stencil results on e^{s alpha} v.
struct ConjugatedFields {
  SpaceTimeField r1_reduced;
  SpaceTimeField r2_reduced;
  std::vector<std::vector<double>> log_weight;

  /// exp(log_weight) * reduced, nodewise (may underflow to 0).
  SpaceTimeField materialize(const SpaceTimeField& reduced) const {
    SpaceTimeField out = reduced;
    for (std::size_t n = 0; n < out.size(); ++n)
      for (std::size_t k = 0; k < out[n].size(); ++k)
        out[n][k] = std::isinf(log_weight[n][k]) ? cplx(0.0) : reduced[n][k] * std::exp(log_weight[n][k]);
    return out;
  }
  SpaceTimeField r1() const { return materialize(r1_reduced); }
  SpaceTimeField r2() const { return materialize(r2_reduced); }
};

namespace detail {

inline void check_space_time(const CarlemanWeights& w, const SpaceTimeField& v) {
  if (v.nt != w.nt || v.size() != static_cast<std::size_t>(w.nt) + 1 || std::abs(v.T - w.T) > 1e-14 * w.T)
    throw PreconditionError("space-time field does not match the weight time grid");
  require_same_grid(v[0].grid(), w.grid);
}

inline std::vector<std::vector<double>> scaled_log_weights(const CarlemanWeights& w, double s) {
  std::vector<std::vector<double>> lw(w.alpha.size());
  for (std::size_t n = 0; n < w.alpha.size(); ++n) {
    lw[n].resize(w.alpha[n].size());
    for (std::size_t k = 0; k < w.alpha[n].size(); ++k) lw[n][k] = s * w.alpha[n][k];
  }
  return lw;
}

}  // namespace detail

inline ConjugatedFields apply_conjugated(const CarlemanWeights& w, double s, const SpaceTimeField& v) {
  if (!(s > 0.0)) throw PreconditionError("s must be positive");
  detail::check_space_time(w, v);
  const cplx i(0.0, 1.0);
  const Grid& g = w.grid;
  const int nt = w.nt;
  ConjugatedFields out;
  out.r1_reduced = SpaceTimeField{w.T, nt, {}};
  out.r2_reduced = SpaceTimeField{w.T, nt, {}};

  if (w.log_scale) {
    out.log_weight = detail::scaled_log_weights(w, s);
    const SpaceTimeField vt = time_derivative(v);
    for (int n = 0; n <= nt; ++n) {
      ScalarField r1(g), r2(g);
      if (n < nt) {
        const ScalarField& vn = v[static_cast<std::size_t>(n)];
        const ScalarField lap = laplacian(vn);
        const VectorField gv = gradient(vn);
        for (std::size_t k = 0; k < g.size(); ++k) {
          const Point ga = w.grad_alpha(n, k);
          const double la = w.lap_alpha(n, k);
          const double ga2 = ga[0] * ga[0] + ga[1] * ga[1];
          const cplx ga_gv = ga[0] * gv[0][k] + ga[1] * gv[1][k];
          r1[k] = -i * vt[static_cast<std::size_t>(n)][k] - i * s * w.alpha_t(n, k) * vn[k] - lap[k] -
                  2.0 * s * ga_gv - s * la * vn[k] - 2.0 * s * s * ga2 * vn[k];
          r2[k] = 2.0 * s * ga_gv + 2.0 * s * s * ga2 * vn[k] + s * la * vn[k];
        }
      }
      out.r1_reduced.states.push_back(std::move(r1));
      out.r2_reduced.states.push_back(std::move(r2));
    }
    return out;
  }

  SpaceTimeField wt{w.T, nt, {}};
  for (int n = 0; n <= nt; ++n) {
    ScalarField f(g);
    if (n < nt)
      for (std::size_t k = 0; k < g.size(); ++k)
        f[k] = std::exp(s * w.alpha[static_cast<std::size_t>(n)][k]) * v[static_cast<std::size_t>(n)][k];
    wt.states.push_back(std::move(f));
  }
  const SpaceTimeField wtt = time_derivative(wt);
  out.log_weight.assign(static_cast<std::size_t>(nt) + 1, std::vector<double>(g.size(), 0.0));
  for (int n = 0; n <= nt; ++n) {
    ScalarField r1(g), r2(g);
    if (n < nt) {
      const ScalarField& wn = wt[static_cast<std::size_t>(n)];
      const ScalarField lap = laplacian(wn);
      const VectorField gw = gradient(wn);
      for (std::size_t k = 0; k < g.size(); ++k) {
        const Point ga = w.grad_alpha(n, k);
        const double ga2 = ga[0] * ga[0] + ga[1] * ga[1];
        r1[k] = -i * wtt[static_cast<std::size_t>(n)][k] - lap[k] - s * s * ga2 * wn[k];
        r2[k] = 2.0 * s * (ga[0] * gw[0][k] + ga[1] * gw[1][k]) + s * w.lap_alpha(n, k) * wn[k];
      }
      if (!r1.all_finite() || !r2.all_finite())
        throw NumericalError("overflow in direct weight evaluation; enable log_scale");
    }
    out.r1_reduced.states.push_back(std::move(r1));
    out.r2_reduced.states.push_back(std::move(r2));
  }
  return out;
}

/// sum_n tw_n sum_k area_k exp(2 lw[n][k]) |f[n][k]|^2.
inline ScaledValue weighted_space_time_norm(const SpaceTimeField& f, const std::vector<std::vector<double>>& lw) {
  const Grid& g = f[0].grid();
  const auto tw = time_weights(f.nt, f.dt());
  WeightedAccumulator acc;
  for (std::size_t n = 0; n < f.size(); ++n)
    for (std::size_t k = 0; k < g.size(); ++k) acc.add(tw[n] * g.area_weight(k), lw[n][k], std::norm(f[n][k]));
  return acc.result();
}

/// ||e^{s alpha} v||^2 over Q.
inline ScaledValue weighted_norm(const CarlemanWeights& w, double s, const SpaceTimeField& v) {
  detail::check_space_time(w, v);
  return weighted_space_time_norm(v, detail::scaled_log_weights(w, s));
}

/// ||e^{s alpha0} f||^2 over Omega with alpha0 = alpha(., 0).
inline ScaledValue weighted_initial_norm(const CarlemanWeights& w, double s, const ScalarField& f) {
  require_same_grid(f.grid(), w.grid);
  WeightedAccumulator acc;
  for (std::size_t k = 0; k < w.grid.size(); ++k) acc.add(w.grid.area_weight(k), s * w.alpha[0][k], std::norm(f[k]));
  return acc.result();
}

/// int e^{2 s alpha0} |grad beta . (conj(u) grad u - u grad conj(u))| dx, log-scaled.
inline ScaledValue boundary_functional_scaled(const CarlemanWeights& w, double s, const ScalarField& u0) {
  require_same_grid(u0.grid(), w.grid);
  const VectorField gu = gradient(u0);
  WeightedAccumulator acc;
  for (std::size_t k = 0; k < w.grid.size(); ++k) {
    const Point gb = w.grad_beta(k);
    // conj(u) grad u - u grad conj(u) = 2i Im(conj(u) grad u)
    const double jx = 2.0 * (std::conj(u0[k]) * gu[0][k]).imag();
    const double jy = 2.0 * (std::conj(u0[k]) * gu[1][k]).imag();
    const double integrand = std::abs(gb[0] * jx + gb[1] * jy);
    acc.add(w.grid.area_weight(k), s * w.alpha[0][k], integrand);
  }
  return acc.result();
}

inline double boundary_functional_I(const CarlemanWeights& w, double s, const ScalarField& u0) {
  return boundary_functional_scaled(w, s, u0).value();
}

// --- checks ---------------------------------------------------------------

struct InitialTraceBound {
  ScaledValue lhs;
  ScaledValue rhs;
  bool holds() const { return lhs.is_zero() || (!rhs.is_zero() && lhs.log() <= rhs.log()); }
};

/// lhs = ||e^{s alpha0} v(.,0)||^2, rhs = s^{-3/2}(||R1 e^{s alpha} v||^2 + s^3 ||e^{s alpha} v||^2).
inline InitialTraceBound check_initial_trace_bound(const CarlemanWeights& w, double s, const SpaceTimeField& v) {
  if (!(s > 0.0)) throw PreconditionError("s must be positive");
  const ConjugatedFields c = apply_conjugated(w, s, v);
  const ScaledValue r1 = weighted_space_time_norm(c.r1_reduced, c.log_weight);
  const ScaledValue wv = weighted_norm(w, s, v);
  InitialTraceBound b;
  b.lhs = weighted_initial_norm(w, s, v[0]);
  b.rhs = std::pow(s, -1.5) * (r1 + std::pow(s, 3) * wv);
  return b;
}

/// Terms of the Carleman inequality for one field and one s.
struct CarlemanTerms {
  ScaledValue r1, r2, grad, s3;  // left side
  ScaledValue lu, trace, s_i;    // right side
  ScaledValue lhs() const { return r1 + r2 + grad + s3; }
  ScaledValue rhs() const { return lu + trace + s_i; }
  double ratio() const { return mslab::ratio(lhs(), rhs()); }
};

inline CarlemanTerms carleman_terms(const CarlemanWeights& w, double s, const SpaceTimeField& u) {
  detail::check_space_time(w, u);
  const Grid& g = w.grid;
  const auto lw = detail::scaled_log_weights(w, s);
  const ConjugatedFields c = apply_conjugated(w, s, u);
  CarlemanTerms t;
  t.r1 = weighted_space_time_norm(c.r1_reduced, c.log_weight);
  t.r2 = weighted_space_time_norm(c.r2_reduced, c.log_weight);
  t.s3 = std::pow(s, 3) * weighted_space_time_norm(u, lw);

  const SpaceTimeField ut = time_derivative(u);
  SpaceTimeField gx{u.T, u.nt, {}}, gy{u.T, u.nt, {}}, lu{u.T, u.nt, {}};
  const auto tw = time_weights(u.nt, u.dt());
  WeightedAccumulator trace;
  const cplx i(0.0, 1.0);
  for (std::size_t n = 0; n < u.size(); ++n) {
    const VectorField gu = gradient(u[n]);
    gx.states.push_back(gu[0]);
    gy.states.push_back(gu[1]);
    lu.states.push_back(ut[n] * (-i) - laplacian(u[n]));
    const auto tr = neumann_trace(u[n], w.gamma0);
    for (std::size_t b = 0; b < tr.size(); ++b) trace.add(tw[n] * g.boundary_weight(w.gamma0[b]), std::norm(tr[b]));
  }
  t.grad = s * (weighted_space_time_norm(gx, lw) + weighted_space_time_norm(gy, lw));
  t.lu = weighted_space_time_norm(lu, lw);
  t.trace = trace.result();
  t.s_i = s * boundary_functional_scaled(w, s, u[0]);
  return t;
}

/// Random smooth field vanishing on the boundary: sine modes up to 3 per axis
/// with complex coefficients quadratic in t.
inline SpaceTimeField random_space_time_sample(const Grid& g, double T, int nt, Rng& rng, int modes = 3) {
  struct Mode {
    int m, n;
    cplx c0, c1, c2;
  };
  std::vector<Mode> ms;
  auto draw = [&] {
    const double re = rng.normal();
    return cplx(re, rng.normal());
  };
  for (int m = 1; m <= modes; ++m)
    for (int n = 1; n <= modes; ++n) {
      const double damp = 1.0 / (m * m + n * n);
      const cplx a = draw() * damp;
      const cplx b = draw() * damp;
      const cplx c = draw() * damp;
      ms.push_back({m, n, a, b, c});
    }
  SpaceTimeField out{T, nt, {}};
  for (int k = 0; k <= nt; ++k) {
    const double tau = (k == nt ? T : k * (T / nt)) / T;
    ScalarField f(g);
    for (std::size_t node = 0; node < g.size(); ++node) {
      if (g.is_boundary(node)) continue;
      const Point p = g.point(node);
      cplx v = 0.0;
      for (const auto& md : ms)
        v += (md.c0 + tau * md.c1 + tau * tau * md.c2) * std::sin(md.m * std::numbers::pi * p[0] / g.lx()) *
             std::sin(md.n * std::numbers::pi * p[1] / g.ly());
      f[node] = v;
    }
    out.states.push_back(std::move(f));
  }
  return out;
}

struct CarlemanCheckReport {
  struct Row {
    int sample = 0;
    double s = 0.0;
    CarlemanTerms terms;
    ScaledValue normalization;  ///< ||e^{s alpha} u||^2 of the raw sample
  };
  std::vector<Row> rows;
  std::vector<double> s_grid;
  std::vector<double> c_fit;  ///< per s: max over samples of lhs / rhs (NaN when every lhs is zero)
  bool stabilized = false;    ///< c_fit non-increasing over the top half of s_grid
  double lambda = 0.0;
  double strict_bound = 0.0;
  bool strict = false;

  /// log of a term divided by the sample normalization.
  static double normalized_log(const ScaledValue& term, const ScaledValue& norm) {
    return term.is_zero() ? -std::numeric_limits<double>::infinity() : term.log() - norm.log();
  }
};

/// Least-squares slope of log y against log x.
inline double log_log_slope(const std::vector<double>& x, const std::vector<double>& log_y) {
  const std::size_t n = x.size();
  detail::require(n >= 2 && log_y.size() == n, "slope needs at least two points");
  double mx = 0.0, my = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    mx += std::log(x[k]);
    my += log_y[k];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double dx = std::log(x[k]) - mx;
    sxy += dx * (log_y[k] - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

/// Evaluates every inequality term for `samples` random fields and each s in
/// w.s_grid; samples are drawn from mix_seed(seed, sample).
inline CarlemanCheckReport carleman_check(const CarlemanWeights& w, int samples, std::uint64_t seed,
                                          const std::vector<SpaceTimeField>* fields = nullptr) {
  if (samples < 1 && !fields) throw PreconditionError("samples must be >= 1");
  if (w.s_grid.empty()) throw PreconditionError("s_grid must not be empty");
  CarlemanCheckReport rep;
  rep.s_grid = w.s_grid;
  rep.lambda = w.lambda;
  rep.strict = w.strict;
  rep.strict_bound = strict_lambda_bound(w.K);
  rep.c_fit.assign(w.s_grid.size(), std::numeric_limits<double>::quiet_NaN());
  const int count = fields ? static_cast<int>(fields->size()) : samples;
  for (int smp = 0; smp < count; ++smp) {
    SpaceTimeField drawn;
    if (!fields) {
      Rng rng(mix_seed(seed, static_cast<std::uint64_t>(smp)));
      drawn = random_space_time_sample(w.grid, w.T, w.nt, rng);
    }
    const SpaceTimeField& u = fields ? (*fields)[static_cast<std::size_t>(smp)] : drawn;
    for (std::size_t si = 0; si < w.s_grid.size(); ++si) {
      const double s = w.s_grid[si];
      CarlemanCheckReport::Row row{smp, s, carleman_terms(w, s, u), weighted_norm(w, s, u)};
      const double r = row.terms.ratio();
      if (!row.terms.lhs().is_zero()) rep.c_fit[si] = std::isnan(rep.c_fit[si]) ? r : std::max(rep.c_fit[si], r);
      rep.rows.push_back(row);
    }
  }
  const std::size_t half = w.s_grid.size() / 2;
  rep.stabilized = true;
  for (std::size_t si = half + 1; si < rep.c_fit.size(); ++si)
    if (rep.c_fit[si] > rep.c_fit[si - 1] * (1.0 + 1e-9)) rep.stabilized = false;
  return rep;
}

namespace detail {

inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

/// Natural logs of the normalized terms (term / ||e^{s alpha} u||^2) plus C_fit at that s.
inline void write_carleman_csv(std::ostream& os, const CarlemanCheckReport& rep, const std::string& header = {}) {
  if (!header.empty()) os << header << '\n';
  os << "sample,s,log_r1,log_r2,log_grad,log_s3,log_lu,log_trace,log_s_i,log_lhs,log_rhs,ratio,C_fit\n";
  for (const auto& row : rep.rows) {
    std::size_t si = 0;
    while (si < rep.s_grid.size() && rep.s_grid[si] != row.s) ++si;
    const auto& t = row.terms;
    const auto& nm = row.normalization;
    auto l = [&](const ScaledValue& v) { return detail::fmt(CarlemanCheckReport::normalized_log(v, nm)); };
    os << row.sample << ',' << detail::fmt(row.s) << ',' << l(t.r1) << ',' << l(t.r2) << ',' << l(t.grad) << ','
       << l(t.s3) << ',' << l(t.lu) << ',' << l(t.trace) << ',' << l(t.s_i) << ',' << l(t.lhs()) << ','
       << l(t.rhs()) << ',' << detail::fmt(t.ratio()) << ',' << detail::fmt(rep.c_fit[si]) << '\n';
  }
}

}  // namespace mslab
