#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "mslab/carleman.hpp"
#include "mslab/coefficients.hpp"
#include "mslab/dynamics.hpp"
#include "mslab/parallel.hpp"
#include "mslab/probing.hpp"

namespace mslab {

// --- linearisation --------------------------------------------------------

/// theta_S(dA, dq) w = 2i dA.grad w + i(div dA + i S.dA) w - dq w and
/// Theta(+-dPhi, dphi) w = +-dPhi.grad w + dphi w; returns
/// (theta_{S+} w+ - Theta(+) w-, theta_{S-} w- - Theta(-) w+).
inline TwoStateField apply_linearized(const CoefficientSet& delta, const VectorField& s_plus,
                                      const VectorField& s_minus, const TwoStateField& w) {
  require_same_grid(delta.grid(), w.grid());
  const cplx i(0.0, 1.0);
  TwoStateField out(w.grid());
  for (int kappa = 0; kappa < 2; ++kappa) {
    const VectorField& da = delta.a(kappa);
    const VectorField& s = kappa == 0 ? s_plus : s_minus;
    const ScalarField& wk = w[kappa];
    const ScalarField& other = w[1 - kappa];
    const ScalarField theta = dot(da, gradient(wk)) * (2.0 * i) + (divergence(da) + dot(s, da) * i) * wk * i -
                              delta.q(kappa) * wk;
    const double sign = kappa == 0 ? 1.0 : -1.0;
    const ScalarField coupling = dot(delta.phi_vec, gradient(other)) * cplx(sign) + delta.phi_scal * other;
    out[kappa] = theta - coupling;
  }
  return out;
}

/// Data of the linearised and time-differentiated difference system.
struct LinearizedData {
  VectorField s_plus;   ///< A1+ + A2+
  VectorField s_minus;  ///< A1- + A2-
  CoefficientSet delta;
  TwoStateField v0;
  std::optional<Trajectory> source;
};

inline LinearizedData linearize(const CoefficientSet& c1, const CoefficientSet& c2, const TwoStateField& u0) {
  require_same_grid(c1.grid(), c2.grid());
  LinearizedData d;
  d.s_plus = c1.a_plus + c2.a_plus;
  d.s_minus = c1.a_minus + c2.a_minus;
  d.delta = difference(c1, c2);
  d.v0 = apply_linearized(d.delta, d.s_plus, d.s_minus, u0) * cplx(0.0, 1.0);
  return d;
}

/// Initial value of d/dt (u1 - u2) from the coefficient differences.
inline TwoStateField v0_exact(const CoefficientSet& c1, const CoefficientSet& c2, const TwoStateField& u0) {
  return linearize(c1, c2, u0).v0;
}

/// Inhomogeneity of the differentiated difference system at every time level,
/// evaluated on d/dt u2.
inline Trajectory linearized_source(const CoefficientSet& c1, const CoefficientSet& c2, const Trajectory& traj2) {
  const CoefficientSet delta = difference(c1, c2);
  const VectorField sp = c1.a_plus + c2.a_plus, sm = c1.a_minus + c2.a_minus;
  const Trajectory ut = time_derivative(traj2);
  Trajectory out{traj2.T, traj2.nt, {}};
  out.states.reserve(ut.size());
  for (const auto& s : ut.states) out.states.push_back(apply_linearized(delta, sp, sm, s));
  return out;
}

// --- measurements ---------------------------------------------------------

/// d_nu d_t u^kappa on gamma0 x time levels for one probe; values[kappa] is
/// laid out t-major: values[kappa][n * |gamma0| + b].
struct MeasurementRecord {
  int probe = 0;
  std::vector<std::size_t> gamma0;
  double T = 0.0;
  int nt = 0;
  std::array<std::vector<cplx>, 2> values;

  double dt() const { return T / nt; }
  const cplx& at(int kappa, int n, std::size_t b) const {
    return values[static_cast<std::size_t>(kappa)][static_cast<std::size_t>(n) * gamma0.size() + b];
  }
};

struct MeasurementOptions {
  int taylor_order = 2;
  double noise_level = 0.0;  ///< relative to the RMS of each record component
  std::uint64_t noise_seed = 0;
  int threads = 1;
};

namespace detail {

inline MeasurementRecord measure_probe(const CrankNicolsonSolver& solver, const TwoStateField& u0, int probe,
                                       const std::vector<std::size_t>& gamma0, double T, int nt, int order) {
  const HamiltonianOperator& h = solver.hamiltonian();
  const BoundaryData g = compatibility_boundary_data(h, u0, order, uniform_times(T, nt));
  std::array<TimeSeries<std::vector<cplx>>, 2> traces{TimeSeries<std::vector<cplx>>{T, nt, {}},
                                                      TimeSeries<std::vector<cplx>>{T, nt, {}}};
  solver.run(u0, g, nt, [&](int, const TwoStateField& u) {
    for (int kappa = 0; kappa < 2; ++kappa) traces[kappa].states.push_back(neumann_trace(u[kappa], gamma0));
  });
  MeasurementRecord rec;
  rec.probe = probe;
  rec.gamma0 = gamma0;
  rec.T = T;
  rec.nt = nt;
  for (int kappa = 0; kappa < 2; ++kappa) {
    const auto d = time_derivative(traces[kappa]);
    auto& v = rec.values[static_cast<std::size_t>(kappa)];
    v.reserve(d.size() * gamma0.size());
    for (const auto& level : d.states) v.insert(v.end(), level.begin(), level.end());
  }
  return rec;
}

inline void add_noise(MeasurementRecord& rec, double level, std::uint64_t seed) {
  if (level <= 0.0) return;
  Rng rng(mix_seed(seed, static_cast<std::uint64_t>(rec.probe)));
  for (auto& v : rec.values) {
    double ms = 0.0;
    for (const auto& x : v) ms += std::norm(x);
    const double sigma = level * std::sqrt(ms / std::max<std::size_t>(1, v.size())) / std::numbers::sqrt2;
    for (auto& x : v) {
      const double re = rng.normal();
      x += sigma * cplx(re, rng.normal());
    }
  }
}

}  // namespace detail

/// One record per probe (probe index order): compatibility boundary data,
/// Crank-Nicolson solve, trace on gamma0, time derivative of the trace series.
inline std::vector<MeasurementRecord> simulate_measurements(const CoefficientSet& c, const ProbeSet& probes,
                                                            const std::vector<std::size_t>& gamma0, double T, int nt,
                                                            const MeasurementOptions& opts = {}) {
  require_same_grid(c.grid(), probes.grid());
  if (gamma0.empty()) throw PreconditionError("empty observation boundary");
  auto h = std::make_shared<const HamiltonianOperator>(c);
  const CrankNicolsonSolver solver(h, T / nt);
  std::vector<MeasurementRecord> out(probes.size());
  parallel_for(probes.size(), opts.threads, [&](std::size_t k) {
    try {
      out[k] = detail::measure_probe(solver, probes.probes[k], static_cast<int>(k), gamma0, T, nt, opts.taylor_order);
      detail::add_noise(out[k], opts.noise_level, opts.noise_seed);
    } catch (const NumericalError& e) {
      throw NumericalError("probe " + std::to_string(k + 1) + ": " + e.what());
    }
  });
  return out;
}

inline std::vector<MeasurementRecord> simulate_measurements(const CoefficientSet& c, const ProbeSet& probes,
                                                            const CarlemanWeights& w, double T, int nt,
                                                            const MeasurementOptions& opts = {}) {
  return simulate_measurements(c, probes, w.gamma0, T, nt, opts);
}

/// Columns probe, kappa, boundary_node_index, t_index, re, im (probe is 1-based).
inline void write_measurement_csv(std::ostream& os, const MeasurementRecord& rec, const std::string& header = {}) {
  if (!header.empty()) os << header << '\n';
  os << "probe,kappa,boundary_node_index,t_index,re,im\n";
  for (int kappa = 0; kappa < 2; ++kappa)
    for (int n = 0; n <= rec.nt; ++n)
      for (std::size_t b = 0; b < rec.gamma0.size(); ++b) {
        const cplx v = rec.at(kappa, n, b);
        os << rec.probe + 1 << ',' << (kappa == 0 ? '+' : '-') << ',' << rec.gamma0[b] << ',' << n << ','
           << detail::fmt(v.real()) << ',' << detail::fmt(v.imag()) << '\n';
      }
}

/// ||m1 - m2||^2 over gamma0 x (0, T), summed over kappa (space-time trapezoid).
inline double record_distance_sq(const MeasurementRecord& a, const MeasurementRecord& b, const Grid& g) {
  if (a.probe != b.probe || a.gamma0 != b.gamma0 || a.nt != b.nt || a.T != b.T)
    throw PreconditionError("measurement records are not aligned (probe " + std::to_string(a.probe + 1) + ")");
  const auto tw = time_weights(a.nt, a.dt());
  double acc = 0.0;
  for (int kappa = 0; kappa < 2; ++kappa)
    for (int n = 0; n <= a.nt; ++n)
      for (std::size_t k = 0; k < a.gamma0.size(); ++k)
        acc += tw[static_cast<std::size_t>(n)] * g.boundary_weight(a.gamma0[k]) *
               std::norm(a.at(kappa, n, k) - b.at(kappa, n, k));
  return acc;
}

/// d/dt (u1 - u2) at t = 0 from two Crank-Nicolson runs (two steps of T/nt,
/// one-sided second-order stencil).
inline TwoStateField v0_from_dual_solves(const CoefficientSet& c1, const CoefficientSet& c2, const TwoStateField& u0,
                                         double T, int nt, int taylor_order = 2) {
  detail::require(nt >= 2, "nt must be >= 2");
  std::array<std::vector<TwoStateField>, 2> states;
  const auto times = uniform_times(T, nt);
  const std::vector<double> first(times.begin(), times.begin() + 3);
  int idx = 0;
  for (const CoefficientSet* c : {&c1, &c2}) {
    auto h = std::make_shared<const HamiltonianOperator>(*c);
    const CrankNicolsonSolver solver(h, T / nt);
    const BoundaryData g = compatibility_boundary_data(*h, u0, taylor_order, first);
    solver.run(u0, g, 2, [&](int, const TwoStateField& u) { states[static_cast<std::size_t>(idx)].push_back(u); });
    ++idx;
  }
  const double dt = T / nt;
  TwoStateField w0 = states[0][0] - states[1][0];
  TwoStateField w1 = states[0][1] - states[1][1];
  TwoStateField w2 = states[0][2] - states[1][2];
  return w0 * cplx(-1.5 / dt) + w1 * cplx(2.0 / dt) + w2 * cplx(-0.5 / dt);
}

// --- stability ------------------------------------------------------------

inline std::vector<double> initial_log_weight(const CarlemanWeights& w, double s) {
  std::vector<double> lw(w.alpha[0].size());
  for (std::size_t k = 0; k < lw.size(); ++k) lw[k] = s * w.alpha[0][k];
  return lw;
}

/// Weighted coefficient functional with weight exp(s alpha0), log-scaled.
inline ScaledValue h_s_scaled(const CoefficientSet& c1, const CoefficientSet& c2, const CarlemanWeights& w, double s) {
  require_same_grid(c1.grid(), w.grid);
  const auto lw = initial_log_weight(w, s);
  return weighted_difference_norm(difference(c1, c2), &lw);
}

inline double h_s_functional(const CoefficientSet& c1, const CoefficientSet& c2, const CarlemanWeights& w, double s) {
  return h_s_scaled(c1, c2, w, s).value();
}

struct StabilityReport {
  double lhs = 0.0;
  std::vector<double> mu;  ///< per probe
  double rhs = 0.0;
  double ratio = 0.0;
  std::vector<double> s_grid;
  std::vector<ScaledValue> h_s;
  std::vector<double> boundary_ratio;  ///< per s: max over probes of sum_kappa I(v0) / h_s
};

inline StabilityReport stability_report(const CoefficientSet& c1, const CoefficientSet& c2,
                                        const std::vector<MeasurementRecord>& meas1,
                                        const std::vector<MeasurementRecord>& meas2, const CarlemanWeights& w,
                                        const ProbeSet& probes) {
  if (meas1.size() != meas2.size() || meas1.size() != probes.size())
    throw PreconditionError("measurement lists are not aligned with the probe set");
  StabilityReport r;
  r.lhs = coefficient_distance(c1, c2);
  for (std::size_t k = 0; k < meas1.size(); ++k) {
    if (meas1[k].probe != static_cast<int>(k)) throw PreconditionError("measurement list out of probe order");
    r.mu.push_back(record_distance_sq(meas1[k], meas2[k], c1.grid()));
    r.rhs += r.mu.back();
  }
  r.ratio = r.rhs > 0.0 ? r.lhs / r.rhs : (r.lhs == 0.0 ? 0.0 : std::numeric_limits<double>::infinity());
  r.s_grid = w.s_grid;
  std::vector<TwoStateField> v0s;
  for (const auto& u0 : probes.probes) v0s.push_back(v0_exact(c1, c2, u0));
  for (double s : w.s_grid) {
    const ScaledValue hs = h_s_scaled(c1, c2, w, s);
    r.h_s.push_back(hs);
    double worst = 0.0;
    for (const auto& v0 : v0s) {
      const ScaledValue i_sum = boundary_functional_scaled(w, s, v0.plus) + boundary_functional_scaled(w, s, v0.minus);
      worst = std::max(worst, ratio(i_sum, hs));
    }
    r.boundary_ratio.push_back(worst);
  }
  return r;
}

inline void write_stability_csv_header(std::ostream& os, std::size_t probes, const std::string& header = {}) {
  if (!header.empty()) os << header << '\n';
  os << "pair,s,lhs,rhs,ratio,log_h_s,boundary_ratio";
  for (std::size_t k = 0; k < probes; ++k) os << ",mu_" << k + 1;
  os << '\n';
}

inline void write_stability_rows(std::ostream& os, int pair, const StabilityReport& r) {
  for (std::size_t si = 0; si < r.s_grid.size(); ++si) {
    os << pair << ',' << detail::fmt(r.s_grid[si]) << ',' << detail::fmt(r.lhs) << ',' << detail::fmt(r.rhs) << ','
       << detail::fmt(r.ratio) << ',' << detail::fmt(r.h_s[si].log()) << ',' << detail::fmt(r.boundary_ratio[si]);
    for (double m : r.mu) os << ',' << detail::fmt(m);
    os << '\n';
  }
}

// --- algebraic reconstruction ---------------------------------------------

struct AlgebraicResult {
  CoefficientSet delta;
  double consistency_residual = 0.0;  ///< relative mismatch of v0[both] - v0[plus] - v0[minus]
  double phi_discrepancy = 0.0;       ///< relative mismatch of the two dPhi estimates
  double imaginary_residual = 0.0;    ///< relative size of the discarded imaginary parts of dA, dPhi
  bool consistent = true;
};

struct AlgebraicOptions {
  double consistency_threshold = 1e-6;
  /// q+- known to be real: keep the real part of the q formula, which drops
  /// the stencil divergence of the recovered dA.
  bool real_potentials = true;
};

/// Recovers the coefficient difference from interior initial values v0 of the
/// differentiated system, one per probe in probe-set order. a1_plus/a1_minus
/// are the first coefficient set's magnetic potentials.
inline AlgebraicResult algebraic_reconstruct(const std::vector<TwoStateField>& v0, const VectorField& a1_plus,
                                             const VectorField& a1_minus, const ProbeSet& probes,
                                             const AlgebraicOptions& opts = {}) {
  if (v0.size() != probes.size()) throw PreconditionError("missing probes: need one v0 per probe");
  const Grid& g = probes.grid();
  const cplx i(0.0, 1.0);
  const TwoStateField& p1 = v0[probes.index_of(ProbeLabel::constant_pair)];
  const TwoStateField& p2 = v0[probes.index_of(ProbeLabel::constant_pair) + 1];
  AlgebraicResult res;
  res.delta = zero_coefficients(g);
  CoefficientSet& d = res.delta;

  d.phi_scal = p1.minus * i;
  VectorField ap(g, FieldKind::complex), am(g, FieldKind::complex), phi_a(g, FieldKind::complex),
      phi_b(g, FieldKind::complex);
  for (int j = 0; j < kDim; ++j) {
    const ScalarField xj = ScalarField::from_function(g, [j](double x, double y) { return j == 0 ? x : y; });
    const TwoStateField& cp = v0[probes.index_of(ProbeLabel::coord_plus, j)];
    const TwoStateField& cm = v0[probes.index_of(ProbeLabel::coord_minus, j)];
    ap[j] = (cp.plus - xj * p1.plus) * cplx(-0.5);
    am[j] = (cm.minus - xj * p2.minus) * cplx(-0.5);
    phi_a[j] = cp.minus * (-i) + d.phi_scal * xj;
    phi_b[j] = cm.plus * i - d.phi_scal * xj;
  }
  const VectorField phi_avg = (phi_a + phi_b) * 0.5;
  const double phi_norm = l2_norm(phi_avg);
  res.phi_discrepancy = phi_norm > 0.0 ? l2_norm(phi_a - phi_b) / phi_norm : l2_norm(phi_a - phi_b);
  double imag_sq = 0.0, total_sq = 0.0;
  for (const VectorField* v : {&std::as_const(ap), &std::as_const(am), &phi_avg})
    for (int j = 0; j < kDim; ++j)
      for (std::size_t k = 0; k < g.size(); ++k) {
        imag_sq += std::pow((*v)[j][k].imag(), 2);
        total_sq += std::norm((*v)[j][k]);
      }
  res.imaginary_residual = total_sq > 0.0 ? std::sqrt(imag_sq / total_sq) : 0.0;
  d.a_plus = VectorField(ap[0], ap[1], FieldKind::real);
  d.a_minus = VectorField(am[0], am[1], FieldKind::real);
  d.phi_vec = VectorField(phi_avg[0], phi_avg[1], FieldKind::real);

  const VectorField sp = a1_plus * 2.0 - d.a_plus;
  const VectorField sm = a1_minus * 2.0 - d.a_minus;
  d.q_plus = divergence(d.a_plus) * i - dot(sp, d.a_plus) + p1.plus * i;
  d.q_minus = divergence(d.a_minus) * i - dot(sm, d.a_minus) + p2.minus * i;
  if (opts.real_potentials)
    for (ScalarField* q : {&d.q_plus, &d.q_minus})
      for (auto& v : q->values()) v = v.real();

  double num = 0.0, den = 0.0;
  for (int j = 0; j < kDim; ++j) {
    const TwoStateField& cb = v0[probes.index_of(ProbeLabel::coord_both, j)];
    const TwoStateField& cp = v0[probes.index_of(ProbeLabel::coord_plus, j)];
    const TwoStateField& cm = v0[probes.index_of(ProbeLabel::coord_minus, j)];
    num += std::pow(l2_norm(cb - cp - cm), 2);
    den += std::pow(l2_norm(cb), 2);
  }
  res.consistency_residual = den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
  res.consistent = res.consistency_residual <= opts.consistency_threshold;
  return res;
}

/// Relative L2 errors of a recovered difference per component:
/// [A+, A-, q+, q-, Phi, phi].
inline std::array<double, 6> component_errors(const CoefficientSet& est, const CoefficientSet& truth) {
  auto rel = [](double err, double ref) { return ref > 0.0 ? err / ref : err; };
  return {rel(l2_norm(est.a_plus - truth.a_plus), l2_norm(truth.a_plus)),
          rel(l2_norm(est.a_minus - truth.a_minus), l2_norm(truth.a_minus)),
          rel(l2_norm(est.q_plus - truth.q_plus), l2_norm(truth.q_plus)),
          rel(l2_norm(est.q_minus - truth.q_minus), l2_norm(truth.q_minus)),
          rel(l2_norm(est.phi_vec - truth.phi_vec), l2_norm(truth.phi_vec)),
          rel(l2_norm(est.phi_scal - truth.phi_scal), l2_norm(truth.phi_scal))};
}

// --- least squares --------------------------------------------------------

/// Flat tensor sine basis: per component, modes (m, n) in order of m + n then
/// m, times the boundary cutoff. Parameter order is component-major over
/// [A+x, A+y, A-x, A-y, q+, q-, Phi stream, phi].
class SineBasis {
 public:
  static constexpr int kComponents = 8;

  SineBasis(const Grid& g, int basis_size, int flatness_order) : grid_(g) {
    if (basis_size < kComponents || basis_size > 64)
      throw PreconditionError("basis_size must lie in [8, 64]");
    per_ = basis_size / kComponents;
    for (int sum = 2; static_cast<int>(modes_.size()) < per_; ++sum)
      for (int m = 1; m < sum && static_cast<int>(modes_.size()) < per_; ++m) modes_.push_back({m, sum - m});
    for (const auto& md : modes_) {
      auto f = [&](int power) {
        return ScalarField::from_function(g, [&](double x, double y) {
          return std::sin(md[0] * std::numbers::pi * x / g.lx()) * std::sin(md[1] * std::numbers::pi * y / g.ly()) *
                 detail::boundary_cutoff(g, x, y, power);
        });
      };
      plain_.push_back(f(flatness_order + 1));
      curl_.push_back(detail::discrete_curl(f(flatness_order + 2)));
    }
  }

  int size() const { return per_ * kComponents; }
  int per_component() const { return per_; }

  /// The difference set for parameters theta (bound and flatness copied from `like`).
  CoefficientSet expand(const std::vector<double>& theta, const CoefficientSet& like) const {
    detail::require(static_cast<int>(theta.size()) == size(), "parameter vector has the wrong length");
    CoefficientSet d = zero_coefficients(grid_, like.bound_m);
    d.flatness_order = like.flatness_order;
    auto coef = [&](int comp, int m) { return theta[static_cast<std::size_t>(comp * per_ + m)]; };
    for (int m = 0; m < per_; ++m) {
      const ScalarField& b = plain_[static_cast<std::size_t>(m)];
      d.a_plus[0] += b * cplx(coef(0, m));
      d.a_plus[1] += b * cplx(coef(1, m));
      d.a_minus[0] += b * cplx(coef(2, m));
      d.a_minus[1] += b * cplx(coef(3, m));
      d.q_plus += b * cplx(coef(4, m));
      d.q_minus += b * cplx(coef(5, m));
      d.phi_vec += curl_[static_cast<std::size_t>(m)] * coef(6, m);
      d.phi_scal += b * cplx(coef(7, m));
    }
    return d;
  }

 private:
  Grid grid_;
  int per_ = 1;
  std::vector<std::array<int, 2>> modes_;
  std::vector<ScalarField> plain_;
  std::vector<VectorField> curl_;
};

enum class DescentMetric {
  gauss_newton,  ///< direction solves (J^T J + reg I) d = -g/2
  identity,      ///< steepest descent with Barzilai-Borwein initial step
};

struct LsqOptions {
  int basis_size = 8;
  int iterations = 200;
  double reg = 0.0;
  double T = 0.1;
  int nt = 128;
  int taylor_order = 2;
  int threads = 1;
  double fd_step = 1e-6;
  double tolerance = 1e-8;  ///< relative objective decrease that stops the iteration
  DescentMetric metric = DescentMetric::gauss_newton;
};

struct LsqResult {
  CoefficientSet estimate;  ///< known side + recovered difference
  CoefficientSet delta;
  std::vector<double> theta;
  std::vector<double> objective_history;  ///< objective after each accepted step (entry 0: start)
  int iterations = 0;
  bool converged = false;
  double final_residual = 0.0;  ///< data misfit part of the final objective
};

namespace detail {

/// Weighted residual vector (re, im interleaved) of simulated minus observed traces.
inline Eigen::VectorXd trace_residual(const std::vector<MeasurementRecord>& sim,
                                      const std::vector<MeasurementRecord>& obs, const Grid& g) {
  std::size_t n = 0;
  for (const auto& r : sim) n += 2 * (r.values[0].size() + r.values[1].size());
  Eigen::VectorXd out(static_cast<Eigen::Index>(n));
  Eigen::Index p = 0;
  for (std::size_t k = 0; k < sim.size(); ++k) {
    const auto& a = sim[k];
    const auto& b = obs[k];
    if (a.gamma0 != b.gamma0 || a.nt != b.nt) throw PreconditionError("observed records do not match the probe setup");
    const auto tw = time_weights(a.nt, a.dt());
    for (int kappa = 0; kappa < 2; ++kappa)
      for (int t = 0; t <= a.nt; ++t)
        for (std::size_t j = 0; j < a.gamma0.size(); ++j) {
          const double wgt = std::sqrt(tw[static_cast<std::size_t>(t)] * g.boundary_weight(a.gamma0[j]));
          const cplx r = a.at(kappa, t, j) - b.at(kappa, t, j);
          out[p++] = wgt * r.real();
          out[p++] = wgt * r.imag();
        }
  }
  return out;
}

}  // namespace detail

/// Regularised least squares over the flat sine basis: minimises
/// sum_k ||trace(c_known + delta(theta)) - obs_k||^2 + reg |theta|^2 with
/// finite-difference derivatives and Armijo backtracking.
inline LsqResult lsq_reconstruct(const std::vector<MeasurementRecord>& meas_obs, const CoefficientSet& c_known,
                                 const ProbeSet& probes, const std::vector<std::size_t>& gamma0,
                                 const LsqOptions& opts = {}) {
  if (meas_obs.size() != probes.size()) throw PreconditionError("one observed record per probe is required");
  const Grid& g = c_known.grid();
  const SineBasis basis(g, opts.basis_size, c_known.flatness_order);
  const int np = basis.size();
  MeasurementOptions mo;
  mo.taylor_order = opts.taylor_order;
  mo.threads = opts.threads;

  auto residual = [&](const std::vector<double>& th) {
    const CoefficientSet c = add_scaled(c_known, basis.expand(th, c_known));
    return detail::trace_residual(simulate_measurements(c, probes, gamma0, opts.T, opts.nt, mo), meas_obs, g);
  };
  auto objective = [&](const Eigen::VectorXd& r, const std::vector<double>& th) {
    double reg = 0.0;
    for (double t : th) reg += t * t;
    const double f = r.squaredNorm() + opts.reg * reg;
    if (!std::isfinite(f)) throw NumericalError("non-finite least-squares objective");
    return f;
  };

  LsqResult res;
  std::vector<double> theta(static_cast<std::size_t>(np), 0.0);
  Eigen::VectorXd r = residual(theta);
  double f = objective(r, theta);
  res.objective_history.push_back(f);
  Eigen::VectorXd prev_grad, prev_theta;
  for (int it = 0; it < opts.iterations; ++it) {
    if (f == 0.0) {
      res.converged = true;
      break;
    }
    Eigen::MatrixXd jac(r.size(), np);
    for (int p = 0; p < np; ++p) {
      std::vector<double> tp = theta;
      const double h = opts.fd_step * std::max(1.0, std::abs(theta[static_cast<std::size_t>(p)]));
      tp[static_cast<std::size_t>(p)] += h;
      jac.col(p) = (residual(tp) - r) / h;
    }
    const Eigen::Map<const Eigen::VectorXd> th(theta.data(), np);
    const Eigen::VectorXd grad = 2.0 * (jac.transpose() * r + opts.reg * th);
    Eigen::VectorXd dir;
    double step = 1.0;
    if (opts.metric == DescentMetric::gauss_newton) {
      Eigen::MatrixXd gn = jac.transpose() * jac;
      gn.diagonal().array() += opts.reg + 1e-12 * std::max(1.0, gn.diagonal().maxCoeff());
      dir = gn.ldlt().solve(-0.5 * grad);
    } else {
      dir = -grad;
      if (prev_grad.size() == np) {
        const Eigen::VectorXd sdel = th - prev_theta, ydel = grad - prev_grad;
        const double sy = sdel.dot(ydel);
        step = sy > 0.0 ? sdel.squaredNorm() / sy : 1.0;
      } else {
        step = 1.0 / std::max(1.0, grad.norm());
      }
    }
    const double slope = grad.dot(dir);
    if (!(slope < 0.0)) {
      res.converged = true;
      break;
    }
    bool accepted = false;
    std::vector<double> trial(theta.size());
    Eigen::VectorXd r_trial;
    double f_trial = f;
    for (int bt = 0; bt < 40; ++bt) {
      for (int p = 0; p < np; ++p) trial[static_cast<std::size_t>(p)] = theta[static_cast<std::size_t>(p)] + step * dir[p];
      r_trial = residual(trial);
      f_trial = objective(r_trial, trial);
      if (f_trial <= f + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      res.converged = true;
      break;
    }
    prev_grad = grad;
    prev_theta = th;
    const double decrease = f - f_trial;
    const double step_norm = step * dir.norm();
    theta = trial;
    r = r_trial;
    f = f_trial;
    res.objective_history.push_back(f);
    res.iterations = it + 1;
    const double theta_norm = Eigen::Map<const Eigen::VectorXd>(theta.data(), np).norm();
    if (decrease <= opts.tolerance * std::max(f, std::numeric_limits<double>::min()) ||
        f <= 1e-16 * res.objective_history.front() || step_norm <= 1e-12 * std::max(1.0, theta_norm)) {
      res.converged = true;
      break;
    }
  }
  res.theta = theta;
  res.delta = basis.expand(theta, c_known);
  res.estimate = add_scaled(c_known, res.delta);
  res.final_residual = r.squaredNorm();
  return res;
}

inline LsqResult lsq_reconstruct(const std::vector<MeasurementRecord>& meas_obs, const CoefficientSet& c_known,
                                 const ProbeSet& probes, const CarlemanWeights& w, const LsqOptions& opts = {}) {
  return lsq_reconstruct(meas_obs, c_known, probes, w.gamma0, opts);
}

}  // namespace mslab
