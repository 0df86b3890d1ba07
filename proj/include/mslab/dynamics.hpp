#pragma once

#include <Eigen/SparseLU>
#include <cmath>
#include <functional>
#include <memory>
#include <numbers>
#include <vector>

#include "mslab/coefficients.hpp"
#include "mslab/quadrature.hpp"
#include "mslab/rng.hpp"
#include "mslab/sparse_stencil.hpp"
#include "mslab/stencil.hpp"
#include "mslab/trajectory.hpp"

namespace mslab {

enum class MagneticForm {
  expanded,   ///< lap u + 2i A.grad u + i (div A) u - |A|^2 u, term by term
  symmetric,  ///< lap u + i (A.grad u + div(A u)) - |A|^2 u
};

/// Discrete magnetic laplacian Delta_A u.
inline ScalarField apply_magnetic_laplacian(const VectorField& a, const ScalarField& u,
                                            MagneticForm form = MagneticForm::expanded) {
  require_same_grid(a.grid(), u.grid());
  const cplx i(0.0, 1.0);
  const ScalarField lap = laplacian(u);
  const VectorField gu = gradient(u);
  ScalarField a2(u.grid());
  for (std::size_t k = 0; k < u.size(); ++k) a2[k] = std::norm(a[0][k]) + std::norm(a[1][k]);
  if (form == MagneticForm::expanded) {
    return lap + (dot(a, gu) * cplx(2.0) + divergence(a) * u) * i - a2 * u;
  }
  return lap + (dot(a, gu) + divergence(scale(u, a))) * i - a2 * u;
}

namespace detail {

inline SpMat diagonal_matrix(const std::vector<cplx>& d) {
  const int n = static_cast<int>(d.size());
  SpMat m(n, n);
  m.reserve(Eigen::VectorXi::Constant(n, 1));
  for (int k = 0; k < n; ++k) m.insert(k, k) = d[static_cast<std::size_t>(k)];
  m.makeCompressed();
  return m;
}

/// Two-state indices [nodes, N + nodes].
inline std::vector<std::size_t> two_state_indices(const std::vector<std::size_t>& nodes, std::size_t n) {
  std::vector<std::size_t> out(nodes);
  out.reserve(2 * nodes.size());
  for (std::size_t k : nodes) out.push_back(n + k);
  return out;
}

}  // namespace detail

/// Discrete two-state Hamiltonian
///   [ -Delta_{A+} + q+       Phi.grad + phi ]
///   [ -Phi.grad + phi        -Delta_{A-} + q- ]
/// on the full grid (one-sided stencils in boundary rows), with the magnetic
/// and coupling first-order terms in symmetric form so that the interior
/// block is exactly Hermitian for real q+-, phi and divergence-free Phi.
///
/// Two-state vectors are ordered [plus nodes..., minus nodes...].
class HamiltonianOperator {
 public:
  explicit HamiltonianOperator(CoefficientSet c) : coeffs_(std::move(c)) { assemble(); }

  const Grid& grid() const { return coeffs_.grid(); }
  const CoefficientSet& coefficients() const { return coeffs_; }
  const SpMat& full() const { return full_; }
  const SpMat& interior() const { return h_ii_; }
  const SpMat& lift() const { return h_ib_; }
  const std::vector<std::size_t>& interior_nodes() const { return interior_; }
  const std::vector<std::size_t>& boundary_nodes() const { return boundary_; }
  std::size_t interior_dim() const { return 2 * interior_.size(); }
  std::size_t boundary_dim() const { return 2 * boundary_.size(); }

  CVec to_full_vector(const TwoStateField& u) const {
    require_same_grid(u.grid(), grid());
    const auto n = static_cast<Eigen::Index>(grid().size());
    CVec v(2 * n);
    v.head(n) = to_vector(u.plus);
    v.tail(n) = to_vector(u.minus);
    return v;
  }
  TwoStateField from_full_vector(const CVec& v) const {
    const auto n = static_cast<Eigen::Index>(grid().size());
    return TwoStateField(from_vector(grid(), v.head(n)), from_vector(grid(), v.tail(n)));
  }
  CVec restrict_interior(const TwoStateField& u) const { return gather(u, interior_); }
  CVec restrict_boundary(const TwoStateField& u) const { return gather(u, boundary_); }

  /// Field with the given interior and boundary two-state vectors.
  TwoStateField compose(const CVec& interior, const CVec& boundary) const {
    TwoStateField u(grid());
    scatter(u, interior_, interior);
    scatter(u, boundary_, boundary);
    return u;
  }

  TwoStateField apply(const TwoStateField& u) const { return from_full_vector(full_ * to_full_vector(u)); }

  /// ||H_II - H_II^*||_F / ||H_II||_F.
  double hermitian_asymmetry() const {
    const SpMat adj = h_ii_.adjoint();
    const double nrm = h_ii_.norm();
    return nrm == 0.0 ? 0.0 : SpMat(h_ii_ - adj).norm() / nrm;
  }

  /// Max absolute row sum of H_II (bounds its spectral norm).
  double norm_estimate() const {
    Eigen::VectorXd rows = Eigen::VectorXd::Zero(h_ii_.rows());
    for (int c = 0; c < h_ii_.outerSize(); ++c)
      for (SpMat::InnerIterator it(h_ii_, c); it; ++it) rows[it.row()] += std::abs(it.value());
    return rows.size() ? rows.maxCoeff() : 0.0;
  }

 private:
  CVec gather(const TwoStateField& u, const std::vector<std::size_t>& nodes) const {
    require_same_grid(u.grid(), grid());
    const auto m = static_cast<Eigen::Index>(nodes.size());
    CVec v(2 * m);
    for (Eigen::Index r = 0; r < m; ++r) {
      v[r] = u.plus[nodes[static_cast<std::size_t>(r)]];
      v[m + r] = u.minus[nodes[static_cast<std::size_t>(r)]];
    }
    return v;
  }
  static void scatter(TwoStateField& u, const std::vector<std::size_t>& nodes, const CVec& v) {
    const auto m = static_cast<Eigen::Index>(nodes.size());
    detail::require(v.size() == 2 * m, "two-state vector has the wrong length");
    for (Eigen::Index r = 0; r < m; ++r) {
      u.plus[nodes[static_cast<std::size_t>(r)]] = v[r];
      u.minus[nodes[static_cast<std::size_t>(r)]] = v[m + r];
    }
  }

  void assemble() {
    const Grid& g = grid();
    const cplx i(0.0, 1.0);
    const SpMat dx = derivative_matrix(g, 0).cast<cplx>();
    const SpMat dy = derivative_matrix(g, 1).cast<cplx>();
    const SpMat lap = laplacian_matrix(g).cast<cplx>();
    auto diag = [](const ScalarField& f) { return detail::diagonal_matrix(f.values()); };
    auto symmetric_first_order = [&](const VectorField& v) {
      const SpMat vx = diag(v[0]), vy = diag(v[1]);
      return SpMat(0.5 * (vx * dx + dx * vx + vy * dy + dy * vy));
    };
    auto kinetic = [&](const VectorField& a, const ScalarField& q) {
      ScalarField pot(g);
      for (std::size_t k = 0; k < g.size(); ++k) pot[k] = std::norm(a[0][k]) + std::norm(a[1][k]) + q[k];
      return SpMat(-lap - cplx(2.0) * i * symmetric_first_order(a) + diag(pot));
    };
    const SpMat kp = kinetic(coeffs_.a_plus, coeffs_.q_plus);
    const SpMat km = kinetic(coeffs_.a_minus, coeffs_.q_minus);
    const SpMat cphi = symmetric_first_order(coeffs_.phi_vec);
    const SpMat phi = diag(coeffs_.phi_scal);
    const SpMat upper = cphi + phi;
    const SpMat lower = phi - cphi;

    const int n = static_cast<int>(g.size());
    std::vector<Eigen::Triplet<cplx, int>> t;
    t.reserve(static_cast<std::size_t>(kp.nonZeros() + km.nonZeros() + upper.nonZeros() + lower.nonZeros()));
    auto put = [&](const SpMat& m, int r0, int c0) {
      for (int c = 0; c < m.outerSize(); ++c)
        for (SpMat::InnerIterator it(m, c); it; ++it) t.emplace_back(r0 + it.row(), c0 + it.col(), it.value());
    };
    put(kp, 0, 0);
    put(upper, 0, n);
    put(lower, n, 0);
    put(km, n, n);
    full_ = SpMat(2 * n, 2 * n);
    full_.setFromTriplets(t.begin(), t.end());
    full_.prune(cplx(0.0));

    interior_ = g.interior_nodes();
    boundary_ = g.boundary_nodes();
    const SpMat si =
        selection_matrix(detail::two_state_indices(interior_, g.size()), 2 * g.size()).cast<cplx>();
    const SpMat sb =
        selection_matrix(detail::two_state_indices(boundary_, g.size()), 2 * g.size()).cast<cplx>();
    h_ii_ = si * full_ * SpMat(si.transpose());
    h_ib_ = si * full_ * SpMat(sb.transpose());
  }

  CoefficientSet coeffs_;
  SpMat full_, h_ii_, h_ib_;
  std::vector<std::size_t> interior_, boundary_;
};

/// Two-state action of H on all nodes, using the boundary values of u.
inline TwoStateField apply_hamiltonian(const HamiltonianOperator& h, const TwoStateField& u) { return h.apply(u); }

// --- boundary data --------------------------------------------------------

/// Dirichlet values on all boundary nodes (ascending flat index) at each time
/// level; each level is ordered [plus..., minus...].
struct BoundaryData {
  std::vector<double> times;
  std::vector<CVec> values;
  int taylor_order = 0;

  std::size_t levels() const { return values.size(); }
  const CVec& at(std::size_t n) const { return values[n]; }
};

/// Homogeneous data on `levels` time levels.
inline BoundaryData zero_boundary_data(const HamiltonianOperator& h, std::size_t levels) {
  BoundaryData g;
  g.values.assign(levels, CVec::Zero(static_cast<Eigen::Index>(h.boundary_dim())));
  g.times.assign(levels, 0.0);
  return g;
}

inline std::vector<double> uniform_times(double T, int nt) {
  std::vector<double> t(static_cast<std::size_t>(nt) + 1);
  for (int n = 0; n <= nt; ++n) t[static_cast<std::size_t>(n)] = n == nt ? T : n * (T / nt);
  return t;
}

inline constexpr int kMaxTaylorOrder = 4;

/// g(t) = sum_{l < order} (-i t)^l / l! (H^l u0)|boundary.
inline BoundaryData compatibility_boundary_data(const HamiltonianOperator& h, const TwoStateField& u0, int order,
                                                const std::vector<double>& times,
                                                int max_order = kMaxTaylorOrder) {
  if (order < 1) throw PreconditionError("taylor order must be >= 1");
  if (order > max_order)
    throw PreconditionError("taylor order " + std::to_string(order) + " exceeds the cap " +
                            std::to_string(max_order));
  std::vector<CVec> terms;
  TwoStateField power = u0;
  for (int l = 0; l < order; ++l) {
    if (l > 0) power = h.apply(power);
    terms.push_back(h.restrict_boundary(power));
  }
  BoundaryData g;
  g.times = times;
  g.taylor_order = order;
  g.values.reserve(times.size());
  for (double t : times) {
    CVec v = CVec::Zero(static_cast<Eigen::Index>(h.boundary_dim()));
    cplx c = 1.0;
    for (int l = 0; l < order; ++l) {
      if (l > 0) c *= cplx(0.0, -t) / static_cast<double>(l);
      v += c * terms[static_cast<std::size_t>(l)];
    }
    g.values.push_back(std::move(v));
  }
  return g;
}

// --- Crank-Nicolson --------------------------------------------------------

inline constexpr double kSolverResidual = 1e-10;

/// (I + i dt/2 H_II) u^{n+1} = (I - i dt/2 H_II) u^n - i dt/2 H_IB (g^{n+1} + g^n),
/// factored once per (operator, dt).
class CrankNicolsonSolver {
 public:
  using Observer = std::function<void(int, const TwoStateField&)>;

  CrankNicolsonSolver(std::shared_ptr<const HamiltonianOperator> h, double dt) : h_(std::move(h)), dt_(dt) {
    detail::require(h_ != nullptr, "null Hamiltonian");
    detail::require(dt > 0.0, "time step must be positive");
    const auto n = static_cast<Eigen::Index>(h_->interior_dim());
    SpMat id(n, n);
    id.setIdentity();
    const cplx half(0.0, 0.5 * dt);
    lhs_ = id + half * h_->interior();
    rhs_ = id - half * h_->interior();
    lu_.compute(lhs_);
    if (lu_.info() != Eigen::Success) throw NumericalError("Crank-Nicolson factorisation failed");
  }

  const HamiltonianOperator& hamiltonian() const { return *h_; }
  double dt() const { return dt_; }

  /// Steps nt times from u0, calling `observe(n, u^n)` for n = 0..nt.
  void run(const TwoStateField& u0, const BoundaryData& g, int nt, const Observer& observe) const {
    detail::require(nt >= 1, "nt must be >= 1");
    if (g.levels() < static_cast<std::size_t>(nt) + 1)
      throw PreconditionError("boundary data must cover all nt+1 time levels");
    const HamiltonianOperator& h = *h_;
    const CVec b0 = h.restrict_boundary(u0);
    const double scale = std::max(1.0, u0.plus.sup_norm() + u0.minus.sup_norm());
    if ((b0 - g.at(0)).cwiseAbs().maxCoeff() > 1e-12 * scale)
      throw PreconditionError("initial state does not match the boundary data at t = 0");
    CVec u = h.restrict_interior(u0);
    observe(0, h.compose(u, g.at(0)));
    const cplx half(0.0, 0.5 * dt_);
    for (int n = 0; n < nt; ++n) {
      const CVec& gn = g.at(static_cast<std::size_t>(n));
      const CVec& gn1 = g.at(static_cast<std::size_t>(n) + 1);
      CVec b = rhs_ * u;
      if (h.boundary_dim() > 0) b -= half * (h.lift() * (gn + gn1));
      u = solve(b, n + 1);
      observe(n + 1, h.compose(u, gn1));
    }
  }

  Trajectory solve(const TwoStateField& u0, const BoundaryData& g, double T, int nt) const {
    check_dt(T, nt);
    Trajectory traj{T, nt, {}};
    traj.states.reserve(static_cast<std::size_t>(nt) + 1);
    run(u0, g, nt, [&](int, const TwoStateField& u) { traj.states.push_back(u); });
    return traj;
  }

  void check_dt(double T, int nt) const {
    detail::require(T > 0.0 && nt >= 1, "T must be positive and nt >= 1");
    if (std::abs(T / nt - dt_) > 1e-14 * dt_) throw PreconditionError("solver time step does not equal T/nt");
  }

 private:
  CVec solve(const CVec& b, int step) const {
    const double bn = b.norm();
    if (bn == 0.0) return CVec::Zero(b.size());
    CVec x = lu_.solve(b);
    double res = (lhs_ * x - b).norm() / bn;
    for (int it = 0; it < 3 && !(res <= kSolverResidual); ++it) {
      x += lu_.solve(CVec(b - lhs_ * x));
      res = (lhs_ * x - b).norm() / bn;
    }
    if (!(res <= kSolverResidual))
      throw NumericalError("Crank-Nicolson solve residual " + std::to_string(res) + " at step " +
                           std::to_string(step));
    return x;
  }

  std::shared_ptr<const HamiltonianOperator> h_;
  double dt_;
  SpMat lhs_, rhs_;
  Eigen::SparseLU<SpMat> lu_;
};

inline Trajectory solve_ibvp(const HamiltonianOperator& h, const TwoStateField& u0, const BoundaryData& g, double T,
                             int nt) {
  auto hp = std::make_shared<const HamiltonianOperator>(h);
  return CrankNicolsonSolver(hp, T / nt).solve(u0, g, T, nt);
}

/// Discrete L2 norm of a two-state field (trapezoid).
inline double l2_norm(const TwoStateField& u) {
  return std::sqrt(l2_norm_sq(u.plus) + l2_norm_sq(u.minus));
}

// --- operator checks ------------------------------------------------------

namespace detail {

inline CVec random_complex_vector(Rng& rng, Eigen::Index n) {
  CVec v(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const double re = rng.normal();
    v[k] = cplx(re, rng.normal());
  }
  return v;
}

}  // namespace detail

/// max over random interior pairs (u, v), including v = u, of
/// |<Hu,v> - <u,Hv>| / (|u| |v| |H|_est).
inline double check_selfadjoint(const HamiltonianOperator& h, int samples = 8, std::uint64_t seed = 1) {
  const SpMat& m = h.interior();
  const double hn = h.norm_estimate();
  if (hn == 0.0) return 0.0;
  Rng rng(seed);
  double worst = 0.0;
  for (int s = 0; s < samples; ++s) {
    const CVec u = detail::random_complex_vector(rng, m.rows());
    const CVec v = detail::random_complex_vector(rng, m.rows());
    const CVec hu = m * u, hv = m * v;
    auto defect = [&](const CVec& a, const CVec& ha, const CVec& b, const CVec& hb) {
      return std::abs(b.dot(ha) - hb.dot(a)) / (a.norm() * b.norm() * hn);
    };
    worst = std::max({worst, defect(u, hu, v, hv), defect(u, hu, u, hu)});
  }
  return worst;
}

struct RelativeBoundReport {
  double eps = 0.0;
  double c_eps = 0.0;
  int samples = 0;
  int violations = 0;
  double worst_slack = 0.0;           ///< min over samples of rhs - lhs
  double worst_relative_slack = 0.0;  ///< min over samples of (rhs - lhs) / rhs
};

/// Constant of the relative-bound inequality.
inline double relative_bound_constant(double phi_sup, double a_sup, double eps) {
  const double p2 = phi_sup * phi_sup;
  return p2 * (p2 / eps + 2.0 * a_sup * a_sup);
}

/// lhs = ||Phi.grad u||^2, rhs = eps ||Delta_A u||^2 + C_eps ||u||^2 for one field.
inline std::pair<double, double> relative_bound_sides(const VectorField& a, const VectorField& phi_vec,
                                                      const ScalarField& u, double eps) {
  const double c = relative_bound_constant(phi_vec.sup_norm(), a.sup_norm(), eps);
  const double lhs = l2_norm_sq(dot(phi_vec, gradient(u)));
  const double rhs = eps * l2_norm_sq(apply_magnetic_laplacian(a, u)) + c * l2_norm_sq(u);
  return {lhs, rhs};
}

/// Random sine-series field vanishing on the boundary (modes up to 4 per axis).
inline ScalarField random_dirichlet_field(const Grid& g, Rng& rng, int modes = 4) {
  std::vector<cplx> c;
  for (int m = 1; m <= modes; ++m)
    for (int n = 1; n <= modes; ++n) {
      const double re = rng.normal();
      c.emplace_back(cplx(re, rng.normal()) / static_cast<double>(m * m + n * n));
    }
  ScalarField u(g);
  for (std::size_t k = 0; k < g.size(); ++k) {
    if (g.is_boundary(k)) continue;
    const Point p = g.point(k);
    cplx v = 0.0;
    std::size_t idx = 0;
    for (int m = 1; m <= modes; ++m)
      for (int n = 1; n <= modes; ++n)
        v += c[idx++] * std::sin(m * std::numbers::pi * p[0] / g.lx()) * std::sin(n * std::numbers::pi * p[1] / g.ly());
    u[k] = v;
  }
  return u;
}

inline RelativeBoundReport check_relative_bound(const VectorField& a, const VectorField& phi_vec, double eps,
                                                int samples, std::uint64_t seed = 1) {
  if (!(eps > 0.0 && eps < 1.0)) throw PreconditionError("eps must lie in (0, 1)");
  require_same_grid(a.grid(), phi_vec.grid());
  RelativeBoundReport rep;
  rep.eps = eps;
  rep.samples = samples;
  rep.c_eps = relative_bound_constant(phi_vec.sup_norm(), a.sup_norm(), eps);
  rep.worst_slack = std::numeric_limits<double>::infinity();
  rep.worst_relative_slack = std::numeric_limits<double>::infinity();
  Rng rng(seed);
  for (int s = 0; s < samples; ++s) {
    const ScalarField u = random_dirichlet_field(a.grid(), rng);
    const auto [lhs, rhs] = relative_bound_sides(a, phi_vec, u, eps);
    const double slack = rhs - lhs;
    if (slack < 0.0) ++rep.violations;
    rep.worst_slack = std::min(rep.worst_slack, slack);
    rep.worst_relative_slack = std::min(rep.worst_relative_slack, rhs > 0.0 ? slack / rhs : 0.0);
  }
  return rep;
}

}  // namespace mslab
