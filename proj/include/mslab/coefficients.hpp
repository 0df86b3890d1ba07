#pragma once

#include <Eigen/SparseLU>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "mslab/quadrature.hpp"
#include "mslab/rng.hpp"
#include "mslab/snapshot_io.hpp"
#include "mslab/sparse_stencil.hpp"
#include "mslab/stencil.hpp"

namespace mslab {

/// Unknowns of the coupled system: magnetic potentials A+/A-, electric
/// potentials q+/q-, first-order coupling Phi and zeroth-order coupling phi.
///
/// The same type holds coefficient differences (delta = c1 - c2).
struct CoefficientSet {
  VectorField a_plus;
  VectorField a_minus;
  ScalarField q_plus;
  ScalarField q_minus;
  VectorField phi_vec;
  ScalarField phi_scal;
  double bound_m = 10.0;
  int flatness_order = 2;

  const Grid& grid() const { return q_plus.grid(); }
  const VectorField& a(int kappa) const { return kappa == 0 ? a_plus : a_minus; }
  const ScalarField& q(int kappa) const { return kappa == 0 ? q_plus : q_minus; }
};

inline CoefficientSet zero_coefficients(const Grid& g, double bound_m = 10.0) {
  return {VectorField(g, FieldKind::real), VectorField(g, FieldKind::real), ScalarField(g), ScalarField(g),
          VectorField(g, FieldKind::real), ScalarField(g), bound_m, 0};
}

/// Constant admissible reference (A0+-, q0+-, Phi0, phi0) used by the experiments.
inline CoefficientSet constant_reference(const Grid& g, double bound_m = 10.0) {
  CoefficientSet c = zero_coefficients(g, bound_m);
  c.a_plus = VectorField::constant(g, {0.3, 0.1});
  c.a_minus = VectorField::constant(g, {-0.2, 0.25});
  c.q_plus = ScalarField(g, 1.0);
  c.q_minus = ScalarField(g, -0.5);
  c.phi_vec = VectorField::constant(g, {0.4, -0.3});
  c.phi_scal = ScalarField(g, 0.5);
  return c;
}

/// Componentwise c1 - c2 (bound and flatness taken from c1).
inline CoefficientSet difference(const CoefficientSet& c1, const CoefficientSet& c2) {
  require_same_grid(c1.grid(), c2.grid());
  CoefficientSet d = c1;
  d.a_plus -= c2.a_plus;
  d.a_minus -= c2.a_minus;
  d.q_plus -= c2.q_plus;
  d.q_minus -= c2.q_minus;
  d.phi_vec -= c2.phi_vec;
  d.phi_scal -= c2.phi_scal;
  return d;
}

/// c + s * delta.
inline CoefficientSet add_scaled(const CoefficientSet& c, const CoefficientSet& delta, double s = 1.0) {
  require_same_grid(c.grid(), delta.grid());
  CoefficientSet out = c;
  out.a_plus += delta.a_plus * s;
  out.a_minus += delta.a_minus * s;
  out.q_plus += delta.q_plus * cplx(s);
  out.q_minus += delta.q_minus * cplx(s);
  out.phi_vec += delta.phi_vec * s;
  out.phi_scal += delta.phi_scal * cplx(s);
  return out;
}

/// Largest |div v| over interior nodes.
inline double interior_divergence_sup(const VectorField& v) {
  const ScalarField d = divergence(v);
  double m = 0.0;
  for (std::size_t k : v.grid().interior_nodes()) m = std::max(m, std::abs(d[k]));
  return m;
}

struct ProjectionResult {
  VectorField field;
  double residual = 0.0;  ///< relative residual of the Poisson solve
};

/// Returns v - grad p with div(grad p) = div v at interior nodes and p = 0 on
/// the boundary, using the same stencils as `divergence` and `gradient`, so
/// the interior discrete divergence of the result vanishes up to the solve
/// residual.
inline ProjectionResult project_div_free_checked(const VectorField& v, double tolerance = 1e-10) {
  detail::require(v.all_finite(), "project_div_free: non-finite input");
  const Grid& g = v.grid();
  const SpMatReal dx = derivative_matrix(g, 0);
  const SpMatReal dy = derivative_matrix(g, 1);
  const auto interior = g.interior_nodes();
  const SpMatReal sel = selection_matrix(interior, g.size());
  const SpMatReal lap = dx * dx + dy * dy;
  const SpMatReal a = sel * lap * SpMatReal(sel.transpose());

  const ScalarField div = divergence(v);
  CVec rhs(static_cast<Eigen::Index>(interior.size()));
  for (std::size_t r = 0; r < interior.size(); ++r) rhs[static_cast<Eigen::Index>(r)] = div[interior[r]];
  if (rhs.cwiseAbs().maxCoeff() == 0.0) return {v, 0.0};

  Eigen::SparseLU<SpMatReal> lu;
  lu.compute(a);
  if (lu.info() != Eigen::Success) throw NumericalError("project_div_free: Poisson factorisation failed");
  Eigen::VectorXd re = lu.solve(rhs.real());
  Eigen::VectorXd im = lu.solve(rhs.imag());
  CVec p = re.cast<cplx>() + cplx(0.0, 1.0) * im.cast<cplx>();
  const double residual = (a.cast<cplx>() * p - rhs).norm() / rhs.norm();
  if (!(residual <= tolerance))
    throw NumericalError("project_div_free: Poisson solve residual " + std::to_string(residual));

  ScalarField pf(g);
  for (std::size_t r = 0; r < interior.size(); ++r) pf[interior[r]] = p[static_cast<Eigen::Index>(r)];
  const VectorField gp = gradient(pf);
  VectorField out(v[0] - gp[0], v[1] - gp[1], v.kind());
  return {std::move(out), residual};
}

inline VectorField project_div_free(const VectorField& v) { return project_div_free_checked(v).field; }

// --- sampling -------------------------------------------------------------

namespace detail {

/// (16 x(1-x) y(1-y))^power in normalised coordinates: vanishes with its
/// first power-1 normal derivatives on the boundary.
inline double boundary_cutoff(const Grid& g, double x, double y, int power) {
  const double xs = x / g.lx(), ys = y / g.ly();
  return std::pow(16.0 * xs * (1.0 - xs) * ys * (1.0 - ys), power);
}

/// Sum of three Gaussian bumps with random centre, width and sign.
struct BumpSum {
  std::array<double, 3> amp{}, cx{}, cy{}, width{};

  explicit BumpSum(Rng& rng) {
    for (int b = 0; b < 3; ++b) {
      amp[b] = rng.uniform(-1.0, 1.0);
      cx[b] = rng.uniform(0.3, 0.7);
      cy[b] = rng.uniform(0.3, 0.7);
      width[b] = rng.uniform(0.15, 0.3);
    }
  }

  double operator()(const Grid& g, double x, double y) const {
    const double xs = x / g.lx(), ys = y / g.ly();
    double v = 0.0;
    for (int b = 0; b < 3; ++b) {
      const double r2 = (xs - cx[b]) * (xs - cx[b]) + (ys - cy[b]) * (ys - cy[b]);
      v += amp[b] * std::exp(-r2 / (2.0 * width[b] * width[b]));
    }
    return v;
  }
};

inline ScalarField flat_bump_field(const Grid& g, Rng& rng, int power, double amplitude) {
  const BumpSum bump(rng);
  return ScalarField::from_function(
      g, [&](double x, double y) { return amplitude * bump(g, x, y) * boundary_cutoff(g, x, y, power); });
}

/// Discrete curl (d_y psi, -d_x psi); its discrete divergence vanishes
/// identically because the axis stencils commute.
inline VectorField discrete_curl(const ScalarField& psi) {
  VectorField v(partial(psi, 1), -partial(psi, 0), FieldKind::real);
  return v;
}

}  // namespace detail

/// Sup of |f| and |grad f| over all nodes.
inline double sup_with_gradient(const ScalarField& f) {
  return std::max(f.sup_norm(), gradient(f).sup_norm());
}
inline double sup_with_gradient(const VectorField& v) {
  return std::max({v.sup_norm(), gradient(v[0]).sup_norm(), gradient(v[1]).sup_norm()});
}

/// Largest sup-norm of any stored field or its gradient.
inline double coefficient_sup(const CoefficientSet& c) {
  return std::max({sup_with_gradient(c.a_plus), sup_with_gradient(c.a_minus), sup_with_gradient(c.q_plus),
                   sup_with_gradient(c.q_minus), sup_with_gradient(c.phi_vec), sup_with_gradient(c.phi_scal)});
}

inline constexpr double kDivergenceTolerance = 1e-8;

/// Throws when the a-priori bound or the divergence-free condition fails.
inline void validate_admissible(const CoefficientSet& c, double div_tolerance = kDivergenceTolerance) {
  const double sup = coefficient_sup(c);
  if (!(sup <= c.bound_m))
    throw PreconditionError("coefficient bound violated: sup " + std::to_string(sup) + " > M = " +
                            std::to_string(c.bound_m));
  const double div = interior_divergence_sup(c.phi_vec);
  if (!(div <= div_tolerance))
    throw PreconditionError("Phi is not divergence free: sup |div Phi| = " + std::to_string(div));
}

struct SamplingOptions {
  bool complex_q = false;  ///< also perturb the imaginary parts of q+-
};

/// reference + delta where every delta component is a flat bump sum that
/// vanishes to order flatness_order + 1 on the boundary; the Phi part is a
/// discrete curl of a stream function, passed through project_div_free.
inline CoefficientSet sample_admissible(std::uint64_t seed, const Grid& grid, double m,
                                        const CoefficientSet& reference, int flatness_order, double amplitude,
                                        SamplingOptions opts = {}) {
  if (flatness_order < 0) throw PreconditionError("flatness_order must be >= 0");
  detail::require(amplitude >= 0.0, "amplitude must be nonnegative");
  require_same_grid(grid, reference.grid());
  Rng rng(seed);
  const int p = flatness_order + 1;
  CoefficientSet delta = zero_coefficients(grid, m);
  for (VectorField* a : {&delta.a_plus, &delta.a_minus}) {
    (*a)[0] = detail::flat_bump_field(grid, rng, p, amplitude);
    (*a)[1] = detail::flat_bump_field(grid, rng, p, amplitude);
  }
  delta.q_plus = detail::flat_bump_field(grid, rng, p, amplitude);
  delta.q_minus = detail::flat_bump_field(grid, rng, p, amplitude);
  if (opts.complex_q) {
    delta.q_plus += detail::flat_bump_field(grid, rng, p, amplitude) * cplx(0.0, 1.0);
    delta.q_minus += detail::flat_bump_field(grid, rng, p, amplitude) * cplx(0.0, 1.0);
  }
  delta.phi_scal = detail::flat_bump_field(grid, rng, p, amplitude);
  const double stream_scale = 0.2 * std::min(grid.lx(), grid.ly());
  const ScalarField psi = detail::flat_bump_field(grid, rng, p + 1, amplitude * stream_scale);
  delta.phi_vec = project_div_free(detail::discrete_curl(psi));

  CoefficientSet out = add_scaled(reference, delta);
  out.bound_m = m;
  out.flatness_order = flatness_order;
  validate_admissible(out);
  return out;
}

// --- pairing classes ------------------------------------------------------

/// Empirical ratios of the pointwise pairing conditions.
struct PairingReport {
  enum Item { q_plus = 0, q_minus, phi_scal, a_plus, a_minus, phi_vec, count };
  std::array<double, count> max_ratio{};
  std::array<bool, count> satisfied{};
  std::array<bool, count> empty{};  ///< no node passed the support threshold
  double support_threshold = 0.05;
  double bound_m = 0.0;
};

namespace detail {

template <class Lhs, class Rhs>
void pairing_ratio(const Grid& g, double threshold, Lhs&& lhs, Rhs&& rhs, double& ratio, bool& empty) {
  double sup = 0.0;
  for (std::size_t k = 0; k < g.size(); ++k) sup = std::max(sup, rhs(k));
  ratio = 0.0;
  empty = true;
  if (sup == 0.0) return;
  for (std::size_t k = 0; k < g.size(); ++k) {
    const double r = rhs(k);
    if (r > threshold * sup) {
      empty = false;
      ratio = std::max(ratio, lhs(k) / r);
    }
  }
}

}  // namespace detail

/// Scalar class: |grad d| / |d|. Vector class: (|grad div d| + max_i sum_j
/// |d_i d_j|) / (|d| + |div d|). Divergence-free class (Phi): max_i sum_j
/// |d_i d_j| / |d|. Only nodes where the denominator exceeds
/// support_threshold times its sup are evaluated.
inline PairingReport check_pairing(const CoefficientSet& c1, const CoefficientSet& c2,
                                   double support_threshold = 0.05) {
  require_same_grid(c1.grid(), c2.grid());
  const Grid& g = c1.grid();
  const CoefficientSet d = difference(c1, c2);
  PairingReport rep;
  rep.support_threshold = support_threshold;
  rep.bound_m = c1.bound_m;

  auto scalar = [&](const ScalarField& f, PairingReport::Item item) {
    const VectorField gr = gradient(f);
    detail::pairing_ratio(
        g, support_threshold, [&](std::size_t k) { return gr.magnitude(k); },
        [&](std::size_t k) { return std::abs(f[k]); }, rep.max_ratio[item], rep.empty[item]);
  };
  auto jac_row_max = [](const VectorField& gx, const VectorField& gy, std::size_t k) {
    // gx = grad of component x, gy = grad of component y; row i sums |d_i V_j| over j.
    const double row0 = std::abs(gx[0][k]) + std::abs(gy[0][k]);
    const double row1 = std::abs(gx[1][k]) + std::abs(gy[1][k]);
    return std::max(row0, row1);
  };
  auto vector = [&](const VectorField& v, PairingReport::Item item, bool div_free_class) {
    const VectorField gx = gradient(v[0]), gy = gradient(v[1]);
    const ScalarField div = divergence(v);
    const VectorField gdiv = gradient(div);
    if (div_free_class) {
      detail::pairing_ratio(
          g, support_threshold, [&](std::size_t k) { return jac_row_max(gx, gy, k); },
          [&](std::size_t k) { return v.magnitude(k); }, rep.max_ratio[item], rep.empty[item]);
    } else {
      detail::pairing_ratio(
          g, support_threshold, [&](std::size_t k) { return gdiv.magnitude(k) + jac_row_max(gx, gy, k); },
          [&](std::size_t k) { return v.magnitude(k) + std::abs(div[k]); }, rep.max_ratio[item],
          rep.empty[item]);
    }
  };
  scalar(d.q_plus, PairingReport::q_plus);
  scalar(d.q_minus, PairingReport::q_minus);
  scalar(d.phi_scal, PairingReport::phi_scal);
  vector(d.a_plus, PairingReport::a_plus, false);
  vector(d.a_minus, PairingReport::a_minus, false);
  vector(d.phi_vec, PairingReport::phi_vec, true);
  for (int i = 0; i < PairingReport::count; ++i) rep.satisfied[i] = rep.max_ratio[i] <= rep.bound_m;
  return rep;
}

// --- distances ------------------------------------------------------------

/// sum_k w_k exp(2 g_k) |f_k|^2 over all nodes, g = log_weight (null: g = 0).
inline void accumulate_weighted(WeightedAccumulator& acc, const ScalarField& f, const std::vector<double>* log_weight) {
  const Grid& g = f.grid();
  for (std::size_t k = 0; k < g.size(); ++k)
    acc.add(g.area_weight(k), log_weight ? (*log_weight)[k] : 0.0, std::norm(f[k]));
}

/// The squared-L2 list of the stability estimate applied to a difference set,
/// optionally weighted by exp(2 g) with g a nodal log-weight.
inline ScaledValue weighted_difference_norm(const CoefficientSet& d, const std::vector<double>* log_weight) {
  WeightedAccumulator acc;
  for (int kappa = 0; kappa < 2; ++kappa) {
    const VectorField& a = d.a(kappa);
    accumulate_weighted(acc, a[0], log_weight);
    accumulate_weighted(acc, a[1], log_weight);
    accumulate_weighted(acc, divergence(a), log_weight);
    accumulate_weighted(acc, d.q(kappa), log_weight);
  }
  accumulate_weighted(acc, d.phi_vec[0], log_weight);
  accumulate_weighted(acc, d.phi_vec[1], log_weight);
  accumulate_weighted(acc, d.phi_scal, log_weight);
  return acc.result();
}

/// sum_k (|A1-A2|^2 + |div(A1-A2)|^2 + |q1-q2|^2) + |Phi1-Phi2|^2 + |phi1-phi2|^2 in L2.
inline double coefficient_distance(const CoefficientSet& c1, const CoefficientSet& c2) {
  return weighted_difference_norm(difference(c1, c2), nullptr).value();
}

// --- serialisation --------------------------------------------------------

inline const std::array<std::string, 6>& coefficient_component_names() {
  static const std::array<std::string, 6> names{"a_plus", "a_minus", "q_plus", "q_minus", "phi_vec", "phi_scal"};
  return names;
}

/// One snapshot file per component plus `manifest` (component -> file, bound_m,
/// flatness_order, grid extents).
inline std::vector<std::filesystem::path> write_coefficients(const std::filesystem::path& dir,
                                                             const CoefficientSet& c,
                                                             const std::string& header_comment = {}) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;
  auto put = [&](const std::string& name, const Snapshot& s) {
    auto p = dir / (name + ".field");
    write_snapshot_file(p, s);
    written.push_back(p);
  };
  put("a_plus", to_snapshot(c.a_plus));
  put("a_minus", to_snapshot(c.a_minus));
  put("q_plus", to_snapshot(c.q_plus));
  put("q_minus", to_snapshot(c.q_minus));
  put("phi_vec", to_snapshot(c.phi_vec));
  put("phi_scal", to_snapshot(c.phi_scal));
  auto mp = dir / "manifest";
  std::ofstream m(mp);
  if (!header_comment.empty()) m << header_comment << '\n';
  for (const auto& n : coefficient_component_names()) m << n << ' ' << n << ".field\n";
  m << "bound_m " << detail::format_double(c.bound_m) << '\n'
    << "flatness_order " << c.flatness_order << '\n'
    << "lx " << detail::format_double(c.grid().lx()) << '\n'
    << "ly " << detail::format_double(c.grid().ly()) << '\n';
  written.push_back(mp);
  return written;
}

inline CoefficientSet read_coefficients(const std::filesystem::path& dir) {
  std::ifstream m(dir / "manifest");
  if (!m) throw ConfigError("coefficient manifest missing in " + dir.string());
  std::map<std::string, std::string> files;
  double bound = 10.0, lx = 1.0, ly = 1.0;
  int flat = 0;
  std::string line;
  while (std::getline(m, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string key, value;
    ls >> key >> value;
    if (key == "bound_m") bound = std::stod(value);
    else if (key == "flatness_order") flat = std::stoi(value);
    else if (key == "lx") lx = std::stod(value);
    else if (key == "ly") ly = std::stod(value);
    else files[key] = value;
  }
  for (const auto& n : coefficient_component_names())
    if (!files.count(n)) throw ConfigError("coefficient manifest lacks component " + n);
  const Snapshot first = read_snapshot_file(dir / files["q_plus"]);
  const Grid g = build_grid(lx, ly, first.nx, first.ny);
  CoefficientSet c = zero_coefficients(g, bound);
  c.flatness_order = flat;
  c.a_plus = vector_from_snapshot(read_snapshot_file(dir / files["a_plus"]), g);
  c.a_minus = vector_from_snapshot(read_snapshot_file(dir / files["a_minus"]), g);
  c.q_plus = scalar_from_snapshot(first, g);
  c.q_minus = scalar_from_snapshot(read_snapshot_file(dir / files["q_minus"]), g);
  c.phi_vec = vector_from_snapshot(read_snapshot_file(dir / files["phi_vec"]), g);
  c.phi_scal = scalar_from_snapshot(read_snapshot_file(dir / files["phi_scal"]), g);
  return c;
}

}  // namespace mslab
