#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <sstream>

#include "mslab/coefficients.hpp"
#include "mslab/quadrature.hpp"
#include "mslab/rng.hpp"
#include "mslab/snapshot_io.hpp"
#include "mslab/stencil.hpp"
#include "mslab/trajectory.hpp"

using namespace mslab;

namespace {

constexpr double kPi = std::numbers::pi;

// Hand-rolled generator: grid extents and node counts from a seeded stream.
Grid random_grid(Rng& rng) {
  const int nx = 8 + static_cast<int>(rng.uniform() * 40.0);
  const int ny = 8 + static_cast<int>(rng.uniform() * 40.0);
  return build_grid(rng.uniform(0.3, 3.0), rng.uniform(0.3, 3.0), nx, ny);
}

ScalarField random_field(const Grid& g, Rng& rng) {
  ScalarField f(g);
  for (auto& v : f.values()) {
    const double re = rng.normal();
    v = cplx(re, rng.normal());
  }
  return f;
}

double interior_max_error(const ScalarField& f, const ScalarField& ref) {
  double m = 0.0;
  for (std::size_t k : f.grid().interior_nodes()) m = std::max(m, std::abs(f[k] - ref[k]));
  return m;
}

std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("mslab_core_" + name);
  std::filesystem::remove_all(p);
  return p;
}

}  // namespace

// --- grid -----------------------------------------------------------------

TEST(Grid, UnitSquareCounts) {
  const Grid g = build_grid(1.0, 1.0, 64, 64);
  EXPECT_EQ(g.size(), 4096u);
  EXPECT_EQ(g.boundary_nodes().size(), 4u * 63u);
  EXPECT_EQ(g.interior_nodes().size(), 62u * 62u);
}

TEST(Grid, Spacing) {
  const Grid g = build_grid(2.0, 1.0, 9, 9);
  EXPECT_DOUBLE_EQ(g.hx(), 0.25);
  EXPECT_DOUBLE_EQ(g.hy(), 0.125);
}

TEST(Grid, RejectsTooFewNodes) {
  EXPECT_THROW(build_grid(1.0, 1.0, 4, 4), PreconditionError);
  EXPECT_THROW(build_grid(1.0, 1.0, 64, 7), PreconditionError);
  EXPECT_THROW(build_grid(0.0, 1.0, 16, 16), PreconditionError);
}

TEST(GridProperty, PartitionAndUnitNormals) {
  Rng rng(11);
  for (int trial = 0; trial < 25; ++trial) {
    const Grid g = random_grid(rng);
    const auto bnd = g.boundary_nodes();
    EXPECT_EQ(bnd.size() + g.interior_nodes().size(), g.size());
    std::size_t face_total = 0;
    for (Face f : {Face::left, Face::right, Face::bottom, Face::top}) face_total += g.face_nodes(f).size();
    EXPECT_EQ(face_total, bnd.size());
    for (std::size_t k : bnd) {
      const Point n = g.normal(k);
      EXPECT_NEAR(n[0] * n[0] + n[1] * n[1], 1.0, 1e-15);
    }
    double perimeter = 0.0;
    for (std::size_t k : bnd) perimeter += g.boundary_weight(k);
    EXPECT_NEAR(perimeter, 2.0 * (g.lx() + g.ly()), 1e-12);
    double area = 0.0;
    for (std::size_t k = 0; k < g.size(); ++k) area += g.area_weight(k);
    EXPECT_NEAR(area, g.lx() * g.ly(), 1e-12);
  }
}

TEST(Grid, CornersBelongToXFaces) {
  const Grid g = build_grid(1.0, 1.0, 10, 10);
  EXPECT_EQ(*g.face_of(g.index(0, 0)), Face::left);
  EXPECT_EQ(*g.face_of(g.index(9, 9)), Face::right);
  EXPECT_THROW(g.normal(g.index(4, 4)), PreconditionError);
}

// --- differential operators -----------------------------------------------

TEST(DiffOps, GradientOfConstantIsZero) {
  const Grid g = build_grid(1.0, 1.0, 16, 16);
  const VectorField gr = std::get<VectorField>(diff_ops(ScalarField(g, 3.0), DiffMode::gradient));
  EXPECT_LE(gr.sup_norm(), 1e-12);
}

TEST(DiffOps, GradientOfLinear) {
  const Grid g = build_grid(1.0, 1.0, 16, 16);
  const auto f = ScalarField::from_function(g, [](double x, double) { return x; });
  const VectorField gr = gradient(f);
  for (std::size_t k = 0; k < g.size(); ++k) {
    EXPECT_NEAR(std::abs(gr[0][k] - 1.0), 0.0, 1e-12);
    EXPECT_NEAR(std::abs(gr[1][k]), 0.0, 1e-12);
  }
}

TEST(DiffOps, LaplacianOfQuadratic) {
  const Grid g = build_grid(1.0, 1.0, 16, 16);
  const auto f = ScalarField::from_function(g, [](double x, double y) { return x * x + y * y; });
  const ScalarField lap = std::get<ScalarField>(diff_ops(f, DiffMode::laplacian));
  for (std::size_t k : g.interior_nodes()) EXPECT_NEAR(std::abs(lap[k] - 4.0), 0.0, 1e-9);
}

TEST(DiffOps, ModeMismatchThrows) {
  const Grid g = build_grid(1.0, 1.0, 16, 16);
  EXPECT_THROW(diff_ops(ScalarField(g), DiffMode::divergence), PreconditionError);
  EXPECT_THROW(diff_ops(VectorField(g), DiffMode::gradient), PreconditionError);
  EXPECT_THROW(diff_ops(VectorField(g), DiffMode::laplacian), PreconditionError);
}

TEST(DiffOpsProperty, DivergenceOfGradientConvergesToLaplacian) {
  // u = sin(pi x) cos(2 pi y); div grad u and lap u both approach -5 pi^2 u.
  auto u_of = [](const Grid& g) {
    return ScalarField::from_function(g, [](double x, double y) { return std::sin(kPi * x) * std::cos(2 * kPi * y); });
  };
  double prev = 0.0;
  for (int n : {17, 33, 65}) {
    const Grid g = build_grid(1.0, 1.0, n, n);
    const ScalarField u = u_of(g);
    const ScalarField exact = u * cplx(-5.0 * kPi * kPi);
    const double e_lap = interior_max_error(laplacian(u), exact);
    const double e_dg = interior_max_error(divergence(gradient(u)), exact);
    EXPECT_LE(e_lap, 10.0 * g.hx() * g.hx() * 5.0 * kPi * kPi);
    if (prev > 0.0) EXPECT_LT(e_dg, 0.35 * prev);
    prev = e_dg;
  }
}

// --- quadrature -----------------------------------------------------------

TEST(Quadrature, ConstantNorm) {
  const Grid g = build_grid(1.0, 1.0, 32, 32);
  EXPECT_NEAR(l2_norm(ScalarField(g, 1.0)), 1.0, 1e-12);
}

TEST(Quadrature, SineProductNormSquared) {
  const Grid g = build_grid(1.0, 1.0, 64, 64);
  const auto f = ScalarField::from_function(g, [](double x, double y) { return std::sin(kPi * x) * std::sin(kPi * y); });
  EXPECT_NEAR(l2_norm_sq(f), 0.25, 1e-3);
  const auto s = ScalarField::from_function(g, [](double x, double) { return std::sin(kPi * x); });
  EXPECT_NEAR(l2_norm_sq(s), 0.5, 1e-3);
}

TEST(Quadrature, ZeroAndEmptyRegion) {
  const Grid g = build_grid(1.0, 1.0, 16, 16);
  EXPECT_EQ(l2_norm(ScalarField(g)), 0.0);
  EXPECT_THROW(l2_norm(ScalarField(g), RegionBoundary{}), PreconditionError);
}

TEST(QuadratureProperty, TriangleInequalityAndHomogeneity) {
  Rng rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    const Grid g = random_grid(rng);
    const ScalarField a = random_field(g, rng), b = random_field(g, rng);
    const double c = rng.uniform(-3.0, 3.0);
    for (const Region& r : {Region(RegionAll{}), Region(RegionInterior{}), Region(RegionBoundary{g.boundary_nodes()})}) {
      EXPECT_LE(l2_norm(a + b, r), l2_norm(a, r) + l2_norm(b, r) + 1e-12);
      EXPECT_NEAR(l2_norm(a * cplx(c), r), std::abs(c) * l2_norm(a, r), 1e-10 * (1.0 + l2_norm(a, r)));
    }
  }
}

TEST(NeumannTrace, LinearOnRightFace) {
  const Grid g = build_grid(1.0, 1.0, 16, 16);
  const auto f = ScalarField::from_function(g, [](double x, double) { return x; });
  const auto nodes = g.face_nodes(Face::right);
  for (cplx v : neumann_trace(f, nodes)) EXPECT_NEAR(std::abs(v - 1.0), 0.0, 1e-12);
  for (cplx v : neumann_trace(f, g.face_nodes(Face::left))) EXPECT_NEAR(std::abs(v + 1.0), 0.0, 1e-12);
}

TEST(NeumannTrace, ConstantAndQuadratic) {
  const Grid g = build_grid(1.0, 1.0, 32, 32);
  const auto bnd = g.boundary_nodes();
  for (cplx v : neumann_trace(ScalarField(g, 2.5), bnd)) EXPECT_NEAR(std::abs(v), 0.0, 1e-10);
  const auto f = ScalarField::from_function(g, [](double x, double) { return x * x; });
  for (cplx v : neumann_trace(f, g.face_nodes(Face::right))) EXPECT_NEAR(std::abs(v - 2.0), 0.0, 1e-9);
}

TEST(NeumannTrace, InteriorNodeThrows) {
  const Grid g = build_grid(1.0, 1.0, 16, 16);
  const std::vector<std::size_t> bad{g.index(5, 5)};
  EXPECT_THROW(neumann_trace(ScalarField(g), bad), PreconditionError);
}

TEST(NeumannTraceProperty, Linearity) {
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const Grid g = random_grid(rng);
    const ScalarField a = random_field(g, rng), b = random_field(g, rng);
    const cplx c(rng.normal(), rng.normal());
    const auto bnd = g.boundary_nodes();
    const auto ta = neumann_trace(a, bnd), tb = neumann_trace(b, bnd), tab = neumann_trace(a * c + b, bnd);
    for (std::size_t k = 0; k < bnd.size(); ++k)
      EXPECT_NEAR(std::abs(tab[k] - (c * ta[k] + tb[k])), 0.0, 1e-9 * (1.0 + std::abs(tab[k])));
  }
}

// --- time derivative ------------------------------------------------------

namespace {

SpaceTimeField series(const Grid& g, double T, int nt, const std::function<cplx(double)>& amp, const ScalarField& shape) {
  SpaceTimeField s{T, nt, {}};
  for (int n = 0; n <= nt; ++n) s.states.push_back(shape * amp(s.time(n)));
  return s;
}

}  // namespace

TEST(TimeDerivative, ConstantIsZero) {
  const Grid g = build_grid(1.0, 1.0, 8, 8);
  const ScalarField w(g, cplx(1.0, 2.0));
  const auto d = time_derivative(series(g, 1.0, 10, [](double) { return cplx(1.0); }, w));
  for (const auto& s : d.states) EXPECT_LE(s.sup_norm(), 1e-12);
}

TEST(TimeDerivative, LinearInTime) {
  const Grid g = build_grid(1.0, 1.0, 8, 8);
  const ScalarField w(g, cplx(0.5, -1.0));
  const auto d = time_derivative(series(g, 2.0, 10, [](double t) { return cplx(t); }, w));
  for (const auto& s : d.states) EXPECT_LE((s - w).sup_norm(), 1e-12);
}

TEST(TimeDerivative, PhaseConvergesSecondOrder) {
  const Grid g = build_grid(1.0, 1.0, 8, 8);
  const ScalarField w(g, 1.0);
  const double mu = 2.0 * kPi * kPi;
  double prev = 0.0;
  for (int nt : {50, 100, 200}) {
    const auto traj = series(g, 0.1, nt, [mu](double t) { return std::exp(cplx(0.0, -mu * t)); }, w);
    const auto d = time_derivative(traj);
    double err = 0.0;
    for (int n = 0; n <= nt; ++n) err = std::max(err, (d[n] - traj[n] * cplx(0.0, -mu)).sup_norm());
    if (prev > 0.0) EXPECT_NEAR(prev / err, 4.0, 0.5);
    prev = err;
  }
}

TEST(TimeDerivative, TooFewLevelsThrows) {
  const Grid g = build_grid(1.0, 1.0, 8, 8);
  SpaceTimeField s{1.0, 1, {ScalarField(g), ScalarField(g)}};
  EXPECT_THROW(time_derivative(s), PreconditionError);
}

TEST(TimeDerivativeProperty, AntiderivativeRoundTrip) {
  Rng rng(21);
  const Grid g = build_grid(1.0, 1.0, 8, 8);
  for (int trial = 0; trial < 10; ++trial) {
    const int nt = 100 + static_cast<int>(rng.uniform() * 100.0);
    const ScalarField shape = random_field(g, rng);
    const double a = rng.uniform(-3.0, 3.0), b = rng.uniform(-3.0, 3.0);
    const auto f = series(g, 1.0, nt, [&](double t) { return cplx(std::sin(a * t), std::cos(b * t)); }, shape);
    const auto back = time_derivative(time_antiderivative(f));
    for (int n = 0; n <= nt; ++n)
      EXPECT_LE((back[n] - f[n]).sup_norm(), 50.0 / (nt * nt) * (1.0 + shape.sup_norm()));
  }
}

// --- snapshots ------------------------------------------------------------

TEST(Snapshot, RoundTripIsExact) {
  Rng rng(2);
  const Grid g = build_grid(1.3, 0.7, 9, 11);
  const ScalarField a = random_field(g, rng), b = random_field(g, rng);
  std::stringstream ss;
  write_snapshot(ss, to_snapshot(TwoStateField(a, b)));
  const TwoStateField back = two_state_from_snapshot(read_snapshot(ss), g);
  EXPECT_EQ(back.plus.values(), a.values());
  EXPECT_EQ(back.minus.values(), b.values());
}

TEST(Snapshot, MalformedInputThrows) {
  std::stringstream bad("FIELD 3 x 1 real\n");
  EXPECT_THROW(read_snapshot(bad), ConfigError);
  std::stringstream truncated("FIELD 8 8 1 real\n0\n1\n");
  EXPECT_THROW(read_snapshot(truncated), ConfigError);
}

// --- coefficients ---------------------------------------------------------

namespace {

CoefficientSet sample(std::uint64_t seed, const Grid& g, double amplitude = 0.05, int flat = 2) {
  CoefficientSet ref = constant_reference(g);
  return sample_admissible(seed, g, 10.0, ref, flat, amplitude);
}

bool identical(const CoefficientSet& a, const CoefficientSet& b) {
  return a.a_plus[0].values() == b.a_plus[0].values() && a.a_plus[1].values() == b.a_plus[1].values() &&
         a.a_minus[0].values() == b.a_minus[0].values() && a.a_minus[1].values() == b.a_minus[1].values() &&
         a.q_plus.values() == b.q_plus.values() && a.q_minus.values() == b.q_minus.values() &&
         a.phi_vec[0].values() == b.phi_vec[0].values() && a.phi_vec[1].values() == b.phi_vec[1].values() &&
         a.phi_scal.values() == b.phi_scal.values();
}

}  // namespace

TEST(Sampling, ZeroAmplitudeGivesReference) {
  const Grid g = build_grid(1.0, 1.0, 32, 32);
  EXPECT_DOUBLE_EQ(coefficient_distance(sample(3, g, 0.0), constant_reference(g)), 0.0);
}

TEST(Sampling, DeterministicPerSeed) {
  const Grid g = build_grid(1.0, 1.0, 32, 32);
  EXPECT_TRUE(identical(sample(7, g), sample(7, g)));
  EXPECT_FALSE(identical(sample(7, g), sample(8, g)));
}

TEST(Sampling, AdmissibleAndDivergenceFree) {
  const Grid g = build_grid(1.0, 1.0, 32, 32);
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const CoefficientSet c = sample(seed, g);
    EXPECT_LE(coefficient_sup(c), c.bound_m);
    EXPECT_LE(interior_divergence_sup(c.phi_vec), kDivergenceTolerance);
    EXPECT_TRUE(c.a_plus.is_real() && c.phi_vec.is_real());
  }
}

TEST(Sampling, DifferenceIsFlatAtBoundary) {
  // The difference vanishes on the boundary together with its normal
  // derivative; the one-sided stencil picks up only an O(h^2) residue.
  double prev = 0.0;
  for (int n : {33, 65}) {
    const Grid g = build_grid(1.0, 1.0, n, n);
    const CoefficientSet d = difference(sample(4, g), constant_reference(g));
    const auto bnd = g.boundary_nodes();
    double value = 0.0, normal = 0.0;
    for (const ScalarField* f : {&d.q_plus, &d.q_minus, &d.phi_scal, &d.a_plus[0], &d.a_minus[1]}) {
      for (std::size_t k : bnd) value = std::max(value, std::abs((*f)[k]));
      for (cplx v : neumann_trace(*f, bnd)) normal = std::max(normal, std::abs(v));
    }
    EXPECT_LE(value, 1e-14);
    if (prev > 0.0) EXPECT_LT(normal, 0.3 * prev);
    prev = normal;
  }
  EXPECT_LT(prev, 1e-3);
}

TEST(Sampling, RejectsBadArguments) {
  const Grid g = build_grid(1.0, 1.0, 16, 16);
  EXPECT_THROW(sample_admissible(1, g, 10.0, constant_reference(g), -1, 0.05), PreconditionError);
  EXPECT_THROW(sample_admissible(1, g, 10.0, constant_reference(g), 2, -0.1), PreconditionError);
  EXPECT_THROW(sample_admissible(1, g, 1e-3, constant_reference(g), 2, 0.05), PreconditionError);
}

TEST(Projection, LinearFieldBecomesDivergenceFree) {
  const Grid g = build_grid(1.0, 1.0, 32, 32);
  const auto v = VectorField::from_function(g, [](double x, double y) { return Point{x, y}; });
  const ProjectionResult p = project_div_free_checked(v);
  EXPECT_LE(interior_divergence_sup(p.field), 1e-6);
}

TEST(Projection, CurlIsUnchangedAndZeroStaysZero) {
  const Grid g = build_grid(1.0, 1.0, 32, 32);
  const auto psi = ScalarField::from_function(g, [](double x, double y) { return std::sin(kPi * x) * std::sin(kPi * y); });
  const VectorField c = detail::discrete_curl(psi);
  EXPECT_LE((project_div_free(c) - c).sup_norm(), 1e-10 * c.sup_norm());
  EXPECT_LE(project_div_free(VectorField(g, FieldKind::real)).sup_norm(), 0.0);
}

TEST(ProjectionProperty, Idempotent) {
  Rng rng(31);
  for (int trial = 0; trial < 5; ++trial) {
    const Grid g = random_grid(rng);
    VectorField v(random_field(g, rng), random_field(g, rng), FieldKind::real);
    const VectorField p1 = project_div_free(v);
    const VectorField p2 = project_div_free(p1);
    EXPECT_LE((p2 - p1).sup_norm(), 1e-8 * (1.0 + p1.sup_norm()));
  }
}

TEST(Pairing, IdenticalSetsAreSatisfied) {
  const Grid g = build_grid(1.0, 1.0, 32, 32);
  const CoefficientSet c = sample(1, g);
  const PairingReport r = check_pairing(c, c);
  for (int i = 0; i < PairingReport::count; ++i) {
    EXPECT_TRUE(r.satisfied[i]);
    EXPECT_EQ(r.max_ratio[i], 0.0);
  }
}

TEST(Pairing, ExponentialHasUnitRatio) {
  const Grid g = build_grid(1.0, 1.0, 64, 64);
  const CoefficientSet c1 = constant_reference(g);
  CoefficientSet c2 = c1;
  c2.q_plus -= ScalarField::from_function(g, [](double x, double) { return std::exp(x); });
  const PairingReport r = check_pairing(c1, c2);
  EXPECT_NEAR(r.max_ratio[PairingReport::q_plus], 1.0, 2e-3);
  EXPECT_TRUE(r.satisfied[PairingReport::q_plus]);
}

TEST(PairingProperty, ScalingInvariance) {
  const Grid g = build_grid(1.0, 1.0, 32, 32);
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const CoefficientSet c1 = sample(seed, g), c2 = constant_reference(g);
    const CoefficientSet d = difference(c1, c2);
    const PairingReport r1 = check_pairing(c1, c2);
    const PairingReport r2 = check_pairing(add_scaled(c2, d, 3.0), c2);
    for (int i = 0; i < PairingReport::count; ++i) {
      EXPECT_TRUE(std::isfinite(r1.max_ratio[i]));
      EXPECT_NEAR(r2.max_ratio[i], r1.max_ratio[i], 1e-9 * (1.0 + r1.max_ratio[i]));
    }
  }
}

TEST(Distance, Examples) {
  const Grid g = build_grid(1.0, 1.0, 32, 32);
  const CoefficientSet c = sample(2, g);
  EXPECT_EQ(coefficient_distance(c, c), 0.0);
  CoefficientSet shifted = c;
  shifted.q_plus += ScalarField(g, 1.0);
  EXPECT_NEAR(coefficient_distance(shifted, c), 1.0, 1e-12);
}

TEST(DistanceProperty, QuadraticScalingAndSymmetry) {
  const Grid g = build_grid(1.0, 1.0, 32, 32);
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    const CoefficientSet c1 = sample(seed, g), c2 = sample(seed + 100, g);
    const CoefficientSet d = difference(c1, c2);
    const double base = coefficient_distance(c1, c2);
    EXPECT_GT(base, 0.0);
    EXPECT_NEAR(coefficient_distance(c2, c1), base, 1e-14 * base);
    EXPECT_NEAR(coefficient_distance(add_scaled(c2, d, 2.0), c2), 4.0 * base, 1e-10 * base);
  }
}

TEST(CoefficientIo, RoundTrip) {
  const Grid g = build_grid(1.0, 0.8, 12, 10);
  const CoefficientSet c = sample(9, g);
  const auto dir = scratch_dir("coeffs");
  write_coefficients(dir, c);
  const CoefficientSet back = read_coefficients(dir);
  EXPECT_TRUE(identical(c, back));
  EXPECT_EQ(back.bound_m, c.bound_m);
  EXPECT_EQ(back.flatness_order, c.flatness_order);
  std::filesystem::remove_all(dir);
}
