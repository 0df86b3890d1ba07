// Acceptance run: one PASS/FAIL line per criterion; nonzero exit on any FAIL.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "mslab/commands.hpp"

using namespace mslab;
namespace fs = std::filesystem;

namespace {

constexpr double kPi = std::numbers::pi;

int failures = 0;

void report(int id, const std::string& name, bool pass, const std::string& detail) {
  if (!pass) ++failures;
  std::printf("%s %2d %-28s %s\n", pass ? "PASS" : "FAIL", id, name.c_str(), detail.c_str());
  std::fflush(stdout);
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

int worker_threads() { return std::max(1, static_cast<int>(std::thread::hardware_concurrency())); }

ScalarField sine_mode(const Grid& g) {
  return ScalarField::from_function(
      g, [&](double x, double y) { return std::sin(kPi * x / g.lx()) * std::sin(kPi * y / g.ly()); });
}

double relative_l2(const TwoStateField& a, const TwoStateField& b) { return l2_norm(a - b) / l2_norm(b); }

double nodewise_relative(const TwoStateField& a, const TwoStateField& b) {
  const double scale = std::max(b.plus.sup_norm(), b.minus.sup_norm());
  return std::max((a.plus - b.plus).sup_norm(), (a.minus - b.minus).sup_norm()) / scale;
}

CoefficientSet sample(const Grid& g, std::uint64_t seed, double amplitude = 0.05) {
  CoefficientSet ref = constant_reference(g);
  ref.flatness_order = 2;
  return sample_admissible(seed, g, 10.0, ref, 2, amplitude);
}

// 1 ---------------------------------------------------------------------------

void forward_eigenmode() {
  const Stopwatch sw;
  const double T = 0.1;
  auto error_at = [&](int n, int nt) {
    const Grid g = build_grid(1.0, 1.0, n, n);
    const HamiltonianOperator h(zero_coefficients(g));
    const TwoStateField u0(sine_mode(g), ScalarField(g));
    const Trajectory tr = solve_ibvp(h, u0, zero_boundary_data(h, static_cast<std::size_t>(nt) + 1), T, nt);
    const TwoStateField exact = u0 * std::exp(cplx(0.0, -2.0 * kPi * kPi * T));
    return relative_l2(tr.states.back(), exact);
  };
  const double e32 = error_at(32, 256), e64 = error_at(64, 512), e128 = error_at(128, 1024);
  const double o1 = std::log2(e32 / e64), o2 = std::log2(e64 / e128);
  const double order = std::min(o1, o2);
  const double secs = sw.seconds();
  report(1, "forward eigenmode", e64 <= 1e-3 && order >= 1.9 && secs <= 120.0,
         "err64=" + num(e64) + " (<=1e-3) order=" + num(o1) + "," + num(o2) + " (>=1.9) T=0.1 t=" + num(secs) +
             "s (<=120)");
}

// 2 ---------------------------------------------------------------------------

void conservation() {
  const Grid g = build_grid(1.0, 1.0, 32, 32);
  const CoefficientSet c = sample(g, 11);
  const HamiltonianOperator h(c);
  Rng rng(5);
  const TwoStateField u0(random_dirichlet_field(g, rng), random_dirichlet_field(g, rng));
  const int nt = 512;
  const Trajectory tr = solve_ibvp(h, u0, zero_boundary_data(h, nt + 1), 1.0, nt);
  double drift = 0.0;
  for (const auto& s : tr.states) drift = std::max(drift, std::abs(l2_norm(s) - l2_norm(u0)));
  drift /= l2_norm(u0);
  const double asym = h.hermitian_asymmetry();
  report(2, "conservation & symmetry", drift <= 1e-9 && asym <= 1e-12,
         "drift=" + num(drift) + " (<=1e-9) asym=" + num(asym) + " (<=1e-12) 32^2 T=1 nt=512");
}

// 3 ---------------------------------------------------------------------------

void gauge() {
  const Grid g = build_grid(1.0, 1.0, 64, 64);
  CoefficientSet c = constant_reference(g);
  c.phi_vec = VectorField(g, FieldKind::real);
  const auto psi = [](double x, double y) { return 0.5 * std::sin(kPi * x) * std::sin(kPi * y); };
  const auto grad_psi = VectorField::from_function(g, [](double x, double y) {
    return Point{0.5 * kPi * std::cos(kPi * x) * std::sin(kPi * y), 0.5 * kPi * std::sin(kPi * x) * std::cos(kPi * y)};
  });
  CoefficientSet cg = c;
  cg.a_plus += grad_psi;
  cg.a_minus += grad_psi;
  ScalarField phase(g);
  for (std::size_t k = 0; k < g.size(); ++k) {
    const Point p = g.point(k);
    phase[k] = std::exp(cplx(0.0, -psi(p[0], p[1])));
  }
  const ScalarField w = sine_mode(g);
  const TwoStateField u0(w, w * cplx(0.5, 0.5));
  const TwoStateField u0g(phase * u0.plus, phase * u0.minus);
  const int nt = 128;
  const HamiltonianOperator h(c), hg(cg);
  const Trajectory t1 = solve_ibvp(h, u0, zero_boundary_data(h, nt + 1), 0.1, nt);
  const Trajectory t2 = solve_ibvp(hg, u0g, zero_boundary_data(hg, nt + 1), 0.1, nt);
  double worst = 0.0;
  for (int n = 0; n <= nt; n += nt / 4) {
    const auto& s1 = t1.states[static_cast<std::size_t>(n)];
    const TwoStateField mapped(phase * s1.plus, phase * s1.minus);
    worst = std::max(worst, nodewise_relative(t2.states[static_cast<std::size_t>(n)], mapped));
  }
  report(3, "gauge covariance", worst <= 5e-3, "nodewise=" + num(worst) + " (<=5e-3) 64^2 T=0.1 nt=128");
}

// 4 ---------------------------------------------------------------------------

void relative_bound() {
  const Stopwatch sw;
  const Grid g = build_grid(1.0, 1.0, 64, 64);
  const CoefficientSet c = sample(g, 21);
  int violations = 0;
  double slack = 1.0;
  for (double eps : {0.5, 0.1}) {
    for (const VectorField* a : {&c.a_plus, &c.a_minus}) {
      const RelativeBoundReport r = check_relative_bound(*a, c.phi_vec, eps, 100, eps == 0.5 ? 31 : 32);
      violations += r.violations;
      slack = std::min(slack, r.worst_relative_slack);
    }
  }
  const double secs = sw.seconds();
  report(4, "relative bound", violations == 0 && secs <= 60.0,
         "violations=" + std::to_string(violations) + " (==0) min_rel_slack=" + num(slack) +
             " 100 samples eps={0.5,0.1} t=" + num(secs) + "s (<=60)");
}

// 5 ---------------------------------------------------------------------------

void carleman_conditions() {
  const Grid g = build_grid(1.0, 1.0, 33, 33);
  WeightOptions wo;
  wo.normalize_beta = false;
  const CarlemanWeights w = build_weights(g, {-1.0, 0.5}, 2.0, 1.0, 16, wo);
  const BetaConditions bc = check_beta_conditions(w);
  const double dc0 = std::abs(bc.c0_numeric - bc.c0), deps = std::abs(bc.eps_numeric - 2.0);
  std::vector<std::size_t> expect;
  for (std::size_t k : g.boundary_nodes())
    if (g.point(k)[0] > 0.0) expect.push_back(k);
  const bool faces = w.gamma0 == expect;
  report(5, "carleman conditions",
         dc0 <= 1e-8 && deps <= 1e-8 && std::abs(bc.eps_pc - 2.0) <= 1e-12 && bc.lambda0 == 0.0 && faces,
         "c0=" + num(bc.c0) + " |dc0|=" + num(dc0) + " |deps|=" + num(deps) + " (<=1e-8) lambda0=" + num(bc.lambda0) +
             " gamma0=" + std::to_string(w.gamma0.size()) + (faces ? " (3 faces)" : " (wrong faces)"));
}

// 6, 7 ------------------------------------------------------------------------

void carleman_inequality() {
  const Stopwatch sw;
  const Grid g = build_grid(1.0, 1.0, 32, 32);
  const CarlemanWeights w = build_weights(g, {-1.0, 0.5}, 2.0, 1.0, 128);
  const int samples = 10;
  const std::uint64_t seed = 1;
  const CarlemanCheckReport rep = carleman_check(w, samples, seed);
  const std::size_t ns = w.s_grid.size();
  double c_fit = 0.0;
  bool finite = true;
  for (std::size_t si = ns - 3; si < ns; ++si) {
    finite = finite && std::isfinite(rep.c_fit[si]);
    c_fit = std::max(c_fit, rep.c_fit[si]);
  }
  bool bounded = finite;
  for (const auto& row : rep.rows)
    if (row.s >= w.s_grid[ns - 3] && !(row.terms.ratio() <= c_fit)) bounded = false;
  double slope_lo = 1e300, slope_hi = -1e300;
  for (int smp = 0; smp < samples; ++smp) {
    std::vector<double> logs;
    for (const auto& row : rep.rows)
      if (row.sample == smp) logs.push_back(CarlemanCheckReport::normalized_log(row.terms.s3, row.normalization));
    const double sl = log_log_slope(w.s_grid, logs);
    slope_lo = std::min(slope_lo, sl);
    slope_hi = std::max(slope_hi, sl);
  }
  const double secs6 = sw.seconds();
  report(6, "carleman inequality",
         bounded && slope_lo >= 2.8 && slope_hi <= 3.2 && secs6 <= 300.0,
         "C_fit(top3)=" + num(c_fit) + (bounded ? " bounds all" : " not bounding") + " slope=[" + num(slope_lo) + "," +
             num(slope_hi) + "] (3+-0.2) 32^2 nt=128 t=" + num(secs6) + "s (<=300)");

  int holds = 0, total = 0;
  double worst = 0.0;
  for (int smp = 0; smp < samples; ++smp) {
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(smp)));
    const SpaceTimeField u = random_space_time_sample(g, w.T, w.nt, rng);
    for (double s : {4.0, 8.0, 16.0}) {
      const InitialTraceBound b = check_initial_trace_bound(w, s, u);
      ++total;
      if (b.holds()) ++holds;
      worst = std::max(worst, ratio(b.lhs, b.rhs));
    }
  }
  report(7, "initial trace", holds == total,
         std::to_string(holds) + "/" + std::to_string(total) + " hold, max lhs/rhs=" + num(worst) + " s={4,8,16}");
}

// 8, 9 ------------------------------------------------------------------------

void v0_and_algebraic() {
  const Stopwatch sw;
  const Grid g = build_grid(1.0, 1.0, 128, 128);
  const CoefficientSet c1 = sample(g, 41), c2 = sample(g, 42);
  const ProbeSet p = build_probe_set(g);
  const double T = 0.1;
  const int nt = 512;
  std::vector<TwoStateField> exact(p.size()), dual(p.size());
  parallel_for(p.size(), worker_threads(), [&](std::size_t k) {
    exact[k] = v0_exact(c1, c2, p.probes[k]);
    dual[k] = v0_from_dual_solves(c1, c2, p.probes[k], T, nt);
  });
  double worst = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) worst = std::max(worst, relative_l2(dual[k], exact[k]));
  report(8, "v0 identity", worst <= 5e-3, "max rel L2=" + num(worst) + " (<=5e-3) 128^2 nt=512 amp=0.05");

  const CoefficientSet truth = difference(c1, c2);
  const auto e_exact = component_errors(algebraic_reconstruct(exact, c1.a_plus, c1.a_minus, p).delta, truth);
  const auto e_dual = component_errors(algebraic_reconstruct(dual, c1.a_plus, c1.a_minus, p).delta, truth);
  const double rt = *std::max_element(e_exact.begin(), e_exact.end());
  const double ee = *std::max_element(e_dual.begin(), e_dual.end());
  const double secs = sw.seconds();
  report(9, "algebraic reconstruction", rt <= 1e-10 && ee <= 1e-2 && secs <= 600.0,
         "round trip=" + num(rt) + " (<=1e-10) dual=" + num(ee) + " (<=1e-2) t=" + num(secs) + "s (<=600)");
}

// 10, 11 ----------------------------------------------------------------------

void stability_ensemble() {
  const Stopwatch sw;
  const Grid g = build_grid(1.0, 1.0, 64, 64);
  const ProbeSet p = build_probe_set(g);
  const CarlemanWeights w = build_weights(g, {-1.0, 0.5}, 2.0, 1.0, 64);
  const double T = 0.1;
  const int nt = 256, pairs = 20;
  MeasurementOptions mo;
  mo.threads = worker_threads();
  std::vector<double> ratios;
  std::vector<std::vector<double>> bratio(w.s_grid.size());
  CoefficientSet first1, first2;
  for (int k = 0; k < pairs; ++k) {
    const CoefficientSet c1 = sample(g, 1000 + 2 * static_cast<std::uint64_t>(k));
    const CoefficientSet c2 = sample(g, 1001 + 2 * static_cast<std::uint64_t>(k));
    if (k == 0) first1 = c1, first2 = c2;
    const auto m1 = simulate_measurements(c1, p, w, T, nt, mo);
    const auto m2 = simulate_measurements(c2, p, w, T, nt, mo);
    const StabilityReport r = stability_report(c1, c2, m1, m2, w, p);
    ratios.push_back(r.ratio);
    for (std::size_t si = 0; si < w.s_grid.size(); ++si) bratio[si].push_back(r.boundary_ratio[si]);
  }
  const auto [rmin, rmax] = std::minmax_element(ratios.begin(), ratios.end());
  const double span = std::log10(*rmax / *rmin);

  // c2 = c1 + eps (c2 - c1) with eps = 1, 1/2, 1/4.
  const auto m1 = simulate_measurements(first1, p, w, T, nt, mo);
  const CoefficientSet d = difference(first2, first1);
  std::vector<double> eps_ratios;
  for (double eps : {1.0, 0.5, 0.25}) {
    const CoefficientSet c2 = add_scaled(first1, d, eps);
    eps_ratios.push_back(stability_report(first1, c2, m1, simulate_measurements(c2, p, w, T, nt, mo), w, p).ratio);
  }
  const auto [emin, emax] = std::minmax_element(eps_ratios.begin(), eps_ratios.end());
  const double eps_factor = *emax / *emin;
  const double secs = sw.seconds();
  report(10, "stability ensemble",
         std::isfinite(span) && *rmin > 0.0 && span <= 2.0 && eps_factor <= 1.5 && secs <= 1800.0,
         "ratio in [" + num(*rmin) + "," + num(*rmax) + "] span=" + num(span) + " dec (<=2) eps factor=" +
             num(eps_factor) + " (<=1.5) 64^2 nt=256 t=" + num(secs) + "s (<=1800)");

  bool ok = true;
  std::string detail = "per s max/min:";
  for (std::size_t si = 0; si < w.s_grid.size(); ++si) {
    const auto [lo, hi] = std::minmax_element(bratio[si].begin(), bratio[si].end());
    const bool finite = std::isfinite(*hi) && *lo > 0.0;
    const double spread = finite ? *hi / *lo : std::numeric_limits<double>::infinity();
    ok = ok && finite && spread <= 100.0;
    detail += " s=" + num(w.s_grid[si]) + ":" + num(*hi) + "/" + num(spread);
  }
  report(11, "boundary functional bound", ok, detail + " (finite, spread<=100)");
}

// 12 --------------------------------------------------------------------------

void least_squares() {
  const Grid g = build_grid(1.0, 1.0, 32, 32);
  CoefficientSet known = constant_reference(g);
  known.flatness_order = 2;
  const ProbeSet p = build_probe_set(g);
  const CarlemanWeights w = build_weights(g, {-1.0, 0.5}, 2.0, 1.0, 16);
  const SineBasis basis(g, 8, known.flatness_order);
  std::vector<double> theta(static_cast<std::size_t>(basis.size()), 0.0);
  theta[4] = 0.05;
  const CoefficientSet truth = add_scaled(known, basis.expand(theta, known));
  LsqOptions lo;
  lo.basis_size = 8;
  lo.iterations = 200;
  lo.T = 0.1;
  lo.nt = 128;
  lo.threads = worker_threads();
  auto run = [&](double noise, int& iterations, bool& monotone) {
    MeasurementOptions mo;
    mo.noise_level = noise;
    mo.noise_seed = 77;
    mo.threads = lo.threads;
    const LsqResult r = lsq_reconstruct(simulate_measurements(truth, p, w, lo.T, lo.nt, mo), known, p, w, lo);
    iterations = r.iterations;
    monotone = std::is_sorted(r.objective_history.rbegin(), r.objective_history.rend());
    return std::sqrt(coefficient_distance(r.estimate, truth) / coefficient_distance(truth, known));
  };
  int it0 = 0, it1 = 0;
  bool mono0 = false, mono1 = false;
  const double e0 = run(0.0, it0, mono0);
  const double e1 = run(0.01, it1, mono1);
  report(12, "least squares", e0 <= 0.05 && mono0 && it0 <= 200 && e1 <= 0.15,
         "err=" + num(e0) + " (<=5%) in " + std::to_string(it0) + " it" + (mono0 ? " monotone" : " NOT monotone") +
             "; 1% noise err=" + num(e1) + " (<=15%) 32^2 nt=128");
}

// 13 --------------------------------------------------------------------------

std::vector<std::pair<std::string, std::string>> tree_contents(const fs::path& root) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    std::ifstream f(e.path(), std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    out.emplace_back(fs::relative(e.path(), root).string(), ss.str());
  }
  std::sort(out.begin(), out.end());
  return out;
}

void determinism() {
  const fs::path base = fs::temp_directory_path() / "mslab_acceptance_determinism";
  fs::remove_all(base);
  ExperimentConfig small;
  small.nx = small.ny = 20;
  small.nt = 32;
  small.carleman_nt = 32;
  small.samples = 3;
  small.pair_count = 2;
  small.iterations = 5;
  small.noise_level = 0.01;
  bool same = true;
  int files = 0;
  std::string bad;
  for (const std::string& cmd : command_names()) {
    ExperimentConfig c = cmd == "selftest" ? ExperimentConfig{} : small;
    c.output_dir = base.string();
    std::ostringstream log;
    const int rc0 = run_command(cmd, c, log);
    const auto first = tree_contents(base / cmd);
    const int rc1 = run_command(cmd, c, log);
    const auto second = tree_contents(base / cmd);
    files += static_cast<int>(first.size());
    if (rc0 != 0 || rc1 != 0 || first.empty() || first != second) {
      same = false;
      bad += " " + cmd;
    }
  }
  fs::remove_all(base);
  report(13, "determinism", same,
         std::to_string(command_names().size()) + " commands, " + std::to_string(files) + " files byte-identical" +
             (same ? "" : "; mismatch:" + bad));
}

}  // namespace

int main() {
  const Stopwatch total;
  forward_eigenmode();
  conservation();
  gauge();
  relative_bound();
  carleman_conditions();
  carleman_inequality();
  v0_and_algebraic();
  stability_ensemble();
  least_squares();
  determinism();
  std::printf("%d of 13 criteria failed, total %.1f s\n", failures, total.seconds());
  return failures == 0 ? 0 : 1;
}
