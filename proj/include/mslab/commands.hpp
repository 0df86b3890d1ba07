#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "mslab/carleman.hpp"
#include "mslab/coefficients.hpp"
#include "mslab/config.hpp"
#include "mslab/dynamics.hpp"
#include "mslab/inversion.hpp"
#include "mslab/parallel.hpp"
#include "mslab/probing.hpp"
#include "mslab/snapshot_io.hpp"

namespace mslab {

enum ExitCode : int { kExitOk = 0, kExitConfig = 2, kExitNumerical = 3, kExitSelftest = 4 };

inline const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names{"forward",  "carleman-check", "probe-check", "simulate",
                                              "stability", "reconstruct",   "selftest"};
  return names;
}

namespace detail {

/// Command output directory; removed again unless commit() is called.
class OutputDir {
 public:
  explicit OutputDir(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::remove_all(dir_);
    std::filesystem::create_directories(dir_);
  }
  OutputDir(const OutputDir&) = delete;
  OutputDir& operator=(const OutputDir&) = delete;
  ~OutputDir() {
    if (!committed_) {
      std::error_code ec;
      std::filesystem::remove_all(dir_, ec);
    }
  }
  const std::filesystem::path& path() const { return dir_; }
  std::filesystem::path operator/(const std::string& name) const { return dir_ / name; }
  void write(const std::string& name, const std::string& text) const {
    std::ofstream f(dir_ / name, std::ios::binary);
    f << text;
    if (!f) throw Error("cannot write " + (dir_ / name).string());
  }
  void commit() { committed_ = true; }

 private:
  std::filesystem::path dir_;
  bool committed_ = false;
};

inline Grid config_grid(const ExperimentConfig& c) { return build_grid(c.lx, c.ly, c.nx, c.ny); }

inline CoefficientSet config_reference(const ExperimentConfig& c) {
  CoefficientSet r = constant_reference(config_grid(c), c.bound_m);
  r.flatness_order = c.flatness_order;
  return r;
}

/// Admissible set drawn from stream `stream` of the configured seed.
inline CoefficientSet config_sample(const ExperimentConfig& c, std::uint64_t stream) {
  SamplingOptions so;
  so.complex_q = c.complex_q;
  return sample_admissible(mix_seed(c.seed, stream), config_grid(c), c.bound_m, config_reference(c),
                           c.flatness_order, c.amplitude, so);
}

inline CarlemanWeights config_weights(const ExperimentConfig& c) {
  WeightOptions wo;
  wo.strict = c.strict;
  wo.normalize_beta = c.normalize_beta;
  wo.s_grid = c.s_grid;
  return build_weights(config_grid(c), {c.x0_x, c.x0_y}, c.lambda, c.carleman_T, c.carleman_nt, wo);
}

inline MeasurementOptions config_measurement(const ExperimentConfig& c) {
  MeasurementOptions mo;
  mo.taylor_order = c.taylor_order;
  mo.noise_level = c.noise_level;
  mo.noise_seed = mix_seed(c.seed, 1000);
  mo.threads = c.threads;
  return mo;
}

inline std::string csv(const ExperimentConfig& c, const std::string& body) { return output_header(c) + "\n" + body; }

inline ScalarField eigenmode(const Grid& g) {
  return ScalarField::from_function(g, [&](double x, double y) {
    return std::sin(std::numbers::pi * x / g.lx()) * std::sin(std::numbers::pi * y / g.ly());
  });
}

/// Prefixes an error message while keeping its category.
template <class Fn>
auto with_context(const std::string& what, Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    throw ConfigError(what + ": " + e.what());
  } catch (const PreconditionError& e) {
    throw PreconditionError(what + ": " + e.what());
  } catch (const NumericalError& e) {
    throw NumericalError(what + ": " + e.what());
  }
}

// --- commands ---------------------------------------------------------------

inline void run_forward(const ExperimentConfig& c, OutputDir& out) {
  const Grid g = config_grid(c);
  CoefficientSet coef;
  TwoStateField u0;
  if (c.initial == "eigenmode") {
    coef = zero_coefficients(g, c.bound_m);
    u0 = TwoStateField(eigenmode(g), ScalarField(g));
  } else {
    coef = config_sample(c, 0);
    u0 = build_probe_set(g).probes[static_cast<std::size_t>(c.probe - 1)];
  }
  const HamiltonianOperator h(coef);
  const BoundaryData bd = compatibility_boundary_data(h, u0, c.taylor_order, uniform_times(c.T, c.nt));
  const Trajectory traj = solve_ibvp(h, u0, bd, c.T, c.nt);
  write_trajectory(out / "trajectory", traj, output_header(c));
  write_coefficients(out / "coefficients", coef, output_header(c));
  std::ostringstream os;
  os << "t_index,t,norm\n";
  for (int n = 0; n <= traj.nt; ++n)
    os << n << ',' << fmt(traj.time(n)) << ',' << fmt(l2_norm(traj[static_cast<std::size_t>(n)])) << '\n';
  out.write("norms.csv", csv(c, os.str()));
}

inline void run_carleman_check(const ExperimentConfig& c, OutputDir& out) {
  const CarlemanWeights w = config_weights(c);
  const BetaConditions bc = check_beta_conditions(w);
  const CarlemanCheckReport rep = carleman_check(w, c.samples, c.seed);
  {
    std::ofstream f(out / "carleman.csv", std::ios::binary);
    write_carleman_csv(f, rep, output_header(c));
  }
  std::ostringstream tr;
  tr << "sample,s,log_lhs,log_rhs,holds\n";
  double slope_min = std::numeric_limits<double>::infinity(), slope_max = -slope_min;
  for (int smp = 0; smp < c.samples; ++smp) {
    Rng rng(mix_seed(c.seed, static_cast<std::uint64_t>(smp)));
    const SpaceTimeField u = random_space_time_sample(w.grid, w.T, w.nt, rng);
    for (double s : w.s_grid) {
      const InitialTraceBound b = check_initial_trace_bound(w, s, u);
      tr << smp << ',' << fmt(s) << ',' << fmt(b.lhs.log()) << ',' << fmt(b.rhs.log()) << ','
         << (b.holds() ? 1 : 0) << '\n';
    }
    std::vector<double> logs;
    for (const auto& row : rep.rows)
      if (row.sample == smp) logs.push_back(CarlemanCheckReport::normalized_log(row.terms.s3, row.normalization));
    if (w.s_grid.size() >= 2) {
      const double sl = log_log_slope(w.s_grid, logs);
      slope_min = std::min(slope_min, sl);
      slope_max = std::max(slope_max, sl);
    }
  }
  out.write("initial_trace.csv", csv(c, tr.str()));
  std::ostringstream cs;
  cs << "key,value\n"
     << "c0," << fmt(bc.c0) << "\nc0_numeric," << fmt(bc.c0_numeric) << "\neps_pc," << fmt(bc.eps_pc)
     << "\neps_numeric," << fmt(bc.eps_numeric) << "\nlambda0," << fmt(bc.lambda0) << "\nK," << fmt(w.K)
     << "\nstrict_lambda_bound," << fmt(rep.strict_bound) << "\ngamma0_nodes," << w.gamma0.size()
     << "\nstabilized," << (rep.stabilized ? 1 : 0);
  if (w.s_grid.size() >= 2) cs << "\ns3_slope_min," << fmt(slope_min) << "\ns3_slope_max," << fmt(slope_max);
  cs << '\n';
  out.write("conditions.csv", csv(c, cs.str()));
}

inline void run_probe_check(const ExperimentConfig& c, OutputDir& out) {
  const ProbeSet p = build_probe_set(config_grid(c), c.d);
  static const char* coord_names[] = {"x", "y"};
  std::ostringstream os;
  os << "probe,label,axis,u0_plus,u0_minus\n";
  for (std::size_t k = 0; k < p.size(); ++k) {
    std::string up = "0", um = "0";
    const std::string xj = p.axis[k] >= 0 ? coord_names[p.axis[k]] : "";
    switch (p.labels[k]) {
      case ProbeLabel::constant_pair: (k == p.index_of(ProbeLabel::constant_pair) ? up : um) = "1"; break;
      case ProbeLabel::coord_plus: up = xj; break;
      case ProbeLabel::coord_minus: um = xj; break;
      case ProbeLabel::coord_both: up = um = xj; break;
    }
    os << k + 1 << ',' << to_string(p.labels[k]) << ',' << (p.axis[k] >= 0 ? xj : "-") << ',' << up << ',' << um
       << '\n';
  }
  out.write("probes.csv", csv(c, os.str()));
  out.write("upsilon0.csv", csv(c, "key,value\nupsilon0," + fmt(p.upsilon0) + "\n"));
}

inline void run_simulate(const ExperimentConfig& c, OutputDir& out) {
  const CoefficientSet coef = config_sample(c, 0);
  const ProbeSet p = build_probe_set(coef.grid(), c.d);
  const CarlemanWeights w = config_weights(c);
  const auto recs = simulate_measurements(coef, p, w, c.T, c.nt, config_measurement(c));
  for (const auto& r : recs) {
    std::ofstream f(out / ("measurement_" + std::to_string(r.probe + 1) + ".csv"), std::ios::binary);
    write_measurement_csv(f, r, output_header(c));
  }
  write_coefficients(out / "coefficients", coef, output_header(c));
}

inline void run_stability(const ExperimentConfig& c, OutputDir& out) {
  const Grid g = config_grid(c);
  const ProbeSet p = build_probe_set(g, c.d);
  const CarlemanWeights w = config_weights(c);
  MeasurementOptions mo = config_measurement(c);
  std::ostringstream os;
  write_stability_csv_header(os, p.size());
  for (int k = 0; k < c.pair_count; ++k) {
    with_context("pair " + std::to_string(k + 1), [&] {
      const CoefficientSet c1 = config_sample(c, 2 * static_cast<std::uint64_t>(k));
      const CoefficientSet c2 = config_sample(c, 2 * static_cast<std::uint64_t>(k) + 1);
      mo.noise_seed = mix_seed(c.seed, 1000 + 2 * static_cast<std::uint64_t>(k));
      const auto m1 = simulate_measurements(c1, p, w, c.T, c.nt, mo);
      mo.noise_seed = mix_seed(c.seed, 1001 + 2 * static_cast<std::uint64_t>(k));
      const auto m2 = simulate_measurements(c2, p, w, c.T, c.nt, mo);
      write_stability_rows(os, k + 1, stability_report(c1, c2, m1, m2, w, p));
      return 0;
    });
  }
  out.write("stability.csv", csv(c, os.str()));
}

inline std::string component_error_csv(const std::array<double, 6>& e) {
  static const char* names[] = {"a_plus", "a_minus", "q_plus", "q_minus", "phi_vec", "phi_scal"};
  std::ostringstream os;
  os << "component,relative_l2_error\n";
  for (std::size_t k = 0; k < e.size(); ++k) os << names[k] << ',' << fmt(e[k]) << '\n';
  return os.str();
}

inline void run_reconstruct(const ExperimentConfig& c, OutputDir& out) {
  const Grid g = config_grid(c);
  const ProbeSet p = build_probe_set(g, c.d);
  if (c.method == "algebraic") {
    const CoefficientSet c1 = config_sample(c, 0);
    const CoefficientSet c2 = config_sample(c, 1);
    std::vector<TwoStateField> v0(p.size());
    parallel_for(p.size(), c.threads, [&](std::size_t k) {
      v0[k] = with_context("probe " + std::to_string(k + 1),
                           [&] { return v0_from_dual_solves(c1, c2, p.probes[k], c.T, c.nt, c.taylor_order); });
    });
    const AlgebraicResult r = algebraic_reconstruct(v0, c1.a_plus, c1.a_minus, p);
    write_coefficients(out / "coefficients", add_scaled(c1, r.delta, -1.0), output_header(c));
    out.write("errors.csv", csv(c, component_error_csv(component_errors(r.delta, difference(c1, c2)))));
    std::ostringstream d;
    d << "key,value\nconsistency_residual," << fmt(r.consistency_residual) << "\nphi_discrepancy,"
      << fmt(r.phi_discrepancy) << "\nimaginary_residual," << fmt(r.imaginary_residual) << "\nconsistent,"
      << (r.consistent ? 1 : 0) << '\n';
    out.write("diagnostics.csv", csv(c, d.str()));
    return;
  }
  const CoefficientSet known = config_reference(c);
  const SineBasis basis(g, c.basis_size, known.flatness_order);
  std::vector<double> theta_true(static_cast<std::size_t>(basis.size()), 0.0);
  CoefficientSet truth;
  if (c.truth == "basis") {
    theta_true[static_cast<std::size_t>(c.truth_index)] = c.truth_value;
    truth = add_scaled(known, basis.expand(theta_true, known));
  } else {
    truth = config_sample(c, 0);
  }
  const CarlemanWeights w = config_weights(c);
  const auto obs = simulate_measurements(truth, p, w, c.T, c.nt, config_measurement(c));
  LsqOptions lo;
  lo.basis_size = c.basis_size;
  lo.iterations = c.iterations;
  lo.reg = c.reg;
  lo.T = c.T;
  lo.nt = c.nt;
  lo.taylor_order = c.taylor_order;
  lo.threads = c.threads;
  const LsqResult r = lsq_reconstruct(obs, known, p, w, lo);
  write_coefficients(out / "coefficients", r.estimate, output_header(c));
  out.write("errors.csv",
            csv(c, component_error_csv(component_errors(r.delta, difference(truth, known)))));
  std::ostringstream h;
  h << "iteration,objective\n";
  for (std::size_t k = 0; k < r.objective_history.size(); ++k) h << k << ',' << fmt(r.objective_history[k]) << '\n';
  out.write("history.csv", csv(c, h.str()));
  std::ostringstream d;
  d << "key,value\niterations," << r.iterations << "\nconverged," << (r.converged ? 1 : 0) << "\nfinal_residual,"
    << fmt(r.final_residual) << '\n';
  if (c.truth == "basis") {
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < theta_true.size(); ++k) {
      num += std::pow(r.theta[k] - theta_true[k], 2);
      den += theta_true[k] * theta_true[k];
    }
    d << "theta_relative_error," << fmt(den > 0.0 ? std::sqrt(num / den) : std::sqrt(num)) << '\n';
  }
  out.write("diagnostics.csv", csv(c, d.str()));
}

// --- selftest -----------------------------------------------------------------

struct SelftestCheck {
  std::string name;
  double value = 0.0;
  double threshold = 0.0;
  bool pass = false;
};

inline double relative(double err, double ref) { return ref > 0.0 ? err / ref : err; }

/// Invariant suite on the configured grid; each entry is value <= threshold.
inline std::vector<SelftestCheck> selftest_checks(const ExperimentConfig& c, std::ostream& log) {
  std::vector<SelftestCheck> checks;
  auto add = [&](const std::string& name, double value, double threshold) {
    checks.push_back({name, value, threshold, value <= threshold});
    log << (checks.back().pass ? "PASS " : "FAIL ") << name << " value=" << fmt(value)
        << " threshold=" << fmt(threshold) << '\n';
  };
  const Grid g = config_grid(c);
  const CoefficientSet c1 = config_sample(c, 0), c2 = config_sample(c, 1), c3 = config_sample(c, 2);

  const HamiltonianOperator h1(c1);
  add("hermitian_asymmetry", h1.hermitian_asymmetry(), 1e-12);
  add("selfadjoint_defect", check_selfadjoint(h1, 8, c.seed), 1e-12);
  add("phi_divergence", interior_divergence_sup(c1.phi_vec), kDivergenceTolerance);

  {
    const int nt = 8 * std::max(c.nx, c.ny);
    const double T = 0.1;
    const HamiltonianOperator h0(zero_coefficients(g));
    const TwoStateField u0(eigenmode(g), ScalarField(g));
    const Trajectory tr = solve_ibvp(h0, u0, zero_boundary_data(h0, static_cast<std::size_t>(nt) + 1), T, nt);
    const double omega = std::pow(std::numbers::pi, 2) * (1.0 / (g.lx() * g.lx()) + 1.0 / (g.ly() * g.ly()));
    const TwoStateField exact = u0 * std::exp(cplx(0.0, -omega * T));
    const double h_ratio = 32.0 / std::max(c.nx, c.ny);
    add("eigenmode_phase_error", relative(l2_norm(tr.states.back() - exact), l2_norm(exact)),
        3e-3 * h_ratio * h_ratio);
    const HamiltonianOperator hc(c1);
    const Trajectory tc = solve_ibvp(hc, u0, zero_boundary_data(hc, static_cast<std::size_t>(nt) + 1), T, nt);
    double drift = 0.0;
    for (const auto& s : tc.states) drift = std::max(drift, std::abs(l2_norm(s) - l2_norm(u0)));
    add("norm_drift", relative(drift, l2_norm(u0)), 1e-9);
  }

  {
    int violations = 0;
    std::uint64_t stream = 7;
    for (double eps : {0.5, 0.1})
      violations += check_relative_bound(c1.a_plus, c1.phi_vec, eps, 20, mix_seed(c.seed, stream++)).violations;
    add("relative_bound_violations", violations, 0.0);
  }

  {
    WeightOptions wo;
    wo.normalize_beta = false;
    const CarlemanWeights w = build_weights(g, {c.x0_x, c.x0_y}, c.lambda, 1.0, 16, wo);
    const BetaConditions bc = check_beta_conditions(w);
    add("beta_eps_pc_mismatch", std::abs(bc.eps_numeric - 2.0), 1e-8);
    add("beta_lambda0", bc.lambda0, 0.0);
  }

  const ProbeSet p = build_probe_set(g, c.d);
  add("probe_degeneracy", kProbeDegeneracy / p.upsilon0, 1.0);

  {
    double worst = 0.0;
    for (const auto& u0 : p.probes) {
      const TwoStateField lhs = v0_exact(c1, c2, u0) + v0_exact(c2, c3, u0);
      const TwoStateField rhs = v0_exact(c1, c3, u0);
      worst = std::max(worst, relative(l2_norm(lhs - rhs), l2_norm(rhs)));
    }
    add("v0_linearity", worst, 1e-12);
    std::vector<TwoStateField> v0;
    for (const auto& u0 : p.probes) v0.push_back(v0_exact(c1, c2, u0));
    const AlgebraicResult r = algebraic_reconstruct(v0, c1.a_plus, c1.a_minus, p);
    const auto e = component_errors(r.delta, difference(c1, c2));
    add("algebraic_round_trip", *std::max_element(e.begin(), e.end()), 1e-10);
  }

  {
    const CarlemanWeights w = config_weights(c);
    add("h_s_at_zero_vs_distance",
        relative(std::abs(h_s_functional(c1, c2, w, 0.0) - coefficient_distance(c1, c2)),
                 coefficient_distance(c1, c2)),
        1e-13);
    int fails = 0;
    for (int smp = 0; smp < 3; ++smp) {
      Rng rng(mix_seed(c.seed, 100 + static_cast<std::uint64_t>(smp)));
      const SpaceTimeField u = random_space_time_sample(w.grid, w.T, w.nt, rng);
      for (double s : {4.0, 8.0, 16.0})
        if (!check_initial_trace_bound(w, s, u).holds()) ++fails;
    }
    add("initial_trace_failures", fails, 0.0);

    MeasurementOptions mo = config_measurement(c);
    mo.noise_level = 0.0;
    const int nt = std::min(c.nt, 32);
    const auto m1 = simulate_measurements(c1, p, w, c.T, nt, mo);
    const auto m1b = simulate_measurements(c1, p, w, c.T, nt, mo);
    double diff = 0.0;
    for (std::size_t k = 0; k < m1.size(); ++k) diff += record_distance_sq(m1[k], m1b[k], g);
    add("measurement_repeatability", diff, 0.0);
    const StabilityReport same = stability_report(c1, c1, m1, m1b, w, p);
    add("identical_pair_lhs", same.lhs, 0.0);
  }

  {
    const ExperimentConfig back = parse_config_text(canonical_config(c));
    add("config_round_trip", canonical_config(back) == canonical_config(c) ? 0.0 : 1.0, 0.0);
  }
  return checks;
}

inline bool run_selftest(const ExperimentConfig& c, OutputDir& out, std::ostream& log) {
  const auto checks = selftest_checks(c, log);
  std::ostringstream os;
  os << "check,value,threshold,pass\n";
  bool ok = true;
  for (const auto& ch : checks) {
    os << ch.name << ',' << fmt(ch.value) << ',' << fmt(ch.threshold) << ',' << (ch.pass ? 1 : 0) << '\n';
    ok = ok && ch.pass;
  }
  out.write("selftest.csv", csv(c, os.str()));
  return ok;
}

}  // namespace detail

/// Runs one command, writing into <output_dir>/<name>/. Returns the process exit
/// status; on any failure the command directory is removed.
inline int run_command(const std::string& name, const ExperimentConfig& cfg, std::ostream& log) {
  if (std::find(command_names().begin(), command_names().end(), name) == command_names().end()) {
    log << "error: unknown command '" << name << "'\n";
    return kExitConfig;
  }
  try {
    validate_config(cfg);
    detail::OutputDir out(std::filesystem::path(cfg.output_dir) / name);
    log << output_header(cfg) << " command=" << name << "\n" << canonical_config(cfg);
    out.write("config.ini", output_header(cfg) + "\n" + canonical_config(cfg));
    bool ok = true;
    if (name == "forward") detail::run_forward(cfg, out);
    else if (name == "carleman-check") detail::run_carleman_check(cfg, out);
    else if (name == "probe-check") detail::run_probe_check(cfg, out);
    else if (name == "simulate") detail::run_simulate(cfg, out);
    else if (name == "stability") detail::run_stability(cfg, out);
    else if (name == "reconstruct") detail::run_reconstruct(cfg, out);
    else ok = detail::run_selftest(cfg, out, log);
    out.commit();
    if (!ok) {
      log << "selftest failed\n";
      return kExitSelftest;
    }
    return kExitOk;
  } catch (const ConfigError& e) {
    log << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const PreconditionError& e) {
    log << "invalid input: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    log << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  }
}

}  // namespace mslab
