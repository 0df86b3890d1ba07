#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <variant>
#include <vector>

#include "mslab/field.hpp"
#include "mslab/stencil.hpp"

namespace mslab {

/// A nonnegative real m * exp(shift), used for integrals of exponentially
/// weighted integrands whose magnitude under- or overflows a double.
struct ScaledValue {
  double mantissa = 0.0;
  double shift = 0.0;

  double value() const { return mantissa == 0.0 ? 0.0 : mantissa * std::exp(shift); }
  double log() const {
    return mantissa == 0.0 ? -std::numeric_limits<double>::infinity() : std::log(mantissa) + shift;
  }
  bool is_zero() const { return mantissa == 0.0; }

  static ScaledValue from_log(double log_value) {
    if (std::isinf(log_value) && log_value < 0) return {};
    return {1.0, log_value};
  }

  friend ScaledValue operator+(const ScaledValue& a, const ScaledValue& b) {
    if (a.is_zero()) return b;
    if (b.is_zero()) return a;
    if (a.shift >= b.shift) return {a.mantissa + b.mantissa * std::exp(b.shift - a.shift), a.shift};
    return {b.mantissa + a.mantissa * std::exp(a.shift - b.shift), b.shift};
  }
  friend ScaledValue operator*(double s, const ScaledValue& a) { return {s * a.mantissa, a.shift}; }
};

/// Ratio a/b formed in log space (inf when b is zero and a is not, 0 when both are).
inline double ratio(const ScaledValue& a, const ScaledValue& b) {
  if (a.is_zero()) return 0.0;
  if (b.is_zero()) return std::numeric_limits<double>::infinity();
  return std::exp(a.log() - b.log());
}

/// Accumulates sum_k w_k * exp(2 g_k) * |v_k|^2 with g_k a log-weight (may be -inf).
class WeightedAccumulator {
 public:
  void add(double weight, double log_weight, double abs_sq) {
    if (weight == 0.0 || abs_sq == 0.0 || (std::isinf(log_weight) && log_weight < 0)) return;
    const double e = 2.0 * log_weight;
    if (!started_) {
      shift_ = e;
      started_ = true;
    } else if (e > shift_) {
      sum_ *= std::exp(shift_ - e);
      shift_ = e;
    }
    sum_ += weight * abs_sq * std::exp(e - shift_);
  }
  void add(double weight, double abs_sq) { add(weight, 0.0, abs_sq); }
  ScaledValue result() const { return started_ ? ScaledValue{sum_, shift_} : ScaledValue{}; }

 private:
  bool started_ = false;
  double shift_ = 0.0;
  double sum_ = 0.0;
};

struct RegionInterior {};
struct RegionAll {};
struct RegionBoundary {
  std::vector<std::size_t> nodes;
};
using Region = std::variant<RegionInterior, RegionAll, RegionBoundary>;

namespace detail {

template <class AbsSq>
double integrate_region(const Grid& g, const Region& region, AbsSq&& abs_sq) {
  double acc = 0.0;
  if (std::holds_alternative<RegionAll>(region)) {
    for (std::size_t k = 0; k < g.size(); ++k) acc += g.area_weight(k) * abs_sq(k);
  } else if (std::holds_alternative<RegionInterior>(region)) {
    for (std::size_t k : g.interior_nodes()) acc += g.area_weight(k) * abs_sq(k);
  } else {
    const auto& nodes = std::get<RegionBoundary>(region).nodes;
    if (nodes.empty()) throw PreconditionError("l2_norm over an empty region");
    for (std::size_t k : nodes) {
      detail::require(k < g.size() && g.is_boundary(k), "boundary region lists a non-boundary node");
      acc += g.boundary_weight(k) * abs_sq(k);
    }
  }
  return acc;
}

}  // namespace detail

/// Squared trapezoid L2 norm over a region.
inline double l2_norm_sq(const ScalarField& f, const Region& region = RegionAll{}) {
  return detail::integrate_region(f.grid(), region, [&](std::size_t k) { return std::norm(f[k]); });
}

inline double l2_norm_sq(const VectorField& v, const Region& region = RegionAll{}) {
  return detail::integrate_region(v.grid(), region,
                                  [&](std::size_t k) { return std::norm(v[0][k]) + std::norm(v[1][k]); });
}

inline double l2_norm(const ScalarField& f, const Region& region = RegionAll{}) {
  return std::sqrt(l2_norm_sq(f, region));
}
inline double l2_norm(const VectorField& v, const Region& region = RegionAll{}) {
  return std::sqrt(l2_norm_sq(v, region));
}

/// Trapezoid integral of a field over the whole rectangle.
inline cplx integrate(const ScalarField& f) {
  cplx acc = 0.0;
  for (std::size_t k = 0; k < f.size(); ++k) acc += f.grid().area_weight(k) * f[k];
  return acc;
}

/// One-sided second-order outward normal derivative at each listed boundary node.
inline std::vector<cplx> neumann_trace(const ScalarField& f, std::span<const std::size_t> subset) {
  const Grid& g = f.grid();
  std::vector<cplx> out;
  out.reserve(subset.size());
  const int nx = g.nx(), ny = g.ny();
  for (std::size_t node : subset) {
    if (node >= g.size() || !g.is_boundary(node)) throw PreconditionError("neumann_trace subset contains an interior node");
    const int i = g.col(node), j = g.row(node);
    switch (*g.face_of(node)) {
      case Face::left:
        out.push_back(-(-3.0 * f.at(0, j) + 4.0 * f.at(1, j) - f.at(2, j)) / (2.0 * g.hx()));
        break;
      case Face::right:
        out.push_back((3.0 * f.at(nx - 1, j) - 4.0 * f.at(nx - 2, j) + f.at(nx - 3, j)) / (2.0 * g.hx()));
        break;
      case Face::bottom:
        out.push_back(-(-3.0 * f.at(i, 0) + 4.0 * f.at(i, 1) - f.at(i, 2)) / (2.0 * g.hy()));
        break;
      case Face::top:
        out.push_back((3.0 * f.at(i, ny - 1) - 4.0 * f.at(i, ny - 2) + f.at(i, ny - 3)) / (2.0 * g.hy()));
        break;
    }
  }
  return out;
}

/// Trapezoid weights of a uniform time grid with nt steps.
inline std::vector<double> time_weights(int nt, double dt) {
  std::vector<double> w(static_cast<std::size_t>(nt) + 1, dt);
  w.front() = 0.5 * dt;
  w.back() = 0.5 * dt;
  return w;
}

}  // namespace mslab
