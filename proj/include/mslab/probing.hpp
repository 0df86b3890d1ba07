#pragma once

#include <Eigen/SVD>
#include <limits>
#include <string>
#include <vector>

#include "mslab/field.hpp"
#include "mslab/stencil.hpp"

namespace mslab {

enum class ProbeLabel { constant_pair, coord_plus, coord_minus, coord_both };

inline const char* to_string(ProbeLabel l) {
  switch (l) {
    case ProbeLabel::constant_pair: return "constant-pair";
    case ProbeLabel::coord_plus: return "coord-plus";
    case ProbeLabel::coord_minus: return "coord-minus";
    case ProbeLabel::coord_both: return "coord-both";
  }
  return "?";
}

/// Initial states u0^k, k = 0..3d+1 (zero-based):
/// 0: (1, 0); 1: (0, 1); 2..d+1: (x_j, 0); d+2..2d+1: (0, x_j); 2d+2..3d+1: (x_j, x_j).
struct ProbeSet {
  std::vector<TwoStateField> probes;
  std::vector<ProbeLabel> labels;
  std::vector<int> axis;  ///< coordinate index j for linear probes, -1 for constants
  double upsilon0 = 0.0;
  int d = kDim;

  std::size_t size() const { return probes.size(); }
  const Grid& grid() const { return probes.front().grid(); }

  /// Zero-based index of the probe with the given label and axis.
  std::size_t index_of(ProbeLabel label, int j = -1) const {
    for (std::size_t k = 0; k < probes.size(); ++k)
      if (labels[k] == label && axis[k] == j) return k;
    throw PreconditionError(std::string("probe set lacks a ") + to_string(label) + " probe");
  }
};

inline constexpr double kProbeDegeneracy = 1e-12;

/// Smallest singular value of the map (A+, A-, Phi) -> {A+.grad u0+, A-.grad u0-,
/// Phi.grad u0-, Phi.grad u0+} stacked over the linear probes, minimised over
/// nodes; stores the result in p.upsilon0.
inline double check_probe_matrix(ProbeSet& p) {
  if (p.probes.empty()) throw PreconditionError("empty probe set");
  const Grid& g = p.grid();
  std::vector<std::pair<VectorField, VectorField>> grads;
  for (std::size_t k = 0; k < p.size(); ++k)
    if (p.labels[k] != ProbeLabel::constant_pair)
      grads.emplace_back(gradient(p.probes[k].plus), gradient(p.probes[k].minus));
  if (grads.empty()) throw PreconditionError("probe set has no linear probes");
  const int d = kDim;
  const auto rows = static_cast<Eigen::Index>(4 * grads.size());
  double smin = std::numeric_limits<double>::infinity();
  Eigen::MatrixXd m(rows, 3 * d);
  for (std::size_t node = 0; node < g.size(); ++node) {
    m.setZero();
    for (std::size_t k = 0; k < grads.size(); ++k) {
      const auto r = static_cast<Eigen::Index>(4 * k);
      for (int l = 0; l < d; ++l) {
        const double gp = grads[k].first[l][node].real();
        const double gm = grads[k].second[l][node].real();
        m(r, l) = gp;              // A+ . grad u0+
        m(r + 1, d + l) = gm;      // A- . grad u0-
        m(r + 2, 2 * d + l) = gm;  // Phi . grad u0-
        m(r + 3, 2 * d + l) = gp;  // Phi . grad u0+
      }
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
    smin = std::min(smin, svd.singularValues().minCoeff());
  }
  if (!(smin > kProbeDegeneracy))
    throw PreconditionError("degenerate probe set: smallest singular value " + std::to_string(smin));
  p.upsilon0 = smin;
  return smin;
}

inline ProbeSet build_probe_set(const Grid& grid, int d = kDim) {
  if (d != kDim) throw PreconditionError("probe construction is compiled for d = 2");
  ProbeSet p;
  p.d = d;
  const ScalarField one(grid, 1.0), zero(grid);
  auto coord = [&](int j) {
    return ScalarField::from_function(grid, [j](double x, double y) { return j == 0 ? x : y; });
  };
  auto add = [&](ScalarField a, ScalarField b, ProbeLabel l, int j) {
    p.probes.emplace_back(std::move(a), std::move(b));
    p.labels.push_back(l);
    p.axis.push_back(j);
  };
  add(one, zero, ProbeLabel::constant_pair, -1);
  add(zero, one, ProbeLabel::constant_pair, -1);
  for (int j = 0; j < d; ++j) add(coord(j), zero, ProbeLabel::coord_plus, j);
  for (int j = 0; j < d; ++j) add(zero, coord(j), ProbeLabel::coord_minus, j);
  for (int j = 0; j < d; ++j) add(coord(j), coord(j), ProbeLabel::coord_both, j);
  check_probe_matrix(p);
  return p;
}

}  // namespace mslab
