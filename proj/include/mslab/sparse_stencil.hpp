#pragma once

#include <Eigen/Sparse>
#include <vector>

#include "mslab/field.hpp"

namespace mslab {

using SpMat = Eigen::SparseMatrix<cplx, Eigen::ColMajor, int>;
using SpMatReal = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;
using CVec = Eigen::VectorXcd;

namespace detail {

using Triplet = Eigen::Triplet<double, int>;

/// 1-D first-derivative stencil rows identical to `partial`.
inline void first_derivative_triplets(std::vector<Triplet>& t, int n, double h,
                                      const std::function<int(int)>& node) {
  const double c = 0.5 / h;
  t.emplace_back(node(0), node(0), -3.0 * c);
  t.emplace_back(node(0), node(1), 4.0 * c);
  t.emplace_back(node(0), node(2), -c);
  for (int i = 1; i < n - 1; ++i) {
    t.emplace_back(node(i), node(i + 1), c);
    t.emplace_back(node(i), node(i - 1), -c);
  }
  t.emplace_back(node(n - 1), node(n - 1), 3.0 * c);
  t.emplace_back(node(n - 1), node(n - 2), -4.0 * c);
  t.emplace_back(node(n - 1), node(n - 3), c);
}

inline void second_derivative_triplets(std::vector<Triplet>& t, int n, double h,
                                       const std::function<int(int)>& node) {
  const double c = 1.0 / (h * h);
  t.emplace_back(node(0), node(0), 2.0 * c);
  t.emplace_back(node(0), node(1), -5.0 * c);
  t.emplace_back(node(0), node(2), 4.0 * c);
  t.emplace_back(node(0), node(3), -c);
  for (int i = 1; i < n - 1; ++i) {
    t.emplace_back(node(i), node(i + 1), c);
    t.emplace_back(node(i), node(i), -2.0 * c);
    t.emplace_back(node(i), node(i - 1), c);
  }
  t.emplace_back(node(n - 1), node(n - 1), 2.0 * c);
  t.emplace_back(node(n - 1), node(n - 2), -5.0 * c);
  t.emplace_back(node(n - 1), node(n - 3), 4.0 * c);
  t.emplace_back(node(n - 1), node(n - 4), -c);
}

}  // namespace detail

/// Full-grid matrix of `partial(., axis)`.
inline SpMatReal derivative_matrix(const Grid& g, int axis) {
  std::vector<detail::Triplet> t;
  const int n = static_cast<int>(g.size());
  t.reserve(static_cast<std::size_t>(n) * 2 + 8 * static_cast<std::size_t>(g.nx() + g.ny()));
  if (axis == 0) {
    for (int j = 0; j < g.ny(); ++j)
      detail::first_derivative_triplets(t, g.nx(), g.hx(), [&](int i) { return static_cast<int>(g.index(i, j)); });
  } else {
    for (int i = 0; i < g.nx(); ++i)
      detail::first_derivative_triplets(t, g.ny(), g.hy(), [&](int j) { return static_cast<int>(g.index(i, j)); });
  }
  SpMatReal m(n, n);
  m.setFromTriplets(t.begin(), t.end());
  return m;
}

/// Full-grid matrix of `laplacian`.
inline SpMatReal laplacian_matrix(const Grid& g) {
  std::vector<detail::Triplet> t;
  const int n = static_cast<int>(g.size());
  for (int j = 0; j < g.ny(); ++j)
    detail::second_derivative_triplets(t, g.nx(), g.hx(), [&](int i) { return static_cast<int>(g.index(i, j)); });
  for (int i = 0; i < g.nx(); ++i)
    detail::second_derivative_triplets(t, g.ny(), g.hy(), [&](int j) { return static_cast<int>(g.index(i, j)); });
  SpMatReal m(n, n);
  m.setFromTriplets(t.begin(), t.end());
  return m;
}

inline CVec to_vector(const ScalarField& f) {
  return Eigen::Map<const CVec>(f.values().data(), static_cast<Eigen::Index>(f.size()));
}

inline ScalarField from_vector(const Grid& g, const CVec& v) {
  return ScalarField(g, std::vector<cplx>(v.data(), v.data() + v.size()));
}

/// Selection matrix picking `nodes` out of the full grid (rows = nodes.size()).
inline SpMatReal selection_matrix(const std::vector<std::size_t>& nodes, std::size_t full) {
  std::vector<detail::Triplet> t;
  t.reserve(nodes.size());
  for (std::size_t r = 0; r < nodes.size(); ++r) t.emplace_back(static_cast<int>(r), static_cast<int>(nodes[r]), 1.0);
  SpMatReal m(static_cast<int>(nodes.size()), static_cast<int>(full));
  m.setFromTriplets(t.begin(), t.end());
  return m;
}

}  // namespace mslab
