#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <functional>
#include <vector>

#include "mslab/grid.hpp"

namespace mslab {

using cplx = std::complex<double>;

/// One complex value per grid node.
class ScalarField {
 public:
  ScalarField() = default;
  explicit ScalarField(const Grid& g, cplx fill = 0.0) : grid_(g), values_(g.size(), fill) {}
  ScalarField(const Grid& g, std::vector<cplx> values) : grid_(g), values_(std::move(values)) {
    detail::require(values_.size() == grid_.size(), "scalar field value count must equal nx*ny");
  }

  template <class F>
  static ScalarField from_function(const Grid& g, F&& f) {
    ScalarField out(g);
    for (std::size_t k = 0; k < g.size(); ++k) {
      const Point p = g.point(k);
      out.values_[k] = cplx(f(p[0], p[1]));
    }
    return out;
  }

  const Grid& grid() const { return grid_; }
  std::size_t size() const { return values_.size(); }
  cplx& operator[](std::size_t k) { return values_[k]; }
  const cplx& operator[](std::size_t k) const { return values_[k]; }
  cplx& at(int i, int j) { return values_[grid_.index(i, j)]; }
  const cplx& at(int i, int j) const { return values_[grid_.index(i, j)]; }
  std::vector<cplx>& values() { return values_; }
  const std::vector<cplx>& values() const { return values_; }

  bool all_finite() const {
    return std::all_of(values_.begin(), values_.end(),
                       [](cplx v) { return std::isfinite(v.real()) && std::isfinite(v.imag()); });
  }

  double sup_norm() const {
    double m = 0.0;
    for (const auto& v : values_) m = std::max(m, std::abs(v));
    return m;
  }

  ScalarField conj() const {
    ScalarField out(grid_);
    for (std::size_t k = 0; k < size(); ++k) out.values_[k] = std::conj(values_[k]);
    return out;
  }

  ScalarField& operator+=(const ScalarField& o) {
    require_same_grid(grid_, o.grid_);
    for (std::size_t k = 0; k < size(); ++k) values_[k] += o.values_[k];
    return *this;
  }
  ScalarField& operator-=(const ScalarField& o) {
    require_same_grid(grid_, o.grid_);
    for (std::size_t k = 0; k < size(); ++k) values_[k] -= o.values_[k];
    return *this;
  }
  ScalarField& operator*=(cplx s) {
    for (auto& v : values_) v *= s;
    return *this;
  }
  /// Pointwise product.
  ScalarField& operator*=(const ScalarField& o) {
    require_same_grid(grid_, o.grid_);
    for (std::size_t k = 0; k < size(); ++k) values_[k] *= o.values_[k];
    return *this;
  }

  friend ScalarField operator+(ScalarField a, const ScalarField& b) { return a += b; }
  friend ScalarField operator-(ScalarField a, const ScalarField& b) { return a -= b; }
  friend ScalarField operator*(ScalarField a, cplx s) { return a *= s; }
  friend ScalarField operator*(cplx s, ScalarField a) { return a *= s; }
  friend ScalarField operator*(ScalarField a, const ScalarField& b) { return a *= b; }
  friend ScalarField operator-(ScalarField a) { return a *= -1.0; }

 private:
  Grid grid_;
  std::vector<cplx> values_;
};

enum class FieldKind { real, complex };

/// A d-vector per node. Real-kind fields keep zero imaginary parts.
class VectorField {
 public:
  VectorField() = default;
  explicit VectorField(const Grid& g, FieldKind kind = FieldKind::complex)
      : kind_(kind), comps_{ScalarField(g), ScalarField(g)} {}
  VectorField(ScalarField x, ScalarField y, FieldKind kind = FieldKind::complex)
      : kind_(kind), comps_{std::move(x), std::move(y)} {
    require_same_grid(comps_[0].grid(), comps_[1].grid());
    if (kind_ == FieldKind::real) drop_imaginary();
  }

  template <class F>
  static VectorField from_function(const Grid& g, F&& f, FieldKind kind = FieldKind::real) {
    VectorField out(g, kind);
    for (std::size_t k = 0; k < g.size(); ++k) {
      const Point p = g.point(k);
      const auto v = f(p[0], p[1]);
      out.comps_[0][k] = cplx(v[0]);
      out.comps_[1][k] = cplx(v[1]);
    }
    if (kind == FieldKind::real) out.drop_imaginary();
    return out;
  }

  static VectorField constant(const Grid& g, Point v) {
    return VectorField(ScalarField(g, v[0]), ScalarField(g, v[1]), FieldKind::real);
  }

  const Grid& grid() const { return comps_[0].grid(); }
  FieldKind kind() const { return kind_; }
  bool is_real() const { return kind_ == FieldKind::real; }
  static constexpr int components() { return kDim; }
  ScalarField& operator[](int c) { return comps_[static_cast<std::size_t>(c)]; }
  const ScalarField& operator[](int c) const { return comps_[static_cast<std::size_t>(c)]; }

  /// Euclidean magnitude at one node.
  double magnitude(std::size_t node) const {
    return std::sqrt(std::norm(comps_[0][node]) + std::norm(comps_[1][node]));
  }
  double sup_norm() const {
    double m = 0.0;
    for (std::size_t k = 0; k < grid().size(); ++k) m = std::max(m, magnitude(k));
    return m;
  }
  bool all_finite() const { return comps_[0].all_finite() && comps_[1].all_finite(); }

  void drop_imaginary() {
    for (auto& c : comps_)
      for (auto& v : c.values()) v = cplx(v.real(), 0.0);
  }

  VectorField& operator+=(const VectorField& o) {
    for (int c = 0; c < kDim; ++c) (*this)[c] += o[c];
    return *this;
  }
  VectorField& operator-=(const VectorField& o) {
    for (int c = 0; c < kDim; ++c) (*this)[c] -= o[c];
    return *this;
  }
  VectorField& operator*=(double s) {
    for (int c = 0; c < kDim; ++c) (*this)[c] *= s;
    return *this;
  }
  friend VectorField operator+(VectorField a, const VectorField& b) { return a += b; }
  friend VectorField operator-(VectorField a, const VectorField& b) { return a -= b; }
  friend VectorField operator*(VectorField a, double s) { return a *= s; }
  friend VectorField operator*(double s, VectorField a) { return a *= s; }

 private:
  FieldKind kind_ = FieldKind::complex;
  std::array<ScalarField, kDim> comps_;
};

/// Nodewise a . b (no conjugation).
inline ScalarField dot(const VectorField& a, const VectorField& b) {
  return a[0] * b[0] + a[1] * b[1];
}

/// Nodewise a * v for a scalar field a.
inline VectorField scale(const ScalarField& a, const VectorField& v) {
  VectorField out(a * v[0], a * v[1], FieldKind::complex);
  return out;
}

/// The state pair (u+, u-) of the coupled system.
struct TwoStateField {
  ScalarField plus;
  ScalarField minus;

  TwoStateField() = default;
  TwoStateField(ScalarField p, ScalarField m) : plus(std::move(p)), minus(std::move(m)) {
    require_same_grid(plus.grid(), minus.grid());
  }
  explicit TwoStateField(const Grid& g) : plus(g), minus(g) {}

  const Grid& grid() const { return plus.grid(); }
  ScalarField& operator[](int kappa) { return kappa == 0 ? plus : minus; }
  const ScalarField& operator[](int kappa) const { return kappa == 0 ? plus : minus; }

  TwoStateField& operator+=(const TwoStateField& o) {
    plus += o.plus;
    minus += o.minus;
    return *this;
  }
  TwoStateField& operator-=(const TwoStateField& o) {
    plus -= o.plus;
    minus -= o.minus;
    return *this;
  }
  TwoStateField& operator*=(cplx s) {
    plus *= s;
    minus *= s;
    return *this;
  }
  friend TwoStateField operator+(TwoStateField a, const TwoStateField& b) { return a += b; }
  friend TwoStateField operator-(TwoStateField a, const TwoStateField& b) { return a -= b; }
  friend TwoStateField operator*(TwoStateField a, cplx s) { return a *= s; }
  friend TwoStateField operator*(cplx s, TwoStateField a) { return a *= s; }
};

}  // namespace mslab
