#pragma once

#include <variant>

#include "mslab/field.hpp"

namespace mslab {

// Second-order finite differences: central at interior nodes, one-sided at
// the two ends of every grid line.

namespace detail {

/// First derivative of a strided 1-D line of n samples.
template <class In, class Out>
void first_derivative_line(const In* f, Out* out, int n, std::size_t stride, double h) {
  const double c = 0.5 / h;
  out[0] = c * (-3.0 * f[0] + 4.0 * f[stride] - f[2 * stride]);
  for (int i = 1; i < n - 1; ++i) {
    const std::size_t k = static_cast<std::size_t>(i) * stride;
    out[k] = c * (f[k + stride] - f[k - stride]);
  }
  const std::size_t e = static_cast<std::size_t>(n - 1) * stride;
  out[e] = c * (3.0 * f[e] - 4.0 * f[e - stride] + f[e - 2 * stride]);
}

/// Second derivative of a strided 1-D line of n samples.
template <class In, class Out>
void second_derivative_line(const In* f, Out* out, int n, std::size_t stride, double h) {
  const double c = 1.0 / (h * h);
  out[0] = c * (2.0 * f[0] - 5.0 * f[stride] + 4.0 * f[2 * stride] - f[3 * stride]);
  for (int i = 1; i < n - 1; ++i) {
    const std::size_t k = static_cast<std::size_t>(i) * stride;
    out[k] = c * (f[k + stride] - 2.0 * f[k] + f[k - stride]);
  }
  const std::size_t e = static_cast<std::size_t>(n - 1) * stride;
  out[e] = c * (2.0 * f[e] - 5.0 * f[e - stride] + 4.0 * f[e - 2 * stride] - f[e - 3 * stride]);
}

}  // namespace detail

/// d/dx (axis 0) or d/dy (axis 1).
inline ScalarField partial(const ScalarField& f, int axis) {
  const Grid& g = f.grid();
  ScalarField out(g);
  const cplx* in = f.values().data();
  cplx* res = out.values().data();
  if (axis == 0) {
    for (int j = 0; j < g.ny(); ++j)
      detail::first_derivative_line(in + g.index(0, j), res + g.index(0, j), g.nx(), 1, g.hx());
  } else {
    const auto stride = static_cast<std::size_t>(g.nx());
    for (int i = 0; i < g.nx(); ++i)
      detail::first_derivative_line(in + i, res + i, g.ny(), stride, g.hy());
  }
  return out;
}

/// d^2/dx^2 (axis 0) or d^2/dy^2 (axis 1).
inline ScalarField second_partial(const ScalarField& f, int axis) {
  const Grid& g = f.grid();
  ScalarField out(g);
  const cplx* in = f.values().data();
  cplx* res = out.values().data();
  if (axis == 0) {
    for (int j = 0; j < g.ny(); ++j)
      detail::second_derivative_line(in + g.index(0, j), res + g.index(0, j), g.nx(), 1, g.hx());
  } else {
    const auto stride = static_cast<std::size_t>(g.nx());
    for (int i = 0; i < g.nx(); ++i)
      detail::second_derivative_line(in + i, res + i, g.ny(), stride, g.hy());
  }
  return out;
}

inline VectorField gradient(const ScalarField& f) {
  return VectorField(partial(f, 0), partial(f, 1), FieldKind::complex);
}

inline ScalarField divergence(const VectorField& v) { return partial(v[0], 0) + partial(v[1], 1); }

inline ScalarField laplacian(const ScalarField& f) { return second_partial(f, 0) + second_partial(f, 1); }

enum class DiffMode { gradient, divergence, laplacian };

using AnyField = std::variant<ScalarField, VectorField>;

/// Mode-dispatched entry point; rejects mode/kind mismatches.
inline AnyField diff_ops(const AnyField& field, DiffMode mode) {
  switch (mode) {
    case DiffMode::gradient:
      if (const auto* s = std::get_if<ScalarField>(&field)) return gradient(*s);
      throw PreconditionError("gradient needs a scalar field");
    case DiffMode::divergence:
      if (const auto* v = std::get_if<VectorField>(&field)) return divergence(*v);
      throw PreconditionError("divergence needs a vector field");
    case DiffMode::laplacian:
      if (const auto* s = std::get_if<ScalarField>(&field)) return laplacian(*s);
      throw PreconditionError("laplacian needs a scalar field");
  }
  throw PreconditionError("unknown differential operator");
}

}  // namespace mslab
