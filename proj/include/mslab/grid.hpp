#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <vector>

#include "mslab/error.hpp"

namespace mslab {

inline constexpr int kDim = 2;

using Point = std::array<double, kDim>;

enum class Face { left = 0, right = 1, bottom = 2, top = 3 };

/// Uniform node-centred discretisation of the rectangle [0, lx] x [0, ly].
///
/// Node (i, j) sits at (i * hx, j * hy) and has flat index i + nx * j (y outer).
/// Corner nodes belong to the x-faces (left/right).
class Grid {
 public:
  Grid() = default;

  double lx() const { return lx_; }
  double ly() const { return ly_; }
  int nx() const { return nx_; }
  int ny() const { return ny_; }
  double hx() const { return lx_ / (nx_ - 1); }
  double hy() const { return ly_ / (ny_ - 1); }
  std::size_t size() const { return static_cast<std::size_t>(nx_) * static_cast<std::size_t>(ny_); }

  std::size_t index(int i, int j) const {
    return static_cast<std::size_t>(i) + static_cast<std::size_t>(nx_) * static_cast<std::size_t>(j);
  }
  int col(std::size_t node) const { return static_cast<int>(node % static_cast<std::size_t>(nx_)); }
  int row(std::size_t node) const { return static_cast<int>(node / static_cast<std::size_t>(nx_)); }

  double x(int i) const { return i * hx(); }
  double y(int j) const { return j * hy(); }
  Point point(std::size_t node) const { return {x(col(node)), y(row(node))}; }

  bool is_boundary(std::size_t node) const {
    const int i = col(node), j = row(node);
    return i == 0 || j == 0 || i == nx_ - 1 || j == ny_ - 1;
  }

  std::optional<Face> face_of(std::size_t node) const {
    const int i = col(node), j = row(node);
    if (i == 0) return Face::left;
    if (i == nx_ - 1) return Face::right;
    if (j == 0) return Face::bottom;
    if (j == ny_ - 1) return Face::top;
    return std::nullopt;
  }

  /// Unit outward normal of a boundary node (x-face normal at corners).
  Point normal(std::size_t node) const {
    const auto f = face_of(node);
    detail::require(f.has_value(), "normal requested for an interior node");
    switch (*f) {
      case Face::left: return {-1.0, 0.0};
      case Face::right: return {1.0, 0.0};
      case Face::bottom: return {0.0, -1.0};
      case Face::top: return {0.0, 1.0};
    }
    return {0.0, 0.0};
  }

  /// Nodes of one face in increasing coordinate order.
  std::vector<std::size_t> face_nodes(Face f) const {
    std::vector<std::size_t> out;
    switch (f) {
      case Face::left:
        for (int j = 0; j < ny_; ++j) out.push_back(index(0, j));
        break;
      case Face::right:
        for (int j = 0; j < ny_; ++j) out.push_back(index(nx_ - 1, j));
        break;
      case Face::bottom:
        for (int i = 1; i < nx_ - 1; ++i) out.push_back(index(i, 0));
        break;
      case Face::top:
        for (int i = 1; i < nx_ - 1; ++i) out.push_back(index(i, ny_ - 1));
        break;
    }
    return out;
  }

  /// All boundary nodes in ascending flat index.
  std::vector<std::size_t> boundary_nodes() const {
    std::vector<std::size_t> out;
    out.reserve(2 * static_cast<std::size_t>(nx_ + ny_) - 4);
    for (std::size_t k = 0; k < size(); ++k)
      if (is_boundary(k)) out.push_back(k);
    return out;
  }

  std::vector<std::size_t> interior_nodes() const {
    std::vector<std::size_t> out;
    out.reserve(static_cast<std::size_t>(nx_ - 2) * static_cast<std::size_t>(ny_ - 2));
    for (int j = 1; j < ny_ - 1; ++j)
      for (int i = 1; i < nx_ - 1; ++i) out.push_back(index(i, j));
    return out;
  }

  /// Trapezoid weight of a node for area integrals.
  double area_weight(std::size_t node) const {
    const int i = col(node), j = row(node);
    const double wx = (i == 0 || i == nx_ - 1) ? 0.5 * hx() : hx();
    const double wy = (j == 0 || j == ny_ - 1) ? 0.5 * hy() : hy();
    return wx * wy;
  }

  /// Half the length of the boundary edges adjacent to a boundary node.
  double boundary_weight(std::size_t node) const {
    const int i = col(node), j = row(node);
    const bool xend = (i == 0 || i == nx_ - 1);
    const bool yend = (j == 0 || j == ny_ - 1);
    if (xend && yend) return 0.5 * (hx() + hy());
    if (xend) return hy();
    if (yend) return hx();
    throw PreconditionError("boundary weight requested for an interior node");
  }

  friend bool operator==(const Grid& a, const Grid& b) {
    return a.lx_ == b.lx_ && a.ly_ == b.ly_ && a.nx_ == b.nx_ && a.ny_ == b.ny_;
  }

 private:
  friend Grid build_grid(double lx, double ly, int nx, int ny);
  double lx_ = 1.0;
  double ly_ = 1.0;
  int nx_ = 8;
  int ny_ = 8;
};

/// Validates the extents and node counts (at least 8 nodes per axis).
inline Grid build_grid(double lx, double ly, int nx, int ny) {
  if (!(lx > 0.0) || !(ly > 0.0)) throw PreconditionError("grid side lengths must be positive");
  if (nx < 8 || ny < 8) throw PreconditionError("grid needs at least 8 nodes per axis");
  Grid g;
  g.lx_ = lx;
  g.ly_ = ly;
  g.nx_ = nx;
  g.ny_ = ny;
  return g;
}

inline void require_same_grid(const Grid& a, const Grid& b) {
  if (!(a == b)) throw PreconditionError("fields live on different grids");
}

}  // namespace mslab
