#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "mslab/field.hpp"
#include "mslab/trajectory.hpp"

namespace mslab {

// Field snapshot text format:
//   FIELD <nx> <ny> <components> <real|complex>
//   one line per node, y outer, x inner; `components` numbers per line for
//   real kind, `2*components` (re im pairs) for complex kind; %.17g.

/// Node values of a snapshot, one vector per component.
struct Snapshot {
  int nx = 0;
  int ny = 0;
  FieldKind kind = FieldKind::complex;
  std::vector<std::vector<cplx>> components;
};

namespace detail {

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

inline void write_snapshot(std::ostream& os, const Snapshot& s) {
  const std::size_t n = static_cast<std::size_t>(s.nx) * static_cast<std::size_t>(s.ny);
  os << "FIELD " << s.nx << ' ' << s.ny << ' ' << s.components.size() << ' '
     << (s.kind == FieldKind::real ? "real" : "complex") << '\n';
  std::string line;
  for (std::size_t k = 0; k < n; ++k) {
    line.clear();
    for (std::size_t c = 0; c < s.components.size(); ++c) {
      if (c > 0) line += ' ';
      const cplx v = s.components[c][k];
      line += detail::format_double(v.real());
      if (s.kind == FieldKind::complex) {
        line += ' ';
        line += detail::format_double(v.imag());
      }
    }
    line += '\n';
    os << line;
  }
}

inline Snapshot read_snapshot(std::istream& is) {
  Snapshot s;
  std::string tag, kind;
  std::size_t ncomp = 0;
  std::string header;
  if (!std::getline(is, header)) throw ConfigError("snapshot: missing header");
  std::istringstream hs(header);
  if (!(hs >> tag >> s.nx >> s.ny >> ncomp >> kind) || tag != "FIELD" || s.nx <= 0 || s.ny <= 0 || ncomp == 0)
    throw ConfigError("snapshot: malformed header '" + header + "'");
  if (kind == "real")
    s.kind = FieldKind::real;
  else if (kind == "complex")
    s.kind = FieldKind::complex;
  else
    throw ConfigError("snapshot: unknown kind '" + kind + "'");
  const std::size_t n = static_cast<std::size_t>(s.nx) * static_cast<std::size_t>(s.ny);
  s.components.assign(ncomp, std::vector<cplx>(n));
  std::string line;
  for (std::size_t k = 0; k < n; ++k) {
    if (!std::getline(is, line)) throw ConfigError("snapshot: truncated at node " + std::to_string(k));
    std::istringstream ls(line);
    for (std::size_t c = 0; c < ncomp; ++c) {
      double re = 0.0, im = 0.0;
      if (!(ls >> re)) throw ConfigError("snapshot: bad value on data line " + std::to_string(k + 1));
      if (s.kind == FieldKind::complex && !(ls >> im))
        throw ConfigError("snapshot: bad value on data line " + std::to_string(k + 1));
      s.components[c][k] = cplx(re, im);
    }
  }
  return s;
}

inline Snapshot to_snapshot(const ScalarField& f, FieldKind kind = FieldKind::complex) {
  return {f.grid().nx(), f.grid().ny(), kind, {f.values()}};
}
inline Snapshot to_snapshot(const VectorField& v) {
  return {v.grid().nx(), v.grid().ny(), v.kind(), {v[0].values(), v[1].values()}};
}
inline Snapshot to_snapshot(const TwoStateField& u) {
  return {u.grid().nx(), u.grid().ny(), FieldKind::complex, {u.plus.values(), u.minus.values()}};
}

namespace detail {

inline void check_snapshot_grid(const Snapshot& s, const Grid& g, std::size_t ncomp) {
  if (s.nx != g.nx() || s.ny != g.ny()) throw ConfigError("snapshot dimensions do not match the grid");
  if (s.components.size() != ncomp) throw ConfigError("snapshot has the wrong number of components");
}

}  // namespace detail

inline ScalarField scalar_from_snapshot(const Snapshot& s, const Grid& g) {
  detail::check_snapshot_grid(s, g, 1);
  return ScalarField(g, s.components[0]);
}
inline VectorField vector_from_snapshot(const Snapshot& s, const Grid& g) {
  detail::check_snapshot_grid(s, g, 2);
  return VectorField(ScalarField(g, s.components[0]), ScalarField(g, s.components[1]), s.kind);
}
inline TwoStateField two_state_from_snapshot(const Snapshot& s, const Grid& g) {
  detail::check_snapshot_grid(s, g, 2);
  return TwoStateField(ScalarField(g, s.components[0]), ScalarField(g, s.components[1]));
}

inline void write_snapshot_file(const std::filesystem::path& p, const Snapshot& s) {
  std::ofstream os(p);
  if (!os) throw ConfigError("cannot open " + p.string() + " for writing");
  write_snapshot(os, s);
}

inline Snapshot read_snapshot_file(const std::filesystem::path& p) {
  std::ifstream is(p);
  if (!is) throw ConfigError("cannot open " + p.string());
  return read_snapshot(is);
}

/// Trajectory directory: state_<k> snapshots plus a `manifest` with T, nt, dt
/// and the grid extents.
inline std::vector<std::filesystem::path> write_trajectory(const std::filesystem::path& dir, const Trajectory& traj,
                                                           const std::string& header_comment = {}) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;
  for (std::size_t k = 0; k < traj.size(); ++k) {
    auto p = dir / ("state_" + std::to_string(k));
    write_snapshot_file(p, to_snapshot(traj[k]));
    written.push_back(p);
  }
  auto mp = dir / "manifest";
  std::ofstream m(mp);
  if (!header_comment.empty()) m << header_comment << '\n';
  const Grid& g = traj[0].grid();
  m << "T " << detail::format_double(traj.T) << '\n'
    << "nt " << traj.nt << '\n'
    << "dt " << detail::format_double(traj.dt()) << '\n'
    << "lx " << detail::format_double(g.lx()) << '\n'
    << "ly " << detail::format_double(g.ly()) << '\n';
  written.push_back(mp);
  return written;
}

inline Trajectory read_trajectory(const std::filesystem::path& dir) {
  std::ifstream m(dir / "manifest");
  if (!m) throw ConfigError("trajectory manifest missing in " + dir.string());
  Trajectory traj;
  double lx = 1.0, ly = 1.0;
  std::string key, line;
  while (std::getline(m, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    ls >> key;
    if (key == "T") ls >> traj.T;
    else if (key == "nt") ls >> traj.nt;
    else if (key == "lx") ls >> lx;
    else if (key == "ly") ls >> ly;
  }
  for (int k = 0; k <= traj.nt; ++k) {
    Snapshot s = read_snapshot_file(dir / ("state_" + std::to_string(k)));
    Grid g = build_grid(lx, ly, s.nx, s.ny);
    traj.states.push_back(two_state_from_snapshot(s, g));
  }
  return traj;
}

}  // namespace mslab
