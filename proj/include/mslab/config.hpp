#pragma once

#include <algorithm>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include "mslab/error.hpp"

namespace mslab {

inline constexpr const char* kArtifactVersion = "0.1.0";

/// Every experiment parameter; defaults are the values used when a key is absent.
struct ExperimentConfig {
  // [grid]
  int nx = 32;
  int ny = 32;
  double lx = 1.0;
  double ly = 1.0;
  // [time]
  double T = 0.1;
  int nt = 128;
  int taylor_order = 2;
  // [carleman]
  double x0_x = -1.0;
  double x0_y = 0.5;
  double lambda = 2.0;
  bool strict = false;
  bool normalize_beta = true;
  std::vector<double> s_grid{1, 2, 4, 8, 16};
  double carleman_T = 1.0;
  int carleman_nt = 128;
  int samples = 10;
  // [probes]
  int d = 2;
  // [sampling]
  std::uint64_t seed = 1;
  double amplitude = 0.05;
  int flatness_order = 2;
  double bound_m = 10.0;
  bool complex_q = false;
  // [ensemble]
  int pair_count = 20;
  // [measurement]
  double noise_level = 0.0;
  // [forward]
  std::string initial = "probe";  ///< probe | eigenmode
  int probe = 3;                  ///< 1-based probe index
  // [reconstruct]
  std::string method = "lsq";    ///< lsq | algebraic
  std::string truth = "basis";   ///< basis | sample
  int truth_index = 4;           ///< 0-based basis parameter for truth = basis
  double truth_value = 0.05;
  int basis_size = 8;
  int iterations = 200;
  double reg = 0.0;
  // [output]
  std::string output_dir = "out";
  // [run]
  int threads = 1;
};

namespace detail {

struct ConfigKey {
  std::function<void(ExperimentConfig&, const std::string&)> parse;
  std::function<std::string(const ExperimentConfig&)> print;
};

[[noreturn]] inline void type_error(const std::string& key, const char* expected, const std::string& value) {
  throw ConfigError(key + ": expected " + expected + ", got '" + value + "'");
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& raw, const char* expected) {
  const std::string v = trim(raw);
  T out{};
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || res.ec != std::errc() || res.ptr != v.data() + v.size()) type_error(key, expected, raw);
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& raw) {
  const std::string v = trim(raw);
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  type_error(key, "boolean", raw);
}

/// Shortest text that reads back to the same double.
inline std::string format_real(double v) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

template <class T>
ConfigKey number_key(T ExperimentConfig::*field, const std::string& name) {
  const char* expected = std::is_floating_point_v<T> ? "real" : "integer";
  return {[=](ExperimentConfig& c, const std::string& v) { c.*field = parse_number<T>(name, v, expected); },
          [=](const ExperimentConfig& c) {
            if constexpr (std::is_floating_point_v<T>) return format_real(c.*field);
            else return std::to_string(c.*field);
          }};
}

inline ConfigKey bool_key(bool ExperimentConfig::*field, const std::string& name) {
  return {[=](ExperimentConfig& c, const std::string& v) { c.*field = parse_bool(name, v); },
          [=](const ExperimentConfig& c) { return std::string(c.*field ? "true" : "false"); }};
}

inline ConfigKey string_key(std::string ExperimentConfig::*field) {
  return {[=](ExperimentConfig& c, const std::string& v) { c.*field = trim(v); },
          [=](const ExperimentConfig& c) { return c.*field; }};
}

inline ConfigKey list_key(std::vector<double> ExperimentConfig::*field, const std::string& name) {
  return {[=](ExperimentConfig& c, const std::string& v) {
            std::vector<double> out;
            std::stringstream ss(v);
            std::string item;
            while (std::getline(ss, item, ',')) out.push_back(parse_number<double>(name, item, "list of reals"));
            if (out.empty()) type_error(name, "list of reals", v);
            c.*field = out;
          },
          [=](const ExperimentConfig& c) {
            std::string s;
            for (std::size_t k = 0; k < (c.*field).size(); ++k) s += (k ? ", " : "") + format_real((c.*field)[k]);
            return s;
          }};
}

/// section -> key -> accessor, in canonical output order.
inline const std::vector<std::pair<std::string, std::vector<std::pair<std::string, ConfigKey>>>>& config_schema() {
  using C = ExperimentConfig;
  static const std::vector<std::pair<std::string, std::vector<std::pair<std::string, ConfigKey>>>> schema{
      {"grid",
       {{"nx", number_key(&C::nx, "[grid] nx")},
        {"ny", number_key(&C::ny, "[grid] ny")},
        {"lx", number_key(&C::lx, "[grid] lx")},
        {"ly", number_key(&C::ly, "[grid] ly")}}},
      {"time",
       {{"T", number_key(&C::T, "[time] T")},
        {"nt", number_key(&C::nt, "[time] nt")},
        {"taylor_order", number_key(&C::taylor_order, "[time] taylor_order")}}},
      {"carleman",
       {{"x0_x", number_key(&C::x0_x, "[carleman] x0_x")},
        {"x0_y", number_key(&C::x0_y, "[carleman] x0_y")},
        {"lambda", number_key(&C::lambda, "[carleman] lambda")},
        {"strict", bool_key(&C::strict, "[carleman] strict")},
        {"normalize_beta", bool_key(&C::normalize_beta, "[carleman] normalize_beta")},
        {"s_grid", list_key(&C::s_grid, "[carleman] s_grid")},
        {"T", number_key(&C::carleman_T, "[carleman] T")},
        {"nt", number_key(&C::carleman_nt, "[carleman] nt")},
        {"samples", number_key(&C::samples, "[carleman] samples")}}},
      {"probes", {{"d", number_key(&C::d, "[probes] d")}}},
      {"sampling",
       {{"seed", number_key(&C::seed, "[sampling] seed")},
        {"amplitude", number_key(&C::amplitude, "[sampling] amplitude")},
        {"flatness_order", number_key(&C::flatness_order, "[sampling] flatness_order")},
        {"M", number_key(&C::bound_m, "[sampling] M")},
        {"complex_q", bool_key(&C::complex_q, "[sampling] complex_q")}}},
      {"ensemble", {{"pair_count", number_key(&C::pair_count, "[ensemble] pair_count")}}},
      {"measurement", {{"noise_level", number_key(&C::noise_level, "[measurement] noise_level")}}},
      {"forward", {{"initial", string_key(&C::initial)}, {"probe", number_key(&C::probe, "[forward] probe")}}},
      {"reconstruct",
       {{"method", string_key(&C::method)},
        {"truth", string_key(&C::truth)},
        {"truth_index", number_key(&C::truth_index, "[reconstruct] truth_index")},
        {"truth_value", number_key(&C::truth_value, "[reconstruct] truth_value")},
        {"basis_size", number_key(&C::basis_size, "[reconstruct] basis_size")},
        {"iterations", number_key(&C::iterations, "[reconstruct] iterations")},
        {"reg", number_key(&C::reg, "[reconstruct] reg")}}},
      {"output", {{"dir", string_key(&C::output_dir)}}},
      {"run", {{"threads", number_key(&C::threads, "[run] threads")}}},
  };
  return schema;
}

inline void check_range(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

}  // namespace detail

/// Range checks shared by every command.
inline void validate_config(const ExperimentConfig& c) {
  using detail::check_range;
  check_range(c.nx >= 8 && c.ny >= 8, "[grid] nx and ny must be >= 8");
  check_range(c.lx > 0.0 && c.ly > 0.0, "[grid] lx and ly must be positive");
  check_range(c.T > 0.0 && c.nt >= 2, "[time] T must be positive and nt >= 2");
  check_range(c.taylor_order >= 1 && c.taylor_order <= 4, "[time] taylor_order must be in [1, 4]");
  check_range(c.lambda > 0.0, "[carleman] lambda must be positive");
  for (double s : c.s_grid) check_range(s > 0.0, "[carleman] s_grid entries must be positive");
  check_range(c.carleman_T > 0.0 && c.carleman_nt >= 2, "[carleman] T must be positive and nt >= 2");
  check_range(c.samples >= 1, "[carleman] samples must be >= 1");
  check_range(c.d == 2, "[probes] d must be 2");
  check_range(c.amplitude >= 0.0, "[sampling] amplitude must be nonnegative");
  check_range(c.flatness_order >= 0 && c.flatness_order <= 5, "[sampling] flatness_order must be in [0, 5]");
  check_range(c.bound_m > 0.0, "[sampling] M must be positive");
  check_range(c.pair_count >= 1, "[ensemble] pair_count must be >= 1");
  check_range(c.noise_level >= 0.0, "[measurement] noise_level must be nonnegative");
  check_range(c.initial == "probe" || c.initial == "eigenmode", "[forward] initial must be probe or eigenmode");
  check_range(c.probe >= 1 && c.probe <= 3 * c.d + 2, "[forward] probe must be in [1, 3d+2]");
  check_range(c.method == "lsq" || c.method == "algebraic", "[reconstruct] method must be lsq or algebraic");
  check_range(c.truth == "basis" || c.truth == "sample", "[reconstruct] truth must be basis or sample");
  check_range(c.basis_size >= 8 && c.basis_size <= 64 && c.basis_size % 8 == 0,
              "[reconstruct] basis_size must be a multiple of 8 in [8, 64]");
  check_range(c.truth_index >= 0 && c.truth_index < c.basis_size, "[reconstruct] truth_index out of range");
  check_range(c.iterations >= 0, "[reconstruct] iterations must be >= 0");
  check_range(c.reg >= 0.0, "[reconstruct] reg must be nonnegative");
  check_range(!c.output_dir.empty(), "[output] dir must not be empty");
  check_range(c.threads >= 1, "[run] threads must be >= 1");
}

/// INI text with [section] headers; unknown sections or keys, duplicates,
/// malformed lines and ill-typed values raise ConfigError.
inline ExperimentConfig parse_config_text(const std::string& text, const std::string& source = "config") {
  boost::property_tree::ptree tree;
  std::istringstream is(text);
  try {
    boost::property_tree::ini_parser::read_ini(is, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(source + ":" + std::to_string(e.line()) + ": " + e.message());
  }
  ExperimentConfig c;
  const auto& schema = detail::config_schema();
  for (const auto& [section, body] : tree) {
    if (!body.data().empty()) throw ConfigError(source + ": key '" + section + "' outside a section");
    auto sec = std::find_if(schema.begin(), schema.end(), [&](const auto& s) { return s.first == section; });
    if (sec == schema.end()) throw ConfigError(source + ": unknown section [" + section + "]");
    for (const auto& [key, value] : body) {
      auto k = std::find_if(sec->second.begin(), sec->second.end(), [&](const auto& e) { return e.first == key; });
      if (k == sec->second.end()) throw ConfigError(source + ": unknown key [" + section + "] " + key);
      try {
        k->second.parse(c, value.data());
      } catch (const ConfigError& e) {
        throw ConfigError(source + ": " + e.what());
      }
    }
  }
  try {
    validate_config(c);
  } catch (const ConfigError& e) {
    throw ConfigError(source + ": " + e.what());
  }
  return c;
}

inline ExperimentConfig parse_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config_text(ss.str(), path.string());
}

/// Full config with every key, in schema order; parse_config_text round-trips it.
inline std::string canonical_config(const ExperimentConfig& c) {
  std::string out;
  for (const auto& [section, keys] : detail::config_schema()) {
    out += "[" + section + "]\n";
    for (const auto& [key, acc] : keys) out += key + " = " + acc.print(c) + "\n";
  }
  return out;
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Hash of the canonical config with [run] threads and [output] dir reset,
/// since neither changes any result.
inline std::string config_hash(const ExperimentConfig& c) {
  ExperimentConfig h = c;
  h.threads = ExperimentConfig{}.threads;
  h.output_dir = ExperimentConfig{}.output_dir;
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(canonical_config(h))));
  return buf;
}

/// Comment line embedded at the top of every output file.
inline std::string output_header(const ExperimentConfig& c) {
  return std::string("# mslab ") + kArtifactVersion + " config_hash=" + config_hash(c) +
         " seed=" + std::to_string(c.seed);
}

}  // namespace mslab
