#pragma once

// Config-driven Monte Carlo runs, parameter sweeps and aggregation of
// persisted path files.

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "json.hpp"
#include "spdelab/coefficients.hpp"
#include "spdelab/diagnostics.hpp"
#include "spdelab/errors.hpp"
#include "spdelab/noise_field.hpp"
#include "spdelab/solver.hpp"
#include "tomlplusplus/toml.hpp"

namespace spdelab {

inline constexpr int kSchemaVersion = 1;

// --- initial data -------------------------------------------------------------

struct SineMode {
  double amplitude = 1.0;
  int mode = 1;
};

/// height * (1 - ((x - center)/width)^2)^2 on |x - center| < width.
struct Bump {
  double center = 0.5;
  double width = 0.25;
  double height = 1.0;
};

/// Values on a uniform grid of [0, 1] including both endpoints, linearly interpolated.
struct Tabulated {
  std::vector<double> values;
};

using InitialData = std::variant<SineMode, Bump, Tabulated>;

inline double eval_initial(const InitialData& u0, double x) {
  return std::visit(
      [x](const auto& f) -> double {
        using T = std::decay_t<decltype(f)>;
        if constexpr (std::is_same_v<T, SineMode>) {
          return f.amplitude * std::sin(f.mode * std::numbers::pi * x);
        } else if constexpr (std::is_same_v<T, Bump>) {
          const double r = (x - f.center) / f.width;
          return std::abs(r) < 1.0 ? f.height * (1.0 - r * r) * (1.0 - r * r) : 0.0;
        } else {
          const double pos = x * static_cast<double>(f.values.size() - 1);
          const std::size_t j = std::min(static_cast<std::size_t>(pos), f.values.size() - 2);
          const double w = pos - static_cast<double>(j);
          return (1.0 - w) * f.values[j] + w * f.values[j + 1];
        }
      },
      u0);
}

inline void validate(const InitialData& u0) {
  if (const auto* s = std::get_if<SineMode>(&u0)) {
    if (s->mode < 1 || !std::isfinite(s->amplitude)) throw ConfigError("sine initial data needs mode >= 1");
  } else if (const auto* b = std::get_if<Bump>(&u0)) {
    if (!(b->width > 0.0) || b->center - b->width < 0.0 || b->center + b->width > 1.0) {
      throw ConfigError("bump initial data must have support inside [0, 1]");
    }
  } else {
    const auto& t = std::get<Tabulated>(u0);
    if (t.values.size() < 2) throw ConfigError("tabulated initial data needs at least 2 values");
    for (double v : t.values) {
      if (!std::isfinite(v)) throw ConfigError("tabulated initial data must be finite");
    }
    if (t.values.front() != 0.0 || t.values.back() != 0.0) {
      throw ConfigError("initial data must vanish at both endpoints");
    }
  }
}

inline Field initial_field(const InitialData& u0, std::size_t nx) {
  return Field::sample(nx, [&u0](double x) { return eval_initial(u0, x); });
}

// --- configuration -----------------------------------------------------------

struct ExperimentConfig {
  GridSpec grid{127, 1.0 / (128.0 * 128.0 * 2.0), 1.0};
  CoefficientSpec coefficients;
  InitialData initial = SineMode{};
  std::size_t n_paths = 0;
  std::uint64_t seed_base = 0;
  std::vector<double> ladder{1e2, 1e3, 1e4, 1e5};
  double blowup_threshold = 1e6;
  std::size_t out_stride = 10;
  bool adaptive_dt = true;
  std::string outputs = "out";

  SolverOptions solver_options() const {
    SolverOptions o;
    o.ladder = ladder;
    o.blowup_threshold = blowup_threshold;
    o.out_stride = out_stride;
    o.adaptive_dt = adaptive_dt;
    return o;
  }

  void validate() const {
    grid.validate();
    spdelab::validate(coefficients);
    spdelab::validate(initial);
    validate_ladder(ladder);
    if (!(blowup_threshold > 0.0)) throw ConfigError("blowup_threshold must be positive");
    if (!ladder.empty() && ladder.back() >= blowup_threshold) {
      throw ConfigError("ladder levels must lie below the blowup threshold");
    }
    if (out_stride == 0) throw ConfigError("out_stride must be >= 1");
  }
};

namespace detail {

inline std::string toml_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  std::string s = format_double(v);
  if (s.find_first_of(".en") == std::string::npos) s += ".0";
  return s;
}

inline std::string toml_string(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + '"';
}

inline std::string toml_array(const std::vector<double>& v) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + toml_double(v[i]);
  return s + "]";
}

// ParamList entries are either numbers, '|'-separated lists or bare words.
inline std::string toml_param(const std::string& key, const std::string& value) {
  if (key == "shape") return toml_string(value);
  if (value.find('|') != std::string::npos || key == "z" || key == "values") {
    return value.empty() ? "[]" : toml_array(parse_list(value, key));
  }
  return toml_double(parse_double(value, key));
}

}  // namespace detail

/// Full: everything. Provenance: without the output directory, as embedded in
/// path files. Hash: also without n_paths and seed_base, so every seed block of
/// one experiment shares a hash.
enum class TomlForm { Full, Provenance, Hash };

/// Canonical TOML text, fixed key order and shortest round-trip numbers.
inline std::string canonical_toml(const ExperimentConfig& c, TomlForm form = TomlForm::Full) {
  const bool for_hash = form == TomlForm::Hash;
  using namespace detail;
  std::ostringstream o;
  o << "schema_version = " << kSchemaVersion << "\n\n";
  o << "[grid]\nnx = " << c.grid.nx << "\ndt = " << toml_double(c.grid.dt)
    << "\nt_end = " << toml_double(c.grid.t_end) << "\n\n";
  const auto [dtag, dparams] = describe(c.coefficients.drift);
  o << "[drift]\nfamily = " << toml_string(dtag) << '\n';
  for (const auto& [k, v] : dparams) o << k << " = " << toml_param(k, v) << '\n';
  const auto [stag, sparams] = describe(c.coefficients.diffusion);
  o << "\n[diffusion]\nfamily = " << toml_string(stag) << '\n';
  for (const auto& [k, v] : sparams) o << k << " = " << toml_param(k, v) << '\n';
  o << "moment_condition = " << (c.coefficients.moment_condition ? "true" : "false") << "\n\n";
  if (const auto& e = c.coefficients.envelope) {
    o << "[envelope]\nc_b = " << toml_double(e->c_b) << "\nL_b = " << toml_double(e->L_b)
      << "\nc_sigma = " << toml_double(e->c_sigma) << "\nL_sigma = " << toml_double(e->L_sigma) << "\n\n";
  }
  o << "[initial]\n";
  std::visit(
      [&o](const auto& f) {
        using T = std::decay_t<decltype(f)>;
        if constexpr (std::is_same_v<T, SineMode>) {
          o << "kind = \"sine\"\namplitude = " << toml_double(f.amplitude) << "\nmode = " << f.mode << '\n';
        } else if constexpr (std::is_same_v<T, Bump>) {
          o << "kind = \"bump\"\ncenter = " << toml_double(f.center) << "\nwidth = " << toml_double(f.width)
            << "\nheight = " << toml_double(f.height) << '\n';
        } else {
          o << "kind = \"tabulated\"\nvalues = " << toml_array(f.values) << '\n';
        }
      },
      c.initial);
  o << "\n[run]\n";
  if (!for_hash) o << "n_paths = " << c.n_paths << "\nseed_base = " << c.seed_base << '\n';
  o << "ladder = " << toml_array(c.ladder) << "\nblowup_threshold = " << toml_double(c.blowup_threshold)
    << "\nout_stride = " << c.out_stride << "\nadaptive_dt = " << (c.adaptive_dt ? "true" : "false") << '\n';
  if (form == TomlForm::Full) o << "outputs = " << toml_string(c.outputs) << '\n';
  return o.str();
}

/// 64-bit FNV-1a of the hash form, as 16 hex digits.
inline std::string config_hash(const ExperimentConfig& c) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : canonical_toml(c, TomlForm::Hash)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace detail {

class TableReader {
 public:
  TableReader(const toml::table& t, std::string name) : t_(t), name_(std::move(name)) {}

  bool has(std::string_view key) const { return t_.contains(key); }

  double num(std::string_view key, std::optional<double> fallback = std::nullopt) {
    seen_.emplace_back(key);
    const toml::node* n = t_.get(key);
    if (!n) return need(key, fallback);
    if (auto v = n->value<double>()) return *v;
    throw ConfigError(where(key) + " must be a number");
  }

  std::int64_t integer(std::string_view key, std::optional<std::int64_t> fallback = std::nullopt) {
    seen_.emplace_back(key);
    const toml::node* n = t_.get(key);
    if (!n) return need(key, fallback);
    if (auto v = n->as_integer()) return v->get();
    if (auto d = n->as_floating_point(); d && std::floor(d->get()) == d->get()) {
      return static_cast<std::int64_t>(d->get());
    }
    throw ConfigError(where(key) + " must be an integer");
  }

  bool boolean(std::string_view key, bool fallback) {
    seen_.emplace_back(key);
    const toml::node* n = t_.get(key);
    if (!n) return fallback;
    if (auto v = n->value<bool>()) return *v;
    throw ConfigError(where(key) + " must be true or false");
  }

  std::string text(std::string_view key, std::optional<std::string> fallback = std::nullopt) {
    seen_.emplace_back(key);
    const toml::node* n = t_.get(key);
    if (!n) return need(key, fallback);
    if (auto v = n->value<std::string>()) return *v;
    throw ConfigError(where(key) + " must be a string");
  }

  std::vector<double> list(std::string_view key, std::optional<std::vector<double>> fallback = std::nullopt) {
    seen_.emplace_back(key);
    const toml::node* n = t_.get(key);
    if (!n) return need(key, fallback);
    const toml::array* a = n->as_array();
    if (!a) throw ConfigError(where(key) + " must be an array of numbers");
    std::vector<double> out;
    for (const auto& e : *a) {
      auto v = e.value<double>();
      if (!v) throw ConfigError(where(key) + " must be an array of numbers");
      out.push_back(*v);
    }
    return out;
  }

  /// Remaining keys as a ParamList for the coefficient factories.
  ParamList rest() {
    ParamList out;
    for (const auto& [k, v] : t_) {
      if (std::find(seen_.begin(), seen_.end(), k.str()) != seen_.end()) continue;
      std::string key(k.str());
      seen_.push_back(key);
      if (auto s = v.value<std::string>()) {
        out.emplace_back(key, *s);
      } else if (auto d = v.value<double>()) {
        out.emplace_back(key, format_double(*d));
      } else if (v.is_array()) {
        seen_.pop_back();
        out.emplace_back(key, format_list(list(key)));
      } else {
        throw ConfigError(where(key) + " has an unsupported type");
      }
    }
    return out;
  }

  void done() const {
    for (const auto& [k, v] : t_) {
      if (std::find(seen_.begin(), seen_.end(), k.str()) == seen_.end()) {
        throw ConfigError("unknown key " + where(k.str()));
      }
    }
  }

 private:
  template <class T>
  T need(std::string_view key, const std::optional<T>& fallback) const {
    if (!fallback) throw ConfigError("missing key " + where(key));
    return *fallback;
  }
  std::string where(std::string_view key) const { return "'" + name_ + "." + std::string(key) + "'"; }

  const toml::table& t_;
  std::string name_;
  std::vector<std::string> seen_;
};

inline const toml::table& section(const toml::table& root, std::string_view name) {
  static const toml::table empty;
  const toml::node* n = root.get(name);
  if (!n) return empty;
  if (const toml::table* t = n->as_table()) return *t;
  throw ConfigError("'" + std::string(name) + "' must be a table");
}

}  // namespace detail

inline ExperimentConfig config_from_table(const toml::table& root) {
  using detail::TableReader;
  for (const auto& [k, v] : root) {
    static const std::array<std::string_view, 8> known{"schema_version", "grid",      "drift", "diffusion",
                                                        "envelope",       "initial", "run",   "meta"};
    if (std::find(known.begin(), known.end(), k.str()) == known.end()) {
      throw ConfigError("unknown top-level key '" + std::string(k.str()) + "'");
    }
  }
  if (auto sv = root["schema_version"].value<std::int64_t>(); sv && *sv != kSchemaVersion) {
    throw ConfigError("unsupported schema_version " + std::to_string(*sv));
  }
  ExperimentConfig c;

  TableReader grid(detail::section(root, "grid"), "grid");
  const std::int64_t nx = grid.integer("nx");
  if (nx < 1) throw ConfigError("grid.nx must be >= 1");
  c.grid.nx = static_cast<std::size_t>(nx);
  c.grid.dt = grid.num("dt");
  c.grid.t_end = grid.num("t_end");
  grid.done();

  TableReader drift(detail::section(root, "drift"), "drift");
  const std::string dtag = drift.text("family");
  c.coefficients.drift = make_drift(dtag, drift.rest());

  TableReader diff(detail::section(root, "diffusion"), "diffusion");
  const std::string stag = diff.text("family", "constant");
  c.coefficients.moment_condition = diff.boolean("moment_condition", false);
  c.coefficients.diffusion = make_diffusion(stag, diff.rest());

  if (root.contains("envelope")) {
    TableReader env(detail::section(root, "envelope"), "envelope");
    c.coefficients.envelope = Envelope{env.num("c_b"), env.num("L_b"), env.num("c_sigma"), env.num("L_sigma")};
    env.done();
  }

  TableReader init(detail::section(root, "initial"), "initial");
  const std::string kind = init.text("kind", "sine");
  if (kind == "sine") {
    c.initial = SineMode{init.num("amplitude", 1.0), static_cast<int>(init.integer("mode", 1))};
  } else if (kind == "bump") {
    c.initial = Bump{init.num("center", 0.5), init.num("width", 0.25), init.num("height", 1.0)};
  } else if (kind == "tabulated") {
    c.initial = Tabulated{init.list("values")};
  } else {
    throw ConfigError("unknown initial data kind '" + kind + "'");
  }
  init.done();

  TableReader run(detail::section(root, "run"), "run");
  const std::int64_t n = run.integer("n_paths", 0);
  if (n < 0) throw ConfigError("run.n_paths must be >= 0");
  c.n_paths = static_cast<std::size_t>(n);
  c.seed_base = static_cast<std::uint64_t>(run.integer("seed_base", 0));
  c.ladder = run.list("ladder", c.ladder);
  c.blowup_threshold = run.num("blowup_threshold", c.blowup_threshold);
  const std::int64_t stride = run.integer("out_stride", 10);
  if (stride < 1) throw ConfigError("run.out_stride must be >= 1");
  c.out_stride = static_cast<std::size_t>(stride);
  c.adaptive_dt = run.boolean("adaptive_dt", true);
  c.outputs = run.text("outputs", c.outputs);
  run.done();

  c.validate();
  return c;
}

inline ExperimentConfig parse_config(std::string_view text, std::string_view source = "config") {
  try {
    return config_from_table(toml::parse(text, source));
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << "TOML parse error in " << source << " at line " << e.source().begin.line << ": " << e.description();
    throw ConfigError(msg.str());
  }
}

inline ExperimentConfig load_config(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot read config " + file.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), file.string());
}

/// Set a config field named "section.key" (or a bare key that names exactly
/// one field) to a numeric value.
inline ExperimentConfig with_axis_value(const ExperimentConfig& base, const std::string& axis, double value) {
  toml::table root = toml::parse(canonical_toml(base));
  std::string sec, key;
  if (const auto dot = axis.find('.'); dot != std::string::npos) {
    sec = axis.substr(0, dot);
    key = axis.substr(dot + 1);
  } else {
    static const std::map<std::string, std::string> alias{{"T", "grid.t_end"}};
    if (auto it = alias.find(axis); it != alias.end()) return with_axis_value(base, it->second, value);
    std::vector<std::string> owners;
    for (auto& [k, v] : root) {
      if (auto* t = v.as_table(); t && t->contains(axis)) owners.emplace_back(k.str());
    }
    if (owners.size() != 1) throw ConfigError("axis '" + axis + "' does not name exactly one config field");
    sec = owners.front();
    key = axis;
  }
  toml::table* t = root[sec].as_table();
  if (!t || !t->contains(key) || key == "family" || key == "kind") {
    throw ConfigError("axis '" + axis + "' is not a numeric config field");
  }
  if (t->get(key)->is_integer()) {
    if (std::floor(value) != value) throw ConfigError("axis '" + axis + "' takes integer values");
    t->insert_or_assign(key, static_cast<std::int64_t>(value));
  } else if (t->get(key)->is_floating_point()) {
    t->insert_or_assign(key, value);
  } else {
    throw ConfigError("axis '" + axis + "' is not a numeric config field");
  }
  return config_from_table(root);
}

// --- per-path records ----------------------------------------------------------

struct PathSummary {
  std::uint64_t seed = 0;
  std::string config_hash;
  bool blew_up = false;
  double tau_hat = std::numeric_limits<double>::infinity();
  double terminal_sup = 0.0;
  double max_sup = 0.0;
  double max_l2 = 0.0;
  double max_h1 = 0.0;
  std::vector<std::pair<double, double>> threshold_ladder;
};

inline PathSummary summarize(const PathResult& p) {
  PathSummary s;
  s.seed = p.seed;
  s.config_hash = p.config_hash;
  s.blew_up = p.record.blew_up;
  s.tau_hat = p.record.tau_hat;
  s.terminal_sup = p.record.terminal_sup;
  s.threshold_ladder = p.record.threshold_ladder;
  for (const auto& r : p.series) {
    s.max_sup = std::max(s.max_sup, r.sup_norm);
    s.max_l2 = std::max(s.max_l2, r.l2_norm);
    s.max_h1 = std::max(s.max_h1, r.h1_norm);
  }
  return s;
}

namespace detail {

using nlohmann::json;

inline json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline double from_json_number(const json& j) {
  return j.is_null() ? std::numeric_limits<double>::infinity() : j.get<double>();
}

}  // namespace detail

/// JSONL lines for one path: header, series rows, stored fields, final record.
inline std::string path_jsonl(const PathResult& p, const ExperimentConfig& cfg) {
  using detail::json;
  using detail::finite_or_null;
  std::string out;
  auto line = [&out](const json& j) { out += j.dump() + '\n'; };
  line({{"record", "header"},
        {"schema_version", kSchemaVersion},
        {"config_hash", p.config_hash},
        {"seed", p.seed},
        {"generator", kGeneratorTag},
        {"config", canonical_toml(cfg, TomlForm::Provenance)}});
  for (const auto& r : p.series) {
    line({{"record", "row"},
          {"t", r.t},
          {"sup", finite_or_null(r.sup_norm)},
          {"l2", finite_or_null(r.l2_norm)},
          {"h1", finite_or_null(r.h1_norm)},
          {"bg_mode", finite_or_null(r.bg_mode)}});
  }
  for (const auto& f : p.fields) line({{"record", "field"}, {"t", f.time}, {"values", f.values}});
  const PathSummary s = summarize(p);
  json ladder = json::array();
  for (const auto& [n, tau] : s.threshold_ladder) ladder.push_back({n, finite_or_null(tau)});
  json fin{{"record", "final"},
           {"schema_version", kSchemaVersion},
           {"config_hash", s.config_hash},
           {"seed", s.seed},
           {"blew_up", s.blew_up},
           {"tau_hat", finite_or_null(s.tau_hat)},
           {"terminal_sup", finite_or_null(s.terminal_sup)},
           {"max_sup", finite_or_null(s.max_sup)},
           {"max_l2", finite_or_null(s.max_l2)},
           {"max_h1", finite_or_null(s.max_h1)},
           {"threshold_ladder", ladder}};
  if (p.final_field) fin["final_field"] = {{"t", p.final_field->time}, {"values", p.final_field->values}};
  line(fin);
  return out;
}

/// The final record of a path file, or nullopt when the file is missing or
/// incomplete (an interrupted write).
inline std::optional<PathSummary> read_path_summary(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) return std::nullopt;
  std::string line, last;
  while (std::getline(in, line)) {
    if (!line.empty()) last = line;
  }
  if (last.empty()) return std::nullopt;
  const auto j = nlohmann::json::parse(last, nullptr, false);
  if (j.is_discarded() || !j.is_object() || j.value("record", "") != "final") return std::nullopt;
  if (j.value("schema_version", 0) != kSchemaVersion) {
    throw ConfigError("path file " + file.string() + " has schema_version " +
                      std::to_string(j.value("schema_version", 0)));
  }
  PathSummary s;
  s.seed = j.at("seed").get<std::uint64_t>();
  s.config_hash = j.at("config_hash").get<std::string>();
  s.blew_up = j.at("blew_up").get<bool>();
  s.tau_hat = detail::from_json_number(j.at("tau_hat"));
  s.terminal_sup = detail::from_json_number(j.at("terminal_sup"));
  s.max_sup = detail::from_json_number(j.at("max_sup"));
  s.max_l2 = detail::from_json_number(j.at("max_l2"));
  s.max_h1 = detail::from_json_number(j.at("max_h1"));
  for (const auto& e : j.at("threshold_ladder")) {
    s.threshold_ladder.emplace_back(e.at(0).get<double>(), detail::from_json_number(e.at(1)));
  }
  return s;
}

// --- ensemble summary ----------------------------------------------------------

struct WilsonInterval {
  double low = 0.0;
  double high = 1.0;
};

inline WilsonInterval wilson_interval(std::size_t k, std::size_t n, double z = 1.959963984540054) {
  if (n == 0) return {0.0, 1.0};
  const double nn = static_cast<double>(n);
  const double p = static_cast<double>(k) / nn;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / nn;
  const double centre = (p + z2 / (2.0 * nn)) / denom;
  const double half = z / denom * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn));
  return {std::max(0.0, centre - half), std::min(1.0, centre + half)};
}

/// Linear-interpolation quantile of sorted data.
inline double quantile_sorted(const std::vector<double>& v, double q) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  const double pos = q * static_cast<double>(v.size() - 1);
  const std::size_t j = static_cast<std::size_t>(pos);
  if (j + 1 >= v.size()) return v.back();
  return v[j] + (pos - static_cast<double>(j)) * (v[j + 1] - v[j]);
}

struct EnsembleSummary {
  std::string config_hash;
  std::size_t n_paths = 0;
  std::size_t n_blowup = 0;
  double blowup_fraction = std::numeric_limits<double>::quiet_NaN();
  WilsonInterval ci;
  double mean_tau_hat = std::numeric_limits<double>::quiet_NaN();
  double tau_q10 = std::numeric_limits<double>::quiet_NaN();
  double tau_q50 = std::numeric_limits<double>::quiet_NaN();
  double tau_q90 = std::numeric_limits<double>::quiet_NaN();
  double max_sup = 0.0;
  double max_l2 = 0.0;
  double max_h1 = 0.0;
  std::uint64_t seed_min = 0;
  std::uint64_t seed_max = 0;
};

/// Sequential reduction in seed order; refuses mixed hashes and repeated seeds.
inline EnsembleSummary reduce(std::vector<PathSummary> paths, const std::vector<std::string>& sources = {}) {
  EnsembleSummary e;
  if (paths.empty()) return e;
  std::vector<std::size_t> order(paths.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  auto name = [&](std::size_t i) { return i < sources.size() ? sources[i] : "seed " + std::to_string(paths[i].seed); };

  std::map<std::string, std::size_t> hashes;
  for (const auto& p : paths) ++hashes[p.config_hash];
  if (hashes.size() > 1) {
    const std::string majority =
        std::max_element(hashes.begin(), hashes.end(), [](auto& a, auto& b) { return a.second < b.second; })->first;
    std::vector<std::string> offenders;
    for (std::size_t i = 0; i < paths.size(); ++i) {
      if (paths[i].config_hash != majority) offenders.push_back(name(i) + " (" + paths[i].config_hash + ")");
    }
    throw MergeConflict("inputs mix config hashes; expected " + majority, offenders);
  }
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return paths[a].seed < paths[b].seed; });
  std::vector<std::string> dups;
  for (std::size_t i = 1; i < order.size(); ++i) {
    if (paths[order[i]].seed == paths[order[i - 1]].seed) dups.push_back(name(order[i]));
  }
  if (!dups.empty()) throw MergeConflict("inputs repeat seeds", dups);

  e.config_hash = paths.front().config_hash;
  e.n_paths = paths.size();
  e.seed_min = paths[order.front()].seed;
  e.seed_max = paths[order.back()].seed;
  std::vector<double> taus;
  for (std::size_t i : order) {
    const auto& p = paths[i];
    if (p.blew_up) {
      ++e.n_blowup;
      taus.push_back(p.tau_hat);
    }
    e.max_sup = std::max(e.max_sup, p.max_sup);
    e.max_l2 = std::max(e.max_l2, p.max_l2);
    e.max_h1 = std::max(e.max_h1, p.max_h1);
  }
  e.blowup_fraction = static_cast<double>(e.n_blowup) / static_cast<double>(e.n_paths);
  e.ci = wilson_interval(e.n_blowup, e.n_paths);
  if (!taus.empty()) {
    double sum = 0.0;
    for (double t : taus) sum += t;
    e.mean_tau_hat = sum / static_cast<double>(taus.size());
    std::sort(taus.begin(), taus.end());
    e.tau_q10 = quantile_sorted(taus, 0.1);
    e.tau_q50 = quantile_sorted(taus, 0.5);
    e.tau_q90 = quantile_sorted(taus, 0.9);
  }
  return e;
}

namespace detail {

inline std::string csv_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return format_double(v);
}

inline void write_file(const std::filesystem::path& file, const std::string& text, const std::string& context) {
  std::error_code ec;
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path(), ec);
  if (ec) throw IoError("cannot create " + file.parent_path().string() + context + ": " + ec.message());
  const std::filesystem::path tmp = file.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << text;
    out.flush();
    if (!out) throw IoError("cannot write " + tmp.string() + context);
  }
  std::filesystem::rename(tmp, file, ec);
  if (ec) throw IoError("cannot move " + tmp.string() + " to " + file.string() + context + ": " + ec.message());
}

}  // namespace detail

inline constexpr const char* kSummaryHeader =
    "schema_version,config_hash,n_paths,n_blowup,blowup_fraction,ci_low,ci_high,mean_tau_hat,tau_q10,tau_q50,"
    "tau_q90,max_sup,max_l2,max_h1,seed_min,seed_max";

/// Header plus one row; header only for an empty ensemble.
inline std::string summary_csv(const EnsembleSummary& e) {
  using detail::csv_double;
  std::string s = std::string(kSummaryHeader) + '\n';
  if (e.n_paths == 0) return s;
  std::ostringstream o;
  o << kSchemaVersion << ',' << e.config_hash << ',' << e.n_paths << ',' << e.n_blowup << ','
    << csv_double(e.blowup_fraction) << ',' << csv_double(e.ci.low) << ',' << csv_double(e.ci.high) << ','
    << csv_double(e.mean_tau_hat) << ',' << csv_double(e.tau_q10) << ',' << csv_double(e.tau_q50) << ','
    << csv_double(e.tau_q90) << ',' << csv_double(e.max_sup) << ',' << csv_double(e.max_l2) << ','
    << csv_double(e.max_h1) << ',' << e.seed_min << ',' << e.seed_max << '\n';
  return s + o.str();
}

// --- execution -------------------------------------------------------------------

/// --jobs default: SPDE_LAB_JOBS, else the hardware concurrency.
inline unsigned resolve_jobs(std::optional<unsigned> requested = std::nullopt) {
  if (requested && *requested > 0) return *requested;
  if (const char* env = std::getenv("SPDE_LAB_JOBS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0) return static_cast<unsigned>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Run fn(i) for i in [0, n) on up to jobs threads; the first exception is rethrown.
template <class F>
void parallel_for(std::size_t n, unsigned jobs, F&& fn) {
  const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(std::max(1u, jobs), n));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n && !failed; i = next++) {
          try {
            fn(i);
          } catch (...) {
            std::lock_guard lock(error_mutex);
            if (!error) error = std::current_exception();
            failed = true;
          }
        }
      });
    }
  }
  if (error) std::rethrow_exception(error);
}

struct PathRequest {
  bool store_fields = false;
  double store_from = 0.0;
};

/// Path i of the ensemble: seed seed_base + i.
inline PathResult simulate_path(const ExperimentConfig& cfg, std::size_t i, const PathRequest& req = {}) {
  SolverOptions o = cfg.solver_options();
  o.store_fields = req.store_fields;
  o.store_from = req.store_from;
  const std::uint64_t seed = split_seed(cfg.seed_base, i);
  PathResult p = simulate_localized(initial_field(cfg.initial, cfg.grid.nx), cfg.coefficients,
                                    NoisePath(seed, cfg.grid), o);
  p.seed = seed;
  p.config_hash = config_hash(cfg);
  return p;
}

/// All paths in memory (for the regularity and moment estimators).
inline std::vector<PathResult> simulate_ensemble(const ExperimentConfig& cfg, const PathRequest& req,
                                                 unsigned jobs = 1) {
  cfg.validate();
  std::vector<PathResult> out(cfg.n_paths);
  parallel_for(cfg.n_paths, jobs, [&](std::size_t i) { out[i] = simulate_path(cfg, i, req); });
  return out;
}

inline std::filesystem::path path_file(const std::filesystem::path& dir, std::uint64_t seed) {
  return dir / "paths" / ("path_" + std::to_string(seed) + ".jsonl");
}

struct RunOptions {
  unsigned jobs = 1;
  bool store_fields = false;
  double store_from = 0.0;
};

/// Simulate (or resume) every path of cfg under cfg.outputs and write
/// summary.csv. A path whose file already holds a final record with the same
/// config hash is not recomputed.
inline EnsembleSummary run(const ExperimentConfig& cfg, const RunOptions& opt = {}) {
  cfg.validate();
  const std::filesystem::path dir(cfg.outputs);
  const std::string hash = config_hash(cfg);
  detail::write_file(dir / "config.toml", canonical_toml(cfg), "");
  std::vector<PathSummary> paths(cfg.n_paths);
  parallel_for(cfg.n_paths, opt.jobs, [&](std::size_t i) {
    const std::uint64_t seed = split_seed(cfg.seed_base, i);
    const auto file = path_file(dir, seed);
    if (auto prior = read_path_summary(file); prior && prior->config_hash == hash && prior->seed == seed) {
      paths[i] = std::move(*prior);
      return;
    }
    const PathResult p = simulate_path(cfg, i, {opt.store_fields, opt.store_from});
    detail::write_file(file, path_jsonl(p, cfg), " (seed " + std::to_string(seed) + ")");
    paths[i] = summarize(p);
  });
  EnsembleSummary e = reduce(std::move(paths));
  if (e.n_paths == 0) e.config_hash = hash;
  detail::write_file(dir / "summary.csv", summary_csv(e), "");
  return e;
}

// --- sweeps ------------------------------------------------------------------------

struct SweepPoint {
  double value = 0.0;
  EnsembleSummary summary;
};

struct SweepResult {
  std::string axis;
  std::vector<SweepPoint> points;  // sorted by value
};

inline constexpr const char* kSweepHeader =
    "schema_version,axis,value,n_paths,n_blowup,blowup_fraction,ci_low,ci_high,mean_tau_hat,config_hash";

inline std::string sweep_csv(const SweepResult& r) {
  using detail::csv_double;
  std::ostringstream o;
  o << kSweepHeader << '\n';
  for (const auto& p : r.points) {
    const auto& e = p.summary;
    o << kSchemaVersion << ',' << r.axis << ',' << csv_double(p.value) << ',' << e.n_paths << ',' << e.n_blowup
      << ',' << csv_double(e.blowup_fraction) << ',' << csv_double(e.ci.low) << ',' << csv_double(e.ci.high)
      << ',' << csv_double(e.mean_tau_hat) << ',' << e.config_hash << '\n';
  }
  return o.str();
}

/// One run per axis value. Seed block b = seed_base + b * n_paths, where b is
/// the index of the value among the distinct sorted values, so repeated values
/// reuse a block and distinct values never share a seed.
inline SweepResult sweep(const ExperimentConfig& base, const std::string& axis, std::vector<double> values,
                         const RunOptions& opt = {}) {
  for (double v : values) {
    if (!std::isfinite(v)) throw ConfigError("sweep values must be finite");
  }
  std::sort(values.begin(), values.end());
  std::vector<double> distinct = values;
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  SweepResult r;
  r.axis = axis;
  std::map<double, EnsembleSummary> done;
  for (std::size_t b = 0; b < distinct.size(); ++b) {
    ExperimentConfig c = with_axis_value(base, axis, distinct[b]);
    c.seed_base = base.seed_base + static_cast<std::uint64_t>(b) * base.n_paths;
    c.n_paths = base.n_paths;
    c.outputs = (std::filesystem::path(base.outputs) / (axis + "=" + format_double(distinct[b]))).string();
    done[distinct[b]] = run(c, opt);
  }
  for (double v : values) r.points.push_back({v, done.at(v)});
  detail::write_file(std::filesystem::path(base.outputs) / "sweep.csv", sweep_csv(r), "");
  return r;
}

// --- aggregation ------------------------------------------------------------------

/// Path files named by the inputs: regular files as given, directories
/// searched recursively for *.jsonl.
inline std::vector<std::filesystem::path> collect_path_files(const std::vector<std::string>& inputs) {
  namespace fs = std::filesystem;
  std::vector<fs::path> files;
  for (const auto& in : inputs) {
    const fs::path p(in);
    if (fs::is_directory(p)) {
      for (const auto& e : fs::recursive_directory_iterator(p)) {
        if (e.is_regular_file() && e.path().extension() == ".jsonl") files.push_back(e.path());
      }
    } else if (fs::is_regular_file(p)) {
      files.push_back(p);
    } else {
      throw IoError("no such path file or directory: " + in);
    }
  }
  std::sort(files.begin(), files.end());
  return files;
}

inline EnsembleSummary aggregate(const std::vector<std::filesystem::path>& files) {
  std::vector<PathSummary> paths;
  std::vector<std::string> names;
  for (const auto& f : files) {
    auto s = read_path_summary(f);
    if (!s) throw IoError("path file " + f.string() + " has no final record");
    paths.push_back(std::move(*s));
    names.push_back(f.string());
  }
  return reduce(std::move(paths), names);
}

// --- estimator tables ------------------------------------------------------------

inline constexpr const char* kHolderHeader =
    "schema_version,config_hash,direction,k,exponent_hat,intercept,r2,lag_min,lag_max,mu_theory,eta_theory,n_paths";

inline std::string holder_csv(const std::vector<HolderFit>& fits, const std::string& hash, std::size_t n_paths) {
  using detail::csv_double;
  std::ostringstream o;
  o << kHolderHeader << '\n';
  for (const auto& f : fits) {
    o << kSchemaVersion << ',' << hash << ',' << to_string(f.direction) << ',' << csv_double(f.k) << ','
      << csv_double(f.exponent_hat) << ',' << csv_double(f.intercept) << ',' << csv_double(f.r2) << ','
      << csv_double(f.lag_range.first) << ',' << csv_double(f.lag_range.second) << ','
      << csv_double(f.mu_theory) << ',' << csv_double(f.eta_theory) << ',' << n_paths << '\n';
  }
  return o.str();
}

inline constexpr const char* kMomentsHeader =
    "schema_version,config_hash,beta,k,value,mc_stderr,n_paths,t_star,x_star,qualitative";

inline std::string moments_csv(const std::vector<MomentEstimate>& ms, const std::string& hash) {
  using detail::csv_double;
  std::ostringstream o;
  o << kMomentsHeader << '\n';
  for (const auto& m : ms) {
    o << kSchemaVersion << ',' << hash << ',' << csv_double(m.beta) << ',' << csv_double(m.k) << ','
      << csv_double(m.value) << ',' << csv_double(m.mc_stderr) << ',' << m.n_paths << ','
      << csv_double(m.t_star) << ',' << csv_double(m.x_star) << ',' << (m.qualitative ? "true" : "false")
      << '\n';
  }
  return o.str();
}

}  // namespace spdelab
