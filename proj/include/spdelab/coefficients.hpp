#pragma once

// Drift and diffusion families, their truncations b_N(z) = b(clamp(z, -N, N)),
// and affine growth envelopes |f(z)| <= c + L|z|.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

#include "spdelab/errors.hpp"

namespace spdelab {

/// log_+(w) = log(max(w, e)); at least 1 everywhere.
inline double log_plus(double w) { return std::log(std::max(w, std::numbers::e)); }

// --- drift families ---

struct LogCritical {
  double theta1 = 0.0;
  double theta2 = 1.0;
};

struct SuperLog {
  double epsilon = 1.0;
  double scale = 1.0;
  double offset = 0.0;
};

struct PowerBG {
  double power = 2.0;
  double scale = 1.0;
};

struct Cubic {
  double sign = -1.0;
};

/// Piecewise-linear table, constant beyond the end nodes.
struct Custom {
  std::vector<double> z;
  std::vector<double> values;
};

using DriftFamily = std::variant<LogCritical, SuperLog, PowerBG, Cubic, Custom>;

// --- diffusion families ---

struct Constant {
  double sigma0 = 1.0;
};

enum class BoundedShape { Tanh, SineShift };

struct Bounded {
  BoundedShape shape = BoundedShape::SineShift;
  double amplitude = 1.0;
};

struct SubQuarterLog {
  double scale = 1.0;
};

using DiffusionFamily = std::variant<Constant, Bounded, SubQuarterLog>;

struct Envelope {
  double c_b = 0.0;
  double L_b = 1.0;
  double c_sigma = 0.0;
  double L_sigma = 1.0;
};

/// L_b >= 4 L_sigma^4 > 0
inline bool moment_condition_holds(const Envelope& e) {
  return e.L_sigma > 0.0 && e.L_b >= 4.0 * std::pow(e.L_sigma, 4);
}

struct CoefficientSpec {
  DriftFamily drift = LogCritical{};
  DiffusionFamily diffusion = Constant{};
  std::optional<Envelope> envelope;
  bool moment_condition = false;
};

namespace detail {

inline double custom_value(const Custom& c, double z) {
  if (c.z.empty()) return 0.0;
  if (z <= c.z.front()) return c.values.front();
  if (z >= c.z.back()) return c.values.back();
  const auto it = std::upper_bound(c.z.begin(), c.z.end(), z);
  const std::size_t j = static_cast<std::size_t>(it - c.z.begin());
  const double w = (z - c.z[j - 1]) / (c.z[j] - c.z[j - 1]);
  return (1.0 - w) * c.values[j - 1] + w * c.values[j];
}

// Unchecked evaluation of one family member; the row kernels call these in
// their inner loops after a single dispatch.
inline double value(const LogCritical& f, double z) {
  const double a = std::abs(z);
  return f.theta1 + f.theta2 * a * log_plus(a);
}
inline double value(const SuperLog& f, double z) {
  const double a = 1.0 + std::abs(z);
  return f.scale * a * std::pow(log_plus(a), 1.0 + f.epsilon) + f.offset;
}
inline double value(const PowerBG& f, double z) { return f.scale * std::pow(1.0 + std::abs(z), f.power); }
inline double value(const Cubic& f, double z) { return f.sign * z * z * z; }
inline double value(const Custom& f, double z) { return custom_value(f, z); }
inline double value(const Constant& f, double) { return f.sigma0; }
inline double value(const Bounded& f, double z) {
  return f.shape == BoundedShape::Tanh ? f.amplitude * std::tanh(z)
                                       : f.amplitude * (1.0 + 0.5 * std::sin(z));
}
inline double value(const SubQuarterLog& f, double z) {
  const double a = 1.0 + std::abs(z);
  return f.scale * a * std::pow(log_plus(a), 0.125);
}

inline void require_finite(double z) {
  if (!std::isfinite(z)) throw DomainError("coefficient evaluated at a non-finite argument");
}

}  // namespace detail

inline void validate(const Custom& c) {
  if (c.z.size() != c.values.size() || c.z.empty()) {
    throw ConfigError("custom table needs matching, non-empty z and values");
  }
  for (std::size_t i = 1; i < c.z.size(); ++i) {
    if (!(c.z[i] > c.z[i - 1])) throw ConfigError("custom table z must be strictly increasing");
  }
}

inline void validate(const CoefficientSpec& spec) {
  std::visit(
      [](const auto& f) {
        using T = std::decay_t<decltype(f)>;
        if constexpr (std::is_same_v<T, SuperLog>) {
          if (!(f.epsilon > 0.0 && f.scale > 0.0)) throw ConfigError("super_log needs epsilon, scale > 0");
        } else if constexpr (std::is_same_v<T, PowerBG>) {
          if (!(f.power > 1.0 && f.scale > 0.0)) throw ConfigError("power_bg needs power > 1, scale > 0");
        } else if constexpr (std::is_same_v<T, Cubic>) {
          if (f.sign != 1.0 && f.sign != -1.0) throw ConfigError("cubic sign must be +1 or -1");
        } else if constexpr (std::is_same_v<T, Custom>) {
          validate(f);
        }
      },
      spec.drift);
  if (spec.moment_condition) {
    if (!spec.envelope) throw ConfigError("moment condition mode needs an envelope");
    if (!moment_condition_holds(*spec.envelope)) throw ConfigError("envelope violates L_b >= 4 L_sigma^4 > 0");
  }
}

inline double eval_drift(const DriftFamily& b, double z) {
  detail::require_finite(z);
  return std::visit([z](const auto& f) { return detail::value(f, z); }, b);
}

inline double eval_diffusion(const DiffusionFamily& s, double z) {
  detail::require_finite(z);
  return std::visit([z](const auto& f) { return detail::value(f, z); }, s);
}

inline double eval_drift(const CoefficientSpec& spec, double z) { return eval_drift(spec.drift, z); }
inline double eval_diffusion(const CoefficientSpec& spec, double z) { return eval_diffusion(spec.diffusion, z); }

/// b and sigma frozen outside [-level, level]. level = +inf is the untruncated pair.
struct TruncatedCoefficient {
  CoefficientSpec base;
  double level = std::numeric_limits<double>::infinity();

  double drift(double z) const { return eval_drift(base.drift, std::clamp(z, -level, level)); }
  double diffusion(double z) const { return eval_diffusion(base.diffusion, std::clamp(z, -level, level)); }
};

inline TruncatedCoefficient truncate(const CoefficientSpec& spec, double level) {
  if (!(level >= 1.0)) throw DomainError("truncation level must be >= 1");
  return {spec, level};
}

/// out[i] = b_N(in[i]); no finiteness check, non-finite input propagates.
inline void drift_row(const TruncatedCoefficient& c, std::span<const double> in, std::span<double> out) {
  const double n = c.level;
  std::visit(
      [&](const auto& f) {
        for (std::size_t i = 0; i < in.size(); ++i) out[i] = detail::value(f, std::clamp(in[i], -n, n));
      },
      c.base.drift);
}

inline void diffusion_row(const TruncatedCoefficient& c, std::span<const double> in, std::span<double> out) {
  const double n = c.level;
  std::visit(
      [&](const auto& f) {
        for (std::size_t i = 0; i < in.size(); ++i) out[i] = detail::value(f, std::clamp(in[i], -n, n));
      },
      c.base.diffusion);
}

inline bool is_constant_diffusion(const DiffusionFamily& s) { return std::holds_alternative<Constant>(s); }

// --- envelopes ---

struct EnvelopeResult {
  double c = 0.0;
  double L = 0.0;
  bool degenerate = false;  // L was zero, replaced by the smallest positive double
  bool inconclusive = false;
};

namespace detail {

// c = |f(0)|, L = 1.1 * max(growth ratio, adjacent difference quotient) on a
// uniform sweep of [-N, N]; refined until L settles to 1e-3.
template <class F>
EnvelopeResult sweep_envelope(F f, double level) {
  EnvelopeResult r;
  r.c = std::abs(f(0.0));
  if (!std::isfinite(level)) {
    r.inconclusive = true;
    r.L = std::numeric_limits<double>::infinity();
    return r;
  }
  double prev = -1.0;
  for (int k = 10; k <= 18; ++k) {
    const std::size_t n = std::size_t{1} << k;
    const double h = 2.0 * level / static_cast<double>(n);
    double L = 0.0;
    double z0 = -level, f0 = f(z0);
    for (std::size_t i = 1; i <= n; ++i) {
      const double z1 = -level + h * static_cast<double>(i);
      const double f1 = f(z1);
      L = std::max(L, std::abs(f1 - f0) / h);
      if (z1 != 0.0) L = std::max(L, (std::abs(f1) - r.c) / std::abs(z1));
      z0 = z1;
      f0 = f1;
    }
    if (prev >= 0.0 && std::abs(L - prev) <= 1e-3 * std::max(L, 1e-300)) {
      r.L = 1.1 * L;
      break;
    }
    prev = L;
    if (k == 18) {
      r.L = 1.1 * L;
      r.inconclusive = true;
    }
  }
  if (r.L == 0.0) {
    r.L = std::numeric_limits<double>::denorm_min();
    r.degenerate = true;
  }
  return r;
}

}  // namespace detail

/// Growth envelope of the truncated drift. LogCritical with N >= 3 uses the
/// closed form (|theta1|, |theta2| log N).
inline EnvelopeResult drift_envelope(const TruncatedCoefficient& t) {
  if (const auto* lc = std::get_if<LogCritical>(&t.base.drift); lc && t.level >= 3.0) {
    EnvelopeResult r{std::abs(lc->theta1), std::abs(lc->theta2) * std::log(t.level)};
    if (!std::isfinite(r.L)) r.inconclusive = true;
    if (r.L == 0.0) {
      r.L = std::numeric_limits<double>::denorm_min();
      r.degenerate = true;
    }
    return r;
  }
  return detail::sweep_envelope([&](double z) { return t.drift(z); }, t.level);
}

inline EnvelopeResult diffusion_envelope(const TruncatedCoefficient& t) {
  if (const auto* c = std::get_if<Constant>(&t.base.diffusion)) {
    return {std::abs(c->sigma0), std::numeric_limits<double>::denorm_min(), true, false};
  }
  return detail::sweep_envelope([&](double z) { return t.diffusion(z); }, t.level);
}

/// (c_b, L_b, c_sigma, L_sigma) for a truncation.
inline Envelope lipschitz_envelope(const TruncatedCoefficient& t) {
  const auto b = drift_envelope(t);
  const auto s = diffusion_envelope(t);
  if (b.inconclusive || s.inconclusive) {
    throw DomainError("envelope sweep inconclusive; widen the grid or truncate");
  }
  return {b.c, b.L, s.c, s.L};
}

// --- string form: "tag:key=value,key=value" ---

using ParamList = std::vector<std::pair<std::string, std::string>>;

/// Shortest round-trip decimal form.
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s, std::string_view what) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (!s.empty() && *first == '+') ++first;
  const auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc{} || res.ptr != last) {
    throw ConfigError("cannot parse '" + std::string(s) + "' as a number for " + std::string(what));
  }
  return v;
}

namespace detail {

inline std::vector<double> parse_list(std::string_view s, std::string_view what) {
  std::vector<double> out;
  while (!s.empty()) {
    const auto cut = s.find('|');
    out.push_back(parse_double(s.substr(0, cut), what));
    if (cut == std::string_view::npos) break;
    s.remove_prefix(cut + 1);
  }
  return out;
}

inline std::string format_list(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += '|';
    s += format_double(v[i]);
  }
  return s;
}

struct Params {
  std::map<std::string, std::string, std::less<>> kv;
  std::string tag;

  double num(std::string_view key, double fallback) {
    auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    const double v = parse_double(it->second, key);
    kv.erase(it);
    return v;
  }
  std::optional<std::string> text(std::string_view key) {
    auto it = kv.find(key);
    if (it == kv.end()) return std::nullopt;
    std::string v = it->second;
    kv.erase(it);
    return v;
  }
  void done() const {
    if (!kv.empty()) throw ConfigError("unknown parameter '" + kv.begin()->first + "' for " + tag);
  }
};

}  // namespace detail

inline DriftFamily make_drift(const std::string& tag, const ParamList& params) {
  detail::Params p{{params.begin(), params.end()}, tag};
  DriftFamily out;
  if (tag == "log_critical") {
    out = LogCritical{p.num("theta1", 0.0), p.num("theta2", 1.0)};
  } else if (tag == "super_log") {
    out = SuperLog{p.num("epsilon", 1.0), p.num("scale", 1.0), p.num("offset", 0.0)};
  } else if (tag == "power_bg") {
    out = PowerBG{p.num("power", 2.0), p.num("scale", 1.0)};
  } else if (tag == "cubic") {
    out = Cubic{p.num("sign", -1.0)};
  } else if (tag == "custom") {
    Custom c;
    if (auto z = p.text("z")) c.z = detail::parse_list(*z, "custom z");
    if (auto v = p.text("values")) c.values = detail::parse_list(*v, "custom values");
    validate(c);
    out = std::move(c);
  } else {
    throw ConfigError("unknown drift family '" + tag + "'");
  }
  p.done();
  return out;
}

inline DiffusionFamily make_diffusion(const std::string& tag, const ParamList& params) {
  detail::Params p{{params.begin(), params.end()}, tag};
  DiffusionFamily out;
  if (tag == "constant") {
    out = Constant{p.num("sigma0", 1.0)};
  } else if (tag == "bounded") {
    Bounded b;
    if (auto shape = p.text("shape")) {
      if (*shape == "tanh") b.shape = BoundedShape::Tanh;
      else if (*shape == "sine_shift") b.shape = BoundedShape::SineShift;
      else throw ConfigError("unknown bounded shape '" + *shape + "'");
    }
    b.amplitude = p.num("amplitude", 1.0);
    out = b;
  } else if (tag == "sub_quarter_log") {
    out = SubQuarterLog{p.num("scale", 1.0)};
  } else {
    throw ConfigError("unknown diffusion family '" + tag + "'");
  }
  p.done();
  return out;
}

/// Canonical (tag, params) with every field spelled out.
inline std::pair<std::string, ParamList> describe(const DriftFamily& b) {
  return std::visit(
      [](const auto& f) -> std::pair<std::string, ParamList> {
        using T = std::decay_t<decltype(f)>;
        auto d = format_double;
        if constexpr (std::is_same_v<T, LogCritical>) {
          return {"log_critical", {{"theta1", d(f.theta1)}, {"theta2", d(f.theta2)}}};
        } else if constexpr (std::is_same_v<T, SuperLog>) {
          return {"super_log", {{"epsilon", d(f.epsilon)}, {"scale", d(f.scale)}, {"offset", d(f.offset)}}};
        } else if constexpr (std::is_same_v<T, PowerBG>) {
          return {"power_bg", {{"power", d(f.power)}, {"scale", d(f.scale)}}};
        } else if constexpr (std::is_same_v<T, Cubic>) {
          return {"cubic", {{"sign", d(f.sign)}}};
        } else {
          return {"custom", {{"z", detail::format_list(f.z)}, {"values", detail::format_list(f.values)}}};
        }
      },
      b);
}

inline std::pair<std::string, ParamList> describe(const DiffusionFamily& s) {
  return std::visit(
      [](const auto& f) -> std::pair<std::string, ParamList> {
        using T = std::decay_t<decltype(f)>;
        if constexpr (std::is_same_v<T, Constant>) {
          return {"constant", {{"sigma0", format_double(f.sigma0)}}};
        } else if constexpr (std::is_same_v<T, Bounded>) {
          return {"bounded",
                  {{"shape", f.shape == BoundedShape::Tanh ? "tanh" : "sine_shift"},
                   {"amplitude", format_double(f.amplitude)}}};
        } else {
          return {"sub_quarter_log", {{"scale", format_double(f.scale)}}};
        }
      },
      s);
}

namespace detail {

inline std::pair<std::string, ParamList> split_spec_string(std::string_view s) {
  const auto colon = s.find(':');
  std::pair<std::string, ParamList> out{std::string(s.substr(0, colon)), {}};
  if (colon == std::string_view::npos) return out;
  std::string_view rest = s.substr(colon + 1);
  while (!rest.empty()) {
    const auto comma = rest.find(',');
    const std::string_view item = rest.substr(0, comma);
    const auto eq = item.find('=');
    if (eq == std::string_view::npos) throw ConfigError("expected key=value in '" + std::string(item) + "'");
    out.second.emplace_back(std::string(item.substr(0, eq)), std::string(item.substr(eq + 1)));
    if (comma == std::string_view::npos) break;
    rest.remove_prefix(comma + 1);
  }
  return out;
}

inline std::string join_spec_string(const std::pair<std::string, ParamList>& d) {
  std::string s = d.first;
  for (std::size_t i = 0; i < d.second.size(); ++i) {
    s += (i ? ',' : ':');
    s += d.second[i].first + "=" + d.second[i].second;
  }
  return s;
}

}  // namespace detail

/// "log_critical:theta1=0,theta2=1"
inline DriftFamily parse_drift(std::string_view s) {
  const auto [tag, params] = detail::split_spec_string(s);
  return make_drift(tag, params);
}

/// "bounded:shape=tanh,amplitude=1"
inline DiffusionFamily parse_diffusion(std::string_view s) {
  const auto [tag, params] = detail::split_spec_string(s);
  return make_diffusion(tag, params);
}

inline std::string to_string(const DriftFamily& b) { return detail::join_spec_string(describe(b)); }
inline std::string to_string(const DiffusionFamily& s) { return detail::join_spec_string(describe(s)); }

}  // namespace spdelab
