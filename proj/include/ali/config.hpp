#pragma once

#include <bit>
#include <cctype>
#include <cerrno>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include "ali/cfm.hpp"
#include "ali/checkpoint.hpp"

// Experiment configuration: a small TOML subset (sections of key = value with
// strings, booleans, integers, floats and flat arrays) plus the typed view the
// commands consume. Serialisation is canonical, so parse -> serialise -> parse
// is a fixed point and a second serialisation is byte-identical.

namespace ali {

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error("config: " + what) {}
};

struct TomlValue {
  enum class Kind { Bool, Int, Float, String, Array };
  Kind kind = Kind::Int;
  bool b = false;
  long long i = 0;
  double f = 0.0;
  std::string s;
  std::vector<TomlValue> arr;

  static TomlValue of(bool v) { TomlValue t; t.kind = Kind::Bool; t.b = v; return t; }
  template <class T, std::enable_if_t<std::is_integral_v<T> && !std::is_same_v<T, bool>, int> = 0>
  static TomlValue of(T v) {
    TomlValue t;
    t.kind = Kind::Int;
    t.i = static_cast<long long>(v);
    return t;
  }
  static TomlValue of(double v) { TomlValue t; t.kind = Kind::Float; t.f = v; return t; }
  static TomlValue of(const std::string& v) { TomlValue t; t.kind = Kind::String; t.s = v; return t; }
  static TomlValue of(const char* v) { return of(std::string(v)); }
  static TomlValue of(const std::vector<std::size_t>& v) {
    TomlValue t;
    t.kind = Kind::Array;
    for (std::size_t x : v) t.arr.push_back(of(x));
    return t;
  }

  bool operator==(const TomlValue& o) const {
    if (kind != o.kind) return false;
    switch (kind) {
      case Kind::Bool: return b == o.b;
      case Kind::Int: return i == o.i;
      case Kind::Float:
        return std::bit_cast<std::uint64_t>(f) == std::bit_cast<std::uint64_t>(o.f);
      case Kind::String: return s == o.s;
      case Kind::Array: return arr == o.arr;
    }
    return false;
  }
};

using TomlSection = std::map<std::string, TomlValue>;

struct TomlDoc {
  TomlSection root;
  std::map<std::string, TomlSection> sections;

  bool operator==(const TomlDoc&) const = default;
};

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

// Strips a trailing comment, respecting quoted strings.
inline std::string strip_comment(const std::string& line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (c == '"' && (i == 0 || line[i - 1] != '\\')) quoted = !quoted;
    if (c == '#' && !quoted) return line.substr(0, i);
  }
  return line;
}

inline bool valid_key(const std::string& k) {
  if (k.empty()) return false;
  for (char c : k)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-')) return false;
  return true;
}

[[noreturn]] inline void parse_fail(std::size_t line, const std::string& what) {
  throw ConfigError("line " + std::to_string(line) + ": " + what);
}

inline std::string unquote(const std::string& v, std::size_t line) {
  if (v.size() < 2 || v.back() != '"') parse_fail(line, "unterminated string");
  std::string out;
  for (std::size_t i = 1; i + 1 < v.size(); ++i) {
    char c = v[i];
    if (c == '\\') {
      if (i + 2 >= v.size()) parse_fail(line, "dangling escape in string");
      c = v[++i];
      switch (c) {
        case '"': out += '"'; break;
        case '\\': out += '\\'; break;
        case 'n': out += '\n'; break;
        case 't': out += '\t'; break;
        case 'r': out += '\r'; break;
        default: parse_fail(line, std::string("unsupported escape \\") + c);
      }
    } else if (c == '"') {
      parse_fail(line, "unescaped quote inside string");
    } else {
      out += c;
    }
  }
  return out;
}

inline TomlValue parse_value(const std::string& raw, std::size_t line);

inline TomlValue parse_array(const std::string& raw, std::size_t line) {
  if (raw.back() != ']') parse_fail(line, "unterminated array");
  TomlValue out;
  out.kind = TomlValue::Kind::Array;
  const std::string inner = trim(raw.substr(1, raw.size() - 2));
  if (inner.empty()) return out;
  bool quoted = false;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= inner.size(); ++i) {
    if (i < inner.size()) {
      const char c = inner[i];
      if (c == '"' && (i == 0 || inner[i - 1] != '\\')) quoted = !quoted;
      if (c == '[' && !quoted) parse_fail(line, "nested arrays are not supported");
      if (c != ',' || quoted) continue;
    }
    const std::string item = trim(inner.substr(start, i - start));
    if (item.empty()) parse_fail(line, "empty array element");
    out.arr.push_back(parse_value(item, line));
    start = i + 1;
  }
  for (const TomlValue& v : out.arr)
    if (v.arr.size() || v.kind != out.arr.front().kind)
      parse_fail(line, "mixed element types in array");
  return out;
}

inline TomlValue parse_value(const std::string& raw, std::size_t line) {
  if (raw.empty()) parse_fail(line, "missing value");
  if (raw.front() == '"') return TomlValue::of(unquote(raw, line));
  if (raw.front() == '[') return parse_array(raw, line);
  if (raw == "true") return TomlValue::of(true);
  if (raw == "false") return TomlValue::of(false);

  bool integral = true;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const char c = raw[i];
    if (i == 0 && (c == '+' || c == '-')) continue;
    if (!std::isdigit(static_cast<unsigned char>(c))) integral = false;
  }
  if (integral && raw != "+" && raw != "-") {
    errno = 0;
    char* end = nullptr;
    const long long v = std::strtoll(raw.c_str(), &end, 10);
    if (errno != 0 || end != raw.c_str() + raw.size())
      parse_fail(line, "integer out of range: " + raw);
    return TomlValue::of(v);
  }
  char* end = nullptr;
  const double v = std::strtod(raw.c_str(), &end);
  if (end != raw.c_str() + raw.size() || raw == "." || end == raw.c_str())
    parse_fail(line, "cannot parse value: " + raw);
  return TomlValue::of(v);
}

inline std::string format_float(double v) {
  std::string s = format_g17(v);
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

inline std::string format_value(const TomlValue& v) {
  switch (v.kind) {
    case TomlValue::Kind::Bool: return v.b ? "true" : "false";
    case TomlValue::Kind::Int: return std::to_string(v.i);
    case TomlValue::Kind::Float: return format_float(v.f);
    case TomlValue::Kind::String: {
      std::string out = "\"";
      for (char c : v.s) {
        switch (c) {
          case '"': out += "\\\""; break;
          case '\\': out += "\\\\"; break;
          case '\n': out += "\\n"; break;
          case '\t': out += "\\t"; break;
          case '\r': out += "\\r"; break;
          default: out += c;
        }
      }
      return out + "\"";
    }
    case TomlValue::Kind::Array: {
      std::string out = "[";
      for (std::size_t i = 0; i < v.arr.size(); ++i) {
        if (i) out += ", ";
        out += format_value(v.arr[i]);
      }
      return out + "]";
    }
  }
  return "";
}

}  // namespace detail

inline TomlDoc parse_toml(const std::string& text) {
  TomlDoc doc;
  TomlSection* current = &doc.root;
  std::istringstream in(text);
  std::string raw;
  std::size_t lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    const std::string line = detail::trim(detail::strip_comment(raw));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') detail::parse_fail(lineno, "unterminated section header");
      const std::string name = detail::trim(line.substr(1, line.size() - 2));
      if (!detail::valid_key(name)) detail::parse_fail(lineno, "bad section name: " + name);
      if (doc.sections.count(name)) detail::parse_fail(lineno, "duplicate section [" + name + "]");
      current = &doc.sections[name];
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) detail::parse_fail(lineno, "expected key = value");
    const std::string key = detail::trim(line.substr(0, eq));
    if (!detail::valid_key(key)) detail::parse_fail(lineno, "bad key: " + key);
    if (current->count(key)) detail::parse_fail(lineno, "duplicate key: " + key);
    (*current)[key] = detail::parse_value(detail::trim(line.substr(eq + 1)), lineno);
  }
  return doc;
}

inline std::string serialise_toml(const TomlDoc& doc) {
  std::string out;
  for (const auto& [k, v] : doc.root) out += k + " = " + detail::format_value(v) + "\n";
  for (const auto& [name, sec] : doc.sections) {
    if (!out.empty()) out += "\n";
    out += "[" + name + "]\n";
    for (const auto& [k, v] : sec) out += k + " = " + detail::format_value(v) + "\n";
  }
  return out;
}

// "section.key=value" or "key=value" for root keys; the value uses the same
// grammar as the file. Inserts or overwrites.
inline void apply_set_override(TomlDoc& doc, const std::string& spec) {
  const std::size_t eq = spec.find('=');
  if (eq == std::string::npos) throw ConfigError("--set needs key=value, got: " + spec);
  const std::string path = detail::trim(spec.substr(0, eq));
  const std::string raw = detail::trim(spec.substr(eq + 1));
  const std::size_t dot = path.find('.');
  TomlSection* sec = &doc.root;
  std::string key = path;
  if (dot != std::string::npos) {
    const std::string section = path.substr(0, dot);
    key = path.substr(dot + 1);
    if (!detail::valid_key(section)) throw ConfigError("--set: bad section name: " + section);
    sec = &doc.sections[section];
  }
  if (!detail::valid_key(key) || key.find('.') != std::string::npos)
    throw ConfigError("--set: bad key: " + path);
  (*sec)[key] = detail::parse_value(raw, 0);
}

// Which conditional-path family the cfm stage trains on.
enum class PathFamily { Linear, Piecewise, Spline, Ali };

inline const char* path_family_name(PathFamily f) {
  switch (f) {
    case PathFamily::Linear: return "linear";
    case PathFamily::Piecewise: return "piecewise";
    case PathFamily::Spline: return "spline";
    case PathFamily::Ali: return "ali";
  }
  return "?";
}

inline PathFamily path_family_from_name(const std::string& s) {
  if (s == "linear") return PathFamily::Linear;
  if (s == "piecewise") return PathFamily::Piecewise;
  if (s == "spline") return PathFamily::Spline;
  if (s == "ali") return PathFamily::Ali;
  throw std::invalid_argument("unknown interpolant: " + s);
}

struct DataConfig {
  std::string generator = "knot";  // "knot" or "csv"
  std::string path;                // csv source when generator == "csv"
  std::size_t marginals = 1200;
  std::size_t samples = 10;
  double sigma = 0.1;
  bool normalise = true;
};

struct EvalConfig {
  EvalMode mode = EvalMode::Trajectory;
  std::size_t steps_per_unit = 101;
  EmdCost cost = EmdCost::Euclidean;
  bool fresh_reference = false;  // score against a fresh draw of the generator
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::string output_dir = "out";
  DataConfig data;
  PathFamily interpolant = PathFamily::Ali;
  AliTrainConfig ali;  // coupling kind and regulariser ride along inside
  CfmTrainConfig cfm;
  bool ali_resume = false;
  bool cfm_resume = false;
  std::size_t checkpoint_every = 0;  // 0: only at the end
  RolloutConfig rollout;
  EvalConfig eval;
};

namespace detail {

// Typed access plus unknown-key detection: every get marks its key, finish()
// rejects what was never asked for.
class SectionReader {
 public:
  SectionReader(const TomlSection* sec, std::string name)
      : sec_(sec), name_(std::move(name)) {}

  const TomlValue* find(const std::string& key) {
    seen_.insert(key);
    if (!sec_) return nullptr;
    const auto it = sec_->find(key);
    return it == sec_->end() ? nullptr : &it->second;
  }

  bool get_bool(const std::string& key, bool dflt) {
    const TomlValue* v = find(key);
    if (!v) return dflt;
    if (v->kind != TomlValue::Kind::Bool) fail(key, "a boolean");
    return v->b;
  }

  std::uint64_t get_u64(const std::string& key, std::uint64_t dflt) {
    const TomlValue* v = find(key);
    if (!v) return dflt;
    if (v->kind != TomlValue::Kind::Int || v->i < 0) fail(key, "a nonnegative integer");
    return static_cast<std::uint64_t>(v->i);
  }

  double get_f64(const std::string& key, double dflt) {
    const TomlValue* v = find(key);
    if (!v) return dflt;
    if (v->kind == TomlValue::Kind::Int) return static_cast<double>(v->i);
    if (v->kind != TomlValue::Kind::Float) fail(key, "a number");
    return v->f;
  }

  std::string get_str(const std::string& key, const std::string& dflt) {
    const TomlValue* v = find(key);
    if (!v) return dflt;
    if (v->kind != TomlValue::Kind::String) fail(key, "a string");
    return v->s;
  }

  std::vector<std::size_t> get_sizes(const std::string& key, std::vector<std::size_t> dflt) {
    const TomlValue* v = find(key);
    if (!v) return dflt;
    if (v->kind != TomlValue::Kind::Array) fail(key, "an integer array");
    std::vector<std::size_t> out;
    for (const TomlValue& e : v->arr) {
      if (e.kind != TomlValue::Kind::Int || e.i < 0) fail(key, "an array of nonnegative integers");
      out.push_back(static_cast<std::size_t>(e.i));
    }
    return out;
  }

  template <class Enum, class FromName>
  Enum get_enum(const std::string& key, Enum dflt, FromName from_name) {
    const TomlValue* v = find(key);
    if (!v) return dflt;
    if (v->kind != TomlValue::Kind::String) fail(key, "a name string");
    try {
      return from_name(v->s);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(qualify(key) + ": " + e.what());
    }
  }

  void require(const std::string& key) {
    if (!find(key)) throw ConfigError(qualify(key) + " is mandatory");
  }

  void finish() const {
    if (!sec_) return;
    for (const auto& [k, _] : *sec_)
      if (!seen_.count(k)) throw ConfigError("unknown key " + qualify(k));
  }

 private:
  std::string qualify(const std::string& key) const {
    return name_.empty() ? key : name_ + "." + key;
  }
  [[noreturn]] void fail(const std::string& key, const char* what) const {
    throw ConfigError(qualify(key) + " must be " + what);
  }

  const TomlSection* sec_;
  std::string name_;
  std::set<std::string> seen_;
};

inline const TomlSection* section_of(const TomlDoc& doc, const std::string& name) {
  const auto it = doc.sections.find(name);
  return it == doc.sections.end() ? nullptr : &it->second;
}

}  // namespace detail

inline ExperimentConfig parse_experiment_config(const TomlDoc& doc) {
  ExperimentConfig cfg;
  static const std::set<std::string> known = {"data",        "coupling", "interpolant",
                                             "ali_train",   "regulariser", "cfm",
                                             "rollout",     "eval"};
  for (const auto& [name, _] : doc.sections)
    if (!known.count(name)) throw ConfigError("unknown section [" + name + "]");

  detail::SectionReader root(&doc.root, "");
  root.require("seed");
  cfg.seed = root.get_u64("seed", 0);
  cfg.output_dir = root.get_str("output_dir", cfg.output_dir);
  root.finish();

  detail::SectionReader data(detail::section_of(doc, "data"), "data");
  cfg.data.generator = data.get_str("generator", cfg.data.generator);
  if (cfg.data.generator != "knot" && cfg.data.generator != "csv")
    throw ConfigError("data.generator must be \"knot\" or \"csv\"");
  cfg.data.path = data.get_str("path", cfg.data.path);
  cfg.data.marginals = data.get_u64("marginals", cfg.data.marginals);
  cfg.data.samples = data.get_u64("samples", cfg.data.samples);
  cfg.data.sigma = data.get_f64("sigma", cfg.data.sigma);
  cfg.data.normalise = data.get_bool("normalise", cfg.data.normalise);
  if (cfg.data.generator == "csv" && cfg.data.path.empty())
    throw ConfigError("data.path is mandatory when data.generator is \"csv\"");
  data.finish();

  detail::SectionReader coupling(detail::section_of(doc, "coupling"), "coupling");
  cfg.ali.coupling =
      coupling.get_enum("kind", CouplingKind::Ot, coupling_kind_from_name);
  coupling.finish();

  detail::SectionReader interp(detail::section_of(doc, "interpolant"), "interpolant");
  cfg.interpolant = interp.get_enum("kind", PathFamily::Ali, path_family_from_name);
  interp.finish();

  detail::SectionReader ali(detail::section_of(doc, "ali_train"), "ali_train");
  cfg.ali.iterations = ali.get_u64("iterations", cfg.ali.iterations);
  cfg.ali.batch = ali.get_u64("batch", cfg.ali.batch);
  cfg.ali.lr_gen = ali.get_f64("lr_gen", cfg.ali.lr_gen);
  cfg.ali.lr_disc = ali.get_f64("lr_disc", cfg.ali.lr_disc);
  cfg.ali.time_noise_std = ali.get_f64("time_noise_std", cfg.ali.time_noise_std);
  cfg.ali.pretrain_steps = ali.get_u64("pretrain_steps", cfg.ali.pretrain_steps);
  cfg.ali.gen_hidden = ali.get_sizes("gen_hidden", cfg.ali.gen_hidden);
  cfg.ali.disc_hidden = ali.get_sizes("disc_hidden", cfg.ali.disc_hidden);
  cfg.ali.gan = ali.get_enum("gan", cfg.ali.gan, gan_variant_from_name);
  cfg.ali_resume = ali.get_bool("resume", cfg.ali_resume);
  cfg.checkpoint_every = ali.get_u64("checkpoint_every", cfg.checkpoint_every);
  ali.finish();

  detail::SectionReader reg(detail::section_of(doc, "regulariser"), "regulariser");
  cfg.ali.reg.kind = reg.get_enum("kind", cfg.ali.reg.kind, reg_kind_from_name);
  cfg.ali.reg.lambda = reg.get_f64("lambda", cfg.ali.reg.lambda);
  cfg.ali.reg.h = reg.get_f64("h", cfg.ali.reg.h);
  cfg.ali.reg.mc_samples = reg.get_u64("mc_samples", cfg.ali.reg.mc_samples);
  cfg.ali.reg.norm = reg.get_enum("norm", cfg.ali.reg.norm, reg_norm_from_name);
  reg.finish();

  detail::SectionReader cfm(detail::section_of(doc, "cfm"), "cfm");
  cfg.cfm.iterations = cfm.get_u64("iterations", cfg.cfm.iterations);
  cfg.cfm.batch = cfm.get_u64("batch", cfg.cfm.batch);
  cfg.cfm.lr = cfm.get_f64("lr", cfg.cfm.lr);
  cfg.cfm.hidden = cfm.get_sizes("hidden", cfg.cfm.hidden);
  cfg.cfm_resume = cfm.get_bool("resume", cfg.cfm_resume);
  cfm.finish();

  detail::SectionReader roll(detail::section_of(doc, "rollout"), "rollout");
  cfg.rollout.solver = roll.get_enum("solver", cfg.rollout.solver, solver_from_name);
  cfg.rollout.steps = roll.get_u64("steps", cfg.rollout.steps);
  cfg.rollout.stride = roll.get_u64("stride", cfg.rollout.stride);
  roll.finish();

  detail::SectionReader eval(detail::section_of(doc, "eval"), "eval");
  cfg.eval.mode = eval.get_enum("mode", cfg.eval.mode, eval_mode_from_name);
  cfg.eval.steps_per_unit = eval.get_u64("steps_per_unit", cfg.eval.steps_per_unit);
  cfg.eval.cost = eval.get_enum("cost", cfg.eval.cost, emd_cost_from_name);
  cfg.eval.fresh_reference = eval.get_bool("fresh_reference", cfg.eval.fresh_reference);
  eval.finish();

  try {
    cfg.ali.validate();
    cfg.cfm.validate();
    cfg.rollout.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (cfg.data.generator == "knot") {
    if (cfg.data.marginals < 3 || cfg.data.marginals % 3 != 0)
      throw ConfigError("data.marginals must be a positive multiple of 3");
    if (cfg.data.samples == 0) throw ConfigError("data.samples must be positive");
    if (!(cfg.data.sigma > 0.0)) throw ConfigError("data.sigma must be positive");
  }
  if (cfg.eval.steps_per_unit == 0) throw ConfigError("eval.steps_per_unit must be positive");
  if (cfg.eval.fresh_reference && cfg.data.generator == "csv")
    throw ConfigError("eval.fresh_reference needs a generator, not a csv source");
  if (cfg.output_dir.empty()) throw ConfigError("output_dir must not be empty");
  return cfg;
}

inline ExperimentConfig parse_experiment_config(const std::string& text) {
  return parse_experiment_config(parse_toml(text));
}

inline TomlDoc serialise_experiment_config(const ExperimentConfig& cfg) {
  TomlDoc doc;
  doc.root["seed"] = TomlValue::of(cfg.seed);
  doc.root["output_dir"] = TomlValue::of(cfg.output_dir);

  TomlSection& data = doc.sections["data"];
  data["generator"] = TomlValue::of(cfg.data.generator);
  if (!cfg.data.path.empty()) data["path"] = TomlValue::of(cfg.data.path);
  data["marginals"] = TomlValue::of(cfg.data.marginals);
  data["samples"] = TomlValue::of(cfg.data.samples);
  data["sigma"] = TomlValue::of(cfg.data.sigma);
  data["normalise"] = TomlValue::of(cfg.data.normalise);

  doc.sections["coupling"]["kind"] = TomlValue::of(coupling_kind_name(cfg.ali.coupling));
  doc.sections["interpolant"]["kind"] = TomlValue::of(path_family_name(cfg.interpolant));

  TomlSection& ali = doc.sections["ali_train"];
  ali["iterations"] = TomlValue::of(cfg.ali.iterations);
  ali["batch"] = TomlValue::of(cfg.ali.batch);
  ali["lr_gen"] = TomlValue::of(cfg.ali.lr_gen);
  ali["lr_disc"] = TomlValue::of(cfg.ali.lr_disc);
  ali["time_noise_std"] = TomlValue::of(cfg.ali.time_noise_std);
  ali["pretrain_steps"] = TomlValue::of(cfg.ali.pretrain_steps);
  ali["gen_hidden"] = TomlValue::of(cfg.ali.gen_hidden);
  ali["disc_hidden"] = TomlValue::of(cfg.ali.disc_hidden);
  ali["gan"] = TomlValue::of(gan_variant_name(cfg.ali.gan));
  ali["resume"] = TomlValue::of(cfg.ali_resume);
  ali["checkpoint_every"] = TomlValue::of(cfg.checkpoint_every);

  TomlSection& reg = doc.sections["regulariser"];
  reg["kind"] = TomlValue::of(reg_kind_name(cfg.ali.reg.kind));
  reg["lambda"] = TomlValue::of(cfg.ali.reg.lambda);
  reg["h"] = TomlValue::of(cfg.ali.reg.h);
  reg["mc_samples"] = TomlValue::of(cfg.ali.reg.mc_samples);
  reg["norm"] = TomlValue::of(reg_norm_name(cfg.ali.reg.norm));

  TomlSection& cfm = doc.sections["cfm"];
  cfm["iterations"] = TomlValue::of(cfg.cfm.iterations);
  cfm["batch"] = TomlValue::of(cfg.cfm.batch);
  cfm["lr"] = TomlValue::of(cfg.cfm.lr);
  cfm["hidden"] = TomlValue::of(cfg.cfm.hidden);
  cfm["resume"] = TomlValue::of(cfg.cfm_resume);

  TomlSection& roll = doc.sections["rollout"];
  roll["solver"] = TomlValue::of(solver_name(cfg.rollout.solver));
  roll["steps"] = TomlValue::of(cfg.rollout.steps);
  roll["stride"] = TomlValue::of(cfg.rollout.stride);

  TomlSection& eval = doc.sections["eval"];
  eval["mode"] = TomlValue::of(eval_mode_name(cfg.eval.mode));
  eval["steps_per_unit"] = TomlValue::of(cfg.eval.steps_per_unit);
  eval["cost"] = TomlValue::of(emd_cost_name(cfg.eval.cost));
  eval["fresh_reference"] = TomlValue::of(cfg.eval.fresh_reference);

  return doc;
}

inline std::string serialise_experiment_config_text(const ExperimentConfig& cfg) {
  return serialise_toml(serialise_experiment_config(cfg));
}

// The file-existence invariant, enforced where commands touch the filesystem.
inline void validate_input_files(const ExperimentConfig& cfg) {
  if (cfg.data.generator == "csv" && !std::filesystem::exists(cfg.data.path))
    throw ConfigError("data.path does not exist: " + cfg.data.path);
}

}  // namespace ali
