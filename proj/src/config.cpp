#include "fei/config.hpp"

#include <fmt/format.h>

#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include "fei/errors.hpp"

namespace fei {

std::string ConfigValue::type_name() const {
  switch (data.index()) {
    case 0: return "bool";
    case 1: return "integer";
    case 2: return "float";
    case 3: return "string";
    default: return "list";
  }
}

std::string ConfigValue::render() const {
  struct V {
    std::string operator()(bool b) const { return b ? "true" : "false"; }
    std::string operator()(long long i) const { return std::to_string(i); }
    std::string operator()(double d) const {
      std::string s = fmt::format("{:.17g}", d);
      if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
      return s;
    }
    std::string operator()(const std::string& s) const {
      std::string out = "\"";
      for (char c : s) {
        if (c == '"' || c == '\\') out += '\\';
        out += c;
      }
      return out + "\"";
    }
    std::string operator()(const List& l) const {
      std::string out = "[";
      for (std::size_t i = 0; i < l.size(); ++i) {
        if (i) out += ", ";
        out += l[i].render();
      }
      return out + "]";
    }
  };
  return std::visit(V{}, data);
}

// ---------------------------------------------------------------------------
// Parsing

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string strip_comment(const std::string& line) {
  bool in_string = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"' && (i == 0 || line[i - 1] != '\\')) in_string = !in_string;
    if (line[i] == '#' && !in_string) return line.substr(0, i);
  }
  return line;
}

ConfigValue parse_scalar(const std::string& raw) {
  const std::string t = trim(raw);
  if (t.empty()) throw ConfigError("empty value");
  if (t.front() == '"') {
    if (t.size() < 2 || t.back() != '"') throw ConfigError("unterminated string: " + t);
    std::string out;
    for (std::size_t i = 1; i + 1 < t.size(); ++i) {
      if (t[i] == '\\' && i + 2 < t.size()) ++i;
      out += t[i];
    }
    return {out};
  }
  if (t == "true") return {true};
  if (t == "false") return {false};
  std::size_t pos = 0;
  const bool looks_float = t.find_first_of(".eE") != std::string::npos ||
                           t == "inf" || t == "nan";
  try {
    if (!looks_float) {
      const long long v = std::stoll(t, &pos);
      if (pos == t.size()) return {v};
    }
    const double d = std::stod(t, &pos);
    if (pos == t.size()) return {d};
  } catch (const std::logic_error&) {
  }
  // bare words are accepted as strings so overrides like trainer.kind=ei work
  for (char c : t) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.' ||
          c == '/' || c == ':')) {
      throw ConfigError("cannot parse value '" + t + "'");
    }
  }
  return {t};
}

}  // namespace

ConfigValue parse_config_value(const std::string& text) {
  const std::string t = trim(text);
  if (!t.empty() && t.front() == '[') {
    if (t.back() != ']') throw ConfigError("unterminated list: " + t);
    ConfigValue::List items;
    std::string body = t.substr(1, t.size() - 2);
    std::string cur;
    bool in_string = false;
    for (char c : body) {
      if (c == '"') in_string = !in_string;
      if (c == ',' && !in_string) {
        if (!trim(cur).empty()) items.push_back(parse_scalar(cur));
        cur.clear();
      } else {
        cur += c;
      }
    }
    if (!trim(cur).empty()) items.push_back(parse_scalar(cur));
    return {items};
  }
  return parse_scalar(t);
}

ConfigTable parse_config_text(const std::string& text, const std::string& origin) {
  ConfigTable table;
  std::stringstream ss(text);
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const std::string t = trim(strip_comment(line));
    if (t.empty()) continue;
    const auto where = origin + ":" + std::to_string(lineno);
    if (t.front() == '[' && t.find('=') == std::string::npos) {
      if (t.back() != ']') throw ConfigError(where + ": malformed section header");
      section = trim(t.substr(1, t.size() - 2));
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
    const std::string key = trim(t.substr(0, eq));
    if (key.empty()) throw ConfigError(where + ": empty key");
    const std::string full = section.empty() ? key : section + "." + key;
    try {
      table[full] = parse_config_value(t.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(where + ": " + full + ": " + e.what());
    }
  }
  return table;
}

ConfigTable parse_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str(), path.string());
}

// ---------------------------------------------------------------------------
// Key registry

namespace {

struct Binding {
  std::function<void(ExperimentConfig&, const ConfigValue&)> set;
  std::function<ConfigValue(const ExperimentConfig&)> get;
};

double as_double(const ConfigValue& v) {
  if (const auto* d = std::get_if<double>(&v.data)) return *d;
  if (const auto* i = std::get_if<long long>(&v.data)) return static_cast<double>(*i);
  throw ConfigError("expected a number, got " + v.type_name());
}

long long as_int(const ConfigValue& v) {
  if (const auto* i = std::get_if<long long>(&v.data)) return *i;
  if (const auto* d = std::get_if<double>(&v.data)) {
    if (std::floor(*d) == *d) return static_cast<long long>(*d);
  }
  throw ConfigError("expected an integer, got " + v.type_name());
}

bool as_bool(const ConfigValue& v) {
  if (const auto* b = std::get_if<bool>(&v.data)) return *b;
  throw ConfigError("expected true/false, got " + v.type_name());
}

std::string as_string(const ConfigValue& v) {
  if (const auto* s = std::get_if<std::string>(&v.data)) return *s;
  if (const auto* i = std::get_if<long long>(&v.data)) return std::to_string(*i);
  throw ConfigError("expected a string, got " + v.type_name());
}

const ConfigValue::List& as_list(const ConfigValue& v) {
  if (const auto* l = std::get_if<ConfigValue::List>(&v.data)) return *l;
  throw ConfigError("expected a list, got " + v.type_name());
}

template <typename T>
Binding number(T ExperimentConfig::*sec, auto member) {
  using Field = std::remove_reference_t<decltype(std::declval<T&>().*member)>;
  return {[sec, member](ExperimentConfig& c, const ConfigValue& v) {
            if constexpr (std::is_same_v<Field, double>) {
              (c.*sec).*member = as_double(v);
            } else if constexpr (std::is_same_v<Field, bool>) {
              (c.*sec).*member = as_bool(v);
            } else if constexpr (std::is_same_v<Field, std::string>) {
              (c.*sec).*member = as_string(v);
            } else if constexpr (std::is_same_v<Field, std::uint64_t>) {
              const long long i = as_int(v);
              if (i < 0) throw ConfigError("seeds must be >= 0");
              (c.*sec).*member = static_cast<std::uint64_t>(i);
            } else {
              (c.*sec).*member = static_cast<Field>(as_int(v));
            }
          },
          [sec, member](const ExperimentConfig& c) -> ConfigValue {
            const Field& f = (c.*sec).*member;
            if constexpr (std::is_same_v<Field, double>) {
              return {f};
            } else if constexpr (std::is_same_v<Field, bool>) {
              return {f};
            } else if constexpr (std::is_same_v<Field, std::string>) {
              return {f};
            } else {
              return {static_cast<long long>(f)};
            }
          }};
}

template <typename T, typename E>
Binding list(T ExperimentConfig::*sec, std::vector<E> T::*member) {
  return {[sec, member](ExperimentConfig& c, const ConfigValue& v) {
            std::vector<E> out;
            for (const auto& item : as_list(v)) {
              if constexpr (std::is_same_v<E, double>) {
                out.push_back(as_double(item));
              } else {
                out.push_back(static_cast<E>(as_int(item)));
              }
            }
            (c.*sec).*member = std::move(out);
          },
          [sec, member](const ExperimentConfig& c) -> ConfigValue {
            ConfigValue::List l;
            for (const auto& e : (c.*sec).*member) {
              if constexpr (std::is_same_v<E, double>) {
                l.push_back({static_cast<double>(e)});
              } else {
                l.push_back({static_cast<long long>(e)});
              }
            }
            return {l};
          }};
}

// "data.train_ids" accepts "1-10" or a list of integers.
Binding id_list(std::string ExperimentConfig::Data::*member) {
  return {[member](ExperimentConfig& c, const ConfigValue& v) {
            if (const auto* l = std::get_if<ConfigValue::List>(&v.data)) {
              std::string s;
              for (const auto& item : *l) s += (s.empty() ? "" : ",") + std::to_string(as_int(item));
              c.data.*member = s;
            } else {
              c.data.*member = as_string(v);
            }
          },
          [member](const ExperimentConfig& c) -> ConfigValue { return {c.data.*member}; }};
}

using C = ExperimentConfig;

const std::vector<std::pair<std::string, Binding>>& registry() {
  static const std::vector<std::pair<std::string, Binding>> r = {
      {"data.source", number(&C::data, &C::Data::source)},
      {"data.size", number(&C::data, &C::Data::size)},
      {"data.train_ids", id_list(&C::Data::train_ids)},
      {"data.test_ids", id_list(&C::Data::test_ids)},
      {"data.noise_std", number(&C::data, &C::Data::noise_std)},
      {"physics.kind", number(&C::physics, &C::Physics::kind)},
      {"physics.angles", number(&C::physics, &C::Physics::angles)},
      {"physics.angle_list", list(&C::physics, &C::Physics::angle_list)},
      {"physics.scale", number(&C::physics, &C::Physics::scale)},
      {"physics.keep_fraction", number(&C::physics, &C::Physics::keep_fraction)},
      {"physics.measurements", number(&C::physics, &C::Physics::measurements)},
      {"group.family", number(&C::group, &C::Group::family)},
      {"group.angles", list(&C::group, &C::Group::angles)},
      {"group.max_shift", number(&C::group, &C::Group::max_shift)},
      {"model.arch", number(&C::model, &C::Model::arch)},
      {"model.channels", list(&C::model, &C::Model::channels)},
      {"model.width", number(&C::model, &C::Model::width)},
      {"model.init", number(&C::model, &C::Model::init)},
      {"model.zero_last", number(&C::model, &C::Model::zero_last)},
      {"model.seed", number(&C::model, &C::Model::seed)},
      {"trainer.kind", number(&C::trainer, &C::Trainer::kind)},
      {"trainer.alpha", number(&C::trainer, &C::Trainer::alpha)},
      {"trainer.lambda", number(&C::trainer, &C::Trainer::lambda)},
      {"trainer.mc_loss", number(&C::trainer, &C::Trainer::mc_loss)},
      {"trainer.eq_samples", number(&C::trainer, &C::Trainer::eq_samples)},
      {"nag.beta", number(&C::nag, &C::Nag::beta)},
      {"nag.eta", number(&C::nag, &C::Nag::eta)},
      {"nag.J", number(&C::nag, &C::Nag::J)},
      {"nag.persist_velocity", number(&C::nag, &C::Nag::persist_velocity)},
      {"pnp.gamma", number(&C::pnp, &C::Pnp::gamma)},
      {"optim.lr", number(&C::optim, &C::Optim::lr)},
      {"optim.weight_decay", number(&C::optim, &C::Optim::weight_decay)},
      {"optim.epochs", number(&C::optim, &C::Optim::epochs)},
      {"denoiser.name", number(&C::denoiser, &C::DenoiserCfg::name)},
      {"denoiser.weights_path", number(&C::denoiser, &C::DenoiserCfg::weights_path)},
      {"denoiser.plugin", number(&C::denoiser, &C::DenoiserCfg::plugin)},
      {"denoiser.median_radius", number(&C::denoiser, &C::DenoiserCfg::median_radius)},
      {"denoiser.tv_iterations", number(&C::denoiser, &C::DenoiserCfg::tv_iterations)},
      {"ema.decay", number(&C::ema, &C::Ema::decay)},
      {"seed.data", number(&C::seed, &C::Seeds::data)},
      {"seed.noise", number(&C::seed, &C::Seeds::noise)},
      {"seed.group", number(&C::seed, &C::Seeds::group)},
      {"output.dir", number(&C::output, &C::Output::dir)},
      {"output.run_id", number(&C::output, &C::Output::run_id)},
      {"output.checkpoint_every", number(&C::output, &C::Output::checkpoint_every)},
  };
  return r;
}

const Binding* find_binding(const std::string& key) {
  for (const auto& [k, b] : registry()) {
    if (k == key) return &b;
  }
  return nullptr;
}

bool one_of(const std::string& v, std::initializer_list<const char*> options) {
  for (const char* o : options) {
    if (v == o) return true;
  }
  return false;
}

}  // namespace

std::vector<std::string> ExperimentConfig::known_keys() {
  std::vector<std::string> keys;
  for (const auto& [k, b] : registry()) keys.push_back(k);
  return keys;
}

void ExperimentConfig::apply(const ConfigTable& table) {
  std::vector<std::string> errors;
  for (const auto& [key, value] : table) {
    const Binding* b = find_binding(key);
    if (!b) {
      errors.push_back(key + ": unknown key");
      continue;
    }
    try {
      b->set(*this, value);
    } catch (const ConfigError& e) {
      errors.push_back(key + ": " + e.what());
    }
  }
  if (!errors.empty()) {
    std::string msg = "invalid configuration:";
    for (const auto& e : errors) msg += "\n  " + e;
    throw ConfigError(msg);
  }
}

void ExperimentConfig::validate() const {
  std::vector<std::string> errors;
  auto require = [&errors](bool ok, const std::string& msg) {
    if (!ok) errors.push_back(msg);
  };
  require(data.size >= 8, "data.size: must be >= 8");
  require(data.noise_std >= 0.0, "data.noise_std: must be >= 0");
  require(one_of(physics.kind, {"radon", "inpainting", "gaussian"}),
          "physics.kind: expected radon | inpainting | gaussian");
  require(physics.angles >= 1, "physics.angles: must be >= 1");
  for (double a : physics.angle_list) {
    require(a >= 0.0 && a < 180.0, "physics.angle_list: angles must lie in [0, 180)");
  }
  require(physics.scale > 0.0, "physics.scale: must be > 0");
  require(physics.keep_fraction > 0.0 && physics.keep_fraction <= 1.0,
          "physics.keep_fraction: must lie in (0, 1]");
  require(physics.measurements >= 0, "physics.measurements: must be >= 0");
  require(one_of(group.family, {"rotation", "shift", "flip"}),
          "group.family: expected rotation | shift | flip");
  require(group.max_shift >= 0, "group.max_shift: must be >= 0");
  require(one_of(model.arch, {"unet_residual", "small_cnn", "linear"}),
          "model.arch: expected unet_residual | small_cnn | linear");
  require(!model.channels.empty(), "model.channels: must be nonempty");
  for (int c : model.channels) require(c > 0, "model.channels: entries must be positive");
  require(model.width > 0, "model.width: must be positive");
  require(one_of(model.init, {"default", "identity", "zero"}),
          "model.init: expected default | identity | zero");
  require(one_of(trainer.kind, {"mc", "ei", "fei", "pnp_fei", "eqpnp_fei", "supervised"}),
          "trainer.kind: expected mc | ei | fei | pnp_fei | eqpnp_fei | supervised");
  require(trainer.alpha >= 0.0, "trainer.alpha: must be >= 0");
  require(trainer.lambda > 0.0, "trainer.lambda: must be > 0");
  require(one_of(trainer.mc_loss, {"l2", "l1"}), "trainer.mc_loss: expected l2 | l1");
  require(trainer.eq_samples >= 1, "trainer.eq_samples: must be >= 1");
  require(nag.beta >= 0.0 && nag.beta < 1.0, "nag.beta: must lie in [0, 1)");
  require(nag.eta > 0.0, "nag.eta: must be > 0");
  require(nag.J >= 0, "nag.J: must be >= 0");
  require(pnp.gamma >= 0.0, "pnp.gamma: must be >= 0");
  require(optim.lr > 0.0, "optim.lr: must be > 0");
  require(optim.weight_decay >= 0.0, "optim.weight_decay: must be >= 0");
  require(optim.epochs >= 1, "optim.epochs: must be >= 1");
  require(one_of(denoiser.name, {"identity", "median", "tv", "cnn_pretrained", "bm3d_external"}),
          "denoiser.name: expected identity | median | tv | cnn_pretrained | bm3d_external");
  require(denoiser.median_radius >= 1, "denoiser.median_radius: must be >= 1");
  require(denoiser.tv_iterations >= 1, "denoiser.tv_iterations: must be >= 1");
  require(ema.decay >= 0.0 && ema.decay < 1.0, "ema.decay: must lie in [0, 1)");
  require(!output.dir.empty(), "output.dir: must be nonempty");
  require(output.checkpoint_every >= 0, "output.checkpoint_every: must be >= 0");
  if (!errors.empty()) {
    std::string msg = "invalid configuration:";
    for (const auto& e : errors) msg += "\n  " + e;
    throw ConfigError(msg);
  }
}

std::string ExperimentConfig::snapshot() const {
  std::string out;
  std::string section;
  for (const auto& [key, b] : registry()) {
    const auto dot = key.find('.');
    const std::string sec = key.substr(0, dot);
    if (sec != section) {
      out += (section.empty() ? "" : "\n") + std::string("[") + sec + "]\n";
      section = sec;
    }
    out += key.substr(dot + 1) + " = " + b.get(*this).render() + "\n";
  }
  return out;
}

std::string ExperimentConfig::hash() const {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : snapshot()) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return fmt::format("{:016x}", h);
}

void apply_overrides(ExperimentConfig& cfg, const std::vector<std::string>& overrides) {
  ConfigTable table;
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + o + "': expected key=value");
    const std::string key = trim(o.substr(0, eq));
    try {
      table[key] = parse_config_value(o.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError("override " + key + ": " + e.what());
    }
  }
  cfg.apply(table);
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path,
                                        const std::vector<std::string>& overrides) {
  ExperimentConfig cfg;
  cfg.apply(parse_config_file(path));
  apply_overrides(cfg, overrides);
  cfg.validate();
  return cfg;
}

}  // namespace fei
