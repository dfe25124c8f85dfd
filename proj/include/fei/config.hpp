#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <variant>
#include <vector>

namespace fei {

/// Scalar or list value from a config file.
struct ConfigValue {
  using List = std::vector<ConfigValue>;
  std::variant<bool, long long, double, std::string, List> data;

  std::string type_name() const;
  std::string render() const;
};

/// Dotted key -> value, e.g. "nag.J" -> 10.
using ConfigTable = std::map<std::string, ConfigValue>;

/// Parses the TOML subset used by experiment files: `[section]` headers,
/// `key = value` lines, `#` comments; values are booleans, integers,
/// floats, double-quoted strings and flat `[a, b, ...]` lists.
ConfigTable parse_config_text(const std::string& text, const std::string& origin = "<string>");
ConfigTable parse_config_file(const std::filesystem::path& path);
ConfigValue parse_config_value(const std::string& text);

/// Fully resolved experiment description. Defaults follow the CT protocol
/// (alpha 100, lambda 1, NAG beta 0.1 / eta 0.01 / J 10, PnP gamma 0.01,
/// Adam lr 1e-3 with weight decay 1e-8).
struct ExperimentConfig {
  struct Data {
    std::string source = "shepp_logan_variants";
    int size = 64;
    std::string train_ids = "1-10";
    std::string test_ids = "11-20";
    double noise_std = 0.0;
  } data;

  struct Physics {
    std::string kind = "radon";  // radon | inpainting | gaussian
    int angles = 50;
    std::vector<double> angle_list;
    double scale = 1.0;
    double keep_fraction = 0.5;  // inpainting
    int measurements = 0;        // gaussian rows; 0 selects n / 4
  } physics;

  struct Group {
    std::string family = "rotation";
    std::vector<int> angles;  // empty: 1..360
    int max_shift = 8;
  } group;

  struct Model {
    std::string arch = "unet_residual";
    std::vector<int> channels{64, 128, 256, 512};
    int width = 16;
    std::string init = "default";
    bool zero_last = false;
    std::uint64_t seed = 0;
  } model;

  struct Trainer {
    std::string kind = "fei";
    double alpha = 100.0;
    double lambda = 1.0;
    std::string mc_loss = "l2";
    int eq_samples = 1;
  } trainer;

  struct Nag {
    double beta = 0.1;
    double eta = 0.01;
    int J = 10;
    bool persist_velocity = false;
  } nag;

  struct Pnp {
    double gamma = 0.01;
  } pnp;

  struct Optim {
    double lr = 1e-3;
    double weight_decay = 1e-8;
    long long epochs = 10000;
  } optim;

  struct DenoiserCfg {
    std::string name = "median";
    std::string weights_path;
    std::string plugin;
    int median_radius = 1;
    int tv_iterations = 50;
  } denoiser;

  struct Ema {
    double decay = 0.99;
  } ema;

  struct Seeds {
    std::uint64_t data = 0;
    std::uint64_t noise = 1;
    std::uint64_t group = 2;
  } seed;

  struct Output {
    std::string dir = "runs";
    std::string run_id;
    long long checkpoint_every = 0;  // epochs; 0 = final only
  } output;

  /// Applies table entries on top of the current values. Unknown keys and
  /// out-of-range values raise ConfigError naming every offending key.
  void apply(const ConfigTable& table);
  void validate() const;

  /// Resolved config (defaults included) in the same file format.
  std::string snapshot() const;
  /// FNV-1a digest of `snapshot()`, hex encoded.
  std::string hash() const;

  static ExperimentConfig load(const std::filesystem::path& path,
                               const std::vector<std::string>& overrides = {});
  static std::vector<std::string> known_keys();
};

/// Applies "key=value" strings.
void apply_overrides(ExperimentConfig& cfg, const std::vector<std::string>& overrides);

}  // namespace fei
