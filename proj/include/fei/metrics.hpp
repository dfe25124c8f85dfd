#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fei/types.hpp"

namespace fei {

/// PSNR returned when the two images are identical.
inline constexpr double kPsnrCap = 200.0;

double mse(const Image& x, const Image& ref);
/// 10 log10(peak^2 / MSE), capped at kPsnrCap.
double psnr(const Image& x, const Image& ref, double peak = 1.0);

/// decay * avg + (1 - decay) * next; returns `next` when there is no average yet.
Image ema_update(const std::optional<Image>& avg, const Image& next, double decay);

struct MetricRow {
  long long step = 0;
  long long epoch = 0;
  double wall_time_s = 0.0;
  double loss_mc = 0.0;
  double loss_eq = 0.0;
  double loss_total = 0.0;
  double psnr_train = 0.0;  // raw reconstructions
  double mse_train = 0.0;
  double psnr_ema = 0.0;    // moving-average reconstructions
};

/// Append-only per-iteration training log.
///
/// Serialized as two CSV files so that the loss/quality columns are
/// reproducible bit for bit: `metrics.csv` (step, epoch, losses, PSNR/MSE,
/// printed with 17 significant digits) and `timing.csv` (step,
/// wall_time_s).
class MetricLog {
 public:
  MetricLog() = default;
  MetricLog(std::string run_id, std::string config_hash)
      : run_id_(std::move(run_id)), config_hash_(std::move(config_hash)) {}

  void append(const MetricRow& row);
  const std::vector<MetricRow>& rows() const { return rows_; }
  bool empty() const { return rows_.empty(); }
  const std::string& run_id() const { return run_id_; }
  const std::string& config_hash() const { return config_hash_; }

  void write(const std::filesystem::path& dir) const;
  static MetricLog read(const std::filesystem::path& dir);

 private:
  std::string run_id_;
  std::string config_hash_;
  std::vector<MetricRow> rows_;
};

struct ScoreSummary {
  std::string method;
  double mean = 0.0;
  double std = 0.0;  // population
  std::size_t count = 0;

  /// "33.00 ± 1.00"
  std::string formatted() const;
};

ScoreSummary summarize_scores(const std::string& method, const std::vector<double>& scores);

/// Mean and population std per method; throws InputError on empty input.
std::vector<ScoreSummary> summarize(
    const std::vector<std::pair<std::string, std::vector<double>>>& scores);

std::string summary_csv(const std::vector<ScoreSummary>& rows);
std::string summary_table(const std::vector<ScoreSummary>& rows);

/// First step at which `psnr_ema` reaches `threshold`, if any.
std::optional<long long> steps_to_threshold(const MetricLog& log, double threshold);

struct Curve {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

/// Renders overlaid line plots to a PNG (axes with min/max tick labels).
void plot_curves(const std::filesystem::path& path, const std::vector<Curve>& curves,
                 const std::string& x_label, const std::string& y_label);

}  // namespace fei
