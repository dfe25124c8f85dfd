#include "fei/metrics.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <sstream>

#include "fei/errors.hpp"
#include "fei/io.hpp"

namespace fei {

double mse(const Image& x, const Image& ref) {
  if (shape_of(x) != shape_of(ref)) {
    throw InputError("mse: shape mismatch " + shape_of(x).str() + " vs " + shape_of(ref).str());
  }
  return (x - ref).square().mean();
}

double psnr(const Image& x, const Image& ref, double peak) {
  if (!(peak > 0.0)) throw InputError("psnr: peak must be > 0");
  const double e = mse(x, ref);
  if (e == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(peak * peak / e));
}

Image ema_update(const std::optional<Image>& avg, const Image& next, double decay) {
  if (!(decay >= 0.0 && decay < 1.0)) throw InputError("ema: decay must lie in [0, 1)");
  if (!avg) return next;
  if (shape_of(*avg) != shape_of(next)) throw InputError("ema: shape mismatch");
  return decay * *avg + (1.0 - decay) * next;
}

// ---------------------------------------------------------------------------
// MetricLog

void MetricLog::append(const MetricRow& row) {
  if (!rows_.empty()) {
    if (row.step <= rows_.back().step) throw InvariantError("metric log: steps must increase");
    if (row.wall_time_s < rows_.back().wall_time_s) {
      throw InvariantError("metric log: wall time went backwards");
    }
  }
  rows_.push_back(row);
}

void MetricLog::write(const std::filesystem::path& dir) const {
  std::ofstream m(dir / "metrics.csv", std::ios::trunc);
  std::ofstream t(dir / "timing.csv", std::ios::trunc);
  if (!m || !t) throw LoadError("cannot write metric log in " + dir.string());
  m << "step,epoch,loss_mc,loss_eq,loss_total,psnr_train,mse_train,psnr_ema\n";
  t << "step,wall_time_s\n";
  for (const auto& r : rows_) {
    m << fmt::format("{},{},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g}\n", r.step, r.epoch,
                     r.loss_mc, r.loss_eq, r.loss_total, r.psnr_train, r.mse_train, r.psnr_ema);
    t << fmt::format("{},{:.6f}\n", r.step, r.wall_time_s);
  }
}

namespace {

std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot read " + path.string());
  std::vector<std::vector<std::string>> rows;
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    rows.push_back(std::move(cells));
  }
  return rows;
}

}  // namespace

MetricLog MetricLog::read(const std::filesystem::path& dir) {
  MetricLog log;
  const auto metrics = read_csv(dir / "metrics.csv");
  std::vector<std::vector<std::string>> timing;
  if (std::filesystem::exists(dir / "timing.csv")) timing = read_csv(dir / "timing.csv");
  for (std::size_t i = 0; i < metrics.size(); ++i) {
    const auto& c = metrics[i];
    if (c.size() < 8) throw LoadError("metrics.csv: short row " + std::to_string(i + 1));
    MetricRow r;
    r.step = std::stoll(c[0]);
    r.epoch = std::stoll(c[1]);
    r.loss_mc = std::stod(c[2]);
    r.loss_eq = std::stod(c[3]);
    r.loss_total = std::stod(c[4]);
    r.psnr_train = std::stod(c[5]);
    r.mse_train = std::stod(c[6]);
    r.psnr_ema = std::stod(c[7]);
    if (i < timing.size() && timing[i].size() >= 2) r.wall_time_s = std::stod(timing[i][1]);
    log.rows_.push_back(r);
  }
  return log;
}

// ---------------------------------------------------------------------------
// Summaries

std::string ScoreSummary::formatted() const { return fmt::format("{:.2f} ± {:.2f}", mean, std); }

ScoreSummary summarize_scores(const std::string& method, const std::vector<double>& scores) {
  if (scores.empty()) throw InputError("summarize: no scores for method '" + method + "'");
  ScoreSummary s;
  s.method = method;
  s.count = scores.size();
  double sum = 0.0;
  for (double v : scores) sum += v;
  s.mean = sum / static_cast<double>(scores.size());
  double var = 0.0;
  for (double v : scores) var += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(var / static_cast<double>(scores.size()));
  return s;
}

std::vector<ScoreSummary> summarize(
    const std::vector<std::pair<std::string, std::vector<double>>>& scores) {
  if (scores.empty()) throw InputError("summarize: empty input");
  std::vector<ScoreSummary> out;
  for (const auto& [method, values] : scores) out.push_back(summarize_scores(method, values));
  return out;
}

std::string summary_csv(const std::vector<ScoreSummary>& rows) {
  std::string s = "method,psnr_mean,psnr_std,count\n";
  for (const auto& r : rows) s += fmt::format("{},{:.6f},{:.6f},{}\n", r.method, r.mean, r.std, r.count);
  return s;
}

std::string summary_table(const std::vector<ScoreSummary>& rows) {
  std::size_t width = 7;
  for (const auto& r : rows) width = std::max(width, r.method.size());
  std::string s = fmt::format("{:<{}}  PSNR (dB)\n", "Methods", width);
  for (const auto& r : rows) s += fmt::format("{:<{}}  {}\n", r.method, width, r.formatted());
  return s;
}

std::optional<long long> steps_to_threshold(const MetricLog& log, double threshold) {
  for (const auto& r : log.rows()) {
    if (r.psnr_ema >= threshold) return r.step;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Plotting

namespace {

// 3x5 bitmap glyphs for tick labels.
const std::array<std::uint16_t, 13>& glyphs() {
  // bits row-major, top row first, 3 bits per row
  static const std::array<std::uint16_t, 13> g = {
      0b111101101101111, 0b010110010010111, 0b111001111100111, 0b111001111001111,
      0b101101111001001, 0b111100111001111, 0b111100111101111, 0b111001001001001,
      0b111101111101111, 0b111101111001111, 0b000000000000010, 0b000000111000000,
      0b000000000000000};
  return g;
}

struct Canvas {
  int w, h;
  std::vector<std::uint8_t> px;
  Canvas(int w_, int h_) : w(w_), h(h_), px(static_cast<std::size_t>(w_ * h_ * 3), 255) {}

  void set(int x, int y, std::array<std::uint8_t, 3> c) {
    if (x < 0 || y < 0 || x >= w || y >= h) return;
    const auto k = static_cast<std::size_t>((y * w + x) * 3);
    px[k] = c[0];
    px[k + 1] = c[1];
    px[k + 2] = c[2];
  }

  void line(double x0, double y0, double x1, double y1, std::array<std::uint8_t, 3> c) {
    const int steps = static_cast<int>(std::max(std::abs(x1 - x0), std::abs(y1 - y0))) + 1;
    for (int i = 0; i <= steps; ++i) {
      const double t = static_cast<double>(i) / steps;
      set(static_cast<int>(std::lround(x0 + t * (x1 - x0))),
          static_cast<int>(std::lround(y0 + t * (y1 - y0))), c);
    }
  }

  void text(int x, int y, const std::string& s, std::array<std::uint8_t, 3> c) {
    for (char ch : s) {
      int idx = 12;
      if (ch >= '0' && ch <= '9') idx = ch - '0';
      if (ch == '.') idx = 10;
      if (ch == '-') idx = 11;
      const auto bits = glyphs()[static_cast<std::size_t>(idx)];
      for (int r = 0; r < 5; ++r)
        for (int q = 0; q < 3; ++q)
          if (bits >> (14 - (r * 3 + q)) & 1) {
            set(x + 2 * q, y + 2 * r, c);
            set(x + 2 * q + 1, y + 2 * r, c);
            set(x + 2 * q, y + 2 * r + 1, c);
            set(x + 2 * q + 1, y + 2 * r + 1, c);
          }
      x += 8;
    }
  }
};

}  // namespace

void plot_curves(const std::filesystem::path& path, const std::vector<Curve>& curves,
                 const std::string&, const std::string&) {
  static const std::array<std::array<std::uint8_t, 3>, 6> palette = {
      {{31, 119, 180}, {255, 127, 14}, {44, 160, 44}, {214, 39, 40}, {148, 103, 189}, {140, 86, 75}}};
  constexpr int W = 800, H = 500, L = 70, R = 20, T = 20, B = 40;
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto& c : curves) {
    for (std::size_t i = 0; i < c.x.size() && i < c.y.size(); ++i) {
      if (!std::isfinite(c.y[i])) continue;
      xmin = std::min(xmin, c.x[i]);
      xmax = std::max(xmax, c.x[i]);
      ymin = std::min(ymin, c.y[i]);
      ymax = std::max(ymax, c.y[i]);
    }
  }
  if (xmin > xmax) xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  if (xmax == xmin) xmax = xmin + 1;
  if (ymax == ymin) ymax = ymin + 1;
  Canvas cv(W, H);
  const std::array<std::uint8_t, 3> black{0, 0, 0};
  cv.line(L, T, L, H - B, black);
  cv.line(L, H - B, W - R, H - B, black);
  auto sx = [&](double x) { return L + (x - xmin) / (xmax - xmin) * (W - L - R); };
  auto sy = [&](double y) { return H - B - (y - ymin) / (ymax - ymin) * (H - T - B); };
  cv.text(4, T, fmt::format("{:.1f}", ymax), black);
  cv.text(4, H - B - 10, fmt::format("{:.1f}", ymin), black);
  cv.text(L, H - B + 10, fmt::format("{:.0f}", xmin), black);
  cv.text(W - R - 60, H - B + 10, fmt::format("{:.0f}", xmax), black);
  for (std::size_t k = 0; k < curves.size(); ++k) {
    const auto color = palette[k % palette.size()];
    const auto& c = curves[k];
    for (std::size_t i = 1; i < c.x.size() && i < c.y.size(); ++i) {
      if (!std::isfinite(c.y[i - 1]) || !std::isfinite(c.y[i])) continue;
      cv.line(sx(c.x[i - 1]), sy(c.y[i - 1]), sx(c.x[i]), sy(c.y[i]), color);
    }
    // legend swatch
    const double ly = T + 10 + 14.0 * static_cast<double>(k);
    for (int d = 0; d < 3; ++d) cv.line(W - R - 60, ly + d, W - R - 40, ly + d, color);
  }
  io::write_png_rgb(path, W, H, cv.px);
}

}  // namespace fei
