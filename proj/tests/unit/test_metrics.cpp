#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "fei/errors.hpp"
#include "fei/metrics.hpp"
#include "helpers.hpp"

using namespace fei;
using fei::test::random_uniform;

namespace fs = std::filesystem;

namespace {

// Straight from the definition, accumulated in long double.
double psnr_oracle(const Image& x, const Image& ref) {
  long double acc = 0.0L;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const long double d = static_cast<long double>(x(i)) - ref(i);
    acc += d * d;
  }
  const long double m = acc / x.size();
  return static_cast<double>(10.0L * std::log10(1.0L / m));
}

MetricLog make_log(std::initializer_list<double> psnr_ema) {
  MetricLog log("run", "abc");
  long long step = 0;
  for (double p : psnr_ema) {
    MetricRow r;
    r.step = ++step;
    r.epoch = (step - 1) / 2;
    r.wall_time_s = 0.5 * step;
    r.loss_mc = 1.0 / step;
    r.loss_eq = 0.1 / 3.0;
    r.loss_total = r.loss_mc + r.loss_eq;
    r.psnr_train = p - 0.25;
    r.mse_train = std::pow(10.0, -r.psnr_train / 10.0);
    r.psnr_ema = p;
    log.append(r);
  }
  return log;
}

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("fei_metrics_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("psnr: known values and cap") {
  const Image ref = Image::Zero(8, 8);
  CHECK(psnr(ref, ref) == kPsnrCap);
  CHECK(kPsnrCap == 200.0);
  CHECK(psnr(Image::Constant(8, 8, 0.1), ref) == doctest::Approx(20.0).epsilon(1e-12));
  CHECK(mse(Image::Constant(8, 8, 0.1), ref) == doctest::Approx(0.01).epsilon(1e-12));
  CHECK(psnr(Image::Constant(8, 8, 0.2), ref, 2.0) == doctest::Approx(20.0).epsilon(1e-12));
  CHECK_THROWS_AS(psnr(Image::Zero(2, 2), Image::Zero(2, 3)), InputError);
  CHECK_THROWS_AS(psnr(ref, ref, 0.0), InputError);
}

TEST_CASE("psnr: matches an independent computation") {
  for (int s = 0; s < 20; ++s) {
    const Image ref = random_uniform(16, 12, s);
    const Image x = ref + 0.05 * (random_uniform(16, 12, 100 + s) - 0.5);
    const double got = psnr(x, ref);
    CHECK(std::abs(got - psnr_oracle(x, ref)) <= 1e-10);
    // an offset applied to both images changes nothing
    CHECK(std::abs(psnr(x + 3.0, ref + 3.0) - got) <= 1e-9);
  }
}

TEST_CASE("ema") {
  const Image a = Image::Constant(2, 2, 4.0);
  const Image b = Image::Constant(2, 2, 2.0);
  CHECK((ema_update(std::nullopt, a, 0.9) == a).all());
  CHECK((ema_update(a, b, 0.0) == b).all());
  CHECK((ema_update(a, b, 0.75) - 3.5).abs().maxCoeff() <= 1e-15);
  std::optional<Image> avg = a;
  for (int i = 0; i < 50; ++i) avg = ema_update(avg, a, 0.9);
  CHECK((*avg == a).all());
  // alternating inputs with a slow average settle near the midpoint
  std::optional<Image> alt;
  for (int i = 0; i < 2000; ++i) alt = ema_update(alt, Image::Constant(1, 1, i % 2), 0.99);
  CHECK(std::abs((*alt)(0) - 0.5) <= 0.02);
  CHECK_THROWS_AS(ema_update(a, b, 1.0), InputError);
  CHECK_THROWS_AS(ema_update(a, Image::Zero(3, 3), 0.5), InputError);
}

TEST_CASE("score summaries") {
  const auto one = summarize_scores("ei", {30.0, 30.0, 30.0});
  CHECK(one.formatted() == "30.00 ± 0.00");
  CHECK(one.count == 3);
  const auto two = summarize_scores("fei", {32.0, 34.0});
  CHECK(two.mean == 33.0);
  CHECK(two.std == 1.0);
  CHECK(two.formatted() == "33.00 ± 1.00");
  CHECK_THROWS_AS(summarize_scores("x", {}), InputError);
  CHECK_THROWS_AS(summarize({}), InputError);
  const auto rows = summarize({{"a", {1.0}}, {"b", {2.0, 4.0}}});
  REQUIRE(rows.size() == 2);
  CHECK(rows[1].mean == 3.0);
  const std::string csv = summary_csv(rows);
  CHECK(csv.rfind("method,psnr_mean,psnr_std,count\n", 0) == 0);
  CHECK(csv.find("b,3.000000,1.000000,2") != std::string::npos);
  CHECK(summary_table(rows).find("3.00 ± 1.00") != std::string::npos);
}

TEST_CASE("metric log: ordering invariants") {
  MetricLog log = make_log({10.0, 11.0});
  MetricRow r = log.rows().back();
  CHECK_THROWS_AS(log.append(r), InvariantError);
  r.step += 1;
  r.wall_time_s -= 1.0;
  CHECK_THROWS_AS(log.append(r), InvariantError);
}

TEST_CASE("metric log: round trip and file split") {
  const auto dir = scratch("log");
  const MetricLog log = make_log({10.0, 11.5, 12.25, 12.0});
  log.write(dir);
  REQUIRE(fs::exists(dir / "metrics.csv"));
  REQUIRE(fs::exists(dir / "timing.csv"));
  std::ifstream in(dir / "metrics.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header.find("wall_time") == std::string::npos);
  const MetricLog back = MetricLog::read(dir);
  REQUIRE(back.rows().size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    const auto& a = log.rows()[i];
    const auto& b = back.rows()[i];
    CHECK(a.step == b.step);
    CHECK(a.epoch == b.epoch);
    CHECK(a.wall_time_s == b.wall_time_s);
    CHECK(a.loss_mc == b.loss_mc);
    CHECK(a.loss_eq == b.loss_eq);
    CHECK(a.loss_total == b.loss_total);
    CHECK(a.psnr_train == b.psnr_train);
    CHECK(a.mse_train == b.mse_train);
    CHECK(a.psnr_ema == b.psnr_ema);
  }
  CHECK_THROWS_AS(MetricLog::read(dir / "missing"), LoadError);
  fs::remove_all(dir);
}

TEST_CASE("steps to threshold") {
  const MetricLog log = make_log({10.0, 11.5, 12.25, 12.0, 13.0});
  CHECK(steps_to_threshold(log, 12.0) == 3);
  CHECK(steps_to_threshold(log, 10.0) == 1);
  CHECK(steps_to_threshold(log, 13.0) == 5);
  CHECK_FALSE(steps_to_threshold(log, 13.5).has_value());
  CHECK_FALSE(steps_to_threshold(MetricLog{}, 0.0).has_value());
}

TEST_CASE("plots are written as png") {
  const auto dir = scratch("plot");
  plot_curves(dir / "c.png",
              {{"ei", {1, 2, 3}, {10, 12, 13}}, {"fei", {1, 2, 3}, {11, 14, 15}}}, "iteration",
              "PSNR (dB)");
  REQUIRE(fs::exists(dir / "c.png"));
  std::ifstream f(dir / "c.png", std::ios::binary);
  char sig[8];
  f.read(sig, 8);
  CHECK(std::string(sig + 1, 3) == "PNG");
  CHECK(fs::file_size(dir / "c.png") > 500);
  fs::remove_all(dir);
}
