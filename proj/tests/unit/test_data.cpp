#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <type_traits>

#include "fei/data.hpp"
#include "fei/errors.hpp"
#include "fei/io.hpp"
#include "helpers.hpp"

using namespace fei;
using fei::test::bit_equal;
using fei::test::random_uniform;

namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("fei_data_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

template <typename T, typename = void>
struct has_truth : std::false_type {};
template <typename T>
struct has_truth<T, std::void_t<decltype(std::declval<T>().truth)>> : std::true_type {};

}  // namespace

// Unsupervised trainers receive a MeasurementSet; it must not carry images.
static_assert(!has_truth<MeasurementSet>::value);
static_assert(has_truth<EvaluationSet>::value);

TEST_CASE("id lists") {
  CHECK(parse_id_list("1-3") == std::vector<int>{1, 2, 3});
  CHECK(parse_id_list("1,3,5") == std::vector<int>{1, 3, 5});
  CHECK(parse_id_list("1-2, 8") == std::vector<int>{1, 2, 8});
  CHECK_THROWS_AS(parse_id_list("5-2"), ConfigError);
  CHECK_THROWS_AS(parse_id_list("0"), ConfigError);
  CHECK_THROWS_AS(parse_id_list("a"), ConfigError);
}

TEST_CASE("shepp_logan builtin") {
  const auto splits = load_dataset("shepp_logan", 64, {{1}, {}});
  REQUIRE(splits.train.size() == 1);
  CHECK(splits.test.size() == 0);
  const Image& x = splits.train.images[0];
  CHECK(shape_of(x) == Shape{64, 64});
  CHECK(x.minCoeff() >= 0.0);
  CHECK(x.maxCoeff() <= 1.0);
  CHECK(x.maxCoeff() > 0.5);
  CHECK(std::abs(x(0, 0)) <= 1e-12);  // corners lie outside the head
}

TEST_CASE("variants: ids, determinism and split separation") {
  const SplitSpec split{parse_id_list("1-10"), parse_id_list("11-20")};
  const auto a = load_dataset("shepp_logan_variants", 32, split, 3);
  const auto b = load_dataset("shepp_logan_variants", 32, split, 3);
  const auto c = load_dataset("shepp_logan_variants", 32, split, 4);
  REQUIRE(a.train.size() == 10);
  REQUIRE(a.test.size() == 10);
  CHECK(a.train.ids.front() == "1");
  CHECK(a.test.ids.back() == "20");
  CHECK(a.train.split == Split::train);
  CHECK(a.test.split == Split::test);
  for (std::size_t i = 0; i < 10; ++i) {
    CHECK(bit_equal(a.train.images[i], b.train.images[i]));
    CHECK_FALSE(bit_equal(a.train.images[i], a.test.images[i]));
  }
  CHECK_FALSE(bit_equal(a.train.images[0], c.train.images[0]));
  CHECK_FALSE(bit_equal(a.train.images[0], a.train.images[1]));
}

TEST_CASE("split validation") {
  CHECK_THROWS_AS(load_dataset("shepp_logan_variants", 32, {{1, 2, 3}, {3, 4}}), ConfigError);
  CHECK_THROWS_AS(load_dataset("shepp_logan_variants", 32, {{1, 1}, {2}}), ConfigError);
  CHECK_THROWS_AS(load_dataset("shepp_logan_variants", 4, {{1}, {2}}), ConfigError);
  CHECK_THROWS_AS(load_dataset("shepp_logan", 32, {{1}, {2}}), IngestionError);
  CHECK_THROWS_AS(load_dataset("/nonexistent/dir/for/fei", 32, {{1}, {2}}), IngestionError);
}

TEST_CASE("directory ingestion: sorted order, resize and normalization") {
  const auto dir = scratch("dir");
  std::vector<Image> written;
  for (int i = 1; i <= 20; ++i) {
    Image img = random_uniform(40, 40, 100 + i) * 255.0;
    img(0, 0) = 0.0;
    img(0, 1) = 255.0;
    written.push_back(img);
    char name[16];
    std::snprintf(name, sizeof name, "slice_%02d.npy", i);
    io::save_array(dir / name, img);
  }
  const auto splits = load_dataset(dir.string(), 20, {parse_id_list("1-10"), parse_id_list("11-20")});
  REQUIRE(splits.train.size() == 10);
  REQUIRE(splits.test.size() == 10);
  CHECK(splits.train.ids == std::vector<std::string>{"1", "2", "3", "4", "5", "6", "7", "8", "9", "10"});
  for (std::size_t i = 0; i < 10; ++i) {
    const Image& x = splits.test.images[i];
    CHECK(shape_of(x) == Shape{20, 20});
    CHECK(x.minCoeff() == 0.0);
    CHECK(x.maxCoeff() == 1.0);
    const Image expected = normalize_min_max(resize_antialiased(written[10 + i], 20, 20));
    CHECK(bit_equal(x, expected));
  }
  const auto again = load_dataset(dir.string(), 20, {parse_id_list("1-10"), parse_id_list("11-20")});
  for (std::size_t i = 0; i < 10; ++i) CHECK(bit_equal(again.train.images[i], splits.train.images[i]));
  CHECK_THROWS_AS(load_dataset(dir.string(), 20, {{1}, {21}}), IngestionError);
  fs::remove_all(dir);
}

TEST_CASE("directory ingestion: every unreadable file is reported") {
  const auto dir = scratch("bad");
  io::save_array(dir / "a.npy", random_uniform(8, 8, 1));
  std::ofstream(dir / "b.png") << "not a png";
  std::ofstream(dir / "c.pgm") << "P5 junk";
  try {
    load_dataset(dir.string(), 8, {{1}, {2}});
    FAIL("expected IngestionError");
  } catch (const IngestionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("b.png") != std::string::npos);
    CHECK(msg.find("c.pgm") != std::string::npos);
    CHECK(msg.find("a.npy") == std::string::npos);
  }
  const auto empty = scratch("empty");
  CHECK_THROWS_AS(load_dataset(empty.string(), 8, {{1}, {}}), IngestionError);
  fs::remove_all(dir);
  fs::remove_all(empty);
}

TEST_CASE("measurements: noise-free y = A x, shapes and seeds") {
  auto op = make_radon_operator(128, 50);
  const auto ds = load_dataset("shepp_logan", 128, {{1}, {}});
  const auto clean = build_measurements(ds.train, {op, 0.0}, 1);
  REQUIRE(clean.measurements.size() == 1);
  const Measurement& y = clean.measurements.y[0];
  CHECK(y.rows() == 50);
  CHECK(shape_of(y) == op->out_shape());
  CHECK(bit_equal(y, op->apply(ds.train.images[0])));
  CHECK(clean.measurements.ids[0] == "1");
  CHECK(bit_equal(clean.truth[0], ds.train.images[0]));

  const auto n1 = build_measurements(ds.train, {op, 0.05}, 7);
  const auto n2 = build_measurements(ds.train, {op, 0.05}, 7);
  const auto n3 = build_measurements(ds.train, {op, 0.05}, 8);
  CHECK(bit_equal(n1.measurements.y[0], n2.measurements.y[0]));
  CHECK_FALSE(bit_equal(n1.measurements.y[0], n3.measurements.y[0]));
  const double sd = std::sqrt((n1.measurements.y[0] - y).square().mean());
  CHECK(sd == doctest::Approx(0.05).epsilon(0.05));

  CHECK_THROWS_AS(build_measurements(ds.train, {make_radon_operator(64, 10), 0.0}, 1), InputError);
  CHECK_THROWS_AS(build_measurements(ds.train, {nullptr, 0.0}, 1), InputError);
}

TEST_CASE("resize and normalize") {
  const Image c = Image::Constant(30, 30, 0.25);
  const Image r = resize_antialiased(c, 11, 17);
  CHECK(shape_of(r) == Shape{11, 17});
  CHECK((r - 0.25).abs().maxCoeff() <= 1e-12);
  const Image x = random_uniform(16, 16, 3);
  CHECK(bit_equal(resize_antialiased(x, 16, 16), x));
  CHECK(std::abs(resize_antialiased(x, 8, 8).mean() - x.mean()) <= 0.02);
  CHECK_THROWS_AS(resize_antialiased(x, 0, 4), InputError);
  const Image n = normalize_min_max(x * 3.0 + 2.0);
  CHECK(n.minCoeff() == 0.0);
  CHECK(n.maxCoeff() == 1.0);
  CHECK((normalize_min_max(c) == 0.0).all());
}

TEST_CASE("npy and png round trips") {
  const auto dir = scratch("io");
  const Image x = random_uniform(5, 7, 9) - 0.5;
  io::save_array(dir / "x.npy", x);
  CHECK(bit_equal(io::load_array(dir / "x.npy"), x));
  CHECK_THROWS(io::load_array(dir / "missing.npy"));

  Image levels(2, 3);
  levels << 0.0, 0.2, 0.4, 0.6, 0.8, 1.0;
  io::write_png(dir / "x.png", levels);
  const Image back = io::read_grayscale(dir / "x.png");
  CHECK(shape_of(back) == Shape{2, 3});
  CHECK(((back / 255.0 - levels).abs() <= 0.5 / 255.0 + 1e-12).all());
  fs::remove_all(dir);
}
