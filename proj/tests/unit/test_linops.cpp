#include "doctest.h"

#include <cmath>

#include "fei/errors.hpp"
#include "fei/linops.hpp"
#include "helpers.hpp"

using namespace fei;
using fei::test::random_image;
using fei::test::random_matrix;

namespace {

Image column(std::initializer_list<double> v) {
  Image x(static_cast<Eigen::Index>(v.size()), 1);
  Eigen::Index i = 0;
  for (double d : v) x(i++) = d;
  return x;
}

// |<Ax, y> - <x, A^T y>| / (|Ax| |y|)
double adjoint_error(const LinearOperator& op, std::uint64_t seed) {
  const auto in = op.in_shape();
  const auto out = op.out_shape();
  const Image x = random_image(in.rows, in.cols, seed);
  const Measurement y = random_image(out.rows, out.cols, seed + 1000);
  const Measurement ax = op.apply(x);
  const double lhs = (ax * y).sum();
  const double rhs = (x * op.adjoint(y)).sum();
  return std::abs(lhs - rhs) / (ax.matrix().norm() * y.matrix().norm());
}

double pinv_adjoint_error(const LinearOperator& op, std::uint64_t seed) {
  const auto in = op.in_shape();
  const auto out = op.out_shape();
  const Measurement y = random_image(out.rows, out.cols, seed);
  const Image x = random_image(in.rows, in.cols, seed + 7);
  const Image py = op.pinv(y);
  const double lhs = (py * x).sum();
  const double rhs = (y * op.pinv_adjoint(x)).sum();
  return std::abs(lhs - rhs) / (py.matrix().norm() * x.matrix().norm());
}

Image disk(int n, double radius) {
  Image x = Image::Zero(n, n);
  const double c = 0.5 * (n - 1);
  for (int r = 0; r < n; ++r)
    for (int q = 0; q < n; ++q)
      if ((r - c) * (r - c) + (q - c) * (q - c) <= radius * radius) x(r, q) = 1.0;
  return x;
}

}  // namespace

TEST_CASE("dense operator: identity and transpose arithmetic") {
  auto eye = make_dense_operator(Eigen::MatrixXd::Identity(2, 2));
  const Measurement y = eye->apply(column({3, 4}));
  CHECK(y(0) == 3.0);
  CHECK(y(1) == 4.0);

  Eigen::MatrixXd m(2, 2);
  m << 1, 0, 0, 0;
  auto op = make_dense_operator(m);
  const Image a = op->adjoint(column({5, 7}));
  CHECK(a(0) == 5.0);
  CHECK(a(1) == 0.0);
}

TEST_CASE("dense operator: random 6x8 dot-product test") {
  auto op = make_dense_operator(random_matrix(6, 8, 3));
  for (std::uint64_t s = 0; s < 20; ++s) CHECK(adjoint_error(*op, s) <= 1e-6);
  for (std::uint64_t s = 0; s < 5; ++s) CHECK(pinv_adjoint_error(*op, s) <= 1e-10);
}

TEST_CASE("dense operator rejects non-finite entries") {
  Eigen::MatrixXd m = Eigen::MatrixXd::Ones(2, 2);
  m(1, 0) = std::nan("");
  CHECK_THROWS_AS(make_dense_operator(m), InputError);
  m(1, 0) = INFINITY;
  CHECK_THROWS_AS(make_dense_operator(m), InputError);
}

TEST_CASE("dense pinv is a right inverse on the range of full-row-rank A") {
  const Eigen::MatrixXd a = random_matrix(5, 9, 11);
  auto op = make_dense_operator(a);
  for (std::uint64_t s = 0; s < 5; ++s) {
    const Image x = random_image(9, 1, s);
    const Measurement ax = op->apply(x);
    const Measurement back = op->apply(op->pinv(ax));
    CHECK(fei::test::rel_err(back, ax) <= 1e-6);
  }
}

TEST_CASE("dense operator: linearity and purity") {
  auto op = make_dense_operator(random_matrix(4, 6, 5));
  const Image x1 = random_image(6, 1, 1);
  const Image x2 = random_image(6, 1, 2);
  const Measurement lhs = op->apply(2.5 * x1 - 0.5 * x2);
  const Measurement rhs = 2.5 * op->apply(x1) - 0.5 * op->apply(x2);
  CHECK(fei::test::rel_err(lhs, rhs) <= 1e-12);
  CHECK(fei::test::bit_equal(op->apply(x1), op->apply(x1)));
}

TEST_CASE("operators reject shape mismatches") {
  auto op = make_dense_operator(random_matrix(4, 6, 5));
  CHECK_THROWS_AS(op->apply(Image::Zero(5, 1)), InputError);
  CHECK_THROWS_AS(op->adjoint(Image::Zero(6, 1)), InputError);
  auto radon = make_radon_operator(16, 4);
  CHECK_THROWS_AS(radon->apply(Image::Zero(8, 8)), InputError);
  CHECK_THROWS_AS(radon->pinv(Image::Zero(3, 3)), InputError);
}

TEST_CASE("radon: construction errors") {
  CHECK_THROWS_AS(make_radon_operator(4, 10), ConfigError);
  CHECK_THROWS_AS(make_radon_operator(0, 10), ConfigError);
  CHECK_THROWS_AS(make_radon_operator(16, 0), ConfigError);
  CHECK_THROWS_AS(make_radon_operator(16, -3), ConfigError);
  CHECK_THROWS_AS(make_radon_operator(16, 2, {0.0, 180.0}), ConfigError);
  CHECK_THROWS_AS(make_radon_operator(16, 1, {-1.0}), ConfigError);
  CHECK_THROWS_AS(make_radon_operator(16, 4, {}, 0.0), ConfigError);
}

TEST_CASE("radon: shapes, zero image and uniform default angles") {
  auto op = make_radon_operator(128, 50);
  const auto* radon = dynamic_cast<const RadonOperator*>(op.get());
  REQUIRE(radon);
  CHECK(op->in_shape() == Shape{128, 128});
  CHECK(op->out_shape() == Shape{50, static_cast<Eigen::Index>(std::ceil(std::sqrt(2.0) * 128))});
  CHECK(radon->angles().size() == 50);
  CHECK(radon->angles().front() == 0.0);
  CHECK(radon->angles()[1] == doctest::Approx(3.6));
  CHECK((op->apply(Image::Zero(128, 128)) == 0.0).all());
  CHECK(op->metadata()["geometry"] == "parallel");
}

TEST_CASE("radon: disk projections are symmetric about the detector center") {
  const int n = 32;
  const Image x = disk(n, 10.0);
  for (double angle : {0.0, 17.0, 45.0, 90.0, 133.0}) {
    auto op = make_radon_operator(n, 1, {angle});
    const Measurement p = op->apply(x);
    const Measurement mirrored = p.rowwise().reverse();
    const double asym = (p - mirrored).matrix().norm() / p.matrix().norm();
    CHECK_MESSAGE(asym <= 1e-3, "angle " << angle << " asymmetry " << asym);
  }
}

TEST_CASE("radon: adjoint and pinv-adjoint dot-product tests") {
  auto op = make_radon_operator(24, 7, {}, 0.3);
  for (std::uint64_t s = 0; s < 20; ++s) CHECK(adjoint_error(*op, s) <= 1e-3);
  for (std::uint64_t s = 0; s < 5; ++s) CHECK(pinv_adjoint_error(*op, s) <= 1e-10);
}

TEST_CASE("radon: FBP approximately inverts a smooth phantom with many views") {
  const int n = 48;
  const Image x = disk(n, 15.0);
  auto op = make_radon_operator(n, 90);
  const Image rec = op->pinv(op->apply(x));
  // compare on the interior where the reconstruction is well conditioned
  const double err = (rec - x).block(8, 8, n - 16, n - 16).matrix().norm() /
                     x.block(8, 8, n - 16, n - 16).matrix().norm();
  CHECK(err < 0.2);
}

TEST_CASE("radon: scale multiplies A and is undone by pinv") {
  const Image x = disk(32, 9.0);
  auto a1 = make_radon_operator(32, 10, {}, 1.0);
  auto a2 = make_radon_operator(32, 10, {}, 0.25);
  const Measurement y1 = a1->apply(x);
  const Measurement y2 = a2->apply(x);
  CHECK(fei::test::rel_err(y2, 0.25 * y1) <= 1e-12);
  CHECK(fei::test::rel_err(a2->pinv(y2), a1->pinv(y1)) <= 1e-12);
}

TEST_CASE("inpainting operator") {
  const int n = 12;
  const Image x = random_image(n, n, 4);
  auto ones = make_inpainting_operator(n, Image::Ones(n, n));
  CHECK(fei::test::bit_equal(ones->apply(x), x));
  auto none = make_inpainting_operator(n, Image::Zero(n, n));
  CHECK((none->apply(x) == 0.0).all());

  Image mask = fei::test::random_uniform(n, n, 9);
  mask = (mask > 0.5).cast<double>();
  auto op = make_inpainting_operator(n, mask);
  CHECK(fei::test::bit_equal(op->apply(op->pinv(op->apply(x))), op->apply(x)));
  for (std::uint64_t s = 0; s < 20; ++s) CHECK(adjoint_error(*op, s) <= 1e-5);

  Image bad = mask;
  bad(0, 0) = 0.5;
  CHECK_THROWS_AS(make_inpainting_operator(n, bad), ConfigError);
  CHECK_THROWS_AS(make_inpainting_operator(n + 1, mask), ConfigError);
}

TEST_CASE("gaussian operator adjoint test") {
  auto op = make_gaussian_operator(20, Shape{8, 8}, 5);
  for (std::uint64_t s = 0; s < 20; ++s) CHECK(adjoint_error(*op, s) <= 1e-5);
  auto again = make_gaussian_operator(20, Shape{8, 8}, 5);
  const Image x = random_image(8, 8, 1);
  CHECK(fei::test::bit_equal(op->apply(x), again->apply(x)));
}

TEST_CASE("materialize reproduces apply") {
  auto op = make_radon_operator(10, 3);
  const Eigen::MatrixXd m = materialize(*op);
  const Image x = random_image(10, 10, 2);
  const Eigen::VectorXd flat = Eigen::Map<const Eigen::VectorXd>(x.data(), x.size());
  const Measurement y = op->apply(x);
  const Eigen::VectorXd yv = Eigen::Map<const Eigen::VectorXd>(y.data(), y.size());
  CHECK((m * flat - yv).norm() <= 1e-12 * yv.norm());
}

TEST_CASE("measure: noise-free, deterministic and calibrated noise") {
  MeasurementModel clean{make_dense_operator(random_matrix(5, 5, 1)), 0.0};
  const Image x = random_image(5, 1, 3);
  CHECK(fei::test::bit_equal(measure(clean, x, 1), clean.op->apply(x)));

  MeasurementModel noisy{make_dense_operator(Eigen::MatrixXd::Identity(4, 4)), 0.1};
  const Image x4 = random_image(4, 1, 3);
  CHECK(fei::test::bit_equal(measure(noisy, x4, 42), measure(noisy, x4, 42)));
  CHECK_FALSE(fei::test::bit_equal(measure(noisy, x4, 42), measure(noisy, x4, 43)));

  // 10^4 draws of a 4-vector: sample std of y - Ax within 5% of 0.1
  double sum = 0.0, sq = 0.0;
  long count = 0;
  for (std::uint64_t s = 0; s < 10000; ++s) {
    const Measurement e = measure(noisy, x4, s) - noisy.op->apply(x4);
    sum += e.sum();
    sq += e.square().sum();
    count += e.size();
  }
  const double mean = sum / count;
  const double sd = std::sqrt(sq / count - mean * mean);
  CHECK(std::abs(sd - 0.1) <= 0.005);

  MeasurementModel negative{clean.op, -1.0};
  CHECK_THROWS_AS(measure(negative, x, 0), InputError);
  CHECK_THROWS_AS(measure(clean, Image::Zero(4, 1), 0), InputError);
}
