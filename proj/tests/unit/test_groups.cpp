#include "doctest.h"

#include <set>

#include "fei/errors.hpp"
#include "fei/groups.hpp"
#include "helpers.hpp"

using namespace fei;
using fei::test::bit_equal;
using fei::test::random_image;
using fei::test::random_uniform;

namespace {

Image disk_image(int n, double radius, std::uint64_t seed) {
  Image x = random_uniform(n, n, seed);
  const double c = 0.5 * (n - 1);
  for (int r = 0; r < n; ++r)
    for (int q = 0; q < n; ++q)
      if ((r - c) * (r - c) + (q - c) * (q - c) > radius * radius) x(r, q) = 0.0;
  return x;
}

// Random band-limited image on a centered disk (interpolation tolerances
// are stated for images resolved by the pixel grid).
Image smooth_disk(int n, std::uint64_t seed = 0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-0.35, 0.35);
  std::uniform_real_distribution<double> ph(0.0, 6.283);
  double fy[4], fx[4], p[4];
  for (int k = 0; k < 4; ++k) {
    fy[k] = u(rng);
    fx[k] = u(rng);
    p[k] = ph(rng);
  }
  Image x = Image::Zero(n, n);
  const double c = 0.5 * (n - 1);
  const double radius = 0.4 * n;
  for (int r = 0; r < n; ++r)
    for (int q = 0; q < n; ++q) {
      const double d2 = ((r - c) * (r - c) + (q - c) * (q - c)) / (radius * radius);
      if (d2 >= 1.0) continue;
      double v = 1.0;
      for (int k = 0; k < 4; ++k) v += 0.25 * std::cos(fy[k] * r + fx[k] * q + p[k]);
      x(r, q) = std::pow(1.0 - d2, 2) * v;
    }
  return x;
}

std::vector<GroupAction> d4() {
  return {GroupAction::rotation(0),   GroupAction::rotation(90),
          GroupAction::rotation(180), GroupAction::rotation(270),
          GroupAction::flip(Flip::horizontal), GroupAction::flip(Flip::vertical),
          // the two diagonal reflections as compositions are covered below
          GroupAction::flip(Flip::none)};
}

}  // namespace

TEST_CASE("identity elements return the input bit-exactly") {
  const Image x = random_image(9, 9, 1);
  CHECK(bit_equal(GroupAction::identity().apply(x), x));
  CHECK(bit_equal(GroupAction::rotation(0).apply(x), x));
  CHECK(bit_equal(GroupAction::rotation(360).apply(x), x));
  CHECK(bit_equal(GroupAction::shift(0, 0).apply(x), x));
  CHECK(bit_equal(GroupAction::flip(Flip::none).apply(x), x));
  CHECK(GroupAction::rotation(360).is_identity());
}

TEST_CASE("90 degree rotation of a 2x2 image") {
  Image x(2, 2);
  x << 1, 2, 3, 4;
  Image expected(2, 2);
  expected << 2, 4, 1, 3;
  CHECK(bit_equal(GroupAction::rotation(90).apply(x), expected));
}

TEST_CASE("exact round trips for permutation elements") {
  const Image x = random_image(8, 8, 2);
  for (int a : {90, 180, 270, -90, 450}) {
    const auto g = GroupAction::rotation(a);
    CHECK(g.is_permutation());
    CHECK(bit_equal(g.apply_inverse(g.apply(x)), x));
    CHECK(bit_equal(g.apply(g.apply_inverse(x)), x));
  }
  const auto s = GroupAction::shift(3, -2);
  CHECK(bit_equal(s.apply_inverse(s.apply(x)), x));
  CHECK(bit_equal(s.apply(x).topLeftCorner(1, 1), x.block(5, 2, 1, 1)));
  for (Flip f : {Flip::horizontal, Flip::vertical}) {
    const auto g = GroupAction::flip(f);
    CHECK(bit_equal(g.apply_inverse(g.apply(x)), x));
  }
}

TEST_CASE("D4 closure: compositions of quarter turns and flips stay in the group") {
  const Image x = random_image(6, 6, 3);
  // Closed set of the eight D4 images of x.
  std::vector<Image> orbit;
  for (int a : {0, 90, 180, 270}) {
    const Image r = GroupAction::rotation(a).apply(x);
    orbit.push_back(r);
    orbit.push_back(GroupAction::flip(Flip::horizontal).apply(r));
  }
  auto in_orbit = [&orbit](const Image& y) {
    for (const auto& o : orbit)
      if (bit_equal(o, y)) return true;
    return false;
  };
  const auto elements = d4();
  for (const auto& g : elements)
    for (const auto& h : elements)
      for (const auto& o : orbit) CHECK(in_orbit(g.apply(h.apply(o))));
  // rotation composition adds angles exactly
  for (int a : {0, 90, 180, 270})
    for (int b : {0, 90, 180, 270})
      CHECK(bit_equal(GroupAction::rotation(a).apply(GroupAction::rotation(b).apply(x)),
                      GroupAction::rotation(a + b).apply(x)));
  // vertical flip = horizontal flip followed by a half turn
  CHECK(bit_equal(GroupAction::flip(Flip::vertical).apply(x),
                  GroupAction::rotation(180).apply(GroupAction::flip(Flip::horizontal).apply(x))));
}

TEST_CASE("permutation elements preserve inner products bit-exactly") {
  const Image x = random_image(7, 7, 4);
  const Image y = random_image(7, 7, 5);
  for (const auto& g : {GroupAction::rotation(90), GroupAction::shift(2, 5),
                        GroupAction::flip(Flip::vertical)}) {
    const Image tx = g.apply(x);
    const Image ty = g.apply(y);
    // same multiset of products; compare after sorting to stay order-independent
    std::vector<double> a(tx.size()), b(x.size());
    for (Eigen::Index i = 0; i < tx.size(); ++i) {
      a[i] = tx(i) * ty(i);
      b[i] = x(i) * y(i);
    }
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    CHECK(a == b);
  }
}

TEST_CASE("interpolated rotation: norm, inner products and round trip") {
  const int n = 48;
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> pick(1, 359);
  for (std::uint64_t s = 0; s < 10; ++s) {
    const Image xs = smooth_disk(n, s);
    double angle = pick(rng);
    if (std::fmod(angle, 90.0) == 0.0) angle += 1.0;
    const auto g = GroupAction::rotation(angle);
    CHECK_FALSE(g.is_permutation());
    const double ratio = g.apply(xs).matrix().norm() / xs.matrix().norm();
    CHECK_MESSAGE(std::abs(ratio - 1.0) <= 0.02, "angle " << angle);
  }
  const Image x = smooth_disk(n);
  const auto g = GroupAction::rotation(37);
  const Image y = smooth_disk(n, 99);
  const double ip = (x * y).sum();
  const double tip = (g.apply(x) * g.apply(y)).sum();
  CHECK(std::abs(tip - ip) / std::abs(ip) <= 0.02);

  const Image back = g.apply_inverse(g.apply(x));
  const int m = 10;
  const double err = (back - x).block(m, m, n - 2 * m, n - 2 * m).abs().maxCoeff();
  CHECK(err <= 0.02);
}

TEST_CASE("interpolated rotation: pixel noise loses energy but never gains it") {
  const Image x = disk_image(40, 15.0, 9);
  const auto g = GroupAction::rotation(29);
  // bilinear weights average neighbouring pixels, so white noise is damped
  const double ratio = g.apply(x).matrix().norm() / x.matrix().norm();
  CHECK(ratio <= 1.0);
  CHECK(ratio >= 0.8);
}

TEST_CASE("transpose is the exact adjoint of apply") {
  const int n = 20;
  const Image x = random_image(n, n, 10);
  const Image y = random_image(n, n, 11);
  for (const auto& g : {GroupAction::rotation(33), GroupAction::rotation(90),
                        GroupAction::shift(-4, 7), GroupAction::flip(Flip::horizontal)}) {
    const double lhs = (g.apply(x) * y).sum();
    const double rhs = (x * g.transpose(y)).sum();
    CHECK(std::abs(lhs - rhs) <= 1e-10 * std::abs(lhs) + 1e-12);
  }
}

TEST_CASE("shapes are preserved and invalid inputs rejected") {
  const Image x = random_image(6, 6, 1);
  CHECK(shape_of(GroupAction::rotation(45).apply(x)) == shape_of(x));
  CHECK(shape_of(GroupAction::shift(1, 1).apply(x)) == shape_of(x));
  CHECK_THROWS_AS(GroupAction::rotation(45).apply(Image::Zero(4, 6)), InputError);
  CHECK_THROWS_AS(GroupAction::rotation(90).apply(Image::Zero(4, 6)), InputError);
  CHECK_THROWS_AS(GroupAction::rotation(10).apply(Image()), InputError);
  CHECK_THROWS_AS(parse_group_family("scaling"), ConfigError);
}

TEST_CASE("sampling: determinism, coverage and enumerated sets") {
  const auto a = sample_group(GroupFamily::rotation, 1234);
  const auto b = sample_group(GroupFamily::rotation, 1234);
  CHECK(a.angle() == b.angle());

  GroupSpec spec;
  std::mt19937_64 rng(7);
  std::set<int> seen;
  for (int i = 0; i < 10000; ++i) {
    const double angle = sample_group(spec, rng).angle();
    CHECK(angle == std::floor(angle));
    CHECK(angle >= 1);
    CHECK(angle <= 360);
    seen.insert(static_cast<int>(angle));
  }
  CHECK(seen.size() == 360);

  spec.family = GroupFamily::flip;
  std::set<int> flips;
  for (int i = 0; i < 200; ++i) flips.insert(static_cast<int>(sample_group(spec, rng).flip_axis()));
  CHECK(flips == std::set<int>{0, 1, 2});

  spec.family = GroupFamily::shift;
  spec.max_shift = 3;
  for (int i = 0; i < 200; ++i) {
    const auto g = sample_group(spec, rng);
    CHECK(std::abs(g.shift_x()) <= 3);
    CHECK(std::abs(g.shift_y()) <= 3);
  }

  spec.family = GroupFamily::rotation;
  spec.angles = {90, 180};
  for (int i = 0; i < 50; ++i) CHECK(sample_group(spec, rng).is_permutation());
}
