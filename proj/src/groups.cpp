#include "fei/groups.hpp"

#include <cmath>
#include <numbers>

#include "fei/errors.hpp"

namespace fei {

std::string to_string(GroupFamily f) {
  switch (f) {
    case GroupFamily::rotation: return "rotation";
    case GroupFamily::shift: return "shift";
    case GroupFamily::flip: return "flip";
  }
  return "?";
}

GroupFamily parse_group_family(const std::string& name) {
  if (name == "rotation") return GroupFamily::rotation;
  if (name == "shift") return GroupFamily::shift;
  if (name == "flip") return GroupFamily::flip;
  throw ConfigError("unknown group family '" + name + "' (expected rotation | shift | flip)");
}

GroupAction GroupAction::identity() { return rotation(0.0); }

GroupAction GroupAction::rotation(double degrees) {
  GroupAction g;
  g.family_ = GroupFamily::rotation;
  g.angle_ = degrees;
  return g;
}

GroupAction GroupAction::shift(int dy, int dx) {
  GroupAction g;
  g.family_ = GroupFamily::shift;
  g.dy_ = dy;
  g.dx_ = dx;
  return g;
}

GroupAction GroupAction::flip(Flip axis) {
  GroupAction g;
  g.family_ = GroupFamily::flip;
  g.flip_ = axis;
  return g;
}

namespace {

double wrap_degrees(double deg) {
  double r = std::fmod(deg, 360.0);
  if (r < 0) r += 360.0;
  return r;
}

bool is_quarter_turn(double deg) {
  const double r = wrap_degrees(deg);
  return r == 0.0 || r == 90.0 || r == 180.0 || r == 270.0;
}

// Exact counter-clockwise rotation by quarter * 90 degrees.
Image rotate_quarter(const Image& x, int quarter) {
  quarter = ((quarter % 4) + 4) % 4;
  const Eigen::Index h = x.rows();
  const Eigen::Index w = x.cols();
  switch (quarter) {
    case 0:
      return x;
    case 1: {
      Image out(w, h);
      for (Eigen::Index r = 0; r < w; ++r)
        for (Eigen::Index c = 0; c < h; ++c) out(r, c) = x(c, w - 1 - r);
      return out;
    }
    case 2:
      return x.reverse();
    default: {
      Image out(w, h);
      for (Eigen::Index r = 0; r < w; ++r)
        for (Eigen::Index c = 0; c < h; ++c) out(r, c) = x(h - 1 - c, r);
      return out;
    }
  }
}

// Bilinear rotation as a gather (forward) or the matching scatter (transpose).
Image rotate_bilinear(const Image& x, double degrees, bool transpose) {
  const Eigen::Index h = x.rows();
  const Eigen::Index w = x.cols();
  const double cy = 0.5 * (h - 1);
  const double cx = 0.5 * (w - 1);
  const double phi = degrees * std::numbers::pi / 180.0;
  const double c = std::cos(phi);
  const double s = std::sin(phi);
  Image out = Image::Zero(h, w);
  for (Eigen::Index r = 0; r < h; ++r) {
    for (Eigen::Index q = 0; q < w; ++q) {
      const double xo = q - cx;
      const double yo = cy - r;
      // Source point: rotate the output coordinate clockwise.
      const double xs = xo * c + yo * s;
      const double ys = -xo * s + yo * c;
      const double col = cx + xs;
      const double row = cy - ys;
      if (col <= -1.0 || row <= -1.0 || col >= w || row >= h) continue;
      const auto c0 = static_cast<Eigen::Index>(std::floor(col));
      const auto r0 = static_cast<Eigen::Index>(std::floor(row));
      const double fc = col - c0;
      const double fr = row - r0;
      const double wts[4] = {(1 - fr) * (1 - fc), (1 - fr) * fc, fr * (1 - fc), fr * fc};
      const Eigen::Index rr[4] = {r0, r0, r0 + 1, r0 + 1};
      const Eigen::Index cc[4] = {c0, c0 + 1, c0, c0 + 1};
      for (int k = 0; k < 4; ++k) {
        if (rr[k] < 0 || cc[k] < 0 || rr[k] >= h || cc[k] >= w) continue;
        if (transpose) {
          out(rr[k], cc[k]) += wts[k] * x(r, q);
        } else {
          out(r, q) += wts[k] * x(rr[k], cc[k]);
        }
      }
    }
  }
  return out;
}

Image rotate(const Image& x, double degrees, bool transpose) {
  const double r = wrap_degrees(degrees);
  if (is_quarter_turn(r)) {
    const int quarter = static_cast<int>(r / 90.0);
    if (quarter % 2 == 1 && x.rows() != x.cols()) {
      throw InputError("rotation: quarter turns need square images");
    }
    return rotate_quarter(x, transpose ? -quarter : quarter);
  }
  if (x.rows() != x.cols()) throw InputError("rotation: arbitrary angles need square images");
  return rotate_bilinear(x, r, transpose);
}

Image circular_shift(const Image& x, int dy, int dx) {
  const Eigen::Index h = x.rows();
  const Eigen::Index w = x.cols();
  Image out(h, w);
  for (Eigen::Index r = 0; r < h; ++r) {
    const Eigen::Index rs = ((r - dy) % h + h) % h;
    for (Eigen::Index c = 0; c < w; ++c) {
      const Eigen::Index cs = ((c - dx) % w + w) % w;
      out(r, c) = x(rs, cs);
    }
  }
  return out;
}

Image flip_image(const Image& x, Flip axis) {
  switch (axis) {
    case Flip::none: return x;
    case Flip::horizontal: return x.rowwise().reverse();
    case Flip::vertical: return x.colwise().reverse();
  }
  return x;
}

}  // namespace

bool GroupAction::is_permutation() const {
  return family_ != GroupFamily::rotation || is_quarter_turn(angle_);
}

bool GroupAction::is_identity() const {
  switch (family_) {
    case GroupFamily::rotation: return wrap_degrees(angle_) == 0.0;
    case GroupFamily::shift: return dy_ == 0 && dx_ == 0;
    case GroupFamily::flip: return flip_ == Flip::none;
  }
  return false;
}

std::string GroupAction::describe() const {
  switch (family_) {
    case GroupFamily::rotation: return "rotation(" + std::to_string(angle_) + ")";
    case GroupFamily::shift:
      return "shift(" + std::to_string(dy_) + "," + std::to_string(dx_) + ")";
    case GroupFamily::flip:
      return flip_ == Flip::none ? "flip(none)"
             : flip_ == Flip::horizontal ? "flip(horizontal)" : "flip(vertical)";
  }
  return "?";
}

Image GroupAction::apply(const Image& x) const {
  if (x.size() == 0) throw InputError("group action: empty image");
  switch (family_) {
    case GroupFamily::rotation: return rotate(x, angle_, false);
    case GroupFamily::shift: return circular_shift(x, dy_, dx_);
    case GroupFamily::flip: return flip_image(x, flip_);
  }
  return x;
}

Image GroupAction::apply_inverse(const Image& x) const {
  if (x.size() == 0) throw InputError("group action: empty image");
  switch (family_) {
    case GroupFamily::rotation:
      return is_quarter_turn(angle_) ? rotate(x, angle_, true) : rotate(x, -angle_, false);
    case GroupFamily::shift: return circular_shift(x, -dy_, -dx_);
    case GroupFamily::flip: return flip_image(x, flip_);
  }
  return x;
}

Image GroupAction::transpose(const Image& x) const {
  if (family_ == GroupFamily::rotation) return rotate(x, angle_, true);
  return apply_inverse(x);
}

GroupAction sample_group(const GroupSpec& spec, std::mt19937_64& rng) {
  switch (spec.family) {
    case GroupFamily::rotation: {
      if (spec.angles.empty()) {
        std::uniform_int_distribution<int> pick(1, 360);
        return GroupAction::rotation(pick(rng));
      }
      std::uniform_int_distribution<std::size_t> pick(0, spec.angles.size() - 1);
      return GroupAction::rotation(spec.angles[pick(rng)]);
    }
    case GroupFamily::shift: {
      std::uniform_int_distribution<int> pick(-spec.max_shift, spec.max_shift);
      const int dy = pick(rng);
      const int dx = pick(rng);
      return GroupAction::shift(dy, dx);
    }
    case GroupFamily::flip: {
      std::uniform_int_distribution<int> pick(0, 2);
      return GroupAction::flip(static_cast<Flip>(pick(rng)));
    }
  }
  throw ConfigError("unknown group family");
}

GroupAction sample_group(const GroupSpec& spec, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return sample_group(spec, rng);
}

GroupAction sample_group(GroupFamily family, std::uint64_t seed) {
  GroupSpec spec;
  spec.family = family;
  return sample_group(spec, seed);
}

}  // namespace fei
