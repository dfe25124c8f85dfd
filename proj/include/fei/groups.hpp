#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "fei/types.hpp"

namespace fei {

enum class GroupFamily { rotation, shift, flip };

enum class Flip { none, horizontal, vertical };

std::string to_string(GroupFamily f);
GroupFamily parse_group_family(const std::string& name);

/// Sampling domain of a transformation group.
struct GroupSpec {
  GroupFamily family = GroupFamily::rotation;
  /// Candidate rotation angles in degrees (default: 1..360).
  std::vector<int> angles;
  /// Circular shifts are drawn uniformly from [-max_shift, max_shift] per axis.
  int max_shift = 8;
};

/// One group element T_g acting on images.
///
/// Rotations turn the image counter-clockwise about ((H-1)/2, (W-1)/2).
/// Multiples of 90 degrees are exact pixel permutations; other angles use
/// bilinear interpolation with zero fill. Shifts are circular. `transpose`
/// is the exact adjoint of `apply` and equals `apply_inverse` for
/// permutation elements.
class GroupAction {
 public:
  static GroupAction identity();
  static GroupAction rotation(double degrees);
  static GroupAction shift(int dy, int dx);
  static GroupAction flip(Flip axis);

  GroupFamily family() const { return family_; }
  double angle() const { return angle_; }
  int shift_y() const { return dy_; }
  int shift_x() const { return dx_; }
  Flip flip_axis() const { return flip_; }

  /// True when the action is a pixel permutation (exactly unitary).
  bool is_permutation() const;
  bool is_identity() const;
  std::string describe() const;

  Image apply(const Image& x) const;
  Image apply_inverse(const Image& x) const;
  Image transpose(const Image& x) const;

 private:
  GroupFamily family_ = GroupFamily::rotation;
  double angle_ = 0.0;
  int dy_ = 0;
  int dx_ = 0;
  Flip flip_ = Flip::none;
};

GroupAction sample_group(const GroupSpec& spec, std::mt19937_64& rng);
GroupAction sample_group(const GroupSpec& spec, std::uint64_t seed);
GroupAction sample_group(GroupFamily family, std::uint64_t seed);

}  // namespace fei
