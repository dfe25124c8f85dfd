#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fei/linops.hpp"
#include "fei/types.hpp"

namespace fei {

enum class Split { train, test };

/// Grayscale images in [0, 1] sharing one shape, with stable string ids.
struct ImageDataset {
  std::vector<Image> images;
  std::vector<std::string> ids;
  Split split = Split::train;

  std::size_t size() const { return images.size(); }
  Shape shape() const { return images.empty() ? Shape{} : shape_of(images.front()); }
};

/// 1-based source indices assigned to each split (CT100 layout: 1-10 / 11-20).
struct SplitSpec {
  std::vector<int> train_ids;
  std::vector<int> test_ids;
};

struct DatasetSplits {
  ImageDataset train;
  ImageDataset test;
};

/// Parses "1-10", "1,3,5" or "1-5,8" into indices.
std::vector<int> parse_id_list(const std::string& text);

/// `source` is either a directory of .png/.pgm/.npy slices (sorted by file
/// name, ids = 1-based sort position) or a builtin: "shepp_logan" (one
/// image), "shepp_logan_variants" or "random_ellipses" (as many images as
/// the split spec references, seeded by `seed`).
DatasetSplits load_dataset(const std::string& source, int size, const SplitSpec& split,
                           std::uint64_t seed = 0);

Image shepp_logan(int size);
Image shepp_logan_variant(int size, std::uint64_t seed);
Image random_ellipses(int size, std::uint64_t seed);

/// Separable triangle-filter resize; the kernel widens when downscaling.
Image resize_antialiased(const Image& img, Eigen::Index rows, Eigen::Index cols);
Image normalize_min_max(const Image& img);

/// Measurements handed to unsupervised trainers; carries no ground truth.
struct MeasurementSet {
  std::vector<std::string> ids;
  std::vector<Measurement> y;

  std::size_t size() const { return y.size(); }
};

/// Measurements together with the ground truth used only for scoring and the
/// supervised reference.
struct EvaluationSet {
  MeasurementSet measurements;
  std::vector<Image> truth;
};

/// One measurement per image; sample i uses a seed derived from (seed, id).
EvaluationSet build_measurements(const ImageDataset& ds, const MeasurementModel& model,
                                 std::uint64_t seed);

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);
std::uint64_t fnv1a(const std::string& text);

}  // namespace fei
