#include "fei/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "fei/errors.hpp"
#include "fei/io.hpp"

namespace fei {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finalizer
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::vector<int> parse_id_list(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    part.erase(std::remove_if(part.begin(), part.end(), ::isspace), part.end());
    if (part.empty()) continue;
    try {
      const auto dash = part.find('-', 1);
      if (dash == std::string::npos) {
        out.push_back(std::stoi(part));
      } else {
        const int lo = std::stoi(part.substr(0, dash));
        const int hi = std::stoi(part.substr(dash + 1));
        if (hi < lo) throw ConfigError("bad id range '" + part + "'");
        for (int i = lo; i <= hi; ++i) out.push_back(i);
      }
    } catch (const std::logic_error&) {
      throw ConfigError("bad id list '" + text + "'");
    }
  }
  for (int id : out) {
    if (id < 1) throw ConfigError("ids are 1-based: '" + text + "'");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Phantoms

namespace {

struct Ellipse {
  double a, b, x0, y0, phi_deg, value;
};

const std::vector<Ellipse>& modified_shepp_logan() {
  static const std::vector<Ellipse> e = {
      {0.69, 0.92, 0.0, 0.0, 0.0, 1.0},         {0.6624, 0.874, 0.0, -0.0184, 0.0, -0.8},
      {0.11, 0.31, 0.22, 0.0, -18.0, -0.2},     {0.16, 0.41, -0.22, 0.0, 18.0, -0.2},
      {0.21, 0.25, 0.0, 0.35, 0.0, 0.1},        {0.046, 0.046, 0.0, 0.1, 0.0, 0.1},
      {0.046, 0.046, 0.0, -0.1, 0.0, 0.1},      {0.046, 0.023, -0.08, -0.605, 0.0, 0.1},
      {0.023, 0.023, 0.0, -0.606, 0.0, 0.1},    {0.023, 0.046, 0.06, -0.605, 0.0, 0.1}};
  return e;
}

// Renders ellipses on [-1, 1]^2 (y up) with 4x4 supersampling per pixel.
Image render(const std::vector<Ellipse>& ellipses, int size) {
  constexpr int ss = 4;
  Image img = Image::Zero(size, size);
  std::vector<std::array<double, 4>> prepared;
  for (const auto& e : ellipses) {
    const double phi = e.phi_deg * std::numbers::pi / 180.0;
    prepared.push_back({std::cos(phi), std::sin(phi), 1.0 / (e.a * e.a), 1.0 / (e.b * e.b)});
  }
  for (int r = 0; r < size; ++r) {
    for (int c = 0; c < size; ++c) {
      double acc = 0.0;
      for (int sr = 0; sr < ss; ++sr) {
        for (int sc = 0; sc < ss; ++sc) {
          const double x = -1.0 + 2.0 * (c + (sc + 0.5) / ss) / size;
          const double y = 1.0 - 2.0 * (r + (sr + 0.5) / ss) / size;
          for (std::size_t k = 0; k < ellipses.size(); ++k) {
            const auto& e = ellipses[k];
            const auto& p = prepared[k];
            const double dx = x - e.x0;
            const double dy = y - e.y0;
            const double u = dx * p[0] + dy * p[1];
            const double v = -dx * p[1] + dy * p[0];
            if (u * u * p[2] + v * v * p[3] <= 1.0) acc += e.value;
          }
        }
      }
      img(r, c) = acc / (ss * ss);
    }
  }
  return img;
}

}  // namespace

Image shepp_logan(int size) { return normalize_min_max(render(modified_shepp_logan(), size)); }

Image shepp_logan_variant(int size, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
  const double scale = uniform(0.78, 0.92);
  const double rot = uniform(0.0, 360.0) * std::numbers::pi / 180.0;
  const double cr = std::cos(rot), sr = std::sin(rot);
  std::vector<Ellipse> es = modified_shepp_logan();
  for (std::size_t k = 2; k < es.size(); ++k) {
    auto& e = es[k];
    e.x0 += uniform(-0.05, 0.05);
    e.y0 += uniform(-0.05, 0.05);
    e.a *= uniform(0.75, 1.25);
    e.b *= uniform(0.75, 1.25);
    e.phi_deg += uniform(-20.0, 20.0);
    e.value *= uniform(0.6, 1.6);
  }
  // a few extra inclusions inside the skull
  const int extra = static_cast<int>(uniform(1.0, 4.0));
  for (int k = 0; k < extra; ++k) {
    const double rad = uniform(0.0, 0.45);
    const double th = uniform(0.0, 2.0 * std::numbers::pi);
    es.push_back({uniform(0.03, 0.12), uniform(0.03, 0.12), rad * std::cos(th), rad * std::sin(th),
                  uniform(0.0, 180.0), uniform(-0.1, 0.25)});
  }
  for (auto& e : es) {
    const double x = e.x0 * scale, y = e.y0 * scale;
    e.x0 = cr * x - sr * y;
    e.y0 = sr * x + cr * y;
    e.a *= scale;
    e.b *= scale;
    e.phi_deg += rot * 180.0 / std::numbers::pi;
  }
  return normalize_min_max(render(es, size));
}

Image random_ellipses(int size, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
  std::vector<Ellipse> es;
  es.push_back({0.8, 0.8, 0.0, 0.0, 0.0, 0.3});
  const int count = static_cast<int>(uniform(4.0, 9.0));
  for (int k = 0; k < count; ++k) {
    const double rad = uniform(0.0, 0.5);
    const double th = uniform(0.0, 2.0 * std::numbers::pi);
    es.push_back({uniform(0.05, 0.3), uniform(0.05, 0.3), rad * std::cos(th), rad * std::sin(th),
                  uniform(0.0, 180.0), uniform(-0.2, 0.5)});
  }
  return normalize_min_max(render(es, size));
}

// ---------------------------------------------------------------------------
// Resampling

namespace {

// Resamples along columns of `in` (axis of length in.rows()) to `out_len`.
Image resample_rows(const Image& in, Eigen::Index out_len) {
  const auto in_len = in.rows();
  const double scale = static_cast<double>(in_len) / static_cast<double>(out_len);
  const double support = std::max(1.0, scale);
  Image out = Image::Zero(out_len, in.cols());
  for (Eigen::Index i = 0; i < out_len; ++i) {
    const double center = (i + 0.5) * scale - 0.5;
    const auto lo = static_cast<Eigen::Index>(std::floor(center - support));
    const auto hi = static_cast<Eigen::Index>(std::ceil(center + support));
    double wsum = 0.0;
    for (Eigen::Index k = lo; k <= hi; ++k) {
      if (k < 0 || k >= in_len) continue;
      const double w = std::max(0.0, 1.0 - std::abs(k - center) / support);
      if (w == 0.0) continue;
      out.row(i) += w * in.row(k);
      wsum += w;
    }
    if (wsum > 0) out.row(i) /= wsum;
  }
  return out;
}

}  // namespace

Image resize_antialiased(const Image& img, Eigen::Index rows, Eigen::Index cols) {
  if (rows <= 0 || cols <= 0) throw InputError("resize: target must be positive");
  if (img.rows() == rows && img.cols() == cols) return img;
  const Image tmp = resample_rows(img, rows);
  const Image t2 = tmp.transpose();
  return resample_rows(t2, cols).transpose();
}

Image normalize_min_max(const Image& img) {
  const double lo = img.minCoeff();
  const double hi = img.maxCoeff();
  if (hi - lo <= 0.0) return Image::Zero(img.rows(), img.cols());
  return (img - lo) / (hi - lo);
}

// ---------------------------------------------------------------------------
// Loading

namespace {

ImageDataset select(const std::vector<Image>& all, const std::vector<int>& ids, Split split,
                    const std::string& source) {
  ImageDataset ds;
  ds.split = split;
  for (int id : ids) {
    if (id > static_cast<int>(all.size())) {
      throw IngestionError("source '" + source + "' has " + std::to_string(all.size()) +
                           " images; id " + std::to_string(id) + " is out of range");
    }
    ds.images.push_back(all[static_cast<std::size_t>(id - 1)]);
    ds.ids.push_back(std::to_string(id));
  }
  return ds;
}

}  // namespace

DatasetSplits load_dataset(const std::string& source, int size, const SplitSpec& split,
                           std::uint64_t seed) {
  if (size < 8) throw ConfigError("data.size must be >= 8");
  {
    std::set<int> train(split.train_ids.begin(), split.train_ids.end());
    if (train.size() != split.train_ids.size()) throw ConfigError("duplicate train ids");
    for (int id : split.test_ids) {
      if (train.count(id)) throw ConfigError("train and test ids overlap at " + std::to_string(id));
    }
  }
  int needed = 0;
  for (int id : split.train_ids) needed = std::max(needed, id);
  for (int id : split.test_ids) needed = std::max(needed, id);

  std::vector<Image> all;
  if (source == "shepp_logan") {
    all.push_back(shepp_logan(size));
  } else if (source == "shepp_logan_variants" || source == "random_ellipses") {
    for (int i = 0; i < needed; ++i) {
      const auto s = derive_seed(seed, static_cast<std::uint64_t>(i));
      all.push_back(source == "random_ellipses" ? random_ellipses(size, s)
                                                : shepp_logan_variant(size, s));
    }
  } else {
    namespace fs = std::filesystem;
    const fs::path dir(source);
    if (!fs::is_directory(dir)) {
      throw IngestionError("data source '" + source + "' is neither a builtin nor a directory");
    }
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
      auto ext = entry.path().extension().string();
      for (auto& ch : ext) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
      if (entry.is_regular_file() && (ext == ".png" || ext == ".pgm" || ext == ".npy")) {
        files.push_back(entry.path());
      }
    }
    if (files.empty()) throw IngestionError("no .png/.pgm/.npy images in " + dir.string());
    std::sort(files.begin(), files.end());
    std::vector<std::string> failures;
    for (const auto& f : files) {
      try {
        const Image raw = io::read_grayscale(f);
        if (raw.size() == 0 || !raw.allFinite()) throw IngestionError("empty or non-finite");
        all.push_back(normalize_min_max(resize_antialiased(raw, size, size)));
      } catch (const std::exception& e) {
        failures.push_back(f.string() + " (" + e.what() + ")");
      }
    }
    if (!failures.empty()) {
      std::string msg = "failed to ingest:";
      for (const auto& f : failures) msg += "\n  " + f;
      throw IngestionError(msg);
    }
  }
  DatasetSplits out;
  out.train = select(all, split.train_ids, Split::train, source);
  out.test = select(all, split.test_ids, Split::test, source);
  return out;
}

EvaluationSet build_measurements(const ImageDataset& ds, const MeasurementModel& model,
                                 std::uint64_t seed) {
  if (!model.op) throw InputError("build_measurements: no operator");
  EvaluationSet out;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (shape_of(ds.images[i]) != model.op->in_shape()) {
      throw InputError("build_measurements: image " + ds.ids[i] + " has shape " +
                       shape_of(ds.images[i]).str() + ", operator expects " +
                       model.op->in_shape().str());
    }
    const auto sample_seed = derive_seed(seed, fnv1a(ds.ids[i]));
    out.measurements.ids.push_back(ds.ids[i]);
    out.measurements.y.push_back(measure(model, ds.images[i], sample_seed));
    out.truth.push_back(ds.images[i]);
  }
  return out;
}

}  // namespace fei
