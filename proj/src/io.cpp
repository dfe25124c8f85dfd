#include "fei/io.hpp"

#include <png.h>

#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <regex>
#include <sstream>

#include "fei/errors.hpp"

namespace fei::io {

void save_array(const std::filesystem::path& path, const Array2D& a) {
  std::string header = "{'descr': '<f8', 'fortran_order': False, 'shape': (" +
                       std::to_string(a.rows()) + ", " + std::to_string(a.cols()) + "), }";
  // magic(6) + version(2) + len(2) + header + '\n' padded to a multiple of 64
  const std::size_t unpadded = 10 + header.size() + 1;
  header.append((64 - unpadded % 64) % 64, ' ');
  header.push_back('\n');
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw LoadError("cannot write array file " + path.string());
  out.write("\x93NUMPY\x01\x00", 8);
  const auto len = static_cast<std::uint16_t>(header.size());
  const char len_bytes[2] = {static_cast<char>(len & 0xff), static_cast<char>(len >> 8)};
  out.write(len_bytes, 2);
  out << header;
  out.write(reinterpret_cast<const char*>(a.data()),
            static_cast<std::streamsize>(a.size() * sizeof(double)));
  if (!out) throw LoadError("failed writing array file " + path.string());
}

Array2D load_array(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open array file " + path.string());
  char magic[10];
  in.read(magic, 10);
  if (!in || std::memcmp(magic, "\x93NUMPY", 6) != 0 || magic[6] != 1) {
    throw LoadError("not an .npy v1 file: " + path.string());
  }
  const std::size_t len = static_cast<unsigned char>(magic[8]) |
                          (static_cast<std::size_t>(static_cast<unsigned char>(magic[9])) << 8);
  std::string header(len, '\0');
  in.read(header.data(), static_cast<std::streamsize>(len));
  if (header.find("'<f8'") == std::string::npos ||
      header.find("'fortran_order': False") == std::string::npos) {
    throw LoadError("array file " + path.string() + ": only C-order float64 is supported");
  }
  std::smatch m;
  static const std::regex shape_re(R"('shape':\s*\((\d+),\s*(\d*)\s*,?\s*\))");
  if (!std::regex_search(header, m, shape_re)) {
    throw LoadError("array file " + path.string() + ": unreadable shape");
  }
  const Eigen::Index rows = std::stol(m[1].str());
  const Eigen::Index cols = m[2].str().empty() ? 1 : std::stol(m[2].str());
  Array2D a(rows, cols);
  in.read(reinterpret_cast<char*>(a.data()), static_cast<std::streamsize>(a.size() * sizeof(double)));
  if (!in) throw LoadError("array file " + path.string() + ": truncated data");
  return a;
}

namespace {

Image read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("cannot open " + path.string());
  std::string magic;
  in >> magic;
  auto next_int = [&]() {
    int v = 0;
    while (in >> std::ws && in.peek() == '#') {
      std::string line;
      std::getline(in, line);
    }
    if (!(in >> v)) throw IngestionError("malformed PGM header in " + path.string());
    return v;
  };
  const int w = next_int();
  const int h = next_int();
  const int maxval = next_int();
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 65535) {
    throw IngestionError("bad PGM dimensions in " + path.string());
  }
  Image img(h, w);
  if (magic == "P2") {
    for (Eigen::Index i = 0; i < img.size(); ++i) img.data()[i] = next_int();
  } else if (magic == "P5") {
    in.get();
    const int bytes = maxval > 255 ? 2 : 1;
    std::vector<unsigned char> buf(static_cast<std::size_t>(img.size() * bytes));
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!in) throw IngestionError("truncated PGM data in " + path.string());
    for (Eigen::Index i = 0; i < img.size(); ++i) {
      const auto k = static_cast<std::size_t>(i * bytes);
      img.data()[i] = bytes == 2 ? (buf[k] << 8 | buf[k + 1]) : buf[k];
    }
  } else {
    throw IngestionError("unsupported PGM variant '" + magic + "' in " + path.string());
  }
  return img;
}

Image read_png(const std::filesystem::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.string().c_str())) {
    throw IngestionError("cannot decode PNG " + path.string() + ": " + image.message);
  }
  const bool sixteen_bit = (image.format & PNG_FORMAT_FLAG_LINEAR) != 0;
  image.format = sixteen_bit ? PNG_FORMAT_LINEAR_Y : PNG_FORMAT_GRAY;
  std::vector<unsigned char> buf(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&image);
    throw IngestionError("cannot decode PNG " + path.string() + ": " + image.message);
  }
  Image img(image.height, image.width);
  for (Eigen::Index i = 0; i < img.size(); ++i) {
    if (sixteen_bit) {
      png_uint_16 v;
      std::memcpy(&v, buf.data() + 2 * i, sizeof(v));
      img.data()[i] = v;
    } else {
      img.data()[i] = buf[static_cast<std::size_t>(i)];
    }
  }
  return img;
}

}  // namespace

Image read_grayscale(const std::filesystem::path& path) {
  auto ext = path.extension().string();
  for (auto& ch : ext) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  if (ext == ".png") return read_png(path);
  if (ext == ".pgm") return read_pgm(path);
  if (ext == ".npy") return load_array(path);
  throw IngestionError("unsupported image format: " + path.string());
}

void write_png(const std::filesystem::path& path, const Image& img, double lo, double hi) {
  std::vector<std::uint8_t> rgb(static_cast<std::size_t>(img.size()) * 3);
  const double span = hi > lo ? hi - lo : 1.0;
  for (Eigen::Index i = 0; i < img.size(); ++i) {
    const double v = std::clamp((img.data()[i] - lo) / span, 0.0, 1.0);
    const auto b = static_cast<std::uint8_t>(std::lround(255.0 * v));
    rgb[static_cast<std::size_t>(3 * i)] = b;
    rgb[static_cast<std::size_t>(3 * i + 1)] = b;
    rgb[static_cast<std::size_t>(3 * i + 2)] = b;
  }
  write_png_rgb(path, static_cast<int>(img.cols()), static_cast<int>(img.rows()), rgb);
}

void write_png_rgb(const std::filesystem::path& path, int width, int height,
                   const std::vector<std::uint8_t>& rgb) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(width);
  image.height = static_cast<png_uint_32>(height);
  image.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&image, path.string().c_str(), 0, rgb.data(), 0, nullptr)) {
    throw LoadError("cannot write PNG " + path.string() + ": " + image.message);
  }
}

}  // namespace fei::io
