#include "fei/checkpoint.hpp"

#include <fstream>

#include "fei/errors.hpp"

namespace fei {

Checkpoint snapshot(const ReconstructionNet& net) {
  Checkpoint c;
  c.model = net.spec();
  c.parameters = net.parameters();
  c.buffers = net.buffers();
  return c;
}

std::unique_ptr<ReconstructionNet> restore(const Checkpoint& ckpt) {
  auto net = build_model(ckpt.model, 0);
  if (net->parameters().size() != ckpt.parameters.size() ||
      net->buffers().size() != ckpt.buffers.size()) {
    throw LoadError("checkpoint does not match its architecture descriptor");
  }
  net->parameters() = ckpt.parameters;
  net->buffers() = ckpt.buffers;
  return net;
}

namespace {

void write_block(std::ofstream& out, const double* data, Eigen::Index n) {
  out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * sizeof(double)));
}

void read_block(std::ifstream& in, double* data, Eigen::Index n, const std::filesystem::path& path) {
  in.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n * sizeof(double)));
  if (!in) throw LoadError("checkpoint " + path.string() + ": truncated data");
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  nlohmann::json header;
  header["model"] = ckpt.model.to_json();
  header["step"] = ckpt.step;
  header["epoch"] = ckpt.epoch;
  header["num_params"] = ckpt.parameters.size();
  header["num_buffers"] = ckpt.buffers.size();
  header["optimizer_steps"] =
      ckpt.optimizer ? nlohmann::json(ckpt.optimizer->steps) : nlohmann::json(nullptr);
  nlohmann::json ids = nlohmann::json::array();
  nlohmann::json shape = nullptr;
  for (const auto& [id, img] : ckpt.multipliers) {
    ids.push_back(id);
    shape = {img.rows(), img.cols()};
  }
  header["multiplier_ids"] = ids;
  header["multiplier_shape"] = shape;
  header["extra"] = ckpt.extra;
  const std::string text = header.dump();

  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw LoadError("cannot write checkpoint " + path.string());
    out << "FEICKPT 1\n" << text.size() << "\n" << text;
    write_block(out, ckpt.parameters.data(), ckpt.parameters.size());
    write_block(out, ckpt.buffers.data(), ckpt.buffers.size());
    if (ckpt.optimizer) {
      write_block(out, ckpt.optimizer->first_moment.data(), ckpt.optimizer->first_moment.size());
      write_block(out, ckpt.optimizer->second_moment.data(), ckpt.optimizer->second_moment.size());
    }
    for (const auto& [id, img] : ckpt.multipliers) write_block(out, img.data(), img.size());
    if (!out) throw LoadError("failed writing checkpoint " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open checkpoint " + path.string());
  std::string magic;
  std::getline(in, magic);
  if (magic != "FEICKPT 1") throw LoadError("not a checkpoint file: " + path.string());
  std::string len_line;
  std::getline(in, len_line);
  std::size_t len = 0;
  try {
    len = std::stoull(len_line);
  } catch (const std::exception&) {
    throw LoadError("checkpoint " + path.string() + ": bad header length");
  }
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw LoadError("checkpoint " + path.string() + ": truncated header");

  Checkpoint c;
  try {
    const auto header = nlohmann::json::parse(text);
    c.model = ModelSpec::from_json(header.at("model"));
    c.step = header.at("step").get<long long>();
    c.epoch = header.at("epoch").get<long long>();
    c.parameters.resize(header.at("num_params").get<Eigen::Index>());
    c.buffers.resize(header.at("num_buffers").get<Eigen::Index>());
    read_block(in, c.parameters.data(), c.parameters.size(), path);
    read_block(in, c.buffers.data(), c.buffers.size(), path);
    if (!header.at("optimizer_steps").is_null()) {
      OptimizerState s;
      s.steps = header.at("optimizer_steps").get<long long>();
      s.first_moment.resize(c.parameters.size());
      s.second_moment.resize(c.parameters.size());
      read_block(in, s.first_moment.data(), s.first_moment.size(), path);
      read_block(in, s.second_moment.data(), s.second_moment.size(), path);
      c.optimizer = std::move(s);
    }
    const auto& ids = header.at("multiplier_ids");
    if (!ids.empty()) {
      const auto rows = header.at("multiplier_shape").at(0).get<Eigen::Index>();
      const auto cols = header.at("multiplier_shape").at(1).get<Eigen::Index>();
      for (const auto& id : ids) {
        Image img(rows, cols);
        read_block(in, img.data(), img.size(), path);
        c.multipliers.emplace(id.get<std::string>(), std::move(img));
      }
    }
    c.extra = header.value("extra", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw LoadError("checkpoint " + path.string() + ": malformed header (" + e.what() + ")");
  } catch (const ConfigError& e) {
    throw LoadError("checkpoint " + path.string() + ": " + e.what());
  }
  return c;
}

}  // namespace fei
