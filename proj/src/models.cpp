#include "fei/models.hpp"

#include <cstring>

#include "fei/errors.hpp"

namespace fei {

using nn::Pass;
using nn::Tensor;

std::string to_string(Architecture a) {
  switch (a) {
    case Architecture::unet_residual: return "unet_residual";
    case Architecture::small_cnn: return "small_cnn";
    case Architecture::linear: return "linear";
  }
  return "?";
}

Architecture parse_architecture(const std::string& name) {
  if (name == "unet_residual") return Architecture::unet_residual;
  if (name == "small_cnn") return Architecture::small_cnn;
  if (name == "linear") return Architecture::linear;
  throw ConfigError("unknown architecture '" + name +
                    "' (expected unet_residual | small_cnn | linear)");
}

nlohmann::json ModelSpec::to_json() const {
  return {{"arch", to_string(arch)}, {"image", {image.rows, image.cols}}, {"channels", channels},
          {"width", width},          {"init", init},                      {"zero_last", zero_last}};
}

ModelSpec ModelSpec::from_json(const nlohmann::json& j) {
  ModelSpec s;
  s.arch = parse_architecture(j.at("arch").get<std::string>());
  s.image = {j.at("image").at(0).get<Eigen::Index>(), j.at("image").at(1).get<Eigen::Index>()};
  s.channels = j.at("channels").get<std::vector<int>>();
  s.width = j.at("width").get<int>();
  s.init = j.at("init").get<std::string>();
  s.zero_last = j.at("zero_last").get<bool>();
  return s;
}

std::uint64_t ReconstructionNet::checksum() const {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const Eigen::VectorXd& v) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(v.data());
    for (std::size_t i = 0; i < static_cast<std::size_t>(v.size()) * sizeof(double); ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  };
  mix(store_.values());
  mix(store_.buffers());
  return h;
}

void ReconstructionNet::check_input(const Image& x) const {
  if (shape_of(x) != spec_.image) {
    throw InputError(to_string(spec_.arch) + ": expected input " + spec_.image.str() + ", got " +
                     shape_of(x).str());
  }
}

namespace {

Tensor to_tensor(const Image& x) {
  Tensor t(1, static_cast<int>(x.rows()), static_cast<int>(x.cols()));
  t.data = Eigen::Map<const nn::RowMatrix>(x.data(), 1, x.size());
  return t;
}

Image to_image(const Tensor& t) {
  Image out(t.height, t.width);
  Eigen::Map<nn::RowMatrix>(out.data(), 1, out.size()) = t.data.row(0);
  return out;
}

// ---------------------------------------------------------------------------
// linear: G(x) = W vec(x)

class LinearNet final : public ReconstructionNet {
 public:
  LinearNet(ModelSpec spec, std::uint64_t seed) : ReconstructionNet(std::move(spec)) {
    n_ = spec_.image.size();
    weight_ = store_.allocate(n_ * n_);
    auto w = matrix();
    if (spec_.init == "identity") {
      w.setIdentity();
    } else if (spec_.init == "zero") {
      w.setZero();
    } else {
      std::mt19937_64 rng(seed);
      std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(n_)));
      for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = normal(rng);
    }
  }

  struct LinearTape final : Tape {
    Eigen::VectorXd input;
  };

  Forward forward(const Image& x, Pass, bool record) override {
    check_input(x);
    Eigen::Map<const Eigen::VectorXd> v(x.data(), n_);
    Image out(x.rows(), x.cols());
    Eigen::Map<Eigen::VectorXd>(out.data(), n_).noalias() = matrix() * v;
    Forward f{std::move(out), nullptr};
    if (record) {
      auto tape = std::make_unique<LinearTape>();
      tape->input = v;
      f.tape = std::move(tape);
    }
    return f;
  }

  Image backward(const Tape& tape, const Image& grad_output) override {
    const auto& t = dynamic_cast<const LinearTape&>(tape);
    Eigen::Map<const Eigen::VectorXd> g(grad_output.data(), n_);
    Eigen::Map<nn::RowMatrix> dw(store_.grads().data() + weight_, n_, n_);
    dw.noalias() += g * t.input.transpose();
    Image dx(grad_output.rows(), grad_output.cols());
    Eigen::Map<Eigen::VectorXd>(dx.data(), n_).noalias() = matrix().transpose() * g;
    return dx;
  }

 private:
  Eigen::Map<nn::RowMatrix> matrix() {
    return {store_.values().data() + weight_, n_, n_};
  }

  Eigen::Index n_ = 0;
  Eigen::Index weight_ = 0;
};

// ---------------------------------------------------------------------------
// small_cnn: x + conv(relu(conv(relu(conv(x)))))

class SmallCnn final : public ReconstructionNet {
 public:
  SmallCnn(ModelSpec spec, std::uint64_t seed) : ReconstructionNet(std::move(spec)) {
    const int w = spec_.width;
    if (w <= 0) throw ConfigError("small_cnn: width must be positive");
    conv_[0] = nn::Conv2d(store_, 1, w, 3);
    conv_[1] = nn::Conv2d(store_, w, w, 3);
    conv_[2] = nn::Conv2d(store_, w, 1, 3);
    std::mt19937_64 rng(seed);
    for (const auto& c : conv_) {
      if (spec_.init == "zero") {
        c.init_zero(store_);
      } else {
        c.init_he(store_, rng);
      }
    }
    if (spec_.zero_last) conv_[2].init_zero(store_);
  }

  struct CnnTape final : Tape {
    nn::ConvCache conv[3];
    std::vector<std::uint8_t> mask[2];
  };

  Forward forward(const Image& x, Pass, bool record) override {
    check_input(x);
    auto tape = record ? std::make_unique<CnnTape>() : nullptr;
    Tensor in = to_tensor(x);
    Tensor h = conv_[0].forward(store_, in, tape ? &tape->conv[0] : nullptr);
    h = nn::relu(h, tape ? &tape->mask[0] : nullptr);
    h = conv_[1].forward(store_, h, tape ? &tape->conv[1] : nullptr);
    h = nn::relu(h, tape ? &tape->mask[1] : nullptr);
    h = conv_[2].forward(store_, h, tape ? &tape->conv[2] : nullptr);
    h.data += in.data;
    return {to_image(h), std::move(tape)};
  }

  Image backward(const Tape& tape, const Image& grad_output) override {
    const auto& t = dynamic_cast<const CnnTape&>(tape);
    Tensor g = to_tensor(grad_output);
    Tensor d = conv_[2].backward(store_, t.conv[2], g);
    d = nn::relu_backward(t.mask[1], d);
    d = conv_[1].backward(store_, t.conv[1], d);
    d = nn::relu_backward(t.mask[0], d);
    d = conv_[0].backward(store_, t.conv[0], d);
    d.data += g.data;
    return to_image(d);
  }

 private:
  nn::Conv2d conv_[3];
};

// ---------------------------------------------------------------------------
// unet_residual

// Two conv-BN-ReLU stages plus an identity (or 1x1 projection) shortcut.
struct ResBlock {
  nn::Conv2d conv1, conv2, proj;
  nn::BatchNorm2d bn1, bn2;
  bool has_proj = false;

  ResBlock() = default;
  ResBlock(nn::ParameterStore& store, int cin, int cout)
      : conv1(store, cin, cout, 3),
        conv2(store, cout, cout, 3),
        bn1(store, cout),
        bn2(store, cout),
        has_proj(cin != cout) {
    if (has_proj) proj = nn::Conv2d(store, cin, cout, 1);
  }

  void init(nn::ParameterStore& store, std::mt19937_64& rng) const {
    conv1.init_he(store, rng);
    conv2.init_he(store, rng);
    if (has_proj) proj.init_he(store, rng);
  }

  struct Cache {
    nn::ConvCache c1, c2, cp;
    nn::BatchNormCache b1, b2;
    std::vector<std::uint8_t> m1, m2;
  };

  Tensor forward(nn::ParameterStore& store, const Tensor& x, Pass pass, Cache* cache) const {
    Tensor h = conv1.forward(store, x, cache ? &cache->c1 : nullptr);
    h = bn1.forward(store, h, pass, cache ? &cache->b1 : nullptr);
    h = nn::relu(h, cache ? &cache->m1 : nullptr);
    h = conv2.forward(store, h, cache ? &cache->c2 : nullptr);
    h = bn2.forward(store, h, pass, cache ? &cache->b2 : nullptr);
    h = nn::relu(h, cache ? &cache->m2 : nullptr);
    if (has_proj) {
      h.data += proj.forward(store, x, cache ? &cache->cp : nullptr).data;
    } else {
      h.data += x.data;
    }
    return h;
  }

  Tensor backward(nn::ParameterStore& store, const Cache& cache, const Tensor& dy) const {
    Tensor d = nn::relu_backward(cache.m2, dy);
    d = bn2.backward(store, cache.b2, d);
    d = conv2.backward(store, cache.c2, d);
    d = nn::relu_backward(cache.m1, d);
    d = bn1.backward(store, cache.b1, d);
    d = conv1.backward(store, cache.c1, d);
    if (has_proj) {
      d.data += proj.backward(store, cache.cp, dy).data;
    } else {
      d.data += dy.data;
    }
    return d;
  }
};

class UNetResidual final : public ReconstructionNet {
 public:
  UNetResidual(ModelSpec spec, std::uint64_t seed) : ReconstructionNet(std::move(spec)) {
    const auto& ch = spec_.channels;
    const int depth = static_cast<int>(ch.size());
    if (depth < 1) throw ConfigError("unet_residual: channels must be nonempty");
    const Eigen::Index factor = Eigen::Index{1} << (depth - 1);
    if (spec_.image.rows % factor != 0 || spec_.image.cols % factor != 0) {
      throw ConfigError("unet_residual: image " + spec_.image.str() + " not divisible by " +
                        std::to_string(factor));
    }
    int cin = 1;
    for (int c : ch) {
      encoders_.emplace_back(store_, cin, c);
      cin = c;
    }
    for (int i = depth - 2; i >= 0; --i) {
      Up up;
      up.conv = nn::Conv2d(store_, ch[static_cast<std::size_t>(i) + 1], ch[static_cast<std::size_t>(i)], 3);
      up.bn = nn::BatchNorm2d(store_, ch[static_cast<std::size_t>(i)]);
      up.block = ResBlock(store_, 2 * ch[static_cast<std::size_t>(i)], ch[static_cast<std::size_t>(i)]);
      ups_.push_back(std::move(up));
    }
    head_ = nn::Conv2d(store_, ch[0], 1, 1);

    std::mt19937_64 rng(seed);
    for (const auto& e : encoders_) e.init(store_, rng);
    for (const auto& u : ups_) {
      u.conv.init_he(store_, rng);
      u.block.init(store_, rng);
    }
    head_.init_he(store_, rng);
    if (spec_.zero_last || spec_.init == "zero") head_.init_zero(store_);
  }

  struct Up {
    nn::Conv2d conv;
    nn::BatchNorm2d bn;
    ResBlock block;
  };

  struct UpCache {
    nn::ConvCache conv;
    nn::BatchNormCache bn;
    std::vector<std::uint8_t> mask;
    ResBlock::Cache block;
    int skip_channels = 0;
  };

  struct UNetTape final : Tape {
    std::vector<ResBlock::Cache> enc;
    std::vector<std::vector<Eigen::Index>> pool;
    std::vector<std::pair<int, int>> pool_shape;
    std::vector<UpCache> up;
    nn::ConvCache head;
  };

  Forward forward(const Image& x, Pass pass, bool record) override {
    check_input(x);
    const std::size_t depth = encoders_.size();
    auto tape = record ? std::make_unique<UNetTape>() : nullptr;
    if (tape) {
      tape->enc.resize(depth);
      tape->pool.resize(depth - 1);
      tape->pool_shape.resize(depth - 1);
      tape->up.resize(ups_.size());
    }
    Tensor in = to_tensor(x);
    std::vector<Tensor> skips;
    Tensor h = in;
    for (std::size_t i = 0; i < depth; ++i) {
      h = encoders_[i].forward(store_, h, pass, tape ? &tape->enc[i] : nullptr);
      if (i + 1 < depth) {
        skips.push_back(h);
        if (tape) tape->pool_shape[i] = {h.height, h.width};
        h = nn::max_pool2(h, tape ? &tape->pool[i] : nullptr);
      }
    }
    for (std::size_t u = 0; u < ups_.size(); ++u) {
      UpCache* c = tape ? &tape->up[u] : nullptr;
      const Tensor& skip = skips[skips.size() - 1 - u];
      h = nn::upsample2(h);
      h = ups_[u].conv.forward(store_, h, c ? &c->conv : nullptr);
      h = ups_[u].bn.forward(store_, h, pass, c ? &c->bn : nullptr);
      h = nn::relu(h, c ? &c->mask : nullptr);
      if (c) c->skip_channels = skip.channels;
      h = nn::concat(skip, h);
      h = ups_[u].block.forward(store_, h, pass, c ? &c->block : nullptr);
    }
    h = head_.forward(store_, h, tape ? &tape->head : nullptr);
    h.data += in.data;
    return {to_image(h), std::move(tape)};
  }

  Image backward(const Tape& tape, const Image& grad_output) override {
    const auto& t = dynamic_cast<const UNetTape&>(tape);
    const std::size_t depth = encoders_.size();
    Tensor g = to_tensor(grad_output);
    Tensor d = head_.backward(store_, t.head, g);
    std::vector<Tensor> skip_grads(depth > 0 ? depth - 1 : 0);
    for (std::size_t u = ups_.size(); u-- > 0;) {
      const UpCache& c = t.up[u];
      d = ups_[u].block.backward(store_, c.block, d);
      auto [dskip, dup] = nn::split(d, c.skip_channels);
      skip_grads[skip_grads.size() - 1 - u] = std::move(dskip);
      d = nn::relu_backward(c.mask, dup);
      d = ups_[u].bn.backward(store_, c.bn, d);
      d = ups_[u].conv.backward(store_, c.conv, d);
      d = nn::upsample2_backward(d);
    }
    for (std::size_t i = depth; i-- > 0;) {
      if (i + 1 < depth) {
        const auto [ph, pw] = t.pool_shape[i];
        d = nn::max_pool2_backward(t.pool[i], d, ph, pw);
        d.data += skip_grads[i].data;
      }
      d = encoders_[i].backward(store_, t.enc[i], d);
    }
    d.data += g.data;
    return to_image(d);
  }

 private:
  std::vector<ResBlock> encoders_;
  std::vector<Up> ups_;
  nn::Conv2d head_;
};

}  // namespace

std::unique_ptr<ReconstructionNet> build_model(const ModelSpec& spec, std::uint64_t seed) {
  if (spec.image.rows <= 0 || spec.image.cols <= 0) throw ConfigError("model: empty image shape");
  if (spec.init != "default" && spec.init != "identity" && spec.init != "zero") {
    throw ConfigError("model: unknown init '" + spec.init + "'");
  }
  switch (spec.arch) {
    case Architecture::linear: return std::make_unique<LinearNet>(spec, seed);
    case Architecture::small_cnn: return std::make_unique<SmallCnn>(spec, seed);
    case Architecture::unet_residual: return std::make_unique<UNetResidual>(spec, seed);
  }
  throw ConfigError("model: unknown architecture");
}

Image reconstruct(ReconstructionNet& model, const Measurement& y, const LinearOperator& op) {
  return model.infer(op.pinv(y));
}

}  // namespace fei
