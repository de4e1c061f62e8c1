// SPDX-License-Identifier: Apache-2.0
#include "pseudobound/model.hpp"

#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "pseudobound/error.hpp"

namespace pseudobound {

AutoencoderConfig AutoencoderConfig::reference_default() { return {}; }

AutoencoderConfig AutoencoderConfig::toy() {
  AutoencoderConfig c;
  c.frames = 8;
  c.height = 64;
  c.width = 64;
  c.encoder_channels = {24, 32, 64, 64};
  return c;
}

void AutoencoderConfig::validate() const {
  const std::size_t n = encoder_channels.size();
  if (n == 0)
    throw ConfigError("model.encoder_channels must not be empty");
  if (temporal_strides.size() != n || spatial_strides.size() != n)
    throw ConfigError("model stride schedules must have one entry per encoder stage");
  if (frames == 0 || channels == 0 || height == 0 || width == 0)
    throw ConfigError("model geometry must be positive");
  std::size_t t = 1, s = 1;
  for (std::size_t i = 0; i < n; ++i) {
    if (encoder_channels[i] == 0)
      throw ConfigError("model.encoder_channels entries must be positive");
    if (temporal_strides[i] < 1 || temporal_strides[i] > 2 ||
        spatial_strides[i] < 1 || spatial_strides[i] > 2)
      throw ConfigError("model strides must be 1 or 2");
    t *= temporal_strides[i];
    s *= spatial_strides[i];
  }
  if (frames % t != 0)
    throw ConfigError("T=" + std::to_string(frames) +
                      " is not divisible by the cumulative temporal stride " +
                      std::to_string(t));
  if (height % s != 0 || width % s != 0)
    throw ConfigError("frame size " + std::to_string(height) + "x" +
                      std::to_string(width) +
                      " is not divisible by the cumulative spatial stride " +
                      std::to_string(s));
  if (!(leaky_slope >= 0.0))
    throw ConfigError("model.leaky_slope must be non-negative");
}

void to_json(nlohmann::json &j, const AutoencoderConfig &c) {
  j = nlohmann::json{{"T", c.frames},
                     {"C", c.channels},
                     {"H", c.height},
                     {"W", c.width},
                     {"encoder_channels", c.encoder_channels},
                     {"temporal_strides", c.temporal_strides},
                     {"spatial_strides", c.spatial_strides},
                     {"leaky_slope", c.leaky_slope}};
}

void from_json(const nlohmann::json &j, AutoencoderConfig &c) {
  j.at("T").get_to(c.frames);
  j.at("C").get_to(c.channels);
  j.at("H").get_to(c.height);
  j.at("W").get_to(c.width);
  j.at("encoder_channels").get_to(c.encoder_channels);
  j.at("temporal_strides").get_to(c.temporal_strides);
  j.at("spatial_strides").get_to(c.spatial_strides);
  j.at("leaky_slope").get_to(c.leaky_slope);
}

std::uint64_t config_hash(const AutoencoderConfig &config) {
  return fnv1a(nlohmann::json(config).dump());
}

template <typename T>
nn::Sequential<T> build_network(const AutoencoderConfig &config, Rng &init_rng) {
  config.validate();
  nn::Sequential<T> net;
  const auto &widths = config.encoder_channels;
  const std::size_t n = widths.size();
  auto geometry = [&](std::size_t stage) {
    nn::ConvGeometry g;
    g.stride = {config.temporal_strides[stage], config.spatial_strides[stage],
                config.spatial_strides[stage]};
    return g;
  };

  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t in = i == 0 ? config.channels : widths[i - 1];
    net.template emplace<nn::Conv3d<T>>(in, widths[i], geometry(i), init_rng);
    net.template emplace<nn::BatchNorm3d<T>>(widths[i]);
    net.template emplace<nn::LeakyReLU<T>>(T(config.leaky_slope));
  }
  for (std::size_t i = n; i-- > 0;) {
    const std::size_t out = i == 0 ? config.channels : widths[i - 1];
    const nn::ConvGeometry g = geometry(i);
    const nn::Triple output_padding{g.stride[0] - 1, g.stride[1] - 1,
                                    g.stride[2] - 1};
    net.template emplace<nn::ConvTranspose3d<T>>(widths[i], out, g,
                                                 output_padding, init_rng);
    if (i > 0) {
      net.template emplace<nn::BatchNorm3d<T>>(out);
      net.template emplace<nn::LeakyReLU<T>>(T(config.leaky_slope));
    }
  }
  net.template emplace<nn::Tanh<T>>();
  return net;
}

template nn::Sequential<float> build_network<float>(const AutoencoderConfig &, Rng &);
template nn::Sequential<double> build_network<double>(const AutoencoderConfig &, Rng &);

template <typename T>
BasicTensor<T> swap_time_channel_axes(const BasicTensor<T> &x) {
  if (x.rank() != 5)
    throw ShapeError("expected a rank-5 batch, got " + shape_to_string(x.shape()));
  const std::size_t b = x.dim(0), a1 = x.dim(1), a2 = x.dim(2);
  const std::size_t plane = x.dim(3) * x.dim(4);
  if (a1 == 1 || a2 == 1)
    return x.reshaped({b, a2, a1, x.dim(3), x.dim(4)});
  BasicTensor<T> y({b, a2, a1, x.dim(3), x.dim(4)});
  for (std::size_t n = 0; n < b; ++n)
    for (std::size_t i = 0; i < a1; ++i)
      for (std::size_t j = 0; j < a2; ++j) {
        const T *src = x.data() + ((n * a1 + i) * a2 + j) * plane;
        T *dst = y.data() + ((n * a2 + j) * a1 + i) * plane;
        std::copy(src, src + plane, dst);
      }
  return y;
}

template BasicTensor<float> swap_time_channel_axes(const BasicTensor<float> &);
template BasicTensor<double> swap_time_channel_axes(const BasicTensor<double> &);

// ------------------------------------------------------------ Autoencoder

namespace {
nn::Sequential<float> make_net(const AutoencoderConfig &config, std::uint64_t seed) {
  Rng rng(seed);
  return build_network<float>(config, rng);
}
} // namespace

Autoencoder::Autoencoder(AutoencoderConfig config, std::uint64_t init_seed)
    : config_(std::move(config)), net_(make_net(config_, init_seed)) {}

void Autoencoder::check_batch(const Tensor &batch) const {
  const Shape expected{batch.rank() == 5 ? batch.dim(0) : 0, config_.frames,
                       config_.channels, config_.height, config_.width};
  if (batch.rank() != 5 || batch.shape() != expected || batch.dim(0) == 0)
    throw ShapeError("autoencoder expects a B x " +
                     shape_to_string(config_.clip_shape()) + " batch, got " +
                     shape_to_string(batch.shape()));
}

Tensor Autoencoder::forward(const Tensor &batch) {
  check_batch(batch);
  return swap_time_channel_axes(net_.forward(swap_time_channel_axes(batch)));
}

void Autoencoder::backward(const Tensor &grad_reconstruction) {
  check_batch(grad_reconstruction);
  net_.backward(swap_time_channel_axes(grad_reconstruction));
}

Tensor Autoencoder::reconstruct(const Tensor &batch) const {
  check_batch(batch);
  return swap_time_channel_axes(net_.infer(swap_time_channel_axes(batch)));
}

// ------------------------------------------------------------- Checkpoint

namespace {

constexpr char kMagic[8] = {'P', 'B', 'C', 'K', 'P', 'T', '0', '1'};

class ByteWriter {
public:
  void u64(std::uint64_t v) { raw(&v, sizeof v); }
  void f64(double v) { raw(&v, sizeof v); }
  void str(const std::string &s) {
    u64(s.size());
    raw(s.data(), s.size());
  }
  void tensor(const Tensor &t) {
    u64(t.rank());
    for (auto d : t.shape())
      u64(d);
    raw(t.data(), t.size() * sizeof(float));
  }
  void tensors(const std::vector<Tensor> &ts) {
    u64(ts.size());
    for (const auto &t : ts)
      tensor(t);
  }
  const std::string &bytes() const { return buf_; }

private:
  void raw(const void *p, std::size_t n) {
    buf_.append(static_cast<const char *>(p), n);
  }
  std::string buf_;
};

class ByteReader {
public:
  explicit ByteReader(std::string_view buf) : buf_(buf) {}

  std::uint64_t u64() {
    std::uint64_t v;
    raw(&v, sizeof v);
    return v;
  }
  double f64() {
    double v;
    raw(&v, sizeof v);
    return v;
  }
  std::string str() {
    const auto n = u64();
    need(n);
    std::string s(buf_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  Tensor tensor() {
    const auto rank = u64();
    if (rank > 8)
      throw CheckpointError("corrupt checkpoint: implausible tensor rank");
    Shape shape(rank);
    for (auto &d : shape)
      d = u64();
    const std::size_t n = shape_numel(shape);
    need(n * sizeof(float));
    std::vector<float> data(n);
    raw(data.data(), n * sizeof(float));
    return Tensor(std::move(shape), std::move(data));
  }
  std::vector<Tensor> tensors() {
    const auto n = u64();
    if (n > (buf_.size() - pos_))
      throw CheckpointError("corrupt checkpoint: implausible tensor count");
    std::vector<Tensor> out;
    out.reserve(n);
    for (std::uint64_t i = 0; i < n; ++i)
      out.push_back(tensor());
    return out;
  }
  bool done() const { return pos_ == buf_.size(); }

private:
  void need(std::size_t n) const {
    if (n > buf_.size() - pos_)
      throw CheckpointError("corrupt checkpoint: payload truncated");
  }
  void raw(void *p, std::size_t n) {
    need(n);
    std::memcpy(p, buf_.data() + pos_, n);
    pos_ += n;
  }
  std::string_view buf_;
  std::size_t pos_ = 0;
};

} // namespace

Checkpoint capture_checkpoint(const Autoencoder &model, const Adam<float> *optimizer,
                              std::uint64_t iteration) {
  Checkpoint ckpt;
  ckpt.config = model.config();
  ckpt.iteration = iteration;
  for (const auto *p : model.parameters())
    ckpt.parameters.push_back(p->value);
  for (const auto *b : model.buffers())
    ckpt.buffers.push_back(*b);
  if (optimizer) {
    ckpt.adam_first = optimizer->first_moments();
    ckpt.adam_second = optimizer->second_moments();
    ckpt.adam_steps = optimizer->steps();
    ckpt.adam_options = optimizer->options();
  }
  return ckpt;
}

void write_checkpoint(const std::filesystem::path &path, const Checkpoint &ckpt) {
  ByteWriter w;
  w.str(nlohmann::json(ckpt.config).dump());
  w.u64(config_hash(ckpt.config));
  w.u64(ckpt.iteration);
  w.tensors(ckpt.parameters);
  w.tensors(ckpt.buffers);
  w.tensors(ckpt.adam_first);
  w.tensors(ckpt.adam_second);
  w.u64(ckpt.adam_steps);
  w.f64(ckpt.adam_options.learning_rate);
  w.f64(ckpt.adam_options.beta1);
  w.f64(ckpt.adam_options.beta2);
  w.f64(ckpt.adam_options.eps);
  w.str(ckpt.run_config);
  w.str(ckpt.extra_state);

  const std::string &payload = w.bytes();
  const std::uint64_t size = payload.size();
  const std::uint64_t checksum = fnv1a(payload);

  if (path.has_parent_path())
    std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out)
      throw CheckpointError("cannot write checkpoint " + path.string());
    out.write(kMagic, sizeof kMagic);
    out.write(reinterpret_cast<const char *>(&size), sizeof size);
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    out.write(reinterpret_cast<const char *>(&checksum), sizeof checksum);
    if (!out)
      throw CheckpointError("failed writing checkpoint " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint read_checkpoint(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw CheckpointError("checkpoint not found: " + path.string());
  const std::string file((std::istreambuf_iterator<char>(in)),
                         std::istreambuf_iterator<char>());
  constexpr std::size_t header = sizeof kMagic + sizeof(std::uint64_t);
  if (file.size() < header + sizeof(std::uint64_t) ||
      std::memcmp(file.data(), kMagic, sizeof kMagic) != 0)
    throw CheckpointError("corrupt checkpoint (bad header): " + path.string());
  std::uint64_t size;
  std::memcpy(&size, file.data() + sizeof kMagic, sizeof size);
  if (file.size() != header + size + sizeof(std::uint64_t))
    throw CheckpointError("corrupt checkpoint (truncated): " + path.string());
  const std::string_view payload(file.data() + header, size);
  std::uint64_t checksum;
  std::memcpy(&checksum, file.data() + header + size, sizeof checksum);
  if (checksum != fnv1a(payload))
    throw CheckpointError("corrupt checkpoint (checksum mismatch): " + path.string());

  ByteReader r(payload);
  Checkpoint ckpt;
  try {
    ckpt.config = nlohmann::json::parse(r.str()).get<AutoencoderConfig>();
  } catch (const nlohmann::json::exception &e) {
    throw CheckpointError("corrupt checkpoint config: " + std::string(e.what()));
  }
  if (r.u64() != config_hash(ckpt.config))
    throw CheckpointError("corrupt checkpoint (config hash): " + path.string());
  ckpt.iteration = r.u64();
  ckpt.parameters = r.tensors();
  ckpt.buffers = r.tensors();
  ckpt.adam_first = r.tensors();
  ckpt.adam_second = r.tensors();
  ckpt.adam_steps = r.u64();
  ckpt.adam_options.learning_rate = r.f64();
  ckpt.adam_options.beta1 = r.f64();
  ckpt.adam_options.beta2 = r.f64();
  ckpt.adam_options.eps = r.f64();
  ckpt.run_config = r.str();
  ckpt.extra_state = r.str();
  if (!r.done())
    throw CheckpointError("corrupt checkpoint (trailing bytes): " + path.string());
  return ckpt;
}

void restore_checkpoint(const Checkpoint &ckpt, Autoencoder &model,
                        Adam<float> *optimizer) {
  if (config_hash(ckpt.config) != config_hash(model.config()))
    throw CheckpointError("checkpoint was written for a different model config");
  auto params = model.parameters();
  auto buffers = model.buffers();
  if (params.size() != ckpt.parameters.size() || buffers.size() != ckpt.buffers.size())
    throw CheckpointError("checkpoint tensor count does not match the model");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->value.shape() != ckpt.parameters[i].shape())
      throw CheckpointError("checkpoint parameter shape mismatch at " + params[i]->name);
    params[i]->value = ckpt.parameters[i];
  }
  for (std::size_t i = 0; i < buffers.size(); ++i) {
    if (buffers[i]->shape() != ckpt.buffers[i].shape())
      throw CheckpointError("checkpoint buffer shape mismatch");
    *buffers[i] = ckpt.buffers[i];
  }
  if (optimizer) {
    if (ckpt.adam_first.size() != params.size() ||
        ckpt.adam_second.size() != params.size())
      throw CheckpointError("checkpoint has no optimizer state for this model");
    optimizer->first_moments() = ckpt.adam_first;
    optimizer->second_moments() = ckpt.adam_second;
    optimizer->set_steps(ckpt.adam_steps);
  }
}

Autoencoder load_model(const std::filesystem::path &path) {
  const Checkpoint ckpt = read_checkpoint(path);
  Autoencoder model(ckpt.config, 0);
  restore_checkpoint(ckpt, model);
  return model;
}

std::string checkpoint_filename(std::uint64_t iteration) {
  return "ckpt_" + std::to_string(iteration) + ".bin";
}

} // namespace pseudobound
