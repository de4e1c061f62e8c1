// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pseudobound/nn.hpp"
#include "pseudobound/optim.hpp"
#include "pseudobound/tensor.hpp"

namespace pseudobound {

/**
 * Geometry and layer schedule of the spatio-temporal autoencoder.
 *
 * The encoder is a stack of strided 3-D convolutions (kernel 3, padding 1),
 * each followed by batch normalization and leaky rectification. The decoder
 * mirrors it with transposed convolutions and ends in a hyperbolic tangent,
 * which bounds reconstructions to (-1, 1). There is no memory or latent
 * bottleneck module between the two halves.
 */
struct AutoencoderConfig {
  std::size_t frames = 16;   // T
  std::size_t channels = 1;  // C
  std::size_t height = 256;  // H
  std::size_t width = 256;   // W
  std::vector<std::size_t> encoder_channels{96, 128, 256, 256};
  std::vector<std::size_t> temporal_strides{1, 2, 2, 2};
  std::vector<std::size_t> spatial_strides{2, 2, 2, 2};
  double leaky_slope = 0.2;

  /// 16x1x256x256 with widths 96-128-256-256 ("reference-default").
  static AutoencoderConfig reference_default();
  /// 8x1x64x64 with quarter widths, for desk-scale runs.
  static AutoencoderConfig toy();

  /// Throws ConfigError when the geometry is not divisible by the
  /// cumulative stride schedule or the schedule is malformed.
  void validate() const;

  Shape clip_shape() const { return {frames, channels, height, width}; }

  friend bool operator==(const AutoencoderConfig &,
                         const AutoencoderConfig &) = default;
};

void to_json(nlohmann::json &j, const AutoencoderConfig &c);
void from_json(const nlohmann::json &j, AutoencoderConfig &c);

/// Stable hash of the serialized config; checkpoints refuse to load into a
/// model whose hash differs.
std::uint64_t config_hash(const AutoencoderConfig &config);

/// Builds the layer stack for any scalar type (float for training, double
/// for gradient checks). Seeded fan-in uniform initialization.
template <typename T>
nn::Sequential<T> build_network(const AutoencoderConfig &config, Rng &init_rng);

class Autoencoder {
public:
  Autoencoder(AutoencoderConfig config, std::uint64_t init_seed);

  const AutoencoderConfig &config() const noexcept { return config_; }

  /// Training-mode pass over a B x T x C x H x W batch; caches activations
  /// and uses batch statistics.
  Tensor forward(const Tensor &batch);
  /// Propagates dL/d(reconstruction) and accumulates parameter gradients.
  void backward(const Tensor &grad_reconstruction);
  /// Inference-mode pass (running statistics, no caching). Deterministic,
  /// const, and independent of how samples are grouped into batches.
  Tensor reconstruct(const Tensor &batch) const;

  std::vector<nn::Parameter<float> *> parameters() { return net_.parameters(); }
  std::vector<const nn::Parameter<float> *> parameters() const {
    return net_.parameters();
  }
  std::vector<Tensor *> buffers() { return net_.buffers(); }
  std::vector<const Tensor *> buffers() const { return net_.buffers(); }
  void zero_grad() { net_.zero_grad(); }
  std::size_t parameter_count() const { return net_.parameter_count(); }
  const nn::Sequential<float> &network() const noexcept { return net_; }

private:
  void check_batch(const Tensor &batch) const;

  AutoencoderConfig config_;
  nn::Sequential<float> net_;
};

/// Reorders B x T x C x H x W <-> B x C x T x H x W.
template <typename T>
BasicTensor<T> swap_time_channel_axes(const BasicTensor<T> &x);

/// Everything persisted in a `ckpt_<iter>.bin` file.
struct Checkpoint {
  AutoencoderConfig config;
  std::uint64_t iteration = 0;
  std::vector<Tensor> parameters;
  std::vector<Tensor> buffers;
  std::vector<Tensor> adam_first;
  std::vector<Tensor> adam_second;
  std::uint64_t adam_steps = 0;
  AdamOptions adam_options;
  std::string run_config;  // JSON text of the run that produced it
  std::string extra_state; // JSON text, e.g. random-stream states
};

Checkpoint capture_checkpoint(const Autoencoder &model, const Adam<float> *optimizer,
                              std::uint64_t iteration);

void write_checkpoint(const std::filesystem::path &path, const Checkpoint &ckpt);
/// Throws CheckpointError for missing, truncated, or corrupt files.
Checkpoint read_checkpoint(const std::filesystem::path &path);

/// Copies parameters and batch-norm buffers into `model` (and moments into
/// `optimizer` when given). Refuses a checkpoint whose config hash differs.
void restore_checkpoint(const Checkpoint &ckpt, Autoencoder &model,
                        Adam<float> *optimizer = nullptr);

/// Reads a checkpoint and constructs the model it describes.
Autoencoder load_model(const std::filesystem::path &path);

std::string checkpoint_filename(std::uint64_t iteration);

} // namespace pseudobound
