// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "pseudobound/random.hpp"
#include "pseudobound/tensor.hpp"

namespace pseudobound::nn {

/**
 * Layers for volumetric (spatio-temporal) networks.
 *
 * All activations are laid out as B x C x D x H x W, where D is the temporal
 * axis. Every layer is templated on the scalar type: the autoencoder runs in
 * float, gradient checks run the identical code in double.
 *
 * forward() caches what backward() needs. infer() is const and caches
 * nothing, so it is safe to call concurrently on a shared network.
 */

using Triple = std::array<std::size_t, 3>;

template <typename T> struct Parameter {
  std::string name;
  BasicTensor<T> value;
  BasicTensor<T> grad;

  Parameter(std::string n, Shape shape)
      : name(std::move(n)), value(shape), grad(shape) {}
};

template <typename T> class Layer {
public:
  virtual ~Layer() = default;

  virtual std::string name() const = 0;
  /// Output shape for a B x C x D x H x W input; throws ShapeError.
  virtual Shape output_shape(const Shape &input) const = 0;

  virtual BasicTensor<T> forward(const BasicTensor<T> &x) = 0;
  virtual BasicTensor<T> infer(const BasicTensor<T> &x) const = 0;
  /// Consumes dL/dy, accumulates parameter gradients, returns dL/dx.
  virtual BasicTensor<T> backward(const BasicTensor<T> &grad_out) = 0;

  virtual std::vector<Parameter<T> *> parameters() { return {}; }
  virtual std::vector<const Parameter<T> *> parameters() const { return {}; }
  /// Non-trainable state persisted with checkpoints (batch-norm statistics).
  virtual std::vector<BasicTensor<T> *> buffers() { return {}; }
  virtual std::vector<const BasicTensor<T> *> buffers() const { return {}; }
};

/// Geometry shared by convolution and its transpose.
struct ConvGeometry {
  Triple kernel{3, 3, 3};
  Triple stride{1, 1, 1};
  Triple padding{1, 1, 1};
};

template <typename T> class Conv3d final : public Layer<T> {
public:
  Conv3d(std::size_t in_channels, std::size_t out_channels, ConvGeometry geom,
         Rng &init_rng);

  std::string name() const override { return "conv3d"; }
  Shape output_shape(const Shape &input) const override;
  BasicTensor<T> forward(const BasicTensor<T> &x) override;
  BasicTensor<T> infer(const BasicTensor<T> &x) const override;
  BasicTensor<T> backward(const BasicTensor<T> &grad_out) override;
  std::vector<Parameter<T> *> parameters() override { return {&weight_, &bias_}; }
  std::vector<const Parameter<T> *> parameters() const override {
    return {&weight_, &bias_};
  }

  Parameter<T> &weight() { return weight_; }
  Parameter<T> &bias() { return bias_; }

private:
  std::size_t in_, out_;
  ConvGeometry geom_;
  Parameter<T> weight_; // out x in x kd x kh x kw
  Parameter<T> bias_;   // out
  BasicTensor<T> input_;
};

template <typename T> class ConvTranspose3d final : public Layer<T> {
public:
  ConvTranspose3d(std::size_t in_channels, std::size_t out_channels,
                  ConvGeometry geom, Triple output_padding, Rng &init_rng);

  std::string name() const override { return "conv_transpose3d"; }
  Shape output_shape(const Shape &input) const override;
  BasicTensor<T> forward(const BasicTensor<T> &x) override;
  BasicTensor<T> infer(const BasicTensor<T> &x) const override;
  BasicTensor<T> backward(const BasicTensor<T> &grad_out) override;
  std::vector<Parameter<T> *> parameters() override { return {&weight_, &bias_}; }
  std::vector<const Parameter<T> *> parameters() const override {
    return {&weight_, &bias_};
  }

private:
  std::size_t in_, out_;
  ConvGeometry geom_;
  Triple output_padding_;
  Parameter<T> weight_; // in x out x kd x kh x kw
  Parameter<T> bias_;   // out
  BasicTensor<T> input_;
};

/// Per-channel normalization over (B, D, H, W) with running statistics for
/// inference.
template <typename T> class BatchNorm3d final : public Layer<T> {
public:
  explicit BatchNorm3d(std::size_t channels, double momentum = 0.1,
                       double eps = 1e-5);

  std::string name() const override { return "batch_norm3d"; }
  Shape output_shape(const Shape &input) const override;
  BasicTensor<T> forward(const BasicTensor<T> &x) override;
  BasicTensor<T> infer(const BasicTensor<T> &x) const override;
  BasicTensor<T> backward(const BasicTensor<T> &grad_out) override;
  std::vector<Parameter<T> *> parameters() override { return {&gamma_, &beta_}; }
  std::vector<const Parameter<T> *> parameters() const override {
    return {&gamma_, &beta_};
  }
  std::vector<BasicTensor<T> *> buffers() override {
    return {&running_mean_, &running_var_};
  }
  std::vector<const BasicTensor<T> *> buffers() const override {
    return {&running_mean_, &running_var_};
  }

private:
  std::size_t channels_;
  double momentum_, eps_;
  Parameter<T> gamma_, beta_;
  BasicTensor<T> running_mean_, running_var_;
  BasicTensor<T> normalized_;
  std::vector<T> inv_std_;
};

template <typename T> class LeakyReLU final : public Layer<T> {
public:
  explicit LeakyReLU(T slope = T(0.2)) : slope_(slope) {}

  std::string name() const override { return "leaky_relu"; }
  Shape output_shape(const Shape &input) const override { return input; }
  BasicTensor<T> forward(const BasicTensor<T> &x) override;
  BasicTensor<T> infer(const BasicTensor<T> &x) const override;
  BasicTensor<T> backward(const BasicTensor<T> &grad_out) override;

private:
  T slope_;
  BasicTensor<T> input_;
};

template <typename T> class Tanh final : public Layer<T> {
public:
  std::string name() const override { return "tanh"; }
  Shape output_shape(const Shape &input) const override { return input; }
  BasicTensor<T> forward(const BasicTensor<T> &x) override;
  BasicTensor<T> infer(const BasicTensor<T> &x) const override;
  BasicTensor<T> backward(const BasicTensor<T> &grad_out) override;

private:
  BasicTensor<T> output_;
};

/// Ordered stack of layers.
template <typename T> class Sequential {
public:
  Sequential() = default;
  Sequential(Sequential &&) noexcept = default;
  Sequential &operator=(Sequential &&) noexcept = default;

  template <typename L, typename... Args> L &emplace(Args &&...args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    L &ref = *layer;
    layers_.push_back(std::move(layer));
    return ref;
  }

  Shape output_shape(Shape input) const;
  BasicTensor<T> forward(const BasicTensor<T> &x);
  BasicTensor<T> infer(const BasicTensor<T> &x) const;
  BasicTensor<T> backward(const BasicTensor<T> &grad_out);

  std::vector<Parameter<T> *> parameters();
  std::vector<const Parameter<T> *> parameters() const;
  std::vector<BasicTensor<T> *> buffers();
  std::vector<const BasicTensor<T> *> buffers() const;
  void zero_grad();
  std::size_t parameter_count() const;

  std::size_t size() const noexcept { return layers_.size(); }
  const Layer<T> &layer(std::size_t i) const { return *layers_.at(i); }

private:
  std::vector<std::unique_ptr<Layer<T>>> layers_;
};

} // namespace pseudobound::nn
