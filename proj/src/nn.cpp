// SPDX-License-Identifier: Apache-2.0
#include "pseudobound/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>

#include <Eigen/Core>

namespace pseudobound::nn {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T> using MapMat = Eigen::Map<RowMat<T>>;
template <typename T> using ConstMapMat = Eigen::Map<const RowMat<T>>;

struct Volume {
  std::size_t c, d, h, w;
  std::size_t spatial() const { return d * h * w; }
  std::size_t numel() const { return c * d * h * w; }
};

Volume sample_volume(const Shape &s) {
  if (s.size() != 5)
    throw ShapeError("expected B x C x D x H x W activation, got " +
                     shape_to_string(s));
  return {s[1], s[2], s[3], s[4]};
}

std::size_t conv_out_extent(std::size_t in, std::size_t k, std::size_t s,
                            std::size_t p) {
  if (in + 2 * p < k)
    throw ShapeError("convolution kernel larger than padded input");
  return (in + 2 * p - k) / s + 1;
}

/// Unfolds the receptive fields of `x` (C x D x H x W) into a
/// (C*kd*kh*kw) x (Do*Ho*Wo) matrix.
template <typename T>
void im2col(const T *x, const Volume &in, const ConvGeometry &g,
            const Volume &out, T *col) {
  using idx = std::ptrdiff_t;
  const std::size_t n_out = out.spatial();
  std::size_t row = 0;
  for (std::size_t c = 0; c < in.c; ++c)
    for (std::size_t kz = 0; kz < g.kernel[0]; ++kz)
      for (std::size_t ky = 0; ky < g.kernel[1]; ++ky)
        for (std::size_t kx = 0; kx < g.kernel[2]; ++kx, ++row) {
          T *dst = col + row * n_out;
          for (std::size_t od = 0; od < out.d; ++od) {
            const idx iz = idx(od * g.stride[0] + kz) - idx(g.padding[0]);
            if (iz < 0 || iz >= idx(in.d)) {
              std::fill_n(dst, out.h * out.w, T(0));
              dst += out.h * out.w;
              continue;
            }
            for (std::size_t oh = 0; oh < out.h; ++oh) {
              const idx iy = idx(oh * g.stride[1] + ky) - idx(g.padding[1]);
              if (iy < 0 || iy >= idx(in.h)) {
                std::fill_n(dst, out.w, T(0));
                dst += out.w;
                continue;
              }
              const T *src = x + ((c * in.d + iz) * in.h + iy) * in.w;
              const idx sx = idx(g.stride[2]), off = idx(kx) - idx(g.padding[2]);
              // Columns [lo, hi) read inside the row; the rest are padding.
              const idx lo = std::min<idx>(idx(out.w), off < 0 ? (-off + sx - 1) / sx : 0);
              const idx hi = std::max<idx>(lo, std::min<idx>(idx(out.w), (idx(in.w) - off + sx - 1) / sx));
              std::fill(dst, dst + lo, T(0));
              if (sx == 1)
                std::copy(src + lo + off, src + hi + off, dst + lo);
              else
                for (idx ow = lo; ow < hi; ++ow)
                  dst[ow] = src[ow * sx + off];
              std::fill(dst + hi, dst + out.w, T(0));
              dst += out.w;
            }
          }
        }
}

/// Adjoint of im2col: scatters-and-adds columns back into `x`.
template <typename T>
void col2im(const T *col, const Volume &in, const ConvGeometry &g,
            const Volume &out, T *x) {
  using idx = std::ptrdiff_t;
  const std::size_t n_out = out.spatial();
  std::size_t row = 0;
  for (std::size_t c = 0; c < in.c; ++c)
    for (std::size_t kz = 0; kz < g.kernel[0]; ++kz)
      for (std::size_t ky = 0; ky < g.kernel[1]; ++ky)
        for (std::size_t kx = 0; kx < g.kernel[2]; ++kx, ++row) {
          const T *src = col + row * n_out;
          for (std::size_t od = 0; od < out.d; ++od) {
            const idx iz = idx(od * g.stride[0] + kz) - idx(g.padding[0]);
            if (iz < 0 || iz >= idx(in.d)) {
              src += out.h * out.w;
              continue;
            }
            for (std::size_t oh = 0; oh < out.h; ++oh) {
              const idx iy = idx(oh * g.stride[1] + ky) - idx(g.padding[1]);
              if (iy < 0 || iy >= idx(in.h)) {
                src += out.w;
                continue;
              }
              T *dst = x + ((c * in.d + iz) * in.h + iy) * in.w;
              const idx sx = idx(g.stride[2]), off = idx(kx) - idx(g.padding[2]);
              const idx lo = std::min<idx>(idx(out.w), off < 0 ? (-off + sx - 1) / sx : 0);
              const idx hi = std::max<idx>(lo, std::min<idx>(idx(out.w), (idx(in.w) - off + sx - 1) / sx));
              for (idx ow = lo; ow < hi; ++ow)
                dst[ow * sx + off] += src[ow];
              src += out.w;
            }
          }
        }
}

std::size_t kernel_volume(const ConvGeometry &g) {
  return g.kernel[0] * g.kernel[1] * g.kernel[2];
}

template <typename T>
void uniform_init(BasicTensor<T> &t, double bound, Rng &rng) {
  for (auto &v : t)
    v = static_cast<T>(rng.uniform(-bound, bound));
}

template <typename T>
void add_channel_bias(T *y, const T *bias, std::size_t channels,
                      std::size_t spatial) {
  for (std::size_t c = 0; c < channels; ++c) {
    T *row = y + c * spatial;
    for (std::size_t i = 0; i < spatial; ++i)
      row[i] += bias[c];
  }
}

template <typename T>
void accumulate_channel_sums(const T *g, std::size_t channels,
                             std::size_t spatial, T *out) {
  for (std::size_t c = 0; c < channels; ++c) {
    double acc = 0.0;
    const T *row = g + c * spatial;
    for (std::size_t i = 0; i < spatial; ++i)
      acc += row[i];
    out[c] += static_cast<T>(acc);
  }
}

} // namespace

// ---------------------------------------------------------------- Conv3d

template <typename T>
Conv3d<T>::Conv3d(std::size_t in_channels, std::size_t out_channels,
                  ConvGeometry geom, Rng &init_rng)
    : in_(in_channels), out_(out_channels), geom_(geom),
      weight_("weight", {out_channels, in_channels, geom.kernel[0],
                         geom.kernel[1], geom.kernel[2]}),
      bias_("bias", {out_channels}) {
  const double bound =
      1.0 / std::sqrt(static_cast<double>(in_ * kernel_volume(geom_)));
  uniform_init(weight_.value, bound, init_rng);
  uniform_init(bias_.value, bound, init_rng);
}

template <typename T> Shape Conv3d<T>::output_shape(const Shape &input) const {
  const Volume v = sample_volume(input);
  if (v.c != in_)
    throw ShapeError("conv3d expects " + std::to_string(in_) +
                     " input channels, got " + std::to_string(v.c));
  return {input[0], out_,
          conv_out_extent(v.d, geom_.kernel[0], geom_.stride[0], geom_.padding[0]),
          conv_out_extent(v.h, geom_.kernel[1], geom_.stride[1], geom_.padding[1]),
          conv_out_extent(v.w, geom_.kernel[2], geom_.stride[2], geom_.padding[2])};
}

template <typename T>
BasicTensor<T> Conv3d<T>::infer(const BasicTensor<T> &x) const {
  const Shape out_shape = output_shape(x.shape());
  const Volume in = sample_volume(x.shape());
  const Volume out = sample_volume(out_shape);
  const std::size_t k = in_ * kernel_volume(geom_);
  BasicTensor<T> y(out_shape);
  std::vector<T> col(k * out.spatial());
  ConstMapMat<T> w(weight_.value.data(), out_, k);
  for (std::size_t b = 0; b < x.dim(0); ++b) {
    im2col(x.data() + b * in.numel(), in, geom_, out, col.data());
    MapMat<T> yb(y.data() + b * out.numel(), out_, out.spatial());
    yb.noalias() = w * ConstMapMat<T>(col.data(), k, out.spatial());
    add_channel_bias(yb.data(), bias_.value.data(), out_, out.spatial());
  }
  return y;
}

template <typename T>
BasicTensor<T> Conv3d<T>::forward(const BasicTensor<T> &x) {
  input_ = x;
  return infer(x);
}

template <typename T>
BasicTensor<T> Conv3d<T>::backward(const BasicTensor<T> &grad_out) {
  const Volume in = sample_volume(input_.shape());
  const Volume out = sample_volume(grad_out.shape());
  const std::size_t k = in_ * kernel_volume(geom_);
  BasicTensor<T> grad_in(input_.shape());
  std::vector<T> col(k * out.spatial());
  ConstMapMat<T> w(weight_.value.data(), out_, k);
  MapMat<T> dw(weight_.grad.data(), out_, k);
  for (std::size_t b = 0; b < input_.dim(0); ++b) {
    const T *gy = grad_out.data() + b * out.numel();
    ConstMapMat<T> dy(gy, out_, out.spatial());
    im2col(input_.data() + b * in.numel(), in, geom_, out, col.data());
    MapMat<T> colm(col.data(), k, out.spatial());
    dw.noalias() += dy * colm.transpose();
    accumulate_channel_sums(gy, out_, out.spatial(), bias_.grad.data());
    colm.noalias() = w.transpose() * dy;
    col2im(col.data(), in, geom_, out, grad_in.data() + b * in.numel());
  }
  return grad_in;
}

// ------------------------------------------------------- ConvTranspose3d

template <typename T>
ConvTranspose3d<T>::ConvTranspose3d(std::size_t in_channels,
                                    std::size_t out_channels, ConvGeometry geom,
                                    Triple output_padding, Rng &init_rng)
    : in_(in_channels), out_(out_channels), geom_(geom),
      output_padding_(output_padding),
      weight_("weight", {in_channels, out_channels, geom.kernel[0],
                         geom.kernel[1], geom.kernel[2]}),
      bias_("bias", {out_channels}) {
  for (std::size_t a = 0; a < 3; ++a)
    if (output_padding_[a] >= geom_.stride[a])
      throw ConfigError("output padding must be smaller than the stride");
  // Fan-in of a transposed convolution counts the layer's output channels,
  // matching the weight's second axis.
  const double bound =
      1.0 / std::sqrt(static_cast<double>(out_ * kernel_volume(geom_)));
  uniform_init(weight_.value, bound, init_rng);
  uniform_init(bias_.value, bound, init_rng);
}

template <typename T>
Shape ConvTranspose3d<T>::output_shape(const Shape &input) const {
  const Volume v = sample_volume(input);
  if (v.c != in_)
    throw ShapeError("conv_transpose3d expects " + std::to_string(in_) +
                     " input channels, got " + std::to_string(v.c));
  auto extent = [&](std::size_t n, std::size_t a) -> std::size_t {
    const std::size_t full = (n - 1) * geom_.stride[a] + geom_.kernel[a] +
                             output_padding_[a];
    if (full < 2 * geom_.padding[a] + 1)
      throw ShapeError("transposed convolution output would be empty");
    return full - 2 * geom_.padding[a];
  };
  return {input[0], out_, extent(v.d, 0), extent(v.h, 1), extent(v.w, 2)};
}

template <typename T>
BasicTensor<T> ConvTranspose3d<T>::infer(const BasicTensor<T> &x) const {
  const Shape out_shape = output_shape(x.shape());
  const Volume in = sample_volume(x.shape());
  const Volume out = sample_volume(out_shape);
  const std::size_t k = out_ * kernel_volume(geom_);
  BasicTensor<T> y(out_shape);
  std::vector<T> col(k * in.spatial());
  ConstMapMat<T> w(weight_.value.data(), in_, k);
  for (std::size_t b = 0; b < x.dim(0); ++b) {
    ConstMapMat<T> xb(x.data() + b * in.numel(), in_, in.spatial());
    MapMat<T> colm(col.data(), k, in.spatial());
    colm.noalias() = w.transpose() * xb;
    // The output plays the role of a convolution input whose output is x.
    T *yb = y.data() + b * out.numel();
    col2im(col.data(), out, geom_, in, yb);
    add_channel_bias(yb, bias_.value.data(), out_, out.spatial());
  }
  return y;
}

template <typename T>
BasicTensor<T> ConvTranspose3d<T>::forward(const BasicTensor<T> &x) {
  input_ = x;
  return infer(x);
}

template <typename T>
BasicTensor<T> ConvTranspose3d<T>::backward(const BasicTensor<T> &grad_out) {
  const Volume in = sample_volume(input_.shape());
  const Volume out = sample_volume(grad_out.shape());
  const std::size_t k = out_ * kernel_volume(geom_);
  BasicTensor<T> grad_in(input_.shape());
  std::vector<T> col(k * in.spatial());
  ConstMapMat<T> w(weight_.value.data(), in_, k);
  MapMat<T> dw(weight_.grad.data(), in_, k);
  for (std::size_t b = 0; b < input_.dim(0); ++b) {
    const T *gy = grad_out.data() + b * out.numel();
    im2col(gy, out, geom_, in, col.data());
    ConstMapMat<T> colm(col.data(), k, in.spatial());
    ConstMapMat<T> xb(input_.data() + b * in.numel(), in_, in.spatial());
    dw.noalias() += xb * colm.transpose();
    accumulate_channel_sums(gy, out_, out.spatial(), bias_.grad.data());
    MapMat<T> dx(grad_in.data() + b * in.numel(), in_, in.spatial());
    dx.noalias() = w * colm;
  }
  return grad_in;
}

// ----------------------------------------------------------- BatchNorm3d

template <typename T>
BatchNorm3d<T>::BatchNorm3d(std::size_t channels, double momentum, double eps)
    : channels_(channels), momentum_(momentum), eps_(eps),
      gamma_("gamma", {channels}), beta_("beta", {channels}),
      running_mean_({channels}, T(0)), running_var_({channels}, T(1)) {
  gamma_.value.fill(T(1));
}

template <typename T>
Shape BatchNorm3d<T>::output_shape(const Shape &input) const {
  const Volume v = sample_volume(input);
  if (v.c != channels_)
    throw ShapeError("batch_norm3d expects " + std::to_string(channels_) +
                     " channels, got " + std::to_string(v.c));
  return input;
}

template <typename T>
BasicTensor<T> BatchNorm3d<T>::forward(const BasicTensor<T> &x) {
  output_shape(x.shape());
  const Volume v = sample_volume(x.shape());
  const std::size_t batch = x.dim(0);
  const std::size_t spatial = v.spatial();
  const double count = static_cast<double>(batch * spatial);
  if (count < 2)
    throw ShapeError("batch_norm3d needs more than one value per channel");

  BasicTensor<T> y(x.shape());
  normalized_ = BasicTensor<T>(x.shape());
  inv_std_.assign(channels_, T(0));
  for (std::size_t c = 0; c < channels_; ++c) {
    double sum = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
      const T *row = x.data() + (b * channels_ + c) * spatial;
      for (std::size_t i = 0; i < spatial; ++i)
        sum += row[i];
    }
    const double mean = sum / count;
    double sq = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
      const T *row = x.data() + (b * channels_ + c) * spatial;
      for (std::size_t i = 0; i < spatial; ++i) {
        const double d = row[i] - mean;
        sq += d * d;
      }
    }
    const double var = sq / count;
    const double inv_std = 1.0 / std::sqrt(var + eps_);
    inv_std_[c] = static_cast<T>(inv_std);
    const T g = gamma_.value[c], bt = beta_.value[c];
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t off = (b * channels_ + c) * spatial;
      for (std::size_t i = 0; i < spatial; ++i) {
        const T xhat = static_cast<T>((x[off + i] - mean) * inv_std);
        normalized_[off + i] = xhat;
        y[off + i] = g * xhat + bt;
      }
    }
    running_mean_[c] = static_cast<T>((1.0 - momentum_) * running_mean_[c] +
                                      momentum_ * mean);
    running_var_[c] = static_cast<T>((1.0 - momentum_) * running_var_[c] +
                                     momentum_ * var * count / (count - 1.0));
  }
  return y;
}

template <typename T>
BasicTensor<T> BatchNorm3d<T>::infer(const BasicTensor<T> &x) const {
  output_shape(x.shape());
  const std::size_t spatial = sample_volume(x.shape()).spatial();
  BasicTensor<T> y(x.shape());
  for (std::size_t b = 0; b < x.dim(0); ++b)
    for (std::size_t c = 0; c < channels_; ++c) {
      const T scale = static_cast<T>(
          gamma_.value[c] / std::sqrt(double(running_var_[c]) + eps_));
      const T shift = beta_.value[c] - scale * running_mean_[c];
      const std::size_t off = (b * channels_ + c) * spatial;
      for (std::size_t i = 0; i < spatial; ++i)
        y[off + i] = scale * x[off + i] + shift;
    }
  return y;
}

template <typename T>
BasicTensor<T> BatchNorm3d<T>::backward(const BasicTensor<T> &grad_out) {
  const std::size_t batch = grad_out.dim(0);
  const std::size_t spatial = sample_volume(grad_out.shape()).spatial();
  const double count = static_cast<double>(batch * spatial);
  BasicTensor<T> grad_in(grad_out.shape());
  for (std::size_t c = 0; c < channels_; ++c) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t off = (b * channels_ + c) * spatial;
      for (std::size_t i = 0; i < spatial; ++i) {
        sum_dy += grad_out[off + i];
        sum_dy_xhat += double(grad_out[off + i]) * normalized_[off + i];
      }
    }
    gamma_.grad[c] += static_cast<T>(sum_dy_xhat);
    beta_.grad[c] += static_cast<T>(sum_dy);
    const double scale = double(gamma_.value[c]) * inv_std_[c] / count;
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t off = (b * channels_ + c) * spatial;
      for (std::size_t i = 0; i < spatial; ++i)
        grad_in[off + i] = static_cast<T>(
            scale * (count * grad_out[off + i] - sum_dy -
                     double(normalized_[off + i]) * sum_dy_xhat));
    }
  }
  return grad_in;
}

// ------------------------------------------------------------ activations

template <typename T>
BasicTensor<T> LeakyReLU<T>::infer(const BasicTensor<T> &x) const {
  BasicTensor<T> y(x.shape());
  const T slope = slope_;
  const T *in = x.data();
  T *out = y.data();
  // Branch-free so the loop vectorizes; equals x or slope * x exactly.
  for (std::size_t i = 0; i < x.size(); ++i)
    out[i] = std::max(in[i], T(0)) + slope * std::min(in[i], T(0));
  return y;
}

template <typename T>
BasicTensor<T> LeakyReLU<T>::forward(const BasicTensor<T> &x) {
  input_ = x;
  return infer(x);
}

template <typename T>
BasicTensor<T> LeakyReLU<T>::backward(const BasicTensor<T> &grad_out) {
  BasicTensor<T> g(grad_out.shape());
  const T slope = slope_;
  const T *x = input_.data();
  const T *gy = grad_out.data();
  T *gx = g.data();
  for (std::size_t i = 0; i < g.size(); ++i)
    gx[i] = (x[i] > T(0) ? T(1) : slope) * gy[i];
  return g;
}

template <typename T>
BasicTensor<T> Tanh<T>::infer(const BasicTensor<T> &x) const {
  BasicTensor<T> y(x.shape());
  using Array = Eigen::Array<T, Eigen::Dynamic, 1>;
  Eigen::Map<Array>(y.data(), Eigen::Index(y.size())) =
      Eigen::Map<const Array>(x.data(), Eigen::Index(x.size())).tanh();
  return y;
}

template <typename T> BasicTensor<T> Tanh<T>::forward(const BasicTensor<T> &x) {
  output_ = infer(x);
  return output_;
}

template <typename T>
BasicTensor<T> Tanh<T>::backward(const BasicTensor<T> &grad_out) {
  BasicTensor<T> g(grad_out.shape());
  for (std::size_t i = 0; i < g.size(); ++i)
    g[i] = grad_out[i] * (T(1) - output_[i] * output_[i]);
  return g;
}

// ------------------------------------------------------------ Sequential

template <typename T> Shape Sequential<T>::output_shape(Shape input) const {
  for (const auto &l : layers_)
    input = l->output_shape(input);
  return input;
}

template <typename T>
BasicTensor<T> Sequential<T>::forward(const BasicTensor<T> &x) {
  BasicTensor<T> h = x;
  for (auto &l : layers_)
    h = l->forward(h);
  return h;
}

template <typename T>
BasicTensor<T> Sequential<T>::infer(const BasicTensor<T> &x) const {
  BasicTensor<T> h = x;
  for (const auto &l : layers_)
    h = l->infer(h);
  return h;
}

template <typename T>
BasicTensor<T> Sequential<T>::backward(const BasicTensor<T> &grad_out) {
  BasicTensor<T> g = grad_out;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it)
    g = (*it)->backward(g);
  return g;
}

template <typename T> std::vector<Parameter<T> *> Sequential<T>::parameters() {
  std::vector<Parameter<T> *> out;
  for (auto &l : layers_)
    for (auto *p : l->parameters())
      out.push_back(p);
  return out;
}

template <typename T>
std::vector<const Parameter<T> *> Sequential<T>::parameters() const {
  std::vector<const Parameter<T> *> out;
  for (const auto &l : layers_)
    for (const auto *p : static_cast<const Layer<T> &>(*l).parameters())
      out.push_back(p);
  return out;
}

template <typename T> std::vector<BasicTensor<T> *> Sequential<T>::buffers() {
  std::vector<BasicTensor<T> *> out;
  for (auto &l : layers_)
    for (auto *b : l->buffers())
      out.push_back(b);
  return out;
}

template <typename T>
std::vector<const BasicTensor<T> *> Sequential<T>::buffers() const {
  std::vector<const BasicTensor<T> *> out;
  for (const auto &l : layers_)
    for (const auto *b : static_cast<const Layer<T> &>(*l).buffers())
      out.push_back(b);
  return out;
}

template <typename T> void Sequential<T>::zero_grad() {
  for (auto *p : parameters())
    p->grad.fill(T(0));
}

template <typename T> std::size_t Sequential<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto *p : parameters())
    n += p->value.size();
  return n;
}

template class Conv3d<float>;
template class Conv3d<double>;
template class ConvTranspose3d<float>;
template class ConvTranspose3d<double>;
template class BatchNorm3d<float>;
template class BatchNorm3d<double>;
template class LeakyReLU<float>;
template class LeakyReLU<double>;
template class Tanh<float>;
template class Tanh<double>;
template class Sequential<float>;
template class Sequential<double>;

} // namespace pseudobound::nn
