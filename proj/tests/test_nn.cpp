// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <functional>

#include "pseudobound/nn.hpp"

using namespace pseudobound;
using namespace pseudobound::nn;
using D = BasicTensor<double>;

namespace {

D random_d(const Shape &s, Rng &rng) {
  D t(s);
  for (auto &v : t)
    v = rng.uniform(-1.0, 1.0);
  return t;
}

std::size_t at5(const Shape &s, std::size_t a, std::size_t b, std::size_t c, std::size_t d,
                std::size_t e) {
  return (((a * s[1] + b) * s[2] + c) * s[3] + d) * s[4] + e;
}

// Direct definition: y[o, p] = bias[o] + sum w[o, c, k] x[c, p * s - pad + k].
D naive_conv(const D &x, const D &w, const D &bias, const ConvGeometry &g, const Shape &out) {
  D y(out);
  const Shape &xs = x.shape(), &ws = w.shape();
  for (std::size_t b = 0; b < out[0]; ++b)
    for (std::size_t o = 0; o < out[1]; ++o)
      for (std::size_t z = 0; z < out[2]; ++z)
        for (std::size_t r = 0; r < out[3]; ++r)
          for (std::size_t q = 0; q < out[4]; ++q) {
            double acc = bias[o];
            for (std::size_t c = 0; c < xs[1]; ++c)
              for (std::size_t kz = 0; kz < ws[2]; ++kz)
                for (std::size_t ky = 0; ky < ws[3]; ++ky)
                  for (std::size_t kx = 0; kx < ws[4]; ++kx) {
                    const long iz = long(z * g.stride[0] + kz) - long(g.padding[0]);
                    const long iy = long(r * g.stride[1] + ky) - long(g.padding[1]);
                    const long ix = long(q * g.stride[2] + kx) - long(g.padding[2]);
                    if (iz < 0 || iy < 0 || ix < 0 || iz >= long(xs[2]) || iy >= long(xs[3]) ||
                        ix >= long(xs[4]))
                      continue;
                    acc += w[at5(ws, o, c, kz, ky, kx)] * x[at5(xs, b, c, iz, iy, ix)];
                  }
            y[at5(out, b, o, z, r, q)] = acc;
          }
  return y;
}

// Scatter definition: every input element adds w[c, o, k] x[c, i] at
// output position i * s - pad + k, positions outside the output dropped.
D naive_conv_transpose(const D &x, const D &w, const D &bias, const ConvGeometry &g,
                       const Shape &out) {
  D y(out);
  const Shape &xs = x.shape(), &ws = w.shape();
  for (std::size_t b = 0; b < out[0]; ++b) {
    for (std::size_t o = 0; o < out[1]; ++o)
      for (std::size_t i = 0; i < out[2] * out[3] * out[4]; ++i)
        y[(b * out[1] + o) * out[2] * out[3] * out[4] + i] = bias[o];
    for (std::size_t c = 0; c < xs[1]; ++c)
      for (std::size_t z = 0; z < xs[2]; ++z)
        for (std::size_t r = 0; r < xs[3]; ++r)
          for (std::size_t q = 0; q < xs[4]; ++q)
            for (std::size_t o = 0; o < ws[1]; ++o)
              for (std::size_t kz = 0; kz < ws[2]; ++kz)
                for (std::size_t ky = 0; ky < ws[3]; ++ky)
                  for (std::size_t kx = 0; kx < ws[4]; ++kx) {
                    const long oz = long(z * g.stride[0] + kz) - long(g.padding[0]);
                    const long oy = long(r * g.stride[1] + ky) - long(g.padding[1]);
                    const long ox = long(q * g.stride[2] + kx) - long(g.padding[2]);
                    if (oz < 0 || oy < 0 || ox < 0 || oz >= long(out[2]) || oy >= long(out[3]) ||
                        ox >= long(out[4]))
                      continue;
                    y[at5(out, b, o, oz, oy, ox)] +=
                        w[at5(ws, c, o, kz, ky, kx)] * x[at5(xs, b, c, z, r, q)];
                  }
  }
  return y;
}

double max_abs_diff(const D &a, const D &b) {
  REQUIRE(a.shape() == b.shape());
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

const ConvGeometry kGeometries[] = {
    {{3, 3, 3}, {1, 1, 1}, {1, 1, 1}},
    {{3, 3, 3}, {1, 2, 2}, {1, 1, 1}},
    {{3, 3, 3}, {2, 2, 2}, {1, 1, 1}},
    {{2, 3, 1}, {1, 2, 1}, {0, 1, 0}},
    {{3, 2, 3}, {2, 1, 3}, {1, 0, 2}},
};

// Checks dL/dx and every parameter gradient of L = sum(y * r) against
// central differences.
void check_gradients(Layer<double> &layer, D x, Rng &rng) {
  const D probe = random_d(layer.output_shape(x.shape()), rng);
  auto loss = [&](const D &in) {
    const D y = layer.forward(in);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i)
      s += y[i] * probe[i];
    return s;
  };
  for (auto *p : layer.parameters())
    p->grad.fill(0.0);
  loss(x);
  const D dx = layer.backward(probe);
  const double h = 1e-6;
  for (std::size_t i = 0; i < x.size(); i += 1 + x.size() / 40) {
    const double saved = x[i];
    x[i] = saved + h;
    const double up = loss(x);
    x[i] = saved - h;
    const double down = loss(x);
    x[i] = saved;
    CHECK(dx[i] == doctest::Approx((up - down) / (2 * h)).epsilon(1e-6));
  }
  for (auto *p : layer.parameters()) {
    const D analytic = p->grad;
    for (std::size_t i = 0; i < p->value.size(); i += 1 + p->value.size() / 20) {
      const double saved = p->value[i];
      p->value[i] = saved + h;
      const double up = loss(x);
      p->value[i] = saved - h;
      const double down = loss(x);
      p->value[i] = saved;
      CAPTURE(p->name);
      CHECK(analytic[i] == doctest::Approx((up - down) / (2 * h)).epsilon(1e-6));
    }
  }
}

} // namespace

TEST_CASE("conv3d matches the direct definition") {
  Rng rng(1);
  for (const auto &g : kGeometries) {
    Conv3d<double> conv(2, 3, g, rng);
    const D x = random_d({2, 2, 5, 7, 6}, rng);
    const Shape out = conv.output_shape(x.shape());
    CHECK(max_abs_diff(conv.infer(x), naive_conv(x, conv.weight().value, conv.bias().value, g,
                                                 out)) < 1e-12);
  }
}

TEST_CASE("conv_transpose3d matches the scatter definition") {
  Rng rng(2);
  for (const auto &g : kGeometries) {
    Triple op{};
    for (std::size_t a = 0; a < 3; ++a)
      op[a] = g.stride[a] - 1;
    ConvTranspose3d<double> deconv(3, 2, g, op, rng);
    const D x = random_d({2, 3, 3, 4, 3}, rng);
    const Shape out = deconv.output_shape(x.shape());
    const auto params = deconv.parameters();
    CHECK(max_abs_diff(deconv.infer(x),
                       naive_conv_transpose(x, params[0]->value, params[1]->value, g, out)) <
          1e-12);
  }
}

TEST_CASE("stride-s transposed convolution inverts the conv output size") {
  Rng rng(3);
  ConvGeometry g{{3, 3, 3}, {1, 2, 2}, {1, 1, 1}};
  Conv3d<float> conv(1, 4, g, rng);
  ConvTranspose3d<float> deconv(4, 1, g, {0, 1, 1}, rng);
  const Shape in{1, 1, 8, 16, 16};
  CHECK(deconv.output_shape(conv.output_shape(in)) == in);
}

TEST_CASE("layer gradients match finite differences") {
  Rng rng(4);
  for (const auto &g : kGeometries) {
    Conv3d<double> conv(2, 3, g, rng);
    check_gradients(conv, random_d({2, 2, 4, 5, 5}, rng), rng);
    Triple op{};
    for (std::size_t a = 0; a < 3; ++a)
      op[a] = g.stride[a] - 1;
    ConvTranspose3d<double> deconv(2, 3, g, op, rng);
    check_gradients(deconv, random_d({2, 2, 3, 3, 4}, rng), rng);
  }
  BatchNorm3d<double> bn(3);
  check_gradients(bn, random_d({2, 3, 2, 3, 3}, rng), rng);
  LeakyReLU<double> lrelu(0.2);
  check_gradients(lrelu, random_d({2, 3, 2, 3, 3}, rng), rng);
  Tanh<double> tanh_layer;
  check_gradients(tanh_layer, random_d({2, 3, 2, 3, 3}, rng), rng);
}

TEST_CASE("leaky relu is exact on both sides") {
  LeakyReLU<float> l(0.2f);
  Tensor x({1, 1, 1, 1, 4}, std::vector<float>{-2.0f, -0.0f, 0.5f, 3.0f});
  const Tensor y = l.infer(x);
  CHECK(y[0] == 0.2f * -2.0f);
  CHECK(y[1] == 0.0f);
  CHECK(y[2] == 0.5f);
  CHECK(y[3] == 3.0f);
}

TEST_CASE("batch norm uses batch statistics in training and running ones in inference") {
  BatchNorm3d<double> bn(1, 1.0); // momentum 1: running stats = last batch
  Rng rng(5);
  const D x = random_d({2, 1, 2, 3, 3}, rng);
  const D y = bn.forward(x);
  double mean = 0.0, var = 0.0;
  for (double v : y)
    mean += v;
  mean /= double(y.size());
  for (double v : y)
    var += (v - mean) * (v - mean);
  var /= double(y.size());
  CHECK(mean == doctest::Approx(0.0).epsilon(1e-12).scale(1.0));
  CHECK(var == doctest::Approx(1.0).epsilon(1e-4));
  // With the running stats set from this batch (unbiased variance), inference
  // differs from training only by the n/(n-1) variance correction.
  const D z = bn.infer(x);
  const double n = double(x.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    CHECK(z[i] == doctest::Approx(y[i] * std::sqrt((n - 1) / n)).epsilon(1e-4));
}
