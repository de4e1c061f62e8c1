// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>

#include "oracles.hpp"
#include "pseudobound/error.hpp"
#include "pseudobound/score.hpp"
#include "support.hpp"

using namespace pseudobound;

TEST_CASE("psnr closed forms") {
  const Tensor zero({1, 8, 8}, -1.0f), two({1, 8, 8}, 1.0f);
  CHECK(std::abs(psnr(two, zero)) < 1e-9);
  const Tensor base({1, 8, 8}, 0.0f), off({1, 8, 8}, 0.2f);
  CHECK(mse_raw(off, base) == doctest::Approx(0.04).epsilon(1e-7));
  CHECK(std::abs(psnr_from_mse(0.04) - 20.0) < 1e-9);
  CHECK(kPsnrPeak == 2.0);
  // Perfect reconstruction hits the floor instead of dividing by zero.
  CHECK(psnr(base, base) == doctest::Approx(10.0 * std::log10(4.0 / 1e-8)));
}

TEST_CASE("psnr decreases with mse and depends only on |c|") {
  Rng rng(1);
  for (int i = 0; i < 200; ++i) {
    const double a = rng.uniform(1e-6, 4.0), b = rng.uniform(1e-6, 4.0);
    if (a < b)
      CHECK(psnr_from_mse(a) > psnr_from_mse(b));
  }
  const Tensor x = pbtest::random_tensor({1, 4, 4}, rng, -0.5, 0.5);
  Tensor plus = x, minus = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    plus[i] += 0.25f;
    minus[i] -= 0.25f;
  }
  CHECK(psnr(plus, x) == doctest::Approx(psnr(minus, x)).epsilon(1e-6));
}

TEST_CASE("mse oracle") {
  Rng rng(2);
  const Tensor a = pbtest::random_tensor({1, 9, 7}, rng), b = pbtest::random_tensor({1, 9, 7}, rng);
  CHECK(mse_raw(a, a) == 0.0);
  CHECK(std::abs(mse_raw(a, b) - pbtest::oracle::mse(a, b, a.size())) < 1e-12);
  CHECK_THROWS_AS(mse_raw(a, Tensor({1, 9, 8})), ShapeError);
}

TEST_CASE("min-max normalization and anomaly scores") {
  const std::vector<double> p{30, 20, 25};
  CHECK(minmax_normalize(p) == std::vector<double>{1, 0, 0.5});
  CHECK(anomaly_scores(std::vector<double>{1, 0, 0.5}, ScoreMode::psnr) ==
        std::vector<double>{0, 1, 0.5});
  CHECK(anomaly_scores(std::vector<double>{0, 1}, ScoreMode::mse) == std::vector<double>{0, 1});
  const std::vector<double> flat{3, 3, 3};
  CHECK(minmax_normalize(flat) == std::vector<double>{1, 1, 1});
  CHECK(anomaly_scores(minmax_normalize(flat), ScoreMode::psnr) == std::vector<double>{0, 0, 0});
  CHECK_THROWS(minmax_normalize(std::vector<double>{}));

  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> raw(20);
    for (auto &v : raw)
      v = rng.uniform(10, 40);
    const auto q = minmax_normalize(raw);
    CHECK(*std::min_element(q.begin(), q.end()) == 0.0);
    CHECK(*std::max_element(q.begin(), q.end()) == 1.0);
    const auto a = anomaly_scores(q, ScoreMode::psnr);
    CHECK(std::max_element(a.begin(), a.end()) - a.begin() ==
          std::min_element(raw.begin(), raw.end()) - raw.begin());
    CHECK(std::count(a.begin(), a.end(), 1.0) == 1);
    CHECK(std::count(a.begin(), a.end(), 0.0) == 1);
  }
}

TEST_CASE("error heatmap") {
  Rng rng(4);
  const Tensor a = pbtest::random_tensor({1, 6, 5}, rng), b = pbtest::random_tensor({1, 6, 5}, rng);
  for (float v : error_heatmap(a, a))
    CHECK(v == 0.0f);
  Tensor one = a;
  one[7] += 0.3f;
  const Tensor hot = error_heatmap(one, a);
  CHECK(hot.shape() == Shape{6, 5});
  for (std::size_t i = 0; i < hot.size(); ++i)
    CHECK(hot[i] == (i == 7 ? 1.0f : 0.0f));

  const Tensor m = error_heatmap(a, b);
  std::vector<double> err(30);
  for (std::size_t i = 0; i < 30; ++i)
    err[i] = (double(a[i]) - b[i]) * (double(a[i]) - b[i]);
  const double lo = *std::min_element(err.begin(), err.end());
  const double hi = *std::max_element(err.begin(), err.end());
  for (std::size_t i = 0; i < 30; ++i)
    CHECK(std::abs(m[i] - (err[i] - lo) / (hi - lo)) < 1e-6); // stored as float
}

namespace {

Reconstructor identity() {
  return [](const Tensor &x) { return x; };
}

// Perturbs each sample by an amount derived from its own content, so the
// result is independent of batching but varies by window.
Reconstructor content_dependent() {
  return [](const Tensor &x) {
    Tensor y = x;
    const std::size_t per = x.size() / x.dim(0);
    for (std::size_t b = 0; b < x.dim(0); ++b) {
      const float shift = 0.1f * std::abs(x[b * per]);
      for (std::size_t i = 0; i < per; ++i)
        y[b * per + i] = std::clamp(y[b * per + i] + shift, -1.0f, 1.0f);
    }
    return y;
  };
}

} // namespace

TEST_CASE("score_video window arithmetic") {
  const Video v = pbtest::indexed_video("v", 20, {1, 4, 4});
  const ScoreSeries s = score_video(identity(), v, 16, ScoreMode::psnr);
  REQUIRE(s.size() == 5);
  CHECK(s.covered_indices == std::vector<std::size_t>{9, 10, 11, 12, 13});
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(s.P[i] == psnr_from_mse(0.0));
    CHECK(s.A[i] == 0.0);
  }
  const Video w = pbtest::indexed_video("w", 16, {1, 4, 4});
  const ScoreSeries one = score_video(content_dependent(), w, 16, ScoreMode::psnr);
  REQUIRE(one.size() == 1);
  CHECK(one.Q[0] == 1.0);
  CHECK(one.A[0] == 0.0);
  CHECK_THROWS_AS(score_video(identity(), w, 17, ScoreMode::psnr), OutOfRangeError);
}

TEST_CASE("score_video matches the windowed definition and ignores batch size") {
  const Video v = pbtest::indexed_video("v", 23, {1, 4, 4});
  const Reconstructor r = content_dependent();
  const ScoreSeries base = score_video(r, v, 5, ScoreMode::mse, 1);
  const auto windows = sliding_windows(v, 5);
  REQUIRE(base.size() == windows.size());
  for (std::size_t k = 0; k < windows.size(); ++k) {
    const Tensor batch = windows[k].clip.data.reshaped({1, 5, 1, 4, 4});
    const Tensor rec = r(batch);
    const std::size_t off = 2 * 16; // middle element of a T = 5 window
    double m = 0.0;
    for (std::size_t i = 0; i < 16; ++i)
      m += (double(rec[off + i]) - batch[off + i]) * (double(rec[off + i]) - batch[off + i]);
    CHECK(base.P[k] == doctest::Approx(m / 16).epsilon(1e-12));
    CHECK(base.covered_indices[k] == windows[k].middle_index);
  }
  for (std::size_t bs : {2u, 3u, 7u, 64u}) {
    const ScoreSeries s = score_video(r, v, 5, ScoreMode::mse, bs);
    CHECK(s.P == base.P);
    CHECK(s.A == base.A);
  }
}

TEST_CASE("psnr ranking equals raw mse ranking") {
  const Video v = pbtest::indexed_video("v", 30, {1, 4, 4}, 21);
  const ScoreSeries p = score_video(content_dependent(), v, 4, ScoreMode::psnr);
  const ScoreSeries m = score_video(content_dependent(), v, 4, ScoreMode::mse);
  for (std::size_t i = 0; i < p.size(); ++i)
    for (std::size_t j = 0; j < p.size(); ++j)
      CHECK((p.A[i] < p.A[j]) == (m.P[i] < m.P[j]));
}

TEST_CASE("edge padding and CSV round trip") {
  ScoreSeries s = make_series("v", ScoreMode::psnr, 4, 10, {3, 4, 5, 6, 7, 8, 9},
                              {20, 21, 22, 23, 24, 25, 26});
  const ScoreSeries padded = pad_edges(s);
  REQUIRE(padded.size() == 10);
  CHECK(padded.P[0] == 20);
  CHECK(padded.P[1] == 20);
  CHECK(padded.P[2] == 20);
  CHECK(padded.P[5] == 23);
  CHECK(padded.P[9] == 26);

  pbtest::TempDir dir("csv");
  write_series_csv(dir / "v.csv", s);
  std::ifstream in(dir / "v.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header == "frame_index,P,Q,A");
  const ScoreSeries back = read_series_csv(dir / "v.csv", "v");
  CHECK(back.covered_indices == s.covered_indices);
  CHECK(back.P == s.P);
  CHECK(back.Q == s.Q);
  CHECK(back.A == s.A);
}

TEST_CASE("worker count honours the environment") {
  ::setenv("PSEUDOBOUND_NUM_WORKERS", "3", 1);
  CHECK(configured_workers(10) == 3);
  CHECK(configured_workers(2) == 2);
  CHECK(configured_workers(10, 5) == 5);
  ::setenv("PSEUDOBOUND_NUM_WORKERS", "zero", 1);
  CHECK(configured_workers(10) == 1);
  ::unsetenv("PSEUDOBOUND_NUM_WORKERS");
  CHECK(configured_workers(10) == 1);
}
