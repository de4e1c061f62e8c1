// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <fstream>
#include <iterator>

#include "pseudobound/data.hpp"
#include "pseudobound/random.hpp"
#include "pseudobound/toybench.hpp"
#include "support.hpp"

using namespace pseudobound;
namespace fs = std::filesystem;

namespace {

ToySpec small_spec() {
  ToySpec s;
  s.train_videos = 2;
  s.train_length = 40;
  s.validation_videos = 1;
  s.validation_length = 20;
  s.test_videos = 2;
  s.segment_length = 16;
  s.modes = {ToyAnomaly::fast_motion, ToyAnomaly::static_intruder, ToyAnomaly::slow_motion};
  s.anomalous_segments = 3;
  return s;
}

std::uint64_t tree_hash(const fs::path &root) {
  std::vector<fs::path> files;
  for (const auto &e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file())
      files.push_back(fs::relative(e.path(), root));
  std::sort(files.begin(), files.end());
  std::uint64_t h = fnv1a("");
  for (const auto &f : files) {
    std::ifstream in(root / f, std::ios::binary);
    const std::string bytes((std::istreambuf_iterator<char>(in)), {});
    h = fnv1a(f.string() + bytes, h);
  }
  return h;
}

// Brightest-pixel centroid: the blob is the only bright structure.
std::pair<double, double> centroid(const Tensor &f, std::size_t n) {
  double sx = 0, sy = 0, c = 0;
  for (std::size_t y = 0; y < n; ++y)
    for (std::size_t x = 0; x < n; ++x)
      if (f[y * n + x] > 0.3f) {
        sx += double(x);
        sy += double(y);
        c += 1;
      }
  return {sx / c, sy / c};
}

} // namespace

TEST_CASE("normal toy videos move one blob by one pixel per frame") {
  const ToySpec spec;
  Rng rng(1);
  const ToyVideo v = make_normal_toy_video(spec, "v", 200, rng);
  for (std::size_t t = 1; t < v.states.size(); ++t) {
    const int d = std::abs(v.states[t].x - v.states[t - 1].x) +
                  std::abs(v.states[t].y - v.states[t - 1].y);
    REQUIRE(d == spec.normal_speed);
    const auto [cx, cy] = centroid(v.frames[t], spec.size);
    CHECK(cx == doctest::Approx(v.states[t].x).epsilon(0.01));
    CHECK(cy == doctest::Approx(v.states[t].y).epsilon(0.01));
  }
  for (auto l : v.labels)
    CHECK(l == 0);
}

TEST_CASE("test toy videos label exactly the anomalous segments") {
  ToySpec spec = small_spec();
  Rng rng(2);
  const ToyVideo v = make_test_toy_video(spec, "t", rng);
  REQUIRE(v.frames.size() == spec.test_length());
  for (std::size_t t = 0; t < v.frames.size(); ++t) {
    const bool anomalous = (t / spec.segment_length) % 2 == 1;
    CHECK(v.labels[t] == anomalous);
    if (t == 0 || t % spec.segment_length == 0)
      continue;
    const int d = std::abs(v.states[t].x - v.states[t - 1].x) +
                  std::abs(v.states[t].y - v.states[t - 1].y);
    if (!anomalous)
      CHECK(d == spec.normal_speed);
    else if (v.states[t].mode == ToyAnomaly::slow_motion)
      CHECK(d == 0);
    else if (v.states[t].mode == ToyAnomaly::fast_motion)
      CHECK(d <= spec.fast_speed); // wall reflections can shorten a step
  }
  // Fast segments move at full speed away from the walls.
  std::size_t full_speed = 0;
  for (std::size_t t = spec.segment_length + 1; t < 2 * spec.segment_length; ++t)
    full_speed += std::abs(v.states[t].x - v.states[t - 1].x) +
                      std::abs(v.states[t].y - v.states[t - 1].y) ==
                  spec.fast_speed;
  CHECK(full_speed > spec.segment_length / 2);
}

TEST_CASE("generated dataset is deterministic and loads back aligned") {
  pbtest::TempDir dir("toy");
  const ToySpec spec = small_spec();
  generate_toy_dataset(spec, dir / "a");
  generate_toy_dataset(spec, dir / "b");
  CHECK(tree_hash(dir / "a") == tree_hash(dir / "b"));
  ToySpec other = spec;
  other.seed = 1;
  generate_toy_dataset(other, dir / "c");
  CHECK(tree_hash(dir / "a") != tree_hash(dir / "c"));

  const VideoDataset test = VideoDataset::open(dir / "a", "testing", {1, 64, 64});
  const GroundTruth gt = read_ground_truth(dir / "a" / "testing" / "labels");
  REQUIRE(test.size() == 2);
  for (std::size_t i = 0; i < test.size(); ++i) {
    CHECK(gt.at(test.id(i)).size() == test.length(i));
    // Frames decode to exactly the generated values.
    Rng rng = Rng::substream(spec.seed, "toy/" + test.id(i));
    const ToyVideo v = make_test_toy_video(spec, test.id(i), rng);
    const auto loaded = test.video(i);
    for (std::size_t t = 0; t < v.frames.size(); ++t)
      REQUIRE(loaded->frames[t].pixels == v.frames[t]);
    CHECK(gt.at(test.id(i)) == v.labels);
  }
  CHECK(VideoDataset::open(dir / "a", "training", {1, 64, 64}).size() == 2);
  CHECK(VideoDataset::open(dir / "a", "validation", {1, 64, 64}).size() == 1);
}

TEST_CASE("toy spec json and validation") {
  ToySpec s = small_spec();
  const ToySpec back = nlohmann::json(s).get<ToySpec>();
  CHECK(back.modes == s.modes);
  CHECK(back.segment_length == s.segment_length);
  CHECK_THROWS(nlohmann::json({{"blob_size", 3}}).get<ToySpec>());
  s.fast_speed = 2;
  CHECK_THROWS(s.validate());
}
