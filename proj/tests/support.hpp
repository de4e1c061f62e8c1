// SPDX-License-Identifier: Apache-2.0
// Shared fixtures for the unit and acceptance suites.
#pragma once

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <string>
#include <unistd.h>

#include "pseudobound/data.hpp"
#include "pseudobound/random.hpp"

namespace pbtest {

namespace fs = std::filesystem;

/// Unique scratch directory removed on destruction.
class TempDir {
public:
  explicit TempDir(const std::string &tag = "t") {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            ("pbtest_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir &) = delete;
  TempDir &operator=(const TempDir &) = delete;

  const fs::path &path() const { return path_; }
  fs::path operator/(const std::string &name) const { return path_ / name; }

private:
  fs::path path_;
};

/// Video whose frame i (1-based) is filled with a value encoding i, plus
/// small seeded noise so frames are distinguishable element by element.
inline pseudobound::Video indexed_video(const std::string &id, std::size_t length,
                                        pseudobound::FrameGeometry g, std::uint64_t seed = 7) {
  pseudobound::Rng rng(seed);
  pseudobound::Video v{id, {}};
  for (std::size_t i = 1; i <= length; ++i) {
    pseudobound::Tensor px(g.shape());
    const double base = -0.9 + 1.8 * double(i) / double(length + 1);
    for (auto &x : px)
      x = static_cast<float>(std::clamp(base + rng.uniform(-0.05, 0.05), -1.0, 1.0));
    v.frames.push_back({std::move(px)});
  }
  return v;
}

/// Uniform random clip of the given shape in [-1, 1].
inline pseudobound::Tensor random_tensor(const pseudobound::Shape &shape,
                                         pseudobound::Rng &rng, double lo = -1.0,
                                         double hi = 1.0) {
  pseudobound::Tensor t(shape);
  for (auto &x : t)
    x = static_cast<float>(rng.uniform(lo, hi));
  return t;
}

} // namespace pbtest
