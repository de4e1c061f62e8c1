// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pseudobound/ground_truth.hpp"
#include "pseudobound/random.hpp"
#include "pseudobound/tensor.hpp"

namespace pseudobound {

enum class ToyAnomaly { fast_motion, static_intruder, slow_motion };

std::string to_string(ToyAnomaly mode);
ToyAnomaly parse_toy_anomaly(const std::string &s);

/**
 * Moving-blob benchmark. Normal frames show one disk moving `normal_speed`
 * px/frame along an axis, bouncing off the walls and occasionally turning.
 * Test videos alternate normal and anomalous segments of `segment_length`
 * frames, starting and ending with a normal one.
 */
struct ToySpec {
  std::size_t size = 64;
  double blob_radius = 6.0;
  int normal_speed = 1;
  int fast_speed = 3;
  double turn_probability = 0.03;
  double background = -0.6;
  double blob_value = 0.6;
  double intruder_value = -0.1;
  double texture_sigma = 0.02;

  std::size_t train_videos = 8;
  std::size_t train_length = 240;
  std::size_t validation_videos = 2;
  std::size_t validation_length = 120;
  std::size_t test_videos = 4;
  std::size_t segment_length = 32;
  std::size_t anomalous_segments = 2;
  std::vector<ToyAnomaly> modes{ToyAnomaly::fast_motion};
  std::uint64_t seed = 0;

  void validate() const;
  std::size_t test_length() const { return segment_length * (2 * anomalous_segments + 1); }
};

void to_json(nlohmann::json &j, const ToySpec &s);
void from_json(const nlohmann::json &j, ToySpec &s);

struct ToyFrameState {
  int x = 0, y = 0;         // blob center, pixels
  bool anomalous = false;
  ToyAnomaly mode = ToyAnomaly::fast_motion;
};

struct ToyVideo {
  std::string id;
  std::vector<Tensor> frames; // 1 x size x size, quantized to 8-bit levels
  std::vector<ToyFrameState> states;
  FrameLabels labels;
};

/// Normal-only video (training / validation).
ToyVideo make_normal_toy_video(const ToySpec &spec, std::string id, std::size_t length,
                               Rng &rng);
/// Test video with alternating segments; anomaly modes cycle through `modes`.
ToyVideo make_test_toy_video(const ToySpec &spec, std::string id, Rng &rng);

/**
 * Writes `<out>/{training,validation,testing}/frames/<id>/NNNN.png`,
 * `<out>/testing/labels/<id>.txt` and `<out>/toyspec.json`. Output is
 * byte-identical for a fixed spec.
 */
void generate_toy_dataset(const ToySpec &spec, const std::filesystem::path &out_dir);

} // namespace pseudobound
