// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pseudobound/model.hpp"
#include "pseudobound/score.hpp"
#include "pseudobound/synth.hpp"
#include "pseudobound/train.hpp"

namespace pseudobound {

struct DatasetConfig {
  std::filesystem::path root;
  std::size_t cache_capacity = 16; // decoded videos kept per split
};

struct ScoreConfig {
  std::string split = "testing";
  ScoreMode mode = ScoreMode::psnr;
  bool edge_pad = false;
  bool heatmaps = false;
  std::size_t batch_size = 8;
};

struct EvalConfig {
  std::filesystem::path ground_truth; // empty: <dataset.root>/testing/labels
  bool edge_pad = false;
};

/**
 * Whole-run configuration, read from JSON:
 *
 *   { "seed": 0, "output_dir": "runs/ped2",
 *     "dataset": {"root": "...", "image_size": [256, 256], "channels": 1, "T": 16},
 *     "model":   {"preset": "reference-default" | "toy", ...overrides},
 *     "train":   {"lr": 1e-4, "batch_size": 4, "iterations": 20000, ...},
 *     "pseudo":  [{"kind": "skip", "p": 0.01, "s": [2, 3, 4, 5]}, ...],
 *     "score":   {"split": "testing", "mode": "psnr", ...},
 *     "eval":    {"gt": "...", "edge_pad": false} }
 *
 * Geometry (T, C, H, W) lives in `dataset` and defaults to the model
 * preset's. Unknown keys are rejected with their path.
 */
struct RunConfig {
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "run";
  DatasetConfig dataset;
  std::string model_preset = "reference-default";
  AutoencoderConfig model;
  TrainingConfig train;
  std::vector<PseudoSpec> pseudo;
  ScoreConfig score;
  EvalConfig eval;

  FrameGeometry geometry() const { return {model.channels, model.height, model.width}; }
  std::filesystem::path ground_truth_dir() const;

  nlohmann::json to_json() const;
  /// Checks cross-field constraints (stride divisibility, sum of p <= 1, ...).
  void validate() const;
};

RunConfig parse_config(const nlohmann::json &j);
RunConfig parse_config_file(const std::filesystem::path &path);

nlohmann::json pseudo_spec_to_json(const PseudoSpec &spec);
/// `where` prefixes diagnostics, e.g. "pseudo[1]".
PseudoSpec parse_pseudo_spec(const nlohmann::json &j, const std::string &where = "pseudo");

} // namespace pseudobound
