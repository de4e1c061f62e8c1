// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pseudobound/ground_truth.hpp"

namespace pseudobound {

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  double threshold = 0.0; // frames scoring >= threshold are flagged
};

/// ROC swept over every distinct score, from (0,0) to (1,1). Throws
/// EvalError when the labels hold a single class.
std::vector<RocPoint> roc_curve(std::span<const double> scores,
                                std::span<const std::uint8_t> labels);

/// Trapezoidal area under the ROC; ties between a positive and a negative
/// count one half.
double frame_auc(std::span<const double> scores, std::span<const std::uint8_t> labels);

enum class EdgePolicy { truncate, pad };

std::string to_string(EdgePolicy policy);

struct VideoReport {
  std::string video_id;
  std::size_t video_length = 0;
  std::size_t covered_frames = 0;
  std::size_t evaluated_frames = 0;
  std::size_t anomalous_frames = 0;
  double score_mean = 0.0;
  double score_min = 0.0;
  double score_max = 0.0;
  std::optional<double> auc; // only when the video has both classes
};

struct EvalReport {
  double auc = 0.0;
  EdgePolicy policy = EdgePolicy::truncate;
  std::size_t frames = 0;
  std::size_t anomalous = 0;
  std::vector<VideoReport> videos;
  std::vector<RocPoint> roc;

  nlohmann::json to_json() const;
};

/**
 * Aligns every scored video with its labels under the edge policy and
 * computes one AUC over the concatenation. truncate keeps only covered
 * middle frames; pad replicates edge scores to the full video. Throws
 * EvalError on missing scores or labels and on length mismatches, naming the
 * video.
 */
EvalReport evaluate_run(const std::filesystem::path &scores_dir, const GroundTruth &gt,
                        EdgePolicy policy);

} // namespace pseudobound
