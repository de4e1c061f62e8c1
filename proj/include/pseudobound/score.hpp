// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pseudobound/data.hpp"
#include "pseudobound/model.hpp"
#include "pseudobound/tensor.hpp"

namespace pseudobound {

enum class ScoreMode { psnr, mse };

std::string to_string(ScoreMode mode);
ScoreMode parse_score_mode(const std::string &s);

inline constexpr double kPsnrPeak = 2.0;        // max difference in [-1, 1]
inline constexpr double kPsnrMseFloor = 1e-8;

double mse_raw(std::span<const float> x_hat, std::span<const float> x);
double mse_raw(const Tensor &x_hat, const Tensor &x);

/// 10 log10(M^2 / mse) with M = 2 and the mse floored at 1e-8.
double psnr_from_mse(double mse);
double psnr(const Tensor &x_hat, const Tensor &x);

/// Per-video min-max normalization; a constant series maps to all ones.
std::vector<double> minmax_normalize(std::span<const double> raw);

/// psnr: A = 1 - Q. mse: A = Q (high error is already high score).
std::vector<double> anomaly_scores(std::span<const double> normalized, ScoreMode mode);

struct ScoreSeries {
  std::string video_id;
  ScoreMode mode = ScoreMode::psnr;
  std::size_t frames = 0;        // T used for the windows
  std::size_t video_length = 0;  // l
  std::vector<std::size_t> covered_indices; // 1-based middle frames
  std::vector<double> P;
  std::vector<double> Q;
  std::vector<double> A;

  std::size_t size() const noexcept { return P.size(); }
};

/// Raw scores in, full series out.
ScoreSeries make_series(std::string video_id, ScoreMode mode, std::size_t frames,
                        std::size_t video_length, std::vector<std::size_t> covered,
                        std::vector<double> raw);

/// Replicates the first and last scores so every frame 1..l has one.
ScoreSeries pad_edges(const ScoreSeries &series);

/// Maps a B x T x C x H x W batch to its reconstruction.
using Reconstructor = std::function<Tensor(const Tensor &)>;

Reconstructor model_reconstructor(const Autoencoder &model);

/// Optional per-window callback receiving (middle index, input, reconstruction)
/// middle frames, used for heatmaps.
using MiddleFrameSink =
    std::function<void(std::size_t middle_index, const Tensor &input, const Tensor &recon)>;

/**
 * Sliding-window scoring of one video: every window is reconstructed, the
 * middle input/reconstruction frames give the raw score. Windows are
 * grouped into batches of `batch_size`; the result does not depend on it.
 */
ScoreSeries score_video(const Reconstructor &reconstruct, const Video &video,
                        std::size_t frames, ScoreMode mode, std::size_t batch_size = 8,
                        const MiddleFrameSink &sink = {});
ScoreSeries score_video(const Autoencoder &model, const Video &video, ScoreMode mode,
                        std::size_t batch_size = 8);

/// Per-pixel squared error (summed over channels), min-max normalized over
/// the frame. Constant error gives all zeros. Returns H x W.
Tensor error_heatmap(const Tensor &x_hat, const Tensor &x);

/// CSV `frame_index,P,Q,A`.
void write_series_csv(const std::filesystem::path &path, const ScoreSeries &series);
/// Reads a series back; mode/T/length come from the caller (meta.json).
ScoreSeries read_series_csv(const std::filesystem::path &path, std::string video_id);

struct ScoreOptions {
  ScoreMode mode = ScoreMode::psnr;
  bool edge_pad = false;
  bool heatmaps = false;
  std::size_t batch_size = 8;
  std::size_t workers = 0; // 0: PSEUDOBOUND_NUM_WORKERS or 1
};

/// Worker count from PSEUDOBOUND_NUM_WORKERS (default 1), capped by `tasks`.
std::size_t configured_workers(std::size_t tasks, std::size_t requested = 0);

/**
 * Scores every video of a split. Writes `<out>/<video_id>.csv`,
 * `<out>/meta.json` and, when requested, `<out>/heatmaps/<video_id>/NNNNN.png`.
 */
std::vector<ScoreSeries> score_split(const Autoencoder &model, const VideoDataset &videos,
                                     const std::filesystem::path &out_dir,
                                     const ScoreOptions &options);

} // namespace pseudobound
