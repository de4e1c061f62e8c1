// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "pseudobound/data.hpp"
#include "pseudobound/random.hpp"
#include "pseudobound/tensor.hpp"

namespace pseudobound {

enum class PseudoKind { skip, repeat, patch, fusion, noise };
enum class PatchTechnique { smoothmix_s, smoothmix_c, cutmix };
enum class IntruderKind { image_folder, self_dataset, video_dataset };

std::string to_string(PseudoKind kind);
std::string to_string(PatchTechnique technique);
std::string to_string(IntruderKind kind);
PseudoKind parse_pseudo_kind(const std::string &s);
PatchTechnique parse_patch_technique(const std::string &s);
IntruderKind parse_intruder_kind(const std::string &s);

class IntruderSource;

struct SkipParams {
  std::vector<std::size_t> strides{2, 3, 4, 5};
};

struct RepeatParams {
  std::vector<std::size_t> repeats{2, 3};
};

struct IntruderConfig {
  IntruderKind kind = IntruderKind::image_folder;
  std::string location; // image directory or dataset split root
};

struct PatchParams {
  double alpha = 0.5;
  double beta = 25.0; // pixels per frame
  PatchTechnique technique = PatchTechnique::smoothmix_s;
  IntruderConfig intruder;
  /// Pre-built source; takes precedence over `intruder` when set.
  std::shared_ptr<const IntruderSource> source;
};

struct FusionParams {};

struct NoiseParams {
  double sigma = 0.05;
};

/**
 * One pseudo-anomaly type with its sampling probability. The variant index
 * matches PseudoKind.
 */
struct PseudoSpec {
  double probability = 0.01;
  std::variant<SkipParams, RepeatParams, PatchParams, FusionParams, NoiseParams> params;

  PseudoKind kind() const { return static_cast<PseudoKind>(params.index()); }
  /// Throws ConfigError on out-of-range hyperparameters.
  void validate() const;

  static PseudoSpec make(PseudoKind kind, double probability = 0.01);
};

/// Per-spec checks plus the bound sum(p_k) <= 1.
void validate_specs(std::span<const PseudoSpec> specs);

// ------------------------------------------------------------ temporal

/// (I_n, I_{n+s}, ..., I_{n+(T-1)s}); throws OutOfRangeError if it overruns.
Clip skip_frames(const Video &video, std::size_t n, std::size_t stride, std::size_t frames);

/// Uniform feasible stride from `strides`, then a uniform feasible start.
/// Throws InfeasibleError when no stride fits the video.
Clip synth_skip(const Video &video, std::size_t frames,
                std::span<const std::size_t> strides, Rng &rng);

/// (I_{n + floor(t/r)}) for t = 0..T-1.
Clip repeat_frames(const Video &video, std::size_t n, std::size_t repeat, std::size_t frames);

Clip synth_repeat(const Video &video, std::size_t frames,
                  std::span<const std::size_t> repeats, Rng &rng);

// ------------------------------------------------------------ patch

struct Point {
  double x = 0.0;
  double y = 0.0;
};

/// Per-frame soft or binary masks with a per-sequence patch size.
struct MaskSequence {
  std::vector<Tensor> masks; // each H x W in [0, 1]
  std::vector<Point> centers;
  double patch_width = 0.0;
  double patch_height = 0.0;
  PatchTechnique technique = PatchTechnique::smoothmix_s;
};

/**
 * Rasterizes one mask. cutmix: 1 on the half-open box
 * [cx - w/2, cx + w/2) x [cy - h/2, cy + h/2). smoothmix_c: anisotropic
 * Gaussian with standard deviations w/2, h/2. smoothmix_s: Gaussian falloff
 * of the distance to that box with scale min(w, h)/4.
 */
Tensor rasterize_mask(std::size_t height, std::size_t width, Point center,
                      double patch_width, double patch_height, PatchTechnique technique);

/// Masks for explicit centers and size (all frames share the size).
MaskSequence make_mask_sequence(std::size_t height, std::size_t width,
                                std::vector<Point> centers, double patch_width,
                                double patch_height, PatchTechnique technique);

/// Random size in [10, alpha W] x [10, alpha H], uniform first center, then a
/// random walk with per-axis steps in [-beta, beta], clamped to the frame.
MaskSequence gen_mask_sequence(std::size_t frames, std::size_t height, std::size_t width,
                               double alpha, double beta, PatchTechnique technique,
                               Rng &rng);

/// G_i * I^A_i + (1 - G_i) * X^N_i. `intruder` holds one frame (reused for
/// every clip frame) or exactly T frames.
Clip blend_patch(const Clip &normal, const std::vector<Frame> &intruder,
                 const MaskSequence &masks);

/**
 * Source of content absent from the normal data. Image sources return one
 * frame per draw; sequence sources return T consecutive frames. Returned
 * frames are already in the requested geometry and in [-1, 1].
 */
class IntruderSource {
public:
  virtual ~IntruderSource() = default;
  virtual bool is_sequence() const = 0;
  virtual std::size_t size() const = 0;
  virtual std::vector<Frame> draw(std::size_t frames, const FrameGeometry &geometry,
                                  Rng &rng) const = 0;
};

/// Still images, either decoded lazily from a folder or given in memory.
class ImageIntruderSource final : public IntruderSource {
public:
  /// Throws LoadError when the folder holds no images.
  explicit ImageIntruderSource(const std::filesystem::path &folder);
  explicit ImageIntruderSource(std::vector<Frame> images);

  bool is_sequence() const override { return false; }
  std::size_t size() const override;
  std::vector<Frame> draw(std::size_t frames, const FrameGeometry &geometry,
                          Rng &rng) const override;

private:
  std::vector<std::filesystem::path> files_;
  std::vector<Frame> images_;
};

/// Random frames (self_dataset) or random consecutive sequences
/// (video_dataset) from a video collection.
class VideoIntruderSource final : public IntruderSource {
public:
  VideoIntruderSource(std::shared_ptr<const VideoDataset> videos, bool sequences);

  bool is_sequence() const override { return sequences_; }
  std::size_t size() const override { return videos_->size(); }
  std::vector<Frame> draw(std::size_t frames, const FrameGeometry &geometry,
                          Rng &rng) const override;

private:
  std::shared_ptr<const VideoDataset> videos_;
  bool sequences_;
};

/// Builds the source named by an intruder config. `self_dataset` uses
/// `training` when the location is empty.
std::shared_ptr<const IntruderSource>
make_intruder_source(const IntruderConfig &config, const FrameGeometry &geometry,
                     std::shared_ptr<const VideoDataset> training);

/// Draws intruder content and masks, then blends. Throws Error when the
/// source is empty.
Clip synth_patch(const Clip &normal, const IntruderSource &intruder,
                 const MaskSequence &masks, Rng &rng);

// ------------------------------------------------------------ fusion / noise

/// Elementwise mean of two clips of identical shape.
Clip synth_fusion(const Clip &a, const Clip &b);

/// Adds N(0, sigma) per element and clamps to [-1, 1].
Clip synth_noise(const Clip &clip, double sigma, Rng &rng);

// ------------------------------------------------------------ selection

/// Normal training videos the synthesizers draw from.
class TrainingPool {
public:
  TrainingPool(std::shared_ptr<const VideoDataset> dataset, std::size_t frames);
  TrainingPool(std::vector<Video> videos, std::size_t frames);

  std::size_t frames() const noexcept { return frames_; }
  std::size_t video_count() const;
  std::shared_ptr<const Video> video(std::size_t i) const;
  std::shared_ptr<const Video> random_video(Rng &rng) const;
  /// Uniform video (among those at least T long), uniform start.
  Clip normal_clip(Rng &rng) const;
  FrameGeometry geometry() const;
  std::shared_ptr<const VideoDataset> dataset() const { return dataset_; }

private:
  std::shared_ptr<const VideoDataset> dataset_;
  std::vector<std::shared_ptr<const Video>> videos_;
  std::vector<std::size_t> usable_; // videos with length >= T
  std::size_t frames_;
};

struct Selection {
  Clip clip;
  bool is_pseudo = false;
  std::optional<PseudoKind> kind;
};

/**
 * Probabilistic choice between normal data and the configured pseudo
 * anomalies. [0, 1) is split into consecutive intervals of width p_k in
 * declared order; the remainder selects a normal clip.
 *
 * Three streams keep the components independent: the interval draw comes
 * from `select_rng`, normal clips from `data_rng`, and everything a
 * synthesizer samples from `synth_rng`. With no specs the data stream sees
 * exactly the draws of plain normal-clip sampling.
 */
class InputSelector {
public:
  InputSelector(std::shared_ptr<const TrainingPool> pool, std::vector<PseudoSpec> specs);

  const std::vector<PseudoSpec> &specs() const noexcept { return specs_; }
  const TrainingPool &pool() const noexcept { return *pool_; }

  /// Index of the PseudoSpec selected by u in [0, 1), or nullopt for normal data.
  std::optional<std::size_t> interval(double u) const;

  Selection select(Rng &select_rng, Rng &data_rng, Rng &synth_rng) const;
  /// Synthesizes one clip of spec `k`; throws InfeasibleError.
  Clip synthesize(std::size_t k, Rng &synth_rng) const;

private:
  std::shared_ptr<const TrainingPool> pool_;
  std::vector<PseudoSpec> specs_;
  std::vector<std::shared_ptr<const IntruderSource>> intruders_;
  std::vector<double> upper_; // cumulative interval bounds
};

inline Selection select_input(const std::shared_ptr<const TrainingPool> &pool,
                              std::vector<PseudoSpec> specs, Rng &select_rng,
                              Rng &data_rng, Rng &synth_rng) {
  return InputSelector(pool, std::move(specs)).select(select_rng, data_rng, synth_rng);
}

} // namespace pseudobound
