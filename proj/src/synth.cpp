// SPDX-License-Identifier: Apache-2.0
#include "pseudobound/synth.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>

#include <spdlog/spdlog.h>

#include "pseudobound/error.hpp"

namespace pseudobound {

namespace {

template <typename E, std::size_t N>
E parse_enum(const std::string &s, const std::array<const char *, N> &names,
             const char *what) {
  for (std::size_t i = 0; i < N; ++i)
    if (s == names[i])
      return static_cast<E>(i);
  std::string allowed;
  for (std::size_t i = 0; i < N; ++i)
    allowed += (i ? ", " : "") + std::string(names[i]);
  throw ConfigError("unknown " + std::string(what) + " '" + s + "' (expected one of " +
                    allowed + ")");
}

constexpr std::array<const char *, 5> kKindNames{"skip", "repeat", "patch", "fusion", "noise"};
constexpr std::array<const char *, 3> kTechniqueNames{"smoothmix_s", "smoothmix_c", "cutmix"};
constexpr std::array<const char *, 3> kIntruderNames{"image_folder", "self_dataset",
                                                     "video_dataset"};

double uniform_closed(Rng &rng, double lo, double hi) {
  return hi > lo ? rng.uniform(lo, hi) : lo;
}

} // namespace

std::string to_string(PseudoKind kind) { return kKindNames.at(std::size_t(kind)); }
std::string to_string(PatchTechnique t) { return kTechniqueNames.at(std::size_t(t)); }
std::string to_string(IntruderKind k) { return kIntruderNames.at(std::size_t(k)); }

PseudoKind parse_pseudo_kind(const std::string &s) {
  return parse_enum<PseudoKind>(s, kKindNames, "pseudo-anomaly kind");
}
PatchTechnique parse_patch_technique(const std::string &s) {
  return parse_enum<PatchTechnique>(s, kTechniqueNames, "patching technique");
}
IntruderKind parse_intruder_kind(const std::string &s) {
  return parse_enum<IntruderKind>(s, kIntruderNames, "intruder source");
}

PseudoSpec PseudoSpec::make(PseudoKind kind, double probability) {
  PseudoSpec spec;
  spec.probability = probability;
  switch (kind) {
  case PseudoKind::skip: spec.params = SkipParams{}; break;
  case PseudoKind::repeat: spec.params = RepeatParams{}; break;
  case PseudoKind::patch: spec.params = PatchParams{}; break;
  case PseudoKind::fusion: spec.params = FusionParams{}; break;
  case PseudoKind::noise: spec.params = NoiseParams{}; break;
  }
  return spec;
}

void PseudoSpec::validate() const {
  if (!(probability >= 0.0 && probability <= 1.0))
    throw ConfigError("pseudo probability must lie in [0, 1]");
  auto check_set = [](const std::vector<std::size_t> &set, const char *name) {
    if (set.empty())
      throw ConfigError(std::string(name) + " must not be empty");
    for (auto v : set)
      if (v < 2)
        throw ConfigError(std::string(name) + " members must be >= 2");
  };
  if (const auto *skip = std::get_if<SkipParams>(&params))
    check_set(skip->strides, "skip s");
  if (const auto *rep = std::get_if<RepeatParams>(&params))
    check_set(rep->repeats, "repeat r");
  if (const auto *patch = std::get_if<PatchParams>(&params)) {
    if (!(patch->alpha > 0.0 && patch->alpha <= 1.0))
      throw ConfigError("patch alpha must lie in (0, 1]");
    if (!(patch->beta >= 0.0))
      throw ConfigError("patch beta must be non-negative");
  }
  if (const auto *noise = std::get_if<NoiseParams>(&params))
    if (!(noise->sigma >= 0.0))
      throw ConfigError("noise sigma must be non-negative");
}

void validate_specs(std::span<const PseudoSpec> specs) {
  double total = 0.0;
  for (const auto &s : specs) {
    s.validate();
    total += s.probability;
  }
  if (total > 1.0 + 1e-12)
    throw ConfigError("pseudo probabilities sum to " + std::to_string(total) +
                      ", which exceeds 1");
}

// ------------------------------------------------------------ temporal

Clip skip_frames(const Video &video, std::size_t n, std::size_t stride, std::size_t frames) {
  std::vector<std::size_t> idx(frames);
  for (std::size_t t = 0; t < frames; ++t)
    idx[t] = n + t * stride;
  if (n < 1 || idx.back() > video.length())
    throw OutOfRangeError("skip clip overruns video '" + video.id + "'");
  return gather_clip(video, idx);
}

Clip synth_skip(const Video &video, std::size_t frames,
                std::span<const std::size_t> strides, Rng &rng) {
  std::vector<std::size_t> feasible;
  for (auto s : strides)
    if (1 + (frames - 1) * s <= video.length())
      feasible.push_back(s);
  if (feasible.empty())
    throw InfeasibleError("no skip stride fits video '" + video.id + "' of length " +
                          std::to_string(video.length()));
  const std::size_t s = feasible[static_cast<std::size_t>(
      rng.uniform_int(0, static_cast<long long>(feasible.size()) - 1))];
  const auto last_start = static_cast<long long>(video.length() - (frames - 1) * s);
  const auto n = static_cast<std::size_t>(rng.uniform_int(1, last_start));
  return skip_frames(video, n, s, frames);
}

Clip repeat_frames(const Video &video, std::size_t n, std::size_t repeat, std::size_t frames) {
  std::vector<std::size_t> idx(frames);
  for (std::size_t t = 0; t < frames; ++t)
    idx[t] = n + t / repeat;
  if (n < 1 || idx.back() > video.length())
    throw OutOfRangeError("repeat clip overruns video '" + video.id + "'");
  return gather_clip(video, idx);
}

Clip synth_repeat(const Video &video, std::size_t frames,
                  std::span<const std::size_t> repeats, Rng &rng) {
  std::vector<std::size_t> feasible;
  for (auto r : repeats)
    if (1 + (frames - 1) / r <= video.length())
      feasible.push_back(r);
  if (feasible.empty())
    throw InfeasibleError("no repeat factor fits video '" + video.id + "'");
  const std::size_t r = feasible[static_cast<std::size_t>(
      rng.uniform_int(0, static_cast<long long>(feasible.size()) - 1))];
  const auto last_start = static_cast<long long>(video.length() - (frames - 1) / r);
  const auto n = static_cast<std::size_t>(rng.uniform_int(1, last_start));
  return repeat_frames(video, n, r, frames);
}

// ------------------------------------------------------------ masks

Tensor rasterize_mask(std::size_t height, std::size_t width, Point center,
                      double patch_width, double patch_height, PatchTechnique technique) {
  Tensor mask({height, width});
  const double hw = patch_width / 2.0, hh = patch_height / 2.0;
  const double tau = std::min(patch_width, patch_height) / 4.0;
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x) {
      const double dx = double(x) - center.x, dy = double(y) - center.y;
      double g = 0.0;
      switch (technique) {
      case PatchTechnique::cutmix:
        g = (double(x) >= center.x - hw && double(x) < center.x + hw &&
             double(y) >= center.y - hh && double(y) < center.y + hh)
                ? 1.0
                : 0.0;
        break;
      case PatchTechnique::smoothmix_c:
        g = std::exp(-(dx * dx / (2.0 * hw * hw) + dy * dy / (2.0 * hh * hh)));
        break;
      case PatchTechnique::smoothmix_s: {
        const double ox = std::max(0.0, std::abs(dx) - hw);
        const double oy = std::max(0.0, std::abs(dy) - hh);
        g = std::exp(-(ox * ox + oy * oy) / (2.0 * tau * tau));
        break;
      }
      }
      mask[y * width + x] = static_cast<float>(g);
    }
  return mask;
}

MaskSequence make_mask_sequence(std::size_t height, std::size_t width,
                                std::vector<Point> centers, double patch_width,
                                double patch_height, PatchTechnique technique) {
  MaskSequence seq;
  seq.patch_width = patch_width;
  seq.patch_height = patch_height;
  seq.technique = technique;
  for (const auto &c : centers)
    seq.masks.push_back(rasterize_mask(height, width, c, patch_width, patch_height, technique));
  seq.centers = std::move(centers);
  return seq;
}

MaskSequence gen_mask_sequence(std::size_t frames, std::size_t height, std::size_t width,
                               double alpha, double beta, PatchTechnique technique,
                               Rng &rng) {
  if (!(alpha > 0.0 && alpha <= 1.0))
    throw ConfigError("patch alpha must lie in (0, 1]");
  if (!(beta >= 0.0))
    throw ConfigError("patch beta must be non-negative");
  const double max_w = alpha * double(width), max_h = alpha * double(height);
  if (max_w < 10.0 || max_h < 10.0)
    throw ConfigError("alpha * frame size must be at least 10 pixels");

  const double w = uniform_closed(rng, 10.0, max_w);
  const double h = uniform_closed(rng, 10.0, max_h);
  const double x_hi = double(width - 1), y_hi = double(height - 1);
  std::vector<Point> centers(frames);
  centers[0] = {uniform_closed(rng, 0.0, x_hi), uniform_closed(rng, 0.0, y_hi)};
  for (std::size_t i = 1; i < frames; ++i) {
    const double dx = uniform_closed(rng, -beta, beta);
    const double dy = uniform_closed(rng, -beta, beta);
    centers[i] = {std::clamp(centers[i - 1].x + dx, 0.0, x_hi),
                  std::clamp(centers[i - 1].y + dy, 0.0, y_hi)};
  }
  return make_mask_sequence(height, width, std::move(centers), w, h, technique);
}

Clip blend_patch(const Clip &normal, const std::vector<Frame> &intruder,
                 const MaskSequence &masks) {
  const std::size_t frames = normal.frames();
  const FrameGeometry g = normal.geometry();
  if (masks.masks.size() != frames)
    throw ShapeError("mask sequence length does not match the clip");
  if (intruder.size() != 1 && intruder.size() != frames)
    throw ShapeError("intruder must provide one frame or one frame per clip frame");
  Clip out = normal;
  const std::size_t plane = g.height * g.width;
  for (std::size_t i = 0; i < frames; ++i) {
    const Tensor &mask = masks.masks[i];
    require_same_shape(mask.shape(), {g.height, g.width}, "blend_patch mask");
    const Tensor &patch = intruder[intruder.size() == 1 ? 0 : i].pixels;
    require_same_shape(patch.shape(), g.shape(), "blend_patch intruder");
    auto dst = out.data.slice(i);
    const auto src = normal.data.slice(i);
    for (std::size_t c = 0; c < g.channels; ++c)
      for (std::size_t p = 0; p < plane; ++p) {
        const float m = mask[p];
        const std::size_t k = c * plane + p;
        const float blended = m * patch[k] + (1.0f - m) * src[k];
        // Rounding must not push the blend outside its two endpoints.
        dst[k] = std::clamp(blended, std::min(patch[k], src[k]), std::max(patch[k], src[k]));
      }
  }
  return out;
}

// ------------------------------------------------------------ intruders

ImageIntruderSource::ImageIntruderSource(const std::filesystem::path &folder) {
  if (!std::filesystem::is_directory(folder))
    throw LoadError(LoadError::Kind::missing_path,
                    "intruder folder not found: " + folder.string());
  for (const auto &e : std::filesystem::recursive_directory_iterator(folder))
    if (e.is_regular_file()) {
      auto ext = e.path().extension().string();
      std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
      if (ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp")
        files_.push_back(e.path());
    }
  std::sort(files_.begin(), files_.end());
  if (files_.empty())
    throw LoadError(LoadError::Kind::empty_video,
                    "intruder folder has no images: " + folder.string());
}

ImageIntruderSource::ImageIntruderSource(std::vector<Frame> images)
    : images_(std::move(images)) {}

std::size_t ImageIntruderSource::size() const {
  return files_.empty() ? images_.size() : files_.size();
}

std::vector<Frame> ImageIntruderSource::draw(std::size_t, const FrameGeometry &geometry,
                                             Rng &rng) const {
  if (size() == 0)
    throw Error("intruder source is empty");
  const auto i = static_cast<std::size_t>(rng.uniform_int(0, (long long)size() - 1));
  if (!files_.empty())
    return {Frame{read_image(files_[i], geometry)}};
  if (images_[i].geometry() != geometry)
    throw ShapeError("in-memory intruder image does not match the clip geometry");
  return {images_[i]};
}

VideoIntruderSource::VideoIntruderSource(std::shared_ptr<const VideoDataset> videos,
                                         bool sequences)
    : videos_(std::move(videos)), sequences_(sequences) {
  if (!videos_)
    throw Error("intruder video dataset is null");
}

std::vector<Frame> VideoIntruderSource::draw(std::size_t frames, const FrameGeometry &geometry,
                                             Rng &rng) const {
  if (videos_->empty())
    throw Error("intruder source is empty");
  if (videos_->geometry() != geometry)
    throw ShapeError("intruder dataset geometry does not match the clip geometry");
  const auto v = videos_->video(
      static_cast<std::size_t>(rng.uniform_int(0, (long long)videos_->size() - 1)));
  if (!sequences_) {
    const auto i = static_cast<std::size_t>(rng.uniform_int(1, (long long)v->length()));
    return {v->frame(i)};
  }
  if (v->length() < frames)
    throw InfeasibleError("intruder video '" + v->id + "' shorter than the clip");
  const auto n = static_cast<std::size_t>(
      rng.uniform_int(1, static_cast<long long>(v->length() - frames + 1)));
  std::vector<Frame> out;
  for (std::size_t t = 0; t < frames; ++t)
    out.push_back(v->frame(n + t));
  return out;
}

std::shared_ptr<const IntruderSource>
make_intruder_source(const IntruderConfig &config, const FrameGeometry &geometry,
                     std::shared_ptr<const VideoDataset> training) {
  switch (config.kind) {
  case IntruderKind::image_folder:
    if (config.location.empty())
      throw ConfigError("image_folder intruder requires a location");
    return std::make_shared<ImageIntruderSource>(config.location);
  case IntruderKind::self_dataset:
    if (config.location.empty()) {
      if (!training)
        throw ConfigError("self_dataset intruder has no training dataset to draw from");
      return std::make_shared<VideoIntruderSource>(std::move(training), false);
    }
    return std::make_shared<VideoIntruderSource>(
        std::make_shared<VideoDataset>(
            VideoDataset::open(config.location, "training", geometry)),
        false);
  case IntruderKind::video_dataset:
    if (config.location.empty())
      throw ConfigError("video_dataset intruder requires a location");
    return std::make_shared<VideoIntruderSource>(
        std::make_shared<VideoDataset>(
            VideoDataset::open(config.location, "training", geometry)),
        true);
  }
  throw ConfigError("unknown intruder kind");
}

Clip synth_patch(const Clip &normal, const IntruderSource &intruder,
                 const MaskSequence &masks, Rng &rng) {
  if (intruder.size() == 0)
    throw Error("intruder source is empty");
  return blend_patch(normal, intruder.draw(normal.frames(), normal.geometry(), rng), masks);
}

// ------------------------------------------------------------ fusion / noise

Clip synth_fusion(const Clip &a, const Clip &b) {
  require_same_shape(a.data.shape(), b.data.shape(), "synth_fusion");
  Clip out = a;
  for (std::size_t i = 0; i < out.data.size(); ++i)
    out.data[i] = (a.data[i] + b.data[i]) / 2.0f;
  return out;
}

Clip synth_noise(const Clip &clip, double sigma, Rng &rng) {
  if (!(sigma >= 0.0))
    throw ConfigError("noise sigma must be non-negative");
  Clip out = clip;
  if (sigma == 0.0)
    return out;
  std::normal_distribution<double> dist(0.0, sigma);
  for (auto &v : out.data)
    v = static_cast<float>(std::clamp(double(v) + dist(rng.engine()), -1.0, 1.0));
  return out;
}

// ------------------------------------------------------------ pool

TrainingPool::TrainingPool(std::shared_ptr<const VideoDataset> dataset, std::size_t frames)
    : dataset_(std::move(dataset)), frames_(frames) {
  if (!dataset_ || dataset_->empty())
    throw TrainingError("training dataset is empty");
  for (std::size_t i = 0; i < dataset_->size(); ++i)
    if (dataset_->length(i) >= frames_)
      usable_.push_back(i);
  if (usable_.empty())
    throw TrainingError("no training video has at least T=" + std::to_string(frames_) +
                        " frames");
}

TrainingPool::TrainingPool(std::vector<Video> videos, std::size_t frames) : frames_(frames) {
  for (auto &v : videos)
    videos_.push_back(std::make_shared<const Video>(std::move(v)));
  if (videos_.empty())
    throw TrainingError("training dataset is empty");
  for (std::size_t i = 0; i < videos_.size(); ++i)
    if (videos_[i]->length() >= frames_)
      usable_.push_back(i);
  if (usable_.empty())
    throw TrainingError("no training video has at least T=" + std::to_string(frames_) +
                        " frames");
}

std::size_t TrainingPool::video_count() const {
  return dataset_ ? dataset_->size() : videos_.size();
}

std::shared_ptr<const Video> TrainingPool::video(std::size_t i) const {
  return dataset_ ? dataset_->video(i) : videos_.at(i);
}

std::shared_ptr<const Video> TrainingPool::random_video(Rng &rng) const {
  const auto k = static_cast<std::size_t>(
      rng.uniform_int(0, static_cast<long long>(usable_.size()) - 1));
  return video(usable_[k]);
}

Clip TrainingPool::normal_clip(Rng &rng) const {
  return sample_random_normal_clip(*random_video(rng), frames_, rng);
}

FrameGeometry TrainingPool::geometry() const {
  return dataset_ ? dataset_->geometry() : videos_.front()->geometry();
}

// ------------------------------------------------------------ selector

InputSelector::InputSelector(std::shared_ptr<const TrainingPool> pool,
                             std::vector<PseudoSpec> specs)
    : pool_(std::move(pool)), specs_(std::move(specs)) {
  if (!pool_)
    throw TrainingError("input selector needs a training pool");
  validate_specs(specs_);
  double acc = 0.0;
  for (const auto &s : specs_) {
    acc += s.probability;
    upper_.push_back(acc);
    std::shared_ptr<const IntruderSource> src;
    if (const auto *patch = std::get_if<PatchParams>(&s.params))
      src = patch->source ? patch->source
                          : make_intruder_source(patch->intruder, pool_->geometry(),
                                                 pool_->dataset());
    intruders_.push_back(std::move(src));
  }
}

std::optional<std::size_t> InputSelector::interval(double u) const {
  for (std::size_t k = 0; k < upper_.size(); ++k)
    if (u < upper_[k] && specs_[k].probability > 0.0)
      return k;
  return std::nullopt;
}

Clip InputSelector::synthesize(std::size_t k, Rng &rng) const {
  const PseudoSpec &spec = specs_.at(k);
  const std::size_t frames = pool_->frames();
  return std::visit(
      [&](const auto &p) -> Clip {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, SkipParams>) {
          return synth_skip(*pool_->random_video(rng), frames, p.strides, rng);
        } else if constexpr (std::is_same_v<P, RepeatParams>) {
          return synth_repeat(*pool_->random_video(rng), frames, p.repeats, rng);
        } else if constexpr (std::is_same_v<P, PatchParams>) {
          Clip normal = pool_->normal_clip(rng);
          const FrameGeometry g = normal.geometry();
          MaskSequence masks = gen_mask_sequence(frames, g.height, g.width, p.alpha, p.beta,
                                                 p.technique, rng);
          return synth_patch(normal, *intruders_[k], masks, rng);
        } else if constexpr (std::is_same_v<P, FusionParams>) {
          Clip a = pool_->normal_clip(rng);
          Clip b = pool_->normal_clip(rng);
          return synth_fusion(a, b);
        } else {
          return synth_noise(pool_->normal_clip(rng), p.sigma, rng);
        }
      },
      spec.params);
}

Selection InputSelector::select(Rng &select_rng, Rng &data_rng, Rng &synth_rng) const {
  const double u = select_rng.uniform();
  const auto k = interval(u);
  if (!k)
    return {pool_->normal_clip(data_rng), false, std::nullopt};
  try {
    return {synthesize(*k, synth_rng), true, specs_[*k].kind()};
  } catch (const InfeasibleError &e) {
    static std::atomic<bool> warned{false};
    if (!warned.exchange(true))
      spdlog::warn("{}; falling back to a normal clip", e.what());
    else
      spdlog::debug("{}; falling back to a normal clip", e.what());
    return {pool_->normal_clip(data_rng), false, std::nullopt};
  }
}

} // namespace pseudobound
