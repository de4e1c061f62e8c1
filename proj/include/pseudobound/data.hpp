// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <filesystem>
#include <list>
#include <memory>
#include <mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "pseudobound/image_io.hpp"
#include "pseudobound/random.hpp"
#include "pseudobound/tensor.hpp"

namespace pseudobound {

/// One C x H x W frame with values in [-1, 1].
struct Frame {
  Tensor pixels;

  FrameGeometry geometry() const {
    return {pixels.dim(0), pixels.dim(1), pixels.dim(2)};
  }
};

/// Ordered frames of one video. External frame indices are 1-based.
struct Video {
  std::string id;
  std::vector<Frame> frames;

  std::size_t length() const noexcept { return frames.size(); }
  /// 1-based access; throws OutOfRangeError.
  const Frame &frame(std::size_t index) const;
  FrameGeometry geometry() const;
};

/**
 * A T x C x H x W sequence of frames in [-1, 1].
 *
 * `source_indices` records which 1-based video frames the clip was built
 * from (one entry per clip frame) when that mapping exists; synthesizers
 * that blend content leave it as the index path of their primary source.
 */
struct Clip {
  Tensor data;
  std::string source_video;
  std::size_t start_index = 1;
  std::vector<std::size_t> source_indices;

  std::size_t frames() const { return data.dim(0); }
  FrameGeometry geometry() const { return {data.dim(1), data.dim(2), data.dim(3)}; }
  /// Copy of the i-th (0-based) clip frame.
  Frame frame(std::size_t i) const;
};

/// Builds a clip from explicit 1-based source frame indices.
Clip gather_clip(const Video &video, const std::vector<std::size_t> &indices);

/// Directory of image files (lexicographic order) or a video file.
/// Throws LoadError (missing path, unreadable frame, zero frames).
Video load_video(const std::filesystem::path &path, const FrameGeometry &geometry);

/// Sorted image file paths of a frame directory.
std::vector<std::filesystem::path> list_frame_files(const std::filesystem::path &dir);

/// Frames (I_n, ..., I_{n+T-1}); n is 1-based. Throws OutOfRangeError when
/// n + T - 1 exceeds the video length.
Clip sample_normal_clip(const Video &video, std::size_t n, std::size_t frames);

/// Uniformly random start n over all valid positions.
Clip sample_random_normal_clip(const Video &video, std::size_t frames, Rng &rng);

/// Middle element of a window starting at 1-based frame `start`.
constexpr std::size_t middle_frame_index(std::size_t start, std::size_t frames) {
  return start + frames / 2;
}

struct Window {
  Clip clip;
  std::size_t middle_index; // 1-based index into the source video
};

/**
 * Sliding windows of length T over a video, starting at i = 1 .. l - T + 1.
 * Clips are materialized on access so long videos stay cheap.
 */
class SlidingWindows {
public:
  /// Throws OutOfRangeError when the video is shorter than T.
  SlidingWindows(const Video &video, std::size_t frames);

  std::size_t size() const noexcept { return count_; }
  /// k-th window, 0-based.
  Window operator[](std::size_t k) const;
  std::size_t middle_index(std::size_t k) const {
    return middle_frame_index(k + 1, frames_);
  }

private:
  const Video *video_;
  std::size_t frames_;
  std::size_t count_;
};

/// Convenience materialization of every window.
std::vector<Window> sliding_windows(const Video &video, std::size_t frames);

/**
 * A split (`<root>/<split>/frames/<video_id>/...`) whose videos are decoded
 * lazily and kept in a bounded LRU cache. Safe for concurrent readers.
 */
class VideoDataset {
public:
  VideoDataset(std::filesystem::path frames_dir, FrameGeometry geometry,
               std::size_t cache_capacity = 16);

  static VideoDataset open(const std::filesystem::path &root, const std::string &split,
                           FrameGeometry geometry, std::size_t cache_capacity = 16);

  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  const std::string &id(std::size_t i) const { return entries_.at(i).id; }
  /// Frame count without decoding the video.
  std::size_t length(std::size_t i) const { return entries_.at(i).frame_count; }
  const FrameGeometry &geometry() const noexcept { return geometry_; }

  std::shared_ptr<const Video> video(std::size_t i) const;
  std::shared_ptr<const Video> video(const std::string &id) const;
  std::size_t index_of(const std::string &id) const;

private:
  struct Entry {
    std::string id;
    std::filesystem::path path;
    std::size_t frame_count;
  };

  std::filesystem::path dir_;
  FrameGeometry geometry_;
  std::vector<Entry> entries_;
  std::size_t capacity_;

  std::unique_ptr<std::mutex> mutex_ = std::make_unique<std::mutex>(); // keeps the class movable
  mutable std::list<std::size_t> lru_;
  mutable std::unordered_map<std::size_t,
                             std::pair<std::shared_ptr<const Video>,
                                       std::list<std::size_t>::iterator>>
      cache_;
};

} // namespace pseudobound
