// SPDX-License-Identifier: Apache-2.0
#include "pseudobound/data.hpp"

#include <algorithm>
#include <cctype>

#include <opencv2/core.hpp>
#include <opencv2/imgproc.hpp>
#include <opencv2/videoio.hpp>

#include "pseudobound/error.hpp"

namespace pseudobound {

namespace fs = std::filesystem;

const Frame &Video::frame(std::size_t index) const {
  if (index < 1 || index > frames.size())
    throw OutOfRangeError("frame " + std::to_string(index) + " outside video '" + id +
                          "' of length " + std::to_string(frames.size()));
  return frames[index - 1];
}

FrameGeometry Video::geometry() const {
  if (frames.empty())
    throw LoadError(LoadError::Kind::empty_video, "video '" + id + "' has no frames");
  return frames.front().geometry();
}

Frame Clip::frame(std::size_t i) const {
  const Shape s{data.dim(1), data.dim(2), data.dim(3)};
  const auto src = data.slice(i);
  return Frame{Tensor(s, std::vector<float>(src.begin(), src.end()))};
}

Clip gather_clip(const Video &video, const std::vector<std::size_t> &indices) {
  const FrameGeometry g = video.geometry();
  Clip clip;
  clip.data = Tensor({indices.size(), g.channels, g.height, g.width});
  clip.source_video = video.id;
  clip.start_index = indices.empty() ? 1 : indices.front();
  clip.source_indices = indices;
  for (std::size_t t = 0; t < indices.size(); ++t) {
    const auto &px = video.frame(indices[t]).pixels;
    std::copy(px.begin(), px.end(), clip.data.slice(t).begin());
  }
  return clip;
}

namespace {

bool is_image_file(const fs::path &p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".jpg" || ext == ".jpeg" || ext == ".png" || ext == ".bmp" ||
         ext == ".tif" || ext == ".tiff" || ext == ".pgm" || ext == ".ppm";
}

Video decode_video_file(const fs::path &path, const FrameGeometry &geometry) {
  cv::VideoCapture cap(path.string());
  if (!cap.isOpened())
    throw LoadError(LoadError::Kind::unreadable_frame, "cannot open video " + path.string());
  Video video;
  video.id = path.stem().string();
  cv::Mat bgr;
  while (cap.read(bgr)) {
    cv::Mat rgb;
    cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
    const auto *p = rgb.ptr<unsigned char>(0);
    video.frames.push_back(Frame{convert_image(
        std::span<const unsigned char>(p, rgb.total() * rgb.channels()),
        static_cast<std::size_t>(rgb.rows), static_cast<std::size_t>(rgb.cols),
        static_cast<std::size_t>(rgb.channels()), geometry)});
  }
  if (video.frames.empty())
    throw LoadError(LoadError::Kind::empty_video, "video has no frames: " + path.string());
  return video;
}

} // namespace

std::vector<fs::path> list_frame_files(const fs::path &dir) {
  std::vector<fs::path> files;
  for (const auto &entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && is_image_file(entry.path()))
      files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  return files;
}

Video load_video(const fs::path &path, const FrameGeometry &geometry) {
  if (!fs::exists(path))
    throw LoadError(LoadError::Kind::missing_path, "no such video: " + path.string());
  if (!fs::is_directory(path))
    return decode_video_file(path, geometry);

  Video video;
  video.id = path.filename().string();
  for (const auto &file : list_frame_files(path))
    video.frames.push_back(Frame{read_image(file, geometry)});
  if (video.frames.empty())
    throw LoadError(LoadError::Kind::empty_video,
                    "no frame images in " + path.string());
  return video;
}

Clip sample_normal_clip(const Video &video, std::size_t n, std::size_t frames) {
  if (frames == 0)
    throw ConfigError("clip length must be positive");
  if (n < 1 || n + frames - 1 > video.length())
    throw OutOfRangeError("clip [" + std::to_string(n) + ", " +
                          std::to_string(n + frames - 1) + "] outside video '" +
                          video.id + "' of length " + std::to_string(video.length()));
  std::vector<std::size_t> idx(frames);
  for (std::size_t t = 0; t < frames; ++t)
    idx[t] = n + t;
  return gather_clip(video, idx);
}

Clip sample_random_normal_clip(const Video &video, std::size_t frames, Rng &rng) {
  if (video.length() < frames)
    throw OutOfRangeError("video '" + video.id + "' shorter than clip length " +
                          std::to_string(frames));
  const auto n = static_cast<std::size_t>(
      rng.uniform_int(1, static_cast<long long>(video.length() - frames + 1)));
  return sample_normal_clip(video, n, frames);
}

SlidingWindows::SlidingWindows(const Video &video, std::size_t frames)
    : video_(&video), frames_(frames) {
  if (frames == 0 || video.length() < frames)
    throw OutOfRangeError("video '" + video.id + "' (length " +
                          std::to_string(video.length()) +
                          ") is shorter than the window length " +
                          std::to_string(frames));
  count_ = video.length() - frames + 1;
}

Window SlidingWindows::operator[](std::size_t k) const {
  if (k >= count_)
    throw OutOfRangeError("window " + std::to_string(k) + " out of range");
  return Window{sample_normal_clip(*video_, k + 1, frames_), middle_index(k)};
}

std::vector<Window> sliding_windows(const Video &video, std::size_t frames) {
  SlidingWindows windows(video, frames);
  std::vector<Window> out;
  out.reserve(windows.size());
  for (std::size_t k = 0; k < windows.size(); ++k)
    out.push_back(windows[k]);
  return out;
}

// ---------------------------------------------------------- VideoDataset

VideoDataset::VideoDataset(fs::path frames_dir, FrameGeometry geometry,
                           std::size_t cache_capacity)
    : dir_(std::move(frames_dir)), geometry_(geometry),
      capacity_(std::max<std::size_t>(1, cache_capacity)) {
  if (!fs::is_directory(dir_))
    throw LoadError(LoadError::Kind::missing_path,
                    "no frames directory: " + dir_.string());
  std::vector<fs::path> items;
  for (const auto &e : fs::directory_iterator(dir_))
    if (e.is_directory() || (e.is_regular_file() && !is_image_file(e.path())))
      items.push_back(e.path());
  std::sort(items.begin(), items.end());
  for (const auto &p : items) {
    if (fs::is_directory(p)) {
      const std::size_t n = list_frame_files(p).size();
      if (n > 0)
        entries_.push_back({p.filename().string(), p, n});
    } else {
      cv::VideoCapture cap(p.string());
      if (!cap.isOpened())
        continue;
      const auto n = static_cast<std::size_t>(
          std::max(0.0, cap.get(cv::CAP_PROP_FRAME_COUNT)));
      entries_.push_back({p.stem().string(), p, n});
    }
  }
}

VideoDataset VideoDataset::open(const fs::path &root, const std::string &split,
                                FrameGeometry geometry, std::size_t cache_capacity) {
  return VideoDataset(root / split / "frames", geometry, cache_capacity);
}

std::size_t VideoDataset::index_of(const std::string &id) const {
  for (std::size_t i = 0; i < entries_.size(); ++i)
    if (entries_[i].id == id)
      return i;
  throw OutOfRangeError("no video '" + id + "' in " + dir_.string());
}

std::shared_ptr<const Video> VideoDataset::video(const std::string &id) const {
  return video(index_of(id));
}

std::shared_ptr<const Video> VideoDataset::video(std::size_t i) const {
  {
    std::lock_guard lock(*mutex_);
    if (auto it = cache_.find(i); it != cache_.end()) {
      lru_.splice(lru_.begin(), lru_, it->second.second);
      return it->second.first;
    }
  }
  // Decode outside the lock; a concurrent duplicate decode is harmless.
  auto loaded = std::make_shared<const Video>([&] {
    Video v = load_video(entries_.at(i).path, geometry_);
    v.id = entries_[i].id;
    return v;
  }());

  std::lock_guard lock(*mutex_);
  if (auto it = cache_.find(i); it != cache_.end())
    return it->second.first;
  lru_.push_front(i);
  cache_.emplace(i, std::make_pair(loaded, lru_.begin()));
  while (cache_.size() > capacity_) {
    cache_.erase(lru_.back());
    lru_.pop_back();
  }
  return loaded;
}

} // namespace pseudobound
