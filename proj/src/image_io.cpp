// SPDX-License-Identifier: Apache-2.0
#include "pseudobound/image_io.hpp"

#include <algorithm>
#include <cmath>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "pseudobound/error.hpp"

namespace pseudobound {

namespace {

/// `raw` is CV_32FC{1,3,4} holding 0..255 intensities in BGR(A) order.
Tensor from_float_mat(const cv::Mat &raw, const FrameGeometry &g) {
  std::vector<cv::Mat> planes;
  cv::split(raw, planes);
  std::vector<cv::Mat> wanted;
  if (g.channels == 1) {
    if (planes.size() >= 3) {
      // BT.601 luma on the unrounded float intensities.
      wanted.push_back(0.299f * planes[2] + 0.587f * planes[1] + 0.114f * planes[0]);
    } else {
      wanted.push_back(planes[0]);
    }
  } else if (g.channels == 3) {
    if (planes.size() >= 3) {
      wanted = {planes[2], planes[1], planes[0]};
    } else {
      wanted = {planes[0], planes[0], planes[0]};
    }
  } else {
    throw LoadError(LoadError::Kind::unreadable_frame,
                    "only 1- or 3-channel frames are supported");
  }

  Tensor out(g.shape());
  const cv::Size target(static_cast<int>(g.width), static_cast<int>(g.height));
  for (std::size_t c = 0; c < wanted.size(); ++c) {
    cv::Mat resized;
    if (wanted[c].size() == target)
      resized = wanted[c];
    else
      cv::resize(wanted[c], resized, target, 0, 0, cv::INTER_LINEAR);
    float *dst = out.data() + c * g.height * g.width;
    for (int y = 0; y < resized.rows; ++y) {
      const float *row = resized.ptr<float>(y);
      for (int x = 0; x < resized.cols; ++x) {
        const double v = normalize_pixel(row[x]);
        *dst++ = static_cast<float>(std::clamp(v, -1.0, 1.0));
      }
    }
  }
  return out;
}

cv::Mat to_u8_mats(const Tensor &frame) {
  if (frame.rank() != 3 || (frame.dim(0) != 1 && frame.dim(0) != 3))
    throw ShapeError("expected a 1 x H x W or 3 x H x W frame, got " +
                     shape_to_string(frame.shape()));
  const int c = static_cast<int>(frame.dim(0));
  const int h = static_cast<int>(frame.dim(1));
  const int w = static_cast<int>(frame.dim(2));
  cv::Mat out(h, w, c == 1 ? CV_8UC1 : CV_8UC3);
  for (int y = 0; y < h; ++y) {
    auto *row = out.ptr<unsigned char>(y);
    for (int x = 0; x < w; ++x)
      for (int k = 0; k < c; ++k) {
        // RGB tensor -> BGR Mat.
        const int src_channel = c == 1 ? 0 : 2 - k;
        const double v =
            denormalize_pixel(frame[(std::size_t(src_channel) * h + y) * w + x]);
        row[x * c + k] = static_cast<unsigned char>(std::clamp(std::lround(v), 0L, 255L));
      }
  }
  return out;
}

void write_mat(const std::filesystem::path &path, const cv::Mat &mat) {
  if (path.has_parent_path())
    std::filesystem::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), mat))
    throw Error("cannot write image " + path.string());
}

} // namespace

Tensor read_image(const std::filesystem::path &path, const FrameGeometry &geometry) {
  if (!std::filesystem::exists(path))
    throw LoadError(LoadError::Kind::missing_path, "no such image: " + path.string());
  cv::Mat img = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (img.empty())
    throw LoadError(LoadError::Kind::unreadable_frame, "cannot decode " + path.string());
  cv::Mat f;
  const double scale = img.depth() == CV_16U ? 1.0 / 257.0 : 1.0;
  img.convertTo(f, CV_32F, scale);
  return from_float_mat(f, geometry);
}

Tensor convert_image(std::span<const unsigned char> pixels, std::size_t height,
                     std::size_t width, std::size_t channels,
                     const FrameGeometry &geometry) {
  if (pixels.size() != height * width * channels || (channels != 1 && channels != 3))
    throw ShapeError("convert_image: inconsistent pixel buffer");
  cv::Mat src(static_cast<int>(height), static_cast<int>(width),
              channels == 1 ? CV_8UC1 : CV_8UC3,
              const_cast<unsigned char *>(pixels.data()));
  cv::Mat f;
  src.convertTo(f, CV_32F);
  if (channels == 3)
    cv::cvtColor(f, f, cv::COLOR_RGB2BGR);
  return from_float_mat(f, geometry);
}

void write_png(const std::filesystem::path &path, const Tensor &frame) {
  write_mat(path, to_u8_mats(frame));
}

void write_unit_png(const std::filesystem::path &path, const Tensor &map) {
  const std::size_t h = map.rank() == 3 ? map.dim(1) : map.dim(0);
  const std::size_t w = map.rank() == 3 ? map.dim(2) : map.dim(1);
  if (map.size() != h * w)
    throw ShapeError("write_unit_png expects a single-channel map");
  cv::Mat out(static_cast<int>(h), static_cast<int>(w), CV_8UC1);
  for (std::size_t i = 0; i < map.size(); ++i)
    out.data[i] = static_cast<unsigned char>(
        std::clamp(std::lround(double(map[i]) * 255.0), 0L, 255L));
  write_mat(path, out);
}

void write_png_grid(const std::filesystem::path &path,
                    const std::vector<std::vector<Tensor>> &rows) {
  if (rows.empty() || rows.front().empty())
    throw ShapeError("write_png_grid needs at least one frame");
  const Shape cell = rows.front().front().shape();
  std::size_t cols = 0;
  for (const auto &r : rows)
    cols = std::max(cols, r.size());
  const int h = static_cast<int>(cell.at(1)), w = static_cast<int>(cell.at(2));
  const int type = cell.at(0) == 1 ? CV_8UC1 : CV_8UC3;
  cv::Mat canvas(static_cast<int>(rows.size()) * (h + 1) - 1,
                 static_cast<int>(cols) * (w + 1) - 1, type, cv::Scalar::all(255));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c) {
      require_same_shape(rows[r][c].shape(), cell, "write_png_grid");
      cv::Mat tile = to_u8_mats(rows[r][c]);
      tile.copyTo(canvas(cv::Rect(static_cast<int>(c) * (w + 1),
                                  static_cast<int>(r) * (h + 1), w, h)));
    }
  write_mat(path, canvas);
}

} // namespace pseudobound
