// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "pseudobound/tensor.hpp"

namespace pseudobound {

struct FrameGeometry {
  std::size_t channels = 1;
  std::size_t height = 256;
  std::size_t width = 256;

  Shape shape() const { return {channels, height, width}; }
  std::size_t numel() const { return channels * height * width; }
  friend bool operator==(const FrameGeometry &, const FrameGeometry &) = default;
};

/// Affine map of raw 8-bit intensities onto the model range: v / 127.5 - 1.
constexpr double normalize_pixel(double raw) { return raw / 127.5 - 1.0; }
constexpr double denormalize_pixel(double value) { return (value + 1.0) * 127.5; }

/// Decodes an image file into a C x H x W tensor in [-1, 1]. Colour inputs
/// are reduced with BT.601 luma weights when C = 1; resizing is bilinear.
/// Throws LoadError.
Tensor read_image(const std::filesystem::path &path, const FrameGeometry &geometry);

/// Same conversion for an in-memory 8-bit interleaved image (H x W x channels,
/// RGB order when channels = 3).
Tensor convert_image(std::span<const unsigned char> pixels, std::size_t height,
                     std::size_t width, std::size_t channels,
                     const FrameGeometry &geometry);

/// Writes a C x H x W tensor in [-1, 1] as an 8-bit PNG (values clamped).
void write_png(const std::filesystem::path &path, const Tensor &frame);

/// Writes a [0, 1] map (H x W or 1 x H x W) as an 8-bit grayscale PNG.
void write_unit_png(const std::filesystem::path &path, const Tensor &map);

/// Tiles rows of frames (each C x H x W in [-1, 1]) into one PNG with a
/// one-pixel separator.
void write_png_grid(const std::filesystem::path &path,
                    const std::vector<std::vector<Tensor>> &rows);

} // namespace pseudobound
