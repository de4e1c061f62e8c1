// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace pseudobound {

/// Per-frame binary labels of one test video (0 normal, 1 anomalous),
/// index 0 holding frame 1.
using FrameLabels = std::vector<std::uint8_t>;

/// Ground truth for a whole test split, keyed by video id.
using GroundTruth = std::map<std::string, FrameLabels>;

/**
 * Canonical on-disk format: one `<video_id>.txt` per test video holding the
 * 0/1 labels separated by whitespace or commas.
 */
FrameLabels read_labels(const std::filesystem::path &path);
void write_labels(const std::filesystem::path &path, const FrameLabels &labels);

GroundTruth read_ground_truth(const std::filesystem::path &dir);
void write_ground_truth(const std::filesystem::path &dir, const GroundTruth &gt);

/// Converts 1-based inclusive anomalous frame ranges (the UCSD-style
/// `gt_frame = [61:180]` annotation) into labels of the given length.
FrameLabels labels_from_ranges(const std::vector<std::pair<std::size_t, std::size_t>> &ranges,
                               std::size_t length);

/// Parses a UCSD-style MATLAB annotation file containing lines such as
/// `TestVideoFile{3}.gt_frame = [1:146];`. Videos are named `Test001`, ...
/// and sized from `lengths` (id -> frame count).
GroundTruth parse_ucsd_annotation(const std::filesystem::path &m_file,
                                  const std::map<std::string, std::size_t> &lengths);

/// Reads a 1-D NumPy `.npy` array (bool, uint8, int32/64, float32/64) of
/// per-frame labels, as shipped for ShanghaiTech test frame masks.
FrameLabels read_npy_labels(const std::filesystem::path &path);

/// Loads any supported layout: a directory of canonical `.txt` files or of
/// `.npy` arrays, or a UCSD `.m` annotation (sized from `lengths`).
GroundTruth load_ground_truth(const std::filesystem::path &path,
                              const std::map<std::string, std::size_t> &lengths);

} // namespace pseudobound
