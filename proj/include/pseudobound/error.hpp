// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace pseudobound {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Malformed or out-of-bounds configuration values.
class ConfigError : public Error {
public:
  using Error::Error;
};

/// Tensor or clip shapes that do not agree.
class ShapeError : public Error {
public:
  using Error::Error;
};

/// Frame or clip indices outside the video.
class OutOfRangeError : public Error {
public:
  using Error::Error;
};

/// Failure while reading frames or videos from disk.
class LoadError : public Error {
public:
  enum class Kind { missing_path, unreadable_frame, empty_video };

  LoadError(Kind kind, const std::string &what) : Error(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

private:
  Kind kind_;
};

/// A pseudo-anomaly synthesizer cannot be applied to the given video.
class InfeasibleError : public Error {
public:
  using Error::Error;
};

/// Missing, truncated, corrupt, or mismatched checkpoint.
class CheckpointError : public Error {
public:
  using Error::Error;
};

/// Evaluation inputs are inconsistent (missing videos, misaligned labels,
/// single-class ground truth).
class EvalError : public Error {
public:
  using Error::Error;
};

/// Training diverged (non-finite loss) or cannot start.
class TrainingError : public Error {
public:
  using Error::Error;
};

} // namespace pseudobound
