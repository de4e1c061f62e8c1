// SPDX-License-Identifier: Apache-2.0
#include "pseudobound/score.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "pseudobound/error.hpp"

namespace pseudobound {

namespace fs = std::filesystem;

std::string to_string(ScoreMode mode) { return mode == ScoreMode::psnr ? "psnr" : "mse"; }

ScoreMode parse_score_mode(const std::string &s) {
  if (s == "psnr")
    return ScoreMode::psnr;
  if (s == "mse")
    return ScoreMode::mse;
  throw ConfigError("unknown score mode '" + s + "' (expected psnr or mse)");
}

double mse_raw(std::span<const float> x_hat, std::span<const float> x) {
  if (x_hat.size() != x.size())
    throw ShapeError("mse: size mismatch");
  if (x.empty())
    throw ShapeError("mse: empty frame");
  double sum = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = double(x_hat[i]) - double(x[i]);
    sum += d * d;
  }
  return sum / double(x.size());
}

double mse_raw(const Tensor &x_hat, const Tensor &x) {
  require_same_shape(x_hat.shape(), x.shape(), "mse");
  return mse_raw(x_hat.span(), x.span());
}

double psnr_from_mse(double mse) {
  return 10.0 * std::log10(kPsnrPeak * kPsnrPeak / std::max(mse, kPsnrMseFloor));
}

double psnr(const Tensor &x_hat, const Tensor &x) { return psnr_from_mse(mse_raw(x_hat, x)); }

std::vector<double> minmax_normalize(std::span<const double> raw) {
  if (raw.empty())
    throw Error("minmax_normalize: empty score series");
  const auto [lo, hi] = std::minmax_element(raw.begin(), raw.end());
  const double min = *lo, range = *hi - *lo;
  std::vector<double> q(raw.size(), 1.0);
  if (range > 0.0)
    for (std::size_t i = 0; i < raw.size(); ++i)
      q[i] = (raw[i] - min) / range;
  return q;
}

std::vector<double> anomaly_scores(std::span<const double> normalized, ScoreMode mode) {
  std::vector<double> a(normalized.begin(), normalized.end());
  if (mode == ScoreMode::psnr)
    for (double &v : a)
      v = 1.0 - v;
  return a;
}

ScoreSeries make_series(std::string video_id, ScoreMode mode, std::size_t frames,
                        std::size_t video_length, std::vector<std::size_t> covered,
                        std::vector<double> raw) {
  if (covered.size() != raw.size())
    throw ShapeError("score series: index/score count mismatch");
  ScoreSeries s;
  s.video_id = std::move(video_id);
  s.mode = mode;
  s.frames = frames;
  s.video_length = video_length;
  s.covered_indices = std::move(covered);
  s.P = std::move(raw);
  s.Q = minmax_normalize(s.P);
  s.A = anomaly_scores(s.Q, mode);
  return s;
}

ScoreSeries pad_edges(const ScoreSeries &series) {
  if (series.size() == 0 || series.video_length < series.covered_indices.back())
    throw ShapeError("pad_edges: series does not fit its video length");
  ScoreSeries out = series;
  out.covered_indices.clear();
  out.P.clear();
  out.Q.clear();
  out.A.clear();
  const std::size_t first = series.covered_indices.front();
  const std::size_t last = series.covered_indices.back();
  for (std::size_t i = 1; i <= series.video_length; ++i) {
    std::size_t k = 0;
    if (i >= last)
      k = series.size() - 1;
    else if (i > first)
      k = i - first;
    out.covered_indices.push_back(i);
    out.P.push_back(series.P[k]);
    out.Q.push_back(series.Q[k]);
    out.A.push_back(series.A[k]);
  }
  return out;
}

Reconstructor model_reconstructor(const Autoencoder &model) {
  return [&model](const Tensor &batch) { return model.reconstruct(batch); };
}

ScoreSeries score_video(const Reconstructor &reconstruct, const Video &video,
                        std::size_t frames, ScoreMode mode, std::size_t batch_size,
                        const MiddleFrameSink &sink) {
  if (batch_size == 0)
    throw ConfigError("score batch size must be positive");
  SlidingWindows windows(video, frames);
  const FrameGeometry g = video.geometry();
  const std::size_t frame_numel = g.numel();
  const std::size_t clip_numel = frames * frame_numel;
  const std::size_t mid = frames / 2; // 0-based position inside the window

  std::vector<std::size_t> covered;
  std::vector<double> raw;
  for (std::size_t begin = 0; begin < windows.size(); begin += batch_size) {
    const std::size_t count = std::min(batch_size, windows.size() - begin);
    Tensor batch({count, frames, g.channels, g.height, g.width});
    for (std::size_t b = 0; b < count; ++b) {
      const Window w = windows[begin + b];
      std::copy(w.clip.data.begin(), w.clip.data.end(), batch.data() + b * clip_numel);
    }
    const Tensor recon = reconstruct(batch);
    require_same_shape(recon.shape(), batch.shape(), "reconstruction");
    for (std::size_t b = 0; b < count; ++b) {
      const std::size_t offset = b * clip_numel + mid * frame_numel;
      std::span<const float> x(batch.data() + offset, frame_numel);
      std::span<const float> x_hat(recon.data() + offset, frame_numel);
      const double m = mse_raw(x_hat, x);
      covered.push_back(windows.middle_index(begin + b));
      raw.push_back(mode == ScoreMode::psnr ? psnr_from_mse(m) : m);
      if (sink)
        sink(covered.back(), Tensor(g.shape(), std::vector<float>(x.begin(), x.end())),
             Tensor(g.shape(), std::vector<float>(x_hat.begin(), x_hat.end())));
    }
  }
  return make_series(video.id, mode, frames, video.length(), std::move(covered),
                     std::move(raw));
}

ScoreSeries score_video(const Autoencoder &model, const Video &video, ScoreMode mode,
                        std::size_t batch_size) {
  const auto &c = model.config();
  if (video.geometry() != FrameGeometry{c.channels, c.height, c.width})
    throw ShapeError("video '" + video.id + "' geometry does not match the model");
  return score_video(model_reconstructor(model), video, c.frames, mode, batch_size);
}

Tensor error_heatmap(const Tensor &x_hat, const Tensor &x) {
  require_same_shape(x_hat.shape(), x.shape(), "error_heatmap");
  if (x.rank() != 2 && x.rank() != 3)
    throw ShapeError("error_heatmap expects H x W or C x H x W frames");
  const std::size_t channels = x.rank() == 3 ? x.dim(0) : 1;
  const std::size_t h = x.dim(x.rank() - 2), w = x.dim(x.rank() - 1);
  std::vector<double> err(h * w, 0.0);
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t i = 0; i < h * w; ++i) {
      const double d = double(x_hat[c * h * w + i]) - double(x[c * h * w + i]);
      err[i] += d * d;
    }
  const auto [lo, hi] = std::minmax_element(err.begin(), err.end());
  const double min = *lo, range = *hi - *lo;
  Tensor map({h, w});
  if (range > 0.0)
    for (std::size_t i = 0; i < h * w; ++i)
      map[i] = static_cast<float>((err[i] - min) / range);
  return map;
}

void write_series_csv(const fs::path &path, const ScoreSeries &series) {
  std::ofstream out(path);
  if (!out)
    throw Error("cannot write " + path.string());
  out << "frame_index,P,Q,A\n" << std::setprecision(17);
  for (std::size_t i = 0; i < series.size(); ++i)
    out << series.covered_indices[i] << ',' << series.P[i] << ',' << series.Q[i] << ','
        << series.A[i] << '\n';
  if (!out)
    throw Error("cannot write " + path.string());
}

ScoreSeries read_series_csv(const fs::path &path, std::string video_id) {
  std::ifstream in(path);
  if (!in)
    throw EvalError("missing score file " + path.string());
  ScoreSeries s;
  s.video_id = std::move(video_id);
  std::string line;
  std::getline(in, line);
  if (line.rfind("frame_index,P,Q,A", 0) != 0)
    throw EvalError("unexpected header in " + path.string());
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty())
      continue;
    std::istringstream ls(line);
    std::size_t idx;
    double p, q, a;
    char c1, c2, c3;
    if (!(ls >> idx >> c1 >> p >> c2 >> q >> c3 >> a) || c1 != ',' || c2 != ',' || c3 != ',')
      throw EvalError("malformed row " + std::to_string(row) + " in " + path.string());
    s.covered_indices.push_back(idx);
    s.P.push_back(p);
    s.Q.push_back(q);
    s.A.push_back(a);
  }
  return s;
}

std::size_t configured_workers(std::size_t tasks, std::size_t requested) {
  std::size_t n = requested;
  if (n == 0) {
    n = 1;
    if (const char *env = std::getenv("PSEUDOBOUND_NUM_WORKERS")) {
      try {
        n = std::max<long>(1, std::stol(env));
      } catch (const std::exception &) {
        spdlog::warn("ignoring invalid PSEUDOBOUND_NUM_WORKERS='{}'", env);
      }
    }
  }
  return std::max<std::size_t>(1, std::min(n, tasks));
}

std::vector<ScoreSeries> score_split(const Autoencoder &model, const VideoDataset &videos,
                                     const fs::path &out_dir, const ScoreOptions &options) {
  if (videos.empty())
    throw Error("no videos to score");
  const auto &c = model.config();
  if (videos.geometry() != FrameGeometry{c.channels, c.height, c.width})
    throw ShapeError("dataset geometry does not match the model");
  fs::create_directories(out_dir);

  std::vector<ScoreSeries> results(videos.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i; (i = next++) < videos.size();) {
      try {
        const auto video = videos.video(i);
        MiddleFrameSink sink;
        const fs::path heat_dir = out_dir / "heatmaps" / video->id;
        if (options.heatmaps) {
          fs::create_directories(heat_dir);
          sink = [&](std::size_t index, const Tensor &x, const Tensor &x_hat) {
            std::ostringstream name;
            name << std::setw(5) << std::setfill('0') << index << ".png";
            write_unit_png(heat_dir / name.str(), error_heatmap(x_hat, x));
          };
        }
        ScoreSeries s = score_video(model_reconstructor(model), *video, c.frames,
                                    options.mode, options.batch_size, sink);
        if (options.edge_pad)
          s = pad_edges(s);
        write_series_csv(out_dir / (video->id + ".csv"), s);
        results[i] = std::move(s);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure)
          failure = std::current_exception();
        next = videos.size();
      }
    }
  };
  const std::size_t n = configured_workers(videos.size(), options.workers);
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < n; ++t)
    pool.emplace_back(worker);
  worker();
  for (auto &t : pool)
    t.join();
  if (failure)
    std::rethrow_exception(failure);

  nlohmann::json meta{{"T", c.frames},
                      {"mode", to_string(options.mode)},
                      {"edge_pad", options.edge_pad},
                      {"videos", nlohmann::json::object()}};
  for (const auto &s : results)
    meta["videos"][s.video_id] = {{"length", s.video_length}};
  std::ofstream(out_dir / "meta.json") << meta.dump(2) << '\n';
  spdlog::info("scored {} videos into {}", results.size(), out_dir.string());
  return results;
}

} // namespace pseudobound
