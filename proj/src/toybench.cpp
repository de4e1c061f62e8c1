// SPDX-License-Identifier: Apache-2.0
#include "pseudobound/toybench.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <spdlog/spdlog.h>

#include "pseudobound/error.hpp"
#include "pseudobound/image_io.hpp"

namespace pseudobound {

namespace fs = std::filesystem;

std::string to_string(ToyAnomaly mode) {
  switch (mode) {
  case ToyAnomaly::fast_motion: return "fast_motion";
  case ToyAnomaly::static_intruder: return "static_intruder";
  case ToyAnomaly::slow_motion: return "slow_motion";
  }
  return "?";
}

ToyAnomaly parse_toy_anomaly(const std::string &s) {
  if (s == "fast_motion")
    return ToyAnomaly::fast_motion;
  if (s == "static_intruder")
    return ToyAnomaly::static_intruder;
  if (s == "slow_motion")
    return ToyAnomaly::slow_motion;
  throw ConfigError("unknown toy anomaly mode '" + s + "'");
}

void ToySpec::validate() const {
  if (size < 16)
    throw ConfigError("toy frame size must be at least 16");
  if (!(blob_radius >= 1.0) || 2.0 * blob_radius + 4.0 > double(size))
    throw ConfigError("toy blob radius does not fit the frame");
  if (normal_speed < 1)
    throw ConfigError("toy normal speed must be at least 1");
  if (fast_speed < 3)
    throw ConfigError("toy fast-motion speed must be at least 3");
  if (modes.empty() && anomalous_segments > 0)
    throw ConfigError("toy test videos need at least one anomaly mode");
  if (segment_length < 2)
    throw ConfigError("toy segment length must be at least 2");
  if (train_videos == 0 || train_length < 2)
    throw ConfigError("toy benchmark needs training videos");
}

void to_json(nlohmann::json &j, const ToySpec &s) {
  std::vector<std::string> modes;
  for (auto m : s.modes)
    modes.push_back(to_string(m));
  j = {{"size", s.size},
       {"blob_radius", s.blob_radius},
       {"normal_speed", s.normal_speed},
       {"fast_speed", s.fast_speed},
       {"turn_probability", s.turn_probability},
       {"background", s.background},
       {"blob_value", s.blob_value},
       {"intruder_value", s.intruder_value},
       {"texture_sigma", s.texture_sigma},
       {"train_videos", s.train_videos},
       {"train_length", s.train_length},
       {"validation_videos", s.validation_videos},
       {"validation_length", s.validation_length},
       {"test_videos", s.test_videos},
       {"segment_length", s.segment_length},
       {"anomalous_segments", s.anomalous_segments},
       {"modes", modes},
       {"seed", s.seed}};
}

void from_json(const nlohmann::json &j, ToySpec &s) {
  const nlohmann::json defaults = ToySpec{};
  for (const auto &[key, _] : j.items())
    if (!defaults.contains(key))
      throw ConfigError("unknown toybench key '" + key + "'");
  auto get = [&](const char *key, auto &field) {
    if (j.contains(key))
      j.at(key).get_to(field);
  };
  get("size", s.size);
  get("blob_radius", s.blob_radius);
  get("normal_speed", s.normal_speed);
  get("fast_speed", s.fast_speed);
  get("turn_probability", s.turn_probability);
  get("background", s.background);
  get("blob_value", s.blob_value);
  get("intruder_value", s.intruder_value);
  get("texture_sigma", s.texture_sigma);
  get("train_videos", s.train_videos);
  get("train_length", s.train_length);
  get("validation_videos", s.validation_videos);
  get("validation_length", s.validation_length);
  get("test_videos", s.test_videos);
  get("segment_length", s.segment_length);
  get("anomalous_segments", s.anomalous_segments);
  get("seed", s.seed);
  if (j.contains("modes")) {
    s.modes.clear();
    for (const auto &m : j.at("modes"))
      s.modes.push_back(parse_toy_anomaly(m.get<std::string>()));
  }
}

namespace {

struct Square {
  int x0 = 0, y0 = 0, side = 0;
};

class Walker {
public:
  Walker(const ToySpec &spec, Rng &rng) : spec_(spec), rng_(rng) {
    lo_ = static_cast<int>(std::ceil(spec.blob_radius));
    hi_ = static_cast<int>(spec.size) - 1 - lo_;
    x_ = static_cast<int>(rng.uniform_int(lo_, hi_));
    y_ = static_cast<int>(rng.uniform_int(lo_, hi_));
    pick_direction();
  }

  void step(int speed) {
    if (rng_.uniform() < spec_.turn_probability)
      pick_direction();
    x_ = reflect(x_ + dx_ * speed, dx_);
    y_ = reflect(y_ + dy_ * speed, dy_);
  }

  int x() const { return x_; }
  int y() const { return y_; }

private:
  void pick_direction() {
    static constexpr int dirs[4][2] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}};
    const auto d = rng_.uniform_int(0, 3);
    dx_ = dirs[d][0];
    dy_ = dirs[d][1];
  }

  int reflect(int v, int &dir) const {
    while (v < lo_ || v > hi_) {
      v = v < lo_ ? 2 * lo_ - v : 2 * hi_ - v;
      dir = -dir;
    }
    return v;
  }

  const ToySpec &spec_;
  Rng &rng_;
  int lo_, hi_;
  int x_, y_, dx_ = 1, dy_ = 0;
};

Tensor render(const ToySpec &spec, int cx, int cy, const Square *intruder, Rng &rng) {
  const std::size_t n = spec.size;
  Tensor f({1, n, n});
  const double r2 = spec.blob_radius * spec.blob_radius;
  for (std::size_t y = 0; y < n; ++y)
    for (std::size_t x = 0; x < n; ++x) {
      double v = spec.background;
      if (intruder && int(x) >= intruder->x0 && int(x) < intruder->x0 + intruder->side &&
          int(y) >= intruder->y0 && int(y) < intruder->y0 + intruder->side)
        v = spec.intruder_value;
      const double ddx = double(x) - cx, ddy = double(y) - cy;
      if (ddx * ddx + ddy * ddy <= r2)
        v = spec.blob_value;
      v += spec.texture_sigma > 0.0 ? rng.normal(0.0, spec.texture_sigma) : 0.0;
      // Quantize to what an 8-bit PNG round trip yields.
      const double raw = std::clamp(std::round(denormalize_pixel(v)), 0.0, 255.0);
      f[y * n + x] = static_cast<float>(normalize_pixel(raw));
    }
  return f;
}

} // namespace

ToyVideo make_normal_toy_video(const ToySpec &spec, std::string id, std::size_t length,
                               Rng &rng) {
  ToyVideo v;
  v.id = std::move(id);
  Walker walker(spec, rng);
  for (std::size_t t = 0; t < length; ++t) {
    if (t > 0)
      walker.step(spec.normal_speed);
    v.states.push_back({walker.x(), walker.y(), false, ToyAnomaly::fast_motion});
    v.frames.push_back(render(spec, walker.x(), walker.y(), nullptr, rng));
    v.labels.push_back(0);
  }
  return v;
}

ToyVideo make_test_toy_video(const ToySpec &spec, std::string id, Rng &rng) {
  ToyVideo v;
  v.id = std::move(id);
  Walker walker(spec, rng);
  const std::size_t segments = 2 * spec.anomalous_segments + 1;
  const int side = std::max(4, int(spec.size) / 6);
  for (std::size_t seg = 0; seg < segments; ++seg) {
    const bool anomalous = seg % 2 == 1;
    const ToyAnomaly mode =
        anomalous ? spec.modes[(seg / 2) % spec.modes.size()] : ToyAnomaly::fast_motion;
    Square square;
    if (anomalous && mode == ToyAnomaly::static_intruder) {
      square.side = side;
      square.x0 = static_cast<int>(rng.uniform_int(0, int(spec.size) - side));
      square.y0 = static_cast<int>(rng.uniform_int(0, int(spec.size) - side));
    }
    for (std::size_t k = 0; k < spec.segment_length; ++k) {
      if (!v.frames.empty()) {
        int speed = spec.normal_speed;
        if (anomalous && mode == ToyAnomaly::fast_motion)
          speed = spec.fast_speed;
        else if (anomalous && mode == ToyAnomaly::slow_motion)
          speed = 0;
        walker.step(speed);
      }
      v.states.push_back({walker.x(), walker.y(), anomalous, mode});
      v.frames.push_back(render(spec, walker.x(), walker.y(),
                                square.side > 0 ? &square : nullptr, rng));
      v.labels.push_back(anomalous ? 1 : 0);
    }
  }
  return v;
}

namespace {

std::string video_id(const char *prefix, std::size_t i) {
  std::ostringstream os;
  os << prefix << std::setw(3) << std::setfill('0') << i + 1;
  return os.str();
}

void write_frames(const fs::path &dir, const ToyVideo &v) {
  fs::create_directories(dir);
  for (std::size_t t = 0; t < v.frames.size(); ++t) {
    std::ostringstream name;
    name << std::setw(4) << std::setfill('0') << t + 1 << ".png";
    write_png(dir / name.str(), v.frames[t]);
  }
}

} // namespace

void generate_toy_dataset(const ToySpec &spec, const fs::path &out_dir) {
  spec.validate();
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec || !fs::is_directory(out_dir))
    throw Error("cannot create output directory " + out_dir.string());
  for (const char *split : {"training", "validation", "testing"})
    fs::remove_all(out_dir / split);

  for (std::size_t i = 0; i < spec.train_videos; ++i) {
    const auto id = video_id("Train", i);
    Rng rng = Rng::substream(spec.seed, "toy/" + id);
    write_frames(out_dir / "training" / "frames" / id,
                 make_normal_toy_video(spec, id, spec.train_length, rng));
  }
  for (std::size_t i = 0; i < spec.validation_videos; ++i) {
    const auto id = video_id("Val", i);
    Rng rng = Rng::substream(spec.seed, "toy/" + id);
    write_frames(out_dir / "validation" / "frames" / id,
                 make_normal_toy_video(spec, id, spec.validation_length, rng));
  }
  GroundTruth gt;
  for (std::size_t i = 0; i < spec.test_videos; ++i) {
    const auto id = video_id("Test", i);
    Rng rng = Rng::substream(spec.seed, "toy/" + id);
    ToyVideo v = make_test_toy_video(spec, id, rng);
    write_frames(out_dir / "testing" / "frames" / id, v);
    gt[id] = v.labels;
  }
  write_ground_truth(out_dir / "testing" / "labels", gt);
  std::ofstream(out_dir / "toyspec.json") << nlohmann::json(spec).dump(2) << '\n';
  spdlog::info("toy benchmark written to {} ({} train, {} validation, {} test videos)",
               out_dir.string(), spec.train_videos, spec.validation_videos, spec.test_videos);
}

} // namespace pseudobound
