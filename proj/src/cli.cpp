// SPDX-License-Identifier: Apache-2.0
#include "pseudobound/cli.hpp"

#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "pseudobound/config.hpp"
#include "pseudobound/error.hpp"
#include "pseudobound/eval.hpp"
#include "pseudobound/toybench.hpp"

namespace pseudobound {

namespace fs = std::filesystem;

namespace {

struct ToybenchArgs {
  fs::path out;
  std::uint64_t seed = 0;
  std::string spec;
  std::vector<std::string> modes;
};

struct TrainArgs {
  fs::path config;
  std::optional<fs::path> resume;
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> iterations;
  std::optional<fs::path> out;
};

struct ScoreArgs {
  fs::path ckpt;
  fs::path out;
  std::optional<fs::path> data;
  std::optional<std::string> split;
  std::optional<std::string> mode;
  bool edge_pad = false;
  bool heatmaps = false;
  std::optional<std::size_t> batch;
  std::uint64_t seed = 0;
};

struct EvalArgs {
  fs::path scores;
  fs::path gt;
  bool edge_pad = false;
  std::optional<fs::path> report;
  std::uint64_t seed = 0;
};

struct PreviewArgs {
  std::string kind;
  fs::path out;
  std::optional<fs::path> config;
  std::optional<fs::path> data;
  std::optional<fs::path> intruder;
  std::optional<std::string> technique;
  std::uint64_t seed = 0;
};

int toybench_command(const ToybenchArgs &a) {
  ToySpec spec;
  if (!a.spec.empty()) {
    std::ifstream in(a.spec);
    if (!in)
      throw ConfigError("cannot read toy spec " + a.spec);
    spec = nlohmann::json::parse(in).get<ToySpec>();
  }
  spec.seed = a.seed;
  if (!a.modes.empty()) {
    spec.modes.clear();
    for (const auto &m : a.modes)
      spec.modes.push_back(parse_toy_anomaly(m));
  }
  generate_toy_dataset(spec, a.out);
  return kExitOk;
}

int train_command(const TrainArgs &a) {
  RunConfig config = parse_config_file(a.config);
  if (a.seed)
    config.seed = config.train.seed = *a.seed;
  if (a.iterations)
    config.train.iterations = *a.iterations;
  if (a.out)
    config.output_dir = *a.out;
  config.train.validate();
  if (config.dataset.root.empty())
    throw ConfigError("dataset.root is required for training");

  auto dataset = std::make_shared<const VideoDataset>(VideoDataset::open(
      config.dataset.root, "training", config.geometry(), config.dataset.cache_capacity));
  if (dataset->empty())
    throw LoadError(LoadError::Kind::empty_video,
                    "no training videos under " + config.dataset.root.string());
  auto pool = std::make_shared<const TrainingPool>(dataset, config.model.frames);

  fs::create_directories(config.output_dir);
  const std::string run_json = config.to_json().dump(2);
  std::ofstream(config.output_dir / "config.json") << run_json << '\n';

  TrainingRun run{config.model, config.train, config.pseudo, config.output_dir, run_json};
  const TrainingResult result = run_training(run, pool, a.resume);
  std::cout << result.final_checkpoint.string() << '\n';
  return kExitOk;
}

int score_command(const ScoreArgs &a) {
  const Checkpoint ckpt = read_checkpoint(a.ckpt);
  Autoencoder model(ckpt.config, 0);
  restore_checkpoint(ckpt, model);

  RunConfig run;
  if (!ckpt.run_config.empty())
    run = parse_config(nlohmann::json::parse(ckpt.run_config));
  fs::path root = a.data ? *a.data : run.dataset.root;
  if (root.empty())
    throw ConfigError("no dataset root: pass --data");
  ScoreOptions options;
  options.mode = a.mode ? parse_score_mode(*a.mode) : run.score.mode;
  options.edge_pad = a.edge_pad || run.score.edge_pad;
  options.heatmaps = a.heatmaps || run.score.heatmaps;
  options.batch_size = a.batch ? *a.batch : run.score.batch_size;
  const std::string split = a.split ? *a.split : run.score.split;

  const FrameGeometry geometry{ckpt.config.channels, ckpt.config.height, ckpt.config.width};
  const VideoDataset videos = VideoDataset::open(root, split, geometry, 2);
  if (videos.empty())
    throw LoadError(LoadError::Kind::empty_video,
                    "no videos under " + (root / split / "frames").string());
  score_split(model, videos, a.out, options);
  return kExitOk;
}

int eval_command(const EvalArgs &a) {
  std::ifstream meta_in(a.scores / "meta.json");
  if (!meta_in)
    throw EvalError("no scores found in " + a.scores.string() + " (run `score` first)");
  const auto meta = nlohmann::json::parse(meta_in);
  std::map<std::string, std::size_t> lengths;
  for (const auto &[id, v] : meta.at("videos").items())
    lengths[id] = v.at("length").get<std::size_t>();

  const GroundTruth gt = load_ground_truth(a.gt, lengths);
  const EvalReport report =
      evaluate_run(a.scores, gt, a.edge_pad ? EdgePolicy::pad : EdgePolicy::truncate);
  const fs::path report_path = a.report ? *a.report : a.scores / "report.json";
  std::ofstream(report_path) << report.to_json().dump(2) << '\n';
  std::cout << "AUC " << report.auc << '\n';
  spdlog::info("{} frames ({} anomalous) over {} videos; report at {}", report.frames,
               report.anomalous, report.videos.size(), report_path.string());
  return kExitOk;
}

int preview_command(const PreviewArgs &a) {
  RunConfig run;
  run.model_preset = "toy";
  run.model = AutoencoderConfig::toy();
  if (a.config)
    run = parse_config_file(*a.config);

  PseudoSpec spec = PseudoSpec::make(parse_pseudo_kind(a.kind), 1.0);
  for (const auto &configured : run.pseudo)
    if (configured.kind() == spec.kind()) {
      spec = configured;
      spec.probability = 1.0;
    }
  if (auto *patch = std::get_if<PatchParams>(&spec.params)) {
    if (a.technique)
      patch->technique = parse_patch_technique(*a.technique);
    if (a.intruder)
      patch->intruder = {IntruderKind::image_folder, a.intruder->string()};
    else if (patch->intruder.location.empty())
      patch->intruder = {IntruderKind::self_dataset, ""};
  }

  const std::size_t frames = run.model.frames;
  std::shared_ptr<const TrainingPool> pool;
  const fs::path root = a.data ? *a.data : run.dataset.root;
  if (!root.empty()) {
    auto dataset = std::make_shared<const VideoDataset>(
        VideoDataset::open(root, "training", run.geometry(), 4));
    pool = std::make_shared<const TrainingPool>(dataset, frames);
  } else {
    // No data given: preview on a generated moving-blob video.
    ToySpec toy;
    toy.size = run.model.height;
    toy.seed = a.seed;
    std::vector<Video> videos;
    for (int i = 0; i < 2; ++i) {
      Rng rng = Rng::substream(a.seed, "preview/" + std::to_string(i));
      ToyVideo tv = make_normal_toy_video(toy, "Preview" + std::to_string(i), 8 * frames, rng);
      Video v{tv.id, {}};
      for (auto &f : tv.frames)
        v.frames.push_back(Frame{std::move(f)});
      videos.push_back(std::move(v));
    }
    pool = std::make_shared<const TrainingPool>(std::move(videos), frames);
    if (auto *patch = std::get_if<PatchParams>(&spec.params);
        patch && patch->intruder.kind == IntruderKind::self_dataset &&
        patch->intruder.location.empty()) {
      std::vector<Frame> stills;
      for (std::size_t i = 0; i < pool->video_count(); ++i)
        stills.push_back(pool->video(i)->frames.front());
      patch->source = std::make_shared<ImageIntruderSource>(std::move(stills));
    }
  }

  InputSelector selector(pool, {spec});
  Rng data = Rng::substream(a.seed, "data");
  Rng synth = Rng::substream(a.seed, "synth");
  const Clip normal = pool->normal_clip(data);
  const Clip pseudo = selector.synthesize(0, synth);
  std::vector<std::vector<Tensor>> rows(2);
  for (std::size_t t = 0; t < frames; ++t) {
    rows[0].push_back(normal.frame(t).pixels);
    rows[1].push_back(pseudo.frame(t).pixels);
  }
  if (a.out.has_parent_path())
    fs::create_directories(a.out.parent_path());
  write_png_grid(a.out, rows);
  std::cout << a.out.string() << '\n';
  return kExitOk;
}

} // namespace

int run_cli(int argc, char **argv) {
  CLI::App app{"Pseudo-anomaly training toolkit for video anomaly detection"};
  app.require_subcommand(1);
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace|debug|info|warn|error|off")
      ->capture_default_str();

  ToybenchArgs tb;
  auto *toybench = app.add_subcommand("toybench", "Generate the moving-blob benchmark");
  toybench->add_option("--out", tb.out, "Output directory")->required();
  toybench->add_option("--seed", tb.seed, "Random seed")->capture_default_str();
  toybench->add_option("--spec", tb.spec, "JSON file overriding the toy spec");
  toybench->add_option("--modes", tb.modes, "Anomaly modes (fast_motion static_intruder slow_motion)");

  TrainArgs tr;
  auto *train = app.add_subcommand("train", "Train an autoencoder");
  train->add_option("--config", tr.config, "Run config (JSON)")->required();
  train->add_option("--resume", tr.resume, "Checkpoint to resume from");
  train->add_option("--seed", tr.seed, "Override the config seed");
  train->add_option("--iterations", tr.iterations, "Override train.iterations");
  train->add_option("--out", tr.out, "Override output_dir");

  ScoreArgs sc;
  auto *score = app.add_subcommand("score", "Score test videos with a checkpoint");
  score->add_option("--ckpt", sc.ckpt, "Checkpoint file")->required();
  score->add_option("--out", sc.out, "Output directory for per-video CSVs")->required();
  score->add_option("--data", sc.data, "Dataset root (default: from the checkpoint)");
  score->add_option("--split", sc.split, "Split to score (default testing)");
  score->add_option("--mode", sc.mode, "psnr|mse");
  score->add_flag("--edge-pad", sc.edge_pad, "Replicate edge scores to every frame");
  score->add_flag("--heatmaps", sc.heatmaps, "Write per-frame error heatmaps");
  score->add_option("--batch", sc.batch, "Windows per inference batch");
  score->add_option("--seed", sc.seed, "Accepted for uniformity; scoring is deterministic");

  EvalArgs ev;
  auto *eval = app.add_subcommand("eval", "Frame-level AUC of a scored split");
  eval->add_option("--scores", ev.scores, "Directory written by `score`")->required();
  eval->add_option("--gt", ev.gt, "Label directory (.txt/.npy) or UCSD .m file")->required();
  eval->add_flag("--edge-pad", ev.edge_pad, "Align padded scores to every frame");
  eval->add_option("--report", ev.report, "Report path (default <scores>/report.json)");
  eval->add_option("--seed", ev.seed, "Accepted for uniformity; evaluation is deterministic");

  PreviewArgs pv;
  auto *preview = app.add_subcommand("preview", "Write a normal/pseudo clip pair as a PNG grid");
  preview->add_option("--kind", pv.kind, "skip|repeat|patch|fusion|noise")->required();
  preview->add_option("--out", pv.out, "PNG path")->required();
  preview->add_option("--config", pv.config, "Run config providing geometry and params");
  preview->add_option("--data", pv.data, "Dataset root (default: generated blobs)");
  preview->add_option("--intruder", pv.intruder, "Image folder for patch intruders");
  preview->add_option("--technique", pv.technique, "smoothmix_s|smoothmix_c|cutmix");
  preview->add_option("--seed", pv.seed, "Random seed")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  auto logger = spdlog::get("pseudobound");
  if (!logger)
    logger = spdlog::stderr_color_mt("pseudobound");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::from_str(log_level));

  try {
    if (*toybench)
      return toybench_command(tb);
    if (*train)
      return train_command(tr);
    if (*score)
      return score_command(sc);
    if (*eval)
      return eval_command(ev);
    return preview_command(pv);
  } catch (const ConfigError &e) {
    spdlog::error("config: {}", e.what());
    return kExitConfig;
  } catch (const LoadError &e) {
    spdlog::error("data: {}", e.what());
    return kExitData;
  } catch (const EvalError &e) {
    spdlog::error("eval: {}", e.what());
    return kExitEval;
  } catch (const nlohmann::json::exception &e) {
    spdlog::error("json: {}", e.what());
    return kExitConfig;
  } catch (const std::exception &e) {
    spdlog::error("{}", e.what());
    return kExitFailure;
  }
}

} // namespace pseudobound
