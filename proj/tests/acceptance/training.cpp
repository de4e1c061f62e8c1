// SPDX-License-Identifier: Apache-2.0
// Criteria 5, 6 and 8: training-loop equivalence, the toy experiment and the
// optional Ped2 smoke run.
#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "criteria.hpp"
#include "pseudobound/cli.hpp"
#include "pseudobound/eval.hpp"
#include "pseudobound/score.hpp"
#include "pseudobound/toybench.hpp"
#include "pseudobound/train.hpp"

namespace acceptance {

using namespace pseudobound;
namespace fs = std::filesystem;

namespace {

std::vector<std::string> loss_column(const fs::path &csv) {
  std::ifstream in(csv);
  std::string line;
  std::getline(in, line);
  std::vector<std::string> out;
  while (std::getline(in, line)) {
    const auto a = line.find(','), b = line.rfind(',');
    out.push_back(line.substr(a + 1, b - a - 1));
  }
  return out;
}

std::string format_loss(double v) {
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

} // namespace

// ---------------------------------------------------------------- criterion 5

Outcome baseline_equivalence(const Options &opt) {
  constexpr std::uint64_t kSeed = 42;
  constexpr std::size_t kIterations = 50;
  const AutoencoderConfig cfg = AutoencoderConfig::toy();
  const ToySpec spec;
  std::vector<Video> videos;
  for (int i = 0; i < 4; ++i) {
    Rng rng(100 + i);
    ToyVideo tv = make_normal_toy_video(spec, "v" + std::to_string(i), 60, rng);
    Video v{tv.id, {}};
    for (auto &f : tv.frames)
      v.frames.push_back({std::move(f)});
    videos.push_back(std::move(v));
  }
  auto pool = std::make_shared<const TrainingPool>(std::move(videos), cfg.frames);

  TrainingConfig train;
  train.learning_rate = 1e-4;
  train.batch_size = 4;
  train.iterations = kIterations;
  train.seed = kSeed;
  const fs::path dir = opt.work_dir / "baseline_equivalence";
  const TrainingResult result = run_training({cfg, train, {}, dir, ""}, pool);

  // Conventional autoencoder loop: uniform normal clips, plain mean squared
  // error, Adam. Seeds follow the documented stream names.
  Autoencoder model(cfg, Rng::substream(kSeed, "init").next_u64());
  Adam<float> adam(model.parameters(), {train.learning_rate});
  Rng data = Rng::substream(kSeed, "data");
  std::vector<double> oracle_losses;
  for (std::size_t it = 0; it < kIterations; ++it) {
    Tensor batch({train.batch_size, cfg.frames, cfg.channels, cfg.height, cfg.width});
    for (std::size_t b = 0; b < train.batch_size; ++b) {
      const Clip c = pool->normal_clip(data);
      std::copy(c.data.begin(), c.data.end(), batch.slice(b).begin());
    }
    adam.zero_grad();
    const Tensor recon = model.forward(batch);
    const std::size_t n = batch.size() / train.batch_size;
    Tensor grad(batch.shape());
    double loss = 0.0;
    for (std::size_t b = 0; b < train.batch_size; ++b) {
      double sum = 0.0;
      for (std::size_t i = b * n; i < (b + 1) * n; ++i) {
        const double d = double(recon[i]) - double(batch[i]);
        sum += d * d;
        grad[i] = static_cast<float>(2.0 / (double(n) * double(train.batch_size)) * d);
      }
      loss += sum / double(n);
    }
    oracle_losses.push_back(loss / double(train.batch_size));
    model.backward(grad);
    adam.step();
  }

  const auto logged = loss_column(dir / "loss.csv");
  std::size_t matching = 0;
  for (std::size_t i = 0; i < kIterations && i < logged.size(); ++i)
    matching += i < result.log.size() && result.log[i].total == oracle_losses[i] &&
                logged[i] == format_loss(oracle_losses[i]);

  Autoencoder trained(cfg, 0);
  restore_checkpoint(read_checkpoint(result.final_checkpoint), trained);
  bool same_params = true;
  const auto a = trained.parameters(), b = model.parameters();
  for (std::size_t k = 0; k < a.size(); ++k)
    same_params = same_params && a[k]->value == b[k]->value;

  std::ostringstream d;
  d << matching << "/" << kIterations << " loss rows bit-identical, final parameters "
    << (same_params ? "identical" : "differ");
  return Outcome::check(matching == kIterations && logged.size() == kIterations && same_params,
                        d.str());
}

// ---------------------------------------------------------------- criterion 6

namespace {

// Fixed budget of the directional experiment.
struct ToyExperiment {
  ToySpec data;
  AutoencoderConfig model = AutoencoderConfig::toy();
  double learning_rate = 1e-3;
  std::size_t batch_size = 1;
  std::uint64_t iterations = 4800;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::vector<std::size_t> strides{2, 3};
  double p = 0.01;
  std::size_t heldout_clips = 200;

  ToyExperiment() { model.temporal_strides = {1, 1, 1, 2}; }
};

struct ArmResult {
  double auc = 0.0;
  double normal_mse = 0.0;
  double skip_mse = 0.0;
};

double mean_mse(const Autoencoder &model, const std::vector<Clip> &clips) {
  double total = 0.0;
  for (std::size_t i = 0; i < clips.size(); i += 8) {
    const std::size_t end = std::min(clips.size(), i + 8);
    const Tensor batch = stack_clips(std::span(clips).subspan(i, end - i));
    const Tensor recon = model.reconstruct(batch);
    for (std::size_t b = 0; b < end - i; ++b)
      total += reconstruction_mse(recon.slice(b), batch.slice(b));
  }
  return total / double(clips.size());
}

ArmResult run_arm(const ToyExperiment &x, const fs::path &root, const fs::path &dir,
                  std::uint64_t seed, bool pseudo) {
  const FrameGeometry g{x.model.channels, x.model.height, x.model.width};
  auto training = std::make_shared<const VideoDataset>(VideoDataset::open(root, "training", g));
  auto pool = std::make_shared<const TrainingPool>(training, x.model.frames);
  TrainingConfig train;
  train.learning_rate = x.learning_rate;
  train.batch_size = x.batch_size;
  train.iterations = x.iterations;
  train.seed = seed;
  std::vector<PseudoSpec> specs;
  if (pseudo) {
    PseudoSpec s = PseudoSpec::make(PseudoKind::skip, x.p);
    std::get<SkipParams>(s.params).strides = x.strides;
    specs.push_back(s);
  }
  const TrainingResult trained = run_training({x.model, train, specs, dir, ""}, pool);
  const Autoencoder model = load_model(trained.final_checkpoint);

  ArmResult r;
  const VideoDataset test = VideoDataset::open(root, "testing", g);
  score_split(model, test, dir / "scores", {});
  r.auc = evaluate_run(dir / "scores", read_ground_truth(root / "testing" / "labels"),
                       EdgePolicy::truncate)
              .auc;

  // Held-out clips come from the validation split, never seen in training.
  const TrainingPool heldout(std::make_shared<const VideoDataset>(
                                 VideoDataset::open(root, "validation", g)),
                             x.model.frames);
  Rng rng = Rng::substream(seed, "heldout");
  std::vector<Clip> normal, skip;
  for (std::size_t i = 0; i < x.heldout_clips; ++i) {
    normal.push_back(heldout.normal_clip(rng));
    skip.push_back(synth_skip(*heldout.random_video(rng), x.model.frames, x.strides, rng));
  }
  r.normal_mse = mean_mse(model, normal);
  r.skip_mse = mean_mse(model, skip);
  return r;
}

} // namespace

Outcome toy_experiment(const Options &opt) {
  const ToyExperiment x;
  const fs::path root = opt.work_dir / "toy";
  generate_toy_dataset(x.data, root);
  std::vector<double> gains, ratios;
  std::ostringstream d;
  d.precision(4);
  for (auto seed : x.seeds) {
    const ArmResult a = run_arm(x, root, opt.work_dir / ("toy_a_" + std::to_string(seed)), seed, false);
    const ArmResult b = run_arm(x, root, opt.work_dir / ("toy_b_" + std::to_string(seed)), seed, true);
    gains.push_back(b.auc - a.auc);
    ratios.push_back(b.skip_mse / b.normal_mse);
    d << "seed " << seed << ": AUC " << a.auc << " -> " << b.auc << ", skip/normal mse "
      << ratios.back() << "; ";
    std::printf("  toy seed %llu: baseline %.4f skip %.4f ratio %.3f\n",
                static_cast<unsigned long long>(seed), a.auc, b.auc, ratios.back());
    std::fflush(stdout);
  }
  const double gain = median(gains), ratio = median(ratios);
  d << "median gain " << gain << " (need 0.05), median ratio " << ratio << " (need 2)";
  return Outcome::check(gain >= 0.05 && ratio >= 2.0, d.str());
}

// ---------------------------------------------------------------- criterion 8

Outcome ped2_smoke(const Options &opt) {
  if (!opt.ped2_root)
    return Outcome::skip("no Ped2 directory (set PSEUDOBOUND_PED2 or pass --ped2)");
  const fs::path dir = opt.work_dir / "ped2";
  fs::create_directories(dir);
  const fs::path gt = opt.ped2_gt ? *opt.ped2_gt : *opt.ped2_root / "testing" / "labels";
  std::ofstream(dir / "config.json")
      << nlohmann::json{{"seed", 1},
                        {"output_dir", (dir / "run").string()},
                        {"dataset", {{"root", opt.ped2_root->string()}}},
                        {"model", {{"preset", "toy"}}},
                        {"train", {{"iterations", 500}}}}
             .dump();
  auto cli = [](std::vector<std::string> args) {
    args.insert(args.begin(), {"pseudobound", "--log-level", "warn"});
    std::vector<char *> argv;
    for (auto &a : args)
      argv.push_back(a.data());
    return run_cli(int(argv.size()), argv.data());
  };
  if (int code = cli({"train", "--config", (dir / "config.json").string()}); code != 0)
    return Outcome::fail("train exited with " + std::to_string(code));
  const fs::path ckpt = dir / "run" / checkpoint_filename(500);
  if (int code = cli({"score", "--ckpt", ckpt.string(), "--out", (dir / "scores").string()});
      code != 0)
    return Outcome::fail("score exited with " + std::to_string(code));
  if (int code = cli({"eval", "--scores", (dir / "scores").string(), "--gt", gt.string()});
      code != 0)
    return Outcome::fail("eval exited with " + std::to_string(code));
  std::ifstream in(dir / "scores" / "report.json");
  const double auc = nlohmann::json::parse(in).at("auc").get<double>();
  return Outcome::check(auc > 0.0 && auc < 1.0, "AUC " + std::to_string(auc));
}

} // namespace acceptance
