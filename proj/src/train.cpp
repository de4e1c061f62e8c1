// SPDX-License-Identifier: Apache-2.0
#include "pseudobound/train.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <spdlog/spdlog.h>

#include "pseudobound/error.hpp"

namespace pseudobound {

void TrainingConfig::validate() const {
  if (!(learning_rate > 0.0))
    throw ConfigError("train.lr must be positive");
  if (batch_size < 1)
    throw ConfigError("train.batch_size must be at least 1");
  if (iterations < 1)
    throw ConfigError("train.iterations must be set to an explicit positive budget");
  if (pseudo_loss_floor && !(*pseudo_loss_floor <= 0.0))
    throw ConfigError("train.pseudo_loss_floor must be <= 0");
}

double reconstruction_mse(std::span<const float> x_hat, std::span<const float> x) {
  if (x_hat.size() != x.size())
    throw ShapeError("reconstruction_mse: size mismatch");
  if (x.empty())
    throw ShapeError("reconstruction_mse: empty input");
  double sum = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = double(x_hat[i]) - double(x[i]);
    sum += d * d;
  }
  return sum / double(x.size());
}

double reconstruction_mse(const Tensor &x_hat, const Tensor &x) {
  require_same_shape(x_hat.shape(), x.shape(), "reconstruction_mse");
  return reconstruction_mse(x_hat.span(), x.span());
}

double signed_sample_loss(const Tensor &x_hat, const Tensor &x, bool is_pseudo) {
  const double mse = reconstruction_mse(x_hat, x);
  return is_pseudo ? -mse : mse;
}

template <typename T>
double signed_batch_loss(const BasicTensor<T> &reconstruction, const BasicTensor<T> &input,
                         std::span<const std::uint8_t> is_pseudo, BasicTensor<T> *gradient,
                         std::vector<double> *per_sample, std::optional<double> pseudo_floor) {
  require_same_shape(reconstruction.shape(), input.shape(), "signed_batch_loss");
  const std::size_t batch = input.dim(0);
  if (is_pseudo.size() != batch)
    throw ShapeError("signed_batch_loss: one pseudo flag per sample required");
  const std::size_t n = input.size() / batch;
  if (gradient)
    *gradient = BasicTensor<T>(input.shape());
  if (per_sample)
    per_sample->assign(batch, 0.0);

  double total = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    const T *r = reconstruction.data() + b * n;
    const T *x = input.data() + b * n;
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = double(r[i]) - double(x[i]);
      sum += d * d;
    }
    const double mse = sum / double(n);
    double loss = is_pseudo[b] ? -mse : mse;
    bool active = true;
    if (is_pseudo[b] && pseudo_floor && loss < *pseudo_floor) {
      loss = *pseudo_floor;
      active = false;
    }
    if (per_sample)
      (*per_sample)[b] = loss;
    total += loss;
    if (gradient && active) {
      const double sign = is_pseudo[b] ? -1.0 : 1.0;
      const double scale = sign * 2.0 / (double(n) * double(batch));
      T *g = gradient->data() + b * n;
      for (std::size_t i = 0; i < n; ++i)
        g[i] = static_cast<T>(scale * (double(r[i]) - double(x[i])));
    }
  }
  return total / double(batch);
}

template double signed_batch_loss<float>(const Tensor &, const Tensor &,
                                         std::span<const std::uint8_t>, Tensor *,
                                         std::vector<double> *, std::optional<double>);
template double signed_batch_loss<double>(const BasicTensor<double> &,
                                          const BasicTensor<double> &,
                                          std::span<const std::uint8_t>, BasicTensor<double> *,
                                          std::vector<double> *, std::optional<double>);

Tensor stack_clips(std::span<const Clip> clips) {
  if (clips.empty())
    throw ShapeError("stack_clips: no clips");
  const Shape clip_shape = clips.front().data.shape();
  Shape shape{clips.size()};
  shape.insert(shape.end(), clip_shape.begin(), clip_shape.end());
  Tensor batch(shape);
  for (std::size_t b = 0; b < clips.size(); ++b) {
    require_same_shape(clips[b].data.shape(), clip_shape, "stack_clips");
    std::copy(clips[b].data.begin(), clips[b].data.end(), batch.slice(b).begin());
  }
  return batch;
}

LossReport train_step(Autoencoder &model, Adam<float> &optimizer, const Tensor &batch,
                      std::span<const std::uint8_t> is_pseudo,
                      std::optional<double> pseudo_floor) {
  optimizer.zero_grad();
  const Tensor reconstruction = model.forward(batch);
  Tensor gradient;
  LossReport report;
  report.total = signed_batch_loss(reconstruction, batch, is_pseudo, &gradient,
                                   &report.per_sample, pseudo_floor);
  std::size_t pseudo = 0;
  for (auto f : is_pseudo)
    pseudo += f ? 1 : 0;
  report.pseudo_fraction = double(pseudo) / double(is_pseudo.size());
  if (!std::isfinite(report.total))
    return report; // caller aborts; parameters stay untouched
  model.backward(gradient);
  optimizer.step();
  return report;
}

AssembledBatch assemble_batch(std::span<const Clip> normal, std::span<const Clip> pseudo,
                              double p, Rng &rng) {
  if (normal.size() != pseudo.size() || normal.empty())
    throw ShapeError("assemble_batch: normal and pseudo candidate batches must align");
  if (!(p >= 0.0 && p <= 1.0))
    throw ConfigError("pseudo probability must lie in [0, 1]");
  std::vector<Clip> chosen;
  AssembledBatch out;
  for (std::size_t i = 0; i < normal.size(); ++i) {
    const bool take_pseudo = rng.uniform() < p;
    chosen.push_back(take_pseudo ? pseudo[i] : normal[i]);
    out.is_pseudo.push_back(take_pseudo ? 1 : 0);
  }
  out.batch = stack_clips(chosen);
  return out;
}

LossReport train_iteration(Autoencoder &model, Adam<float> &optimizer,
                           std::span<const Clip> normal, std::span<const Clip> pseudo,
                           double p, Rng &rng) {
  const AssembledBatch assembled = assemble_batch(normal, pseudo, p, rng);
  return train_step(model, optimizer, assembled.batch, assembled.is_pseudo);
}

TrainingStreams TrainingStreams::from_seed(std::uint64_t seed) {
  return {Rng::substream(seed, "train"), Rng::substream(seed, "data"),
          Rng::substream(seed, "synth")};
}

nlohmann::json TrainingStreams::to_json() const {
  return {{"select", select.serialize()}, {"data", data.serialize()},
          {"synth", synth.serialize()}};
}

void TrainingStreams::restore(const nlohmann::json &j) {
  select.deserialize(j.at("select").get<std::string>());
  data.deserialize(j.at("data").get<std::string>());
  synth.deserialize(j.at("synth").get<std::string>());
}

std::uint64_t init_seed(std::uint64_t seed) {
  return Rng::substream(seed, "init").next_u64();
}

// --------------------------------------------------------------- Trainer

Trainer::Trainer(Autoencoder &model, TrainingConfig config,
                 std::shared_ptr<const InputSelector> selector)
    : model_(model), config_(config), selector_(std::move(selector)),
      optimizer_(model.parameters(), AdamOptions{config.learning_rate}),
      streams_(TrainingStreams::from_seed(config.seed)) {
  if (!selector_)
    throw TrainingError("trainer needs an input selector");
  if (config_.batch_size < 1)
    throw ConfigError("train.batch_size must be at least 1");
  const auto &mc = model_.config();
  const FrameGeometry g = selector_->pool().geometry();
  if (selector_->pool().frames() != mc.frames || g.channels != mc.channels ||
      g.height != mc.height || g.width != mc.width)
    throw ConfigError("training data geometry does not match the model config");
}

LossReport Trainer::step() {
  std::vector<Clip> clips;
  std::vector<std::uint8_t> flags;
  clips.reserve(config_.batch_size);
  for (std::size_t b = 0; b < config_.batch_size; ++b) {
    Selection s = selector_->select(streams_.select, streams_.data, streams_.synth);
    clips.push_back(std::move(s.clip));
    flags.push_back(s.is_pseudo ? 1 : 0);
  }
  LossReport report =
      train_step(model_, optimizer_, stack_clips(clips), flags, config_.pseudo_loss_floor);
  report.iteration = ++completed_;
  return report;
}

Checkpoint Trainer::checkpoint(const std::string &run_config) const {
  Checkpoint ckpt = capture_checkpoint(model_, &optimizer_, completed_);
  ckpt.run_config = run_config;
  ckpt.extra_state = nlohmann::json{{"streams", streams_.to_json()}}.dump();
  return ckpt;
}

void Trainer::resume(const Checkpoint &ckpt) {
  restore_checkpoint(ckpt, model_, &optimizer_);
  completed_ = ckpt.iteration;
  if (!ckpt.extra_state.empty()) {
    const auto extra = nlohmann::json::parse(ckpt.extra_state);
    if (extra.contains("streams"))
      streams_.restore(extra.at("streams"));
  }
}

// ---------------------------------------------------------- run_training

namespace {

std::vector<std::string> kept_log_rows(const std::filesystem::path &path,
                                       std::uint64_t up_to) {
  std::vector<std::string> rows;
  std::ifstream in(path);
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (header) {
      header = false;
      continue;
    }
    if (line.empty())
      continue;
    const auto iter = std::stoull(line.substr(0, line.find(',')));
    if (iter <= up_to)
      rows.push_back(line);
  }
  return rows;
}

std::string format_row(const LossReport &r) {
  std::ostringstream os;
  os.precision(17);
  os << r.iteration << ',' << r.total << ',' << r.pseudo_fraction;
  return os.str();
}

} // namespace

TrainingResult run_training(const TrainingRun &run, std::shared_ptr<const TrainingPool> pool,
                            const std::optional<std::filesystem::path> &resume,
                            const std::function<void(const LossReport &)> &on_step) {
  run.train.validate();
  run.model.validate();
  validate_specs(run.pseudo);
  std::filesystem::create_directories(run.output_dir);

  Autoencoder model(run.model, init_seed(run.train.seed));
  auto selector = std::make_shared<const InputSelector>(std::move(pool), run.pseudo);
  Trainer trainer(model, run.train, selector);

  const auto log_path = run.output_dir / "loss.csv";
  std::vector<std::string> previous_rows;
  if (resume) {
    trainer.resume(read_checkpoint(*resume));
    previous_rows = kept_log_rows(log_path, trainer.completed());
    spdlog::info("resumed from {} at iteration {}", resume->string(), trainer.completed());
  }
  std::ofstream log(log_path, std::ios::trunc);
  if (!log)
    throw TrainingError("cannot write loss log " + log_path.string());
  log << "iter,loss,pseudo_frac\n";
  for (const auto &row : previous_rows)
    log << row << '\n';

  TrainingResult result;
  auto save = [&] {
    const auto path = run.output_dir / checkpoint_filename(trainer.completed());
    write_checkpoint(path, trainer.checkpoint(run.run_config));
    result.final_checkpoint = path;
  };

  const std::uint64_t progress_every = std::max<std::uint64_t>(1, run.train.iterations / 20);
  while (trainer.completed() < run.train.iterations) {
    LossReport report = trainer.step();
    if (!std::isfinite(report.total)) {
      std::ostringstream os;
      os << "non-finite loss at iteration " << report.iteration << " (per-sample:";
      for (double v : report.per_sample)
        os << ' ' << v;
      os << "); aborting";
      throw TrainingError(os.str());
    }
    log << format_row(report) << '\n';
    log.flush();
    if (on_step)
      on_step(report);
    if (report.iteration % progress_every == 0)
      spdlog::info("iter {}/{} loss {:.6f} pseudo_frac {:.2f}", report.iteration,
                   run.train.iterations, report.total, report.pseudo_fraction);
    if (run.train.checkpoint_every && report.iteration % run.train.checkpoint_every == 0)
      save();
    result.log.push_back(std::move(report));
  }
  if (result.final_checkpoint.empty() ||
      result.final_checkpoint.filename() != checkpoint_filename(trainer.completed()))
    save();
  return result;
}

} // namespace pseudobound
