// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pseudobound/model.hpp"
#include "pseudobound/optim.hpp"
#include "pseudobound/synth.hpp"

namespace pseudobound {

struct TrainingConfig {
  double learning_rate = 1e-4;
  std::size_t batch_size = 4;
  std::uint64_t iterations = 0; // explicit budget, required
  std::uint64_t checkpoint_every = 0; // 0: final checkpoint only
  std::uint64_t seed = 0;
  /// Optional lower bound on each pseudo sample's (negative) loss. Once hit,
  /// that sample contributes no gradient.
  std::optional<double> pseudo_loss_floor;

  void validate() const;
};

struct LossReport {
  std::uint64_t iteration = 0;
  double total = 0.0;              // mean of per_sample
  std::vector<double> per_sample;  // signed losses
  double pseudo_fraction = 0.0;
};

/// Squared Frobenius norm of the difference divided by the element count.
double reconstruction_mse(std::span<const float> x_hat, std::span<const float> x);
double reconstruction_mse(const Tensor &x_hat, const Tensor &x);

/// +mse for normal samples, -mse for pseudo anomalies.
double signed_sample_loss(const Tensor &x_hat, const Tensor &x, bool is_pseudo);

/**
 * Mean signed loss over a batch (leading axis) and its gradient with
 * respect to the reconstruction. Templated so gradient checks can run in
 * double precision through the same code.
 */
template <typename T>
double signed_batch_loss(const BasicTensor<T> &reconstruction, const BasicTensor<T> &input,
                         std::span<const std::uint8_t> is_pseudo, BasicTensor<T> *gradient,
                         std::vector<double> *per_sample = nullptr,
                         std::optional<double> pseudo_floor = std::nullopt);

/// Stacks clips into a B x T x C x H x W batch.
Tensor stack_clips(std::span<const Clip> clips);

/// One optimizer update on an assembled batch.
LossReport train_step(Autoencoder &model, Adam<float> &optimizer, const Tensor &batch,
                      std::span<const std::uint8_t> is_pseudo,
                      std::optional<double> pseudo_floor = std::nullopt);

struct AssembledBatch {
  Tensor batch;
  std::vector<std::uint8_t> is_pseudo;
};

/// Per-sample choice between aligned normal and pseudo candidates: sample i
/// takes pseudo[i] when a uniform draw falls below p.
AssembledBatch assemble_batch(std::span<const Clip> normal, std::span<const Clip> pseudo,
                              double p, Rng &rng);

/// Candidate batches in, one update out.
LossReport train_iteration(Autoencoder &model, Adam<float> &optimizer,
                           std::span<const Clip> normal, std::span<const Clip> pseudo,
                           double p, Rng &rng);

/// Random streams derived from the run seed.
struct TrainingStreams {
  Rng select;
  Rng data;
  Rng synth;

  static TrainingStreams from_seed(std::uint64_t seed);
  nlohmann::json to_json() const;
  void restore(const nlohmann::json &j);
};

/// Model initialization seed derived from the run seed.
std::uint64_t init_seed(std::uint64_t seed);

/**
 * Iterates training with lazy pseudo synthesis: each batch slot draws its
 * input through the selector, so only selected pseudo clips are built.
 */
class Trainer {
public:
  Trainer(Autoencoder &model, TrainingConfig config,
          std::shared_ptr<const InputSelector> selector);

  LossReport step();

  std::uint64_t completed() const noexcept { return completed_; }
  Adam<float> &optimizer() noexcept { return optimizer_; }
  const TrainingConfig &config() const noexcept { return config_; }

  Checkpoint checkpoint(const std::string &run_config) const;
  void resume(const Checkpoint &ckpt);

private:
  Autoencoder &model_;
  TrainingConfig config_;
  std::shared_ptr<const InputSelector> selector_;
  Adam<float> optimizer_;
  TrainingStreams streams_;
  std::uint64_t completed_ = 0;
};

struct TrainingRun {
  AutoencoderConfig model;
  TrainingConfig train;
  std::vector<PseudoSpec> pseudo;
  std::filesystem::path output_dir;
  std::string run_config; // JSON embedded in checkpoints
};

struct TrainingResult {
  std::filesystem::path final_checkpoint;
  std::vector<LossReport> log;
};

/**
 * Full loop: writes `loss.csv` (iter,loss,pseudo_frac) and
 * `ckpt_<iter>.bin` files into the output directory. When resuming, log rows
 * after the checkpoint's iteration are dropped and training continues at
 * the next iteration. A non-finite loss aborts with TrainingError.
 */
TrainingResult run_training(const TrainingRun &run, std::shared_ptr<const TrainingPool> pool,
                            const std::optional<std::filesystem::path> &resume = std::nullopt,
                            const std::function<void(const LossReport &)> &on_step = {});

} // namespace pseudobound
