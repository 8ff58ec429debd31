#pragma once

// Two-stage training: stage 1 fits encoder + decoder on reconstruction of
// the padded input, stage 2 fits only the prediction head on the frozen
// latent representation.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "multipofo/model.hpp"
#include "multipofo/multiscale.hpp"
#include "multipofo/nn.hpp"

namespace multipofo {

enum class ScaleMixing { pooled, alternating };

struct TrainConfig {
  int stage1_epochs = 50;
  int stage2_epochs = 30;
  Eigen::Index batch_size = 32;
  nn::AdamHyper<double> adam;
  // Head-only step size; unset means adam.learning_rate.
  std::optional<double> stage2_learning_rate;
  std::uint64_t seed = 0;
  bool masked_reconstruction = false;  // ignore zero-padded positions
  ScaleMixing mixing = ScaleMixing::pooled;
  double validation_fraction = 0.0;  // holdout share of training samples

  void validate() const;
  nn::AdamHyper<double> stage2_adam() const;
};

struct TrainLog {
  struct Entry {
    int epoch = 0;  // 1-based
    std::string stage;  // recon, pred, recon_val, pred_val
    double loss = 0;
  };
  std::vector<Entry> entries;
  double wall_seconds = 0;
  std::uint64_t seed = 0;
  std::string config_hash;
  std::vector<std::size_t> samples_per_scale;  // training samples seen per epoch

  std::vector<double> losses(const std::string& stage) const;
  void append(const TrainLog& other);
};

/// `epoch,stage,loss` rows.
void write_train_log_csv(std::ostream& out, const TrainLog& log);

/// Groups sample indices into mini-batches. Pooled: one shuffled pool.
/// Alternating: per-scale shuffled batches interleaved round-robin.
std::vector<std::vector<std::size_t>> make_batches(
    std::span<const multiscale::Sample> samples,
    std::span<const std::size_t> indices, Eigen::Index batch_size,
    ScaleMixing mixing, nn::Rng& rng);

/// Trains encoder and decoder jointly to reconstruct X' from [X'; s].
/// Loss per batch is the mean over samples of ||X' - X~||^2. The heads are
/// not touched. Throws ContractError on a frozen model.
TrainLog train_stage1(MultipofoModel& model,
                      std::span<const multiscale::Sample> samples,
                      const TrainConfig& config, nn::Rng& rng);

/// Trains only the head(s) on z = Encoder([X'; s]) with loss mean
/// ||Y - Y~||^2. Requires freeze_encoder() to have been applied.
TrainLog train_stage2(MultipofoModel& model,
                      std::span<const multiscale::Sample> samples,
                      const TrainConfig& config, nn::Rng& rng);

/// Mean over samples of ||X' - Decoder(Encoder([X'; s]))||^2.
double reconstruction_loss(const MultipofoModel& model,
                           std::span<const multiscale::Sample> samples,
                           bool masked = false);

/// Same loss for a reconstructor that always outputs the mean padded
/// training input.
double constant_mean_reconstruction_loss(
    std::span<const multiscale::Sample> train,
    std::span<const multiscale::Sample> test, bool masked = false);

/// Normalized head outputs for each sample.
MatrixXd predict_samples(const MultipofoModel& model,
                         std::span<const multiscale::Sample> samples);

}  // namespace multipofo
