#include "multipofo/training.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <numeric>
#include <ostream>

#include "multipofo/errors.hpp"
#include "multipofo/text.hpp"

namespace multipofo {

using multiscale::Sample;
using Tape = nn::LayerTape<double>;

void TrainConfig::validate() const {
  if (stage1_epochs < 1 || stage2_epochs < 1) {
    throw ConfigError("epoch counts must be >= 1");
  }
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(adam.learning_rate >= 0)) throw ConfigError("learning_rate must be >= 0");
  if (stage2_learning_rate && !(*stage2_learning_rate >= 0)) {
    throw ConfigError("stage2_learning_rate must be >= 0");
  }
  if (!(adam.beta1 >= 0 && adam.beta1 < 1 && adam.beta2 >= 0 && adam.beta2 < 1)) {
    throw ConfigError("Adam betas must lie in [0, 1)");
  }
  if (!(adam.epsilon > 0)) throw ConfigError("Adam epsilon must be > 0");
  if (!(validation_fraction >= 0 && validation_fraction < 1)) {
    throw ConfigError("validation_fraction must lie in [0, 1)");
  }
}

nn::AdamHyper<double> TrainConfig::stage2_adam() const {
  auto h = adam;
  if (stage2_learning_rate) h.learning_rate = *stage2_learning_rate;
  return h;
}

std::vector<double> TrainLog::losses(const std::string& stage) const {
  std::vector<double> out;
  for (const auto& e : entries)
    if (e.stage == stage) out.push_back(e.loss);
  return out;
}

void TrainLog::append(const TrainLog& other) {
  entries.insert(entries.end(), other.entries.begin(), other.entries.end());
  wall_seconds += other.wall_seconds;
  if (samples_per_scale.empty()) samples_per_scale = other.samples_per_scale;
}

void write_train_log_csv(std::ostream& out, const TrainLog& log) {
  out << "epoch,stage,loss\n";
  for (const auto& e : log.entries) {
    out << e.epoch << ',' << e.stage << ',' << text::format_double(e.loss)
        << '\n';
  }
}

std::vector<std::vector<std::size_t>> make_batches(
    std::span<const Sample> samples, std::span<const std::size_t> indices,
    Eigen::Index batch_size, ScaleMixing mixing, nn::Rng& rng) {
  const auto bs = static_cast<std::size_t>(batch_size);
  std::vector<std::vector<std::size_t>> batches;
  const auto chunk = [&](std::vector<std::size_t>& pool,
                         std::vector<std::vector<std::size_t>>& into) {
    std::shuffle(pool.begin(), pool.end(), rng);
    for (std::size_t i = 0; i < pool.size(); i += bs) {
      into.emplace_back(pool.begin() + static_cast<std::ptrdiff_t>(i),
                        pool.begin() + static_cast<std::ptrdiff_t>(
                                           std::min(pool.size(), i + bs)));
    }
  };
  if (mixing == ScaleMixing::pooled) {
    std::vector<std::size_t> pool(indices.begin(), indices.end());
    chunk(pool, batches);
    return batches;
  }
  Eigen::Index scale_count = 0;
  for (auto i : indices) scale_count = std::max(scale_count, samples[i].scale + 1);
  std::vector<std::vector<std::vector<std::size_t>>> per_scale(
      static_cast<std::size_t>(scale_count));
  for (Eigen::Index s = 0; s < scale_count; ++s) {
    std::vector<std::size_t> pool;
    for (auto i : indices)
      if (samples[i].scale == s) pool.push_back(i);
    chunk(pool, per_scale[static_cast<std::size_t>(s)]);
  }
  for (std::size_t round = 0;; ++round) {
    bool any = false;
    for (auto& list : per_scale) {
      if (round < list.size()) {
        batches.push_back(std::move(list[round]));
        any = true;
      }
    }
    if (!any) break;
  }
  return batches;
}

namespace {

struct Holdout {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
};

Holdout split_holdout(std::size_t n, double fraction, nn::Rng& rng) {
  Holdout h;
  h.train.resize(n);
  std::iota(h.train.begin(), h.train.end(), std::size_t{0});
  if (fraction <= 0) return h;
  std::shuffle(h.train.begin(), h.train.end(), rng);
  const auto n_val = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n)));
  h.validation.assign(h.train.end() - static_cast<std::ptrdiff_t>(n_val), h.train.end());
  h.train.resize(n - n_val);
  std::sort(h.train.begin(), h.train.end());
  std::sort(h.validation.begin(), h.validation.end());
  return h;
}

MatrixXd gather_embedded(std::span<const Sample> samples,
                         std::span<const std::size_t> idx) {
  MatrixXd x(samples[idx[0]].embedded.size(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t j = 0; j < idx.size(); ++j)
    x.col(static_cast<Eigen::Index>(j)) = samples[idx[j]].embedded;
  return x;
}

MatrixXd gather_padded(std::span<const Sample> samples,
                       std::span<const std::size_t> idx) {
  MatrixXd x(samples[idx[0]].padded.size(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t j = 0; j < idx.size(); ++j)
    x.col(static_cast<Eigen::Index>(j)) = samples[idx[j]].padded;
  return x;
}

MatrixXd gather_mask(std::span<const Sample> samples,
                     std::span<const std::size_t> idx, Eigen::Index rows) {
  MatrixXd m = MatrixXd::Zero(rows, static_cast<Eigen::Index>(idx.size()));
  for (std::size_t j = 0; j < idx.size(); ++j)
    m.col(static_cast<Eigen::Index>(j)).head(samples[idx[j]].window_len).setOnes();
  return m;
}

void check_samples(const MultipofoModel& model, std::span<const Sample> samples,
                   const char* stage) {
  if (samples.empty()) {
    throw ValidationError(std::string(stage) + ": no training samples");
  }
  for (const auto& s : samples) {
    if (s.embedded.size() != model.dims.input_size ||
        s.padded.size() != model.dims.output_size ||
        s.target.size() != model.dims.horizon) {
      throw ShapeError(std::string(stage) + ": sample from circuit '" +
                       s.circuit_id + "' does not match model dimensions");
    }
    if (model.dims.heads > 1 && s.scale >= model.dims.heads) {
      throw ShapeError(std::string(stage) + ": no head for scale index " +
                       std::to_string(s.scale));
    }
  }
}

void check_loss(double loss, const char* stage, int epoch, std::size_t batch) {
  if (!std::isfinite(loss)) {
    throw TrainingError(std::string(stage) + ": non-finite loss at epoch " +
                        std::to_string(epoch) + ", batch " +
                        std::to_string(batch));
  }
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

std::vector<std::size_t> count_per_scale(std::span<const Sample> samples,
                                         std::span<const std::size_t> idx) {
  std::vector<std::size_t> counts;
  for (auto i : idx) {
    const auto s = static_cast<std::size_t>(samples[i].scale);
    if (counts.size() <= s) counts.resize(s + 1, 0);
    ++counts[s];
  }
  return counts;
}

// Stage-1 loss over a set of samples without touching parameters.
double recon_loss_over(const MultipofoModel& model, std::span<const Sample> samples,
                       std::span<const std::size_t> idx, bool masked) {
  const auto x = gather_embedded(samples, idx);
  const auto target = gather_padded(samples, idx);
  const auto out = reconstruct(model, encode(model, x));
  if (masked) {
    const auto mask = gather_mask(samples, idx, target.rows());
    return nn::batch_mse_loss<double>(out, target, &mask).value;
  }
  return nn::batch_mse_loss<double>(out, target).value;
}

}  // namespace

TrainLog train_stage1(MultipofoModel& model, std::span<const Sample> samples,
                      const TrainConfig& config, nn::Rng& rng) {
  config.validate();
  if (model.frozen_encoder) {
    throw ContractError("stage 1: encoder is frozen; stage 1 must run first");
  }
  check_samples(model, samples, "stage 1");
  const auto t0 = std::chrono::steady_clock::now();

  TrainLog log;
  log.seed = config.seed;
  auto holdout = split_holdout(samples.size(), config.validation_fraction, rng);
  if (holdout.train.empty()) {
    throw ValidationError("stage 1: holdout leaves no training samples");
  }
  log.samples_per_scale = count_per_scale(samples, holdout.train);

  std::array<Layer*, 6> layers = {&model.encoder[0], &model.encoder[1],
                                  &model.encoder[2], &model.decoder[0],
                                  &model.decoder[1], &model.decoder[2]};
  std::array<Tape, 6> tapes;
  std::array<const Tape*, 6> tape_ptrs;
  for (std::size_t i = 0; i < 6; ++i) tape_ptrs[i] = &tapes[i];
  nn::AdamState<double> state;

  for (int epoch = 1; epoch <= config.stage1_epochs; ++epoch) {
    const auto batches = make_batches(samples, holdout.train, config.batch_size,
                                      config.mixing, rng);
    double total = 0.0;
    std::size_t seen = 0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const auto& idx = batches[b];
      MatrixXd h = gather_embedded(samples, idx);
      for (std::size_t l = 0; l < 6; ++l) h = nn::forward(*layers[l], h, tapes[l]);
      const MatrixXd target = gather_padded(samples, idx);
      nn::Loss<double> loss;
      if (config.masked_reconstruction) {
        const MatrixXd mask = gather_mask(samples, idx, target.rows());
        loss = nn::batch_mse_loss<double>(h, target, &mask);
      } else {
        loss = nn::batch_mse_loss<double>(h, target);
      }
      check_loss(loss.value, "stage 1", epoch, b);
      MatrixXd grad = std::move(loss.grad);
      for (std::size_t l = 6; l-- > 0;) grad = nn::backward(*layers[l], grad, tapes[l]);
      try {
        nn::adam_step<double>(layers, tape_ptrs, state, config.adam);
      } catch (const TrainingError& e) {
        throw TrainingError("stage 1, epoch " + std::to_string(epoch) +
                            ", batch " + std::to_string(b) + ": " + e.what());
      }
      for (auto& t : tapes) t.clear();
      total += loss.value * static_cast<double>(idx.size());
      seen += idx.size();
    }
    log.entries.push_back({epoch, "recon", total / static_cast<double>(seen)});
    if (!holdout.validation.empty()) {
      const double v = recon_loss_over(model, samples, holdout.validation,
                                       config.masked_reconstruction);
      check_loss(v, "stage 1 validation", epoch, 0);
      log.entries.push_back({epoch, "recon_val", v});
    }
  }
  log.wall_seconds = seconds_since(t0);
  return log;
}

TrainLog train_stage2(MultipofoModel& model, std::span<const Sample> samples,
                      const TrainConfig& config, nn::Rng& rng) {
  config.validate();
  if (!model.frozen_encoder) {
    throw ContractError("stage 2: encoder must be frozen before head training");
  }
  check_samples(model, samples, "stage 2");
  const auto t0 = std::chrono::steady_clock::now();

  TrainLog log;
  log.seed = config.seed;
  auto holdout = split_holdout(samples.size(), config.validation_fraction, rng);
  if (holdout.train.empty()) {
    throw ValidationError("stage 2: holdout leaves no training samples");
  }
  log.samples_per_scale = count_per_scale(samples, holdout.train);

  // The encoder is frozen, so the latent codes are fixed for all of stage 2.
  std::vector<std::size_t> all(samples.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  const MatrixXd z = encode(model, gather_embedded(samples, all));
  MatrixXd targets(model.dims.horizon, static_cast<Eigen::Index>(samples.size()));
  for (std::size_t i = 0; i < samples.size(); ++i)
    targets.col(static_cast<Eigen::Index>(i)) = samples[i].target;

  const std::size_t head_count = model.heads.size();
  std::vector<Layer*> layers;
  for (auto& h : model.heads) layers.push_back(&h);
  std::vector<Tape> tapes(head_count);
  std::vector<const Tape*> tape_ptrs;
  for (auto& t : tapes) tape_ptrs.push_back(&t);
  nn::AdamState<double> state;

  // Loss and gradients of one batch, routed per head; returns mean loss.
  auto batch_pass = [&](std::span<const std::size_t> idx, bool record) {
    const double inv_b = 1.0 / static_cast<double>(idx.size());
    double loss = 0.0;
    for (std::size_t h = 0; h < head_count; ++h) {
      std::vector<Eigen::Index> cols;
      for (auto i : idx)
        if (head_for_scale(model, samples[i].scale) == h)
          cols.push_back(static_cast<Eigen::Index>(i));
      if (cols.empty()) {
        if (record) {
          tapes[h].weight_grad = MatrixXd::Zero(model.dims.horizon, model.dims.latent);
          tapes[h].bias_grad = VectorXd::Zero(model.dims.horizon);
          tapes[h].has_gradients = true;
        }
        continue;
      }
      const MatrixXd zb = z(Eigen::all, cols);
      const MatrixXd tb = targets(Eigen::all, cols);
      if (record) {
        const MatrixXd pred = nn::forward(model.heads[h], zb, tapes[h]);
        auto l = nn::mse_loss<double>(pred, tb);
        loss += l.value;
        nn::backward(model.heads[h], l.grad * inv_b, tapes[h]);
      } else {
        loss += nn::mse_loss<double>(nn::forward(model.heads[h], zb), tb).value;
      }
    }
    return loss * inv_b;
  };

  const auto hyper = config.stage2_adam();
  for (int epoch = 1; epoch <= config.stage2_epochs; ++epoch) {
    const auto batches = make_batches(samples, holdout.train, config.batch_size,
                                      config.mixing, rng);
    double total = 0.0;
    std::size_t seen = 0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const auto& idx = batches[b];
      const double loss = batch_pass(idx, true);
      check_loss(loss, "stage 2", epoch, b);
      try {
        nn::adam_step<double>(layers, tape_ptrs, state, hyper);
      } catch (const TrainingError& e) {
        throw TrainingError("stage 2, epoch " + std::to_string(epoch) +
                            ", batch " + std::to_string(b) + ": " + e.what());
      }
      for (auto& t : tapes) t.clear();
      total += loss * static_cast<double>(idx.size());
      seen += idx.size();
    }
    log.entries.push_back({epoch, "pred", total / static_cast<double>(seen)});
    if (!holdout.validation.empty()) {
      const double v = batch_pass(holdout.validation, false);
      check_loss(v, "stage 2 validation", epoch, 0);
      log.entries.push_back({epoch, "pred_val", v});
    }
  }
  if (encoder_hash(model) != model.encoder_hash_at_freeze) {
    throw ContractError("stage 2 modified frozen encoder parameters");
  }
  log.wall_seconds = seconds_since(t0);
  return log;
}

double reconstruction_loss(const MultipofoModel& model,
                           std::span<const Sample> samples, bool masked) {
  if (samples.empty()) throw ValidationError("reconstruction_loss: no samples");
  std::vector<std::size_t> all(samples.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return recon_loss_over(model, samples, all, masked);
}

double constant_mean_reconstruction_loss(std::span<const Sample> train,
                                         std::span<const Sample> test,
                                         bool masked) {
  if (train.empty() || test.empty()) {
    throw ValidationError("constant_mean_reconstruction_loss: no samples");
  }
  VectorXd mean = VectorXd::Zero(train[0].padded.size());
  for (const auto& s : train) mean += s.padded;
  mean /= static_cast<double>(train.size());
  double total = 0.0;
  for (const auto& s : test) {
    VectorXd diff = mean - s.padded;
    if (masked) diff.tail(diff.size() - s.window_len).setZero();
    total += diff.squaredNorm();
  }
  return total / static_cast<double>(test.size());
}

MatrixXd predict_samples(const MultipofoModel& model,
                         std::span<const Sample> samples) {
  MatrixXd out(model.dims.horizon, static_cast<Eigen::Index>(samples.size()));
  if (samples.empty()) return out;
  std::vector<std::size_t> all(samples.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  const MatrixXd z = encode(model, gather_embedded(samples, all));
  for (std::size_t h = 0; h < model.heads.size(); ++h) {
    std::vector<Eigen::Index> cols;
    for (std::size_t i = 0; i < samples.size(); ++i)
      if (head_for_scale(model, samples[i].scale) == h)
        cols.push_back(static_cast<Eigen::Index>(i));
    if (cols.empty()) continue;
    out(Eigen::all, cols) = predict(model, MatrixXd(z(Eigen::all, cols)), h);
  }
  return out;
}

}  // namespace multipofo
