#pragma once

// Shared encoder, mirrored decoder and linear prediction head, plus the
// versioned binary checkpoint that carries them together with the scale
// layout and per-circuit scalers needed for inference.

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "multipofo/data.hpp"
#include "multipofo/multiscale.hpp"
#include "multipofo/nn.hpp"

namespace multipofo {

using Layer = nn::DenseLayer<double>;
using nn::MatrixXd;
using nn::VectorXd;

struct ModelDims {
  Eigen::Index input_size = 0;   // L_max + I
  Eigen::Index output_size = 0;  // L_max
  Eigen::Index hidden1 = 256;
  Eigen::Index hidden2 = 128;
  Eigen::Index latent = 64;      // D
  Eigen::Index horizon = 1;      // H
  Eigen::Index heads = 1;        // 1, or one head per scale

  friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

/// Encoder: input -> hidden1 -> hidden2 -> latent, all ReLU.
/// Decoder: latent -> hidden2 -> hidden1 -> output, ReLU, ReLU, identity.
/// Head(s): latent -> horizon, identity.
struct MultipofoModel {
  ModelDims dims;
  std::array<Layer, 3> encoder;
  std::array<Layer, 3> decoder;
  std::vector<Layer> heads;
  bool frozen_encoder = false;
  std::uint64_t encoder_hash_at_freeze = 0;
};

/// Builds the topology and initializes weights (He-uniform for ReLU layers,
/// Glorot-uniform otherwise; zero biases) from `rng`.
MultipofoModel make_model(const ModelDims& dims, nn::Rng& rng);

/// z for each column of `embedded` ((L_max + I) x batch).
MatrixXd encode(const MultipofoModel& model, const MatrixXd& embedded);
VectorXd encode(const MultipofoModel& model, const VectorXd& embedded);

/// Reconstruction of the padded input X' from z.
MatrixXd reconstruct(const MultipofoModel& model, const MatrixXd& z);
VectorXd reconstruct(const MultipofoModel& model, const VectorXd& z);

/// W_pred z + b_pred with the given head.
MatrixXd predict(const MultipofoModel& model, const MatrixXd& z,
                 std::size_t head = 0);
VectorXd predict(const MultipofoModel& model, const VectorXd& z,
                 std::size_t head = 0);

/// Head index used for samples of scale `scale`.
inline std::size_t head_for_scale(const MultipofoModel& model,
                                  Eigen::Index scale) {
  return model.heads.size() == 1 ? 0 : static_cast<std::size_t>(scale);
}

/// Marks encoder and decoder layers frozen and records the encoder hash.
void freeze_encoder(MultipofoModel& model);

/// FNV-1a over layer shapes and the raw bytes of every weight and bias.
std::uint64_t parameter_hash(std::span<const Layer> layers);
inline std::uint64_t encoder_hash(const MultipofoModel& m) {
  return parameter_hash(m.encoder);
}
inline std::uint64_t decoder_hash(const MultipofoModel& m) {
  return parameter_hash(m.decoder);
}
inline std::uint64_t head_hash(const MultipofoModel& m) {
  return parameter_hash(m.heads);
}

std::string hex64(std::uint64_t v);

/// Everything `predict` and `evaluate` need besides input data.
struct Checkpoint {
  MultipofoModel model;
  multiscale::ScaleSet scales;
  multiscale::TargetSpec target;
  std::map<std::string, data::MinMaxScaler> scalers;  // by circuit id
  std::string config_json;  // canonical echo of the training config
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Binary layout (all integers and floats little-endian):
///   "MPOFOCKP" | u32 version | u32 n + n bytes of metadata JSON |
///   u32 layer count | per layer: str name, u8 activation, u8 frozen,
///   u64 rows, u64 cols, rows*cols f64 (row-major), rows f64 bias |
///   u32 scaler count | per scaler: str circuit, f64 min, f64 max,
///   str fitted_on | u64 FNV-1a of all preceding bytes.
/// Strings are u32 length + bytes.
std::string serialize(const Checkpoint& ckpt);
Checkpoint deserialize(std::string_view bytes);

void save(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load(const std::filesystem::path& path);

}  // namespace multipofo
