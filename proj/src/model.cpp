#include "multipofo/model.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "multipofo/errors.hpp"

namespace multipofo {

using nlohmann::json;

MultipofoModel make_model(const ModelDims& dims, nn::Rng& rng) {
  if (dims.input_size < 1 || dims.output_size < 1 || dims.hidden1 < 1 ||
      dims.hidden2 < 1 || dims.latent < 1 || dims.horizon < 1 ||
      dims.heads < 1) {
    throw ConfigError("model dimensions must all be >= 1");
  }
  using nn::Activation;
  MultipofoModel m;
  m.dims = dims;
  m.encoder = {
      Layer("encoder.0", dims.input_size, dims.hidden1, Activation::relu),
      Layer("encoder.1", dims.hidden1, dims.hidden2, Activation::relu),
      Layer("encoder.2", dims.hidden2, dims.latent, Activation::relu),
  };
  m.decoder = {
      Layer("decoder.0", dims.latent, dims.hidden2, Activation::relu),
      Layer("decoder.1", dims.hidden2, dims.hidden1, Activation::relu),
      Layer("decoder.2", dims.hidden1, dims.output_size, Activation::identity),
  };
  for (Eigen::Index h = 0; h < dims.heads; ++h) {
    m.heads.emplace_back("head." + std::to_string(h), dims.latent,
                         dims.horizon, Activation::identity);
  }
  for (auto& l : m.encoder) nn::initialize(l, rng);
  for (auto& l : m.decoder) nn::initialize(l, rng);
  for (auto& l : m.heads) nn::initialize(l, rng);
  return m;
}

MatrixXd encode(const MultipofoModel& model, const MatrixXd& embedded) {
  MatrixXd h = nn::forward(model.encoder[0], embedded);
  h = nn::forward(model.encoder[1], h);
  return nn::forward(model.encoder[2], h);
}

VectorXd encode(const MultipofoModel& model, const VectorXd& embedded) {
  return encode(model, MatrixXd(embedded)).col(0);
}

MatrixXd reconstruct(const MultipofoModel& model, const MatrixXd& z) {
  MatrixXd h = nn::forward(model.decoder[0], z);
  h = nn::forward(model.decoder[1], h);
  return nn::forward(model.decoder[2], h);
}

VectorXd reconstruct(const MultipofoModel& model, const VectorXd& z) {
  return reconstruct(model, MatrixXd(z)).col(0);
}

MatrixXd predict(const MultipofoModel& model, const MatrixXd& z,
                 std::size_t head) {
  if (head >= model.heads.size()) {
    throw ShapeError("head index " + std::to_string(head) + " out of range (" +
                     std::to_string(model.heads.size()) + " heads)");
  }
  return nn::forward(model.heads[head], z);
}

VectorXd predict(const MultipofoModel& model, const VectorXd& z,
                 std::size_t head) {
  return predict(model, MatrixXd(z), head).col(0);
}

void freeze_encoder(MultipofoModel& model) {
  for (auto& l : model.encoder) l.frozen = true;
  for (auto& l : model.decoder) l.frozen = true;
  model.frozen_encoder = true;
  model.encoder_hash_at_freeze = encoder_hash(model);
}

namespace {

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

void fnv(std::uint64_t& h, const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= kFnvPrime;
  }
}

std::uint64_t fnv_bytes(std::string_view bytes) {
  std::uint64_t h = kFnvOffset;
  fnv(h, bytes.data(), bytes.size());
  return h;
}

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    out_.append(s);
  }
  void raw(std::string_view s) { out_.append(s); }
  std::string& bytes() { return out_; }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view in) : in_(in) {}
  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(in_[pos_++]);
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(u8()) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(u8()) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const auto n = u32();
    need(n);
    std::string s(in_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  std::string_view raw(std::size_t n) {
    need(n);
    auto s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return in_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) throw FormatError("corrupt checkpoint: truncated");
  }
  std::string_view in_;
  std::size_t pos_ = 0;
};

constexpr std::string_view kMagic = "MPOFOCKP";

json metadata(const Checkpoint& c) {
  const auto& d = c.model.dims;
  json scales = json::array();
  for (const auto& s : c.scales.scales) {
    scales.push_back({{"name", s.name},
                      {"window_len", s.window_len},
                      {"one_hot_index", s.one_hot_index},
                      {"stride", s.effective_stride()}});
  }
  return {
      {"dims",
       {{"input_size", d.input_size},
        {"output_size", d.output_size},
        {"hidden1", d.hidden1},
        {"hidden2", d.hidden2},
        {"latent", d.latent},
        {"horizon", d.horizon},
        {"heads", d.heads}}},
      {"frozen_encoder", c.model.frozen_encoder},
      {"encoder_hash_at_freeze", hex64(c.model.encoder_hash_at_freeze)},
      {"target",
       {{"horizon", c.target.horizon}, {"full_period", c.target.full_period}}},
      {"scales",
       {{"embedding_size", c.scales.embedding_size},
        {"max_window", c.scales.max_window},
        {"enabled", scales}}},
      {"config", c.config_json},
  };
}

void write_layer(Writer& w, const Layer& l) {
  w.str(l.name);
  w.u8(l.activation == nn::Activation::relu ? 1 : 0);
  w.u8(l.frozen ? 1 : 0);
  w.u64(static_cast<std::uint64_t>(l.weights.rows()));
  w.u64(static_cast<std::uint64_t>(l.weights.cols()));
  for (Eigen::Index r = 0; r < l.weights.rows(); ++r)
    for (Eigen::Index c = 0; c < l.weights.cols(); ++c) w.f64(l.weights(r, c));
  for (Eigen::Index r = 0; r < l.bias.size(); ++r) w.f64(l.bias(r));
}

Layer read_layer(Reader& r, Eigen::Index expect_in, Eigen::Index expect_out) {
  Layer l;
  l.name = r.str();
  const auto act = r.u8();
  if (act > 1) throw FormatError("corrupt checkpoint: bad activation tag");
  l.activation = act == 1 ? nn::Activation::relu : nn::Activation::identity;
  l.frozen = r.u8() != 0;
  const auto rows = static_cast<Eigen::Index>(r.u64());
  const auto cols = static_cast<Eigen::Index>(r.u64());
  if (rows != expect_out || cols != expect_in) {
    throw FormatError("corrupt checkpoint: layer '" + l.name + "' is " +
                      std::to_string(rows) + "x" + std::to_string(cols) +
                      ", expected " + std::to_string(expect_out) + "x" +
                      std::to_string(expect_in));
  }
  if (r.remaining() / 8 < static_cast<std::size_t>(rows) * (cols + 1)) {
    throw FormatError("corrupt checkpoint: truncated");
  }
  l.weights.resize(rows, cols);
  l.bias.resize(rows);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) l.weights(i, j) = r.f64();
  for (Eigen::Index i = 0; i < rows; ++i) l.bias(i) = r.f64();
  return l;
}

std::uint64_t parse_hex64(const std::string& s) {
  try {
    return std::stoull(s, nullptr, 16);
  } catch (const std::exception&) {
    throw FormatError("corrupt checkpoint: bad hash '" + s + "'");
  }
}

}  // namespace

std::uint64_t parameter_hash(std::span<const Layer> layers) {
  std::uint64_t h = kFnvOffset;
  for (const auto& l : layers) {
    const std::int64_t shape[3] = {l.weights.rows(), l.weights.cols(),
                                   l.bias.size()};
    fnv(h, shape, sizeof shape);
    fnv(h, l.weights.data(),
        static_cast<std::size_t>(l.weights.size()) * sizeof(double));
    fnv(h, l.bias.data(), static_cast<std::size_t>(l.bias.size()) * sizeof(double));
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string serialize(const Checkpoint& ckpt) {
  Writer w;
  w.raw(kMagic);
  w.u32(kCheckpointVersion);
  w.str(metadata(ckpt).dump());
  const auto& m = ckpt.model;
  w.u32(static_cast<std::uint32_t>(m.encoder.size() + m.decoder.size() +
                                   m.heads.size()));
  for (const auto& l : m.encoder) write_layer(w, l);
  for (const auto& l : m.decoder) write_layer(w, l);
  for (const auto& l : m.heads) write_layer(w, l);
  w.u32(static_cast<std::uint32_t>(ckpt.scalers.size()));
  for (const auto& [circuit, s] : ckpt.scalers) {
    w.str(circuit);
    w.f64(s.min());
    w.f64(s.max());
    w.str(s.fitted_on());
  }
  const auto checksum = fnv_bytes(w.bytes());
  w.u64(checksum);
  return std::move(w.bytes());
}

Checkpoint deserialize(std::string_view bytes) {
  if (bytes.size() < kMagic.size() + 4 + 8) {
    throw FormatError("corrupt checkpoint: truncated");
  }
  if (bytes.substr(0, kMagic.size()) != kMagic) {
    throw FormatError("not a checkpoint file (bad magic bytes)");
  }
  {
    Reader ver(bytes.substr(kMagic.size(), 4));
    const auto version = ver.u32();
    if (version != kCheckpointVersion) {
      throw FormatError("unsupported checkpoint version " +
                        std::to_string(version) + " (expected " +
                        std::to_string(kCheckpointVersion) + ")");
    }
  }
  const auto body = bytes.substr(0, bytes.size() - 8);
  Reader tail(bytes.substr(bytes.size() - 8));
  if (tail.u64() != fnv_bytes(body)) {
    throw FormatError("corrupt checkpoint: checksum mismatch (truncated or modified)");
  }

  Reader r(body);
  r.raw(kMagic.size());
  r.u32();
  Checkpoint c;
  json meta;
  try {
    meta = json::parse(r.str());
    const auto& d = meta.at("dims");
    auto& dims = c.model.dims;
    dims.input_size = d.at("input_size").get<Eigen::Index>();
    dims.output_size = d.at("output_size").get<Eigen::Index>();
    dims.hidden1 = d.at("hidden1").get<Eigen::Index>();
    dims.hidden2 = d.at("hidden2").get<Eigen::Index>();
    dims.latent = d.at("latent").get<Eigen::Index>();
    dims.horizon = d.at("horizon").get<Eigen::Index>();
    dims.heads = d.at("heads").get<Eigen::Index>();
    c.model.frozen_encoder = meta.at("frozen_encoder").get<bool>();
    c.model.encoder_hash_at_freeze =
        parse_hex64(meta.at("encoder_hash_at_freeze").get<std::string>());
    c.target.horizon = meta.at("target").at("horizon").get<Eigen::Index>();
    c.target.full_period = meta.at("target").at("full_period").get<bool>();
    const auto& sc = meta.at("scales");
    c.scales.embedding_size = sc.at("embedding_size").get<Eigen::Index>();
    c.scales.max_window = sc.at("max_window").get<Eigen::Index>();
    for (const auto& s : sc.at("enabled")) {
      multiscale::ScaleSpec spec;
      spec.name = s.at("name").get<std::string>();
      spec.window_len = s.at("window_len").get<Eigen::Index>();
      spec.one_hot_index = s.at("one_hot_index").get<Eigen::Index>();
      spec.stride = s.at("stride").get<Eigen::Index>();
      c.scales.scales.push_back(spec);
    }
    c.config_json = meta.at("config").get<std::string>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("corrupt checkpoint metadata: ") + e.what());
  }

  const auto& d = c.model.dims;
  const auto layer_count = r.u32();
  if (layer_count != 6 + static_cast<std::uint32_t>(d.heads)) {
    throw FormatError("corrupt checkpoint: unexpected layer count " +
                      std::to_string(layer_count));
  }
  c.model.encoder[0] = read_layer(r, d.input_size, d.hidden1);
  c.model.encoder[1] = read_layer(r, d.hidden1, d.hidden2);
  c.model.encoder[2] = read_layer(r, d.hidden2, d.latent);
  c.model.decoder[0] = read_layer(r, d.latent, d.hidden2);
  c.model.decoder[1] = read_layer(r, d.hidden2, d.hidden1);
  c.model.decoder[2] = read_layer(r, d.hidden1, d.output_size);
  for (Eigen::Index h = 0; h < d.heads; ++h) {
    c.model.heads.push_back(read_layer(r, d.latent, d.horizon));
  }
  const auto scaler_count = r.u32();
  for (std::uint32_t i = 0; i < scaler_count; ++i) {
    auto circuit = r.str();
    const double lo = r.f64();
    const double hi = r.f64();
    auto fitted_on = r.str();
    try {
      c.scalers.emplace(std::move(circuit),
                        data::MinMaxScaler(lo, hi, std::move(fitted_on)));
    } catch (const ValidationError& e) {
      throw FormatError(std::string("corrupt checkpoint scaler: ") + e.what());
    }
  }
  if (r.remaining() != 0) {
    throw FormatError("corrupt checkpoint: trailing bytes");
  }
  return c;
}

void save(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const auto bytes = serialize(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint: " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing checkpoint: " + path.string());
}

Checkpoint load(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw ConfigError("checkpoint not found: " + path.string());
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize(ss.str());
}

}  // namespace multipofo
