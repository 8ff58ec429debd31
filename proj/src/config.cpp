#include "multipofo/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

#include "multipofo/errors.hpp"

namespace multipofo {

using nlohmann::json;

namespace {

const json* find(const json& j, const char* key) {
  const auto it = j.find(key);
  return it == j.end() ? nullptr : &*it;
}

template <typename T>
T get(const json& j, const char* key, const std::string& where) {
  const auto* v = find(j, key);
  if (v == nullptr) throw ConfigError(where + ": missing key '" + key + "'");
  try {
    return v->get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + ": key '" + key + "' has the wrong type");
  }
}

template <typename T>
T get_or(const json& j, const char* key, T fallback, const std::string& where) {
  return find(j, key) == nullptr ? fallback : get<T>(j, key, where);
}

void check_keys(const json& j, std::initializer_list<const char*> allowed,
                const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : j.items()) {
    if (ok.count(key) == 0) {
      throw ConfigError(where + ": unknown key '" + key + "'");
    }
  }
}

data::Timestamp timestamp(const json& j, const char* key, const std::string& where) {
  try {
    return data::parse_timestamp(get<std::string>(j, key, where));
  } catch (const ParseError& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

std::vector<synth::SynthSpec> parse_synth(const json& j, std::chrono::seconds step) {
  const std::string where = "data.synth";
  check_keys(j, {"start", "duration", "step_minutes", "seed", "circuits"}, where);
  const auto start = find(j, "start") ? timestamp(j, "start", where)
                                      : data::parse_timestamp("2015-01-01T00:00:00Z");
  const auto duration = get<Eigen::Index>(j, "duration", where);
  if (find(j, "step_minutes")) {
    step = std::chrono::minutes(get<long>(j, "step_minutes", where));
  }
  const auto seed = get_or<std::uint64_t>(j, "seed", 0, where);
  const auto* circuits = find(j, "circuits");
  if (circuits == nullptr || !circuits->is_array() || circuits->empty()) {
    throw ConfigError(where + ": 'circuits' must be a nonempty array");
  }
  std::vector<synth::SynthSpec> out;
  std::set<std::string> ids;
  for (std::size_t k = 0; k < circuits->size(); ++k) {
    const auto& c = (*circuits)[k];
    const auto cw = where + ".circuits[" + std::to_string(k) + "]";
    check_keys(c, {"id", "base_load", "noise_std", "components"}, cw);
    synth::SynthSpec spec;
    spec.circuit_id = get<std::string>(c, "id", cw);
    if (!ids.insert(spec.circuit_id).second) {
      throw ConfigError(cw + ": duplicate circuit id '" + spec.circuit_id + "'");
    }
    spec.start = start;
    spec.step = step;
    spec.duration = duration;
    spec.base_load = get<double>(c, "base_load", cw);
    spec.noise_std = get_or<double>(c, "noise_std", 0.0, cw);
    spec.seed = seed + k;
    if (const auto* comps = find(c, "components")) {
      for (const auto& comp : *comps) {
        check_keys(comp, {"period", "amplitude", "phase"}, cw + ".components");
        spec.components.push_back({get<double>(comp, "period", cw),
                                   get<double>(comp, "amplitude", cw),
                                   get_or<double>(comp, "phase", 0.0, cw)});
      }
    }
    synth::validate(spec);
    out.push_back(std::move(spec));
  }
  return out;
}

std::vector<multiscale::ScaleSpec> parse_scales(const json& j) {
  if (!j.is_array()) throw ConfigError("scales must be an array");
  const auto defaults = multiscale::default_scales();
  std::vector<multiscale::ScaleSpec> out;
  for (std::size_t k = 0; k < j.size(); ++k) {
    const auto& s = j[k];
    const auto where = "scales[" + std::to_string(k) + "]";
    check_keys(s, {"name", "window_len", "enabled", "stride", "one_hot_index"}, where);
    multiscale::ScaleSpec spec;
    spec.name = get<std::string>(s, "name", where);
    for (const auto& d : defaults)
      if (d.name == spec.name) spec.window_len = d.window_len;
    spec.window_len = get_or<Eigen::Index>(s, "window_len", spec.window_len, where);
    spec.enabled = get_or<bool>(s, "enabled", true, where);
    spec.stride = get_or<Eigen::Index>(s, "stride", 0, where);
    spec.one_hot_index = get_or<Eigen::Index>(s, "one_hot_index", -1, where);
    out.push_back(spec);
  }
  return out;
}

ScaleMixing parse_mixing(const std::string& s) {
  if (s == "pooled") return ScaleMixing::pooled;
  if (s == "alternating") return ScaleMixing::alternating;
  throw ConfigError("train.scale_mixing must be 'pooled' or 'alternating'");
}

}  // namespace

RunConfig parse_run_config(std::string_view json_text,
                           const std::filesystem::path& base_dir) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  check_keys(j, {"data", "step_minutes", "split", "gap_policy", "scales",
                 "embedding_size", "target", "model", "train", "groups",
                 "output"},
             "config");
  RunConfig rc;
  auto& p = rc.pipeline;
  p.step = std::chrono::minutes(get_or<long>(j, "step_minutes", 30, "config"));
  if (p.step <= std::chrono::seconds{0}) {
    throw ConfigError("config: step_minutes must be > 0");
  }

  const auto* d = find(j, "data");
  if (d == nullptr) throw ConfigError("config: missing 'data' section");
  check_keys(*d, {"csv", "synth"}, "data");
  const bool has_csv = find(*d, "csv") != nullptr;
  const bool has_synth = find(*d, "synth") != nullptr;
  if (has_csv == has_synth) {
    throw ConfigError("data: exactly one of 'csv' and 'synth' must be given");
  }
  if (has_csv) {
    std::filesystem::path path = get<std::string>(*d, "csv", "data");
    rc.data.csv = path.is_absolute() || base_dir.empty() ? path : base_dir / path;
  } else {
    rc.data.synth = parse_synth(*find(*d, "synth"), p.step);
  }

  const auto* s = find(j, "split");
  if (s == nullptr) throw ConfigError("config: missing 'split' section");
  check_keys(*s, {"train_end", "test_start"}, "split");
  p.split.train_end = timestamp(*s, "train_end", "split");
  p.split.test_start = find(*s, "test_start") ? timestamp(*s, "test_start", "split")
                                              : p.split.train_end;
  if (p.split.train_end > p.split.test_start) {
    throw ConfigError("split: train_end must not be after test_start");
  }

  p.gap_policy = data::parse_gap_policy(
      get_or<std::string>(j, "gap_policy", "linear", "config"));
  if (const auto* sc = find(j, "scales")) p.scales = parse_scales(*sc);
  if (find(j, "embedding_size")) {
    p.embedding_size = get<Eigen::Index>(j, "embedding_size", "config");
  }

  if (const auto* t = find(j, "target")) {
    check_keys(*t, {"horizon", "full_period"}, "target");
    p.target.horizon = get_or<Eigen::Index>(*t, "horizon", 1, "target");
    p.target.full_period = get_or<bool>(*t, "full_period", false, "target");
    if (p.target.horizon < 1) throw ConfigError("target: horizon must be >= 1");
  }

  if (const auto* m = find(j, "model")) {
    check_keys(*m, {"hidden1", "hidden2", "latent_dim", "per_scale_heads"}, "model");
    p.model.hidden1 = get_or<Eigen::Index>(*m, "hidden1", p.model.hidden1, "model");
    p.model.hidden2 = get_or<Eigen::Index>(*m, "hidden2", p.model.hidden2, "model");
    p.model.latent = get_or<Eigen::Index>(*m, "latent_dim", p.model.latent, "model");
    p.model.per_scale_heads = get_or<bool>(*m, "per_scale_heads", false, "model");
    if (p.model.hidden1 < 1 || p.model.hidden2 < 1 || p.model.latent < 1) {
      throw ConfigError("model: widths must be >= 1");
    }
  }

  if (const auto* t = find(j, "train")) {
    const std::string w = "train";
    check_keys(*t, {"stage1_epochs", "stage2_epochs", "batch_size",
                    "learning_rate", "stage2_learning_rate", "beta1", "beta2",
                    "epsilon", "seed",
                    "masked_reconstruction", "scale_mixing",
                    "validation_fraction"},
               w);
    auto& tc = p.train;
    tc.stage1_epochs = get_or<int>(*t, "stage1_epochs", tc.stage1_epochs, w);
    tc.stage2_epochs = get_or<int>(*t, "stage2_epochs", tc.stage2_epochs, w);
    tc.batch_size = get_or<Eigen::Index>(*t, "batch_size", tc.batch_size, w);
    tc.adam.learning_rate = get_or<double>(*t, "learning_rate", tc.adam.learning_rate, w);
    if (find(*t, "stage2_learning_rate")) {
      tc.stage2_learning_rate = get_or<double>(*t, "stage2_learning_rate", 0.0, w);
    }
    tc.adam.beta1 = get_or<double>(*t, "beta1", tc.adam.beta1, w);
    tc.adam.beta2 = get_or<double>(*t, "beta2", tc.adam.beta2, w);
    tc.adam.epsilon = get_or<double>(*t, "epsilon", tc.adam.epsilon, w);
    tc.seed = get_or<std::uint64_t>(*t, "seed", tc.seed, w);
    tc.masked_reconstruction = get_or<bool>(*t, "masked_reconstruction", false, w);
    tc.mixing = parse_mixing(get_or<std::string>(*t, "scale_mixing", "pooled", w));
    tc.validation_fraction = get_or<double>(*t, "validation_fraction", 0.0, w);
  }
  p.train.validate();

  if (const auto* g = find(j, "groups")) {
    if (!g->is_object()) throw ConfigError("groups must be an object");
    for (const auto& [name, members] : g->items()) {
      try {
        p.groups[name] = members.get<std::vector<std::string>>();
      } catch (const json::exception&) {
        throw ConfigError("groups." + name + " must be an array of circuit ids");
      }
      if (p.groups[name].empty()) {
        throw ConfigError("groups." + name + " is empty");
      }
    }
  }

  if (const auto* o = find(j, "output")) {
    check_keys(*o, {"dir"}, "output");
    if (find(*o, "dir")) {
      std::filesystem::path dir = get<std::string>(*o, "dir", "output");
      rc.out_dir = dir.is_absolute() || base_dir.empty() ? dir : base_dir / dir;
    }
  }

  multiscale::resolve_scales(p.scales, p.embedding_size);
  return rc;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw ConfigError("config file not found: " + path.string());
  }
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str(), path.parent_path());
}

std::string canonical_json(const RunConfig& config) {
  const auto& p = config.pipeline;
  json data;
  if (config.data.csv) {
    data["csv"] = config.data.csv->string();
  } else if (config.data.synth) {
    json circuits = json::array();
    for (const auto& s : *config.data.synth) {
      json comps = json::array();
      for (const auto& c : s.components)
        comps.push_back({{"period", c.period}, {"amplitude", c.amplitude}, {"phase", c.phase}});
      circuits.push_back({{"id", s.circuit_id},
                          {"start", data::format_timestamp(s.start)},
                          {"step_seconds", s.step.count()},
                          {"duration", s.duration},
                          {"base_load", s.base_load},
                          {"noise_std", s.noise_std},
                          {"seed", s.seed},
                          {"components", comps}});
    }
    data["synth"] = circuits;
  }
  json scales = json::array();
  for (const auto& s : p.scales) {
    scales.push_back({{"name", s.name},
                      {"window_len", s.window_len},
                      {"enabled", s.enabled},
                      {"stride", s.stride},
                      {"one_hot_index", s.one_hot_index}});
  }
  const auto& t = p.train;
  const json j = {
      {"data", data},
      {"step_seconds", p.step.count()},
      {"split",
       {{"train_end", data::format_timestamp(p.split.train_end)},
        {"test_start", data::format_timestamp(p.split.test_start)}}},
      {"gap_policy", data::to_string(p.gap_policy)},
      {"scales", scales},
      {"embedding_size", p.embedding_size ? json(*p.embedding_size) : json(nullptr)},
      {"target", {{"horizon", p.target.horizon}, {"full_period", p.target.full_period}}},
      {"model",
       {{"hidden1", p.model.hidden1},
        {"hidden2", p.model.hidden2},
        {"latent_dim", p.model.latent},
        {"per_scale_heads", p.model.per_scale_heads}}},
      {"train",
       {{"stage1_epochs", t.stage1_epochs},
        {"stage2_epochs", t.stage2_epochs},
        {"batch_size", t.batch_size},
        {"learning_rate", t.adam.learning_rate},
        {"stage2_learning_rate", t.stage2_adam().learning_rate},
        {"beta1", t.adam.beta1},
        {"beta2", t.adam.beta2},
        {"epsilon", t.adam.epsilon},
        {"seed", t.seed},
        {"masked_reconstruction", t.masked_reconstruction},
        {"scale_mixing", t.mixing == ScaleMixing::pooled ? "pooled" : "alternating"},
        {"validation_fraction", t.validation_fraction}}},
      {"groups", p.groups},
  };
  return j.dump();
}

std::string config_hash(const RunConfig& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : canonical_json(config)) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return hex64(h);
}

void set_synth_seed(RunConfig& config, std::uint64_t seed) {
  if (!config.data.synth) return;
  for (std::size_t k = 0; k < config.data.synth->size(); ++k) {
    (*config.data.synth)[k].seed = seed + k;
  }
}

std::vector<data::TimeSeries> load_series(const RunConfig& config) {
  if (config.data.csv) {
    return data::ingest_csv(*config.data.csv, {config.pipeline.step});
  }
  if (!config.data.synth) throw ConfigError("no data source configured");
  std::vector<data::TimeSeries> out;
  for (const auto& spec : *config.data.synth) out.push_back(synth::generate(spec));
  return out;
}

}  // namespace multipofo
