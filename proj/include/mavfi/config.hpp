// SPDX-License-Identifier: Apache-2.0
//
// Run configuration records and their JSON form. Every field is optional in
// the file (defaults below); unknown keys are rejected so that a typo in an
// ablation config cannot silently fall back to a default.
#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mavfi/error.hpp"

namespace mavfi {

using Json = nlohmann::ordered_json;

struct ModelConfig {
  int depth = 4;
  std::vector<int> channels{64, 96, 144, 192, 256};
  int first_layer_kernel = 7;
  int other_kernels = 3;
  int ifblock_convs = 6;
  int deconv_kernel = 4;
  /// IFBlock hidden width = factor * level channel count.
  int ifblock_width_factor = 2;
  bool use_frame_features = true;
  bool use_intermediate_feature = true;
  bool use_flow_residual = true;
  double width_multiplier = 1.0;

  int level_channels(int level) const {
    return std::max(1, static_cast<int>(std::lround(channels.at(static_cast<std::size_t>(level)) * width_multiplier)));
  }
  int block_width(int level) const { return ifblock_width_factor * level_channels(level); }
  int pad_multiple() const { return 1 << depth; }

  void validate() const {
    if (depth < 1 || depth > 5) throw ConfigError("model.depth must be in [1,5], got " + std::to_string(depth));
    if (static_cast<int>(channels.size()) < depth)
      throw ConfigError("model.channels lists " + std::to_string(channels.size()) + " widths but depth is " +
                        std::to_string(depth));
    for (std::size_t i = 1; i < channels.size(); ++i)
      if (channels[i] <= channels[i - 1]) throw ConfigError("model.channels must be strictly increasing");
    if (!(width_multiplier > 0)) throw ConfigError("model.width_multiplier must be positive");
    for (int i = 0; i < depth; ++i)
      if (channels[static_cast<std::size_t>(i)] * width_multiplier < 4 - 1e-9)
        throw ConfigError("model.width_multiplier shrinks level " + std::to_string(i) + " below 4 channels");
    if (first_layer_kernel < 1 || first_layer_kernel % 2 == 0 || other_kernels < 1 || other_kernels % 2 == 0)
      throw ConfigError("model kernels must be odd and positive");
    if (ifblock_convs < 3) throw ConfigError("model.ifblock_convs must be >= 3 (skip spans conv 2 to the last conv)");
    if (deconv_kernel != 4) throw ConfigError("model.deconv_kernel must be 4 (stride-2 doubling with padding 1)");
    if (ifblock_width_factor < 1) throw ConfigError("model.ifblock_width_factor must be >= 1");
  }
};

struct LossWeights {
  double alpha = 1.0;
  double beta = 0.01;
  double gamma = 0.01;

  void validate() const {
    if (alpha < 0 || beta < 0 || gamma < 0) throw ConfigError("loss weights must be nonnegative");
    if (alpha + beta + gamma <= 0) throw ConfigError("at least one loss weight must be positive");
  }
};

struct TrainConfig {
  int epochs = 300;
  /// Overrides epochs when positive.
  int steps = 0;
  int batch_size = 6;
  double lr_start = 3e-4;
  double lr_end = 3e-5;
  double weight_decay = 1e-4;
  std::uint64_t seed = 0;
  int checkpoint_every = 0;
  int eval_every = 100;
  double clip_grad_norm = 0.0;
  double holdout_fraction = 0.1;
  bool zero_flow_init = true;

  void validate() const {
    if (epochs < 1) throw ConfigError("train.epochs must be >= 1");
    if (steps < 0) throw ConfigError("train.steps must be >= 0");
    if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
    if (!(lr_end > 0) || lr_start < lr_end) throw ConfigError("train requires lr_start >= lr_end > 0");
    if (weight_decay < 0) throw ConfigError("train.weight_decay must be nonnegative");
    if (holdout_fraction < 0 || holdout_fraction >= 1) throw ConfigError("train.holdout_fraction must be in [0,1)");
  }
};

/// Parameters of the synthetic scene distribution.
struct DataConfig {
  int width = 64;
  int height = 64;
  int min_sprites = 1;
  int max_sprites = 3;
  double min_size = 10.0;
  double max_size = 22.0;
  double max_speed = 6.0;
  double max_accel = 6.0;
  double accel_probability = 0.5;
  double rotation_probability = 0.0;
  double max_rotation = 0.3;
  double t = 0.5;

  void validate() const {
    if (width < 8 || height < 8) throw ConfigError("data canvas must be at least 8x8");
    if (min_sprites < 0 || max_sprites < min_sprites) throw ConfigError("data sprite counts invalid");
    if (!(min_size > 0) || max_size < min_size) throw ConfigError("data sprite sizes invalid");
    if (!(t > 0 && t < 1)) throw ConfigError("data.t must be in (0,1)");
  }
};

struct RunConfig {
  ModelConfig model;
  LossWeights loss;
  TrainConfig train;
  DataConfig data;

  void validate() const {
    model.validate();
    loss.validate();
    train.validate();
    data.validate();
  }
};

// ---------------------------------------------------------------------------
// JSON mapping

namespace detail {

/// Reads fields from one JSON object, remembering which keys were consumed.
class FieldReader {
 public:
  FieldReader(const Json& obj, std::string section) : obj_(obj), section_(std::move(section)) {
    if (!obj_.is_object()) throw ConfigError("config section '" + section_ + "' must be an object");
  }

  template <class V>
  void read(const char* key, V& out) {
    seen_.insert(key);
    auto it = obj_.find(key);
    if (it == obj_.end()) return;
    try {
      out = it->template get<V>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError("config key '" + section_ + "." + key + "' has the wrong type");
    }
  }

  void read_rational(const char* key, double& out) {
    seen_.insert(key);
    auto it = obj_.find(key);
    if (it == obj_.end()) return;
    if (it->is_number()) {
      out = it->get<double>();
    } else if (it->is_string()) {
      const std::string s = it->get<std::string>();
      const auto slash = s.find('/');
      try {
        out = slash == std::string::npos ? std::stod(s) : std::stod(s.substr(0, slash)) / std::stod(s.substr(slash + 1));
      } catch (const std::exception&) {
        throw ConfigError("config key '" + section_ + "." + key + "' is not a number or ratio: " + s);
      }
    } else {
      throw ConfigError("config key '" + section_ + "." + key + "' has the wrong type");
    }
  }

  void finish() const {
    for (auto it = obj_.begin(); it != obj_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError("unknown config key '" + section_ + "." + it.key() + "'");
  }

 private:
  const Json& obj_;
  std::string section_;
  std::set<std::string> seen_;
};

}  // namespace detail

inline Json to_json(const ModelConfig& m) {
  return Json{{"depth", m.depth},
              {"channels", m.channels},
              {"first_layer_kernel", m.first_layer_kernel},
              {"other_kernels", m.other_kernels},
              {"ifblock_convs", m.ifblock_convs},
              {"deconv_kernel", m.deconv_kernel},
              {"ifblock_width_factor", m.ifblock_width_factor},
              {"use_frame_features", m.use_frame_features},
              {"use_intermediate_feature", m.use_intermediate_feature},
              {"use_flow_residual", m.use_flow_residual},
              {"width_multiplier", m.width_multiplier}};
}

inline Json to_json(const LossWeights& w) { return Json{{"alpha", w.alpha}, {"beta", w.beta}, {"gamma", w.gamma}}; }

inline Json to_json(const TrainConfig& t) {
  return Json{{"epochs", t.epochs},
              {"steps", t.steps},
              {"batch_size", t.batch_size},
              {"lr_start", t.lr_start},
              {"lr_end", t.lr_end},
              {"weight_decay", t.weight_decay},
              {"seed", t.seed},
              {"checkpoint_every", t.checkpoint_every},
              {"eval_every", t.eval_every},
              {"clip_grad_norm", t.clip_grad_norm},
              {"holdout_fraction", t.holdout_fraction},
              {"zero_flow_init", t.zero_flow_init}};
}

inline Json to_json(const DataConfig& d) {
  return Json{{"width", d.width},
              {"height", d.height},
              {"min_sprites", d.min_sprites},
              {"max_sprites", d.max_sprites},
              {"min_size", d.min_size},
              {"max_size", d.max_size},
              {"max_speed", d.max_speed},
              {"max_accel", d.max_accel},
              {"accel_probability", d.accel_probability},
              {"rotation_probability", d.rotation_probability},
              {"max_rotation", d.max_rotation},
              {"t", d.t}};
}

inline Json to_json(const RunConfig& r) {
  return Json{{"model", to_json(r.model)}, {"loss", to_json(r.loss)}, {"train", to_json(r.train)}, {"data", to_json(r.data)}};
}

inline ModelConfig model_config_from_json(const Json& j) {
  ModelConfig m;
  detail::FieldReader r(j, "model");
  r.read("depth", m.depth);
  r.read("channels", m.channels);
  r.read("first_layer_kernel", m.first_layer_kernel);
  r.read("other_kernels", m.other_kernels);
  r.read("ifblock_convs", m.ifblock_convs);
  r.read("deconv_kernel", m.deconv_kernel);
  r.read("ifblock_width_factor", m.ifblock_width_factor);
  r.read("use_frame_features", m.use_frame_features);
  r.read("use_intermediate_feature", m.use_intermediate_feature);
  r.read("use_flow_residual", m.use_flow_residual);
  r.read_rational("width_multiplier", m.width_multiplier);
  r.finish();
  return m;
}

inline RunConfig run_config_from_json(const Json& j) {
  if (!j.is_object()) throw ConfigError("run configuration must be a JSON object");
  RunConfig rc;
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& k = it.key();
    if (k != "model" && k != "loss" && k != "train" && k != "data") throw ConfigError("unknown config key '" + k + "'");
  }
  if (j.contains("model")) rc.model = model_config_from_json(j.at("model"));
  if (j.contains("loss")) {
    detail::FieldReader r(j.at("loss"), "loss");
    r.read("alpha", rc.loss.alpha);
    r.read("beta", rc.loss.beta);
    r.read("gamma", rc.loss.gamma);
    r.finish();
  }
  if (j.contains("train")) {
    auto& t = rc.train;
    detail::FieldReader r(j.at("train"), "train");
    r.read("epochs", t.epochs);
    r.read("steps", t.steps);
    r.read("batch_size", t.batch_size);
    r.read("lr_start", t.lr_start);
    r.read("lr_end", t.lr_end);
    r.read("weight_decay", t.weight_decay);
    r.read("seed", t.seed);
    r.read("checkpoint_every", t.checkpoint_every);
    r.read("eval_every", t.eval_every);
    r.read("clip_grad_norm", t.clip_grad_norm);
    r.read("holdout_fraction", t.holdout_fraction);
    r.read("zero_flow_init", t.zero_flow_init);
    r.finish();
  }
  if (j.contains("data")) {
    auto& d = rc.data;
    detail::FieldReader r(j.at("data"), "data");
    r.read("width", d.width);
    r.read("height", d.height);
    r.read("min_sprites", d.min_sprites);
    r.read("max_sprites", d.max_sprites);
    r.read("min_size", d.min_size);
    r.read("max_size", d.max_size);
    r.read("max_speed", d.max_speed);
    r.read("max_accel", d.max_accel);
    r.read("accel_probability", d.accel_probability);
    r.read("rotation_probability", d.rotation_probability);
    r.read("max_rotation", d.max_rotation);
    r.read("t", d.t);
    r.finish();
  }
  rc.validate();
  return rc;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  Json j;
  try {
    j = Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config file " + path + " is not valid JSON: " + e.what());
  }
  return run_config_from_json(j);
}

/// FNV-1a over the canonical JSON of the model configuration.
inline std::string fingerprint(const ModelConfig& m) {
  const std::string s = to_json(m).dump();
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace mavfi
