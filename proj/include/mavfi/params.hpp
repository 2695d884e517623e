// SPDX-License-Identifier: Apache-2.0
//
// Named parameter arrays for the network and their deterministic initialiser.
#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "mavfi/autograd.hpp"
#include "mavfi/config.hpp"
#include "mavfi/rng.hpp"

namespace mavfi {

struct ParamSpec {
  std::string name;
  Shape shape;
};

/// Channels fed to the IFBlock at `level`: the two pyramid features, plus
/// the warped frame features and the fused intermediate feature below the top.
inline int block_input_channels(const ModelConfig& cfg, int level) {
  const int c = cfg.level_channels(level);
  if (level == cfg.depth - 1) return 2 * c;
  return 2 * c + (cfg.use_frame_features ? 2 * c : 0) + (cfg.use_intermediate_feature ? c : 0);
}

/// Flow pair (4) + guide logit (1), plus an RGB residual at the lowest level.
inline int block_output_channels(int level) { return level == 0 ? 8 : 5; }

/// Ordered (name, shape) list of every array the model owns.
inline std::vector<ParamSpec> parameter_layout(const ModelConfig& cfg) {
  cfg.validate();
  std::vector<ParamSpec> out;
  auto conv = [&](const std::string& p, int cin, int cout, int k) {
    out.push_back({p + ".weight", {cout, cin, k, k}});
    out.push_back({p + ".bias", {cout}});
    out.push_back({p + ".prelu", {cout}});
  };
  int cin = 3;
  for (int l = 0; l < cfg.depth; ++l) {
    const int c = cfg.level_channels(l);
    const std::string p = "pfm." + std::to_string(l);
    conv(p + ".conv0", cin, c, l == 0 ? cfg.first_layer_kernel : cfg.other_kernels);
    conv(p + ".conv1", c, c, cfg.other_kernels);
    cin = c;
  }
  for (int l = cfg.depth - 1; l >= 0; --l) {
    const int hidden = cfg.block_width(l);
    const std::string p = "block." + std::to_string(l);
    for (int j = 0; j < cfg.ifblock_convs; ++j)
      conv(p + ".conv" + std::to_string(j), j == 0 ? block_input_channels(cfg, l) : hidden, hidden, 3);
    out.push_back({p + ".deconv.weight", {hidden, block_output_channels(l), cfg.deconv_kernel, cfg.deconv_kernel}});
    out.push_back({p + ".deconv.bias", {block_output_channels(l)}});
  }
  return out;
}

inline std::size_t parameter_count(const ModelConfig& cfg) {
  std::size_t n = 0;
  for (const auto& s : parameter_layout(cfg)) n += shape_numel(s.shape);
  return n;
}

template <class T>
class ParameterStore {
 public:
  struct Entry {
    std::string name;
    ag::Var<T> var;
  };

  ParameterStore() = default;

  void add(std::string name, Tensor<T> value) {
    expect(!index_.count(name), "duplicate parameter name ", name);
    index_.emplace(name, entries_.size());
    entries_.push_back({std::move(name), ag::Var<T>::parameter(std::move(value))});
  }
  /// Registers an existing graph node (shares it rather than copying).
  void add(std::string name, ag::Var<T> var) {
    expect(!index_.count(name), "duplicate parameter name ", name);
    index_.emplace(name, entries_.size());
    entries_.push_back({std::move(name), std::move(var)});
  }

  std::size_t size() const { return entries_.size(); }
  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }
  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  const ag::Var<T>& operator[](const std::string& name) const {
    auto it = index_.find(name);
    expect(it != index_.end(), "no parameter named ", name);
    return entries_[it->second].var;
  }
  Tensor<T>& value(const std::string& name) { return entries_[index_.at(name)].var.mutable_value(); }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.var.value().size();
    return n;
  }

  void zero_grad() {
    for (auto& e : entries_) e.var.zero_grad();
  }

  bool all_finite() const {
    for (const auto& e : entries_)
      if (!mavfi::all_finite(e.var.value())) return false;
    return true;
  }

  /// Deep copy (fresh graph leaves, no gradients).
  ParameterStore clone() const {
    ParameterStore out;
    for (const auto& e : entries_) out.add(e.name, e.var.value());
    return out;
  }

  template <class U>
  ParameterStore<U> cast() const {
    ParameterStore<U> out;
    for (const auto& e : entries_) out.add(e.name, e.var.value().template cast<U>());
    return out;
  }

  bool operator==(const ParameterStore& o) const {
    if (entries_.size() != o.entries_.size()) return false;
    for (std::size_t i = 0; i < entries_.size(); ++i)
      if (entries_[i].name != o.entries_[i].name || !(entries_[i].var.value() == o.entries_[i].var.value()))
        return false;
    return true;
  }

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

enum class InitMode { kRandom, kZeroFlow };

/// Fan-in scaled normal init for PReLU (gain sqrt(2 / (1 + 0.25^2))), zero
/// biases, PReLU slopes 0.25. kZeroFlow also zeroes each block's deconvolution
/// so the untrained network returns the average of its inputs.
template <class T>
ParameterStore<T> init_params(const ModelConfig& cfg, std::uint64_t seed, InitMode mode = InitMode::kRandom) {
  constexpr double slope = 0.25;
  ParameterStore<T> store;
  std::uint64_t index = 0;
  for (const auto& spec : parameter_layout(cfg)) {
    Tensor<T> t(spec.shape);
    Rng rng(stream_seed(seed, 0x5041524dull, index++));
    const bool is_weight = spec.name.ends_with(".weight");
    const bool is_deconv = spec.name.find(".deconv.") != std::string::npos;
    if (spec.name.ends_with(".prelu")) {
      t.fill(static_cast<T>(slope));
    } else if (is_weight && !(is_deconv && mode == InitMode::kZeroFlow)) {
      const int k = spec.shape[2];
      // Transposed conv with stride 2: each output sees cin * (k/2)^2 inputs.
      const double fan_in = is_deconv ? spec.shape[0] * (k / 2.0) * (k / 2.0) : static_cast<double>(spec.shape[1]) * k * k;
      const double stddev = std::sqrt(2.0 / ((1 + slope * slope) * fan_in));
      for (auto& v : t.values()) v = static_cast<T>(stddev * rng.normal());
    }
    store.add(spec.name, std::move(t));
  }
  return store;
}

}  // namespace mavfi
