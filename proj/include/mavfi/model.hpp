// SPDX-License-Identifier: Apache-2.0
//
// The interpolation network: a shared pyramid feature module and a
// top-down cascade of intermediate-flow blocks.
//
// Resolution bookkeeping (H x W input, levels l = 0 .. depth-1):
//   pyramid level l        -> H / 2^(l+1)
//   block l consumes level l features and emits flows at H / 2^l
// so block l+1's flows already sit at level l's feature resolution and warp
// them directly; the flow residual path upsamples block l+1's flows by 2
// (with magnitude rescaling) to add them to block l's output.
#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mavfi/config.hpp"
#include "mavfi/core_ops.hpp"
#include "mavfi/nn.hpp"
#include "mavfi/params.hpp"

namespace mavfi {

template <class T>
struct FeaturePyramid {
  std::vector<ag::Var<T>> levels;
};

template <class T>
struct BlockOutput {
  ag::Var<T> flow0;         // F_{t->0}, [2, 2h, 2w]
  ag::Var<T> flow1;         // F_{t->1}
  ag::Var<T> guide_logits;  // [1, 2h, 2w], squashed downstream
  ag::Var<T> residual;      // [3, 2h, 2w], lowest level only
};

template <class T>
struct FlowPair {
  ag::Var<T> to0;
  ag::Var<T> to1;
};

template <class T>
struct CascadeOutput {
  std::vector<FlowPair<T>> flows;   // indexed by level; level l at scale 1/2^l
  std::vector<ag::Var<T>> guides;   // A^l in [0,1]
  ag::Var<T> residual;
  ag::Var<T> frame;
};

namespace detail {

template <class T>
ag::Var<T> conv_prelu(const ag::Var<T>& x, const ParameterStore<T>& p, const std::string& name, int stride) {
  const auto& w = p[name + ".weight"];
  const int k = w.value().dim(2);
  return ag::prelu(ag::conv2d(x, w, p[name + ".bias"], stride, k / 2), p[name + ".prelu"]);
}

}  // namespace detail

/// Per-frame feature pyramid; level l has level_channels(l) channels at 1/2^(l+1).
template <class T>
FeaturePyramid<T> pfm_forward(const ag::Var<T>& frame, const ParameterStore<T>& params, const ModelConfig& cfg) {
  const auto& x = frame.value();
  expect(x.rank() == 3 && x.channels() == 3, "pfm_forward: frame must be [3,H,W], got ", shape_str(x.shape()));
  const int m = cfg.pad_multiple();
  expect(x.height() % m == 0 && x.width() % m == 0, "pfm_forward: ", x.height(), "x", x.width(),
         " is not divisible by ", m, " (pad before calling)");
  FeaturePyramid<T> out;
  ag::Var<T> h = frame;
  for (int l = 0; l < cfg.depth; ++l) {
    const std::string p = "pfm." + std::to_string(l);
    h = detail::conv_prelu(h, params, p + ".conv0", 2);
    h = detail::conv_prelu(h, params, p + ".conv1", 1);
    out.levels.push_back(h);
  }
  return out;
}

/// Six (ifblock_convs) stride-1 3x3 conv+PReLU layers with the conv-2 output
/// added to the input of the last conv, then a 4x4 stride-2 deconvolution.
template <class T>
BlockOutput<T> ifblock_forward(const ag::Var<T>& input, const ParameterStore<T>& params, int level,
                               const ModelConfig& cfg) {
  const int want = block_input_channels(cfg, level);
  const int got = input.value().rank() == 3 ? input.value().channels() : -1;
  if (got != want) {
    const int c = cfg.level_channels(level);
    std::string layout = level == cfg.depth - 1 ? "[F0 " + std::to_string(c) + ", F1 " + std::to_string(c) + "]"
                                                : "[F0, F1" + std::string(cfg.use_frame_features ? ", warped F0, warped F1" : "") +
                                                      std::string(cfg.use_intermediate_feature ? ", fused" : "") +
                                                      "] of " + std::to_string(c) + " each";
    throw ContractError("ifblock_forward(level " + std::to_string(level) + "): expected " + std::to_string(want) +
                        " input channels " + layout + ", got " + std::to_string(got));
  }
  const std::string p = "block." + std::to_string(level);
  const int n = cfg.ifblock_convs;
  ag::Var<T> h = input, skip;
  for (int j = 0; j < n; ++j) {
    if (j == n - 1) h = ag::add(h, skip);
    h = detail::conv_prelu(h, params, p + ".conv" + std::to_string(j), 1);
    if (j == 1) skip = h;
  }
  auto y = ag::conv_transpose2d(h, params[p + ".deconv.weight"], params[p + ".deconv.bias"], 2, 1);
  BlockOutput<T> out;
  out.flow0 = ag::slice_channels(y, 0, 2);
  out.flow1 = ag::slice_channels(y, 2, 2);
  out.guide_logits = ag::slice_channels(y, 4, 1);
  if (level == 0) out.residual = ag::slice_channels(y, 5, 3);
  return out;
}

template <class T>
CascadeOutput<T> cascade_forward(const ag::Var<T>& i0, const ag::Var<T>& i1, const ParameterStore<T>& params,
                                 const ModelConfig& cfg) {
  expect(i0.value().shape() == i1.value().shape(), "cascade_forward: frame size mismatch ",
         shape_str(i0.value().shape()), " vs ", shape_str(i1.value().shape()));
  const auto f0 = pfm_forward(i0, params, cfg);
  const auto f1 = pfm_forward(i1, params, cfg);
  const int top = cfg.depth - 1;

  CascadeOutput<T> out;
  out.flows.resize(static_cast<std::size_t>(cfg.depth));
  out.guides.resize(static_cast<std::size_t>(cfg.depth));

  BlockOutput<T> b = ifblock_forward(ag::concat_channels<T>({f0.levels[top], f1.levels[top]}), params, top, cfg);
  out.flows[top] = {b.flow0, b.flow1};
  out.guides[top] = ag::sigmoid(b.guide_logits);

  for (int l = top - 1; l >= 0; --l) {
    const auto& prev = out.flows[l + 1];
    const auto& prev_guide = out.guides[l + 1];
    std::vector<ag::Var<T>> parts{f0.levels[l], f1.levels[l]};
    if (cfg.use_frame_features || cfg.use_intermediate_feature) {
      auto w0 = ag::warp(f0.levels[l], prev.to0);
      auto w1 = ag::warp(f1.levels[l], prev.to1);
      if (cfg.use_frame_features) {
        parts.push_back(w0);
        parts.push_back(w1);
      }
      if (cfg.use_intermediate_feature) parts.push_back(ag::fuse(w0, w1, prev_guide));
    }
    b = ifblock_forward(ag::concat_channels(parts), params, l, cfg);
    FlowPair<T> fl{b.flow0, b.flow1};
    if (cfg.use_flow_residual) {
      fl.to0 = ag::add(fl.to0, ag::rescale_flow(prev.to0, 2.0));
      fl.to1 = ag::add(fl.to1, ag::rescale_flow(prev.to1, 2.0));
    }
    out.flows[l] = fl;
    out.guides[l] = ag::sigmoid(b.guide_logits);
  }

  out.residual = b.residual;
  const auto& fin = out.flows[0];
  auto blended = ag::fuse(ag::warp(i0, fin.to0), ag::warp(i1, fin.to1), out.guides[0]);
  out.frame = ag::clamp(ag::add(blended, out.residual), T(0), T(1));
  return out;
}

template <class T>
CascadeOutput<T> cascade_forward(const Tensor<T>& i0, const Tensor<T>& i1, const ParameterStore<T>& params,
                                 const ModelConfig& cfg) {
  return cascade_forward(ag::Var<T>::constant(i0), ag::Var<T>::constant(i1), params, cfg);
}

inline int round_up(int n, int m) { return (n + m - 1) / m * m; }

template <class T>
struct Prediction {
  Frame<T> frame;
  FlowField<T> to0;
  FlowField<T> to1;
};

/// Midpoint synthesis for arbitrary frame sizes: replicate-pads to a multiple
/// of 2^depth, runs the cascade without recording a graph, crops back.
template <class T>
Prediction<T> predict(const Frame<T>& i0, const Frame<T>& i1, const ParameterStore<T>& params, const ModelConfig& cfg) {
  expect(i0.tensor().shape() == i1.tensor().shape(), "interpolate: frame size mismatch ",
         shape_str(i0.tensor().shape()), " vs ", shape_str(i1.tensor().shape()));
  ag::NoGradGuard guard;
  const int h = i0.height(), w = i0.width(), m = cfg.pad_multiple();
  const int ph = round_up(h, m), pw = round_up(w, m);
  auto out = cascade_forward(pad_replicate(i0.tensor(), ph, pw), pad_replicate(i1.tensor(), ph, pw), params, cfg);
  return {Frame<T>(crop(out.frame.value(), h, w)), FlowField<T>(crop(out.flows[0].to0.value(), h, w)),
          FlowField<T>(crop(out.flows[0].to1.value(), h, w))};
}

template <class T>
Frame<T> interpolate_midpoint(const Frame<T>& i0, const Frame<T>& i1, const ParameterStore<T>& params,
                              const ModelConfig& cfg) {
  return predict(i0, i1, params, cfg).frame;
}

}  // namespace mavfi
