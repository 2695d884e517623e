// SPDX-License-Identifier: Apache-2.0
//
// Training objective: L1 reconstruction, multi-level flow smoothness and
// teacher-flow distillation, combined with weights (alpha, beta, gamma).
// All terms use mean normalisation so weights are resolution independent.
#pragma once

#include <optional>
#include <vector>

#include "mavfi/config.hpp"
#include "mavfi/core_ops.hpp"
#include "mavfi/model.hpp"
#include "mavfi/nn.hpp"

namespace mavfi {

template <class T>
T mean_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  expect_same_shape(a, b, "mean_abs_diff");
  T s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s / static_cast<T>(a.size());
}

template <class T>
T rec_loss(const Frame<T>& pred, const Frame<T>& gt) {
  return mean_abs_diff(pred.tensor(), gt.tensor());
}

/// Teacher flow pairs per cascade level (level l at scale 1/2^l).
template <class T>
struct TeacherFlows {
  struct Level {
    FlowField<T> to0;
    FlowField<T> to1;
  };
  std::vector<Level> levels;
};

/// Level l teacher = rescale_flow(full resolution, 1 / 2^l).
template <class T>
TeacherFlows<T> build_teacher_multiscale(const FlowField<T>& to0, const FlowField<T>& to1, int depth) {
  expect(depth >= 1, "build_teacher_multiscale: depth must be >= 1");
  expect(to0.height() == to1.height() && to0.width() == to1.width(), "build_teacher_multiscale: flow size mismatch");
  TeacherFlows<T> t;
  for (int l = 0; l < depth; ++l) {
    if (l == 0) {
      t.levels.push_back({to0, to1});
    } else {
      const double s = 1.0 / static_cast<double>(1 << l);
      t.levels.push_back({rescale_flow(to0, s), rescale_flow(to1, s)});
    }
  }
  return t;
}

namespace ag {

template <class T>
Var<T> mean_abs_diff(const Var<T>& a, const Var<T>& b) {
  Tensor<T> out(Shape{1}, mavfi::mean_abs_diff(a.value(), b.value()));
  return record<T>(std::move(out), {a, b}, [](Node<T>& nd) {
    const auto& va = nd.parents[0]->value;
    const auto& vb = nd.parents[1]->value;
    const T k = nd.grad[0] / static_cast<T>(va.size());
    for (std::size_t side = 0; side < 2; ++side) {
      if (!nd.parent_needs(side)) continue;
      auto& d = nd.parent_grad(side);
      const T sg = side == 0 ? k : -k;
      for (std::size_t i = 0; i < d.size(); ++i) {
        const T diff = va[i] - vb[i];
        d[i] += diff > 0 ? sg : (diff < 0 ? -sg : T(0));
      }
    }
  });
}

template <class T>
Var<T> rec_loss(const Var<T>& pred, const Var<T>& gt) {
  return mean_abs_diff(pred, gt);
}

/// Sum over levels of the spatial-gradient L1 of both directional flows.
template <class T>
Var<T> smooth_loss(const std::vector<FlowPair<T>>& flows) {
  expect(!flows.empty(), "smooth_loss: needs at least one level");
  std::vector<Var<T>> terms;
  for (const auto& f : flows) {
    terms.push_back(spatial_gradient_l1(f.to0));
    terms.push_back(spatial_gradient_l1(f.to1));
  }
  return weighted_sum(terms, std::vector<T>(terms.size(), T(1)));
}

/// Sum over levels of the mean absolute difference to the teacher, both directions.
template <class T>
Var<T> flow_loss(const std::vector<FlowPair<T>>& flows, const TeacherFlows<T>& teacher) {
  expect(flows.size() == teacher.levels.size(), "flow_loss: student has ", flows.size(), " levels, teacher ",
         teacher.levels.size());
  std::vector<Var<T>> terms;
  for (std::size_t l = 0; l < flows.size(); ++l) {
    const auto& s = flows[l];
    const auto& t = teacher.levels[l];
    expect(s.to0.value().shape() == t.to0.tensor().shape() && s.to1.value().shape() == t.to1.tensor().shape(),
           "flow_loss: level ", l, " resolution mismatch ", shape_str(s.to0.value().shape()), " vs teacher ",
           shape_str(t.to0.tensor().shape()));
    terms.push_back(mean_abs_diff(s.to0, Var<T>::constant(t.to0.tensor())));
    terms.push_back(mean_abs_diff(s.to1, Var<T>::constant(t.to1.tensor())));
  }
  return weighted_sum(terms, std::vector<T>(terms.size(), T(1)));
}

}  // namespace ag

template <class T>
struct LossTerms {
  ag::Var<T> total;
  double rec = 0;
  double flow = 0;
  double smooth = 0;
};

/// alpha * rec + beta * flow + gamma * smooth. The teacher may be absent only when beta == 0.
template <class T>
LossTerms<T> total_loss(const ag::Var<T>& pred, const ag::Var<T>& gt, const std::vector<FlowPair<T>>& flows,
                        const TeacherFlows<T>* teacher, const LossWeights& w) {
  if (w.beta > 0 && (teacher == nullptr || teacher->levels.empty()))
    throw ConfigError(
        "flow-distillation weight beta > 0 needs teacher flows for every level (none supplied); set beta = 0 or "
        "provide flow files");
  LossTerms<T> out;
  std::vector<ag::Var<T>> terms;
  std::vector<T> weights;
  auto rec = ag::rec_loss(pred, gt);
  out.rec = static_cast<double>(rec.item());
  terms.push_back(rec);
  weights.push_back(static_cast<T>(w.alpha));
  if (teacher != nullptr && !teacher->levels.empty()) {
    auto fl = ag::flow_loss(flows, *teacher);
    out.flow = static_cast<double>(fl.item());
    terms.push_back(fl);
    weights.push_back(static_cast<T>(w.beta));
  }
  auto sm = ag::smooth_loss(flows);
  out.smooth = static_cast<double>(sm.item());
  terms.push_back(sm);
  weights.push_back(static_cast<T>(w.gamma));
  out.total = ag::weighted_sum(terms, weights);
  return out;
}

}  // namespace mavfi
