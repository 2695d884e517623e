// SPDX-License-Identifier: Apache-2.0
//
// Deterministic training loop: AdamW with decoupled weight decay, per-step
// cosine annealing from lr_start to lr_end, checkpoint/resume.
//
// Batch composition is a pure function of (seed, step): each epoch draws its
// own permutation from a stream keyed by the epoch index, so a run resumed
// from a checkpoint at step k sees exactly the batches the uninterrupted run
// would have seen.
#pragma once

#include <cmath>
#include <functional>
#include <numbers>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mavfi/config.hpp"
#include "mavfi/io.hpp"
#include "mavfi/losses.hpp"
#include "mavfi/metrics.hpp"
#include "mavfi/model.hpp"
#include "mavfi/params.hpp"
#include "mavfi/synth.hpp"

namespace mavfi {

/// lr_end + (lr_start - lr_end) * (1 + cos(pi * step / total)) / 2, written as
/// a convex blend so both endpoints are reproduced exactly.
inline double lr_at(std::int64_t step, std::int64_t total_steps, const TrainConfig& cfg) {
  expect(total_steps > 0, "lr_at: total_steps must be positive");
  expect(step >= 0 && step <= total_steps, "lr_at: step ", step, " outside [0, ", total_steps, "]");
  const double w = 0.5 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) / static_cast<double>(total_steps)));
  return cfg.lr_start * w + cfg.lr_end * (1.0 - w);
}

template <class T>
class AdamW {
 public:
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;

  AdamW() = default;
  AdamW(const ParameterStore<T>& params, double wd) : weight_decay(wd) {
    for (const auto& e : params.entries()) {
      m_.emplace_back(e.var.value().shape());
      v_.emplace_back(e.var.value().shape());
    }
  }

  std::int64_t updates() const { return t_; }
  void set_updates(std::int64_t t) { t_ = t; }
  std::vector<Tensor<T>>& first_moments() { return m_; }
  std::vector<Tensor<T>>& second_moments() { return v_; }
  const std::vector<Tensor<T>>& first_moments() const { return m_; }
  const std::vector<Tensor<T>>& second_moments() const { return v_; }

  /// p <- p * (1 - lr * wd) - lr * mhat / (sqrt(vhat) + eps).
  void step(ParameterStore<T>& params, double lr) {
    ++t_;
    const double bc1 = 1 - std::pow(beta1, static_cast<double>(t_));
    const double bc2 = 1 - std::pow(beta2, static_cast<double>(t_));
    const T decay = static_cast<T>(1 - lr * weight_decay);
    auto& entries = params.entries();
    for (std::size_t k = 0; k < entries.size(); ++k) {
      auto& var = entries[k].var;
      Tensor<T>& p = var.mutable_value();
      if (!var.has_grad()) var.grad();
      const Tensor<T>& g = var.grad();
      T* m = m_[k].data();
      T* v = v_[k].data();
      for (std::size_t i = 0; i < p.size(); ++i) {
        m[i] = static_cast<T>(beta1) * m[i] + static_cast<T>(1 - beta1) * g[i];
        v[i] = static_cast<T>(beta2) * v[i] + static_cast<T>(1 - beta2) * g[i] * g[i];
        const double mhat = m[i] / bc1, vhat = v[i] / bc2;
        p[i] = p[i] * decay - static_cast<T>(lr * mhat / (std::sqrt(vhat) + eps));
      }
    }
  }

 private:
  std::int64_t t_ = 0;
  std::vector<Tensor<T>> m_, v_;
};

/// Source of full-resolution teacher flows (F_{t->0}, F_{t->1}) per sample.
template <class T>
class TeacherProvider {
 public:
  virtual ~TeacherProvider() = default;
  virtual std::optional<std::pair<FlowField<T>, FlowField<T>>> flows(std::size_t index) const = 0;
};

/// Exact flows carried by the triplets themselves (synthetic ground truth or attached .flo files).
template <class T>
class TripletTeacher final : public TeacherProvider<T> {
 public:
  explicit TripletTeacher(const std::vector<Triplet<T>>& data) : data_(data) {}
  std::optional<std::pair<FlowField<T>, FlowField<T>>> flows(std::size_t index) const override {
    const auto& tr = data_.at(index);
    if (!tr.has_flows()) return std::nullopt;
    return std::make_pair(tr.gt_to0, tr.gt_to1);
  }

 private:
  const std::vector<Triplet<T>>& data_;
};

template <class T>
class NoTeacher final : public TeacherProvider<T> {
 public:
  std::optional<std::pair<FlowField<T>, FlowField<T>>> flows(std::size_t) const override { return std::nullopt; }
};

struct LogRecord {
  std::int64_t step = 0;
  double lr = 0;
  double loss = 0;
  double rec = 0;
  double flow = 0;
  double smooth = 0;
  std::optional<double> epe;
  std::optional<double> psnr;

  Json to_json() const {
    Json j{{"step", step}, {"lr", lr}, {"loss", loss}, {"rec", rec}, {"flow", flow}, {"smooth", smooth}};
    j["epe"] = epe ? Json(*epe) : Json(nullptr);
    j["psnr"] = psnr ? Json(*psnr) : Json(nullptr);
    return j;
  }
};

template <class T>
struct TrainState {
  ParameterStore<T> params;
  AdamW<T> optim;
  std::int64_t step = 0;
};

template <class T>
struct TrainHooks {
  std::function<void(const LogRecord&)> on_record;
  std::function<void(const TrainState<T>&)> on_checkpoint;
};

template <class T>
struct TrainResult {
  ParameterStore<T> params;
  std::vector<LogRecord> log;
  std::int64_t total_steps = 0;
};

/// Index split: the last floor(n * holdout_fraction) samples are held out for PSNR logging.
struct DataSplit {
  std::size_t train_count = 0;
  std::size_t holdout_count = 0;
};

inline DataSplit split_dataset(std::size_t n, const TrainConfig& cfg) {
  DataSplit s;
  s.holdout_count = static_cast<std::size_t>(std::floor(static_cast<double>(n) * cfg.holdout_fraction));
  if (s.holdout_count >= n) s.holdout_count = 0;
  s.train_count = n - s.holdout_count;
  return s;
}

inline std::int64_t total_steps_for(std::size_t train_count, const TrainConfig& cfg) {
  if (cfg.steps > 0) return cfg.steps;
  const auto per_epoch = static_cast<std::int64_t>((train_count + cfg.batch_size - 1) / cfg.batch_size);
  return per_epoch * cfg.epochs;
}

/// Sample indices for one step.
inline std::vector<std::size_t> batch_indices(std::int64_t step, std::size_t train_count, const TrainConfig& cfg) {
  const auto bs = static_cast<std::size_t>(cfg.batch_size);
  const auto per_epoch = static_cast<std::int64_t>((train_count + bs - 1) / bs);
  const std::int64_t epoch = step / per_epoch, within = step % per_epoch;
  std::vector<std::size_t> perm(train_count);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(stream_seed(cfg.seed, 0x45504f43ull, static_cast<std::uint64_t>(epoch)));
  for (std::size_t i = train_count; i > 1; --i) std::swap(perm[i - 1], perm[rng.next() % i]);
  const std::size_t lo = static_cast<std::size_t>(within) * bs, hi = std::min(lo + bs, train_count);
  return {perm.begin() + static_cast<std::ptrdiff_t>(lo), perm.begin() + static_cast<std::ptrdiff_t>(hi)};
}

template <class T>
double mean_psnr(const std::vector<Triplet<T>>& data, std::size_t lo, std::size_t hi, const ParameterStore<T>& params,
                 const ModelConfig& cfg) {
  double s = 0;
  for (std::size_t i = lo; i < hi; ++i) s += psnr(interpolate_midpoint(data[i].i0, data[i].i1, params, cfg), data[i].it);
  return s / static_cast<double>(hi - lo);
}

template <class T>
TrainResult<T> train(const ModelConfig& mcfg, const TrainConfig& tcfg, const LossWeights& weights,
                     const std::vector<Triplet<T>>& data, const TeacherProvider<T>& teacher,
                     const TrainHooks<T>& hooks = {}, std::optional<TrainState<T>> resume = std::nullopt) {
  mcfg.validate();
  tcfg.validate();
  weights.validate();
  expect(!data.empty(), "train: dataset is empty");
  const DataSplit split = split_dataset(data.size(), tcfg);
  const std::int64_t total = total_steps_for(split.train_count, tcfg);

  std::vector<TeacherFlows<T>> teachers;
  if (weights.beta > 0) {
    for (std::size_t i = 0; i < split.train_count; ++i) {
      auto f = teacher.flows(i);
      if (!f)
        throw ConfigError("beta > 0 requires teacher flows for the flow-distillation term, but sample '" + data[i].name +
                          "' has none; set loss.beta = 0 or supply flow files");
      teachers.push_back(build_teacher_multiscale(f->first, f->second, mcfg.depth));
    }
  }

  TrainState<T> st;
  if (resume) {
    st = std::move(*resume);
    expect(st.step >= 0 && st.step <= total, "train: resume step ", st.step, " outside schedule of ", total, " steps");
  } else {
    st.params = init_params<T>(mcfg, tcfg.seed, tcfg.zero_flow_init ? InitMode::kZeroFlow : InitMode::kRandom);
    st.optim = AdamW<T>(st.params, tcfg.weight_decay);
  }
  st.optim.weight_decay = tcfg.weight_decay;

  const bool eval_on_holdout = split.holdout_count > 0;
  const std::size_t eval_lo = eval_on_holdout ? split.train_count : 0;
  const std::size_t eval_hi = eval_on_holdout ? data.size() : split.train_count;

  TrainResult<T> result;
  result.total_steps = total;
  for (; st.step < total; ++st.step) {
    const auto batch = batch_indices(st.step, split.train_count, tcfg);
    const T inv = T(1) / static_cast<T>(batch.size());
    st.params.zero_grad();
    LogRecord rec;
    rec.step = st.step;
    rec.lr = lr_at(st.step, total, tcfg);
    double epe_sum = 0;
    bool have_epe = true;
    for (std::size_t idx : batch) {
      const auto& tr = data[idx];
      auto out = cascade_forward(tr.i0.tensor(), tr.i1.tensor(), st.params, mcfg);
      auto terms = total_loss(out.frame, ag::Var<T>::constant(tr.it.tensor()), out.flows,
                              weights.beta > 0 ? &teachers[idx] : nullptr, weights);
      const double l = static_cast<double>(terms.total.item());
      if (!std::isfinite(l)) {
        std::ostringstream os;
        os << "non-finite loss at step " << st.step << " on sample '" << tr.name << "' (rec=" << terms.rec
           << ", flow=" << terms.flow << ", smooth=" << terms.smooth << ", lr=" << rec.lr << ")";
        throw NumericError(os.str());
      }
      rec.loss += l / batch.size();
      rec.rec += terms.rec / batch.size();
      rec.flow += terms.flow / batch.size();
      rec.smooth += terms.smooth / batch.size();
      if (tr.has_flows()) {
        epe_sum += 0.5 * (epe(FlowField<T>(out.flows[0].to0.value()), tr.gt_to0) +
                          epe(FlowField<T>(out.flows[0].to1.value()), tr.gt_to1));
      } else {
        have_epe = false;
      }
      ag::backward(ag::scale(terms.total, inv));
    }
    if (have_epe) rec.epe = epe_sum / batch.size();

    if (tcfg.clip_grad_norm > 0) {
      double sq = 0;
      for (auto& e : st.params.entries())
        for (T g : e.var.grad().values()) sq += static_cast<double>(g) * g;
      const double norm = std::sqrt(sq);
      if (norm > tcfg.clip_grad_norm) {
        const T k = static_cast<T>(tcfg.clip_grad_norm / norm);
        for (auto& e : st.params.entries())
          for (T& g : e.var.grad().values()) g *= k;
      }
    }
    st.optim.step(st.params, rec.lr);
    if (!st.params.all_finite())
      throw NumericError("non-finite parameters after update at step " + std::to_string(st.step));

    const std::int64_t done = st.step + 1;
    if ((tcfg.eval_every > 0 && done % tcfg.eval_every == 0) || done == total)
      rec.psnr = mean_psnr(data, eval_lo, eval_hi, st.params, mcfg);
    result.log.push_back(rec);
    if (hooks.on_record) hooks.on_record(rec);
    if (hooks.on_checkpoint && tcfg.checkpoint_every > 0 && done % tcfg.checkpoint_every == 0 && done != total) {
      TrainState<T> snapshot{st.params.clone(), st.optim, done};
      hooks.on_checkpoint(snapshot);
    }
  }
  result.params = std::move(st.params);
  return result;
}

// ---------------------------------------------------------------------------
// checkpoints

inline constexpr const char* kMomentPrefix = "optim.m.";
inline constexpr const char* kVariancePrefix = "optim.v.";

template <class T>
io::Checkpoint<T> make_checkpoint(const ParameterStore<T>& params, const AdamW<T>* optim, std::int64_t step,
                                  const ModelConfig& cfg) {
  io::Checkpoint<T> ck;
  ck.fingerprint = fingerprint(cfg);
  ck.step = step;
  ck.model_config = to_json(cfg);
  for (const auto& e : params.entries()) ck.arrays.emplace_back(e.name, e.var.value());
  if (optim) {
    const auto& es = params.entries();
    for (std::size_t k = 0; k < es.size(); ++k) ck.arrays.emplace_back(kMomentPrefix + es[k].name, optim->first_moments()[k]);
    for (std::size_t k = 0; k < es.size(); ++k)
      ck.arrays.emplace_back(kVariancePrefix + es[k].name, optim->second_moments()[k]);
  }
  return ck;
}

template <class T>
void checkpoint_save(const TrainState<T>& st, const ModelConfig& cfg, const std::filesystem::path& path) {
  io::write_checkpoint(make_checkpoint(st.params, &st.optim, st.step, cfg), path);
}

template <class T>
void checkpoint_save(const ParameterStore<T>& params, const ModelConfig& cfg, const std::filesystem::path& path,
                     std::int64_t step = 0) {
  io::write_checkpoint(make_checkpoint<T>(params, nullptr, step, cfg), path);
}

/// Rebuilds the parameter store for `cfg`, validating names and shapes first
/// (the error names the first offending array) and the config fingerprint second.
template <class T>
ParameterStore<T> restore_params(const io::Checkpoint<T>& ck, const ModelConfig& cfg) {
  ParameterStore<T> store;
  const auto layout = parameter_layout(cfg);
  for (const auto& spec : layout) {
    const Tensor<T>* t = ck.find(spec.name);
    if (!t) throw FormatError("checkpoint does not match model: missing array '" + spec.name + "'");
    if (t->shape() != spec.shape)
      throw FormatError("checkpoint does not match model: shape mismatch for array '" + spec.name + "' (checkpoint " +
                        shape_str(t->shape()) + ", model " + shape_str(spec.shape) + ")");
    store.add(spec.name, *t);
  }
  for (const auto& [name, t] : ck.arrays) {
    if (name.rfind(kMomentPrefix, 0) == 0 || name.rfind(kVariancePrefix, 0) == 0) continue;
    if (!store.contains(name)) throw FormatError("checkpoint does not match model: unexpected array '" + name + "'");
  }
  if (ck.fingerprint != fingerprint(cfg))
    throw FormatError("checkpoint config fingerprint " + ck.fingerprint + " does not match model config " +
                      fingerprint(cfg));
  return store;
}

template <class T>
TrainState<T> restore_state(const io::Checkpoint<T>& ck, const ModelConfig& cfg, double weight_decay) {
  TrainState<T> st;
  st.params = restore_params(ck, cfg);
  st.optim = AdamW<T>(st.params, weight_decay);
  const auto& es = st.params.entries();
  for (std::size_t k = 0; k < es.size(); ++k) {
    const Tensor<T>* m = ck.find(kMomentPrefix + es[k].name);
    const Tensor<T>* v = ck.find(kVariancePrefix + es[k].name);
    if (!m || !v) throw FormatError("checkpoint lacks optimizer state for '" + es[k].name + "'");
    if (m->shape() != es[k].var.value().shape() || v->shape() != es[k].var.value().shape())
      throw FormatError("checkpoint optimizer state shape mismatch for '" + es[k].name + "'");
    st.optim.first_moments()[k] = *m;
    st.optim.second_moments()[k] = *v;
  }
  st.optim.set_updates(ck.step);
  st.step = ck.step;
  return st;
}

/// Model config recorded in a checkpoint manifest.
template <class T>
ModelConfig checkpoint_model_config(const io::Checkpoint<T>& ck) {
  try {
    auto cfg = model_config_from_json(ck.model_config);
    cfg.validate();
    return cfg;
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint manifest carries an invalid model config: ") + e.what());
  }
}

}  // namespace mavfi
