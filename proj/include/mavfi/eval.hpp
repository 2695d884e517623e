// SPDX-License-Identifier: Apache-2.0
//
// Evaluation drivers: recursive multi-frame synthesis, per-sample metric
// reports, and the ablation harness (feature/loss variants + depth sweep).
#pragma once

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "mavfi/config.hpp"
#include "mavfi/ingest.hpp"
#include "mavfi/io.hpp"
#include "mavfi/metrics.hpp"
#include "mavfi/model.hpp"
#include "mavfi/train.hpp"

namespace mavfi {

template <class T>
struct TimedFrame {
  double t = 0;
  Frame<T> frame;
};

/// Midpoint recursion. k = 1: {0.5}; k = 3: {0.25, 0.5, 0.75};
/// k = 5: {0.125, 0.25, 0.5, 0.625, 0.75}, where 0.125 comes from (I0, I0.25)
/// and 0.625 from (I0.5, I0.75). Output is in ascending t.
template <class T>
std::vector<TimedFrame<T>> multiframe(const Frame<T>& i0, const Frame<T>& i1, const ParameterStore<T>& params,
                                      const ModelConfig& cfg, int k) {
  if (k != 1 && k != 3 && k != 5)
    throw ContractError("multiframe: unsupported intermediate count " + std::to_string(k) + " (expected 1, 3 or 5)");
  auto mid = [&](const Frame<T>& a, const Frame<T>& b) { return interpolate_midpoint(a, b, params, cfg); };
  const Frame<T> m = mid(i0, i1);
  if (k == 1) return {{0.5, m}};
  const Frame<T> q1 = mid(i0, m), q3 = mid(m, i1);
  if (k == 3) return {{0.25, q1}, {0.5, m}, {0.75, q3}};
  return {{0.125, mid(i0, q1)}, {0.25, q1}, {0.5, m}, {0.625, mid(m, q3)}, {0.75, q3}};
}

/// "t0.125" style label used for output file names.
inline std::string timestep_label(double t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "t%.3f", t);
  return buf;
}

struct SampleMetrics {
  std::string name;
  double psnr = 0;
  double ssim = 0;
  double ie = 0;
  std::optional<double> epe;
};

struct MetricReport {
  std::vector<SampleMetrics> samples;
  double psnr = 0;
  double ssim = 0;
  double ie = 0;
  std::optional<double> epe;  // only when every sample carries ground-truth flows
  std::string fingerprint;
  double seconds_per_frame = 0;

  std::size_t count() const { return samples.size(); }

  /// One JSON object per sample followed by a summary record.
  std::string to_jsonl() const {
    std::ostringstream os;
    for (const auto& s : samples) {
      Json j{{"sample", s.name}, {"psnr", s.psnr}, {"ssim", s.ssim}, {"ie", s.ie}};
      if (epe) j["epe"] = *s.epe;
      os << j.dump() << "\n";
    }
    Json agg{{"summary", true},     {"count", count()}, {"psnr", psnr},
             {"ssim", ssim},        {"ie", ie},         {"fingerprint", fingerprint},
             {"seconds_per_frame", seconds_per_frame}};
    if (epe) agg["epe"] = *epe;
    os << agg.dump() << "\n";
    return os.str();
  }

  std::string to_table() const {
    std::ostringstream os;
    char line[160];
    std::snprintf(line, sizeof line, "%-24s %9s %8s %8s%s\n", "sample", "PSNR", "SSIM", "IE", epe ? "      EPE" : "");
    os << line;
    auto row = [&](const std::string& name, double p, double s, double ie_v, std::optional<double> e) {
      std::snprintf(line, sizeof line, "%-24s %9.3f %8.4f %8.3f", name.c_str(), p, s, ie_v);
      os << line;
      if (epe) {
        std::snprintf(line, sizeof line, " %8.4f", e.value_or(0.0));
        os << line;
      }
      os << "\n";
    };
    for (const auto& s : samples) row(s.name, s.psnr, s.ssim, s.ie, s.epe);
    row("mean (" + std::to_string(count()) + ")", psnr, ssim, ie, epe);
    os << "config " << fingerprint << "\n";
    return os.str();
  }
};

struct EvalOptions {
  /// When set, writes <name>_pred.png, <name>_gt.png and <name>_diff.png per sample.
  std::optional<std::filesystem::path> dump_dir;
};

template <class T>
MetricReport evaluate(const std::vector<Triplet<T>>& data, const ParameterStore<T>& params, const ModelConfig& cfg,
                      const EvalOptions& opts = {}) {
  if (data.empty()) throw FormatError("evaluate: no samples to evaluate (empty report)");
  MetricReport r;
  r.fingerprint = fingerprint(cfg);
  bool all_flows = true;
  const auto start = std::chrono::steady_clock::now();
  for (const auto& tr : data) {
    const auto pred = predict(tr.i0, tr.i1, params, cfg);
    SampleMetrics s;
    s.name = tr.name;
    s.psnr = psnr(pred.frame, tr.it);
    s.ssim = ssim(pred.frame, tr.it);
    s.ie = interpolation_error(pred.frame, tr.it);
    if (tr.has_flows())
      s.epe = 0.5 * (mavfi::epe(pred.to0, tr.gt_to0) + mavfi::epe(pred.to1, tr.gt_to1));
    else
      all_flows = false;
    if (opts.dump_dir) {
      Frame<T> diff(tr.it.height(), tr.it.width());
      for (std::size_t i = 0; i < diff.tensor().size(); ++i)
        diff.tensor()[i] = std::abs(pred.frame.tensor()[i] - tr.it.tensor()[i]);
      io::write_image(pred.frame, *opts.dump_dir / (tr.name + "_pred.png"));
      io::write_image(tr.it, *opts.dump_dir / (tr.name + "_gt.png"));
      io::write_image(diff, *opts.dump_dir / (tr.name + "_diff.png"));
    }
    r.samples.push_back(std::move(s));
  }
  const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  r.seconds_per_frame = elapsed / static_cast<double>(data.size());
  const double n = static_cast<double>(r.samples.size());
  double e = 0;
  for (const auto& s : r.samples) {
    r.psnr += s.psnr / n;
    r.ssim += s.ssim / n;
    r.ie += s.ie / n;
    if (s.epe) e += *s.epe / n;
  }
  if (all_flows) {
    r.epe = e;
  } else {
    for (auto& s : r.samples) s.epe.reset();
  }
  return r;
}

// ---------------------------------------------------------------------------
// ablations

struct AblationVariant {
  std::string name;
  ModelConfig model;
  LossWeights loss;
};

/// Feature/loss variants followed by the depth sweep, all derived from `base`.
inline std::vector<AblationVariant> ablation_variants(const RunConfig& base, int max_depth = 4) {
  std::vector<AblationVariant> v;
  auto add = [&](std::string name, auto&& edit) {
    AblationVariant a{std::move(name), base.model, base.loss};
    edit(a);
    v.push_back(std::move(a));
  };
  add("full", [](AblationVariant&) {});
  add("w/o FF", [](AblationVariant& a) { a.model.use_frame_features = false; });
  add("w/o IF", [](AblationVariant& a) { a.model.use_intermediate_feature = false; });
  add("w/o FIF", [](AblationVariant& a) {
    a.model.use_frame_features = false;
    a.model.use_intermediate_feature = false;
  });
  add("w/o residual", [](AblationVariant& a) { a.model.use_flow_residual = false; });
  add("w/o L_flow", [](AblationVariant& a) { a.loss.beta = 0; });
  for (int d = 1; d <= max_depth; ++d)
    add("depth " + std::to_string(d), [d](AblationVariant& a) { a.model.depth = d; });
  return v;
}

struct AblationRow {
  std::string variant;
  double psnr = 0;
  double ssim = 0;
  double ie = 0;
  std::optional<double> epe;
};

struct AblationTable {
  std::string title;
  std::vector<AblationRow> rows;

  std::string to_text() const {
    std::ostringstream os;
    char line[160];
    os << title << "\n";
    std::snprintf(line, sizeof line, "%-14s %9s %8s %8s %8s\n", "variant", "PSNR", "SSIM", "IE", "EPE");
    os << line;
    for (const auto& r : rows) {
      std::snprintf(line, sizeof line, "%-14s %9.3f %8.4f %8.3f ", r.variant.c_str(), r.psnr, r.ssim, r.ie);
      os << line;
      if (r.epe) {
        std::snprintf(line, sizeof line, "%8.4f", *r.epe);
        os << line;
      } else {
        os << "       -";
      }
      os << "\n";
    }
    return os.str();
  }
};

struct AblationReport {
  std::vector<AblationTable> per_seed;
  AblationTable mean;

  std::string to_text() const {
    std::string s;
    for (const auto& t : per_seed) s += t.to_text() + "\n";
    return s + mean.to_text();
  }

  Json to_json() const {
    auto table_json = [](const AblationTable& t) {
      Json rows = Json::array();
      for (const auto& r : t.rows) {
        Json j{{"variant", r.variant}, {"psnr", r.psnr}, {"ssim", r.ssim}, {"ie", r.ie}};
        j["epe"] = r.epe ? Json(*r.epe) : Json(nullptr);
        rows.push_back(j);
      }
      return Json{{"title", t.title}, {"rows", rows}};
    };
    Json j{{"per_seed", Json::array()}, {"mean", table_json(mean)}};
    for (const auto& t : per_seed) j["per_seed"].push_back(table_json(t));
    return j;
  }
};

/// Trains each variant on `train_set` per seed and evaluates it on `val_set`.
/// The progress callback, if given, is told which (seed, variant) is starting.
template <class T>
AblationReport ablation_suite(const RunConfig& base, const std::vector<Triplet<T>>& train_set,
                              const std::vector<Triplet<T>>& val_set, const std::vector<std::uint64_t>& seeds,
                              int max_depth = 4,
                              const std::function<void(std::uint64_t, const std::string&)>& progress = {}) {
  expect(!seeds.empty(), "ablation_suite: needs at least one seed");
  const auto variants = ablation_variants(base, max_depth);
  const TripletTeacher<T> teacher(train_set);
  AblationReport rep;
  for (std::uint64_t seed : seeds) {
    AblationTable table;
    table.title = "seed " + std::to_string(seed);
    for (const auto& v : variants) {
      if (progress) progress(seed, v.name);
      TrainConfig tc = base.train;
      tc.seed = seed;
      auto res = train(v.model, tc, v.loss, train_set, teacher);
      const auto m = evaluate(val_set, res.params, v.model);
      table.rows.push_back({v.name, m.psnr, m.ssim, m.ie, m.epe});
    }
    rep.per_seed.push_back(std::move(table));
  }
  rep.mean.title = "mean over " + std::to_string(seeds.size()) + " seeds";
  const double n = static_cast<double>(seeds.size());
  for (std::size_t i = 0; i < variants.size(); ++i) {
    AblationRow r{variants[i].name, 0, 0, 0, 0.0};
    for (const auto& t : rep.per_seed) {
      r.psnr += t.rows[i].psnr / n;
      r.ssim += t.rows[i].ssim / n;
      r.ie += t.rows[i].ie / n;
      if (t.rows[i].epe && r.epe)
        *r.epe += *t.rows[i].epe / n;
      else
        r.epe.reset();
    }
    rep.mean.rows.push_back(r);
  }
  return rep;
}

}  // namespace mavfi
