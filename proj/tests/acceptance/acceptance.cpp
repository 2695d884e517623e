// SPDX-License-Identifier: Apache-2.0
//
// Acceptance gate: runs each criterion at its stated tolerance and prints one
// PASS/FAIL line per criterion. Exit status is nonzero if any criterion fails.

#include <chrono>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"

using namespace mavfi;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// 1 ------------------------------------------------------------------------
template <class T>
double fractional_warp_error(Rng& rng, int cases) {
  double worst = 0;
  for (int i = 0; i < cases; ++i) {
    const int H = rng.uniform_int(2, 24), W = rng.uniform_int(2, 24);
    const auto src = oracle::random_tensor<T>({3, H, W}, rng);
    const auto flow = oracle::random_tensor<T>({2, H, W}, rng, -4.0, 4.0);
    worst = std::max(worst, oracle::max_abs_diff(warp(src, flow), oracle::warp(src, flow)));
  }
  return worst;
}

Outcome warp_suite() {
  const auto t0 = Clock::now();
  Rng rng(101);
  bool identity = true, shift = true;
  for (int i = 0; i < 20; ++i) {
    const int H = rng.uniform_int(1, 30), W = rng.uniform_int(1, 30);
    const auto src = oracle::random_tensor<float>({4, H, W}, rng);
    identity = identity && warp(src, Tensor<float>(2, H, W)) == src;

    const int du = rng.uniform_int(-5, 5), dv = rng.uniform_int(-5, 5);
    const FlowField<float> f(H, W, static_cast<float>(du), static_cast<float>(dv));
    const auto out = warp(src, f);
    for (int c = 0; c < 4; ++c)
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
          if (x + du >= 0 && x + du < W && y + dv >= 0 && y + dv < H)
            shift = shift && out.at(c, y, x) == src.at(c, y + dv, x + du);
  }
  const double err_d = fractional_warp_error<double>(rng, 40);
  const double err_f = fractional_warp_error<float>(rng, 40);
  const double secs = seconds_since(t0);
  Outcome o;
  // The tolerance applies to double precision; single precision is reported for reference.
  o.pass = identity && shift && err_d < 1e-6 && secs < 10;
  o.detail = std::string("identity ") + (identity ? "exact" : "BROKEN") + ", integer shift " + (shift ? "exact" : "BROKEN") +
             ", fractional max err f64 " + fmt("%.2e", err_d) + " f32 " + fmt("%.2e", err_f) + ", " + fmt("%.2f s", secs);
  return o;
}

// 2 ------------------------------------------------------------------------
Outcome gradient_suite() {
  const auto t0 = Clock::now();
  using V = ag::Var<double>;
  Rng rng(202);
  std::vector<std::pair<std::string, oracle::GradReport>> reports;
  auto run = [&](const std::string& what, auto f, std::vector<Tensor<double>> in, std::vector<std::string> names,
                 std::size_t coords = 64) {
    reports.emplace_back(what, oracle::check_gradients(f, std::move(in), names, coords));
  };

  const int H = 9, W = 11;
  run("warp", [](const std::vector<V>& v) { return ag::mean_abs_diff(ag::warp(v[0], v[1]), V::constant(Tensor<double>(3, 9, 11, 0.5))); },
      {oracle::random_tensor<double>({3, H, W}, rng), oracle::random_tensor<double>({2, H, W}, rng, -2.3, 2.3)},
      {"src", "flow"});
  auto weighted = [](const V& x, const Tensor<double>& w) { return ag::mean_abs_diff(x, V::constant(w)); };
  const auto target = oracle::random_tensor<double>({3, H, W}, rng, -1, 2);
  run("fuse",
      [&](const std::vector<V>& v) { return weighted(ag::fuse(v[0], v[1], v[2]), target); },
      {oracle::random_tensor<double>({3, H, W}, rng), oracle::random_tensor<double>({3, H, W}, rng),
       oracle::random_tensor<double>({1, H, W}, rng)},
      {"a", "b", "guide"});
  for (double s : {0.5, 2.0, 0.75}) {
    const auto x = oracle::random_tensor<double>({2, 8, 12}, rng);
    const auto tgt = oracle::random_tensor<double>({2, mavfi::detail::scaled_extent(8, s), mavfi::detail::scaled_extent(12, s)}, rng, -1, 2);
    run("resize x" + fmt("%.2f", s), [&, s](const std::vector<V>& v) { return weighted(ag::resize_bilinear(v[0], s), tgt); },
        {x}, {"x"});
    run("rescale_flow x" + fmt("%.2f", s), [&, s](const std::vector<V>& v) { return weighted(ag::rescale_flow(v[0], s), tgt); },
        {x}, {"flow"});
  }
  run("smooth term", [](const std::vector<V>& v) { return ag::spatial_gradient_l1(v[0]); },
      {oracle::random_tensor<double>({2, H, W}, rng, -3, 3)}, {"flow"});
  run("reconstruction term", [&](const std::vector<V>& v) { return ag::rec_loss(v[0], V::constant(target)); },
      {oracle::random_tensor<double>({3, H, W}, rng)}, {"pred"});

  // Full tiny model: 16x16 frames, width 1/16, random init, all three loss terms.
  ModelConfig mc;
  mc.width_multiplier = 1.0 / 16;
  const auto init = init_params<double>(mc, 5);
  const auto i0 = oracle::random_tensor<double>({3, 16, 16}, rng, 0.2, 0.8);
  const auto i1 = oracle::random_tensor<double>({3, 16, 16}, rng, 0.2, 0.8);
  const auto gt = oracle::random_tensor<double>({3, 16, 16}, rng, 0.2, 0.8);
  const auto teacher = build_teacher_multiscale(FlowField<double>(oracle::random_tensor<double>({2, 16, 16}, rng, -2, 2)),
                                                FlowField<double>(oracle::random_tensor<double>({2, 16, 16}, rng, -2, 2)),
                                                mc.depth);
  std::vector<Tensor<double>> values;
  std::vector<std::string> names;
  for (const auto& e : init.entries()) {
    values.push_back(e.var.value());
    names.push_back(e.name);
  }
  run("full model",
      [&](const std::vector<V>& v) {
        ParameterStore<double> store;
        for (std::size_t k = 0; k < v.size(); ++k) store.add(names[k], v[k]);
        auto out = cascade_forward(i0, i1, store, mc);
        return total_loss(out.frame, V::constant(gt), out.flows, &teacher, LossWeights{1.0, 0.5, 0.5}).total;
      },
      values, names, 24);

  const double secs = seconds_since(t0);
  double worst = 0;
  std::string where;
  for (const auto& [what, r] : reports)
    if (r.worst_rel_error >= worst) {
      worst = r.worst_rel_error;
      where = what + "/" + r.worst_input;
    }
  Outcome o;
  o.pass = worst < 1e-3 && secs < 300;
  o.detail = std::to_string(reports.size()) + " checks, worst relative error " + fmt("%.2e", worst) + " (" + where + "), " +
             fmt("%.1f s", secs);
  return o;
}

// 3 ------------------------------------------------------------------------
Outcome zero_identity() {
  Rng rng(303);
  ModelConfig mc;
  mc.width_multiplier = 1.0 / 8;
  const auto params = init_params<float>(mc, 9, InitMode::kZeroFlow);
  int exact = 0;
  for (int i = 0; i < 100; ++i) {
    const int H = 16 * rng.uniform_int(1, 3), W = 16 * rng.uniform_int(1, 3);
    const auto a = oracle::random_tensor<float>({3, H, W}, rng);
    const auto b = oracle::random_tensor<float>({3, H, W}, rng);
    const auto out = cascade_forward(a, b, params, mc).frame.value();
    const auto want = zip(a, b, [](float x, float y) { return std::clamp((x + y) / 2, 0.0f, 1.0f); });
    exact += out == want;
  }
  return {exact == 100, std::to_string(exact) + "/100 random pairs bit-exact"};
}

// 4 ------------------------------------------------------------------------
Outcome metric_oracles() {
  const double p05 = psnr(Frame<double>(8, 8, 0.75), Frame<double>(8, 8, 0.25));
  const double p01 = psnr(Frame<double>(8, 8, 0.1), Frame<double>(8, 8, 0.0));
  const double s_const = ssim(Frame<double>(16, 16, 0.2), Frame<double>(16, 16, 0.4));
  const double s_closed = (2 * 0.2 * 0.4 + 1e-4) / (0.2 * 0.2 + 0.4 * 0.4 + 1e-4);
  Rng rng(404);
  double s_ref = 0;
  for (int i = 0; i < 5; ++i) {
    const auto a = oracle::random_frame<double>(32, 32, rng), b = oracle::random_frame<double>(32, 32, rng);
    s_ref = std::max(s_ref, std::abs(ssim(a, b) - oracle::ssim(a.tensor(), b.tensor())));
  }
  const double e = epe(FlowField<double>(6, 5, 3.0, 4.0), FlowField<double>(6, 5));
  Outcome o;
  o.pass = std::abs(p05 - 20 * std::log10(2.0)) < 1e-3 && std::abs(p01 - 20) < 1e-3 && std::abs(s_const - s_closed) < 1e-4 &&
           s_ref < 1e-6 && e == 5.0;
  o.detail = "PSNR " + fmt("%.4f", p05) + " / " + fmt("%.4f dB", p01) + ", SSIM const " + fmt("%.5f", s_const) +
             ", SSIM vs reference " + fmt("%.1e", s_ref) + ", EPE " + fmt("%.1f", e);
  return o;
}

// 5 ------------------------------------------------------------------------
double masked_warp_mae(const Triplet<float>& tr, int k) {
  const auto& src = k == 0 ? tr.i0 : tr.i1;
  const auto& flow = k == 0 ? tr.gt_to0 : tr.gt_to1;
  const auto w = warp(src.tensor(), flow);
  double s = 0;
  std::size_t n = 0;
  for (int y = 0; y < tr.it.height(); ++y)
    for (int x = 0; x < tr.it.width(); ++x) {
      if (tr.occlusion.at(k, y, x)) continue;
      for (int c = 0; c < 3; ++c) s += std::abs(w.at(c, y, x) - tr.it.tensor().at(c, y, x));
      n += 3;
    }
  return n ? s / static_cast<double>(n) : 0.0;
}

Outcome synthetic_consistency() {
  SceneSpec spec;
  Rng trng(505);
  spec.background = Texture{};
  spec.background.waves[0].push_back({{0.05, 0.02}, 0.2, 0.3});
  spec.background.waves[1].push_back({{-0.03, 0.04}, 0.2, 1.1});
  spec.background.waves[2].push_back({{0.02, -0.05}, 0.2, 2.0});
  Sprite s;
  s.shape = SpriteShape::kTexturedPatch;
  s.half_size = {7, 6};
  s.p0 = {24, 32};
  s.accel = {8, 0};
  s.texture.base = {0.8, 0.3, 0.2};
  s.texture.waves[0].push_back({{0.15, 0.1}, 0.15, 0.0});
  s.texture.waves[1].push_back({{-0.1, 0.2}, 0.15, 0.5});
  spec.sprites.push_back(s);
  const auto quad = make_triplet<float>(spec, 0.5);
  const Vec2 c = s.centre(0.5);
  const int cx = static_cast<int>(std::lround(c.x)), cy = static_cast<int>(std::lround(c.y));
  const bool asym = quad.gt_to0.u(cy, cx) == -2.0f && quad.gt_to0.v(cy, cx) == 0.0f && quad.gt_to1.u(cy, cx) == 6.0f &&
                    quad.gt_to1.v(cy, cx) == 0.0f;

  DataConfig dc;
  dc.accel_probability = 0.7;
  double worst = std::max(masked_warp_mae(quad, 0), masked_warp_mae(quad, 1));
  for (int i = 0; i < 49; ++i) {
    const auto tr = generate_triplet<float>(55, static_cast<std::uint64_t>(i), dc);
    worst = std::max({worst, masked_warp_mae(tr, 0), masked_warp_mae(tr, 1)});
  }
  return {asym && worst < 0.02, std::string("quadratic case flows (-2,0)/(6,0) ") + (asym ? "exact" : "WRONG") +
                                    ", worst non-occluded MAE over 50 triplets " + fmt("%.4f", worst)};
}

// 6 ------------------------------------------------------------------------
Outcome overfit() {
  const auto t0 = Clock::now();
  ModelConfig mc;
  mc.width_multiplier = 1.0 / 8;
  const auto pack = make_dataset<float>(kOverfitPackSeed, 8, overfit_pack_config());
  TrainConfig tc;
  tc.steps = 600;
  tc.batch_size = 8;
  tc.eval_every = 0;
  const TripletTeacher<float> teacher(pack);
  const auto res = train(mc, tc, LossWeights{}, pack, teacher);
  const double p = mean_psnr(pack, 0, pack.size(), res.params, mc);
  const double secs = seconds_since(t0);
  return {p >= 30 && tc.steps <= 2000 && secs < 600,
          "training PSNR " + fmt("%.2f dB", p) + " after " + std::to_string(tc.steps) + " steps, " + fmt("%.1f s", secs)};
}

// 7 ------------------------------------------------------------------------
Outcome distillation_direction() {
  ModelConfig mc;
  mc.width_multiplier = 1.0 / 8;
  const auto data = make_dataset<float>(1000, 32, DataConfig{});
  const auto val = make_dataset<float>(2000, 16, DataConfig{});
  const TripletTeacher<float> teacher(data);
  const double baseline = *evaluate(val, init_params<float>(mc, 0, InitMode::kZeroFlow), mc).epe;
  bool all = true;
  std::ostringstream os;
  for (std::uint64_t seed : {1, 2, 3}) {
    double e[2];
    for (int k = 0; k < 2; ++k) {
      TrainConfig tc;
      tc.steps = 150;
      tc.batch_size = 8;
      tc.seed = seed;
      tc.eval_every = 0;
      tc.holdout_fraction = 0;
      LossWeights w;
      w.beta = k == 0 ? 0.01 : 0.0;
      const auto res = train(mc, tc, w, data, teacher);
      e[k] = *evaluate(val, res.params, mc).epe;
    }
    all = all && e[0] < e[1];
    os << "seed " << seed << ": " << fmt("%.3f", e[0]) << " < " << fmt("%.3f", e[1]) << (e[0] < e[1] ? "" : " (NO)") << "; ";
  }
  os << "zero-flow baseline " << fmt("%.3f", baseline);
  return {all, "validation EPE with vs without teacher term, " + os.str()};
}

// 8 ------------------------------------------------------------------------
Outcome cosine_endpoints() {
  const TrainConfig tc;
  const std::int64_t total = 90000;
  const double a = lr_at(0, total, tc), b = lr_at(total, total, tc), m = lr_at(total / 2, total, tc);
  return {a == 3e-4 && b == 3e-5 && std::abs(m - 1.65e-4) < 1e-9,
          "lr(0) " + fmt("%.17g", a) + ", lr(total) " + fmt("%.17g", b) + ", lr(mid) " + fmt("%.17g", m)};
}

// 9 ------------------------------------------------------------------------
Outcome multiframe_contract() {
  ModelConfig mc;
  mc.width_multiplier = 1.0 / 8;
  const auto params = init_params<float>(mc, 3);
  Rng rng(909);
  const auto a = oracle::random_frame<float>(20, 28, rng), b = oracle::random_frame<float>(20, 28, rng);
  auto ts = [](const std::vector<TimedFrame<float>>& v) {
    std::vector<double> t;
    for (const auto& f : v) t.push_back(f.t);
    return t;
  };
  const auto x3 = multiframe(a, b, params, mc, 3), x5 = multiframe(a, b, params, mc, 5);
  const auto x5b = multiframe(a, b, params, mc, 5);
  bool det = x5.size() == x5b.size();
  for (std::size_t i = 0; det && i < x5.size(); ++i) det = x5[i].frame == x5b[i].frame;
  // The 0.625 frame must be the midpoint of the 0.5 and 0.75 frames.
  const bool recursion = x5.size() == 5 && interpolate_midpoint(x5[2].frame, x5[4].frame, params, mc) == x5[3].frame &&
                         interpolate_midpoint(a, x5[1].frame, params, mc) == x5[0].frame;
  const bool sets = ts(x3) == std::vector<double>{0.25, 0.5, 0.75} &&
                    ts(x5) == std::vector<double>{0.125, 0.25, 0.5, 0.625, 0.75};
  return {sets && det && recursion, std::string("x3/x5 timestep sets ") + (sets ? "match" : "WRONG") + ", deterministic " +
                                        (det ? "yes" : "no") + ", recursion " + (recursion ? "verified" : "WRONG")};
}

// 10 -----------------------------------------------------------------------
template <class T>
io::Checkpoint<T> random_checkpoint(Rng& rng) {
  io::Checkpoint<T> ck;
  ck.fingerprint = std::to_string(rng.next());
  ck.step = static_cast<std::int64_t>(rng.next() % 1000000);
  ck.model_config = to_json(ModelConfig{});
  const int n = rng.uniform_int(0, 6);
  for (int i = 0; i < n; ++i) {
    Shape s(static_cast<std::size_t>(rng.uniform_int(0, 4)));
    for (auto& d : s) d = rng.uniform_int(0, 5);
    Tensor<T> t(s);
    for (auto& v : t.values()) v = static_cast<T>(rng.normal() * 1e3);
    ck.arrays.emplace_back("a" + std::to_string(i) + ".w", std::move(t));
  }
  return ck;
}

template <class T>
bool same_checkpoint(const io::Checkpoint<T>& a, const io::Checkpoint<T>& b) {
  if (a.fingerprint != b.fingerprint || a.step != b.step || a.model_config != b.model_config ||
      a.arrays.size() != b.arrays.size())
    return false;
  for (std::size_t i = 0; i < a.arrays.size(); ++i)
    if (a.arrays[i].first != b.arrays[i].first || !(a.arrays[i].second == b.arrays[i].second)) return false;
  return true;
}

Outcome round_trips() {
  Rng rng(1010);
  int flo_ok = 0, ck_ok = 0;
  const int cases = 120;
  for (int i = 0; i < cases; ++i) {
    const int H = rng.uniform_int(1, 40), W = rng.uniform_int(1, 40);
    FlowField<float> f(oracle::random_tensor<float>({2, H, W}, rng, -50, 50));
    const std::string bytes = io::encode_flo(f);
    const auto back = io::decode_flo(bytes, "memory");
    flo_ok += back.tensor() == f.tensor() && io::encode_flo(back) == bytes;
  }
  for (int i = 0; i < cases; ++i) {
    if (i % 2 == 0) {
      const auto ck = random_checkpoint<float>(rng);
      const auto bytes = io::encode_checkpoint(ck);
      const auto back = io::decode_checkpoint<float>(bytes, "memory");
      ck_ok += same_checkpoint(ck, back) && io::encode_checkpoint(back) == bytes;
    } else {
      const auto ck = random_checkpoint<double>(rng);
      const auto bytes = io::encode_checkpoint(ck);
      const auto back = io::decode_checkpoint<double>(bytes, "memory");
      ck_ok += same_checkpoint(ck, back) && io::encode_checkpoint(back) == bytes;
    }
  }
  return {flo_ok == cases && ck_ok == cases, "flow files " + std::to_string(flo_ok) + "/" + std::to_string(cases) +
                                                  ", checkpoints " + std::to_string(ck_ok) + "/" + std::to_string(cases) +
                                                  " bit-exact"};
}

// 11 -----------------------------------------------------------------------
Outcome parameter_count_check() {
  const std::size_t n = parameter_count(ModelConfig{});
  return {n >= 10'000'000 && n <= 26'000'000, "default config has " + std::to_string(n) + " parameters"};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"warp oracle suite", warp_suite},
      {"gradient verification", gradient_suite},
      {"zero-network identity", zero_identity},
      {"metric oracles", metric_oracles},
      {"synthetic-data consistency", synthetic_consistency},
      {"overfit regression", overfit},
      {"distillation direction", distillation_direction},
      {"cosine schedule endpoints", cosine_endpoints},
      {"multi-frame contract", multiframe_contract},
      {"format round trips", round_trips},
      {"parameter-count sanity", parameter_count_check},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("criterion %2zu %s  %s: %s\n", i + 1, o.pass ? "PASS" : "FAIL", criteria[i].first.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - static_cast<std::size_t>(failed), criteria.size());
  return failed == 0 ? 0 : 1;
}
