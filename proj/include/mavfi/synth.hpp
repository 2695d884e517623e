// SPDX-License-Identifier: Apache-2.0
//
// Synthetic triplets with exact intermediate frames and flows: textured
// sprites over a static smooth background, each moving along
// p(tau) = p0 + v tau + a tau^2 with an optional constant rotation rate.
// Pixel (x, y) has its centre at the continuous coordinate (x, y), the same
// convention the warp uses, so analytic flows index straight into frames.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "mavfi/config.hpp"
#include "mavfi/core_ops.hpp"
#include "mavfi/rng.hpp"

namespace mavfi {

struct Vec2 {
  double x = 0, y = 0;
  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
};

enum class SpriteShape { kRectangle, kDisc, kTexturedPatch };

/// Smooth colour field: base + sum_k amp_k * sin(2 pi (f_k . q) + phase_k), per channel.
struct Texture {
  std::array<double, 3> base{0.5, 0.5, 0.5};
  struct Wave {
    Vec2 freq;  // cycles per pixel
    double amp = 0;
    double phase = 0;
  };
  std::array<std::vector<Wave>, 3> waves;

  double sample(int c, Vec2 q) const {
    double v = base[static_cast<std::size_t>(c)];
    for (const auto& w : waves[static_cast<std::size_t>(c)])
      v += w.amp * std::sin(2 * std::numbers::pi * (w.freq.x * q.x + w.freq.y * q.y) + w.phase);
    return v;
  }
};

struct Sprite {
  SpriteShape shape = SpriteShape::kRectangle;
  Vec2 half_size{6, 6};  // half extents; discs use half_size.x as radius
  int z = 0;             // larger z is drawn on top
  Vec2 p0;
  Vec2 velocity;
  Vec2 accel;
  double rotation_rate = 0;  // radians per unit time
  Texture texture;

  Vec2 centre(double tau) const { return p0 + tau * velocity + (tau * tau) * accel; }
  double angle(double tau) const { return rotation_rate * tau; }

  /// Sprite-local coordinate of canvas point p at time tau.
  Vec2 local(Vec2 p, double tau) const {
    const Vec2 d = p - centre(tau);
    const double a = angle(tau), c = std::cos(a), s = std::sin(a);
    return {c * d.x + s * d.y, -s * d.x + c * d.y};
  }
  Vec2 to_canvas(Vec2 q, double tau) const {
    const double a = angle(tau), c = std::cos(a), s = std::sin(a);
    return centre(tau) + Vec2{c * q.x - s * q.y, s * q.x + c * q.y};
  }

  /// Box-filtered coverage: a one-pixel linear ramp across the boundary.
  double coverage(Vec2 p, double tau) const {
    const Vec2 q = local(p, tau);
    if (shape == SpriteShape::kDisc) return std::clamp(0.5 + half_size.x - std::hypot(q.x, q.y), 0.0, 1.0);
    return std::clamp(0.5 + half_size.x - std::abs(q.x), 0.0, 1.0) *
           std::clamp(0.5 + half_size.y - std::abs(q.y), 0.0, 1.0);
  }
};

struct SceneSpec {
  int width = 64;
  int height = 64;
  Texture background;
  std::vector<Sprite> sprites;  // any order; drawn by ascending z
};

template <class T>
struct Triplet {
  Frame<T> i0, it, i1;
  double t = 0.5;
  FlowField<T> gt_to0, gt_to1;  // empty when unknown
  /// [2,H,W]; channel k is 1 where the t-frame pixel has no reliable
  /// correspondence in source frame k (occluded, off-canvas or on a sprite edge).
  Tensor<std::uint8_t> occlusion;
  std::string name;

  bool has_flows() const { return !gt_to0.empty() && !gt_to1.empty(); }
};

namespace detail {

inline std::vector<const Sprite*> by_z(const SceneSpec& spec) {
  std::vector<const Sprite*> order;
  for (const auto& s : spec.sprites) order.push_back(&s);
  std::stable_sort(order.begin(), order.end(), [](const Sprite* a, const Sprite* b) { return a->z < b->z; });
  return order;
}

/// Top-most sprite (index into `order`) whose coverage at p reaches 1/2, or -1.
inline int top_surface(const std::vector<const Sprite*>& order, Vec2 p, double tau, bool* mixed = nullptr) {
  int top = -1;
  bool mix = false;
  for (std::size_t k = 0; k < order.size(); ++k) {
    const double a = order[k]->coverage(p, tau);
    if (a > 0 && a < 1) mix = true;
    if (a >= 0.5) top = static_cast<int>(k);
  }
  if (mixed) *mixed = mix;
  return top;
}

}  // namespace detail

/// Rasterises the scene at time tau into a [0,1] frame.
template <class T = float>
Frame<T> render_scene(const SceneSpec& spec, double tau) {
  expect(tau >= 0 && tau <= 1, "render_scene: tau must be in [0,1], got ", tau);
  const auto order = detail::by_z(spec);
  Frame<T> out(spec.height, spec.width);
  for (int y = 0; y < spec.height; ++y)
    for (int x = 0; x < spec.width; ++x) {
      const Vec2 p{static_cast<double>(x), static_cast<double>(y)};
      std::array<double, 3> col{};
      for (int c = 0; c < 3; ++c) col[static_cast<std::size_t>(c)] = spec.background.sample(c, p);
      for (const Sprite* s : order) {
        const double a = s->coverage(p, tau);
        if (a <= 0) continue;
        const Vec2 q = s->local(p, tau);
        for (int c = 0; c < 3; ++c) {
          auto& v = col[static_cast<std::size_t>(c)];
          v = a * s->texture.sample(c, q) + (1 - a) * v;
        }
      }
      for (int c = 0; c < 3; ++c) out.tensor().at(c, y, x) = static_cast<T>(std::clamp(col[static_cast<std::size_t>(c)], 0.0, 1.0));
    }
  return out;
}

/// Renders tau in {0, t, 1} with analytic flows and occlusion masks.
template <class T = float>
Triplet<T> make_triplet(const SceneSpec& spec, double t) {
  expect(t > 0 && t < 1, "make_triplet: t must be in (0,1), got ", t);
  const int H = spec.height, W = spec.width;
  Triplet<T> tr;
  tr.t = t;
  tr.i0 = render_scene<T>(spec, 0.0);
  tr.it = render_scene<T>(spec, t);
  tr.i1 = render_scene<T>(spec, 1.0);
  tr.gt_to0 = FlowField<T>(H, W);
  tr.gt_to1 = FlowField<T>(H, W);
  tr.occlusion = Tensor<std::uint8_t>(2, H, W);

  const auto order = detail::by_z(spec);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const Vec2 p{static_cast<double>(x), static_cast<double>(y)};
      bool mixed = false;
      const int s = detail::top_surface(order, p, t, &mixed);
      for (int k = 0; k < 2; ++k) {
        const double tau = k == 0 ? 0.0 : 1.0;
        Vec2 target = p;
        if (s >= 0) target = order[static_cast<std::size_t>(s)]->to_canvas(order[static_cast<std::size_t>(s)]->local(p, t), tau);
        const Vec2 f = target - p;
        auto& flow = k == 0 ? tr.gt_to0 : tr.gt_to1;
        flow.tensor().at(0, y, x) = static_cast<T>(f.x);
        flow.tensor().at(1, y, x) = static_cast<T>(f.y);

        bool occluded = mixed || target.x < 0 || target.y < 0 || target.x > W - 1 || target.y > H - 1;
        if (!occluded) {
          // Every pixel of the bilinear footprint must show the same surface, unmixed.
          const int x0 = static_cast<int>(std::floor(target.x)), y0 = static_cast<int>(std::floor(target.y));
          for (int dy = 0; dy <= 1 && !occluded; ++dy)
            for (int dx = 0; dx <= 1 && !occluded; ++dx) {
              const Vec2 n{static_cast<double>(std::min(x0 + dx, W - 1)), static_cast<double>(std::min(y0 + dy, H - 1))};
              bool nm = false;
              occluded = detail::top_surface(order, n, tau, &nm) != s || nm;
            }
        }
        tr.occlusion.at(k, y, x) = occluded ? 1 : 0;
      }
    }
  return tr;
}

// ---------------------------------------------------------------------------
// scene distribution

namespace detail {

inline Texture random_texture(Rng& rng, double amp, int waves, double min_period, double max_period) {
  Texture tex;
  for (int c = 0; c < 3; ++c) {
    tex.base[static_cast<std::size_t>(c)] = rng.uniform(0.5 * amp + 0.1, 0.9 - 0.5 * amp);
    for (int k = 0; k < waves; ++k) {
      const double period = rng.uniform(min_period, max_period);
      const double dir = rng.uniform(0, 2 * std::numbers::pi);
      tex.waves[static_cast<std::size_t>(c)].push_back(
          {{std::cos(dir) / period, std::sin(dir) / period}, amp / waves, rng.uniform(0, 2 * std::numbers::pi)});
    }
  }
  return tex;
}

inline bool stays_on_canvas(const Sprite& s, int W, int H) {
  for (int i = 0; i <= 16; ++i) {
    const Vec2 c = s.centre(i / 16.0);
    if (c.x < 0 || c.y < 0 || c.x > W - 1 || c.y > H - 1) return false;
  }
  return true;
}

}  // namespace detail

/// Draws one scene from the configured distribution.
inline SceneSpec random_scene(Rng& rng, const DataConfig& cfg) {
  SceneSpec spec;
  spec.width = cfg.width;
  spec.height = cfg.height;
  const double canvas = std::min(cfg.width, cfg.height);
  spec.background = detail::random_texture(rng, 0.5, 3, canvas / 3.0, canvas * 1.5);
  const int n = rng.uniform_int(cfg.min_sprites, cfg.max_sprites);
  for (int i = 0; i < n; ++i) {
    Sprite s;
    const int kind = rng.uniform_int(0, 2);
    s.shape = static_cast<SpriteShape>(kind);
    const double size = rng.uniform(cfg.min_size, cfg.max_size);
    s.half_size = {size / 2, s.shape == SpriteShape::kDisc ? size / 2 : rng.uniform(cfg.min_size, cfg.max_size) / 2};
    s.z = i;
    s.texture = s.shape == SpriteShape::kTexturedPatch ? detail::random_texture(rng, 0.6, 2, 5.0, 12.0)
                                                       : detail::random_texture(rng, 0.25, 1, 8.0, 16.0);
    for (int attempt = 0;; ++attempt) {
      s.p0 = {rng.uniform(0, cfg.width - 1.0), rng.uniform(0, cfg.height - 1.0)};
      s.velocity = {rng.uniform(-cfg.max_speed, cfg.max_speed), rng.uniform(-cfg.max_speed, cfg.max_speed)};
      s.accel = {};
      if (rng.uniform() < cfg.accel_probability)
        s.accel = {rng.uniform(-cfg.max_accel, cfg.max_accel), rng.uniform(-cfg.max_accel, cfg.max_accel)};
      s.rotation_rate = rng.uniform() < cfg.rotation_probability ? rng.uniform(-cfg.max_rotation, cfg.max_rotation) : 0.0;
      if (detail::stays_on_canvas(s, cfg.width, cfg.height)) break;
      if (attempt == 64) {
        s.p0 = {cfg.width / 2.0, cfg.height / 2.0};
        s.velocity = {};
        s.accel = {};
        break;
      }
    }
    spec.sprites.push_back(s);
  }
  return spec;
}

/// The index-th triplet of the dataset named by seed. Depends only on (seed, index, cfg).
template <class T = float>
Triplet<T> generate_triplet(std::uint64_t seed, std::uint64_t index, const DataConfig& cfg) {
  Rng rng(stream_seed(seed, 0x53434e45ull, index));
  auto tr = make_triplet<T>(random_scene(rng, cfg), cfg.t);
  char name[32];
  std::snprintf(name, sizeof name, "sample_%05llu", static_cast<unsigned long long>(index));
  tr.name = name;
  return tr;
}

template <class T = float>
std::vector<Triplet<T>> make_dataset(std::uint64_t seed, std::size_t n, const DataConfig& cfg) {
  expect(n >= 1, "make_dataset: n must be >= 1");
  std::vector<Triplet<T>> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(generate_triplet<T>(seed, i, cfg));
  return out;
}

/// FNV-1a over the frame and flow payload bytes.
template <class T>
std::uint64_t checksum(const Triplet<T>& tr) {
  std::uint64_t h = 1469598103934665603ull;
  auto feed = [&](const Tensor<T>& t) {
    const auto* p = reinterpret_cast<const unsigned char*>(t.data());
    for (std::size_t i = 0; i < t.size() * sizeof(T); ++i) {
      h ^= p[i];
      h *= 1099511628211ull;
    }
  };
  feed(tr.i0.tensor());
  feed(tr.it.tensor());
  feed(tr.i1.tensor());
  if (tr.has_flows()) {
    feed(tr.gt_to0.tensor());
    feed(tr.gt_to1.tensor());
  }
  return h;
}

/// Desk-scale data distribution of the fixed eight-triplet overfit pack.
inline DataConfig overfit_pack_config() { return DataConfig{}; }
inline constexpr std::uint64_t kOverfitPackSeed = 20240501;

}  // namespace mavfi
