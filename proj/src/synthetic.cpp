#include "semtrack/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "semtrack/error.hpp"
#include "semtrack/random.hpp"

namespace semtrack {

std::string_view to_string(ShapeKind shape) {
  switch (shape) {
    case ShapeKind::kSquare: return "square";
    case ShapeKind::kDisk: return "disk";
    case ShapeKind::kTriangle: return "triangle";
    case ShapeKind::kCross: return "cross";
    case ShapeKind::kRing: return "ring";
  }
  return "?";
}

std::optional<ShapeKind> parse_shape(std::string_view name) {
  for (ShapeKind s : {ShapeKind::kSquare, ShapeKind::kDisk, ShapeKind::kTriangle, ShapeKind::kCross,
                      ShapeKind::kRing}) {
    if (to_string(s) == name) return s;
  }
  return std::nullopt;
}

bool shape_contains(ShapeKind shape, double u, double v) {
  if (std::abs(u) > 0.5 || std::abs(v) > 0.5) return false;
  switch (shape) {
    case ShapeKind::kSquare: return true;
    case ShapeKind::kDisk: return u * u + v * v <= 0.25;
    case ShapeKind::kTriangle: {
      // Apex at the top, truncated to a short flat edge; base along the bottom.
      const double half_width = 0.1 + 0.4 * (v + 0.5);
      return std::abs(u) <= half_width;
    }
    case ShapeKind::kCross: return std::abs(u) <= 1.0 / 6.0 || std::abs(v) <= 1.0 / 6.0;
    case ShapeKind::kRing: {
      const double r2 = u * u + v * v;
      return r2 <= 0.25 && r2 >= 0.0784;
    }
  }
  return false;
}

std::string SynthSpec::category_name() const {
  return category.empty() ? std::string(to_string(shape)) : category;
}

std::vector<AttributeTag> SynthSpec::tags() const {
  std::vector<AttributeTag> t;
  constexpr std::array<double, 3> kUnit{1.0, 1.0, 1.0};
  if (brightness_end != 1.0 || illuminant_end != kUnit || target_tint_end != kUnit) {
    t.push_back(AttributeTag::IV);
  }
  if (scale_drift != 0.0) t.push_back(AttributeTag::SV);
  if (occluder) t.push_back(AttributeTag::OCC);
  if (crosser) t.push_back(AttributeTag::BC);
  return t;
}

BBox target_box(const SynthSpec& s, std::size_t k) {
  const double t = static_cast<double>(k);
  double x = s.start_x + s.vx * t;
  double y = s.start_y + s.vy * t;
  if (s.motion == MotionKind::kSinusoidal) {
    const double phase = 2.0 * std::numbers::pi * t / s.period;
    x += s.amplitude_x * std::sin(phase);
    y += s.amplitude_y * std::sin(phase);
  }
  const double scale = std::exp(s.scale_drift * t);
  return {x, y, s.target_w * scale, s.target_h * scale};
}

namespace {

constexpr int kSuper = 4;  // supersampling per axis

using Rgb = std::array<double, 3>;

// Accumulates alpha-weighted colour of a shape over its pixel footprint.
template <typename Fn>
void for_each_covered_pixel(ShapeKind shape, const BBox& box, std::size_t width, std::size_t height, Fn&& fn) {
  const long x0 = std::max(0L, static_cast<long>(std::floor(box.left())));
  const long x1 = std::min(static_cast<long>(width) - 1, static_cast<long>(std::ceil(box.right())));
  const long y0 = std::max(0L, static_cast<long>(std::floor(box.top())));
  const long y1 = std::min(static_cast<long>(height) - 1, static_cast<long>(std::ceil(box.bottom())));
  for (long py = y0; py <= y1; ++py) {
    for (long px = x0; px <= x1; ++px) {
      int hits = 0;
      double u_sum = 0.0;
      for (int sy = 0; sy < kSuper; ++sy) {
        for (int sx = 0; sx < kSuper; ++sx) {
          const double fx = static_cast<double>(px) + (sx + 0.5) / kSuper;
          const double fy = static_cast<double>(py) + (sy + 0.5) / kSuper;
          const double u = (fx - box.left()) / box.w - 0.5;
          const double v = (fy - box.top()) / box.h - 0.5;
          if (shape_contains(shape, u, v)) {
            ++hits;
            u_sum += u + v;
          }
        }
      }
      if (hits == 0) continue;
      const double alpha = static_cast<double>(hits) / (kSuper * kSuper);
      fn(static_cast<std::size_t>(px), static_cast<std::size_t>(py), alpha, u_sum / hits);
    }
  }
}

// Saturated colours (one channel high, one low, one random) kept away from
// the background base colour.
Rgb random_color(Rng& rng, const Rgb& avoid) {
  Rgb c{};
  for (int attempt = 0; attempt < 64; ++attempt) {
    c = {uniform(rng, 0.75, 0.95), uniform(rng, 0.05, 0.3), uniform(rng, 0.1, 0.9)};
    std::shuffle(c.begin(), c.end(), rng);
    const double d2 = (c[0] - avoid[0]) * (c[0] - avoid[0]) + (c[1] - avoid[1]) * (c[1] - avoid[1]) +
                      (c[2] - avoid[2]) * (c[2] - avoid[2]);
    if (d2 >= 0.5 * 0.5) break;
  }
  return c;
}

double inside_fraction(const BBox& b, const SynthSpec& s) {
  const double iw = std::min(b.right(), static_cast<double>(s.width)) - std::max(b.left(), 0.0);
  const double ih = std::min(b.bottom(), static_cast<double>(s.height)) - std::max(b.top(), 0.0);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  return iw * ih / b.area();
}

struct Distractor {
  ShapeKind shape;
  Rgb color;
  double x, y, w, h, vx, vy;
};

}  // namespace

std::vector<float> rasterize_target(const SynthSpec& spec, std::size_t frame) {
  std::vector<float> alpha(spec.width * spec.height, 0.0f);
  for_each_covered_pixel(spec.shape, target_box(spec, frame), spec.width, spec.height,
                         [&](std::size_t x, std::size_t y, double a, double) {
                           alpha[y * spec.width + x] = static_cast<float>(a);
                         });
  return alpha;
}

Sequence generate_synthetic(const SynthSpec& spec) {
  if (spec.frames < 2) throw Error("generate_synthetic: need at least 2 frames");
  if (spec.width < 16 || spec.height < 16) throw Error("generate_synthetic: frame too small");
  if (!(spec.target_w > 0.0 && spec.target_h > 0.0)) throw Error("generate_synthetic: target extents must be positive");
  if (spec.motion == MotionKind::kSinusoidal && !(spec.period > 0.0)) {
    throw Error("generate_synthetic: sinusoidal motion needs a positive period");
  }
  for (std::size_t k = 0; k < spec.frames; ++k) {
    if (inside_fraction(target_box(spec, k), spec) < 0.5) {
      throw InfeasibleError("generate_synthetic(" + spec.name + "): target leaves the frame at frame " +
                            std::to_string(k));
    }
  }

  Rng rng = make_rng(spec.seed, "synthetic-scene");
  const std::size_t W = spec.width, H = spec.height;

  // Static background: base colour plus oriented gratings and soft blobs.
  const Rgb base{uniform(rng, 0.3, 0.6), uniform(rng, 0.3, 0.6), uniform(rng, 0.3, 0.6)};
  struct Grating {
    double fx, fy, phase;
    Rgb amp;
  };
  std::vector<Grating> gratings;
  for (int i = 0; i < 6; ++i) {
    const double angle = uniform(rng, 0.0, std::numbers::pi);
    const double freq = uniform(rng, 0.04, 0.25);
    gratings.push_back({freq * std::cos(angle), freq * std::sin(angle), uniform(rng, 0.0, 6.3),
                        {uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1)}});
  }
  std::vector<double> background(W * H * 3);
  for (std::size_t y = 0; y < H; ++y) {
    for (std::size_t x = 0; x < W; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        double v = base[c];
        for (const Grating& g : gratings) {
          v += spec.texture / 3.0 * g.amp[c] * std::sin(g.fx * x + g.fy * y + g.phase);
        }
        background[(y * W + x) * 3 + c] = v;
      }
    }
  }

  const Rgb target_color = random_color(rng, base);

  std::vector<ShapeKind> pool = spec.distractor_shapes;
  if (pool.empty()) {
    for (ShapeKind s : {ShapeKind::kSquare, ShapeKind::kDisk, ShapeKind::kTriangle, ShapeKind::kCross,
                        ShapeKind::kRing}) {
      if (s != spec.shape) pool.push_back(s);
    }
  }
  std::vector<Distractor> distractors;
  const BBox first = target_box(spec, 0);
  for (std::size_t i = 0; i < spec.distractors; ++i) {
    Distractor d{};
    d.shape = pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng)];
    d.color = random_color(rng, base);
    if (uniform(rng) < spec.distractor_color_match) {
      for (std::size_t c = 0; c < 3; ++c) d.color[c] = std::clamp(target_color[c] + uniform(rng, -0.05, 0.05), 0.0, 1.0);
    }
    d.w = first.w * uniform(rng, 0.8, 1.2);
    d.h = first.h * uniform(rng, 0.8, 1.2);
    // Start away from the target.
    for (int attempt = 0; attempt < 100; ++attempt) {
      d.x = uniform(rng, 0.5 * d.w, W - 0.5 * d.w);
      d.y = uniform(rng, 0.5 * d.h, H - 0.5 * d.h);
      if (std::hypot(d.x - first.x, d.y - first.y) > 0.9 * (first.w + d.w)) break;
    }
    const double speed = uniform(rng, 0.5, 1.5);
    const double heading = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    d.vx = speed * std::cos(heading);
    d.vy = speed * std::sin(heading);
    distractors.push_back(d);
  }

  std::optional<Distractor> crosser;
  if (spec.crosser) {
    const BBox meet = target_box(spec, spec.crosser_frame);
    const double back = static_cast<double>(spec.crosser_frame);
    crosser = Distractor{*spec.crosser,
                         target_color,
                         meet.x + spec.crosser_dx - spec.crosser_vx * back,
                         meet.y + spec.crosser_dy - spec.crosser_vy * back,
                         first.w,
                         first.h,
                         spec.crosser_vx,
                         spec.crosser_vy};
  }

  Rng noise_rng = make_rng(spec.seed, "synthetic-noise");
  std::normal_distribution<double> noise(0.0, spec.noise);

  Sequence seq;
  seq.name = spec.name;
  seq.category = spec.category_name();
  seq.tags = spec.tags();
  std::vector<double> img(W * H * 3);
  auto paint = [&](ShapeKind shape, const BBox& box, const Rgb& color) {
    for_each_covered_pixel(shape, box, W, H, [&](std::size_t x, std::size_t y, double a, double shade) {
      const double s = 1.0 + 0.35 * shade;  // gentle diagonal shading
      for (std::size_t c = 0; c < 3; ++c) {
        double& px = img[(y * W + x) * 3 + c];
        px = (1.0 - a) * px + a * std::clamp(color[c] * s, 0.0, 1.0);
      }
    });
  };

  for (std::size_t k = 0; k < spec.frames; ++k) {
    img = background;
    for (Distractor& d : distractors) {
      paint(d.shape, BBox{d.x, d.y, d.w, d.h}, d.color);
      d.x += d.vx;
      d.y += d.vy;
      if (d.x < 0.5 * d.w || d.x > W - 0.5 * d.w) d.vx = -d.vx;
      if (d.y < 0.5 * d.h || d.y > H - 0.5 * d.h) d.vy = -d.vy;
    }
    const BBox box = target_box(spec, k);
    Rgb tinted = target_color;
    const double tk = static_cast<double>(k) / static_cast<double>(spec.frames - 1);
    for (std::size_t c = 0; c < 3; ++c) {
      tinted[c] = std::clamp(target_color[c] * (1.0 + (spec.target_tint_end[c] - 1.0) * tk), 0.0, 1.0);
    }
    paint(spec.shape, box, tinted);
    if (crosser) {
      const double t = static_cast<double>(k);
      paint(crosser->shape, BBox{crosser->x + crosser->vx * t, crosser->y + crosser->vy * t, crosser->w, crosser->h},
            crosser->color);
    }

    if (spec.occluder) {
      // A grey bar sweeps across the target during the middle third.
      const double t0 = spec.frames / 3.0, t1 = 2.0 * spec.frames / 3.0;
      const double t = static_cast<double>(k);
      if (t >= t0 && t <= t1) {
        const double bar_w = spec.occluder_width * box.w;
        const double cx = box.left() - bar_w + (t - t0) / (t1 - t0) * (box.w + 2.0 * bar_w);
        const long xa = std::max(0L, static_cast<long>(std::floor(cx - 0.5 * bar_w)));
        const long xb = std::min(static_cast<long>(W), static_cast<long>(std::ceil(cx + 0.5 * bar_w)));
        for (std::size_t y = 0; y < H; ++y)
          for (long x = xa; x < xb; ++x)
            for (std::size_t c = 0; c < 3; ++c) img[(y * W + static_cast<std::size_t>(x)) * 3 + c] = 0.5;
      }
    }

    const double t = static_cast<double>(k) / static_cast<double>(spec.frames - 1);
    Rgb gain;
    for (std::size_t c = 0; c < 3; ++c) {
      gain[c] = (1.0 + (spec.brightness_end - 1.0) * t) * (1.0 + (spec.illuminant_end[c] - 1.0) * t);
    }
    std::vector<float> rgb(W * H * 3);
    for (std::size_t i = 0; i < rgb.size(); ++i) {
      const double v = std::clamp(img[i] * gain[i % 3] + noise(noise_rng), 0.0, 1.0);
      rgb[i] = static_cast<float>(std::lround(v * 255.0) / 255.0);
    }
    seq.frames.push_back(std::make_shared<const FrameImage>(W, H, std::move(rgb)));
    seq.gt.push_back(box);
  }
  return seq;
}

namespace {

// Random motion that keeps the target well inside the frame.
SynthSpec random_track(SynthSpec s, Rng& rng, double max_speed) {
  for (int attempt = 0; attempt < 200; ++attempt) {
    s.target_w = uniform(rng, 24.0, 34.0);
    s.target_h = s.target_w * uniform(rng, 0.8, 1.25);
    s.start_x = uniform(rng, 0.35, 0.65) * static_cast<double>(s.width);
    s.start_y = uniform(rng, 0.35, 0.65) * static_cast<double>(s.height);
    s.motion = uniform(rng) < 0.5 ? MotionKind::kLinear : MotionKind::kSinusoidal;
    s.vx = uniform(rng, -max_speed, max_speed);
    s.vy = uniform(rng, -max_speed, max_speed);
    s.amplitude_x = s.motion == MotionKind::kSinusoidal ? uniform(rng, 5.0, 20.0) : 0.0;
    s.amplitude_y = s.motion == MotionKind::kSinusoidal ? uniform(rng, 5.0, 20.0) : 0.0;
    s.period = uniform(rng, 20.0, 60.0);
    bool ok = true;
    for (std::size_t k = 0; k < s.frames && ok; ++k) {
      const BBox b = target_box(s, k);
      ok = b.left() >= 2.0 && b.top() >= 2.0 && b.right() <= s.width - 2.0 && b.bottom() <= s.height - 2.0;
    }
    if (ok) return s;
  }
  // Fall back to a static target in the centre.
  s.start_x = 0.5 * static_cast<double>(s.width);
  s.start_y = 0.5 * static_cast<double>(s.height);
  s.vx = s.vy = s.amplitude_x = s.amplitude_y = 0.0;
  s.scale_drift = 0.0;
  return s;
}

}  // namespace

DatasetPlan plan_dataset(const DatasetSpec& d) {
  if (d.categories.empty()) throw Error("plan_dataset: need at least one category shape");
  DatasetPlan plan;
  auto base = [&d](const std::string& name, ShapeKind shape, std::size_t frames, std::uint64_t seed) {
    SynthSpec s;
    s.name = name;
    s.shape = shape;
    s.frames = frames;
    s.width = d.width;
    s.height = d.height;
    s.distractors = d.distractors;
    s.distractor_color_match = d.distractor_color_match;
    s.seed = seed;
    return s;
  };
  char buf[64];
  for (ShapeKind shape : d.categories) {
    for (std::size_t i = 0; i < d.train_per_category; ++i) {
      std::snprintf(buf, sizeof(buf), "train_%s_%02zu", std::string(to_string(shape)).c_str(), i);
      Rng rng = make_rng(d.seed, buf);
      SynthSpec s = base(buf, shape, d.train_frames, derive_seed(d.seed, std::string(buf) + "/scene"));
      s.scale_drift = uniform(rng) < 0.5 ? uniform(rng, -0.006, 0.006) : 0.0;
      s.brightness_end = uniform(rng) < 0.5 ? uniform(rng, 0.7, 1.2) : 1.0;
      plan.train.push_back(random_track(s, rng, 1.5));
    }
  }
  for (std::size_t i = 0; i < d.x_train_sequences && !d.x_shapes.empty(); ++i) {
    const ShapeKind shape = d.x_shapes[i % d.x_shapes.size()];
    std::snprintf(buf, sizeof(buf), "train_X_%s_%02zu", std::string(to_string(shape)).c_str(), i);
    Rng rng = make_rng(d.seed, buf);
    SynthSpec s = base(buf, shape, d.train_frames, derive_seed(d.seed, std::string(buf) + "/scene"));
    s.category = d.category_x_name;
    s.distractor_shapes = d.categories;
    plan.train.push_back(random_track(s, rng, 1.5));
  }
  for (std::size_t i = 0; i < d.test_sequences; ++i) {
    const ShapeKind shape = d.categories[i % d.categories.size()];
    std::snprintf(buf, sizeof(buf), "test_%02zu_%s", i, std::string(to_string(shape)).c_str());
    Rng rng = make_rng(d.seed, buf);
    SynthSpec s = base(buf, shape, d.test_frames, derive_seed(d.seed, std::string(buf) + "/scene"));
    // Every held-out sequence carries scale variation and an illumination ramp.
    s.scale_drift = (uniform(rng) < 0.5 ? -1.0 : 1.0) * uniform(rng, 0.004, 0.009);
    s.brightness_end = uniform(rng) < 0.5 ? uniform(rng, 0.55, 0.75) : uniform(rng, 1.2, 1.4);
    for (double& g : s.illuminant_end) g = 1.0 + uniform(rng, -d.test_illuminant_shift, d.test_illuminant_shift);
    s.occluder = i % 4 == 3;
    s = random_track(s, rng, 2.0);
    if (d.test_crossers && d.categories.size() > 1) {
      const std::size_t other = (i % d.categories.size() + 1 + i / d.categories.size() % (d.categories.size() - 1)) %
                                d.categories.size();
      s.crosser = d.categories[other];
      s.crosser_frame = s.frames / 3 + std::uniform_int_distribution<std::size_t>(0, s.frames / 3)(rng);
      // A near miss: it passes beside the target, never fully over it.
      const BBox a = target_box(s, s.crosser_frame), b = target_box(s, s.crosser_frame + 1);
      const double speed = uniform(rng, 2.5, 3.5);
      const double heading = uniform(rng, 0.0, 2.0 * std::numbers::pi);
      const double miss = (uniform(rng) < 0.5 ? -1.0 : 1.0) * uniform(rng, 0.7, 1.0) * std::max(a.w, a.h);
      s.crosser_vx = b.x - a.x + speed * std::cos(heading);
      s.crosser_vy = b.y - a.y + speed * std::sin(heading);
      s.crosser_dx = -miss * std::sin(heading);
      s.crosser_dy = miss * std::cos(heading);
    }
    for (double& g : s.target_tint_end) g = 1.0 + uniform(rng, -d.test_target_tint, d.test_target_tint);
    plan.test.push_back(s);
  }
  return plan;
}

}  // namespace semtrack
