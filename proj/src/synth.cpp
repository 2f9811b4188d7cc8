// Procedural gait silhouettes: a head disc, a torso ellipse, and two-segment
// legs plus straight arms drawn as capsules, all driven by the gait phase.

#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include "scn/data.hpp"

namespace scn {
namespace {

constexpr double kPi = std::numbers::pi;

struct Pt {
  double x, y;
};

double seg_dist2(Pt p, Pt a, Pt b) {
  const double vx = b.x - a.x, vy = b.y - a.y;
  const double len2 = vx * vx + vy * vy;
  double t = len2 > 0 ? ((p.x - a.x) * vx + (p.y - a.y) * vy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double dx = p.x - (a.x + t * vx), dy = p.y - (a.y + t * vy);
  return dx * dx + dy * dy;
}

struct Capsule {
  Pt a, b;
  double r;
};

// Parameter vector scaled to [0, 1] per coordinate, for the distinctness test.
std::vector<double> normalised(const GaitParams& g) {
  return {(g.head_radius - 5.0) / 3.0,      (g.torso_half_width - 6.0) / 5.0,
          (g.torso_fraction - 0.28) / 0.1,  (g.leg_fraction - 0.42) / 0.1,
          (g.leg_thickness - 2.5) / 2.0,    (g.hip_swing - 0.25) / 0.3,
          (g.knee_flex - 0.3) / 0.6,        (g.arm_swing - 0.15) / 0.45,
          (g.period - 16) / 14.0};
}

// Flips pixels within two pixels of the silhouette outline, the way a
// segmentation errs. Flipping far from the figure would instead move the
// vertical crop of the alignment.
void add_edge_noise(Image& img, std::bernoulli_distribution& flip, std::mt19937_64& rng) {
  const Image src = img;
  const long h = static_cast<long>(img.height), w = static_cast<long>(img.width);
  for (long y = 0; y < h; ++y)
    for (long x = 0; x < w; ++x) {
      bool fg = false, bg = false;
      for (long dy = -2; dy <= 2; ++dy)
        for (long dx = -2; dx <= 2; ++dx) {
          const long yy = y + dy, xx = x + dx;
          if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
          (src.at(static_cast<std::size_t>(yy), static_cast<std::size_t>(xx)) ? fg : bg) = true;
        }
      if (fg && bg && flip(rng)) {
        auto& px = img.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x));
        px = static_cast<std::uint8_t>(255 - px);
      }
    }
}

}  // namespace

void SynthSpec::validate() const {
  if (subjects < 2) throw ConfigError("synth.subjects must be at least 2");
  if (views.empty()) throw ConfigError("synth.views must list at least one view");
  for (int v : views)
    if (v < 0 || v > 180) throw ConfigError("synth.views entries must lie in [0, 180]");
  if (sequences < 1 || sequences > 99) throw ConfigError("synth.sequences must be in [1, 99]");
  if (frames < static_cast<int>(kMinSequenceFrames))
    throw ConfigError("synth.frames must be at least " + std::to_string(kMinSequenceFrames));
  if (canvas_height < 48 || canvas_width < 32)
    throw ConfigError("synth canvas must be at least 48x32 pixels");
  if (noise < 0.0 || noise >= 0.5) throw ConfigError("synth.noise must be in [0, 0.5)");
  if (twins && (twin_period < 8 || frames % twin_period != 0))
    throw ConfigError("synth.twin_period must be >= 8 and divide synth.frames (" +
                      std::to_string(frames) + ")");
}

std::vector<GaitParams> synth_subjects(const SynthSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto draw = [&] {
    GaitParams g;
    g.head_radius = 5.0 + 3.0 * u(rng);
    g.torso_half_width = 6.0 + 5.0 * u(rng);
    g.torso_fraction = 0.28 + 0.1 * u(rng);
    g.leg_fraction = 0.42 + 0.1 * u(rng);
    g.thigh_share = 0.5;
    g.leg_thickness = 2.5 + 2.0 * u(rng);
    g.arm_thickness = 2.0 + 1.0 * u(rng);
    g.hip_swing = 0.25 + 0.3 * u(rng);
    g.knee_flex = 0.3 + 0.6 * u(rng);
    g.arm_swing = 0.15 + 0.45 * u(rng);
    g.period = 16 + static_cast<int>(15 * u(rng));
    return g;
  };
  std::vector<GaitParams> out;
  if (spec.twins) {
    GaitParams g = draw();
    g.period = spec.twin_period;
    out.push_back(g);
    g.reversed = true;
    out.push_back(g);
  }
  // Rejection keeps identities apart in parameter space.
  double min_gap = 0.45;
  int attempts = 0;
  while (static_cast<int>(out.size()) < spec.subjects) {
    GaitParams g = draw();
    const auto v = normalised(g);
    bool ok = true;
    for (const auto& o : out) {
      const auto w = normalised(o);
      double d2 = 0.0;
      for (std::size_t i = 0; i < v.size(); ++i) d2 += (v[i] - w[i]) * (v[i] - w[i]);
      if (d2 < min_gap * min_gap) ok = false;
    }
    if (ok) {
      out.push_back(g);
    } else if (++attempts % 1000 == 0) {
      min_gap *= 0.9;
    }
  }
  return out;
}

int phase_index(const GaitParams& g, int start, int t) {
  const int p = g.period;
  return g.reversed ? ((start - t) % p + p) % p : (start + t) % p;
}

Image render_frame(const GaitParams& g, int j, int view, const SynthSpec& spec) {
  const double H = spec.canvas_height, W = spec.canvas_width;
  const double phi = 2.0 * kPi * static_cast<double>(j) / static_cast<double>(g.period);
  const double v = static_cast<double>(view) * kPi / 180.0;
  // Side views show the full swing; frontal views foreshorten it and widen
  // the torso. A mild shear stands in for perspective.
  const double swing_x = 0.45 + 0.55 * std::sin(v);
  const double width_x = 1.0 + 0.3 * std::cos(v);
  const double shear = 0.08 * std::cos(v);

  const double body = 0.8 * H;
  const double leg_len = g.leg_fraction * body;
  const double hip_y = 0.5 * (H + body) - leg_len;
  const double shoulder_y = hip_y - g.torso_fraction * body;
  const double head_cy = shoulder_y - 1.0 - g.head_radius;
  const double cx = 0.5 * W;

  std::vector<Capsule> caps;
  auto leg = [&](double ph) {
    const double hip = g.hip_swing * std::sin(ph);
    // The knee bends while the leg swings forward; the phase lead makes the
    // motion asymmetric in time.
    const double knee = g.knee_flex * std::max(0.0, std::sin(ph + kPi / 3.0));
    const double thigh = g.thigh_share * leg_len, shin = leg_len - thigh;
    const Pt h{cx, hip_y};
    const Pt k{h.x + thigh * std::sin(hip) * swing_x, h.y + thigh * std::cos(hip)};
    const Pt a{k.x + shin * std::sin(hip - knee) * swing_x, k.y + shin * std::cos(hip - knee)};
    caps.push_back({h, k, g.leg_thickness});
    caps.push_back({k, a, g.leg_thickness * 0.85});
  };
  leg(phi);
  leg(phi + kPi);
  auto arm = [&](double ph, double side) {
    const double a = -g.arm_swing * std::sin(ph);
    const double len = 0.75 * (hip_y - shoulder_y) + 6.0;
    const Pt s{cx + side * 0.6 * g.torso_half_width * width_x * (1.0 - std::sin(v)), shoulder_y + 2.0};
    caps.push_back({s, {s.x + len * std::sin(a) * swing_x, s.y + len * std::cos(a)}, g.arm_thickness});
  };
  arm(phi, 1.0);
  arm(phi + kPi, -1.0);

  const double torso_cy = 0.5 * (shoulder_y + hip_y);
  const double torso_ry = 0.5 * (hip_y - shoulder_y) + 2.0;
  const double torso_rx = g.torso_half_width * width_x;

  Image img(static_cast<std::size_t>(H), static_cast<std::size_t>(W));
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x) {
      // Undo the shear about the hip line before testing the primitives.
      const double py = static_cast<double>(y) + 0.5;
      const Pt p{static_cast<double>(x) + 0.5 - shear * (py - hip_y), py};
      bool in = std::pow((p.x - cx) / torso_rx, 2) + std::pow((p.y - torso_cy) / torso_ry, 2) <= 1.0;
      in = in || std::pow(p.x - cx, 2) + std::pow(p.y - head_cy, 2) <= g.head_radius * g.head_radius;
      for (const auto& c : caps)
        if (!in && seg_dist2(p, c.a, c.b) <= c.r * c.r) in = true;
      if (in) img.at(y, x) = 255;
    }
  return img;
}

std::size_t synth_generate(const SynthSpec& spec, const fs::path& root) {
  const auto subjects = synth_subjects(spec);
  std::size_t written = 0;
  for (int s = 0; s < spec.subjects; ++s) {
    const GaitParams& g = subjects[static_cast<std::size_t>(s)];
    const bool twin = spec.twins && s < 2;
    for (int q = 1; q <= spec.sequences; ++q)
      for (int view : spec.views) {
        // Each sequence has its own stream: start phase and noise.
        std::seed_seq seeds{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(s),
                            static_cast<std::uint32_t>(q), static_cast<std::uint32_t>(view)};
        std::mt19937_64 rng(seeds);
        const int start = std::uniform_int_distribution<int>(0, g.period - 1)(rng);
        std::bernoulli_distribution flip(twin ? 0.0 : spec.noise);
        char dir[32];
        std::snprintf(dir, sizeof dir, "%03d/nm-%02d/%03d", s + 1, q, view);
        const fs::path out = root / dir;
        fs::create_directories(out);
        for (int t = 0; t < spec.frames; ++t) {
          Image img = render_frame(g, phase_index(g, start, t), view, spec);
          if (!twin && spec.noise > 0.0) add_edge_noise(img, flip, rng);
          char name[16];
          std::snprintf(name, sizeof name, "%03d.png", t + 1);
          write_png(out / name, img);
          ++written;
        }
      }
  }
  return written;
}

}  // namespace scn
