#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "hparse/dataset.hpp"
#include "hparse/png_io.hpp"
#include "hparse/raster.hpp"
#include "hparse/rng.hpp"
#include "hparse/taxonomy.hpp"

namespace hparse {

// Procedural stick-figure scenes: a head disc, torso and limb capsules and
// shoe discs on a cluttered background. Class colors carry the signal the
// toy model learns from; a small left/right color tilt keeps the side
// assignment learnable even when geometry alone is ambiguous (back views).
struct FigureConfig {
  int image_size = 64;
  double occlusion_prob = 0.25;
  double back_view_prob = 0.25;
  double head_missed_prob = 0.05;
  double upper_body_prob = 0.10;
  double clutter_prob = 0.5;
  double noise_std = 0.035;
  double lr_color_delta = 0.030;   // red/blue tilt between left and right limbs
  double color_jitter_std = 0.02;  // per-sample shift shared by the whole figure
  double arm_angle_min = 15.0;     // degrees from vertical, outward
  double arm_angle_max = 60.0;
  double leg_angle_min = 6.0;
  double leg_angle_max = 20.0;
  double min_scale = 0.75;
  double max_scale = 0.95;

  void validate() const {
    if (image_size < 32) throw std::invalid_argument("figure config: image_size must be >= 32");
    for (double p : {occlusion_prob, back_view_prob, head_missed_prob, upper_body_prob,
                     clutter_prob})
      if (p < 0.0 || p > 1.0)
        throw std::invalid_argument("figure config: probabilities must lie in [0, 1]");
    if (head_missed_prob + upper_body_prob > 1.0)
      throw std::invalid_argument("figure config: head_missed_prob + upper_body_prob > 1");
    if (noise_std < 0.0 || color_jitter_std < 0.0 || lr_color_delta < 0.0)
      throw std::invalid_argument("figure config: noise amplitudes must be >= 0");
    if (arm_angle_min > arm_angle_max || leg_angle_min > leg_angle_max)
      throw std::invalid_argument("figure config: angle interval inverted");
    if (arm_angle_min < 0.0 || leg_angle_min < 0.0 || arm_angle_max > 85.0 ||
        leg_angle_max > 45.0)
      throw std::invalid_argument("figure config: angles out of range");
    if (min_scale <= 0.0 || min_scale > max_scale || max_scale > 1.6)
      throw std::invalid_argument("figure config: scale interval invalid");
  }
};

inline void save_figure_config(const FigureConfig& cfg, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write figure config: " + path);
  out << "image_size " << cfg.image_size << "\n";
  const std::pair<const char*, double> fields[] = {
      {"occlusion_prob", cfg.occlusion_prob},   {"back_view_prob", cfg.back_view_prob},
      {"head_missed_prob", cfg.head_missed_prob}, {"upper_body_prob", cfg.upper_body_prob},
      {"clutter_prob", cfg.clutter_prob},       {"noise_std", cfg.noise_std},
      {"lr_color_delta", cfg.lr_color_delta},   {"color_jitter_std", cfg.color_jitter_std},
      {"arm_angle_min", cfg.arm_angle_min},     {"arm_angle_max", cfg.arm_angle_max},
      {"leg_angle_min", cfg.leg_angle_min},     {"leg_angle_max", cfg.leg_angle_max},
      {"min_scale", cfg.min_scale},             {"max_scale", cfg.max_scale},
  };
  for (const auto& [k, v] : fields) out << k << " " << v << "\n";
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline FigureConfig load_figure_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open figure config: " + path);
  FigureConfig cfg;
  std::map<std::string, double*> fields = {
      {"occlusion_prob", &cfg.occlusion_prob},   {"back_view_prob", &cfg.back_view_prob},
      {"head_missed_prob", &cfg.head_missed_prob}, {"upper_body_prob", &cfg.upper_body_prob},
      {"clutter_prob", &cfg.clutter_prob},       {"noise_std", &cfg.noise_std},
      {"lr_color_delta", &cfg.lr_color_delta},   {"color_jitter_std", &cfg.color_jitter_std},
      {"arm_angle_min", &cfg.arm_angle_min},     {"arm_angle_max", &cfg.arm_angle_max},
      {"leg_angle_min", &cfg.leg_angle_min},     {"leg_angle_max", &cfg.leg_angle_max},
      {"min_scale", &cfg.min_scale},             {"max_scale", &cfg.max_scale},
  };
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ss(line);
    std::string key;
    if (!(ss >> key)) continue;
    const std::string where = path + ":" + std::to_string(lineno);
    double value;
    if (!(ss >> value)) throw std::runtime_error(where + ": expected `key value`");
    if (key == "image_size") {
      cfg.image_size = static_cast<int>(value);
    } else {
      auto it = fields.find(key);
      if (it == fields.end()) throw std::runtime_error(where + ": unknown key \"" + key + "\"");
      *it->second = value;
    }
  }
  cfg.validate();
  return cfg;
}

namespace detail {

struct Color {
  double r = 0, g = 0, b = 0;

  Color shifted(double dr, double dg, double db) const { return {r + dr, g + dg, b + db}; }
};

struct Scene {
  int size = 0;
  std::vector<Color> pixels;
  LabelMap labels;

  explicit Scene(int s) : size(s), pixels(static_cast<std::size_t>(s) * s), labels(s, s) {}

  void paint(int row, int col, const Color& c, std::uint8_t label) {
    if (row < 0 || row >= size || col < 0 || col >= size) return;
    pixels[static_cast<std::size_t>(row) * size + col] = c;
    labels.at(row, col) = label;
  }
};

// Filled capsule: all pixels within `radius` of the segment p0-p1.
inline void paint_capsule(Scene& s, double r0, double c0, double r1, double c1, double radius,
                          const Color& color, std::uint8_t label) {
  const int rmin = static_cast<int>(std::floor(std::min(r0, r1) - radius));
  const int rmax = static_cast<int>(std::ceil(std::max(r0, r1) + radius));
  const int cmin = static_cast<int>(std::floor(std::min(c0, c1) - radius));
  const int cmax = static_cast<int>(std::ceil(std::max(c0, c1) + radius));
  const double dr = r1 - r0, dc = c1 - c0;
  const double len2 = dr * dr + dc * dc;
  for (int r = rmin; r <= rmax; ++r)
    for (int c = cmin; c <= cmax; ++c) {
      double t = 0.0;
      if (len2 > 0.0) t = std::clamp(((r - r0) * dr + (c - c0) * dc) / len2, 0.0, 1.0);
      const double pr = r0 + t * dr, pc = c0 + t * dc;
      const double d2 = (r - pr) * (r - pr) + (c - pc) * (c - pc);
      if (d2 <= radius * radius) s.paint(r, c, color, label);
    }
}

inline void paint_disc(Scene& s, double r0, double c0, double radius, const Color& color,
                       std::uint8_t label) {
  paint_capsule(s, r0, c0, r0, c0, radius, color, label);
}

struct Palette {
  Color background, occluder, face, hair, torso, pants, arm, leg, shoe;
  double lr_delta = 0.0;

  // Left limbs tilt toward red, right limbs toward blue; the tilt survives
  // the shared per-sample jitter, so it is the one reliable side cue.
  Color side(const Color& base, bool left) const {
    const double d = left ? lr_delta : -lr_delta;
    return base.shifted(d, 0.0, -d);
  }
};

inline Palette make_palette(Rng& rng, const FigureConfig& cfg) {
  Palette p;
  p.background = {0.78, 0.78, 0.80};
  p.occluder = {0.55, 0.63, 0.55};
  p.face = {0.94, 0.78, 0.66};
  p.hair = {0.30, 0.22, 0.16};
  p.torso = {0.25, 0.36, 0.65};
  p.pants = {0.30, 0.30, 0.40};
  p.arm = {0.88, 0.72, 0.60};
  p.leg = {0.55, 0.46, 0.34};
  p.shoe = {0.16, 0.15, 0.18};
  p.lr_delta = cfg.lr_color_delta;
  const double shift_r = rng.normal(0.0, cfg.color_jitter_std);
  const double shift_g = rng.normal(0.0, cfg.color_jitter_std);
  const double shift_b = rng.normal(0.0, cfg.color_jitter_std);
  for (Color* c : {&p.background, &p.occluder, &p.face, &p.hair, &p.torso, &p.pants, &p.arm,
                   &p.leg, &p.shoe})
    *c = c->shifted(shift_r, shift_g, shift_b);
  return p;
}

}  // namespace detail

struct GeneratedSample {
  ImageU8 image;
  LabelMap labels;
  SampleMeta meta;
};

inline GeneratedSample generate_figure(std::uint64_t seed, const FigureConfig& cfg) {
  cfg.validate();
  Rng rng(seed);
  const int size = cfg.image_size;
  detail::Scene scene(size);
  const detail::Palette pal = detail::make_palette(rng, cfg);

  for (auto& px : scene.pixels) px = pal.background;

  // Background clutter, drawn first so the figure overwrites it. A fraction
  // of blobs reuse part colors: color alone cannot separate part from
  // background, which is what makes left/right mix-ups reachable.
  if (rng.bernoulli(cfg.clutter_prob)) {
    const int blobs = 1 + static_cast<int>(rng.uniform_int(3));
    for (int i = 0; i < blobs; ++i) {
      const double br = rng.uniform(0.0, size - 1.0);
      const double bc = rng.uniform(0.0, size - 1.0);
      const double radius = rng.uniform(0.04, 0.10) * size;
      detail::Color color;
      if (rng.bernoulli(0.3)) {
        const detail::Color parts[] = {pal.torso, pal.pants, pal.arm, pal.leg, pal.shoe};
        color = parts[rng.uniform_int(5)];
      } else {
        color = {rng.uniform(0.3, 0.9), rng.uniform(0.3, 0.9), rng.uniform(0.3, 0.9)};
      }
      detail::paint_disc(scene, br, bc, radius, color, 0);
    }
  }

  SampleMeta meta;
  meta.view = rng.bernoulli(cfg.back_view_prob) ? View::back : View::front;
  const double extent_draw = rng.uniform();
  if (extent_draw < cfg.head_missed_prob) meta.body_extent = BodyExtent::head_missed;
  else if (extent_draw < cfg.head_missed_prob + cfg.upper_body_prob)
    meta.body_extent = BodyExtent::upper;

  // Person layout in fractions of the figure height hp.
  const bool upper_only = meta.body_extent == BodyExtent::upper;
  const bool headless = meta.body_extent == BodyExtent::head_missed;
  const double scale =
      rng.uniform(cfg.min_scale, cfg.max_scale) * (upper_only ? 1.45 : 1.0);
  const double hp = 0.9 * size * scale;
  const double head_r = 0.09 * hp;
  const double torso_hw = 0.10 * hp;
  const double arm_r = 0.035 * hp;
  const double leg_r = 0.045 * hp;
  const double shoe_r = 0.05 * hp;
  const double arm_len = 0.30 * hp;
  const double leg_len = 0.32 * hp;

  const double deg = 3.14159265358979323846 / 180.0;
  const double arm_angle = rng.uniform(cfg.arm_angle_min, cfg.arm_angle_max) * deg;
  const double leg_angle = rng.uniform(cfg.leg_angle_min, cfg.leg_angle_max) * deg;

  const double reach = std::max({torso_hw, arm_len * std::sin(arm_angle) + arm_r,
                                 0.06 * hp + leg_len * std::sin(leg_angle) + shoe_r});
  const double lo = std::min(reach + 1.0, size / 2.0 - 1.0);
  const double cx = rng.uniform(lo, size - 1.0 - lo);
  double top = headless ? rng.uniform(0.02, 0.10) * size - 2.0 * head_r
                        : rng.uniform(0.02, 1.0 - 0.9 * scale) * size;
  if (upper_only) top = rng.uniform(0.05, 0.20) * size;

  const double neck_y = top + 2.0 * head_r;
  const double shoulder_y = neck_y + 0.03 * hp;
  const double hip_y = neck_y + 0.34 * hp;
  const double ankle_y = hip_y + leg_len * std::cos(leg_angle);

  // Viewer-side limb colors/ids: front view puts the person's left limbs at
  // smaller columns; a back view swaps the apparent sides.
  const bool front = meta.view == View::front;
  const std::uint8_t vl_arm = front ? kLeftArm : kRightArm;
  const std::uint8_t vr_arm = front ? kRightArm : kLeftArm;
  const std::uint8_t vl_leg = front ? kLeftLeg : kRightLeg;
  const std::uint8_t vr_leg = front ? kRightLeg : kLeftLeg;
  const std::uint8_t vl_shoe = front ? kLeftShoe : kRightShoe;
  const std::uint8_t vr_shoe = front ? kRightShoe : kLeftShoe;
  const bool vl_is_left = front;

  if (!upper_only) {
    const double hip_off = 0.06 * hp;
    const double spread = leg_len * std::sin(leg_angle);
    detail::paint_capsule(scene, hip_y, cx - hip_off, ankle_y, cx - hip_off - spread, leg_r,
                          pal.side(pal.leg, vl_is_left), vl_leg);
    detail::paint_capsule(scene, hip_y, cx + hip_off, ankle_y, cx + hip_off + spread, leg_r,
                          pal.side(pal.leg, !vl_is_left), vr_leg);
    detail::paint_disc(scene, ankle_y + 0.02 * hp, cx - hip_off - spread, shoe_r,
                       pal.side(pal.shoe, vl_is_left), vl_shoe);
    detail::paint_disc(scene, ankle_y + 0.02 * hp, cx + hip_off + spread, shoe_r,
                       pal.side(pal.shoe, !vl_is_left), vr_shoe);
    detail::paint_capsule(scene, hip_y - 0.02 * hp, cx, hip_y + 0.10 * hp, cx,
                          torso_hw, pal.pants, kPants);
  }
  detail::paint_capsule(scene, neck_y + 0.04 * hp, cx, hip_y - 0.04 * hp, cx, torso_hw,
                        pal.torso, kUpperClothes);
  const double arm_dx = arm_len * std::sin(arm_angle);
  const double arm_dy = arm_len * std::cos(arm_angle);
  detail::paint_capsule(scene, shoulder_y, cx - torso_hw, shoulder_y + arm_dy,
                        cx - torso_hw - arm_dx, arm_r, pal.side(pal.arm, vl_is_left), vl_arm);
  detail::paint_capsule(scene, shoulder_y, cx + torso_hw, shoulder_y + arm_dy,
                        cx + torso_hw + arm_dx, arm_r, pal.side(pal.arm, !vl_is_left), vr_arm);
  if (!headless) {
    // The head doubles as the view cue: skin on front views, hair on back.
    if (front) detail::paint_disc(scene, top + head_r, cx, head_r, pal.face, kFace);
    else detail::paint_disc(scene, top + head_r, cx, head_r, pal.hair, kHair);
  }

  meta.occlusion = rng.bernoulli(cfg.occlusion_prob);
  if (meta.occlusion) {
    const double ow = rng.uniform(0.12, 0.28) * size;
    const double oh = rng.uniform(0.12, 0.28) * size;
    const double oc = rng.uniform(cx - torso_hw - arm_dx, cx + torso_hw + arm_dx);
    const double orr = rng.uniform(std::max(0.0, top), std::min<double>(size - 1, ankle_y));
    for (int r = static_cast<int>(orr - oh / 2); r <= static_cast<int>(orr + oh / 2); ++r)
      for (int c = static_cast<int>(oc - ow / 2); c <= static_cast<int>(oc + ow / 2); ++c)
        scene.paint(r, c, pal.occluder, 0);
  }

  // Occlusion can remove whole regions; recompute the extent tag so it stays
  // consistent with what the labels show (head beats upper beats full).
  std::array<bool, 256> seen{};
  for (std::uint8_t v : scene.labels.labels) seen[v] = true;
  const bool has_head = seen[kHat] || seen[kHair] || seen[kSunglasses] || seen[kFace];
  const bool has_lower = seen[kPants] || seen[kLeftLeg] || seen[kRightLeg] ||
                         seen[kLeftShoe] || seen[kRightShoe];
  if (!has_head) meta.body_extent = BodyExtent::head_missed;
  else if (!has_lower) meta.body_extent = BodyExtent::upper;
  else meta.body_extent = BodyExtent::full;

  GeneratedSample out;
  out.labels = std::move(scene.labels);
  out.meta = meta;
  out.image = ImageU8(size, size, 3);
  for (std::size_t i = 0; i < scene.pixels.size(); ++i) {
    const detail::Color& c = scene.pixels[i];
    const double ch[3] = {c.r, c.g, c.b};
    for (int k = 0; k < 3; ++k) {
      const double v = std::clamp(ch[k] + rng.normal(0.0, cfg.noise_std), 0.0, 1.0);
      out.image.values[i * 3 + k] = static_cast<std::uint8_t>(std::lround(v * 255.0));
    }
  }
  return out;
}

// Writes images/NNNNN.png + labels/NNNNN.png and a manifest with per-sample
// flags. Sample i draws from mix_seed(seed, i), so any subrange can be
// regenerated independently.
inline std::string generate_dataset(std::uint64_t seed, int n, const FigureConfig& cfg,
                                    const std::string& out_dir, Split split = Split::train) {
  cfg.validate();
  if (n < 0) throw std::invalid_argument("generate_dataset: n must be >= 0");
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(out_dir) / "images");
  fs::create_directories(fs::path(out_dir) / "labels");

  DatasetIndex index;
  index.split = split;
  index.base_dir = out_dir;
  for (int i = 0; i < n; ++i) {
    const GeneratedSample sample = generate_figure(mix_seed(seed, static_cast<std::uint64_t>(i)),
                                                   cfg);
    char name[32];
    std::snprintf(name, sizeof(name), "sample_%05d.png", i);
    DatasetRecord rec;
    rec.image_path = (fs::path("images") / name).string();
    rec.label_path = (fs::path("labels") / name).string();
    rec.meta = sample.meta;
    write_image(sample.image, index.resolve(rec.image_path));
    write_label_map(sample.labels, index.resolve(rec.label_path));
    index.records.push_back(std::move(rec));
  }
  const std::string manifest_path = (fs::path(out_dir) / "manifest.txt").string();
  write_manifest(index, manifest_path);
  return manifest_path;
}

}  // namespace hparse
