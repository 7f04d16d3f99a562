#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <string>
#include <vector>

#include "hparse/raster.hpp"
#include "hparse/taxonomy.hpp"

namespace hparse {

// A pseudo pose joint: the centroid of a merged part region. Coordinates are
// real-valued pixel positions (row, col), defined only when present.
struct Joint {
  std::string name;
  bool present = false;
  double row = 0.0;
  double col = 0.0;
};

using JointSet = std::vector<Joint>;

struct Heatmap {
  int height = 0;
  int width = 0;
  std::vector<double> values;

  Heatmap() = default;
  Heatmap(int h, int w) : height(h), width(w), values(static_cast<std::size_t>(h) * w, 0.0) {}

  double at(int r, int c) const { return values[static_cast<std::size_t>(r) * width + c]; }
  double& at(int r, int c) { return values[static_cast<std::size_t>(r) * width + c]; }
};

// One heatmap per taxonomy joint group, in group order. Absent joints keep
// all-zero maps and still count toward N.
struct JointHeatmapSet {
  JointSet joints;
  std::vector<Heatmap> maps;
  double sigma = 0.0;
  int height = 0;
  int width = 0;

  std::size_t size() const { return maps.size(); }
};

inline double default_sigma(int height, int width) {
  return std::max(height, width) / 16.0;
}

// Hard joints from a label map: per group, present iff the merged mask is
// non-empty; center = arithmetic mean of member pixel coordinates.
inline JointSet derive_joints(const LabelMap& m, const PartTaxonomy& t) {
  const int c = t.num_classes();
  // group membership lookup per label value
  std::array<std::uint32_t, 256> member_bits{};
  if (t.joint_groups.size() > 32)
    throw std::invalid_argument("derive_joints: more than 32 joint groups unsupported");
  for (std::size_t g = 0; g < t.joint_groups.size(); ++g)
    for (int id : t.joint_groups[g].members)
      member_bits[static_cast<std::size_t>(id)] |= (1u << g);

  const std::size_t n = t.joint_groups.size();
  std::vector<double> sum_r(n, 0.0), sum_c(n, 0.0);
  std::vector<std::uint64_t> count(n, 0);
  for (int r = 0; r < m.height; ++r)
    for (int col = 0; col < m.width; ++col) {
      const std::uint8_t v = m.at(r, col);
      if (v == kIgnoreLabel) continue;
      if (v >= c)
        throw std::invalid_argument("derive_joints: label " + std::to_string(v) +
                                    " out of range for " + std::to_string(c) + " classes");
      std::uint32_t bits = member_bits[v];
      while (bits) {
        const int g = std::countr_zero(bits);
        bits &= bits - 1;
        sum_r[g] += r;
        sum_c[g] += col;
        ++count[g];
      }
    }

  JointSet joints(n);
  for (std::size_t g = 0; g < n; ++g) {
    joints[g].name = t.joint_groups[g].name;
    if (count[g] > 0) {
      joints[g].present = true;
      joints[g].row = sum_r[g] / static_cast<double>(count[g]);
      joints[g].col = sum_c[g] / static_cast<double>(count[g]);
    }
  }
  return joints;
}

// Soft joints from a probability field: group mass is the summed member-class
// probability; the center is the probability-weighted mean coordinate.
// A joint is absent when its mass falls below presence_threshold * H * W.
// Differentiable w.r.t. the probabilities wherever present.
inline JointSet soft_joints(const ProbMap& p, const PartTaxonomy& t,
                            double presence_threshold = 1e-4) {
  if (p.channels != t.num_classes())
    throw std::invalid_argument("soft_joints: channel count " + std::to_string(p.channels) +
                                " does not match taxonomy class count " +
                                std::to_string(t.num_classes()));
  const std::size_t n = t.joint_groups.size();
  JointSet joints(n);
  const double min_mass = presence_threshold * p.height * p.width;
  for (std::size_t g = 0; g < n; ++g) {
    const auto& group = t.joint_groups[g];
    joints[g].name = group.name;
    double mass = 0.0, wr = 0.0, wc = 0.0;
    for (int r = 0; r < p.height; ++r)
      for (int col = 0; col < p.width; ++col) {
        double q = 0.0;
        for (int id : group.members) q += p.at(r, col, id);
        mass += q;
        wr += q * r;
        wc += q * col;
      }
    if (mass >= min_mass && mass > 0.0) {
      joints[g].present = true;
      joints[g].row = wr / mass;
      joints[g].col = wc / mass;
    }
  }
  return joints;
}

// Unnormalized Gaussian bump, peak 1 at the (possibly fractional) center.
// Absent joints render as all-zero maps.
inline Heatmap render_heatmap(const Joint& j, int height, int width, double sigma) {
  if (sigma <= 0.0)
    throw std::invalid_argument("render_heatmap: sigma must be positive, got " +
                                std::to_string(sigma));
  Heatmap h(height, width);
  if (!j.present) return h;
  const double inv = 1.0 / (2.0 * sigma * sigma);
  for (int r = 0; r < height; ++r) {
    const double dr = r - j.row;
    for (int c = 0; c < width; ++c) {
      const double dc = c - j.col;
      h.at(r, c) = std::exp(-(dr * dr + dc * dc) * inv);
    }
  }
  return h;
}

inline JointHeatmapSet make_heatmap_set(const JointSet& joints, int height, int width,
                                        double sigma) {
  JointHeatmapSet set;
  set.joints = joints;
  set.sigma = sigma;
  set.height = height;
  set.width = width;
  set.maps.reserve(joints.size());
  for (const auto& j : joints) set.maps.push_back(render_heatmap(j, height, width, sigma));
  return set;
}

// Euclidean joint structure loss: (1 / 2N) * sum_i ||c^p_i - c^gt_i||^2,
// the norm summing squared per-pixel heatmap differences. Absent joints
// contribute their zero maps; N is the full joint count.
inline double joint_loss(const JointHeatmapSet& pred, const JointHeatmapSet& gt) {
  if (pred.size() != gt.size())
    throw std::invalid_argument("joint_loss: joint count mismatch " +
                                std::to_string(pred.size()) + " vs " + std::to_string(gt.size()));
  if (pred.height != gt.height || pred.width != gt.width)
    throw std::invalid_argument("joint_loss: heatmap shape mismatch");
  if (pred.sigma != gt.sigma)
    throw std::invalid_argument("joint_loss: sigma mismatch");
  if (pred.size() == 0) throw std::invalid_argument("joint_loss: empty heatmap set");

  double total = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const auto& a = pred.maps[i].values;
    const auto& b = gt.maps[i].values;
    for (std::size_t k = 0; k < a.size(); ++k) {
      const double d = a[k] - b[k];
      total += d * d;
    }
  }
  return total / (2.0 * static_cast<double>(pred.size()));
}

}  // namespace hparse
