#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "hparse/joints.hpp"
#include "hparse/raster.hpp"
#include "hparse/taxonomy.hpp"
#include "hparse/tensor.hpp"

namespace hparse {

// Gradient treatment of the structure-sensitive loss:
//   weight - the joint term acts as a detached per-sample scalar weight on
//            the segmentation gradient (hard argmax joints, no gradient
//            through the joint branch);
//   soft   - fully differentiable path through soft centroids and heatmap
//            rendering.
enum class SslMode { weight, soft };

inline std::string to_string(SslMode m) { return m == SslMode::weight ? "weight" : "soft"; }

inline SslMode parse_ssl_mode(const std::string& s) {
  if (s == "weight") return SslMode::weight;
  if (s == "soft") return SslMode::soft;
  throw std::invalid_argument("unknown ssl mode \"" + s + "\" (expected weight or soft)");
}

struct LossConfig {
  SslMode mode = SslMode::weight;
  double sigma = 0.0;  // <= 0 selects default_sigma(H, W)
  double presence_threshold = 1e-4;
  double floor = 0.0;  // optional lower bound on the joint weight

  double effective_sigma(int h, int w) const {
    return sigma > 0.0 ? sigma : default_sigma(h, w);
  }
};

struct LossResult {
  double l_parsing = 0.0;
  double l_joint = 0.0;
  double l_structure = 0.0;
  Tensor grad_logits;
};

// Mean over non-ignored pixels of -log softmax(logits)[gt]. The gradient is
// (softmax - one_hot) / count at those pixels, zero elsewhere.
inline std::pair<double, Tensor> parsing_loss(const Tensor& logits, const LabelMap& gt,
                                              std::uint8_t ignore_id = kIgnoreLabel) {
  if (logits.height != gt.height || logits.width != gt.width)
    throw std::invalid_argument("parsing_loss: logits shape " + std::to_string(logits.height) +
                                "x" + std::to_string(logits.width) + " does not match labels " +
                                std::to_string(gt.height) + "x" + std::to_string(gt.width));
  const int c = logits.channels;
  std::uint64_t count = 0;
  for (auto v : gt.labels)
    if (v != ignore_id) {
      if (v >= c)
        throw std::invalid_argument("parsing_loss: label " + std::to_string(v) +
                                    " out of range for " + std::to_string(c) + " channels");
      ++count;
    }
  if (count == 0) throw std::runtime_error("parsing_loss: all pixels ignored");

  const ProbMap p = softmax(logits);
  Tensor grad(logits.height, logits.width, c);
  const double inv_count = 1.0 / static_cast<double>(count);
  double loss = 0.0;
  for (int r = 0; r < gt.height; ++r)
    for (int col = 0; col < gt.width; ++col) {
      const std::uint8_t g = gt.at(r, col);
      if (g == ignore_id) continue;
      const double pg = p.at(r, col, g);
      loss -= std::log(std::max(pg, 1e-300));
      for (int k = 0; k < c; ++k)
        grad.at(r, col, k) = (p.at(r, col, k) - (k == g ? 1.0 : 0.0)) * inv_count;
    }
  return {loss * inv_count, std::move(grad)};
}

namespace detail {

// Gradient of the joint loss w.r.t. the logits along the soft path:
// heatmap mismatch -> centroid -> group probability -> softmax.
// The presence decision is treated as constant.
inline Tensor soft_joint_loss_grad(const Tensor& logits, const ProbMap& p,
                                   const JointSet& pred_joints,
                                   const JointHeatmapSet& pred_maps,
                                   const JointHeatmapSet& gt_maps, const PartTaxonomy& t,
                                   double sigma) {
  const int h = logits.height, w = logits.width, c = logits.channels;
  const std::size_t n = pred_maps.size();
  const double inv_n = 1.0 / static_cast<double>(n);
  const double inv_s2 = 1.0 / (sigma * sigma);

  // dL_joint / d(center) per present joint.
  std::vector<double> d_row(n, 0.0), d_col(n, 0.0);
  for (std::size_t g = 0; g < n; ++g) {
    if (!pred_joints[g].present) continue;
    const Heatmap& hm = pred_maps.maps[g];
    const Heatmap& gm = gt_maps.maps[g];
    double dr = 0.0, dc = 0.0;
    for (int r = 0; r < h; ++r)
      for (int col = 0; col < w; ++col) {
        const double diff = hm.at(r, col) - gm.at(r, col);
        const double common = inv_n * diff * hm.at(r, col) * inv_s2;
        dr += common * (r - pred_joints[g].row);
        dc += common * (col - pred_joints[g].col);
      }
    d_row[g] = dr;
    d_col[g] = dc;
  }

  // Recompute group masses (needed for centroid derivatives).
  std::vector<double> mass(n, 0.0);
  for (std::size_t g = 0; g < n; ++g) {
    if (!pred_joints[g].present) continue;
    for (int r = 0; r < h; ++r)
      for (int col = 0; col < w; ++col)
        for (int id : t.joint_groups[g].members) mass[g] += p.at(r, col, id);
  }

  // dL_joint / d p_k(x), then through per-pixel softmax.
  Tensor grad(h, w, c);
  std::vector<double> dp(static_cast<std::size_t>(c), 0.0);
  for (int r = 0; r < h; ++r)
    for (int col = 0; col < w; ++col) {
      std::fill(dp.begin(), dp.end(), 0.0);
      for (std::size_t g = 0; g < n; ++g) {
        if (!pred_joints[g].present || mass[g] <= 0.0) continue;
        const double contrib = (d_row[g] * (r - pred_joints[g].row) +
                                d_col[g] * (col - pred_joints[g].col)) /
                               mass[g];
        for (int id : t.joint_groups[g].members) dp[static_cast<std::size_t>(id)] += contrib;
      }
      double dot = 0.0;
      for (int k = 0; k < c; ++k) dot += dp[static_cast<std::size_t>(k)] * p.at(r, col, k);
      for (int k = 0; k < c; ++k)
        grad.at(r, col, k) = p.at(r, col, k) * (dp[static_cast<std::size_t>(k)] - dot);
    }
  return grad;
}

}  // namespace detail

// Structure-sensitive loss: l_structure = max(l_joint, floor) * l_parsing.
// Ground-truth joints always come from the hard label centroids; predicted
// joints come from argmax labels (weight mode) or soft centroids (soft mode).
inline LossResult structure_loss(const Tensor& logits, const LabelMap& gt,
                                 const PartTaxonomy& t, const LossConfig& cfg) {
  if (logits.channels != t.num_classes())
    throw std::invalid_argument("structure_loss: logit channels " +
                                std::to_string(logits.channels) +
                                " do not match taxonomy class count " +
                                std::to_string(t.num_classes()));
  const int h = logits.height, w = logits.width;
  const double sigma = cfg.effective_sigma(h, w);

  LossResult result;
  auto [lp, grad_parsing] = parsing_loss(logits, gt);
  result.l_parsing = lp;

  const JointSet gt_joints = derive_joints(gt, t);
  const JointHeatmapSet gt_maps = make_heatmap_set(gt_joints, h, w, sigma);

  if (cfg.mode == SslMode::weight) {
    const LabelMap pred = argmax_labels(logits);
    const JointSet pred_joints = derive_joints(pred, t);
    const JointHeatmapSet pred_maps = make_heatmap_set(pred_joints, h, w, sigma);
    result.l_joint = joint_loss(pred_maps, gt_maps);
    const double weight = std::max(result.l_joint, cfg.floor);
    result.l_structure = weight * result.l_parsing;
    result.grad_logits = std::move(grad_parsing);
    for (auto& v : result.grad_logits.v) v *= weight;
  } else {
    const ProbMap p = softmax(logits);
    const JointSet pred_joints = soft_joints(p, t, cfg.presence_threshold);
    const JointHeatmapSet pred_maps = make_heatmap_set(pred_joints, h, w, sigma);
    result.l_joint = joint_loss(pred_maps, gt_maps);
    const double weight = std::max(result.l_joint, cfg.floor);
    result.l_structure = weight * result.l_parsing;
    // Product rule: w * dLp + Lp * dw, the joint branch active when it
    // dominates the floor.
    result.grad_logits = std::move(grad_parsing);
    for (auto& v : result.grad_logits.v) v *= weight;
    if (result.l_joint > cfg.floor) {
      const Tensor joint_grad = detail::soft_joint_loss_grad(
          logits, p, pred_joints, pred_maps, gt_maps, t, sigma);
      for (std::size_t i = 0; i < result.grad_logits.v.size(); ++i)
        result.grad_logits.v[i] += result.l_parsing * joint_grad.v[i];
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Finite-difference gradient verification.

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
  bool pass = false;
};

// f maps a parameter vector to (value, gradient). Central differences per
// component; relative error uses max(1, |a| + |n|) as the scale so tiny
// components are judged absolutely.
inline GradCheckReport grad_check(
    const std::function<std::pair<double, std::vector<double>>(const std::vector<double>&)>& f,
    const std::vector<double>& point, double step, double tolerance) {
  if (step <= 0.0) throw std::invalid_argument("grad_check: step must be positive");
  const auto [value, analytic] = f(point);
  if (!std::isfinite(value)) throw std::runtime_error("grad_check: non-finite value at point");
  if (analytic.size() != point.size())
    throw std::invalid_argument("grad_check: gradient size mismatch");

  GradCheckReport rep;
  std::vector<double> x = point;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + step;
    const double fp = f(x).first;
    x[i] = saved - step;
    const double fm = f(x).first;
    x[i] = saved;
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw std::runtime_error("grad_check: non-finite value during probing");
    const double numeric = (fp - fm) / (2.0 * step);
    const double a = analytic[i];
    const double rel = std::abs(a - numeric) / std::max(1.0, std::abs(a) + std::abs(numeric));
    if (rel > rep.max_rel_error) {
      rep.max_rel_error = rel;
      rep.worst_index = i;
      rep.analytic_at_worst = a;
      rep.numeric_at_worst = numeric;
    }
  }
  rep.pass = rep.max_rel_error < tolerance;
  return rep;
}

}  // namespace hparse
