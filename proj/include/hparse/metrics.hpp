#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <map>
#include <string>
#include <thread>
#include <vector>

#include "hparse/dataset.hpp"
#include "hparse/png_io.hpp"
#include "hparse/raster.hpp"

namespace hparse {

// C x C pixel counts; entry (g, p) = pixels with ground truth g predicted p.
struct ConfusionMatrix {
  int num_classes = 0;
  std::vector<std::uint64_t> counts;
  std::uint64_t total_ignored = 0;

  ConfusionMatrix() = default;
  explicit ConfusionMatrix(int c)
      : num_classes(c), counts(static_cast<std::size_t>(c) * c, 0) {}

  std::uint64_t at(int g, int p) const {
    return counts[static_cast<std::size_t>(g) * num_classes + p];
  }
  std::uint64_t& at(int g, int p) {
    return counts[static_cast<std::size_t>(g) * num_classes + p];
  }

  std::uint64_t total() const {
    std::uint64_t s = 0;
    for (auto v : counts) s += v;
    return s;
  }

  bool operator==(const ConfusionMatrix&) const = default;
};

inline void accumulate_confusion_into(ConfusionMatrix& cm, const LabelMap& gt,
                                      const LabelMap& pred) {
  if (!gt.same_shape(pred))
    throw std::invalid_argument("accumulate_confusion: shape mismatch " +
                                std::to_string(gt.height) + "x" + std::to_string(gt.width) +
                                " vs " + std::to_string(pred.height) + "x" +
                                std::to_string(pred.width));
  const int c = cm.num_classes;
  for (std::size_t i = 0; i < gt.labels.size(); ++i) {
    const std::uint8_t g = gt.labels[i];
    const std::uint8_t p = pred.labels[i];
    if (g == kIgnoreLabel) {
      ++cm.total_ignored;
      continue;
    }
    if (g >= c)
      throw std::invalid_argument("accumulate_confusion: ground-truth value " +
                                  std::to_string(g) + " out of range");
    if (p >= c)
      throw std::invalid_argument("accumulate_confusion: predicted value " +
                                  std::to_string(p) + " out of range");
    ++cm.at(g, p);
  }
}

inline ConfusionMatrix accumulate_confusion(const LabelMap& gt, const LabelMap& pred,
                                            int num_classes) {
  ConfusionMatrix cm(num_classes);
  accumulate_confusion_into(cm, gt, pred);
  return cm;
}

// Entrywise sum; associative and commutative.
inline ConfusionMatrix merge_confusion(const ConfusionMatrix& a, const ConfusionMatrix& b) {
  if (a.num_classes != b.num_classes)
    throw std::invalid_argument("merge_confusion: dimension mismatch " +
                                std::to_string(a.num_classes) + " vs " +
                                std::to_string(b.num_classes));
  ConfusionMatrix out = a;
  for (std::size_t i = 0; i < out.counts.size(); ++i) out.counts[i] += b.counts[i];
  out.total_ignored += b.total_ignored;
  return out;
}

struct MetricsReport {
  double overall_accuracy = 0.0;
  double mean_accuracy = 0.0;
  double mean_iou = 0.0;
  std::vector<std::pair<int, double>> per_class_iou;  // ascending class id
  std::vector<int> excluded_classes;                  // zero-union classes
  std::uint64_t evaluated_pixels = 0;
  std::uint64_t ignored_pixels = 0;
};

// overall = trace/total; per-class recall over classes present in gt;
// IoU over classes with nonzero union, absent classes excluded and listed.
inline MetricsReport compute_metrics(const ConfusionMatrix& cm) {
  const int c = cm.num_classes;
  const std::uint64_t total = cm.total();
  if (total == 0) throw std::runtime_error("compute_metrics: no evaluated pixels");

  MetricsReport rep;
  rep.evaluated_pixels = total;
  rep.ignored_pixels = cm.total_ignored;

  std::uint64_t trace = 0;
  double recall_sum = 0.0;
  int recall_n = 0;
  double iou_sum = 0.0;
  for (int g = 0; g < c; ++g) {
    std::uint64_t row = 0, col = 0;
    for (int p = 0; p < c; ++p) {
      row += cm.at(g, p);
      col += cm.at(p, g);
    }
    const std::uint64_t diag = cm.at(g, g);
    trace += diag;
    if (row > 0) {
      recall_sum += static_cast<double>(diag) / static_cast<double>(row);
      ++recall_n;
    }
    const std::uint64_t uni = row + col - diag;
    if (uni > 0) {
      const double iou = static_cast<double>(diag) / static_cast<double>(uni);
      rep.per_class_iou.emplace_back(g, iou);
      iou_sum += iou;
    } else {
      rep.excluded_classes.push_back(g);
    }
  }
  rep.overall_accuracy = static_cast<double>(trace) / static_cast<double>(total);
  rep.mean_accuracy = recall_n > 0 ? recall_sum / recall_n : 0.0;
  rep.mean_iou =
      rep.per_class_iou.empty() ? 0.0 : iou_sum / static_cast<double>(rep.per_class_iou.size());
  return rep;
}

// Canonical report JSON: fixed key order, %.6f numbers, no whitespace.
// Server-side and local evaluation compare these bytes directly.
inline std::string serialize_report(const MetricsReport& r) {
  char buf[64];
  auto num = [&buf](double v) {
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return std::string(buf);
  };
  std::string out = "{\"overall_accuracy\":" + num(r.overall_accuracy) +
                    ",\"mean_accuracy\":" + num(r.mean_accuracy) +
                    ",\"mean_iou\":" + num(r.mean_iou) + ",\"per_class_iou\":{";
  bool first = true;
  for (const auto& [id, iou] : r.per_class_iou) {
    if (!first) out += ",";
    first = false;
    out += "\"" + std::to_string(id) + "\":" + num(iou);
  }
  out += "},\"excluded_classes\":[";
  first = true;
  for (int id : r.excluded_classes) {
    if (!first) out += ",";
    first = false;
    out += std::to_string(id);
  }
  out += "],\"pixel_counts\":{\"evaluated\":" + std::to_string(r.evaluated_pixels) +
         ",\"ignored\":" + std::to_string(r.ignored_pixels) + "}}";
  return out;
}

// Object-size bucket by foreground pixel count. Boundaries follow the
// small < 153^2 <= medium < 321^2 <= large convention.
enum class AreaBucket { small, medium, large };

inline std::string to_string(AreaBucket b) {
  switch (b) {
    case AreaBucket::small: return "small";
    case AreaBucket::medium: return "medium";
    case AreaBucket::large: return "large";
  }
  return "?";
}

inline AreaBucket area_bucket(const LabelMap& gt, int background_id,
                              std::uint64_t t1 = 153ull * 153ull,
                              std::uint64_t t2 = 321ull * 321ull) {
  std::uint64_t area = 0;
  for (auto v : gt.labels)
    if (v != kIgnoreLabel && v != background_id) ++area;
  if (area < t1) return AreaBucket::small;
  if (area < t2) return AreaBucket::medium;
  return AreaBucket::large;
}

// ---------------------------------------------------------------------------
// Sliced evaluation over a dataset index and a directory of predictions
// named <image_id>.png.

inline const std::vector<std::string>& slice_names() {
  static const std::vector<std::string> names = {
      "all", "occlusion", "full-body", "upper-body", "head-missed", "back-view"};
  return names;
}

struct SlicedEvaluation {
  // Slices in slice_names() order; empty slices omitted and listed in notes.
  std::vector<std::pair<std::string, MetricsReport>> reports;
  std::vector<std::string> notes;
  std::vector<std::string> missing_predictions;
  std::vector<std::string> warnings;  // factor consistency warnings

  const MetricsReport* find(const std::string& slice) const {
    for (const auto& [name, rep] : reports)
      if (name == slice) return &rep;
    return nullptr;
  }
};

inline SlicedEvaluation sliced_evaluation(const DatasetIndex& index,
                                          const std::string& pred_dir, const PartTaxonomy& t,
                                          int jobs = 1) {
  const int c = t.num_classes();
  const auto& names = slice_names();

  struct PerImage {
    ConfusionMatrix cm;
    FactorFlags flags;
    bool missing = false;
    std::string error;
  };

  std::vector<const DatasetRecord*> labeled;
  for (const auto& rec : index.records)
    if (rec.has_label()) labeled.push_back(&rec);

  std::vector<PerImage> per_image(labeled.size());
  auto worker = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const DatasetRecord& rec = *labeled[i];
      PerImage& out = per_image[i];
      try {
        const LabelMap gt = read_label_map(index.resolve(rec.label_path), c);
        out.flags = tag_challenge_factors(gt, rec.meta, t);
        const std::string pred_path =
            (std::filesystem::path(pred_dir) / (image_id(rec.image_path) + ".png")).string();
        if (!std::filesystem::exists(pred_path)) {
          out.missing = true;
          out.error = pred_path;
          continue;
        }
        const LabelMap pred = read_label_map(pred_path, c);
        out.cm = ConfusionMatrix(c);
        accumulate_confusion_into(out.cm, gt, pred);
      } catch (const std::exception& e) {
        out.missing = true;
        out.error = e.what();
      }
    }
  };

  jobs = std::max(1, jobs);
  if (jobs == 1 || labeled.size() < 2) {
    worker(0, labeled.size());
  } else {
    std::vector<std::thread> threads;
    const std::size_t n = labeled.size();
    const std::size_t chunk = (n + jobs - 1) / jobs;
    for (int j = 0; j < jobs; ++j) {
      const std::size_t b = std::min(n, static_cast<std::size_t>(j) * chunk);
      const std::size_t e = std::min(n, b + chunk);
      if (b < e) threads.emplace_back(worker, b, e);
    }
    for (auto& th : threads) th.join();
  }

  // Deterministic reduce in record order.
  SlicedEvaluation result;
  std::vector<ConfusionMatrix> slice_cm(names.size(), ConfusionMatrix(c));
  std::vector<bool> slice_nonempty(names.size(), false);
  for (std::size_t i = 0; i < per_image.size(); ++i) {
    const PerImage& pi = per_image[i];
    if (pi.missing) {
      result.missing_predictions.push_back(labeled[i]->image_path + ": " + pi.error);
      continue;
    }
    for (const auto& w : pi.flags.warnings)
      result.warnings.push_back(labeled[i]->image_path + ": " + w);
    const bool in_slice[6] = {true,          pi.flags.occlusion, pi.flags.full_body,
                              pi.flags.upper_body, pi.flags.head_missed, pi.flags.back_view};
    for (std::size_t s = 0; s < names.size(); ++s) {
      if (!in_slice[s]) continue;
      slice_cm[s] = merge_confusion(slice_cm[s], pi.cm);
      slice_nonempty[s] = true;
    }
  }
  for (std::size_t s = 0; s < names.size(); ++s) {
    if (slice_nonempty[s] && slice_cm[s].total() > 0)
      result.reports.emplace_back(names[s], compute_metrics(slice_cm[s]));
    else
      result.notes.push_back("slice " + names[s] + " is empty and was omitted");
  }
  return result;
}

// Combined eval output: one JSON object keyed by slice name, each value the
// canonical MetricsReport object, spliced byte-for-byte.
inline std::string serialize_sliced(const SlicedEvaluation& ev) {
  std::string out = "{";
  bool first = true;
  for (const auto& [name, rep] : ev.reports) {
    if (!first) out += ",";
    first = false;
    out += "\"" + name + "\":" + serialize_report(rep);
  }
  out += "}";
  return out;
}

}  // namespace hparse
