#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>
#include <thread>
#include <vector>

#include "hparse/dataset.hpp"
#include "hparse/loss.hpp"
#include "hparse/metrics.hpp"
#include "hparse/png_io.hpp"
#include "hparse/rng.hpp"
#include "hparse/tensor.hpp"

namespace hparse {

// A small stack of 3x3 same-padding convolutions with ReLU between layers,
// ending in per-pixel class logits. Deliberately tiny; it exists to carry
// the loss experiments, not to compete on accuracy.
struct ConvLayer {
  int in_c = 0;
  int out_c = 0;
  std::vector<double> w;  // [ky][kx][in][out]
  std::vector<double> b;  // [out]

  std::size_t weight_index(int ky, int kx, int i, int o) const {
    return ((static_cast<std::size_t>(ky) * 3 + kx) * in_c + i) * out_c + o;
  }
};

struct ToyModel {
  std::vector<ConvLayer> layers;
  std::uint64_t seed = 0;

  int in_channels() const { return layers.empty() ? 0 : layers.front().in_c; }
  int num_classes() const { return layers.empty() ? 0 : layers.back().out_c; }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.w.size() + l.b.size();
    return n;
  }

  bool operator==(const ToyModel& o) const {
    if (layers.size() != o.layers.size()) return false;
    for (std::size_t i = 0; i < layers.size(); ++i)
      if (layers[i].in_c != o.layers[i].in_c || layers[i].out_c != o.layers[i].out_c ||
          layers[i].w != o.layers[i].w || layers[i].b != o.layers[i].b)
        return false;
    return true;
  }
};

// Uniform init scaled by fan-in, zero biases. Deterministic per seed.
inline ToyModel init_model(std::uint64_t seed, const std::vector<int>& hidden_widths,
                           int in_channels, int num_classes) {
  if (num_classes < 2) throw std::invalid_argument("init_model: need at least 2 classes");
  std::vector<int> widths = hidden_widths;
  widths.push_back(num_classes);
  ToyModel model;
  model.seed = seed;
  Rng rng(seed);
  int prev = in_channels;
  for (int wdt : widths) {
    if (wdt < 1) throw std::invalid_argument("init_model: widths must be positive");
    ConvLayer l;
    l.in_c = prev;
    l.out_c = wdt;
    l.w.resize(static_cast<std::size_t>(9) * prev * wdt);
    l.b.assign(static_cast<std::size_t>(wdt), 0.0);
    const double bound = 1.0 / std::sqrt(9.0 * prev);
    for (auto& v : l.w) v = rng.uniform(-bound, bound);
    model.layers.push_back(std::move(l));
    prev = wdt;
  }
  return model;
}

namespace detail {

inline void conv_forward(const ConvLayer& l, const Tensor& in, Tensor& out) {
  const int h = in.height, w = in.width, ic = l.in_c, oc = l.out_c;
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      double* acc = &out.v[(static_cast<std::size_t>(r) * w + c) * oc];
      for (int o = 0; o < oc; ++o) acc[o] = l.b[o];
      for (int ky = 0; ky < 3; ++ky) {
        const int rr = r + ky - 1;
        if (rr < 0 || rr >= h) continue;
        for (int kx = 0; kx < 3; ++kx) {
          const int cc = c + kx - 1;
          if (cc < 0 || cc >= w) continue;
          const double* src = &in.v[(static_cast<std::size_t>(rr) * w + cc) * ic];
          const double* wrow = &l.w[(static_cast<std::size_t>(ky) * 3 + kx) * ic * oc];
          for (int i = 0; i < ic; ++i) {
            const double x = src[i];
            if (x == 0.0) continue;
            const double* wr = wrow + static_cast<std::size_t>(i) * oc;
            for (int o = 0; o < oc; ++o) acc[o] += x * wr[o];
          }
        }
      }
    }
}

inline void conv_backward(const ConvLayer& l, const Tensor& in, const Tensor& dout,
                          std::vector<double>& dw, std::vector<double>& db, Tensor* din) {
  const int h = in.height, w = in.width, ic = l.in_c, oc = l.out_c;
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      const double* dz = &dout.v[(static_cast<std::size_t>(r) * w + c) * oc];
      for (int o = 0; o < oc; ++o) db[o] += dz[o];
      for (int ky = 0; ky < 3; ++ky) {
        const int rr = r + ky - 1;
        if (rr < 0 || rr >= h) continue;
        for (int kx = 0; kx < 3; ++kx) {
          const int cc = c + kx - 1;
          if (cc < 0 || cc >= w) continue;
          const std::size_t base = (static_cast<std::size_t>(ky) * 3 + kx) * ic * oc;
          const double* src = &in.v[(static_cast<std::size_t>(rr) * w + cc) * ic];
          double* dsrc = din ? &din->v[(static_cast<std::size_t>(rr) * w + cc) * ic] : nullptr;
          for (int i = 0; i < ic; ++i) {
            const double x = src[i];
            double* dwr = &dw[base + static_cast<std::size_t>(i) * oc];
            const double* wr = &l.w[base + static_cast<std::size_t>(i) * oc];
            double s = 0.0;
            for (int o = 0; o < oc; ++o) {
              dwr[o] += x * dz[o];
              s += wr[o] * dz[o];
            }
            if (dsrc) dsrc[i] += s;
          }
        }
      }
    }
}

}  // namespace detail

struct ForwardCache {
  std::vector<Tensor> acts;  // acts[0] = input, acts[i] = post-ReLU output of layer i
};

inline Tensor forward_cached(const ToyModel& model, const Tensor& image, ForwardCache& cache) {
  if (image.channels != model.in_channels())
    throw std::invalid_argument("forward: image channels " + std::to_string(image.channels) +
                                " do not match model input " +
                                std::to_string(model.in_channels()));
  if (image.height < 1 || image.width < 1)
    throw std::invalid_argument("forward: empty image");
  cache.acts.clear();
  cache.acts.push_back(image);
  Tensor cur = image;
  for (std::size_t li = 0; li < model.layers.size(); ++li) {
    const ConvLayer& l = model.layers[li];
    Tensor next(cur.height, cur.width, l.out_c);
    detail::conv_forward(l, cur, next);
    if (li + 1 < model.layers.size()) {
      for (auto& v : next.v) v = v > 0.0 ? v : 0.0;
      cache.acts.push_back(next);
    }
    cur = std::move(next);
  }
  return cur;
}

inline Tensor forward(const ToyModel& model, const Tensor& image) {
  ForwardCache cache;
  return forward_cached(model, image, cache);
}

struct ModelGrad {
  std::vector<std::vector<double>> dw;
  std::vector<std::vector<double>> db;

  explicit ModelGrad(const ToyModel& model) {
    for (const auto& l : model.layers) {
      dw.emplace_back(l.w.size(), 0.0);
      db.emplace_back(l.b.size(), 0.0);
    }
  }

  void add(const ModelGrad& o) {
    for (std::size_t i = 0; i < dw.size(); ++i) {
      for (std::size_t k = 0; k < dw[i].size(); ++k) dw[i][k] += o.dw[i][k];
      for (std::size_t k = 0; k < db[i].size(); ++k) db[i][k] += o.db[i][k];
    }
  }

  void scale(double s) {
    for (auto& layer : dw)
      for (auto& v : layer) v *= s;
    for (auto& layer : db)
      for (auto& v : layer) v *= s;
  }
};

// Backprop of dLoss/dLogits through the stack; accumulates into grad.
inline void backward(const ToyModel& model, const ForwardCache& cache,
                     const Tensor& grad_logits, ModelGrad& grad) {
  Tensor delta = grad_logits;
  for (std::size_t li = model.layers.size(); li-- > 0;) {
    const ConvLayer& l = model.layers[li];
    const Tensor& input = cache.acts[li];
    Tensor din(input.height, input.width, input.channels);
    detail::conv_backward(l, input, delta, grad.dw[li], grad.db[li], li > 0 ? &din : nullptr);
    if (li > 0) {
      // ReLU mask: the cached activation is the post-ReLU value.
      for (std::size_t k = 0; k < din.v.size(); ++k)
        if (input.v[k] <= 0.0) din.v[k] = 0.0;
      delta = std::move(din);
    }
  }
}

struct SgdState {
  std::vector<std::vector<double>> vw;
  std::vector<std::vector<double>> vb;

  explicit SgdState(const ToyModel& model) {
    for (const auto& l : model.layers) {
      vw.emplace_back(l.w.size(), 0.0);
      vb.emplace_back(l.b.size(), 0.0);
    }
  }
};

// v <- momentum * v + lr * (grad + weight_decay * theta); theta <- theta - v
inline void sgd_step(ToyModel& model, const ModelGrad& grad, SgdState& state, double lr,
                     double momentum, double weight_decay) {
  for (std::size_t li = 0; li < model.layers.size(); ++li) {
    ConvLayer& l = model.layers[li];
    for (std::size_t k = 0; k < l.w.size(); ++k) {
      double& v = state.vw[li][k];
      v = momentum * v + lr * (grad.dw[li][k] + weight_decay * l.w[k]);
      l.w[k] -= v;
    }
    for (std::size_t k = 0; k < l.b.size(); ++k) {
      double& v = state.vb[li][k];
      v = momentum * v + lr * (grad.db[li][k] + weight_decay * l.b[k]);
      l.b[k] -= v;
    }
  }
}

// ---------------------------------------------------------------------------
// Left/right swap diagnostic: over pixels whose ground truth belongs to a
// left/right pair, the fraction predicted as the mirror class.

struct SwapStats {
  std::uint64_t swapped = 0;
  std::uint64_t paired = 0;

  double rate() const {
    return paired == 0 ? 0.0 : static_cast<double>(swapped) / static_cast<double>(paired);
  }
};

inline void accumulate_lr_swap(SwapStats& stats, const LabelMap& pred, const LabelMap& gt,
                               const PartTaxonomy& t) {
  if (!pred.same_shape(gt))
    throw std::invalid_argument("evaluate_lr_swap: shape mismatch");
  std::array<int, 256> mirror;
  mirror.fill(-1);
  for (const auto& [l, r] : t.lr_pairs) {
    mirror[static_cast<std::size_t>(l)] = r;
    mirror[static_cast<std::size_t>(r)] = l;
  }
  for (std::size_t i = 0; i < gt.labels.size(); ++i) {
    const std::uint8_t g = gt.labels[i];
    if (g == kIgnoreLabel) continue;
    const int m = mirror[g];
    if (m < 0) continue;
    ++stats.paired;
    if (pred.labels[i] == m) ++stats.swapped;
  }
}

inline SwapStats evaluate_lr_swap(const LabelMap& pred, const LabelMap& gt,
                                  const PartTaxonomy& t) {
  SwapStats stats;
  accumulate_lr_swap(stats, pred, gt, t);
  return stats;
}

// ---------------------------------------------------------------------------
// Training.

struct TrainConfig {
  int batch_size = 10;
  double momentum = 0.9;
  double weight_decay = 0.0005;
  double learning_rate = 0.1;
  double stage2_lr_factor = 0.1;  // fine-tuning stage runs at a reduced rate
  int stage1_epochs = 0;
  int stage2_epochs = 0;
  LossConfig loss;
  std::uint64_t seed = 1;
  int jobs = 1;
  bool augment_flip = false;

  void validate() const {
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (momentum < 0.0 || momentum >= 1.0)
      throw std::invalid_argument("momentum must be in [0, 1)");
    if (weight_decay < 0.0) throw std::invalid_argument("weight_decay must be >= 0");
    if (stage1_epochs < 0 || stage2_epochs < 0)
      throw std::invalid_argument("epoch counts must be >= 0");
  }

  std::string to_json() const {
    char buf[512];
    std::snprintf(buf, sizeof(buf),
                  "{\"batch_size\":%d,\"momentum\":%.6f,\"weight_decay\":%.6f,"
                  "\"learning_rate\":%.6f,\"stage2_lr_factor\":%.6f,"
                  "\"stage1_epochs\":%d,\"stage2_epochs\":%d,\"ssl_mode\":\"%s\","
                  "\"sigma\":%.6f,\"floor\":%.6f,\"seed\":%llu,\"augment_flip\":%s}",
                  batch_size, momentum, weight_decay, learning_rate, stage2_lr_factor,
                  stage1_epochs, stage2_epochs, to_string(loss.mode).c_str(), loss.sigma,
                  loss.floor, static_cast<unsigned long long>(seed),
                  augment_flip ? "true" : "false");
    return std::string(buf);
  }
};

struct Sample {
  Tensor image;
  LabelMap labels;
};

using SampleSet = std::vector<Sample>;

inline SampleSet load_samples(const DatasetIndex& index, int num_classes) {
  SampleSet set;
  set.reserve(index.records.size());
  for (const auto& rec : index.records) {
    if (!rec.has_label())
      throw std::runtime_error("load_samples: record without label: " + rec.image_path);
    Sample s;
    s.image = Tensor::from_image(read_image(index.resolve(rec.image_path)));
    s.labels = read_label_map(index.resolve(rec.label_path), num_classes);
    if (s.image.height != s.labels.height || s.image.width != s.labels.width)
      throw std::runtime_error("load_samples: image/label shape mismatch for " + rec.image_path);
    set.push_back(std::move(s));
  }
  return set;
}

struct EpochRecord {
  int stage = 0;
  int epoch = 0;  // 1-based within stage
  double mean_l_parsing = 0.0;
  double mean_l_joint = 0.0;
  double mean_l_structure = 0.0;
  double val_miou = 0.0;
  double val_swap_rate = 0.0;
};

struct TrainLog {
  std::vector<EpochRecord> records;
  std::string config_json;
  double wall_seconds = 0.0;
};

struct EvalResult {
  double miou = 0.0;
  double overall_accuracy = 0.0;
  double swap_rate = 0.0;
};

inline EvalResult evaluate_model(const ToyModel& model, const SampleSet& samples,
                                 const PartTaxonomy& t, int jobs = 1) {
  const int c = t.num_classes();
  std::vector<ConfusionMatrix> cms(samples.size());
  std::vector<SwapStats> swaps(samples.size());
  auto worker = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const LabelMap pred = argmax_labels(forward(model, samples[i].image));
      cms[i] = ConfusionMatrix(c);
      accumulate_confusion_into(cms[i], samples[i].labels, pred);
      accumulate_lr_swap(swaps[i], pred, samples[i].labels, t);
    }
  };
  jobs = std::max(1, jobs);
  if (jobs == 1) {
    worker(0, samples.size());
  } else {
    std::vector<std::thread> threads;
    const std::size_t chunk = (samples.size() + jobs - 1) / jobs;
    for (int j = 0; j < jobs; ++j) {
      const std::size_t b = std::min(samples.size(), static_cast<std::size_t>(j) * chunk);
      const std::size_t e = std::min(samples.size(), b + chunk);
      if (b < e) threads.emplace_back(worker, b, e);
    }
    for (auto& th : threads) th.join();
  }
  ConfusionMatrix total(c);
  SwapStats swap;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    total = merge_confusion(total, cms[i]);
    swap.swapped += swaps[i].swapped;
    swap.paired += swaps[i].paired;
  }
  const MetricsReport rep = compute_metrics(total);
  return {rep.mean_iou, rep.overall_accuracy, swap.rate()};
}

namespace detail {

inline Sample flip_sample(const Sample& s, const PartTaxonomy& t) {
  Sample out;
  out.image = Tensor(s.image.height, s.image.width, s.image.channels);
  out.labels = LabelMap(s.labels.height, s.labels.width);
  std::array<std::uint8_t, 256> relabel;
  for (int i = 0; i < 256; ++i) relabel[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(i);
  for (const auto& [l, r] : t.lr_pairs) {
    relabel[static_cast<std::size_t>(l)] = static_cast<std::uint8_t>(r);
    relabel[static_cast<std::size_t>(r)] = static_cast<std::uint8_t>(l);
  }
  const int w = s.image.width;
  for (int r = 0; r < s.image.height; ++r)
    for (int c = 0; c < w; ++c) {
      for (int k = 0; k < s.image.channels; ++k)
        out.image.at(r, c, k) = s.image.at(r, w - 1 - c, k);
      out.labels.at(r, c) = relabel[s.labels.at(r, w - 1 - c)];
    }
  return out;
}

struct StepStats {
  double l_parsing = 0.0;
  double l_joint = 0.0;
  double l_structure = 0.0;
};

}  // namespace detail

// Two-stage protocol: stage 1 minimizes the parsing loss; stage 2 continues
// from the stage-1 parameters minimizing the structure-sensitive loss.
// Deterministic given (seed, cfg): each stage draws its shuffle stream from
// mix_seed(seed, stage) and starts with fresh optimizer state, so running
// stage 2 in a separate call from a stage-1 checkpoint reproduces the
// combined run bit for bit.
inline TrainLog train(ToyModel& model, const SampleSet& train_set, const SampleSet& val_set,
                      const PartTaxonomy& t, const TrainConfig& cfg) {
  cfg.validate();
  if (train_set.empty()) throw std::invalid_argument("train: empty training set");
  if (val_set.empty()) throw std::invalid_argument("train: empty validation set");

  const auto t0 = std::chrono::steady_clock::now();
  TrainLog log;
  log.config_json = cfg.to_json();

  for (int stage = 1; stage <= 2; ++stage) {
    const int epochs = stage == 1 ? cfg.stage1_epochs : cfg.stage2_epochs;
    if (epochs == 0) continue;
    const double lr = stage == 1 ? cfg.learning_rate
                                 : cfg.learning_rate * cfg.stage2_lr_factor;
    Rng rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(stage)));
    SgdState sgd(model);

    std::vector<std::size_t> order(train_set.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 1; epoch <= epochs; ++epoch) {
      rng.shuffle(order);
      std::vector<bool> flip(train_set.size(), false);
      if (cfg.augment_flip)
        for (std::size_t i = 0; i < flip.size(); ++i) flip[i] = rng.bernoulli(0.5);

      detail::StepStats epoch_stats;
      for (std::size_t start = 0; start < order.size();
           start += static_cast<std::size_t>(cfg.batch_size)) {
        const std::size_t end =
            std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
        const std::size_t n = end - start;

        std::vector<ModelGrad> grads(n, ModelGrad(model));
        std::vector<detail::StepStats> stats(n);
        auto worker = [&](std::size_t b, std::size_t e) {
          for (std::size_t bi = b; bi < e; ++bi) {
            const std::size_t si = order[start + bi];
            Sample flipped;
            const Sample* sample = &train_set[si];
            if (cfg.augment_flip && flip[si]) {
              flipped = detail::flip_sample(*sample, t);
              sample = &flipped;
            }
            ForwardCache cache;
            const Tensor logits = forward_cached(model, sample->image, cache);
            LossConfig loss_cfg = cfg.loss;
            Tensor grad_logits;
            if (stage == 1) {
              // Optimize the parsing loss; joint terms recorded as diagnostics.
              auto [lp, gp] = parsing_loss(logits, sample->labels);
              stats[bi].l_parsing = lp;
              grad_logits = std::move(gp);
              const double sigma = loss_cfg.effective_sigma(logits.height, logits.width);
              const JointHeatmapSet gt_maps =
                  make_heatmap_set(derive_joints(sample->labels, t), logits.height,
                                   logits.width, sigma);
              const JointHeatmapSet pred_maps =
                  make_heatmap_set(derive_joints(argmax_labels(logits), t), logits.height,
                                   logits.width, sigma);
              stats[bi].l_joint = joint_loss(pred_maps, gt_maps);
              stats[bi].l_structure =
                  std::max(stats[bi].l_joint, loss_cfg.floor) * stats[bi].l_parsing;
            } else {
              LossResult res = structure_loss(logits, sample->labels, t, loss_cfg);
              stats[bi].l_parsing = res.l_parsing;
              stats[bi].l_joint = res.l_joint;
              stats[bi].l_structure = res.l_structure;
              grad_logits = std::move(res.grad_logits);
            }
            backward(model, cache, grad_logits, grads[bi]);
          }
        };
        const int jobs = std::max(1, cfg.jobs);
        if (jobs == 1 || n < 2) {
          worker(0, n);
        } else {
          std::vector<std::thread> threads;
          const std::size_t chunk = (n + jobs - 1) / jobs;
          for (int j = 0; j < jobs; ++j) {
            const std::size_t b = std::min(n, static_cast<std::size_t>(j) * chunk);
            const std::size_t e = std::min(n, b + chunk);
            if (b < e) threads.emplace_back(worker, b, e);
          }
          for (auto& th : threads) th.join();
        }

        // Fixed-order reduce keeps results identical for any jobs value.
        ModelGrad batch_grad(model);
        for (std::size_t bi = 0; bi < n; ++bi) {
          batch_grad.add(grads[bi]);
          epoch_stats.l_parsing += stats[bi].l_parsing;
          epoch_stats.l_joint += stats[bi].l_joint;
          epoch_stats.l_structure += stats[bi].l_structure;
        }
        batch_grad.scale(1.0 / static_cast<double>(n));
        sgd_step(model, batch_grad, sgd, lr, cfg.momentum, cfg.weight_decay);
      }

      const double inv = 1.0 / static_cast<double>(train_set.size());
      EpochRecord rec;
      rec.stage = stage;
      rec.epoch = epoch;
      rec.mean_l_parsing = epoch_stats.l_parsing * inv;
      rec.mean_l_joint = epoch_stats.l_joint * inv;
      rec.mean_l_structure = epoch_stats.l_structure * inv;
      if (!std::isfinite(rec.mean_l_parsing) || !std::isfinite(rec.mean_l_structure))
        throw std::runtime_error("train: non-finite loss at stage " + std::to_string(stage) +
                                 " epoch " + std::to_string(epoch));
      const EvalResult ev = evaluate_model(model, val_set, t, std::max(1, cfg.jobs));
      rec.val_miou = ev.miou;
      rec.val_swap_rate = ev.swap_rate;
      log.records.push_back(rec);
    }
  }
  log.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return log;
}

inline std::string epoch_record_json(const EpochRecord& r) {
  char buf[320];
  std::snprintf(buf, sizeof(buf),
                "{\"stage\":%d,\"epoch\":%d,\"l_parsing\":%.6f,\"l_joint\":%.6f,"
                "\"l_structure\":%.6f,\"val_miou\":%.6f,\"val_swap_rate\":%.6f}",
                r.stage, r.epoch, r.mean_l_parsing, r.mean_l_joint, r.mean_l_structure,
                r.val_miou, r.val_swap_rate);
  return std::string(buf);
}

// Line-delimited JSON: one config line, then one line per epoch.
inline void write_train_log(const TrainLog& log, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write train log: " + path);
  char buf[128];
  std::snprintf(buf, sizeof(buf), "%.3f", log.wall_seconds);
  out << "{\"config\":" << log.config_json << ",\"wall_seconds\":" << buf << "}\n";
  for (const auto& r : log.records) out << epoch_record_json(r) << "\n";
  if (!out) throw std::runtime_error("write failed: " + path);
}

// ---------------------------------------------------------------------------
// Checkpoints: versioned binary container with layer dimensions, row-major
// parameter values (little-endian doubles) and a config snapshot string.

inline void save_checkpoint(const ToyModel& model, const std::string& config_json,
                            const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  auto put_u32 = [&out](std::uint32_t v) {
    char b[4] = {static_cast<char>(v), static_cast<char>(v >> 8), static_cast<char>(v >> 16),
                 static_cast<char>(v >> 24)};
    out.write(b, 4);
  };
  auto put_doubles = [&out](const std::vector<double>& vs) {
    for (double d : vs) {
      std::uint64_t bits;
      std::memcpy(&bits, &d, 8);
      char b[8];
      for (int i = 0; i < 8; ++i) b[i] = static_cast<char>(bits >> (8 * i));
      out.write(b, 8);
    }
  };
  out.write("HPCK0001", 8);
  put_u32(static_cast<std::uint32_t>(model.layers.size()));
  for (const auto& l : model.layers) {
    put_u32(static_cast<std::uint32_t>(l.in_c));
    put_u32(static_cast<std::uint32_t>(l.out_c));
    put_doubles(l.w);
    put_doubles(l.b);
  }
  put_u32(static_cast<std::uint32_t>(config_json.size()));
  out.write(config_json.data(), static_cast<std::streamsize>(config_json.size()));
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline std::pair<ToyModel, std::string> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  auto get_u32 = [&in, &path]() {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4))
      throw std::runtime_error("truncated checkpoint: " + path);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
  };
  auto get_doubles = [&in, &path](std::vector<double>& vs) {
    for (double& d : vs) {
      unsigned char b[8];
      if (!in.read(reinterpret_cast<char*>(b), 8))
        throw std::runtime_error("truncated checkpoint: " + path);
      std::uint64_t bits = 0;
      for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
      std::memcpy(&d, &bits, 8);
    }
  };
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, "HPCK0001", 8) != 0)
    throw std::runtime_error("not a checkpoint file: " + path);
  ToyModel model;
  const std::uint32_t layers = get_u32();
  if (layers == 0 || layers > 64) throw std::runtime_error("bad checkpoint layer count: " + path);
  for (std::uint32_t i = 0; i < layers; ++i) {
    ConvLayer l;
    l.in_c = static_cast<int>(get_u32());
    l.out_c = static_cast<int>(get_u32());
    if (l.in_c < 1 || l.out_c < 1 || l.in_c > 4096 || l.out_c > 4096)
      throw std::runtime_error("bad checkpoint layer dims: " + path);
    l.w.resize(static_cast<std::size_t>(9) * l.in_c * l.out_c);
    l.b.resize(static_cast<std::size_t>(l.out_c));
    get_doubles(l.w);
    get_doubles(l.b);
    model.layers.push_back(std::move(l));
  }
  const std::uint32_t cfg_len = get_u32();
  std::string cfg(cfg_len, '\0');
  if (cfg_len > 0 && !in.read(cfg.data(), cfg_len))
    throw std::runtime_error("truncated checkpoint: " + path);
  return {std::move(model), std::move(cfg)};
}

}  // namespace hparse
