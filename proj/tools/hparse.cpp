#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "hparse/archive.hpp"
#include "hparse/dataset.hpp"
#include "hparse/evalhttp.hpp"
#include "hparse/evalserver.hpp"
#include "hparse/joints.hpp"
#include "hparse/loss.hpp"
#include "hparse/metrics.hpp"
#include "hparse/png_io.hpp"
#include "hparse/raster.hpp"
#include "hparse/rng.hpp"
#include "hparse/synthgen.hpp"
#include "hparse/taxonomy.hpp"
#include "hparse/tensor.hpp"
#include "hparse/toytrain.hpp"

using namespace hparse;

namespace {

PartTaxonomy taxonomy_or_default(const std::string& path) {
  if (path.empty()) return lip_taxonomy();
  PartTaxonomy t = load_taxonomy(path);
  const TaxonomyReport rep = validate_taxonomy(t);
  if (!rep.violations.empty()) {
    std::string why = "taxonomy " + path + " is invalid:";
    for (const auto& v : rep.violations) why += "\n  " + v;
    throw std::runtime_error(why);
  }
  return t;
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw std::runtime_error("unknown split \"" + s + "\"");
}

// Machine-readable output: exact bytes to a file, newline-terminated on stdout.
void emit(const std::string& out_path, const std::string& bytes) {
  if (out_path.empty() || out_path == "-") {
    std::cout << bytes;
    if (bytes.empty() || bytes.back() != '\n') std::cout << "\n";
    return;
  }
  std::ofstream f(out_path, std::ios::binary);
  f << bytes;
  if (!f) throw std::runtime_error("cannot write " + out_path);
}

std::string fmt6(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

// ---------------------------------------------------------------------------

struct GenArgs {
  std::string out, config, split = "train";
  int count = 100, size = 0;
  std::uint64_t seed = 1;
};

void run_gen(const GenArgs& a) {
  FigureConfig cfg = a.config.empty() ? FigureConfig{} : load_figure_config(a.config);
  if (a.size > 0) cfg.image_size = a.size;
  cfg.validate();
  const std::string manifest = generate_dataset(a.seed, a.count, cfg, a.out,
                                                parse_split(a.split));
  save_figure_config(cfg, (std::filesystem::path(a.out) / "figure.cfg").string());
  std::cout << "{\"manifest\":\"" << manifest << "\",\"count\":" << a.count << "}\n";
}

struct JointsArgs {
  std::string labels, taxonomy, out, heatmap_dir;
  double sigma = 0.0;
};

void run_joints(const JointsArgs& a) {
  const PartTaxonomy t = taxonomy_or_default(a.taxonomy);
  const LabelMap m = read_label_map(a.labels, t.num_classes());
  const double sigma = a.sigma > 0.0 ? a.sigma : default_sigma(m.height, m.width);
  const JointSet joints = derive_joints(m, t);

  std::string dump = "# sigma " + fmt6(sigma) + "\n";
  for (const auto& j : joints)
    dump += j.name + " " + (j.present ? "1" : "0") + " " + fmt6(j.row) + " " + fmt6(j.col) +
            "\n";
  emit(a.out, dump);

  if (!a.heatmap_dir.empty()) {
    std::filesystem::create_directories(a.heatmap_dir);
    for (const auto& j : joints) {
      const Heatmap hm = render_heatmap(j, m.height, m.width, sigma);
      std::vector<std::uint16_t> q(hm.values.size());
      for (std::size_t i = 0; i < q.size(); ++i)
        q[i] = static_cast<std::uint16_t>(std::lround(hm.values[i] * 65535.0));
      write_gray16(q, hm.height, hm.width,
                   (std::filesystem::path(a.heatmap_dir) / (j.name + ".png")).string());
    }
  }
}

struct LossArgs {
  std::string pred, gt, taxonomy, mode = "weight", out;
  double sigma = 0.0, floor = 0.0, confidence = 8.0;
};

void run_loss(const LossArgs& a) {
  const PartTaxonomy t = taxonomy_or_default(a.taxonomy);
  const int c = t.num_classes();
  const LabelMap gt = read_label_map(a.gt, c);
  const LabelMap pred = read_label_map(a.pred, c);
  if (!pred.same_shape(gt))
    throw std::runtime_error("prediction " + a.pred + " is " + std::to_string(pred.height) +
                             "x" + std::to_string(pred.width) + " but ground truth is " +
                             std::to_string(gt.height) + "x" + std::to_string(gt.width));

  // The loss operates on logits; a label-map prediction is lifted to peaked
  // logits with the given margin on the predicted class.
  Tensor logits(gt.height, gt.width, c);
  for (int r = 0; r < gt.height; ++r)
    for (int col = 0; col < gt.width; ++col) {
      const std::uint8_t v = pred.at(r, col);
      if (v == kIgnoreLabel)
        throw std::runtime_error("prediction " + a.pred + " contains the ignore value at (" +
                                 std::to_string(r) + "," + std::to_string(col) + ")");
      logits.at(r, col, v) = a.confidence;
    }

  LossConfig cfg;
  cfg.mode = parse_ssl_mode(a.mode);
  cfg.sigma = a.sigma;
  cfg.floor = a.floor;
  const LossResult res = structure_loss(logits, gt, t, cfg);
  const std::string json =
      "{\"mode\":\"" + to_string(cfg.mode) + "\",\"sigma\":" +
      fmt6(cfg.effective_sigma(gt.height, gt.width)) + ",\"floor\":" + fmt6(cfg.floor) +
      ",\"l_parsing\":" + fmt6(res.l_parsing) + ",\"l_joint\":" + fmt6(res.l_joint) +
      ",\"l_structure\":" + fmt6(res.l_structure) + "}";
  emit(a.out, json);
}

struct TrainArgs {
  std::string train_manifest, val_manifest, taxonomy, out, log, init_from, mode = "weight";
  std::vector<int> widths = {12, 12};
  int epochs_stage1 = 3, epochs_stage2 = 2, batch_size = 10, jobs = 1;
  double lr = 0.1, momentum = 0.9, weight_decay = 0.0005, stage2_lr_factor = 0.1;
  double sigma = 0.0, floor = 0.0;
  std::uint64_t seed = 1;
  bool augment_flip = false;
};

void run_train(const TrainArgs& a) {
  const PartTaxonomy t = taxonomy_or_default(a.taxonomy);
  const int c = t.num_classes();
  const DatasetIndex train_idx = load_manifest(a.train_manifest, Split::train);
  const DatasetIndex val_idx = load_manifest(a.val_manifest, Split::val);
  if (train_idx.records.empty()) throw std::runtime_error("empty training manifest");
  if (val_idx.records.empty()) throw std::runtime_error("empty validation manifest");
  const SampleSet train_set = load_samples(train_idx, c);
  const SampleSet val_set = load_samples(val_idx, c);

  ToyModel model;
  if (!a.init_from.empty()) {
    model = load_checkpoint(a.init_from).first;
    if (model.num_classes() != c)
      throw std::runtime_error("checkpoint " + a.init_from + " has " +
                               std::to_string(model.num_classes()) + " classes, taxonomy has " +
                               std::to_string(c));
    if (model.in_channels() != train_set.front().image.channels)
      throw std::runtime_error("checkpoint " + a.init_from + " expects " +
                               std::to_string(model.in_channels()) + " input channels");
  } else {
    model = init_model(a.seed, a.widths, train_set.front().image.channels, c);
  }

  TrainConfig cfg;
  cfg.batch_size = a.batch_size;
  cfg.momentum = a.momentum;
  cfg.weight_decay = a.weight_decay;
  cfg.learning_rate = a.lr;
  cfg.stage2_lr_factor = a.stage2_lr_factor;
  cfg.stage1_epochs = a.epochs_stage1;
  cfg.stage2_epochs = a.epochs_stage2;
  cfg.loss.mode = parse_ssl_mode(a.mode);
  cfg.loss.sigma = a.sigma;
  cfg.loss.floor = a.floor;
  cfg.seed = a.seed;
  cfg.jobs = a.jobs;
  cfg.augment_flip = a.augment_flip;

  const TrainLog log = train(model, train_set, val_set, t, cfg);
  save_checkpoint(model, cfg.to_json(), a.out);
  if (!a.log.empty()) write_train_log(log, a.log);
  for (const auto& rec : log.records) std::cerr << epoch_record_json(rec) << "\n";

  const EvalResult ev = evaluate_model(model, val_set, t, std::max(1, a.jobs));
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3f", log.wall_seconds);
  std::cout << "{\"params\":" << model.param_count() << ",\"val_miou\":" << fmt6(ev.miou)
            << ",\"val_overall_accuracy\":" << fmt6(ev.overall_accuracy)
            << ",\"val_swap_rate\":" << fmt6(ev.swap_rate) << ",\"wall_seconds\":" << buf
            << "}\n";
}

struct EvalArgs {
  std::string gt_manifest, pred_dir, taxonomy, out;
  int jobs = 1;
  bool slices = false;
};

void run_eval(const EvalArgs& a) {
  const PartTaxonomy t = taxonomy_or_default(a.taxonomy);
  const DatasetIndex idx = load_manifest(a.gt_manifest, Split::val);
  const SlicedEvaluation ev = sliced_evaluation(idx, a.pred_dir, t, a.jobs);
  for (const auto& w : ev.warnings) std::cerr << "warning: " << w << "\n";

  if (a.slices) {
    emit(a.out, serialize_sliced(ev));
    return;
  }
  if (!ev.missing_predictions.empty()) {
    std::string why = "missing predictions for " +
                      std::to_string(ev.missing_predictions.size()) + " image(s):";
    const std::size_t show = std::min<std::size_t>(ev.missing_predictions.size(), 10);
    for (std::size_t i = 0; i < show; ++i) why += " " + ev.missing_predictions[i];
    if (show < ev.missing_predictions.size()) why += " ...";
    throw std::runtime_error(why);
  }
  emit(a.out, serialize_report(ev.reports.at(0).second));
}

struct ServeArgs {
  std::string gt_manifest, taxonomy, spool = "spool", host = "127.0.0.1";
  int port = 8080;
  std::uint64_t seed = 1;
};

void run_serve(const ServeArgs& a) {
  const PartTaxonomy t = taxonomy_or_default(a.taxonomy);
  const DatasetIndex idx = load_manifest(a.gt_manifest, Split::val);
  EvalService service(idx, t, a.spool, a.seed);

  httplib::Server srv;
  attach_routes(srv, service);
  int port = a.port;
  if (port == 0) {
    port = srv.bind_to_any_port(a.host);
    if (port <= 0) throw std::runtime_error("cannot bind to any port on " + a.host);
  } else if (!srv.bind_to_port(a.host, port)) {
    throw std::runtime_error("cannot bind to " + a.host + ":" + std::to_string(port));
  }
  std::cerr << "serving " << service.test_ids().size() << " test images on " << a.host << ":"
            << port << ", spool at " << a.spool << "\n";
  srv.listen_after_bind();
}

// ---------------------------------------------------------------------------
// selftest: oracle suites that recompute everything the slow, obvious way and
// compare against the library. Exit 0 only when every suite passes.

struct Suite {
  std::string name;
  int cases = 0;
  bool pass = true;
  double worst = 0.0;
};

LabelMap random_labels(Rng& rng, int h, int w, int c, double ignore_prob) {
  LabelMap m(h, w);
  bool any = false;
  for (auto& v : m.labels) {
    if (rng.bernoulli(ignore_prob)) {
      v = kIgnoreLabel;
    } else {
      v = static_cast<std::uint8_t>(rng.uniform_int(static_cast<std::uint64_t>(c)));
      any = true;
    }
  }
  if (!any) m.labels[0] = 0;  // keep at least one evaluated pixel
  return m;
}

Tensor random_logits(Rng& rng, int h, int w, int c, double scale) {
  Tensor t(h, w, c);
  for (auto& v : t.v) v = rng.normal(0.0, scale);
  return t;
}

// Small taxonomy for C-class gradient instances: background 0, singleton
// groups over a few foreground ids.
PartTaxonomy tiny_taxonomy(int c) {
  if (c == 20) return lip_taxonomy();
  PartTaxonomy t;
  for (int i = 0; i < c; ++i)
    t.classes.push_back({i, i == 0 ? "background" : "part" + std::to_string(i)});
  t.background_id = 0;
  t.joint_groups.push_back({"A", {1}});
  if (c > 2) t.joint_groups.push_back({"B", {2}});
  if (c > 4) t.joint_groups.push_back({"C", {3, 4}});
  return t;
}

Suite suite_metrics_oracle(Rng& rng) {
  Suite s{"metrics_oracle"};
  const int cs[] = {2, 7, 20};
  for (int i = 0; i < 150; ++i) {
    const int c = cs[i % 3];
    const LabelMap gt = random_labels(rng, 16, 16, c, 0.1);
    const LabelMap pred = random_labels(rng, 16, 16, c, 0.0);
    ConfusionMatrix cm(c);
    accumulate_confusion_into(cm, gt, pred);
    const MetricsReport lib = compute_metrics(cm);

    // Independent tally straight off the pixels.
    std::vector<std::uint64_t> gt_n(c, 0), pred_n(c, 0), hit(c, 0);
    std::uint64_t total = 0, right = 0;
    for (std::size_t k = 0; k < gt.labels.size(); ++k) {
      const std::uint8_t g = gt.labels[k], p = pred.labels[k];
      if (g == kIgnoreLabel) continue;
      ++total;
      ++gt_n[g];
      ++pred_n[p];
      if (g == p) {
        ++right;
        ++hit[g];
      }
    }
    double racc = 0.0;
    int seen = 0;
    double iou_sum = 0.0;
    int included = 0;
    std::vector<std::pair<int, double>> per_iou;
    std::vector<int> excluded;
    for (int k = 0; k < c; ++k) {
      if (gt_n[k] > 0) {
        racc += static_cast<double>(hit[k]) / static_cast<double>(gt_n[k]);
        ++seen;
      }
      const std::uint64_t uni = gt_n[k] + pred_n[k] - hit[k];
      if (uni > 0) {
        const double iou = static_cast<double>(hit[k]) / static_cast<double>(uni);
        per_iou.push_back({k, iou});
        iou_sum += iou;
        ++included;
      } else {
        excluded.push_back(k);
      }
    }
    const double overall = static_cast<double>(right) / static_cast<double>(total);
    const double mean_acc = seen ? racc / seen : 0.0;
    const double miou = included ? iou_sum / included : 0.0;

    auto close = [](double x, double y) { return std::abs(x - y) <= 1e-12; };
    bool ok = close(lib.overall_accuracy, overall) && close(lib.mean_accuracy, mean_acc) &&
              close(lib.mean_iou, miou) && lib.excluded_classes == excluded &&
              lib.per_class_iou.size() == per_iou.size() && lib.evaluated_pixels == total;
    for (std::size_t k = 0; ok && k < per_iou.size(); ++k)
      ok = lib.per_class_iou[k].first == per_iou[k].first &&
           close(lib.per_class_iou[k].second, per_iou[k].second);
    s.pass &= ok;
    ++s.cases;
  }
  return s;
}

Suite suite_joint_cases(Rng& rng) {
  Suite s{"joint_hand_cases"};
  auto manual_set = [](std::vector<std::vector<double>> maps, int h, int w) {
    JointHeatmapSet set;
    set.height = h;
    set.width = w;
    set.sigma = 1.0;
    for (auto& m : maps) {
      Heatmap hm(h, w);
      hm.values = m;
      set.maps.push_back(hm);
      set.joints.push_back({"j" + std::to_string(set.joints.size()), true, 0.0, 0.0});
    }
    return set;
  };

  s.pass &= joint_loss(manual_set({{0.0}}, 1, 1), manual_set({{1.0}}, 1, 1)) == 0.5;
  s.pass &= joint_loss(manual_set({{1.0, 1.0}, {0.0, 0.0}}, 1, 2),
                       manual_set({{0.0, 0.0}, {0.0, 0.0}}, 1, 2)) == 0.5;
  const PartTaxonomy& t = lip_taxonomy();
  const LabelMap m = random_labels(rng, 16, 16, 20, 0.0);
  const JointHeatmapSet hs = make_heatmap_set(derive_joints(m, t), 16, 16, 1.0);
  s.pass &= joint_loss(hs, hs) == 0.0;
  s.cases = 3;

  for (int i = 0; i < 100; ++i) {
    JointHeatmapSet a, b;
    a.height = b.height = 8;
    a.width = b.width = 8;
    a.sigma = b.sigma = 1.0;
    for (int g = 0; g < 9; ++g) {
      Heatmap ha(8, 8), hb(8, 8);
      for (auto& v : ha.values) v = rng.uniform();
      for (auto& v : hb.values) v = rng.uniform();
      a.maps.push_back(ha);
      b.maps.push_back(hb);
      a.joints.push_back({"j", true, 0, 0});
      b.joints.push_back({"j", true, 0, 0});
    }
    const double ab = joint_loss(a, b);
    s.pass &= ab >= 0.0 && ab == joint_loss(b, a) && joint_loss(a, a) == 0.0;
    ++s.cases;
  }
  return s;
}

Suite suite_parsing_grad(Rng& rng, int count) {
  Suite s{"parsing_grad"};
  const int cs[] = {3, 5, 20};
  for (int i = 0; i < count; ++i) {
    const int c = cs[i % 3];
    const LabelMap gt = random_labels(rng, 8, 8, c, 0.15);
    const Tensor logits = random_logits(rng, 8, 8, c, 1.0);
    auto f = [&](const std::vector<double>& x) {
      Tensor t(8, 8, c);
      t.v = x;
      auto [value, grad] = parsing_loss(t, gt);
      return std::pair<double, std::vector<double>>(value, grad.v);
    };
    const GradCheckReport rep = grad_check(f, logits.v, 1e-5, 1e-5);
    s.pass &= rep.pass;
    s.worst = std::max(s.worst, rep.max_rel_error);
    ++s.cases;
  }
  return s;
}

Suite suite_soft_grad(Rng& rng, int count) {
  Suite s{"soft_structure_grad"};
  const int cs[] = {3, 5, 20};
  for (int i = 0; i < count; ++i) {
    const int c = cs[i % 3];
    const PartTaxonomy t = tiny_taxonomy(c);
    const LabelMap gt = random_labels(rng, 8, 8, c, 0.1);
    const Tensor logits = random_logits(rng, 8, 8, c, 1.0);
    LossConfig cfg;
    cfg.mode = SslMode::soft;
    cfg.sigma = 1.5;
    auto f = [&](const std::vector<double>& x) {
      Tensor lt(8, 8, c);
      lt.v = x;
      const LossResult res = structure_loss(lt, gt, t, cfg);
      return std::pair<double, std::vector<double>>(res.l_structure, res.grad_logits.v);
    };
    const GradCheckReport rep = grad_check(f, logits.v, 1e-5, 1e-3);
    s.pass &= rep.pass;
    s.worst = std::max(s.worst, rep.max_rel_error);
    ++s.cases;
  }
  return s;
}

Suite suite_one_hot(Rng& rng) {
  Suite s{"one_hot_collapse"};
  const PartTaxonomy& t = lip_taxonomy();
  for (int i = 0; i < 100; ++i) {
    const LabelMap m = random_labels(rng, 12, 12, 20, 0.0);
    const JointSet hard = derive_joints(m, t);
    const JointSet soft = soft_joints(ProbMap::one_hot(m, 20), t);
    bool ok = hard.size() == soft.size();
    for (std::size_t g = 0; ok && g < hard.size(); ++g) {
      ok = hard[g].present == soft[g].present;
      if (ok && hard[g].present)
        ok = std::abs(hard[g].row - soft[g].row) <= 1e-9 &&
             std::abs(hard[g].col - soft[g].col) <= 1e-9;
    }
    s.pass &= ok;
    ++s.cases;
  }
  return s;
}

Suite suite_floor(Rng& rng) {
  Suite s{"floor_semantics"};
  const PartTaxonomy& t = lip_taxonomy();
  for (int i = 0; i < 20; ++i) {
    const LabelMap gt = random_labels(rng, 12, 12, 20, 0.0);
    Tensor logits(12, 12, 20);
    for (int r = 0; r < 12; ++r)
      for (int col = 0; col < 12; ++col) logits.at(r, col, gt.at(r, col)) = 8.0;

    LossConfig cfg;  // weight mode
    const LossResult zero = structure_loss(logits, gt, t, cfg);
    s.pass &= zero.l_joint == 0.0 && zero.l_structure == 0.0;
    cfg.floor = 0.25;
    const LossResult floored = structure_loss(logits, gt, t, cfg);
    s.pass &= floored.l_structure == 0.25 * floored.l_parsing;
    ++s.cases;
  }
  return s;
}

struct SelftestArgs {
  std::uint64_t seed = 1;
  int grad_checks = 100;
};

int run_selftest(const SelftestArgs& a) {
  Rng rng(a.seed);
  std::vector<Suite> suites;
  suites.push_back(suite_metrics_oracle(rng));
  suites.push_back(suite_joint_cases(rng));
  suites.push_back(suite_parsing_grad(rng, a.grad_checks));
  suites.push_back(suite_soft_grad(rng, a.grad_checks));
  suites.push_back(suite_one_hot(rng));
  suites.push_back(suite_floor(rng));

  bool all = true;
  std::string json = "{\"suites\":[";
  for (std::size_t i = 0; i < suites.size(); ++i) {
    const Suite& s = suites[i];
    all &= s.pass;
    char worst[48] = "";
    if (s.worst > 0.0) std::snprintf(worst, sizeof(worst), ", max rel err %.2e", s.worst);
    std::fprintf(stderr, "selftest: %-20s %s (%d cases%s)\n", s.name.c_str(),
                 s.pass ? "pass" : "FAIL", s.cases, worst);
    if (i) json += ",";
    json += "{\"name\":\"" + s.name + "\",\"pass\":" + (s.pass ? "true" : "false") +
            ",\"cases\":" + std::to_string(s.cases) + "}";
  }
  json += "],\"pass\":";
  json += all ? "true" : "false";
  json += "}";
  std::cout << json << "\n";
  return all ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"self-supervised structure-sensitive human parsing toolkit"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen", "generate a synthetic stick-figure dataset");
  gen_cmd->add_option("--out", gen.out, "output directory")->required();
  gen_cmd->add_option("--count", gen.count, "number of samples")->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed, "rng seed")->capture_default_str();
  gen_cmd->add_option("--split", gen.split, "manifest split")
      ->check(CLI::IsMember({"train", "val", "test"}))
      ->capture_default_str();
  gen_cmd->add_option("--config", gen.config, "figure config file");
  gen_cmd->add_option("--size", gen.size, "override image_size");

  JointsArgs joints;
  auto* joints_cmd = app.add_subcommand("joints", "derive pseudo joints from a label map");
  joints_cmd->add_option("--labels", joints.labels, "label-map png")->required();
  joints_cmd->add_option("--taxonomy", joints.taxonomy, "taxonomy config (default: LIP)");
  joints_cmd->add_option("--sigma", joints.sigma, "heatmap sigma (0 = max(H,W)/16)")
      ->capture_default_str();
  joints_cmd->add_option("--out", joints.out, "joint dump path (default: stdout)");
  joints_cmd->add_option("--heatmap-dir", joints.heatmap_dir, "write 16-bit heatmap pngs here");

  LossArgs loss;
  auto* loss_cmd = app.add_subcommand("loss", "evaluate losses for a prediction/gt pair");
  loss_cmd->add_option("--pred", loss.pred, "predicted label-map png")->required();
  loss_cmd->add_option("--gt", loss.gt, "ground-truth label-map png")->required();
  loss_cmd->add_option("--taxonomy", loss.taxonomy, "taxonomy config (default: LIP)");
  loss_cmd->add_option("--ssl-mode", loss.mode, "structure loss mode")
      ->check(CLI::IsMember({"weight", "soft"}))
      ->capture_default_str();
  loss_cmd->add_option("--mode", loss.mode, "alias for --ssl-mode")
      ->check(CLI::IsMember({"weight", "soft"}));
  loss_cmd->add_option("--sigma", loss.sigma, "heatmap sigma (0 = max(H,W)/16)")
      ->capture_default_str();
  loss_cmd->add_option("--floor", loss.floor, "joint-weight floor")->capture_default_str();
  loss_cmd->add_option("--confidence", loss.confidence, "logit margin for the predicted class")
      ->capture_default_str();
  loss_cmd->add_option("--out", loss.out, "output path (default: stdout)");

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "train the toy parser (two-stage protocol)");
  train_cmd->add_option("--train-manifest", train.train_manifest, "training manifest")
      ->required();
  train_cmd->add_option("--val-manifest", train.val_manifest, "validation manifest")->required();
  train_cmd->add_option("--taxonomy", train.taxonomy, "taxonomy config (default: LIP)");
  train_cmd->add_option("--out", train.out, "checkpoint output path")->required();
  train_cmd->add_option("--log", train.log, "train log path (jsonl)");
  train_cmd->add_option("--init-from", train.init_from, "start from an existing checkpoint");
  train_cmd->add_option("--widths", train.widths, "hidden layer widths")
      ->delimiter(',')
      ->capture_default_str();
  train_cmd->add_option("--seed", train.seed, "rng seed")->capture_default_str();
  train_cmd->add_option("--epochs-stage1", train.epochs_stage1, "parsing-loss epochs")
      ->capture_default_str();
  train_cmd->add_option("--epochs-stage2", train.epochs_stage2, "structure-loss epochs")
      ->capture_default_str();
  train_cmd->add_option("--lr", train.lr, "stage-1 learning rate")->capture_default_str();
  train_cmd->add_option("--stage2-lr-factor", train.stage2_lr_factor,
                        "stage-2 lr = factor * stage-1 lr")
      ->capture_default_str();
  train_cmd->add_option("--batch-size", train.batch_size, "sgd batch size")
      ->capture_default_str();
  train_cmd->add_option("--momentum", train.momentum, "sgd momentum")->capture_default_str();
  train_cmd->add_option("--weight-decay", train.weight_decay, "sgd weight decay")
      ->capture_default_str();
  train_cmd->add_option("--ssl-mode", train.mode, "structure loss mode for stage 2")
      ->check(CLI::IsMember({"weight", "soft"}))
      ->capture_default_str();
  train_cmd->add_option("--mode", train.mode, "alias for --ssl-mode")
      ->check(CLI::IsMember({"weight", "soft"}));
  train_cmd->add_option("--sigma", train.sigma, "heatmap sigma (0 = max(H,W)/16)")
      ->capture_default_str();
  train_cmd->add_option("--floor", train.floor, "joint-weight floor")->capture_default_str();
  train_cmd->add_option("--jobs", train.jobs, "worker threads per batch")
      ->capture_default_str();
  train_cmd->add_flag("--augment-flip", train.augment_flip,
                      "horizontal flip augmentation with left/right label swap");

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "score predictions against a gt manifest");
  eval_cmd->add_option("--gt-manifest", eval.gt_manifest, "ground-truth manifest")->required();
  eval_cmd->add_option("--pred-dir", eval.pred_dir, "directory of <image_id>.png predictions")
      ->required();
  eval_cmd->add_option("--taxonomy", eval.taxonomy, "taxonomy config (default: LIP)");
  eval_cmd->add_option("--out", eval.out, "report path (default: stdout)");
  eval_cmd->add_option("--jobs", eval.jobs, "parallel per-image accumulation")
      ->capture_default_str();
  eval_cmd->add_flag("--slices", eval.slices,
                     "emit per-challenge-factor reports instead of the aggregate");

  ServeArgs serve;
  auto* serve_cmd = app.add_subcommand("serve", "run the benchmark evaluation server");
  serve_cmd->add_option("--gt-manifest", serve.gt_manifest, "withheld ground-truth manifest")
      ->required();
  serve_cmd->add_option("--taxonomy", serve.taxonomy, "taxonomy config (default: LIP)");
  serve_cmd->add_option("--port", serve.port, "listen port (0 = any free port)")
      ->capture_default_str();
  serve_cmd->add_option("--host", serve.host, "bind address")->capture_default_str();
  serve_cmd->add_option("--spool", serve.spool, "submission spool directory")
      ->capture_default_str();
  serve_cmd->add_option("--seed", serve.seed, "submission id seed")->capture_default_str();

  SelftestArgs selftest;
  auto* selftest_cmd = app.add_subcommand("selftest", "run oracle suites and gradient checks");
  selftest_cmd->add_option("--seed", selftest.seed, "rng seed")->capture_default_str();
  selftest_cmd->add_option("--grad-checks", selftest.grad_checks,
                           "gradient-check instances per loss family")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*gen_cmd) run_gen(gen);
    else if (*joints_cmd) run_joints(joints);
    else if (*loss_cmd) run_loss(loss);
    else if (*train_cmd) run_train(train);
    else if (*eval_cmd) run_eval(eval);
    else if (*serve_cmd) run_serve(serve);
    else if (*selftest_cmd) return run_selftest(selftest);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
