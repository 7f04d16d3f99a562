#pragma once

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "hparse/archive.hpp"
#include "hparse/dataset.hpp"
#include "hparse/metrics.hpp"
#include "hparse/png_io.hpp"
#include "hparse/rng.hpp"
#include "hparse/taxonomy.hpp"

namespace hparse {

// Benchmark scoring against a withheld ground-truth set. Submissions are
// uncompressed tar archives of `<image_id>.png` label maps covering the test
// ids exactly; reports reuse the canonical metrics serialization so a scored
// submission is byte-identical to a local evaluation of the same pairs.
struct Submission {
  std::string id;
  std::uint64_t seq = 0;       // admission order; leaderboard tie-break
  std::string received_at;     // ISO 8601 UTC, informational
  std::string status;          // queued | scored | failed
  std::string report_json;     // canonical MetricsReport bytes when scored
  double mean_iou = 0.0;       // parsed from the report for ranking
  std::string failure_reason;  // set when failed
};

namespace detail {

inline std::string json_escape(const std::string& s) {
  std::string out;
  out.reserve(s.size() + 8);
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      case '\t': out += "\\t"; break;
      default:
        if (static_cast<unsigned char>(c) < 0x20) {
          char buf[8];
          std::snprintf(buf, sizeof(buf), "\\u%04x", c);
          out += buf;
        } else {
          out += c;
        }
    }
  }
  return out;
}

inline std::string iso_utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline std::string join(const std::vector<std::string>& parts, const std::string& sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

}  // namespace detail

// The submission as served over the wire. The report bytes are spliced in
// verbatim; everything else is composed by hand to keep the output canonical.
inline std::string submission_json(const Submission& s) {
  std::string out = "{\"id\":\"" + detail::json_escape(s.id) + "\",\"received_at\":\"" +
                    detail::json_escape(s.received_at) + "\",\"status\":\"" + s.status + "\"";
  if (s.status == "scored") out += ",\"report\":" + s.report_json;
  if (s.status == "failed")
    out += ",\"failure_reason\":\"" + detail::json_escape(s.failure_reason) + "\"";
  out += "}";
  return out;
}

class EvalService {
 public:
  // gt_index must provide a label for every record; label maps are loaded and
  // validated up front. The spool directory is scanned for submissions left by
  // earlier runs, so a restart preserves the leaderboard.
  EvalService(const DatasetIndex& gt_index, const PartTaxonomy& taxonomy,
              std::string spool_dir, std::uint64_t seed = 1)
      : taxonomy_(taxonomy), spool_dir_(std::move(spool_dir)), seed_(seed) {
    for (const auto& rec : gt_index.records) {
      if (!rec.has_label())
        throw std::runtime_error("eval service: ground-truth record without label: " +
                                 rec.image_path);
      const std::string id = image_id(rec.image_path);
      if (gt_.count(id))
        throw std::runtime_error("eval service: duplicate test image id: " + id);
      gt_[id] = read_label_map(gt_index.resolve(rec.label_path), taxonomy_.num_classes());
      ids_.push_back(id);
    }
    std::filesystem::create_directories(spool_dir_);
    rescan();
  }

  const std::vector<std::string>& test_ids() const { return ids_; }

  Submission submit(const std::string& archive_bytes) {
    Submission s;
    {
      std::lock_guard<std::mutex> lock(mutex_);
      s.seq = next_seq_++;
    }
    char idbuf[48];
    std::snprintf(idbuf, sizeof(idbuf), "sub-%06llu-%08llx",
                  static_cast<unsigned long long>(s.seq),
                  static_cast<unsigned long long>(mix_seed(seed_, s.seq) & 0xffffffffull));
    s.id = idbuf;
    s.received_at = detail::iso_utc_now();
    s.status = "queued";
    persist(s);

    try {
      score(archive_bytes, s);
    } catch (const std::exception& e) {
      s.status = "failed";
      s.failure_reason = e.what();
    }
    persist(s);
    {
      std::lock_guard<std::mutex> lock(mutex_);
      submissions_[s.id] = s;
    }
    return s;
  }

  std::optional<Submission> get(const std::string& id) const {
    std::lock_guard<std::mutex> lock(mutex_);
    auto it = submissions_.find(id);
    if (it == submissions_.end()) return std::nullopt;
    return it->second;
  }

  // Scored submissions sorted by mean IoU descending, earlier seq first on ties.
  std::vector<Submission> leaderboard() const {
    std::vector<Submission> rows;
    {
      std::lock_guard<std::mutex> lock(mutex_);
      for (const auto& [id, s] : submissions_)
        if (s.status == "scored") rows.push_back(s);
    }
    std::sort(rows.begin(), rows.end(), [](const Submission& a, const Submission& b) {
      if (a.mean_iou != b.mean_iou) return a.mean_iou > b.mean_iou;
      return a.seq < b.seq;
    });
    return rows;
  }

  std::string leaderboard_json() const {
    std::string out = "{\"leaderboard\":[";
    bool first = true;
    for (const auto& s : leaderboard()) {
      if (!first) out += ",";
      first = false;
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.6f", s.mean_iou);
      out += "{\"id\":\"" + detail::json_escape(s.id) + "\",\"mean_iou\":" + buf + "}";
    }
    out += "]}";
    return out;
  }

 private:
  // Coverage first, then raster validation, then scoring. Throws with the
  // offending file list / filename; the caller turns that into failed status.
  void score(const std::string& archive_bytes, Submission& s) {
    const std::vector<TarEntry> entries = tar_unpack(archive_bytes);
    std::map<std::string, const TarEntry*> by_id;
    for (const auto& e : entries) {
      std::string name = e.name;
      if (name.rfind("./", 0) == 0) name = name.substr(2);
      if (name.size() < 5 || name.substr(name.size() - 4) != ".png")
        throw std::runtime_error("unexpected entry (want <image_id>.png): " + e.name);
      const std::string id = name.substr(0, name.size() - 4);
      if (!by_id.emplace(id, &e).second)
        throw std::runtime_error("duplicate entry for image id: " + id);
    }

    std::vector<std::string> missing, extra;
    for (const auto& id : ids_)
      if (!by_id.count(id)) missing.push_back(id + ".png");
    for (const auto& [id, e] : by_id)
      if (!gt_.count(id)) extra.push_back(id + ".png");
    std::sort(missing.begin(), missing.end());
    if (!missing.empty() || !extra.empty()) {
      std::string why;
      if (!missing.empty()) why += "missing files: " + detail::join(missing, ", ");
      if (!extra.empty()) {
        if (!why.empty()) why += "; ";
        why += "unexpected files: " + detail::join(extra, ", ");
      }
      throw std::runtime_error(why);
    }

    ConfusionMatrix cm(taxonomy_.num_classes());
    for (const auto& id : ids_) {
      const TarEntry& e = *by_id.at(id);
      const std::vector<std::uint8_t> bytes(e.data.begin(), e.data.end());
      const LabelMap pred = decode_label_map(bytes, id + ".png", taxonomy_.num_classes());
      const LabelMap& gt = gt_.at(id);
      if (!pred.same_shape(gt))
        throw std::runtime_error(id + ".png: prediction is " + std::to_string(pred.height) +
                                 "x" + std::to_string(pred.width) + ", expected " +
                                 std::to_string(gt.height) + "x" + std::to_string(gt.width));
      accumulate_confusion_into(cm, gt, pred);
    }
    const MetricsReport report = compute_metrics(cm);
    s.report_json = serialize_report(report);
    s.mean_iou = report.mean_iou;
    s.status = "scored";
  }

  // One directory per submission; meta as `key value` lines, report bytes in
  // a sibling file. Writes go to a temp name and rename into place.
  void persist(const Submission& s) {
    namespace fs = std::filesystem;
    const fs::path dir = fs::path(spool_dir_) / s.id;
    fs::create_directories(dir);
    if (!s.report_json.empty()) {
      const fs::path tmp = dir / "report.json.tmp";
      std::ofstream out(tmp, std::ios::binary);
      out << s.report_json;
      out.close();
      if (!out) throw std::runtime_error("cannot write " + tmp.string());
      fs::rename(tmp, dir / "report.json");
    }
    const fs::path tmp = dir / "meta.txt.tmp";
    {
      std::ofstream out(tmp);
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.17g", s.mean_iou);
      out << "id " << s.id << "\n"
          << "seq " << s.seq << "\n"
          << "received_at " << s.received_at << "\n"
          << "status " << s.status << "\n"
          << "mean_iou " << buf << "\n";
      if (!s.failure_reason.empty()) out << "failure_reason " << s.failure_reason << "\n";
      out.close();
      if (!out) throw std::runtime_error("cannot write " + tmp.string());
    }
    fs::rename(tmp, dir / "meta.txt");
  }

  void rescan() {
    namespace fs = std::filesystem;
    for (const auto& entry : fs::directory_iterator(spool_dir_)) {
      if (!entry.is_directory()) continue;
      const fs::path meta_path = entry.path() / "meta.txt";
      if (!fs::exists(meta_path)) continue;  // interrupted before first persist
      std::ifstream in(meta_path);
      Submission s;
      std::string line;
      while (std::getline(in, line)) {
        const auto sp = line.find(' ');
        if (sp == std::string::npos) continue;
        const std::string key = line.substr(0, sp);
        const std::string value = line.substr(sp + 1);
        if (key == "id") s.id = value;
        else if (key == "seq") s.seq = std::stoull(value);
        else if (key == "received_at") s.received_at = value;
        else if (key == "status") s.status = value;
        else if (key == "mean_iou") s.mean_iou = std::stod(value);
        else if (key == "failure_reason") s.failure_reason = value;
      }
      if (s.id.empty() || s.status.empty())
        throw std::runtime_error("eval service: malformed spool entry " + meta_path.string());
      if (s.status == "scored") {
        std::ifstream rep(entry.path() / "report.json", std::ios::binary);
        std::ostringstream ss;
        ss << rep.rdbuf();
        s.report_json = ss.str();
        if (s.report_json.empty())
          throw std::runtime_error("eval service: scored submission missing report: " + s.id);
      }
      next_seq_ = std::max(next_seq_, s.seq + 1);
      submissions_[s.id] = s;
    }
  }

  PartTaxonomy taxonomy_;
  std::string spool_dir_;
  std::uint64_t seed_;
  std::map<std::string, LabelMap> gt_;
  std::vector<std::string> ids_;  // manifest order
  mutable std::mutex mutex_;
  std::map<std::string, Submission> submissions_;
  std::uint64_t next_seq_ = 1;
};

}  // namespace hparse
