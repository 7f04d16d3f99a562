#pragma once

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "hparse/raster.hpp"
#include "hparse/taxonomy.hpp"

namespace hparse {

enum class View { front, back };
enum class BodyExtent { full, upper, lower, head_missed };
enum class Split { train, val, test };

inline std::string to_string(View v) { return v == View::front ? "front" : "back"; }
inline std::string to_string(BodyExtent e) {
  switch (e) {
    case BodyExtent::full: return "full";
    case BodyExtent::upper: return "upper";
    case BodyExtent::lower: return "lower";
    case BodyExtent::head_missed: return "head_missed";
  }
  return "?";
}

// Annotated per-sample metadata. Occlusion and view cannot be derived from
// labels; they travel with the manifest.
struct SampleMeta {
  bool occlusion = false;
  View view = View::front;
  BodyExtent body_extent = BodyExtent::full;

  bool operator==(const SampleMeta&) const = default;
};

struct DatasetRecord {
  std::string image_path;
  std::string label_path;  // empty = withheld (test split only)
  SampleMeta meta;

  bool has_label() const { return !label_path.empty(); }
};

struct DatasetIndex {
  std::vector<DatasetRecord> records;
  Split split = Split::train;
  std::string base_dir;  // manifest directory; relative paths resolve against it

  std::string resolve(const std::string& path) const {
    if (path.empty() || std::filesystem::path(path).is_absolute()) return path;
    return (std::filesystem::path(base_dir) / path).string();
  }
};

// Image id used for prediction lookup and submission archive entries:
// the image filename without its extension.
inline std::string image_id(const std::string& image_path) {
  return std::filesystem::path(image_path).stem().string();
}

// Manifest: one record per line,
//   image_path label_path [occ] [back|front] [full|upper|lower|head_missed]
// `-` as label_path marks a withheld label. `#` starts a comment.
inline DatasetIndex load_manifest(const std::string& path, Split split) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest: " + path);
  DatasetIndex index;
  index.split = split;
  index.base_dir = std::filesystem::path(path).parent_path().string();

  std::set<std::string> image_paths, label_paths;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ss(line);
    DatasetRecord rec;
    if (!(ss >> rec.image_path)) continue;
    const std::string where = path + ":" + std::to_string(lineno);
    if (!(ss >> rec.label_path))
      throw std::runtime_error(where + ": record needs `image_path label_path`");
    if (rec.label_path == "-") {
      rec.label_path.clear();
      if (split != Split::test)
        throw std::runtime_error(where + ": label path missing in non-test split");
    }
    std::string tok;
    while (ss >> tok) {
      if (tok == "occ") rec.meta.occlusion = true;
      else if (tok == "front") rec.meta.view = View::front;
      else if (tok == "back") rec.meta.view = View::back;
      else if (tok == "full") rec.meta.body_extent = BodyExtent::full;
      else if (tok == "upper") rec.meta.body_extent = BodyExtent::upper;
      else if (tok == "lower") rec.meta.body_extent = BodyExtent::lower;
      else if (tok == "head_missed") rec.meta.body_extent = BodyExtent::head_missed;
      else throw std::runtime_error(where + ": unknown flag token \"" + tok + "\"");
    }
    if (!image_paths.insert(rec.image_path).second)
      throw std::runtime_error(where + ": duplicate image path " + rec.image_path);
    if (rec.has_label() && !label_paths.insert(rec.label_path).second)
      throw std::runtime_error(where + ": duplicate label path " + rec.label_path);
    index.records.push_back(std::move(rec));
  }
  return index;
}

inline void write_manifest(const DatasetIndex& index, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write manifest: " + path);
  for (const auto& rec : index.records) {
    out << rec.image_path << " " << (rec.has_label() ? rec.label_path : "-");
    if (rec.meta.occlusion) out << " occ";
    out << " " << to_string(rec.meta.view) << " " << to_string(rec.meta.body_extent) << "\n";
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

// The five factors used for sliced evaluation.
struct FactorFlags {
  bool occlusion = false;
  bool full_body = false;
  bool upper_body = false;
  bool head_missed = false;
  bool back_view = false;
  std::vector<std::string> warnings;
};

// head_missed is derived from the labels (no pixel in group H); the other
// factors come from the manifest metadata. A derived/annotated mismatch on
// head visibility produces a warning, never an error.
inline FactorFlags tag_challenge_factors(const LabelMap& m, const SampleMeta& meta,
                                         const PartTaxonomy& t) {
  FactorFlags f;
  f.occlusion = meta.occlusion;
  f.back_view = meta.view == View::back;
  f.full_body = meta.body_extent == BodyExtent::full;
  f.upper_body = meta.body_extent == BodyExtent::upper;

  bool head_pixels = false;
  if (t.find_group("H") != nullptr) {
    const BinaryMask mask = merge_group_mask(m, t, "H");
    head_pixels = mask.count() > 0;
  }
  f.head_missed = !head_pixels;

  if (f.head_missed && meta.body_extent != BodyExtent::head_missed)
    f.warnings.push_back("labels contain no head pixels but body_extent is " +
                         to_string(meta.body_extent));
  if (!f.head_missed && meta.body_extent == BodyExtent::head_missed)
    f.warnings.push_back("body_extent is head_missed but labels contain head pixels");
  return f;
}

}  // namespace hparse
