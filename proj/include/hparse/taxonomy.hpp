#pragma once

#include <algorithm>
#include <array>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "hparse/raster.hpp"

namespace hparse {

// Part-label vocabulary plus the left/right pairings and label->joint merge
// tables that drive joint derivation.
struct PartTaxonomy {
  struct JointGroup {
    std::string name;
    std::vector<int> members;  // non-background class ids
  };

  std::vector<std::pair<int, std::string>> classes;  // (id, name), ordered
  int background_id = 0;
  std::vector<std::pair<int, int>> lr_pairs;  // (left_id, right_id)
  std::vector<JointGroup> joint_groups;       // order fixes joint order

  int num_classes() const { return static_cast<int>(classes.size()); }

  const JointGroup* find_group(std::string_view name) const {
    for (const auto& g : joint_groups)
      if (g.name == name) return &g;
    return nullptr;
  }

  int group_index(std::string_view name) const {
    for (std::size_t i = 0; i < joint_groups.size(); ++i)
      if (joint_groups[i].name == name) return static_cast<int>(i);
    return -1;
  }

  std::string class_name(int id) const {
    for (const auto& [cid, n] : classes)
      if (cid == id) return n;
    return "?";
  }

  // Mirror class id under the left/right pairing, or -1 if unpaired.
  int mirror_class(int id) const {
    for (const auto& [l, r] : lr_pairs) {
      if (id == l) return r;
      if (id == r) return l;
    }
    return -1;
  }
};

// LIP class ids. Background is 0; parts follow the dataset vocabulary order.
enum LipClass : int {
  kBackground = 0,
  kHat = 1,
  kHair = 2,
  kSunglasses = 3,
  kUpperClothes = 4,
  kDress = 5,
  kCoat = 6,
  kSocks = 7,
  kPants = 8,
  kGloves = 9,
  kScarf = 10,
  kSkirt = 11,
  kJumpsuits = 12,
  kFace = 13,
  kRightArm = 14,
  kLeftArm = 15,
  kRightLeg = 16,
  kLeftLeg = 17,
  kRightShoe = 18,
  kLeftShoe = 19,
};

// The 20-class LIP taxonomy with the 9 merge groups H, U, L, RA, LA, RL, LL,
// RS, LS. Dress and jumpsuits span torso and legs and are members of both U
// and L; gloves and socks carry no side information and join no group.
inline PartTaxonomy lip_taxonomy() {
  PartTaxonomy t;
  t.classes = {
      {kBackground, "background"}, {kHat, "hat"},
      {kHair, "hair"},             {kSunglasses, "sunglasses"},
      {kUpperClothes, "upper-clothes"}, {kDress, "dress"},
      {kCoat, "coat"},             {kSocks, "socks"},
      {kPants, "pants"},           {kGloves, "gloves"},
      {kScarf, "scarf"},           {kSkirt, "skirt"},
      {kJumpsuits, "jumpsuits"},   {kFace, "face"},
      {kRightArm, "right-arm"},    {kLeftArm, "left-arm"},
      {kRightLeg, "right-leg"},    {kLeftLeg, "left-leg"},
      {kRightShoe, "right-shoe"},  {kLeftShoe, "left-shoe"},
  };
  t.background_id = kBackground;
  t.lr_pairs = {{kLeftArm, kRightArm}, {kLeftLeg, kRightLeg}, {kLeftShoe, kRightShoe}};
  t.joint_groups = {
      {"H", {kHat, kHair, kSunglasses, kFace}},
      {"U", {kUpperClothes, kCoat, kScarf, kDress, kJumpsuits}},
      {"L", {kPants, kSkirt, kDress, kJumpsuits}},
      {"RA", {kRightArm}},
      {"LA", {kLeftArm}},
      {"RL", {kRightLeg}},
      {"LL", {kLeftLeg}},
      {"RS", {kRightShoe}},
      {"LS", {kLeftShoe}},
  };
  return t;
}

struct TaxonomyReport {
  std::vector<std::string> violations;
  // Informational only, never a validation failure: classes outside all joint
  // groups, classes shared between groups.
  std::vector<std::string> notes;

  bool ok() const { return violations.empty(); }
};

inline TaxonomyReport validate_taxonomy(const PartTaxonomy& t) {
  TaxonomyReport rep;
  auto fail = [&rep](const std::string& msg) { rep.violations.push_back(msg); };

  const int c = t.num_classes();
  std::set<int> ids;
  for (const auto& [id, name] : t.classes) {
    if (!ids.insert(id).second)
      fail("duplicate class id " + std::to_string(id) + " (" + name + ")");
  }
  for (int i = 0; i < c; ++i) {
    if (!ids.count(i))
      fail("class ids not contiguous: id " + std::to_string(i) + " missing from 0.." +
           std::to_string(c - 1));
  }
  for (int id : ids) {
    if (id < 0 || id >= c)
      fail("class id " + std::to_string(id) + " outside 0.." + std::to_string(c - 1));
  }
  if (!ids.count(t.background_id))
    fail("background id " + std::to_string(t.background_id) + " is not a class id");

  auto check_part_id = [&](int id, const std::string& where) {
    if (!ids.count(id))
      fail(where + ": id " + std::to_string(id) + " is not a class id");
    else if (id == t.background_id)
      fail(where + ": id " + std::to_string(id) + " is the background");
  };
  for (const auto& [l, r] : t.lr_pairs) {
    check_part_id(l, "lr pair");
    check_part_id(r, "lr pair");
  }

  std::set<std::string> group_names;
  for (const auto& g : t.joint_groups) {
    if (!group_names.insert(g.name).second)
      fail("duplicate joint group name \"" + g.name + "\"");
    if (g.members.empty()) fail("empty joint group \"" + g.name + "\"");
    for (int id : g.members) check_part_id(id, "joint group \"" + g.name + "\"");
  }

  // Side groups must be pairwise disjoint.
  static const std::array<const char*, 6> kSideGroups = {"RA", "LA", "RL", "LL", "RS", "LS"};
  std::set<int> side_seen;
  for (const char* name : kSideGroups) {
    const auto* g = t.find_group(name);
    if (!g) continue;
    for (int id : g->members) {
      if (!side_seen.insert(id).second)
        fail("class " + std::to_string(id) + " appears in more than one side group");
    }
  }

  // Notes: per-class group membership counts.
  std::vector<int> membership(static_cast<std::size_t>(std::max(c, 1)), 0);
  for (const auto& g : t.joint_groups)
    for (int id : g.members)
      if (id >= 0 && id < c) ++membership[static_cast<std::size_t>(id)];
  for (const auto& [id, name] : t.classes) {
    if (id == t.background_id || id < 0 || id >= c) continue;
    if (membership[static_cast<std::size_t>(id)] == 0)
      rep.notes.push_back("class " + std::to_string(id) + " (" + name +
                          ") is assigned to no joint group");
    else if (membership[static_cast<std::size_t>(id)] > 1)
      rep.notes.push_back("class " + std::to_string(id) + " (" + name +
                          ") is a member of multiple joint groups");
  }
  return rep;
}

// Pixel is set iff its label belongs to the named group's member set.
inline BinaryMask merge_group_mask(const LabelMap& m, const PartTaxonomy& t,
                                   std::string_view joint_name) {
  const auto* g = t.find_group(joint_name);
  if (!g)
    throw std::invalid_argument("merge_group_mask: unknown joint group \"" +
                                std::string(joint_name) + "\"");
  std::array<std::uint8_t, 256> member{};
  for (int id : g->members) member[static_cast<std::size_t>(id)] = 1;

  const int c = t.num_classes();
  BinaryMask out(m.height, m.width);
  for (int r = 0; r < m.height; ++r)
    for (int col = 0; col < m.width; ++col) {
      const std::uint8_t v = m.at(r, col);
      if (v != kIgnoreLabel && v >= c)
        throw std::invalid_argument("merge_group_mask: label " + std::to_string(v) +
                                    " at (" + std::to_string(r) + "," + std::to_string(col) +
                                    ") out of range for " + std::to_string(c) + " classes");
      out.at(r, col) = member[v];
    }
  return out;
}

// ---------------------------------------------------------------------------
// Taxonomy config file: line-oriented, sections `classes`, `pairs`, `groups`.

inline PartTaxonomy load_taxonomy(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open taxonomy file: " + path);
  PartTaxonomy t;
  t.background_id = -1;
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ss(line);
    std::string first;
    if (!(ss >> first)) continue;
    if (first == "classes" || first == "pairs" || first == "groups") {
      section = first;
      continue;
    }
    const std::string where = path + ":" + std::to_string(lineno);
    if (section == "classes") {
      int id;
      std::string name;
      try {
        id = std::stoi(first);
      } catch (...) {
        throw std::runtime_error(where + ": bad class id \"" + first + "\"");
      }
      if (!(ss >> name)) throw std::runtime_error(where + ": class line needs `id name`");
      t.classes.emplace_back(id, name);
      if (name == "background") {
        if (t.background_id >= 0)
          throw std::runtime_error(where + ": more than one background class");
        t.background_id = id;
      }
    } else if (section == "pairs") {
      int l, r;
      try {
        l = std::stoi(first);
        std::string second;
        if (!(ss >> second)) throw std::runtime_error("");
        r = std::stoi(second);
      } catch (...) {
        throw std::runtime_error(where + ": pair line needs `left_id right_id`");
      }
      t.lr_pairs.emplace_back(l, r);
    } else if (section == "groups") {
      PartTaxonomy::JointGroup g;
      g.name = first;
      int id;
      while (ss >> id) g.members.push_back(id);
      t.joint_groups.push_back(std::move(g));
    } else {
      throw std::runtime_error(where + ": content before any section header");
    }
  }
  if (t.background_id < 0)
    throw std::runtime_error(path + ": no class named \"background\"");
  return t;
}

inline void save_taxonomy(const PartTaxonomy& t, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write taxonomy file: " + path);
  out << "classes\n";
  for (const auto& [id, name] : t.classes) out << id << " " << name << "\n";
  out << "pairs\n";
  for (const auto& [l, r] : t.lr_pairs) out << l << " " << r << "\n";
  out << "groups\n";
  for (const auto& g : t.joint_groups) {
    out << g.name;
    for (int id : g.members) out << " " << id;
    out << "\n";
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace hparse
