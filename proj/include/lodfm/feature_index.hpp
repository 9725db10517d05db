#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "lodfm/errors.hpp"
#include "lodfm/knowledge.hpp"
#include "lodfm/sparse_vector.hpp"
#include "lodfm/util.hpp"

namespace lodfm {

/// Which LOD feature sets participate in the model input, besides the always
/// present user/item one-hot blocks.
struct FeatureConfig {
  bool po = false;
  bool sp = false;
  bool pr = false;

  bool any() const { return po || sp || pr; }
  bool operator==(const FeatureConfig&) const = default;

  // Parses "po,sp,pr" style lists; empty string means no LOD features.
  static FeatureConfig parse(const std::string& csv) {
    FeatureConfig c;
    if (trim(csv).empty()) return c;
    for (const std::string& raw : split(csv, ',')) {
      std::string s = lower(trim(raw));
      if (s == "po")
        c.po = true;
      else if (s == "sp")
        c.sp = true;
      else if (s == "pr")
        c.pr = true;
      else
        throw StructuralError("unknown feature set '" + s +
                              "' (expected po, sp or pr)");
    }
    return c;
  }

  std::string to_string() const {
    std::string out;
    auto add = [&](const char* name) {
      if (!out.empty()) out += ',';
      out += name;
    };
    if (po) add("po");
    if (sp) add("sp");
    if (pr) add("pr");
    return out;
  }
};

/// Global mapping from users, items, property-object pairs, subject-property
/// pairs and the PageRank column to contiguous feature indices. Blocks are laid
/// out in that order with no gaps; inside a block, keys are sorted
/// lexicographically so the same inputs always produce the same index.
class FeatureIndex {
 public:
  static FeatureIndex build(const std::vector<std::string>& users,
                            const std::vector<std::string>& items,
                            const std::map<std::string, ItemKnowledge>& knowledge,
                            FeatureConfig config) {
    FeatureIndex fi;
    fi.config_ = config;

    std::vector<std::string> u = users;
    std::sort(u.begin(), u.end());
    if (std::adjacent_find(u.begin(), u.end()) != u.end())
      throw StructuralError("duplicate user id in feature index input");
    std::vector<std::string> it = items;
    std::sort(it.begin(), it.end());
    if (std::adjacent_find(it.begin(), it.end()) != it.end())
      throw StructuralError("duplicate item id in feature index input");

    std::size_t next = 0;
    for (const std::string& id : u) fi.users_.emplace(id, next++);
    for (const std::string& id : it) fi.items_.emplace(id, next++);

    if (config.po) {
      std::set<UriPair> pairs;
      for (const std::string& id : it) {
        auto k = knowledge.find(id);
        if (k == knowledge.end()) continue;
        pairs.insert(k->second.po.begin(), k->second.po.end());
      }
      for (const UriPair& p : pairs) fi.po_.emplace(p, next++);
    }
    if (config.sp) {
      std::set<UriPair> pairs;
      for (const std::string& id : it) {
        auto k = knowledge.find(id);
        if (k == knowledge.end()) continue;
        pairs.insert(k->second.sp.begin(), k->second.sp.end());
      }
      for (const UriPair& p : pairs) fi.sp_.emplace(p, next++);
    }
    if (config.pr) fi.pr_column_ = next++;

    fi.dim_ = next;
    return fi;
  }

  std::size_t dim() const { return dim_; }
  FeatureConfig config() const { return config_; }

  std::size_t user_count() const { return users_.size(); }
  std::size_t item_count() const { return items_.size(); }
  std::size_t po_count() const { return po_.size(); }
  std::size_t sp_count() const { return sp_.size(); }

  std::size_t user_index(const std::string& user) const {
    auto it = users_.find(user);
    if (it == users_.end()) throw LookupError("unknown user '" + user + "'");
    return it->second;
  }
  std::size_t item_index(const std::string& item) const {
    auto it = items_.find(item);
    if (it == items_.end()) throw LookupError("unknown item '" + item + "'");
    return it->second;
  }
  std::optional<std::size_t> po_index(const UriPair& pair) const {
    auto it = po_.find(pair);
    if (it == po_.end()) return std::nullopt;
    return it->second;
  }
  std::optional<std::size_t> sp_index(const UriPair& pair) const {
    auto it = sp_.find(pair);
    if (it == sp_.end()) return std::nullopt;
    return it->second;
  }
  std::optional<std::size_t> pr_index() const { return pr_column_; }

  const std::map<std::string, std::size_t>& user_block() const { return users_; }
  const std::map<std::string, std::size_t>& item_block() const { return items_; }
  const std::map<UriPair, std::size_t>& po_block() const { return po_; }
  const std::map<UriPair, std::size_t>& sp_block() const { return sp_; }

  // One line per feature: `<index>\t<block>\t<key>`. Pair keys join their two
  // URIs with a single space (URIs are whitespace-free by the fetch-side
  // validation). A leading comment line records the enabled feature sets so
  // an enabled-but-empty block survives the round trip.
  void save(std::ostream& os) const {
    os << "# lodfm-feature-index features=" << config_.to_string() << "\n";
    auto check = [](const std::string& key) {
      if (key.find_first_of(" \t\n\r") != std::string::npos)
        throw StructuralError("feature key contains whitespace: '" + key + "'");
    };
    for (const auto& [id, ix] : users_) {
      check(id);
      os << ix << "\tuser\t" << id << "\n";
    }
    for (const auto& [id, ix] : items_) {
      check(id);
      os << ix << "\titem\t" << id << "\n";
    }
    for (const auto& [pair, ix] : po_) {
      check(pair.first);
      check(pair.second);
      os << ix << "\tpo\t" << pair.first << ' ' << pair.second << "\n";
    }
    for (const auto& [pair, ix] : sp_) {
      check(pair.first);
      check(pair.second);
      os << ix << "\tsp\t" << pair.first << ' ' << pair.second << "\n";
    }
    if (pr_column_) os << *pr_column_ << "\tpr\tpagerank\n";
  }

  void save_file(const std::filesystem::path& path) const {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write feature index to " + path.string());
    save(os);
  }

  static FeatureIndex load(std::istream& is) {
    FeatureIndex fi;
    std::string line;
    std::size_t line_no = 0;
    std::size_t max_index = 0;
    bool saw_any = false;
    while (std::getline(is, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      if (line[0] == '#') {
        auto pos = line.find("features=");
        if (pos != std::string::npos)
          fi.config_ = FeatureConfig::parse(line.substr(pos + 9));
        continue;
      }
      std::vector<std::string> cols = split(line, '\t');
      if (cols.size() != 3)
        throw ParseError("feature index line " + std::to_string(line_no) +
                         ": expected 3 tab-separated columns");
      std::size_t ix = 0;
      try {
        ix = static_cast<std::size_t>(std::stoull(cols[0]));
      } catch (const std::exception&) {
        throw ParseError("feature index line " + std::to_string(line_no) +
                         ": bad index '" + cols[0] + "'");
      }
      const std::string& block = cols[1];
      const std::string& key = cols[2];
      if (block == "user") {
        fi.users_.emplace(key, ix);
      } else if (block == "item") {
        fi.items_.emplace(key, ix);
      } else if (block == "po" || block == "sp") {
        std::size_t sep = key.find(' ');
        if (sep == std::string::npos)
          throw ParseError("feature index line " + std::to_string(line_no) +
                           ": pair key lacks a separator");
        UriPair pair{key.substr(0, sep), key.substr(sep + 1)};
        if (block == "po")
          fi.po_.emplace(pair, ix);
        else
          fi.sp_.emplace(pair, ix);
      } else if (block == "pr") {
        fi.pr_column_ = ix;
      } else {
        throw ParseError("feature index line " + std::to_string(line_no) +
                         ": unknown block '" + block + "'");
      }
      saw_any = true;
      max_index = std::max(max_index, ix);
    }
    fi.dim_ = saw_any ? max_index + 1 : 0;
    if (!fi.po_.empty()) fi.config_.po = true;
    if (!fi.sp_.empty()) fi.config_.sp = true;
    if (fi.pr_column_) fi.config_.pr = true;
    return fi;
  }

  static FeatureIndex load_file(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot read feature index from " + path.string());
    return load(is);
  }

  std::string serialized() const {
    std::ostringstream os;
    save(os);
    return os.str();
  }

  std::string fingerprint() const { return fingerprint_hex(serialized()); }

 private:
  std::map<std::string, std::size_t> users_;
  std::map<std::string, std::size_t> items_;
  std::map<UriPair, std::size_t> po_;
  std::map<UriPair, std::size_t> sp_;
  std::optional<std::size_t> pr_column_;
  FeatureConfig config_;
  std::size_t dim_ = 0;
};

/// Builds the model input for one (user, item) pair: value 1 at the user and
/// item indices, 1/|PO_i| at the item's property-object indices, 1/|SP_i| at
/// its subject-property indices and the normalized PageRank score in the PR
/// column. Pairs unseen at index-build time are skipped; zero values are never
/// stored.
inline SparseVector assemble_example(const std::string& user,
                                     const std::string& item,
                                     const FeatureIndex& index,
                                     const ItemKnowledge& knowledge) {
  std::vector<SparseVector::Entry> entries;
  entries.push_back({index.user_index(user), 1.0});
  entries.push_back({index.item_index(item), 1.0});
  const FeatureConfig cfg = index.config();
  if (cfg.po && !knowledge.po.empty()) {
    const double value = 1.0 / static_cast<double>(knowledge.po.size());
    for (const UriPair& pair : knowledge.po)
      if (auto ix = index.po_index(pair)) entries.push_back({*ix, value});
  }
  if (cfg.sp && !knowledge.sp.empty()) {
    const double value = 1.0 / static_cast<double>(knowledge.sp.size());
    for (const UriPair& pair : knowledge.sp)
      if (auto ix = index.sp_index(pair)) entries.push_back({*ix, value});
  }
  if (cfg.pr && knowledge.pagerank_norm && *knowledge.pagerank_norm != 0.0)
    entries.push_back({*index.pr_index(), *knowledge.pagerank_norm});
  return SparseVector::from_entries(std::move(entries));
}

/// Assembly cache for the hot paths: the per-item part of an example (item
/// one-hot plus LOD features) never changes, so it is materialized once per
/// item and prepended with the user entry on demand. User indices precede all
/// other blocks, which keeps the concatenation sorted.
class ExampleAssembler {
 public:
  ExampleAssembler(FeatureIndex index,
                   const std::map<std::string, ItemKnowledge>& knowledge)
      : index_(std::move(index)) {
    static const ItemKnowledge kEmpty{};
    for (const auto& [item, item_ix] : index_.item_block()) {
      auto k = knowledge.find(item);
      const ItemKnowledge& ik = k == knowledge.end() ? kEmpty : k->second;
      std::vector<SparseVector::Entry> entries;
      entries.push_back({item_ix, 1.0});
      const FeatureConfig cfg = index_.config();
      if (cfg.po && !ik.po.empty()) {
        const double value = 1.0 / static_cast<double>(ik.po.size());
        for (const UriPair& pair : ik.po)
          if (auto ix = index_.po_index(pair)) entries.push_back({*ix, value});
      }
      if (cfg.sp && !ik.sp.empty()) {
        const double value = 1.0 / static_cast<double>(ik.sp.size());
        for (const UriPair& pair : ik.sp)
          if (auto ix = index_.sp_index(pair)) entries.push_back({*ix, value});
      }
      if (cfg.pr && ik.pagerank_norm && *ik.pagerank_norm != 0.0)
        entries.push_back({*index_.pr_index(), *ik.pagerank_norm});
      item_suffix_.emplace(item, SparseVector::from_entries(std::move(entries)));
    }
  }

  const FeatureIndex& index() const { return index_; }

  SparseVector assemble(const std::string& user, const std::string& item) const {
    auto it = item_suffix_.find(item);
    if (it == item_suffix_.end()) throw LookupError("unknown item '" + item + "'");
    SparseVector v;
    v.append(index_.user_index(user), 1.0);
    for (const SparseVector::Entry& e : it->second.entries())
      v.append(e.index, e.value);
    return v;
  }

 private:
  FeatureIndex index_;
  std::map<std::string, SparseVector> item_suffix_;
};

}  // namespace lodfm
