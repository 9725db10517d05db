#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "lodfm/dataset.hpp"
#include "lodfm/errors.hpp"
#include "lodfm/rng.hpp"
#include "lodfm/util.hpp"

namespace lodfm {

struct RatingRecord {
  std::string user;
  std::string item;
  double rating;
  std::int64_t timestamp;  // parsed but unused downstream; the split is not temporal
};

namespace detail {
inline std::vector<std::string> split_rating_line(const std::string& line) {
  if (line.find("::") != std::string::npos) {
    std::vector<std::string> fields;
    std::size_t start = 0, pos;
    while ((pos = line.find("::", start)) != std::string::npos) {
      fields.push_back(line.substr(start, pos - start));
      start = pos + 2;
    }
    fields.push_back(line.substr(start));
    return fields;
  }
  return split(line, '\t');
}

inline double parse_rating(const std::string& s) {
  std::size_t consumed = 0;
  double value = std::stod(s, &consumed);
  if (consumed != s.size()) throw std::invalid_argument(s);
  return value;
}
}  // namespace detail

// Parses the MovieLens `user::item::rating::timestamp` record format; lines
// may equivalently be tab-separated. Malformed lines are rejected with their
// line number.
inline std::vector<RatingRecord> load_ratings(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read ratings file " + path.string());
  std::vector<RatingRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const std::vector<std::string> fields = detail::split_rating_line(line);
    if (fields.size() != 4)
      throw ParseError(path.string() + ":" + std::to_string(line_no) +
                       ": expected user::item::rating::timestamp");
    RatingRecord rec;
    rec.user = fields[0];
    rec.item = fields[1];
    try {
      rec.rating = detail::parse_rating(fields[2]);
    } catch (const std::exception&) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) +
                       ": bad rating '" + fields[2] + "'");
    }
    try {
      rec.timestamp = std::stoll(fields[3]);
    } catch (const std::exception&) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) +
                       ": bad timestamp '" + fields[3] + "'");
    }
    records.push_back(std::move(rec));
  }
  return records;
}

// Two-column TSV `item_id \t dbpedia_uri`.
inline std::map<std::string, std::string> load_item_mapping(
    const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read mapping file " + path.string());
  std::map<std::string, std::string> mapping;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const std::vector<std::string> fields = split(line, '\t');
    if (fields.size() < 2)
      throw ParseError(path.string() + ":" + std::to_string(line_no) +
                       ": expected item_id<TAB>uri");
    mapping[fields[0]] = fields[1];
  }
  return mapping;
}

// One URI per line; blank lines and '#' comments skipped.
inline std::vector<std::string> load_item_list(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read item list " + path.string());
  std::vector<std::string> items;
  std::string line;
  while (std::getline(is, line)) {
    const std::string uri = trim(line);
    if (uri.empty() || uri[0] == '#') continue;
    items.push_back(uri);
  }
  return items;
}

struct DatasetStats {
  std::size_t users = 0;
  std::size_t items = 0;
  std::size_t ratings = 0;
  double avg_ratings_per_user = 0.0;
  double sparsity = 0.0;      // 1 - ratings / (users * items)
  double positive_pct = 0.0;  // percentage of ratings > 3
};

// Keeps only items present in the DBpedia mapping, binarizes at rating > 3
// and computes the dataset statistics over what remains. Users left without
// any mapped rating drop out.
inline std::pair<InteractionDataset, DatasetStats> binarize_and_stats(
    const std::vector<RatingRecord>& records,
    const std::map<std::string, std::string>& mapping) {
  if (mapping.empty()) throw DegenerateInputError("item mapping is empty");
  InteractionDataset data;
  std::size_t kept = 0, positive = 0;
  for (const RatingRecord& rec : records) {
    if (!mapping.count(rec.item)) continue;
    const bool pos = rec.rating > 3.0;
    data.add(rec.user, rec.item, pos);
    ++kept;
    if (pos) ++positive;
  }
  if (kept == 0) throw DegenerateInputError("no rating matched the item mapping");
  DatasetStats stats;
  stats.users = data.user_count();
  stats.items = data.item_count();
  stats.ratings = kept;
  stats.avg_ratings_per_user =
      static_cast<double>(kept) / static_cast<double>(stats.users);
  stats.sparsity = 1.0 - static_cast<double>(kept) /
                             (static_cast<double>(stats.users) *
                              static_cast<double>(stats.items));
  stats.positive_pct =
      100.0 * static_cast<double>(positive) / static_cast<double>(kept);
  return {std::move(data), stats};
}

// Identity mapping for datasets that need no DBpedia restriction.
inline std::map<std::string, std::string> identity_mapping(
    const std::vector<RatingRecord>& records) {
  std::map<std::string, std::string> mapping;
  for (const RatingRecord& rec : records) mapping[rec.item] = rec.item;
  return mapping;
}

// Stratified 80/20 split: each user's interactions are shuffled under the
// seed and test_fraction of them labeled test. Users below min_interactions
// keep everything in train so they never vanish from the training side.
inline void split_train_test(InteractionDataset& data, std::uint64_t seed,
                             double test_fraction = 0.2,
                             std::size_t min_interactions = 5) {
  if (!(test_fraction > 0.0) || test_fraction >= 1.0)
    throw StructuralError("test fraction must be in (0,1)");
  Rng rng(derive_seed(seed, 7));
  for (const std::string& user : data.users()) {
    std::vector<std::string> items;
    for (const auto& [item, fb] : data.interactions(user)) items.push_back(item);
    std::sort(items.begin(), items.end());
    for (const std::string& item : items)
      data.set_partition(user, item, Partition::train);
    if (items.size() < min_interactions) continue;
    rng.shuffle(items);
    const std::size_t n_test = static_cast<std::size_t>(
        std::floor(static_cast<double>(items.size()) * test_fraction));
    for (std::size_t i = 0; i < n_test; ++i)
      data.set_partition(user, items[i], Partition::test);
  }
}

}  // namespace lodfm
