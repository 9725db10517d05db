#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "lodfm/errors.hpp"

namespace lodfm {

enum class Partition { train, validation, test };

inline const char* partition_name(Partition p) {
  switch (p) {
    case Partition::train: return "train";
    case Partition::validation: return "validation";
    case Partition::test: return "test";
  }
  return "?";
}

/// Binarized user-item feedback with one partition label per interaction.
/// Positive and negative sets are disjoint per user by construction; the
/// catalog may also contain items registered without any interaction.
class InteractionDataset {
 public:
  struct Feedback {
    bool positive;
    Partition part;
  };

  void add_user(const std::string& user) { by_user_[user]; }
  void add_item(const std::string& item) { items_.insert(item); }

  void add(const std::string& user, const std::string& item, bool positive,
           Partition part = Partition::train) {
    auto& interactions = by_user_[user];
    if (!interactions.emplace(item, Feedback{positive, part}).second)
      throw StructuralError("duplicate interaction (" + user + ", " + item + ")");
    items_.insert(item);
  }

  bool has(const std::string& user, const std::string& item) const {
    auto u = by_user_.find(user);
    return u != by_user_.end() && u->second.count(item) > 0;
  }

  Partition partition(const std::string& user, const std::string& item) const {
    return feedback(user, item).part;
  }

  bool positive(const std::string& user, const std::string& item) const {
    return feedback(user, item).positive;
  }

  void set_partition(const std::string& user, const std::string& item,
                     Partition part) {
    auto u = by_user_.find(user);
    if (u == by_user_.end()) throw LookupError("unknown user '" + user + "'");
    auto i = u->second.find(item);
    if (i == u->second.end())
      throw LookupError("unknown interaction (" + user + ", " + item + ")");
    i->second.part = part;
  }

  std::vector<std::string> users() const {
    std::vector<std::string> out;
    out.reserve(by_user_.size());
    for (const auto& [user, _] : by_user_) out.push_back(user);
    return out;
  }

  std::vector<std::string> items() const {
    return {items_.begin(), items_.end()};
  }

  std::size_t user_count() const { return by_user_.size(); }
  std::size_t item_count() const { return items_.size(); }

  std::size_t interaction_count() const {
    std::size_t n = 0;
    for (const auto& [_, m] : by_user_) n += m.size();
    return n;
  }

  const std::map<std::string, Feedback>& interactions(const std::string& user) const {
    auto u = by_user_.find(user);
    if (u == by_user_.end()) throw LookupError("unknown user '" + user + "'");
    return u->second;
  }

  // Items of one user filtered by polarity and (optionally) partition.
  std::vector<std::string> items_of(const std::string& user, bool positive) const {
    std::vector<std::string> out;
    for (const auto& [item, fb] : interactions(user))
      if (fb.positive == positive) out.push_back(item);
    return out;
  }
  std::vector<std::string> items_of(const std::string& user, bool positive,
                                    Partition part) const {
    std::vector<std::string> out;
    for (const auto& [item, fb] : interactions(user))
      if (fb.positive == positive && fb.part == part) out.push_back(item);
    return out;
  }

  std::set<std::string> partition_items(const std::string& user,
                                        Partition part) const {
    std::set<std::string> out;
    for (const auto& [item, fb] : interactions(user))
      if (fb.part == part) out.insert(item);
    return out;
  }

  // Positive training interactions per item; items never positively rated in
  // train (or only appearing elsewhere) count 0.
  std::map<std::string, std::size_t> train_positive_counts() const {
    std::map<std::string, std::size_t> counts;
    for (const std::string& item : items_) counts[item] = 0;
    for (const auto& [_, m] : by_user_)
      for (const auto& [item, fb] : m)
        if (fb.positive && fb.part == Partition::train) ++counts[item];
    return counts;
  }

 private:
  const Feedback& feedback(const std::string& user, const std::string& item) const {
    auto u = by_user_.find(user);
    if (u == by_user_.end()) throw LookupError("unknown user '" + user + "'");
    auto i = u->second.find(item);
    if (i == u->second.end())
      throw LookupError("unknown interaction (" + user + ", " + item + ")");
    return i->second;
  }

  std::map<std::string, std::map<std::string, Feedback>> by_user_;
  std::set<std::string> items_;
};

}  // namespace lodfm
