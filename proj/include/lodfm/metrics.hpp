#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "lodfm/dataset.hpp"
#include "lodfm/errors.hpp"
#include "lodfm/rng.hpp"
#include "lodfm/util.hpp"

namespace lodfm {

/// One user's recommendation list in descending score order, with a binary
/// relevance flag per position (true iff the item is a positive test item).
struct RankedList {
  std::string user;
  std::vector<std::string> items;
  std::vector<std::uint8_t> relevant;

  std::size_t relevant_total() const {
    std::size_t n = 0;
    for (std::uint8_t r : relevant) n += r;
    return n;
  }
};

// Relevant among the top n, over n. Lists shorter than n keep denominator n:
// missing slots count as misses.
inline double precision_at(const RankedList& list, std::size_t n) {
  if (n < 1) throw StructuralError("precision_at requires n >= 1");
  std::size_t hits = 0;
  for (std::size_t k = 0; k < std::min(n, list.items.size()); ++k)
    hits += list.relevant[k];
  return static_cast<double>(hits) / static_cast<double>(n);
}

// Relevant among the top n, over the user's total relevant count.
inline double recall_at(const RankedList& list, std::size_t n) {
  if (n < 1) throw StructuralError("recall_at requires n >= 1");
  const std::size_t total = list.relevant_total();
  if (total == 0)
    throw DegenerateInputError("recall undefined for a user with no relevant items");
  std::size_t hits = 0;
  for (std::size_t k = 0; k < std::min(n, list.items.size()); ++k)
    hits += list.relevant[k];
  return static_cast<double>(hits) / static_cast<double>(total);
}

// DCG@n = sum_k (2^r_k - 1) / log2(1 + k) over the top n with binary r,
// normalized by the ideal ordering of the user's relevant items.
inline double ndcg_at(const RankedList& list, std::size_t n) {
  if (n < 1) throw StructuralError("ndcg_at requires n >= 1");
  const std::size_t total = list.relevant_total();
  if (total == 0)
    throw DegenerateInputError("nDCG undefined for a user with no relevant items");
  double dcg = 0.0;
  for (std::size_t k = 1; k <= std::min(n, list.items.size()); ++k)
    if (list.relevant[k - 1]) dcg += 1.0 / std::log2(1.0 + static_cast<double>(k));
  double idcg = 0.0;
  for (std::size_t k = 1; k <= std::min(n, total); ++k)
    idcg += 1.0 / std::log2(1.0 + static_cast<double>(k));
  return dcg / idcg;
}

// 1 / rank of the first relevant item; 0 when no relevant item appears
// anywhere in the list (such users are excluded by the aggregators).
inline double reciprocal_rank(const RankedList& list) {
  for (std::size_t k = 0; k < list.items.size(); ++k)
    if (list.relevant[k]) return 1.0 / static_cast<double>(k + 1);
  return 0.0;
}

// AP = sum_n P@n * like(n) / (user's relevant count), scanning the whole list.
inline double average_precision(const RankedList& list) {
  const std::size_t total = list.relevant_total();
  if (total == 0)
    throw DegenerateInputError("AP undefined for a user with no relevant items");
  double ap = 0.0;
  std::size_t hits = 0;
  for (std::size_t k = 1; k <= list.items.size(); ++k) {
    if (list.relevant[k - 1]) {
      ++hits;
      ap += static_cast<double>(hits) / static_cast<double>(k);
    }
  }
  return ap / static_cast<double>(total);
}

// Mean over users of the first-relevant reciprocal rank; users whose lists
// contain no relevant item are excluded rather than scored 0.
inline double mrr(const std::vector<RankedList>& lists) {
  double total = 0.0;
  std::size_t n = 0;
  for (const RankedList& list : lists) {
    if (list.relevant_total() == 0) continue;
    total += reciprocal_rank(list);
    ++n;
  }
  if (n == 0) throw DegenerateInputError("MRR over zero usable users");
  return total / static_cast<double>(n);
}

inline double mean_average_precision(const std::vector<RankedList>& lists) {
  double total = 0.0;
  std::size_t n = 0;
  for (const RankedList& list : lists) {
    if (list.relevant_total() == 0) continue;
    total += average_precision(list);
    ++n;
  }
  if (n == 0) throw DegenerateInputError("MAP over zero usable users");
  return total / static_cast<double>(n);
}

enum class CandidateMode { all_unrated, test_only };

inline const char* candidate_mode_name(CandidateMode mode) {
  return mode == CandidateMode::all_unrated ? "all" : "test-only";
}

inline CandidateMode parse_candidate_mode(const std::string& s) {
  std::string v = lower(trim(s));
  if (v == "all") return CandidateMode::all_unrated;
  if (v == "test-only" || v == "test_only") return CandidateMode::test_only;
  throw StructuralError("unknown candidate mode '" + s + "'");
}

using Scorer = std::function<double(const std::string& user, const std::string& item)>;

// Produces one ranked list per test user (users with at least one positive
// test item). Candidates are either every catalog item the user did not touch
// in training, or just the user's own test items. Ties break by ascending
// item id, so rankings are stable regardless of score precision.
inline std::vector<RankedList> rank_users(const InteractionDataset& data,
                                          const Scorer& scorer,
                                          CandidateMode mode = CandidateMode::all_unrated) {
  std::vector<RankedList> lists;
  const std::vector<std::string> catalog = data.items();
  for (const std::string& user : data.users()) {
    std::set<std::string> relevant;
    for (const std::string& item : data.items_of(user, true, Partition::test))
      relevant.insert(item);
    if (relevant.empty()) continue;

    std::vector<std::string> candidates;
    if (mode == CandidateMode::all_unrated) {
      const std::set<std::string> train = data.partition_items(user, Partition::train);
      for (const std::string& item : catalog)
        if (!train.count(item)) candidates.push_back(item);
    } else {
      const std::set<std::string> test = data.partition_items(user, Partition::test);
      candidates.assign(test.begin(), test.end());
    }

    std::vector<std::pair<double, std::string>> scored;
    scored.reserve(candidates.size());
    for (const std::string& item : candidates)
      scored.emplace_back(scorer(user, item), item);
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });

    RankedList list;
    list.user = user;
    list.items.reserve(scored.size());
    list.relevant.reserve(scored.size());
    for (const auto& [score, item] : scored) {
      list.items.push_back(item);
      list.relevant.push_back(relevant.count(item) ? 1 : 0);
    }
    if (list.relevant_total() == 0) continue;  // relevant items not rankable
    lists.push_back(std::move(list));
  }
  return lists;
}

/// Per-user metric values plus their means, keyed by metric name
/// ("P@5", "nDCG@10", "MRR", ...). Users are ordered by id; all models
/// evaluated on the same dataset share the same user vector, which the paired
/// significance test relies on.
struct MetricReport {
  std::string model_id;
  std::string config_fingerprint;
  std::vector<std::string> users;
  std::map<std::string, std::vector<double>> per_user;
  std::map<std::string, double> mean;
};

inline std::vector<std::string> metric_names(const std::vector<std::size_t>& n_list) {
  std::vector<std::string> names{"MRR", "MAP"};
  for (std::size_t n : n_list) {
    names.push_back("nDCG@" + std::to_string(n));
    names.push_back("P@" + std::to_string(n));
    names.push_back("R@" + std::to_string(n));
  }
  return names;
}

inline MetricReport evaluate_rankings(const std::string& model_id,
                                      const std::vector<RankedList>& lists,
                                      const std::vector<std::size_t>& n_list = {1, 5, 10}) {
  if (!std::is_sorted(n_list.begin(), n_list.end()))
    throw StructuralError("cutoff list must be sorted ascending");
  MetricReport report;
  report.model_id = model_id;
  std::vector<const RankedList*> usable;
  for (const RankedList& list : lists)
    if (list.relevant_total() > 0) usable.push_back(&list);
  if (usable.empty()) throw DegenerateInputError("no users with relevant test items");
  std::sort(usable.begin(), usable.end(),
            [](const RankedList* a, const RankedList* b) { return a->user < b->user; });

  for (const RankedList* list : usable) report.users.push_back(list->user);
  auto emit = [&](const std::string& name, auto&& fn) {
    std::vector<double>& values = report.per_user[name];
    values.reserve(usable.size());
    double total = 0.0;
    for (const RankedList* list : usable) {
      const double v = fn(*list);
      values.push_back(v);
      total += v;
    }
    report.mean[name] = total / static_cast<double>(usable.size());
  };

  emit("MRR", [](const RankedList& l) { return reciprocal_rank(l); });
  emit("MAP", [](const RankedList& l) { return average_precision(l); });
  for (std::size_t n : n_list) {
    emit("nDCG@" + std::to_string(n), [n](const RankedList& l) { return ndcg_at(l, n); });
    emit("P@" + std::to_string(n), [n](const RankedList& l) { return precision_at(l, n); });
    emit("R@" + std::to_string(n), [n](const RankedList& l) { return recall_at(l, n); });
  }
  return report;
}

struct BootstrapResult {
  double p_value = 1.0;
  double t_statistic = 0.0;
  bool degenerate = false;  // zero variance in the observed differences
};

// Bootstrapped paired t-test: the observed paired t statistic is compared
// against a null distribution built by resampling the mean-centered
// differences with replacement. Two-sided p = fraction of |t*| >= |t|.
// Deterministic under the seed, and symmetric in (a, b).
inline BootstrapResult bootstrap_paired_ttest(const std::vector<double>& a,
                                              const std::vector<double>& b,
                                              std::size_t resamples,
                                              std::uint64_t seed) {
  if (a.size() != b.size())
    throw DimensionError("paired samples differ in length");
  const std::size_t n = a.size();
  if (n < 2) throw StructuralError("paired t-test needs at least 2 pairs");
  if (resamples < 1000) throw StructuralError("need at least 1000 resamples");

  std::vector<double> diff(n);
  for (std::size_t i = 0; i < n; ++i) diff[i] = a[i] - b[i];
  double mean = 0.0;
  for (double d : diff) mean += d;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double d : diff) var += (d - mean) * (d - mean);
  var /= static_cast<double>(n - 1);
  const double sd = std::sqrt(var);

  BootstrapResult result;
  if (sd == 0.0) {
    result.degenerate = true;
    result.p_value = 1.0;
    result.t_statistic = 0.0;
    return result;
  }
  const double sqrt_n = std::sqrt(static_cast<double>(n));
  result.t_statistic = mean / (sd / sqrt_n);
  const double t_abs = std::abs(result.t_statistic);

  std::vector<double> centered(n);
  for (std::size_t i = 0; i < n; ++i) centered[i] = diff[i] - mean;

  Rng rng(seed);
  std::size_t at_least = 0;
  std::vector<double> sample(n);
  for (std::size_t r = 0; r < resamples; ++r) {
    double s_mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      sample[i] = centered[rng.below(n)];
      s_mean += sample[i];
    }
    s_mean /= static_cast<double>(n);
    double s_var = 0.0;
    for (double x : sample) s_var += (x - s_mean) * (x - s_mean);
    s_var /= static_cast<double>(n - 1);
    double t_star;
    if (s_var == 0.0) {
      t_star = s_mean == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    } else {
      t_star = s_mean / (std::sqrt(s_var) / sqrt_n);
    }
    if (std::abs(t_star) >= t_abs) ++at_least;
  }
  result.p_value = static_cast<double>(at_least) / static_cast<double>(resamples);
  return result;
}

}  // namespace lodfm
