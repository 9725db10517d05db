#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "lodfm/bpr.hpp"
#include "lodfm/dataset.hpp"
#include "lodfm/errors.hpp"
#include "lodfm/rng.hpp"

namespace lodfm {

// Popularity baseline: score(item) = number of positive training interactions.
// Every catalog item gets a score, so the induced ranking is the same for all
// users (ties resolved elsewhere by ascending item id).
inline std::map<std::string, double> poprank_scores(const InteractionDataset& data) {
  std::map<std::string, double> scores;
  for (const auto& [item, count] : data.train_positive_counts())
    scores[item] = static_cast<double>(count);
  return scores;
}

/// Cosine similarities between binary positive-interaction item columns, with
/// per-item neighbor lists truncated to the top k (descending similarity,
/// ties by ascending item id). Only co-rated pairs have nonzero similarity, so
/// only those are stored.
class ItemSimilarityMatrix {
 public:
  static ItemSimilarityMatrix build(const InteractionDataset& data,
                                    std::size_t k = 80) {
    ItemSimilarityMatrix sim;
    sim.k_ = k;
    const std::vector<std::string> items = data.items();
    std::map<std::string, std::size_t> item_ix;
    for (std::size_t i = 0; i < items.size(); ++i) item_ix[items[i]] = i;

    std::vector<std::size_t> column_norms(items.size(), 0);  // |U_i|
    std::vector<std::map<std::size_t, std::size_t>> co(items.size());
    for (const std::string& user : data.users()) {
      std::vector<std::size_t> rated;
      for (const std::string& item : data.items_of(user, true, Partition::train))
        rated.push_back(item_ix.at(item));
      std::sort(rated.begin(), rated.end());
      for (std::size_t a = 0; a < rated.size(); ++a) {
        ++column_norms[rated[a]];
        for (std::size_t b = a + 1; b < rated.size(); ++b)
          ++co[rated[a]][rated[b]];
      }
    }

    std::vector<std::vector<std::pair<std::string, double>>> neighbors(items.size());
    auto record = [&](std::size_t i, std::size_t j, double s) {
      neighbors[i].emplace_back(items[j], s);
      neighbors[j].emplace_back(items[i], s);
    };
    for (std::size_t i = 0; i < items.size(); ++i) {
      for (const auto& [j, joint] : co[i]) {
        const double denom = std::sqrt(static_cast<double>(column_norms[i]) *
                                       static_cast<double>(column_norms[j]));
        if (denom > 0.0) record(i, j, static_cast<double>(joint) / denom);
      }
    }
    for (std::size_t i = 0; i < items.size(); ++i) {
      auto& list = neighbors[i];
      std::sort(list.begin(), list.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
      });
      if (list.size() > k) list.resize(k);
      sim.neighbors_.emplace(items[i], std::move(list));
    }
    return sim;
  }

  std::size_t k() const { return k_; }

  // Top-k neighbor list of an item; empty for unknown or isolated items.
  const std::vector<std::pair<std::string, double>>& neighbors(
      const std::string& item) const {
    static const std::vector<std::pair<std::string, double>> kEmpty;
    auto it = neighbors_.find(item);
    return it == neighbors_.end() ? kEmpty : it->second;
  }

  // Similarity as retained in the truncated neighbor list; 0 when the pair
  // fell outside the top k or never co-occurred.
  double similarity(const std::string& a, const std::string& b) const {
    for (const auto& [other, s] : neighbors(a))
      if (other == b) return s;
    return 0.0;
  }

 private:
  std::map<std::string, std::vector<std::pair<std::string, double>>> neighbors_;
  std::size_t k_ = 80;
};

// Item-kNN score: sum of similarities between the target item and the user's
// positive training items, restricted to the target's top-k neighbor list.
// Unknown (cold) items score 0.
inline double knn_item_score(const InteractionDataset& data,
                             const ItemSimilarityMatrix& sim,
                             const std::string& user, const std::string& item) {
  std::set<std::string> rated;
  for (const std::string& it : data.items_of(user, true, Partition::train))
    rated.insert(it);
  double score = 0.0;
  for (const auto& [neighbor, s] : sim.neighbors(item))
    if (rated.count(neighbor)) score += s;
  return score;
}

struct BprmfHyperparams {
  std::size_t factors = 200;
  double learn_rate = 0.05;
  double l2_reg = 1e-4;
  double init_stddev = 0.01;
  std::size_t epochs = 30;
  std::uint64_t seed = 42;
  // BPRMF conventionally samples negatives from everything the user has not
  // positively rated; explicit mode matches the FM regime instead.
  NegativeMode negatives = NegativeMode::unseen;

  void validate() const {
    if (factors == 0) throw StructuralError("factors must be positive");
    if (!(learn_rate >= 0.0)) throw StructuralError("learn_rate must be non-negative");
    if (l2_reg < 0.0) throw StructuralError("l2_reg must be non-negative");
    if (!(init_stddev > 0.0)) throw StructuralError("init_stddev must be positive");
    if (epochs == 0) throw StructuralError("epochs must be positive");
  }
};

/// Matrix factorization with an item bias: score(u, i) = <p_u, q_i> + b_i.
struct MfModel {
  std::map<std::string, std::size_t> user_ix;
  std::map<std::string, std::size_t> item_ix;
  std::vector<double> user_factors;  // |U| x m
  std::vector<double> item_factors;  // |I| x m
  std::vector<double> item_bias;     // |I|
  std::size_t m = 0;

  double score_ix(std::size_t u, std::size_t i) const {
    double s = item_bias[i];
    for (std::size_t f = 0; f < m; ++f)
      s += user_factors[u * m + f] * item_factors[i * m + f];
    return s;
  }

  double score(const std::string& user, const std::string& item) const {
    auto u = user_ix.find(user);
    auto i = item_ix.find(item);
    if (u == user_ix.end() || i == item_ix.end()) return 0.0;
    return score_ix(u->second, i->second);
  }
};

// Checkpoint: the id maps make the file self-contained, so loading needs no
// companion index.
inline void save_mf(const MfModel& model, std::ostream& os) {
  auto check = [](const std::string& id) {
    if (id.find_first_of(" \t\n\r") != std::string::npos)
      throw StructuralError("id contains whitespace: '" + id + "'");
  };
  for (const auto& [id, ix] : model.user_ix) check(id);
  for (const auto& [id, ix] : model.item_ix) check(id);
  os << "lodfm-bprmf-checkpoint v1\n";
  os << "m " << model.m << "\n";
  os << "users " << model.user_ix.size() << "\nitems " << model.item_ix.size() << "\n";
  for (const auto& [id, ix] : model.user_ix) os << "u " << ix << ' ' << id << "\n";
  for (const auto& [id, ix] : model.item_ix) os << "i " << ix << ' ' << id << "\n";
  os << "uf";
  for (double x : model.user_factors) os << ' ' << detail::double_to_hex(x);
  os << "\nif";
  for (double x : model.item_factors) os << ' ' << detail::double_to_hex(x);
  os << "\nib";
  for (double x : model.item_bias) os << ' ' << detail::double_to_hex(x);
  os << "\n";
}

inline void save_mf_file(const MfModel& model, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write checkpoint to " + path.string());
  save_mf(model, os);
}

inline MfModel load_mf(std::istream& is) {
  std::string header;
  std::getline(is, header);
  if (header != "lodfm-bprmf-checkpoint v1")
    throw ParseError("not a bprmf checkpoint (bad header)");
  MfModel model;
  std::string tag, word;
  std::size_t n_users = 0, n_items = 0;
  is >> tag >> model.m;
  if (tag != "m") throw ParseError("bprmf checkpoint: expected m line");
  is >> tag >> n_users;
  if (tag != "users") throw ParseError("bprmf checkpoint: expected users line");
  is >> tag >> n_items;
  if (tag != "items") throw ParseError("bprmf checkpoint: expected items line");
  for (std::size_t k = 0; k < n_users; ++k) {
    std::size_t ix;
    is >> tag >> ix >> word;
    if (tag != "u") throw ParseError("bprmf checkpoint: expected user row");
    model.user_ix[word] = ix;
  }
  for (std::size_t k = 0; k < n_items; ++k) {
    std::size_t ix;
    is >> tag >> ix >> word;
    if (tag != "i") throw ParseError("bprmf checkpoint: expected item row");
    model.item_ix[word] = ix;
  }
  auto read_block = [&](const char* name, std::vector<double>& out, std::size_t n) {
    is >> tag;
    if (tag != name) throw ParseError("bprmf checkpoint: expected " + std::string(name));
    out.resize(n);
    for (double& x : out) {
      if (!(is >> word)) throw ParseError("bprmf checkpoint: truncated block");
      x = detail::double_from_hex(word);
    }
  };
  read_block("uf", model.user_factors, n_users * model.m);
  read_block("if", model.item_factors, n_items * model.m);
  read_block("ib", model.item_bias, n_items);
  return model;
}

inline MfModel load_mf_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read checkpoint from " + path.string());
  return load_mf(is);
}

// BPR-optimized matrix factorization, sharing the pair sampling contract of
// the FM trainer: one shuffled pass over (user, positive) pairs per epoch with
// one sampled negative each. Runs a fixed number of epochs; deterministic
// under the seed.
inline MfModel bprmf_train(const InteractionDataset& data,
                           const BprmfHyperparams& hp) {
  hp.validate();
  MfModel model;
  model.m = hp.factors;
  {
    std::size_t next = 0;
    for (const std::string& user : data.users()) model.user_ix[user] = next++;
    next = 0;
    for (const std::string& item : data.items()) model.item_ix[item] = next++;
  }
  Rng init_rng(hp.seed);
  model.user_factors.resize(model.user_ix.size() * hp.factors);
  model.item_factors.resize(model.item_ix.size() * hp.factors);
  model.item_bias.assign(model.item_ix.size(), 0.0);
  for (double& x : model.user_factors) x = init_rng.normal(0.0, hp.init_stddev);
  for (double& x : model.item_factors) x = init_rng.normal(0.0, hp.init_stddev);

  PairPool pool = PairPool::from_dataset(data, Partition::train, hp.negatives);
  std::vector<std::pair<std::size_t, std::size_t>> base_order;
  for (std::size_t u = 0; u < pool.user_count(); ++u) {
    if (!pool.has_negatives(u)) continue;
    for (std::size_t i = 0; i < pool.slot(u).positives.size(); ++i)
      base_order.emplace_back(u, i);
  }
  if (base_order.empty())
    throw DegenerateInputError("no usable (positive, negative) training pairs");

  const double lr = hp.learn_rate;
  const double l2 = hp.l2_reg;
  Rng rng(derive_seed(hp.seed, 1));
  std::vector<double> pu_old(hp.factors);
  for (std::size_t epoch = 0; epoch < hp.epochs; ++epoch) {
    auto order = base_order;
    rng.shuffle(order);
    for (const auto& [u, ipos] : order) {
      const auto& slot = pool.slot(u);
      const std::string& neg = pool.sample_negative(u, rng);
      const std::size_t uu = model.user_ix.at(slot.user);
      const std::size_t ii = model.item_ix.at(slot.positives[ipos]);
      const std::size_t jj = model.item_ix.at(neg);
      const double margin = model.score_ix(uu, ii) - model.score_ix(uu, jj);
      const double g = -(1.0 - sigmoid(margin));
      double* pu = &model.user_factors[uu * hp.factors];
      double* qi = &model.item_factors[ii * hp.factors];
      double* qj = &model.item_factors[jj * hp.factors];
      std::copy(pu, pu + hp.factors, pu_old.begin());
      for (std::size_t f = 0; f < hp.factors; ++f) {
        pu[f] -= lr * (g * (qi[f] - qj[f]) + l2 * pu[f]);
        qi[f] -= lr * (g * pu_old[f] + l2 * qi[f]);
        qj[f] -= lr * (-g * pu_old[f] + l2 * qj[f]);
      }
      model.item_bias[ii] -= lr * (g + l2 * model.item_bias[ii]);
      model.item_bias[jj] -= lr * (-g + l2 * model.item_bias[jj]);
    }
  }
  return model;
}

}  // namespace lodfm
