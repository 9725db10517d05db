#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "lodfm/dataset.hpp"
#include "lodfm/errors.hpp"
#include "lodfm/feature_index.hpp"
#include "lodfm/fm.hpp"
#include "lodfm/rng.hpp"

namespace lodfm {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// -log(sigmoid(y_pos - y_neg)) in softplus form: log1p(exp(-|margin|)) plus a
// linear term for negative margins, so large margins never overflow.
inline double bpr_pair_loss(double y_pos, double y_neg) {
  const double margin = y_pos - y_neg;
  if (margin >= 0.0) return std::log1p(std::exp(-margin));
  return -margin + std::log1p(std::exp(margin));
}

enum class NegativeMode { explicit_dislikes, unseen };

/// Per-user positive items and the negative pool the pair loss samples
/// against: either the user's explicit dislikes, or (for the conventional
/// matrix-factorization contract) any catalog item the user has not
/// positively rated, drawn by rejection.
class PairPool {
 public:
  struct UserSlot {
    std::string user;
    std::vector<std::string> positives;  // sorted
    std::vector<std::string> negatives;  // sorted; empty in unseen mode
    std::set<std::string> positive_set;  // for rejection sampling
  };

  static PairPool from_dataset(const InteractionDataset& data,
                               Partition part = Partition::train,
                               NegativeMode mode = NegativeMode::explicit_dislikes) {
    PairPool pool;
    pool.mode_ = mode;
    pool.catalog_ = data.items();
    for (const std::string& user : data.users()) {
      UserSlot slot;
      slot.user = user;
      slot.positives = data.items_of(user, true, part);
      if (mode == NegativeMode::explicit_dislikes) {
        slot.negatives = data.items_of(user, false, part);
      } else {
        for (const std::string& item : data.items_of(user, true, part))
          slot.positive_set.insert(item);
      }
      if (!slot.positives.empty()) pool.users_.push_back(std::move(slot));
    }
    return pool;
  }

  NegativeMode mode() const { return mode_; }
  bool is_explicit() const { return mode_ == NegativeMode::explicit_dislikes; }
  std::size_t user_count() const { return users_.size(); }
  const UserSlot& slot(std::size_t u) const { return users_[u]; }
  UserSlot& slot(std::size_t u) { return users_[u]; }

  bool has_negatives(std::size_t u) const {
    const UserSlot& s = users_[u];
    if (mode_ == NegativeMode::explicit_dislikes) return !s.negatives.empty();
    return s.positive_set.size() < catalog_.size();
  }

  const std::string& sample_negative(std::size_t u, Rng& rng) const {
    const UserSlot& s = users_[u];
    if (mode_ == NegativeMode::explicit_dislikes)
      return s.negatives[rng.below(s.negatives.size())];
    while (true) {
      const std::string& candidate = catalog_[rng.below(catalog_.size())];
      if (!s.positive_set.count(candidate)) return candidate;
    }
  }

  // Number of (user, positive) pairs that can actually form a training pair.
  std::size_t usable_pairs() const {
    std::size_t n = 0;
    for (std::size_t u = 0; u < users_.size(); ++u)
      if (has_negatives(u)) n += users_[u].positives.size();
    return n;
  }

  // Used when the training interactions are re-split into an inner train and
  // validation side; only the explicit mode carries negatives around.
  void push_user(UserSlot slot) { users_.push_back(std::move(slot)); }
  void set_catalog(std::vector<std::string> items) { catalog_ = std::move(items); }
  const std::vector<std::string>& catalog() const { return catalog_; }

 private:
  std::vector<UserSlot> users_;
  std::vector<std::string> catalog_;
  NegativeMode mode_ = NegativeMode::explicit_dislikes;
};

// One SGD step on a (positive, negative) example pair:
//   g = -(1 - sigmoid(y_pos - y_neg))
//   theta <- theta - lr * (g * (dy_pos/dtheta - dy_neg/dtheta) + l2 * theta)
// L2 shrinks only the w and V entries touched by either vector; the global
// bias cancels out of the margin and is never regularized. Returns the
// pre-update pair loss.
inline double sgd_pair_step(FmModel& model, const SparseVector& x_pos,
                            const SparseVector& x_neg, const FmHyperparams& hp) {
  detail::check_range(model, x_pos);
  detail::check_range(model, x_neg);
  const double y_pos = fm_predict(model, x_pos);
  const double y_neg = fm_predict(model, x_neg);
  const double g = -(1.0 - sigmoid(y_pos - y_neg));
  const double lr = hp.learn_rate;
  const double l2 = hp.l2_reg;

  // x value per touched index, looked up from either side.
  const auto& pe = x_pos.entries();
  const auto& ne = x_neg.entries();
  std::vector<std::pair<std::size_t, std::pair<double, double>>> touched;
  touched.reserve(pe.size() + ne.size());
  std::size_t a = 0, b = 0;
  while (a < pe.size() || b < ne.size()) {
    if (b == ne.size() || (a < pe.size() && pe[a].index < ne[b].index)) {
      touched.push_back({pe[a].index, {pe[a].value, 0.0}});
      ++a;
    } else if (a == pe.size() || ne[b].index < pe[a].index) {
      touched.push_back({ne[b].index, {0.0, ne[b].value}});
      ++b;
    } else {
      touched.push_back({pe[a].index, {pe[a].value, ne[b].value}});
      ++a;
      ++b;
    }
  }

  // Factor sums of both sides before any parameter moves.
  std::vector<double> s_pos(model.m, 0.0), s_neg(model.m, 0.0);
  for (const auto& e : pe)
    for (std::size_t f = 0; f < model.m; ++f)
      s_pos[f] += model.v_at(e.index, f) * e.value;
  for (const auto& e : ne)
    for (std::size_t f = 0; f < model.m; ++f)
      s_neg[f] += model.v_at(e.index, f) * e.value;

  for (const auto& [i, xv] : touched) {
    const auto [xp, xn] = xv;
    model.w[i] -= lr * (g * (xp - xn) + l2 * model.w[i]);
    for (std::size_t f = 0; f < model.m; ++f) {
      const double vif = model.v_at(i, f);
      const double d_pos = xp * s_pos[f] - vif * xp * xp;
      const double d_neg = xn * s_neg[f] - vif * xn * xn;
      model.v_at(i, f) -= lr * (g * (d_pos - d_neg) + l2 * vif);
    }
  }
  return bpr_pair_loss(y_pos, y_neg);
}

namespace detail {
// Flat (user, positive) enumeration in deterministic base order.
inline std::vector<std::pair<std::size_t, std::size_t>> pair_order(
    const PairPool& pool) {
  std::vector<std::pair<std::size_t, std::size_t>> order;
  for (std::size_t u = 0; u < pool.user_count(); ++u) {
    if (!pool.has_negatives(u)) continue;
    for (std::size_t i = 0; i < pool.slot(u).positives.size(); ++i)
      order.emplace_back(u, i);
  }
  return order;
}
}  // namespace detail

// One training pass: visits one pair per (user, positive item) in shuffled
// order (or every positive x negative pair under the full strategy), performs
// an SGD step per pair and returns the mean pre-update pair loss.
inline double fm_train_epoch(FmModel& model, const PairPool& pool,
                             const ExampleAssembler& assembler,
                             const FmHyperparams& hp, Rng& rng) {
  double total = 0.0;
  std::size_t count = 0;
  if (hp.pair_strategy == FmHyperparams::PairStrategy::full) {
    if (!pool.is_explicit())
      throw StructuralError("full pair strategy requires explicit negatives");
    std::vector<std::tuple<std::size_t, std::size_t, std::size_t>> order;
    for (std::size_t u = 0; u < pool.user_count(); ++u) {
      const auto& slot = pool.slot(u);
      for (std::size_t i = 0; i < slot.positives.size(); ++i)
        for (std::size_t j = 0; j < slot.negatives.size(); ++j)
          order.emplace_back(u, i, j);
    }
    if (order.empty())
      throw DegenerateInputError("no usable (positive, negative) training pairs");
    rng.shuffle(order);
    for (const auto& [u, i, j] : order) {
      const auto& slot = pool.slot(u);
      SparseVector x_pos = assembler.assemble(slot.user, slot.positives[i]);
      SparseVector x_neg = assembler.assemble(slot.user, slot.negatives[j]);
      total += sgd_pair_step(model, x_pos, x_neg, hp);
      ++count;
    }
    return total / static_cast<double>(count);
  }

  std::vector<std::pair<std::size_t, std::size_t>> order = detail::pair_order(pool);
  if (order.empty())
    throw DegenerateInputError("no usable (positive, negative) training pairs");
  rng.shuffle(order);
  for (const auto& [u, i] : order) {
    const auto& slot = pool.slot(u);
    const std::string& neg = pool.sample_negative(u, rng);
    SparseVector x_pos = assembler.assemble(slot.user, slot.positives[i]);
    SparseVector x_neg = assembler.assemble(slot.user, neg);
    total += sgd_pair_step(model, x_pos, x_neg, hp);
    ++count;
  }
  return total / static_cast<double>(count);
}

// Mean pair loss over the full positive x negative product of every user,
// without touching the model. Requires explicit negatives.
inline double mean_pair_loss(const FmModel& model, const PairPool& pool,
                             const ExampleAssembler& assembler) {
  if (!pool.is_explicit())
    throw StructuralError("mean_pair_loss requires explicit negatives");
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t u = 0; u < pool.user_count(); ++u) {
    const auto& slot = pool.slot(u);
    if (slot.negatives.empty()) continue;
    std::vector<double> y_neg;
    y_neg.reserve(slot.negatives.size());
    for (const std::string& item : slot.negatives)
      y_neg.push_back(fm_predict(model, assembler.assemble(slot.user, item)));
    for (const std::string& item : slot.positives) {
      const double y_pos = fm_predict(model, assembler.assemble(slot.user, item));
      for (double yn : y_neg) {
        total += bpr_pair_loss(y_pos, yn);
        ++count;
      }
    }
  }
  if (count == 0)
    throw DegenerateInputError("no usable (positive, negative) pairs to evaluate");
  return total / static_cast<double>(count);
}

// Fraction of (positive, negative) pairs ranked correctly (strict inequality).
inline double pairwise_auc(const FmModel& model, const PairPool& pool,
                           const ExampleAssembler& assembler) {
  if (!pool.is_explicit())
    throw StructuralError("pairwise_auc requires explicit negatives");
  std::size_t correct = 0, count = 0;
  for (std::size_t u = 0; u < pool.user_count(); ++u) {
    const auto& slot = pool.slot(u);
    if (slot.negatives.empty()) continue;
    std::vector<double> y_neg;
    for (const std::string& item : slot.negatives)
      y_neg.push_back(fm_predict(model, assembler.assemble(slot.user, item)));
    for (const std::string& item : slot.positives) {
      const double y_pos = fm_predict(model, assembler.assemble(slot.user, item));
      for (double yn : y_neg) {
        if (y_pos > yn) ++correct;
        ++count;
      }
    }
  }
  if (count == 0) throw DegenerateInputError("no pairs to score");
  return static_cast<double>(correct) / static_cast<double>(count);
}

struct TrainReport {
  std::size_t epochs_run = 0;                // epochs of the final (retrain) phase
  std::optional<std::size_t> stopped_epoch;  // remembered epoch when early stopping fired
  std::vector<double> validation_losses;     // one entry per phase-one epoch
  double final_train_loss = 0.0;
};

struct EpochEvent {
  enum class Phase { search, retrain };
  Phase phase;
  std::size_t epoch;  // 1-based
  double train_loss;
  std::optional<double> validation_loss;
};
using EpochObserver = std::function<void(const EpochEvent&)>;
// Injectable validation measure; the default evaluates mean_pair_loss on the
// held-out pairs.
using ValidationFn = std::function<double(const FmModel&, std::size_t epoch)>;

namespace detail {
// Moves ~validation_fraction of each user's training interactions into a
// held-out pool, stratified by polarity so a contributing user always yields
// at least one validation (positive, negative) pair. A side with fewer than
// two interactions stays fully on the training side.
inline std::pair<PairPool, PairPool> split_inner_validation(
    const PairPool& full, double validation_fraction, std::uint64_t seed) {
  PairPool inner_train, inner_val;
  inner_train.set_catalog(full.catalog());
  inner_val.set_catalog(full.catalog());
  Rng rng(derive_seed(seed, 17));
  for (std::size_t u = 0; u < full.user_count(); ++u) {
    const auto& slot = full.slot(u);
    PairPool::UserSlot train_slot, val_slot;
    train_slot.user = val_slot.user = slot.user;
    auto carve = [&](const std::vector<std::string>& side,
                     std::vector<std::string>& to_train,
                     std::vector<std::string>& to_val) {
      if (side.size() < 2) {
        to_train = side;
        return;
      }
      std::vector<std::string> shuffled = side;
      rng.shuffle(shuffled);
      const std::size_t n_val = std::max<std::size_t>(
          1, static_cast<std::size_t>(
                 std::floor(static_cast<double>(side.size()) * validation_fraction)));
      to_val.assign(shuffled.begin(), shuffled.begin() + n_val);
      to_train.assign(shuffled.begin() + n_val, shuffled.end());
      std::sort(to_val.begin(), to_val.end());
      std::sort(to_train.begin(), to_train.end());
    };
    carve(slot.positives, train_slot.positives, val_slot.positives);
    carve(slot.negatives, train_slot.negatives, val_slot.negatives);
    if (!train_slot.positives.empty()) inner_train.push_user(std::move(train_slot));
    if (!val_slot.positives.empty()) inner_val.push_user(std::move(val_slot));
  }
  return {std::move(inner_train), std::move(inner_val)};
}
}  // namespace detail

// Early-stopped BPR training:
//   1. carve an inner validation set out of the training interactions,
//   2. measure validation loss after each epoch on the remainder,
//   3. on the first increase stop and remember the previous epoch E,
//   4. re-initialize with the same seed and train on all training
//      interactions for exactly E epochs.
// Without an increase within max_epochs, E = max_epochs. The retrain phase
// reuses the seed so its epoch semantics match phase one.
inline std::pair<FmModel, TrainReport> train_fm_early_stopping(
    const PairPool& train_pool, const ExampleAssembler& assembler,
    const FmHyperparams& hp, const EpochObserver& observer = {},
    const ValidationFn& validation_override = {}) {
  hp.validate();
  if (!train_pool.is_explicit())
    throw StructuralError("early-stopped training requires explicit negatives");
  if (train_pool.usable_pairs() == 0)
    throw DegenerateInputError("training partition has no usable pairs");
  const std::size_t p = assembler.index().dim();

  auto [inner_train, inner_val] =
      detail::split_inner_validation(train_pool, hp.validation_fraction, hp.seed);
  if (inner_train.usable_pairs() == 0)
    throw DegenerateInputError("inner training split has no usable pairs");
  if (!validation_override && inner_val.usable_pairs() == 0)
    throw DegenerateInputError("inner validation split has no usable pairs");

  TrainReport report;
  std::size_t remembered = hp.max_epochs;
  bool stopped = false;
  {
    FmModel model = FmModel::init(p, hp);
    Rng epoch_rng(derive_seed(hp.seed, 1));
    double previous = 0.0;
    for (std::size_t e = 1; e <= hp.max_epochs; ++e) {
      const double train_loss = fm_train_epoch(model, inner_train, assembler, hp, epoch_rng);
      const double val_loss = validation_override
                                  ? validation_override(model, e)
                                  : mean_pair_loss(model, inner_val, assembler);
      report.validation_losses.push_back(val_loss);
      if (observer)
        observer({EpochEvent::Phase::search, e, train_loss, val_loss});
      if (e >= 2 && val_loss > previous) {
        remembered = e - 1;
        stopped = true;
        break;
      }
      previous = val_loss;
    }
  }

  FmModel model = FmModel::init(p, hp);
  Rng epoch_rng(derive_seed(hp.seed, 1));
  double final_loss = 0.0;
  for (std::size_t e = 1; e <= remembered; ++e) {
    final_loss = fm_train_epoch(model, train_pool, assembler, hp, epoch_rng);
    if (observer) observer({EpochEvent::Phase::retrain, e, final_loss, std::nullopt});
  }
  report.epochs_run = remembered;
  if (stopped) report.stopped_epoch = remembered;
  report.final_train_loss = final_loss;
  return {std::move(model), std::move(report)};
}

inline std::pair<FmModel, TrainReport> train_fm_early_stopping(
    const InteractionDataset& data, const FeatureIndex& index,
    const std::map<std::string, ItemKnowledge>& knowledge, const FmHyperparams& hp,
    const EpochObserver& observer = {}, const ValidationFn& validation_override = {}) {
  ExampleAssembler assembler(index, knowledge);
  PairPool pool = PairPool::from_dataset(data, Partition::train,
                                         NegativeMode::explicit_dislikes);
  return train_fm_early_stopping(pool, assembler, hp, observer, validation_override);
}

}  // namespace lodfm
