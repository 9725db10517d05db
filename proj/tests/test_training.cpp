#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>

#include "lodfm/bpr.hpp"
#include "lodfm/dataset.hpp"
#include "lodfm/feature_index.hpp"

#include "support/synthetic.hpp"

using namespace lodfm;

namespace {

struct Setup {
  InteractionDataset data;
  std::map<std::string, ItemKnowledge> knowledge;
  FeatureIndex index;
  ExampleAssembler assembler;
  PairPool pool;

  explicit Setup(InteractionDataset d, FeatureConfig cfg = {})
      : data(std::move(d)),
        index(FeatureIndex::build(data.users(), data.items(), knowledge, cfg)),
        assembler(index, knowledge),
        pool(PairPool::from_dataset(data)) {}
};

FmHyperparams small_hp() {
  FmHyperparams hp;
  hp.factors = 4;
  hp.learn_rate = 0.05;
  hp.l2_reg = 1e-4;
  hp.seed = 11;
  hp.max_epochs = 50;
  return hp;
}

}  // namespace

TEST_CASE("bpr pair loss values and shape") {
  SECTION("zero margin gives log 2") {
    CHECK_THAT(bpr_pair_loss(0.7, 0.7), Catch::Matchers::WithinAbs(std::log(2.0), 1e-15));
  }
  SECTION("unit margin") {
    CHECK_THAT(bpr_pair_loss(1.0, 0.0),
               Catch::Matchers::WithinAbs(std::log1p(std::exp(-1.0)), 1e-15));
  }
  SECTION("huge margins saturate without overflow") {
    const double tiny = bpr_pair_loss(50.0, 0.0);
    CHECK(tiny > 0.0);
    CHECK(tiny < 1e-20);
    const double big = bpr_pair_loss(0.0, 900.0);
    CHECK(std::isfinite(big));
    CHECK_THAT(big, Catch::Matchers::WithinRel(900.0, 1e-9));
  }
  SECTION("strictly positive and strictly decreasing in the margin") {
    double prev = bpr_pair_loss(-10.0, 0.0);
    for (double margin = -9.5; margin <= 10.0; margin += 0.5) {
      const double cur = bpr_pair_loss(margin, 0.0);
      CHECK(cur > 0.0);
      CHECK(cur < prev);
      prev = cur;
    }
  }
}

TEST_CASE("sgd pair step") {
  FmHyperparams hp = small_hp();
  FmModel model = FmModel::init(6, hp);
  model.w = {0.1, -0.2, 0.3, 0.0, 0.5, -0.6};
  SparseVector x_pos = SparseVector::from_entries({{0, 1.0}, {2, 1.0}});
  SparseVector x_neg = SparseVector::from_entries({{0, 1.0}, {4, 1.0}});

  SECTION("lr = 0 leaves the model bit-identical") {
    FmHyperparams frozen = hp;
    frozen.learn_rate = 0.0;
    FmModel before = model;
    sgd_pair_step(model, x_pos, x_neg, frozen);
    CHECK(model == before);
  }

  SECTION("a small step decreases the regularized loss of the pair") {
    FmHyperparams lr = hp;
    lr.learn_rate = 1e-3;
    auto regularized = [&](const FmModel& m) {
      double penalty = 0.0;
      for (std::size_t i : {0u, 2u, 4u}) {
        penalty += m.w[i] * m.w[i];
        for (std::size_t f = 0; f < m.m; ++f) penalty += m.v_at(i, f) * m.v_at(i, f);
      }
      return bpr_pair_loss(fm_predict(m, x_pos), fm_predict(m, x_neg)) +
             0.5 * lr.l2_reg * penalty;
    };
    const double before = regularized(model);
    sgd_pair_step(model, x_pos, x_neg, lr);
    CHECK(regularized(model) < before);
  }

  SECTION("identical vectors leave only L2 shrinkage") {
    const FmModel before = model;
    sgd_pair_step(model, x_pos, x_pos, hp);
    CHECK(model.w0 == before.w0);
    const double shrink = 1.0 - hp.learn_rate * hp.l2_reg;
    for (std::size_t i : {0u, 2u}) {
      CHECK_THAT(model.w[i], Catch::Matchers::WithinRel(before.w[i] * shrink, 1e-12));
      for (std::size_t f = 0; f < model.m; ++f)
        CHECK_THAT(model.v_at(i, f),
                   Catch::Matchers::WithinRel(before.v_at(i, f) * shrink, 1e-12));
    }
  }

  SECTION("parameters outside both vectors never move") {
    const FmModel before = model;
    sgd_pair_step(model, x_pos, x_neg, hp);
    for (std::size_t i : {1u, 3u, 5u}) {
      CHECK(model.w[i] == before.w[i]);
      for (std::size_t f = 0; f < model.m; ++f)
        CHECK(model.v_at(i, f) == before.v_at(i, f));
    }
    CHECK(model.w0 == before.w0);  // bias cancels out of the margin
  }
}

TEST_CASE("training epoch") {
  Setup setup(synthetic::separable_toy(5, 10));
  FmHyperparams hp = small_hp();

  SECTION("zero model with lr = 0 has mean loss exactly log 2") {
    FmHyperparams frozen = hp;
    frozen.learn_rate = 0.0;
    FmModel model;
    model.p = setup.index.dim();
    model.m = 2;
    model.w.assign(model.p, 0.0);
    model.v.assign(model.p * 2, 0.0);
    Rng rng(1);
    const double loss = fm_train_epoch(model, setup.pool, setup.assembler, frozen, rng);
    CHECK_THAT(loss, Catch::Matchers::WithinAbs(std::log(2.0), 1e-12));
  }

  SECTION("identical seeds visit identical pairs") {
    FmModel a = FmModel::init(setup.index.dim(), hp);
    FmModel b = FmModel::init(setup.index.dim(), hp);
    Rng ra(42), rb(42);
    const double la = fm_train_epoch(a, setup.pool, setup.assembler, hp, ra);
    const double lb = fm_train_epoch(b, setup.pool, setup.assembler, hp, rb);
    CHECK(la == lb);
    CHECK(a == b);
  }

  SECTION("loss shrinks over epochs on the toy dataset") {
    FmModel model = FmModel::init(setup.index.dim(), hp);
    Rng rng(42);
    const double first = fm_train_epoch(model, setup.pool, setup.assembler, hp, rng);
    double last = first;
    for (int e = 0; e < 49; ++e)
      last = fm_train_epoch(model, setup.pool, setup.assembler, hp, rng);
    CHECK(last < first);
  }

  SECTION("users without negatives are skipped, empty pools rejected") {
    InteractionDataset data;
    data.add("u1", "i1", true);  // no negatives anywhere
    Setup degenerate(data);
    FmModel model = FmModel::init(degenerate.index.dim(), hp);
    Rng rng(1);
    CHECK_THROWS_AS(
        fm_train_epoch(model, degenerate.pool, degenerate.assembler, hp, rng),
        DegenerateInputError);
  }
}

TEST_CASE("full pair strategy walks the whole product") {
  Setup setup(synthetic::separable_toy(3, 6));
  FmHyperparams hp = small_hp();
  hp.pair_strategy = FmHyperparams::PairStrategy::full;
  hp.learn_rate = 0.0;
  FmModel model;
  model.p = setup.index.dim();
  model.m = 1;
  model.w.assign(model.p, 0.0);
  model.v.assign(model.p, 0.0);
  Rng rng(1);
  // zero model: every pair contributes exactly log 2 regardless of count
  CHECK_THAT(fm_train_epoch(model, setup.pool, setup.assembler, hp, rng),
             Catch::Matchers::WithinAbs(std::log(2.0), 1e-12));
}

TEST_CASE("mean pair loss of the zero model is log 2 on any dataset") {
  Setup setup(synthetic::separable_toy(4, 8));
  FmModel model;
  model.p = setup.index.dim();
  model.m = 3;
  model.w.assign(model.p, 0.0);
  model.v.assign(model.p * 3, 0.0);
  CHECK_THAT(mean_pair_loss(model, setup.pool, setup.assembler),
             Catch::Matchers::WithinAbs(std::log(2.0), 1e-12));
}

TEST_CASE("early stopping follows the four-step procedure") {
  Setup setup(synthetic::separable_toy(6, 10));
  FmHyperparams hp = small_hp();
  hp.max_epochs = 10;

  SECTION("injected losses 0.9, 0.7, 0.8 stop after epoch 3 with E = 2") {
    const std::vector<double> injected{0.9, 0.7, 0.8, 0.65, 0.6};
    std::size_t retrain_epochs = 0, search_epochs = 0;
    auto observer = [&](const EpochEvent& e) {
      if (e.phase == EpochEvent::Phase::retrain)
        ++retrain_epochs;
      else
        ++search_epochs;
    };
    auto validation = [&](const FmModel&, std::size_t epoch) {
      return injected.at(epoch - 1);
    };
    auto [model, report] =
        train_fm_early_stopping(setup.pool, setup.assembler, hp, observer, validation);
    CHECK(search_epochs == 3);
    CHECK(report.validation_losses == std::vector<double>{0.9, 0.7, 0.8});
    REQUIRE(report.stopped_epoch.has_value());
    CHECK(*report.stopped_epoch == 2);
    CHECK(report.epochs_run == 2);
    CHECK(retrain_epochs == 2);
  }

  SECTION("strictly decreasing validation loss runs to max_epochs") {
    std::size_t retrain_epochs = 0;
    auto observer = [&](const EpochEvent& e) {
      if (e.phase == EpochEvent::Phase::retrain) ++retrain_epochs;
    };
    auto validation = [](const FmModel&, std::size_t epoch) {
      return 1.0 / static_cast<double>(epoch);
    };
    auto [model, report] =
        train_fm_early_stopping(setup.pool, setup.assembler, hp, observer, validation);
    CHECK_FALSE(report.stopped_epoch.has_value());
    CHECK(report.epochs_run == hp.max_epochs);
    CHECK(retrain_epochs == hp.max_epochs);
    CHECK(report.validation_losses.size() == hp.max_epochs);
  }

  SECTION("real validation: stopped epoch equals the retrain epoch count") {
    synthetic::PlantedPoData planted = synthetic::planted_po_dataset(3, 40, 30, 6, 12);
    auto [model, report] = train_fm_early_stopping(
        planted.dataset, FeatureIndex::build(planted.dataset.users(),
                                             planted.dataset.items(),
                                             planted.knowledge, FeatureConfig{}),
        planted.knowledge, hp);
    std::size_t expected = report.stopped_epoch ? *report.stopped_epoch : hp.max_epochs;
    CHECK(report.epochs_run == expected);
  }
}

TEST_CASE("training is deterministic under a fixed seed") {
  synthetic::PlantedPoData planted = synthetic::planted_po_dataset(5, 30, 20, 4, 10);
  FeatureConfig cfg = FeatureConfig::parse("po");
  FeatureIndex index = FeatureIndex::build(planted.dataset.users(),
                                           planted.dataset.items(),
                                           planted.knowledge, cfg);
  FmHyperparams hp = small_hp();
  hp.max_epochs = 8;
  auto [m1, r1] = train_fm_early_stopping(planted.dataset, index, planted.knowledge, hp);
  auto [m2, r2] = train_fm_early_stopping(planted.dataset, index, planted.knowledge, hp);
  CHECK(m1 == m2);
  CHECK(r1.validation_losses == r2.validation_losses);
  CHECK(r1.epochs_run == r2.epochs_run);
}

TEST_CASE("training separates the separable toy dataset") {
  Setup setup(synthetic::separable_toy(8, 12));
  FmHyperparams hp = small_hp();
  hp.max_epochs = 60;
  FmModel model = FmModel::init(setup.index.dim(), hp);
  Rng rng(derive_seed(hp.seed, 1));
  for (std::size_t e = 0; e < hp.max_epochs; ++e)
    fm_train_epoch(model, setup.pool, setup.assembler, hp, rng);
  CHECK(pairwise_auc(model, setup.pool, setup.assembler) > 0.95);
}
