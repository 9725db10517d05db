// lodfm command line: fetch LOD features, train and evaluate rankers, and
// reproduce the comparison/ablation/sweep experiment layouts.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lodfm/baselines.hpp"
#include "lodfm/bpr.hpp"
#include "lodfm/experiment.hpp"
#include "lodfm/feature_index.hpp"
#include "lodfm/fetcher.hpp"
#include "lodfm/fm.hpp"
#include "lodfm/metrics.hpp"
#include "lodfm/ratings.hpp"

namespace {

struct CommonOpts {
  std::string ratings;
  std::string mapping;
  std::string cache;
  std::string out;
  std::string features = "po,pr";
  std::string candidates = "all";
  std::uint64_t split_seed = 42;
  std::size_t m = 10;
  double lr = 0.05;
  double l2 = 1e-4;
  double init_stddev = 0.01;
  std::size_t epochs = 100;
  std::uint64_t seed = 42;
  std::size_t knn_k = 80;
  std::size_t bprmf_m = 200;
  bool bprmf_m_given = false;
  std::string pair_strategy = "sampled";
};

void add_common(CLI::App* cmd, CommonOpts& opts, bool needs_ratings = true,
                bool with_scalar_m = true) {
  auto* r = cmd->add_option("--ratings", opts.ratings,
                            "Ratings file (user::item::rating::timestamp)");
  if (needs_ratings) r->required();
  cmd->add_option("--mapping", opts.mapping, "Item to DBpedia URI mapping (TSV)");
  cmd->add_option("--cache", opts.cache, "Feature cache directory");
  cmd->add_option("--out", opts.out, "Output directory");
  cmd->add_option("--features", opts.features, "LOD feature sets (po,sp,pr)");
  cmd->add_option("--candidates", opts.candidates,
                  "Evaluation candidates: all | test-only");
  cmd->add_option("--split-seed", opts.split_seed, "Train/test split seed");
  if (with_scalar_m) cmd->add_option("--m", opts.m, "FM factor dimensionality");
  cmd->add_option("--lr", opts.lr, "Learning rate");
  cmd->add_option("--l2", opts.l2, "L2 regularization");
  cmd->add_option("--init-stddev", opts.init_stddev,
                  "Stddev of the latent factor initialization");
  cmd->add_option("--epochs", opts.epochs, "Maximum training epochs");
  cmd->add_option("--seed", opts.seed, "Model seed");
  cmd->add_option("--k", opts.knn_k, "kNN neighborhood size");
  cmd->add_option("--bprmf-m", opts.bprmf_m,
                  "BPRMF factor dimensionality (defaults to --m when bprmf is "
                  "the selected model)")
      ->each([&opts](const std::string&) { opts.bprmf_m_given = true; });
  cmd->add_option("--pair-strategy", opts.pair_strategy,
                  "Training pairs per epoch: sampled | full");
}

// When bprmf is the one selected model, an explicit --m names its
// dimensionality unless --bprmf-m was given too.
void inherit_bprmf_m(lodfm::ExperimentConfig& config, const CommonOpts& opts,
                     const std::string& model) {
  if (model == "bprmf" && !opts.bprmf_m_given) config.bprmf.factors = opts.m;
}

lodfm::ExperimentConfig to_config(const CommonOpts& opts) {
  lodfm::ExperimentConfig config;
  config.ratings_path = opts.ratings;
  config.mapping_path = opts.mapping;
  config.cache_dir = opts.cache;
  config.output_dir = opts.out;
  config.features = lodfm::FeatureConfig::parse(opts.features);
  config.fm.factors = opts.m;
  config.fm.learn_rate = opts.lr;
  config.fm.l2_reg = opts.l2;
  config.fm.init_stddev = opts.init_stddev;
  config.fm.max_epochs = opts.epochs;
  config.fm.seed = opts.seed;
  if (opts.pair_strategy == "full")
    config.fm.pair_strategy = lodfm::FmHyperparams::PairStrategy::full;
  else if (opts.pair_strategy != "sampled")
    throw lodfm::StructuralError("unknown pair strategy '" + opts.pair_strategy + "'");
  config.bprmf.factors = opts.bprmf_m;
  config.bprmf.learn_rate = opts.lr;
  config.bprmf.l2_reg = opts.l2;
  config.bprmf.init_stddev = opts.init_stddev;
  config.bprmf.epochs = opts.epochs;
  config.bprmf.seed = opts.seed;
  config.knn_k = opts.knn_k;
  config.split_seed = opts.split_seed;
  config.candidates = lodfm::parse_candidate_mode(opts.candidates);
  return config;
}

void print_report(const lodfm::RunResult& run) {
  std::cout << lodfm::render_table(run);
}

int cmd_fetch_features(const std::string& items_path, const std::string& endpoint,
                       const std::string& cache, const std::string& sets,
                       double timeout, std::size_t retries, double backoff,
                       std::size_t concurrency) {
  lodfm::SparqlEndpointConfig config;
  config.endpoint_url = endpoint;
  config.cache_dir = cache;
  config.timeout_seconds = timeout;
  config.max_retries = retries;
  config.retry_backoff_seconds = backoff;
  config.max_concurrent_requests = concurrency;
  lodfm::SparqlFetcher fetcher(config);
  const std::vector<std::string> items = lodfm::load_item_list(items_path);
  std::cerr << "fetching " << items.size() << " item(s) from " << endpoint << "\n";
  auto result = fetcher.fetch_all(items, lodfm::FeatureConfig::parse(sets));
  std::cout << "fetched " << result.knowledge.size() << " item(s), "
            << result.failures.size() << " failure(s)\n";
  for (const auto& failure : result.failures)
    std::cerr << "  failed: " << failure.item_uri << ": " << failure.error << "\n";
  return result.failures.empty() ? 0 : 1;
}

// Shared data preparation for train/evaluate.
struct Prepared {
  lodfm::ExperimentData data;
  lodfm::ExperimentConfig config;
};

Prepared prepare(const CommonOpts& opts, bool with_lod) {
  Prepared p;
  p.config = to_config(opts);
  p.data = lodfm::prepare_experiment(
      p.config, with_lod ? p.config.features : lodfm::FeatureConfig{});
  return p;
}

int cmd_train(const CommonOpts& opts, const std::string& model) {
  if (model != "lodfm" && model != "bprmf") {
    std::cerr << model << " has no trained parameters to persist; "
              << "use `evaluate` or `compare` instead\n";
    return 2;
  }
  const std::filesystem::path out = opts.out.empty() ? "." : opts.out;
  std::filesystem::create_directories(out);
  Prepared p = prepare(opts, model == "lodfm");
  inherit_bprmf_m(p.config, opts, model);
  if (model == "bprmf") {
    lodfm::MfModel mf = lodfm::bprmf_train(p.data.dataset, p.config.bprmf);
    lodfm::save_mf_file(mf, out / "bprmf.ckpt");
    std::cout << "trained bprmf (m=" << mf.m << ") on "
              << p.data.dataset.user_count() << " users; checkpoint at "
              << (out / "bprmf.ckpt").string() << "\n";
    return 0;
  }
  lodfm::FeatureIndex index = lodfm::FeatureIndex::build(
      p.data.dataset.users(), p.data.dataset.items(), p.data.knowledge,
      p.config.features);
  lodfm::ExampleAssembler assembler(index, p.data.knowledge);
  lodfm::EpochObserver observer = [](const lodfm::EpochEvent& e) {
    std::cerr << (e.phase == lodfm::EpochEvent::Phase::search ? "search" : "retrain")
              << " epoch " << e.epoch << ": train loss " << e.train_loss;
    if (e.validation_loss) std::cerr << ", validation loss " << *e.validation_loss;
    std::cerr << "\n";
  };
  auto [fm, report] = lodfm::train_fm_early_stopping(
      lodfm::PairPool::from_dataset(p.data.dataset, lodfm::Partition::train,
                                    lodfm::NegativeMode::explicit_dislikes),
      assembler, p.config.fm, observer);
  index.save_file(out / "feature_index.tsv");
  lodfm::save_fm_file(fm, index.fingerprint(), out / "fm.ckpt");
  {
    nlohmann::json j;
    j["epochs_run"] = report.epochs_run;
    if (report.stopped_epoch)
      j["stopped_epoch"] = *report.stopped_epoch;
    else
      j["stopped_epoch"] = nullptr;
    j["validation_losses"] = report.validation_losses;
    j["final_train_loss"] = report.final_train_loss;
    std::ofstream os(out / "train_report.json");
    os << j.dump(2) << "\n";
  }
  std::cout << "trained lodfm for " << report.epochs_run << " epoch(s)"
            << (report.stopped_epoch ? " (early stopping)" : "") << "; checkpoint at "
            << (out / "fm.ckpt").string() << "\n";
  return 0;
}

int cmd_evaluate(const CommonOpts& opts, const std::string& model,
                 const std::string& checkpoint) {
  Prepared p = prepare(opts, model == "lodfm");
  inherit_bprmf_m(p.config, opts, model);
  lodfm::Scorer scorer;
  if (model == "poprank") {
    scorer = lodfm::make_poprank_scorer(p.data.dataset);
  } else if (model == "knn") {
    scorer = lodfm::make_knn_scorer(p.data.dataset, p.config.knn_k);
  } else if (model == "bprmf") {
    auto mf = std::make_shared<lodfm::MfModel>(
        checkpoint.empty() ? lodfm::bprmf_train(p.data.dataset, p.config.bprmf)
                           : lodfm::load_mf_file(checkpoint));
    scorer = lodfm::make_bprmf_scorer(mf);
  } else if (model == "lodfm") {
    lodfm::FeatureIndex index = lodfm::FeatureIndex::build(
        p.data.dataset.users(), p.data.dataset.items(), p.data.knowledge,
        p.config.features);
    auto assembler =
        std::make_shared<lodfm::ExampleAssembler>(index, p.data.knowledge);
    std::shared_ptr<lodfm::FmModel> fm;
    if (!checkpoint.empty()) {
      fm = std::make_shared<lodfm::FmModel>(
          lodfm::load_fm_file(checkpoint, index.fingerprint()));
    } else {
      auto [trained, report] = lodfm::train_fm_early_stopping(
          lodfm::PairPool::from_dataset(p.data.dataset, lodfm::Partition::train,
                                        lodfm::NegativeMode::explicit_dislikes),
          *assembler, p.config.fm);
      fm = std::make_shared<lodfm::FmModel>(std::move(trained));
    }
    scorer = lodfm::make_fm_scorer(fm, assembler);
  } else {
    std::cerr << "unknown model '" << model << "'\n";
    return 2;
  }
  const std::vector<lodfm::RankedList> rankings =
      lodfm::rank_users(p.data.dataset, scorer, p.config.candidates);
  const lodfm::MetricReport report =
      lodfm::evaluate_rankings(model, rankings, p.config.eval_n);
  for (const std::string& name : lodfm::metric_names(p.config.eval_n))
    std::cout << name << "\t" << std::fixed << std::setprecision(4)
              << report.mean.at(name) << "\n";
  if (!opts.out.empty()) {
    std::filesystem::create_directories(opts.out);
    nlohmann::json j;
    j["model"] = model;
    j["config_fingerprint"] = p.config.fingerprint();
    j["means"] = report.mean;
    j["users"] = report.users;
    for (const auto& [metric, values] : report.per_user) j["per_user"][metric] = values;
    std::ofstream os(std::filesystem::path(opts.out) / "evaluation.json");
    os << j.dump(2) << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Factorization machines over lightweight DBpedia features: "
               "top-N recommendation toolkit"};
  app.require_subcommand(1);
  // Give --config before the subcommand; file keys live in a section named
  // after the subcommand, e.g. [evaluate]. Flags override file values.
  app.set_config("--config", "", "Read options from a TOML/INI file");

  // fetch-features
  std::string items_path, endpoint = "https://dbpedia.org/sparql";
  std::string fetch_cache, fetch_sets = "po,sp,pr";
  double timeout = 30.0, backoff = 1.0;
  std::size_t retries = 3, concurrency = 4;
  CLI::App* fetch = app.add_subcommand(
      "fetch-features", "Fetch PO/SP/PR features for a list of item URIs");
  fetch->add_option("--items", items_path, "File with one item URI per line")
      ->required();
  fetch->add_option("--endpoint", endpoint, "SPARQL endpoint URL");
  fetch->add_option("--cache", fetch_cache, "Cache directory")->required();
  fetch->add_option("--sets", fetch_sets, "Feature sets to fetch (po,sp,pr)");
  fetch->add_option("--timeout", timeout, "Request timeout in seconds");
  fetch->add_option("--retries", retries, "Retries per request");
  fetch->add_option("--backoff", backoff, "Initial retry backoff in seconds");
  fetch->add_option("--concurrency", concurrency, "Max concurrent requests");

  // train
  CommonOpts train_opts;
  std::string train_model = "lodfm";
  CLI::App* train = app.add_subcommand("train", "Train a model and write a checkpoint");
  add_common(train, train_opts);
  train->add_option("--model", train_model, "poprank | knn | bprmf | lodfm");

  // evaluate
  CommonOpts eval_opts;
  std::string eval_model = "lodfm", eval_checkpoint;
  CLI::App* evaluate = app.add_subcommand("evaluate", "Evaluate one model on the test split");
  add_common(evaluate, eval_opts);
  evaluate->add_option("--model", eval_model, "poprank | knn | bprmf | lodfm");
  evaluate->add_option("--checkpoint", eval_checkpoint,
                       "Checkpoint to load (lodfm or bprmf)");

  // compare
  CommonOpts cmp_opts;
  std::string cmp_models = "poprank,knn,bprmf,lodfm", significance;
  CLI::App* compare = app.add_subcommand(
      "compare", "Train and evaluate several models on an identical split");
  add_common(compare, cmp_opts);
  compare->add_option("--models", cmp_models, "Comma-separated model list");
  compare->add_option("--significance", significance,
                      "Baseline model for bootstrapped paired t-tests");

  // ablate
  CommonOpts abl_opts;
  CLI::App* ablate = app.add_subcommand(
      "ablate", "Compare the FM across feature sets PO, PO+SP, PO+PR, PO+SP+PR");
  add_common(ablate, abl_opts);

  // sweep: --m takes the list of dimensionalities here
  CommonOpts sweep_opts;
  std::string sweep_m = "10,50,100,150,200";
  CLI::App* sweep = app.add_subcommand(
      "sweep", "Train the FM across factorization dimensionalities");
  add_common(sweep, sweep_opts, true, false);
  sweep->add_option("--m,--m-values", sweep_m, "Comma-separated m list");

  CLI11_PARSE(app, argc, argv);

  try {
    if (fetch->parsed())
      return cmd_fetch_features(items_path, endpoint, fetch_cache, fetch_sets,
                                timeout, retries, backoff, concurrency);
    if (train->parsed()) return cmd_train(train_opts, train_model);
    if (evaluate->parsed()) return cmd_evaluate(eval_opts, eval_model, eval_checkpoint);
    if (compare->parsed()) {
      lodfm::ExperimentConfig config = to_config(cmp_opts);
      config.models.clear();
      for (const std::string& m : lodfm::split(cmp_models, ','))
        config.models.push_back(lodfm::trim(m));
      config.significance_baseline = significance;
      print_report(lodfm::run_comparison(config, &std::cerr));
      return 0;
    }
    if (ablate->parsed()) {
      print_report(lodfm::run_ablation(to_config(abl_opts), &std::cerr));
      return 0;
    }
    if (sweep->parsed()) {
      std::vector<std::size_t> m_values;
      for (const std::string& m : lodfm::split(sweep_m, ','))
        m_values.push_back(std::stoull(lodfm::trim(m)));
      print_report(lodfm::run_dim_sweep(to_config(sweep_opts), m_values, &std::cerr));
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
