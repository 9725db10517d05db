#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lodfm/baselines.hpp"
#include "lodfm/bpr.hpp"
#include "lodfm/errors.hpp"
#include "lodfm/feature_index.hpp"
#include "lodfm/fetcher.hpp"
#include "lodfm/fm.hpp"
#include "lodfm/knowledge.hpp"
#include "lodfm/metrics.hpp"
#include "lodfm/plot.hpp"
#include "lodfm/ratings.hpp"
#include "lodfm/util.hpp"

namespace lodfm {

struct ExperimentConfig {
  std::filesystem::path ratings_path;
  std::filesystem::path mapping_path;  // empty: items are their own URIs
  std::filesystem::path cache_dir;     // required when features are enabled
  std::filesystem::path output_dir;    // empty: nothing persisted
  FeatureConfig features;              // LOD feature sets for the FM
  std::vector<std::string> models{"poprank", "knn", "bprmf", "lodfm"};
  FmHyperparams fm;
  BprmfHyperparams bprmf;
  std::size_t knn_k = 80;
  std::uint64_t split_seed = 42;
  std::vector<std::size_t> eval_n{1, 5, 10};
  CandidateMode candidates = CandidateMode::all_unrated;
  std::string significance_baseline;  // empty: no significance testing
  std::size_t bootstrap_resamples = 10000;
  double significance_alpha = 0.01;

  void validate() const {
    if (ratings_path.empty()) throw StructuralError("ratings path is empty");
    if (models.empty()) throw StructuralError("no models selected");
    for (const std::string& m : models)
      if (m != "poprank" && m != "knn" && m != "bprmf" && m != "lodfm")
        throw StructuralError("unknown model '" + m + "'");
    if (eval_n.empty() || !std::is_sorted(eval_n.begin(), eval_n.end()))
      throw StructuralError("eval cutoffs must be non-empty and ascending");
    if (!significance_baseline.empty() &&
        std::find(models.begin(), models.end(), significance_baseline) == models.end())
      throw StructuralError("significance baseline '" + significance_baseline +
                            "' is not among the selected models");
  }

  // Everything that influences results; the output directory is excluded.
  nlohmann::json to_json() const {
    nlohmann::json j;
    j["ratings_path"] = ratings_path.string();
    j["mapping_path"] = mapping_path.string();
    j["cache_dir"] = cache_dir.string();
    j["features"] = features.to_string();
    j["models"] = models;
    j["fm"] = {{"factors", fm.factors},
               {"learn_rate", fm.learn_rate},
               {"l2_reg", fm.l2_reg},
               {"init_stddev", fm.init_stddev},
               {"max_epochs", fm.max_epochs},
               {"seed", fm.seed},
               {"pair_strategy",
                fm.pair_strategy == FmHyperparams::PairStrategy::sampled ? "sampled"
                                                                         : "full"},
               {"validation_fraction", fm.validation_fraction}};
    j["bprmf"] = {{"factors", bprmf.factors},
                  {"learn_rate", bprmf.learn_rate},
                  {"l2_reg", bprmf.l2_reg},
                  {"init_stddev", bprmf.init_stddev},
                  {"epochs", bprmf.epochs},
                  {"seed", bprmf.seed},
                  {"negatives", bprmf.negatives == NegativeMode::unseen
                                    ? "unseen"
                                    : "explicit"}};
    j["knn_k"] = knn_k;
    j["split_seed"] = split_seed;
    j["eval_n"] = eval_n;
    j["candidates"] = candidate_mode_name(candidates);
    j["significance_baseline"] = significance_baseline;
    j["bootstrap_resamples"] = bootstrap_resamples;
    j["significance_alpha"] = significance_alpha;
    return j;
  }

  std::string fingerprint() const { return fingerprint_hex(to_json().dump()); }
};

/// Inputs shared by every model of a run: the split dataset, its statistics
/// and the background knowledge for the requested feature sets.
struct ExperimentData {
  InteractionDataset dataset;
  DatasetStats stats;
  std::map<std::string, std::string> item_uri;
  std::map<std::string, ItemKnowledge> knowledge;
  std::string knowledge_fp;
};

inline ExperimentData prepare_experiment(const ExperimentConfig& config,
                                         FeatureConfig knowledge_sets) {
  config.validate();
  ExperimentData data;
  const std::vector<RatingRecord> records = load_ratings(config.ratings_path);
  std::map<std::string, std::string> mapping =
      config.mapping_path.empty() ? identity_mapping(records)
                                  : load_item_mapping(config.mapping_path);
  auto [dataset, stats] = binarize_and_stats(records, mapping);
  data.dataset = std::move(dataset);
  data.stats = stats;
  split_train_test(data.dataset, config.split_seed);

  for (const std::string& item : data.dataset.items()) {
    auto it = mapping.find(item);
    if (it != mapping.end()) data.item_uri[item] = it->second;
  }
  if (knowledge_sets.any()) {
    data.knowledge =
        load_knowledge_from_cache(config.cache_dir, data.item_uri, knowledge_sets);
    if (knowledge_sets.pr) apply_pagerank_normalization(data.knowledge);
  }
  data.knowledge_fp = knowledge_fingerprint(data.knowledge);
  return data;
}

// ---- scorers ------------------------------------------------------------

inline Scorer make_poprank_scorer(const InteractionDataset& data) {
  auto scores = std::make_shared<std::map<std::string, double>>(poprank_scores(data));
  return [scores](const std::string&, const std::string& item) {
    auto it = scores->find(item);
    return it == scores->end() ? 0.0 : it->second;
  };
}

inline Scorer make_knn_scorer(const InteractionDataset& data, std::size_t k) {
  auto sim = std::make_shared<ItemSimilarityMatrix>(ItemSimilarityMatrix::build(data, k));
  // Per-user positive training sets, materialized once.
  auto rated = std::make_shared<std::map<std::string, std::set<std::string>>>();
  for (const std::string& user : data.users()) {
    auto& set = (*rated)[user];
    for (const std::string& item : data.items_of(user, true, Partition::train))
      set.insert(item);
  }
  return [sim, rated](const std::string& user, const std::string& item) {
    auto u = rated->find(user);
    if (u == rated->end()) return 0.0;
    double score = 0.0;
    for (const auto& [neighbor, s] : sim->neighbors(item))
      if (u->second.count(neighbor)) score += s;
    return score;
  };
}

inline Scorer make_bprmf_scorer(std::shared_ptr<const MfModel> model) {
  return [model](const std::string& user, const std::string& item) {
    return model->score(user, item);
  };
}

inline Scorer make_fm_scorer(std::shared_ptr<const FmModel> model,
                             std::shared_ptr<const ExampleAssembler> assembler) {
  return [model, assembler](const std::string& user, const std::string& item) {
    return fm_predict(*model, assembler->assemble(user, item));
  };
}

// ---- run results ---------------------------------------------------------

struct ColumnResult {
  std::string id;
  MetricReport metrics;
  std::optional<TrainReport> train_report;
  std::string index_fingerprint;  // lodfm columns only
};

struct RunResult {
  std::string kind;  // compare | ablate | sweep
  ExperimentConfig config;
  DatasetStats stats;
  std::vector<ColumnResult> columns;
  // column id -> metric -> p-value against the baseline column
  std::map<std::string, std::map<std::string, double>> p_values;
  std::string baseline;
  std::string knowledge_fp;
  std::vector<double> sweep_x;  // m values, sweep runs only
};

namespace detail {

inline nlohmann::json stats_json(const DatasetStats& s) {
  return {{"users", s.users},
          {"items", s.items},
          {"ratings", s.ratings},
          {"avg_ratings_per_user", s.avg_ratings_per_user},
          {"sparsity", s.sparsity},
          {"positive_pct", s.positive_pct}};
}

inline nlohmann::json column_json(const ColumnResult& column) {
  nlohmann::json j;
  j["id"] = column.id;
  j["means"] = column.metrics.mean;
  nlohmann::json per_user;
  for (const auto& [metric, values] : column.metrics.per_user)
    per_user[metric] = values;
  j["per_user"] = per_user;
  if (!column.index_fingerprint.empty())
    j["index_fingerprint"] = column.index_fingerprint;
  if (column.train_report) {
    const TrainReport& tr = *column.train_report;
    nlohmann::json t;
    t["epochs_run"] = tr.epochs_run;
    if (tr.stopped_epoch)
      t["stopped_epoch"] = *tr.stopped_epoch;
    else
      t["stopped_epoch"] = nullptr;
    t["validation_losses"] = tr.validation_losses;
    t["final_train_loss"] = tr.final_train_loss;
    j["train_report"] = t;
  }
  return j;
}

inline std::string sanitize_filename(const std::string& id) {
  std::string out = id;
  for (char& c : out)
    if (!((c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9')))
      c = '_';
  return out;
}

}  // namespace detail

inline nlohmann::json run_to_json(const RunResult& run) {
  nlohmann::json j;
  j["kind"] = run.kind;
  j["config"] = run.config.to_json();
  j["config_fingerprint"] = run.config.fingerprint();
  j["knowledge_fingerprint"] = run.knowledge_fp;
  j["dataset_stats"] = detail::stats_json(run.stats);
  j["split"] = {{"strategy", "per-user stratified 80/20"},
                {"seed", run.config.split_seed}};
  if (!run.columns.empty()) j["evaluated_users"] = run.columns.front().metrics.users;
  nlohmann::json columns = nlohmann::json::array();
  for (const ColumnResult& c : run.columns) columns.push_back(detail::column_json(c));
  j["columns"] = columns;
  if (!run.baseline.empty()) {
    nlohmann::json sig;
    sig["baseline"] = run.baseline;
    sig["alpha"] = run.config.significance_alpha;
    sig["resamples"] = run.config.bootstrap_resamples;
    sig["p_values"] = run.p_values;
    j["significance"] = sig;
  }
  if (!run.sweep_x.empty()) j["sweep_m"] = run.sweep_x;
  return j;
}

// Aligned text table in the familiar layout: metrics as rows, one column per
// model/configuration. Significant columns (p < alpha vs the baseline) are
// starred.
inline std::string render_table(const RunResult& run) {
  std::vector<std::string> metric_rows = metric_names(run.config.eval_n);
  // Paper ordering: MRR, MAP, then nDCG/P/R per cutoff.
  std::ostringstream os;
  std::size_t label_w = 8;
  for (const std::string& m : metric_rows) label_w = std::max(label_w, m.size());
  std::vector<std::size_t> widths;
  os << std::left << std::setw(static_cast<int>(label_w)) << "metric";
  for (const ColumnResult& c : run.columns) {
    const std::size_t w = std::max<std::size_t>(c.id.size() + 2, 10);
    widths.push_back(w);
    os << " | " << std::right << std::setw(static_cast<int>(w)) << c.id;
  }
  os << "\n";
  os << std::string(label_w, '-');
  for (std::size_t w : widths) os << "-+-" << std::string(w, '-');
  os << "\n";
  for (const std::string& metric : metric_rows) {
    os << std::left << std::setw(static_cast<int>(label_w)) << metric;
    for (std::size_t c = 0; c < run.columns.size(); ++c) {
      const ColumnResult& col = run.columns[c];
      std::ostringstream cell;
      cell << std::fixed << std::setprecision(4) << col.metrics.mean.at(metric);
      auto pc = run.p_values.find(col.id);
      if (pc != run.p_values.end()) {
        auto pm = pc->second.find(metric);
        if (pm != pc->second.end() && pm->second < run.config.significance_alpha)
          cell << '*';
      }
      os << " | " << std::right << std::setw(static_cast<int>(widths[c]))
         << cell.str();
    }
    os << "\n";
  }
  if (!run.baseline.empty()) {
    os << "* p < " << run.config.significance_alpha << " vs " << run.baseline
       << " (bootstrapped paired t-test, " << run.config.bootstrap_resamples
       << " resamples)\n";
  }
  os << "split: per-user stratified 80/20 (seed " << run.config.split_seed
     << "); candidates: " << candidate_mode_name(run.config.candidates) << "\n";
  return os.str();
}

inline void write_series_csv(const RunResult& run, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  const std::vector<std::string> metrics = metric_names(run.config.eval_n);
  os << "m";
  for (const std::string& m : metrics) os << ',' << m;
  os << "\n";
  os << std::fixed << std::setprecision(6);
  for (std::size_t i = 0; i < run.columns.size(); ++i) {
    os << run.sweep_x[i];
    for (const std::string& m : metrics) os << ',' << run.columns[i].metrics.mean.at(m);
    os << "\n";
  }
}

inline void write_sweep_plots(const RunResult& run,
                              const std::filesystem::path& dir) {
  auto series_for = [&](const std::vector<std::string>& names) {
    std::map<std::string, std::vector<double>> series;
    for (const std::string& name : names) {
      std::vector<double>& ys = series[name];
      for (const ColumnResult& c : run.columns) ys.push_back(c.metrics.mean.at(name));
    }
    return series;
  };
  std::vector<std::string> ndcg_p, recall;
  for (std::size_t n : run.config.eval_n) {
    ndcg_p.push_back("nDCG@" + std::to_string(n));
    if (n != run.config.eval_n.front())
      ndcg_p.push_back("P@" + std::to_string(n));  // P at the lowest cutoff equals nDCG there
    recall.push_back("R@" + std::to_string(n));
  }
  write_svg_chart(dir / "sweep_mrr.svg", "MRR vs factorization dimensionality",
                  "m", run.sweep_x, series_for({"MRR"}));
  write_svg_chart(dir / "sweep_map.svg", "MAP vs factorization dimensionality",
                  "m", run.sweep_x, series_for({"MAP"}));
  write_svg_chart(dir / "sweep_ndcg_p.svg", "nDCG@N and P@N", "m", run.sweep_x,
                  series_for(ndcg_p));
  write_svg_chart(dir / "sweep_recall.svg", "Recall@N", "m", run.sweep_x,
                  series_for(recall));
}

// Writes report.json + report.txt (and, for sweeps, series.csv + SVG charts).
inline void emit_run(const RunResult& run, std::ostream* log = nullptr) {
  if (run.config.output_dir.empty()) return;
  std::filesystem::create_directories(run.config.output_dir);
  {
    std::ofstream os(run.config.output_dir / "report.json");
    if (!os) throw IoError("cannot write report.json");
    os << run_to_json(run).dump(2) << "\n";
  }
  {
    std::ofstream os(run.config.output_dir / "report.txt");
    if (!os) throw IoError("cannot write report.txt");
    os << render_table(run);
  }
  if (!run.sweep_x.empty()) {
    write_series_csv(run, run.config.output_dir / "series.csv");
    write_sweep_plots(run, run.config.output_dir);
  }
  if (log) *log << "wrote " << (run.config.output_dir / "report.json").string() << "\n";
}

namespace detail {

// Persist one finished column immediately so a failing later model does not
// discard completed work.
inline void persist_partial(const ExperimentConfig& config, const ColumnResult& column) {
  if (config.output_dir.empty()) return;
  std::filesystem::create_directories(config.output_dir);
  const std::filesystem::path path =
      config.output_dir / ("partial_" + sanitize_filename(column.id) + ".json");
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  os << column_json(column).dump(2) << "\n";
}

inline ColumnResult evaluate_column(const std::string& id,
                                    const ExperimentConfig& config,
                                    const InteractionDataset& dataset,
                                    const Scorer& scorer) {
  ColumnResult column;
  column.id = id;
  const std::vector<RankedList> rankings =
      rank_users(dataset, scorer, config.candidates);
  column.metrics = evaluate_rankings(id, rankings, config.eval_n);
  column.metrics.config_fingerprint = config.fingerprint();
  return column;
}

// Trains one model id against prepared data and evaluates it.
inline ColumnResult run_model_column(const std::string& model,
                                     const ExperimentConfig& config,
                                     const ExperimentData& data,
                                     FeatureConfig features, std::ostream* log) {
  if (log) *log << "training " << model << "...\n";
  if (model == "poprank") {
    return evaluate_column(model, config, data.dataset,
                           make_poprank_scorer(data.dataset));
  }
  if (model == "knn") {
    return evaluate_column(model, config, data.dataset,
                           make_knn_scorer(data.dataset, config.knn_k));
  }
  if (model == "bprmf") {
    auto mf = std::make_shared<MfModel>(bprmf_train(data.dataset, config.bprmf));
    return evaluate_column(model, config, data.dataset, make_bprmf_scorer(mf));
  }
  if (model == "lodfm") {
    FeatureIndex index = FeatureIndex::build(data.dataset.users(),
                                             data.dataset.items(), data.knowledge,
                                             features);
    auto assembler = std::make_shared<ExampleAssembler>(index, data.knowledge);
    auto [fm, report] = train_fm_early_stopping(
        PairPool::from_dataset(data.dataset, Partition::train,
                               NegativeMode::explicit_dislikes),
        *assembler, config.fm);
    auto model_ptr = std::make_shared<FmModel>(std::move(fm));
    ColumnResult column = evaluate_column(model, config, data.dataset,
                                          make_fm_scorer(model_ptr, assembler));
    column.train_report = report;
    column.index_fingerprint = index.fingerprint();
    return column;
  }
  throw StructuralError("unknown model '" + model + "'");
}

inline void add_significance(RunResult& run) {
  if (run.config.significance_baseline.empty()) return;
  const ColumnResult* baseline = nullptr;
  for (const ColumnResult& c : run.columns)
    if (c.id == run.config.significance_baseline) baseline = &c;
  if (!baseline) return;
  run.baseline = baseline->id;
  for (const ColumnResult& c : run.columns) {
    if (c.id == baseline->id) continue;
    for (const auto& [metric, values] : c.metrics.per_user) {
      const BootstrapResult r = bootstrap_paired_ttest(
          values, baseline->metrics.per_user.at(metric),
          run.config.bootstrap_resamples, derive_seed(run.config.split_seed, 99));
      run.p_values[c.id][metric] = r.p_value;
    }
  }
}

}  // namespace detail

// Trains every selected model on the identical split and evaluates all of
// them under the identical candidate protocol.
inline RunResult run_comparison(const ExperimentConfig& config,
                                std::ostream* log = nullptr) {
  RunResult run;
  run.kind = "compare";
  run.config = config;
  const bool needs_lod =
      config.features.any() &&
      std::find(config.models.begin(), config.models.end(), "lodfm") != config.models.end();
  const ExperimentData data =
      prepare_experiment(config, needs_lod ? config.features : FeatureConfig{});
  run.stats = data.stats;
  run.knowledge_fp = data.knowledge_fp;
  for (const std::string& model : config.models) {
    ColumnResult column =
        detail::run_model_column(model, config, data, config.features, log);
    detail::persist_partial(config, column);
    run.columns.push_back(std::move(column));
  }
  detail::add_significance(run);
  emit_run(run, log);
  return run;
}

// One FM per feature configuration at a fixed m and seed, mirroring the
// feature-set ablation table.
inline RunResult run_ablation(const ExperimentConfig& config,
                              std::ostream* log = nullptr) {
  RunResult run;
  run.kind = "ablate";
  run.config = config;
  FeatureConfig all;
  all.po = all.sp = all.pr = true;
  const ExperimentData data = prepare_experiment(config, all);
  run.stats = data.stats;
  run.knowledge_fp = data.knowledge_fp;
  const std::vector<std::pair<std::string, FeatureConfig>> sets = {
      {"PO", FeatureConfig{true, false, false}},
      {"PO+SP", FeatureConfig{true, true, false}},
      {"PO+PR", FeatureConfig{true, false, true}},
      {"PO+SP+PR", FeatureConfig{true, true, true}},
  };
  for (const auto& [label, features] : sets) {
    if (log) *log << "training lodfm with features " << label << "...\n";
    FeatureIndex index = FeatureIndex::build(data.dataset.users(),
                                             data.dataset.items(), data.knowledge,
                                             features);
    auto assembler = std::make_shared<ExampleAssembler>(index, data.knowledge);
    auto [fm, report] = train_fm_early_stopping(
        PairPool::from_dataset(data.dataset, Partition::train,
                               NegativeMode::explicit_dislikes),
        *assembler, config.fm);
    auto model_ptr = std::make_shared<FmModel>(std::move(fm));
    ColumnResult column = detail::evaluate_column(
        label, config, data.dataset, make_fm_scorer(model_ptr, assembler));
    column.train_report = report;
    column.index_fingerprint = index.fingerprint();
    detail::persist_partial(config, column);
    run.columns.push_back(std::move(column));
  }
  detail::add_significance(run);
  emit_run(run, log);
  return run;
}

// One FM per dimensionality at fixed seed and features; emits plot-ready
// series beside the per-m metrics.
inline RunResult run_dim_sweep(const ExperimentConfig& config,
                               std::vector<std::size_t> m_values,
                               std::ostream* log = nullptr) {
  if (m_values.empty()) throw StructuralError("empty m list");
  std::sort(m_values.begin(), m_values.end());
  const std::size_t before = m_values.size();
  m_values.erase(std::unique(m_values.begin(), m_values.end()), m_values.end());
  if (m_values.size() != before && log)
    *log << "warning: duplicate m values removed from sweep\n";

  RunResult run;
  run.kind = "sweep";
  run.config = config;
  const ExperimentData data = prepare_experiment(config, config.features);
  run.stats = data.stats;
  run.knowledge_fp = data.knowledge_fp;

  FeatureIndex index = FeatureIndex::build(data.dataset.users(),
                                           data.dataset.items(), data.knowledge,
                                           config.features);
  auto assembler = std::make_shared<ExampleAssembler>(index, data.knowledge);
  const PairPool pool = PairPool::from_dataset(data.dataset, Partition::train,
                                               NegativeMode::explicit_dislikes);
  for (std::size_t m : m_values) {
    if (log) *log << "training lodfm with m=" << m << "...\n";
    FmHyperparams hp = config.fm;
    hp.factors = m;
    auto [fm, report] = train_fm_early_stopping(pool, *assembler, hp);
    auto model_ptr = std::make_shared<FmModel>(std::move(fm));
    ColumnResult column =
        detail::evaluate_column("m=" + std::to_string(m), config, data.dataset,
                                make_fm_scorer(model_ptr, assembler));
    column.train_report = report;
    column.index_fingerprint = index.fingerprint();
    detail::persist_partial(config, column);
    run.columns.push_back(std::move(column));
    run.sweep_x.push_back(static_cast<double>(m));
  }
  emit_run(run, log);
  return run;
}

}  // namespace lodfm
