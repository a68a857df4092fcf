#include "pilot/cli/commands.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <nlohmann/json.hpp>
#include <ostream>
#include <set>

#include "pilot/corpus.hpp"
#include "pilot/dls.hpp"
#include "pilot/encoder.hpp"
#include "pilot/error.hpp"
#include "pilot/eval.hpp"

namespace pilot::cli {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Stage {
  const RunConfig& cfg;
  const Context& ctx;
  RunPaths paths;

  template <typename... Args>
  void say(const Args&... args) const {
    if (!ctx.out) return;
    ((*ctx.out) << ... << args) << '\n';
  }

  void require(const fs::path& path, const std::string& producer) const {
    if (!fs::exists(path)) {
      throw Error(ErrorKind::kStage, "missing " + path.string() + "; run `" + producer + "` first");
    }
  }

  std::vector<corpus::CodeSample> samples() const {
    const auto path = ctx.workdir / cfg.dataset;
    if (!fs::exists(path)) throw Error(ErrorKind::kStage, "dataset not found: " + path.string());
    auto s = corpus::load_corpus(path);
    corpus::validate_samples(s);
    return s;
  }

  static std::vector<std::string> ids_of(std::span<const corpus::CodeSample> samples) {
    std::vector<std::string> ids;
    ids.reserve(samples.size());
    for (const auto& s : samples) ids.push_back(s.id);
    return ids;
  }

  embed::EmbeddingMatrix embeddings(std::span<const corpus::CodeSample> samples) const {
    require(paths.embeddings(), "prep");
    return embed::load_embedding_file(paths.embeddings(), ids_of(samples));
  }

  corpus::DatasetSplit split() const {
    require(paths.split(), "prep");
    std::ifstream in(paths.split());
    return corpus::split_from_json(json::parse(in));
  }

  eval::PuScenario scenario(std::uint64_t seed) const {
    require(paths.pu(seed), "simulate-pu");
    return eval::scenario_from_samples(corpus::load_corpus(paths.pu(seed)), seed);
  }

  dls::PseudoLabelLedger ledger(const eval::PuScenario& pu) const {
    require(paths.ledger(pu.seed), "select");
    return dls::read_ledger(paths.ledger(pu.seed), cfg.experiment.progressive.max_epochs,
                            std::set<std::string>(pu.positives.begin(), pu.positives.end()));
  }

  encoder::EncoderModel model(const fs::path& path, const std::string& producer) const {
    require(path, producer);
    return encoder::load_checkpoint(path);
  }

  void prep() const {
    const auto s = samples();
    const auto split = corpus::split_dataset(s, cfg.experiment.split_seed);
    write_json(paths.split(), corpus::to_json(split));

    embed::EmbeddingMatrix emb;
    if (cfg.embedding_source == EmbeddingSource::kHash) {
      auto hashed = embed::hash_embed(s, cfg.embedder);
      if (!hashed.zero_rows.empty()) say(hashed.zero_rows.size(), " samples produced no tokens");
      emb = std::move(hashed.matrix);
    } else {
      const auto path = ctx.workdir / cfg.embedding_path;
      if (!fs::exists(path)) throw Error(ErrorKind::kStage, "embedding file not found: " + path.string());
      emb = embed::load_embedding_file(path, ids_of(s));
    }
    embed::write_embedding_file(paths.embeddings(), emb);
    const auto stats = corpus::corpus_stats(s);
    say("prep: ", s.size(), " samples, dim ", emb.dim(), ", split ", split.train.size(), "/",
        split.valid.size(), "/", split.test.size(), ", class prior ", stats.class_prior);
  }

  void simulate_pu() const {
    const auto s = samples();
    const auto sp = split();
    for (auto seed : cfg.seeds) {
      const auto pu = eval::simulate_pu(s, sp, cfg.experiment, seed);
      fs::create_directories(paths.seed_dir(seed));
      corpus::write_corpus(paths.pu(seed), pu.samples);
      say("simulate-pu: seed ", seed, " labeled ", pu.positives.size(), " of ", pu.samples.size());
    }
  }

  void select() const {
    const auto s = samples();
    const auto emb = embeddings(s);
    const auto sp = split();
    for (auto seed : cfg.seeds) {
      const auto pu = scenario(seed);
      const auto valid = eval::validation_set(s, emb, sp, pu.positives, cfg.experiment, seed);
      const auto sel = eval::select_stage(emb, pu, valid, cfg.experiment);
      dls::write_ledger(paths.ledger(seed), sel.ledger);
      encoder::save_checkpoint(paths.selection(seed), sel.model);
      write_json(paths.progress(seed), {{"seed", seed},
                                        {"validation", eval::to_string(cfg.experiment.validation)},
                                        {"hn_initial", sel.hn_initial},
                                        {"epochs_run", sel.progress.epochs_run},
                                        {"stopped_early", sel.progress.stopped_early},
                                        {"valid_accuracy", finite_or_null(sel.progress.valid_accuracy)},
                                        {"added_per_epoch", sel.progress.added_per_epoch}});
      say("select: seed ", seed, " HN ", sel.ledger.hn().size(), " HP ", sel.ledger.hp().size());
    }
  }

  void train() const {
    const auto s = samples();
    const auto emb = embeddings(s);
    const auto sp = split();
    for (auto seed : cfg.seeds) {
      const auto pu = scenario(seed);
      eval::SelectionOutcome sel;
      sel.ledger = ledger(pu);
      sel.model = model(paths.selection(seed), "select");
      const auto valid = eval::validation_set(s, emb, sp, pu.positives, cfg.experiment, seed);
      encoder::save_checkpoint(paths.model(seed), eval::train_stage(emb, pu, sel, valid, cfg.experiment));
      say("train: seed ", seed, " -> ", paths.model(seed).string());
    }
  }

  void evaluate() const {
    const auto s = samples();
    const auto emb = embeddings(s);
    const auto sp = split();
    const auto truth = eval::truth_labels(s);
    eval::LabelMap test_truth;
    for (const auto& id : sp.test) {
      const auto it = truth.find(id);
      if (it == truth.end()) throw Error(ErrorKind::kStage, "test sample '" + id + "' has no ground truth");
      test_truth[id] = it->second;
    }

    json seeds = json::array();
    std::vector<eval::MetricsReport> reports;
    for (auto seed : cfg.seeds) {
      const auto pu = scenario(seed);
      const auto m = model(paths.model(seed), "train");
      const auto led = ledger(pu);
      const auto report = eval::compute_metrics(eval::predict_labels(m, emb, sp.test), test_truth);
      reports.push_back(report);
      seeds.push_back({{"seed", seed},
                       {"labeled", pu.positives.size()},
                       {"hn", led.hn().size()},
                       {"hp", led.hp().size()},
                       {"hn_precision", nan_to_null(eval::pseudo_label_precision(led.hn(), truth, 0))},
                       {"hp_precision", nan_to_null(eval::pseudo_label_precision(led.hp(), truth, 1))},
                       {"metrics", eval::to_json(report)}});
      say("evaluate: seed ", seed, " F1 ", report.f1);
    }
    auto mean = eval::average_reports(reports);
    mean.per_seed.clear();
    write_json(paths.metrics(), {{"config", serialize_config(cfg)},
                                 {"mode", eval::to_string(cfg.experiment.mode)},
                                 {"validation", eval::to_string(cfg.experiment.validation)},
                                 {"seeds", seeds},
                                 {"mean", eval::to_json(mean)}});
    say("evaluate: mean F1 ", mean.f1, " precision ", mean.precision, " recall ", mean.recall);
  }

  void report() const {
    const auto s = samples();
    const auto emb = embeddings(s);
    const auto truth = eval::truth_labels(s);
    for (auto seed : cfg.seeds) {
      const auto pu = scenario(seed);
      const auto led = ledger(pu);
      const auto m = model(paths.model(seed), "train");
      const auto r = eval::mislabel_report(led, truth, eval::ledger_confidences(m, emb, led));
      eval::write_mislabel_csv(paths.mislabels(seed), r);
      say("report: seed ", seed, " ", r.entries.size(), " pseudo-labels disagree with ground truth");
    }
  }

  void sweep() const {
    const auto s = samples();
    const auto emb = embeddings(s);
    json rows = json::array();
    std::ofstream csv(paths.sweep_csv());
    if (!csv) throw Error(ErrorKind::kIo, "cannot write " + paths.sweep_csv().string());
    csv << "ratio,k,t_ratio,f1,precision,recall,accuracy\n";
    for (double ratio : cfg.sweep.ratios) {
      for (double k : cfg.sweep.k_values) {
        for (double t : cfg.sweep.t_ratios) {
          auto exp = cfg.experiment;
          exp.scar.label_frequency_c = ratio;
          exp.prototype.k_value = k;
          exp.prototype.t_ratio = t;
          const auto result = eval::run_pu_experiment(s, emb, exp, cfg.seeds);
          json per_seed = json::array();
          for (const auto& o : result.seeds) {
            per_seed.push_back(o.ok ? json{{"seed", o.seed}, {"f1", o.metrics.f1}}
                                    : json{{"seed", o.seed}, {"error", o.error}});
          }
          rows.push_back({{"ratio", ratio},
                          {"k", k},
                          {"t_ratio", t},
                          {"f1", result.mean.f1},
                          {"precision", result.mean.precision},
                          {"recall", result.mean.recall},
                          {"accuracy", result.mean.accuracy},
                          {"per_seed", per_seed}});
          csv << std::setprecision(6) << ratio << ',' << k << ',' << t << ',' << result.mean.f1 << ','
              << result.mean.precision << ',' << result.mean.recall << ',' << result.mean.accuracy << '\n';
          say("sweep: ratio ", ratio, " k ", k, " t_ratio ", t, " F1 ", result.mean.f1);
        }
      }
    }
    write_json(paths.sweep_json(), {{"config", serialize_config(cfg)}, {"rows", rows}});
  }

  static json nan_to_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

  static json finite_or_null(const std::vector<double>& values) {
    json out = json::array();
    for (double v : values) out.push_back(nan_to_null(v));
    return out;
  }

  static void write_json(const fs::path& path, const json& doc) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
    out << doc.dump(2) << '\n';
  }
};

}  // namespace

fs::path RunPaths::seed_dir(std::uint64_t seed) const { return root / ("seed-" + std::to_string(seed)); }

RunPaths run_paths(const RunConfig& cfg, const Context& ctx) { return RunPaths{ctx.workdir / cfg.output}; }

bool is_command(std::string_view command) {
  return std::find(kCommands.begin(), kCommands.end(), command) != kCommands.end();
}

int dispatch(const std::string& command, const RunConfig& cfg, const Context& ctx) {
  if (!is_command(command)) {
    spdlog::error("unknown command '{}'", command);
    return kExitUsage;
  }
  const Stage stage{cfg, ctx, run_paths(cfg, ctx)};
  try {
    cfg.validate();
    fs::create_directories(stage.paths.root);
    {
      std::ofstream out(stage.paths.config());
      if (!out) throw Error(ErrorKind::kIo, "cannot write " + stage.paths.config().string());
      out << serialize_config(cfg);
    }
    if (command == "prep") stage.prep();
    else if (command == "simulate-pu") stage.simulate_pu();
    else if (command == "select") stage.select();
    else if (command == "train") stage.train();
    else if (command == "evaluate") stage.evaluate();
    else if (command == "report") stage.report();
    else stage.sweep();
  } catch (const Error& e) {
    spdlog::error("{}: {}", command, e.what());
    return kExitStage;
  } catch (const std::exception& e) {
    spdlog::error("{}: {}", command, e.what());
    return kExitStage;
  }
  return kExitOk;
}

}  // namespace pilot::cli
