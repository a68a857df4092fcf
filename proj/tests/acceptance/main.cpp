// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <spdlog/spdlog.h>

#include "oracles.hpp"
#include "pilot/dls.hpp"
#include "pilot/embed.hpp"
#include "pilot/encoder.hpp"
#include "pilot/error.hpp"
#include "pilot/eval.hpp"
#include "pilot/random.hpp"
#include "pilot/synthetic.hpp"
#include "test_support.hpp"

using namespace pilot;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string line(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), format, args...);
  return buf;
}

// Snapshot checker shared by every progressive run below.
struct LedgerAudit {
  std::size_t snapshots = 0;
  std::size_t runs = 0;
  std::vector<std::string> violations;
  std::optional<dls::PseudoLabelLedger> previous;

  dls::ProgressiveHooks hooks() {
    dls::ProgressiveHooks h;
    h.on_epoch = [this](std::size_t epoch, const dls::PseudoLabelLedger& ledger, const encoder::EncoderModel&) {
      ++snapshots;
      try {
        if (epoch == 0) {
          ++runs;
          dls::check_ledger_invariants(ledger);
        } else if (previous) {
          dls::check_ledger_growth(*previous, ledger);
        }
        for (const auto& [id, stamp] : ledger.hn()) {
          if (stamp > epoch) throw Error(ErrorKind::kValidation, "stamp from the future on " + id);
        }
        for (const auto& [id, stamp] : ledger.hp()) {
          if (stamp > epoch) throw Error(ErrorKind::kValidation, "stamp from the future on " + id);
        }
      } catch (const Error& e) {
        violations.push_back(e.what());
      }
      previous = ledger;
    };
    return h;
  }
};

Outcome distance_oracle() {
  const auto t0 = Clock::now();
  const std::size_t dims[] = {4, 32, 128};
  std::size_t mismatches = 0;
  for (std::size_t inst = 0; inst < 100; ++inst) {
    Rng rng(1000 + inst);
    const std::size_t dim = dims[inst % 3];
    const std::size_t n = 20 + rng.index(181);  // 20..200
    const std::size_t n_pos = 1 + rng.index(n - 1);
    const bool integral = inst % 4 == 0;  // small integer grid forces distance ties
    std::vector<std::string> ids;
    std::vector<float> values;
    for (std::size_t i = 0; i < n; ++i) {
      ids.push_back("r" + std::to_string(rng.next_u64() % 1000000) + "_" + std::to_string(i));
      for (std::size_t m = 0; m < dim; ++m) {
        values.push_back(integral ? static_cast<float>(rng.index(3)) : static_cast<float>(rng.normal(0.0, 2.0)));
      }
    }
    const embed::EmbeddingMatrix emb(ids, dim, values);
    std::vector<std::string> order = ids;
    rng.shuffle(order);
    const std::vector<std::string> pos(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_pos));
    const std::vector<std::string> unl(order.begin() + static_cast<std::ptrdiff_t>(n_pos), order.end());
    const std::size_t k = 1 + rng.index(n_pos);
    dls::PrototypeConfig cfg;
    cfg.k_mode = dls::KMode::kCount;
    cfg.k_value = static_cast<double>(k);
    const auto got = dls::prototype_distances(emb, pos, unl, cfg);
    const auto want = testing::brute_force_distances(emb, pos, unl, k);
    for (std::size_t i = 0; i < unl.size(); ++i) {
      if (got.ids[i] != unl[i] || got.d_sum[i] != want.d_sum[i] || got.d_mean[i] != want.d_mean[i]) ++mismatches;
    }
  }
  const double secs = seconds_since(t0);
  return {mismatches == 0 && secs < 30.0, line("100 instances, %zu mismatching rows, %.2fs (limit 30s)", mismatches, secs)};
}

Outcome hn_precision() {
  const auto t0 = Clock::now();
  double total = 0.0;
  double worst = 1.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    synthetic::ClusterSpec spec;
    spec.n_positive = 400;  // 100 labeled + 300 unlabeled
    spec.n_negative = 700;
    spec.dim = 16;
    spec.separation = 5.0;
    spec.seed = seed;
    const auto data = synthetic::gaussian_clusters(spec);
    std::vector<std::string> pos(data.positive_ids.begin(), data.positive_ids.begin() + 100);
    std::vector<std::string> unl(data.positive_ids.begin() + 100, data.positive_ids.end());
    unl.insert(unl.end(), data.negative_ids.begin(), data.negative_ids.end());
    dls::PrototypeConfig cfg;
    cfg.k_mode = dls::KMode::kFraction;
    cfg.k_value = 0.3;
    cfg.t_ratio = 0.3;
    const auto dist = dls::prototype_distances(data.embeddings, pos, unl, cfg);
    const auto hn = dls::select_hn(dist, unl.size(), pos.size(), cfg);
    std::size_t correct = 0;
    for (const auto& id : hn) correct += data.truth.at(id) == 0;
    const double p = hn.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(hn.size());
    total += p;
    worst = std::min(worst, p);
  }
  const double mean = total / 10.0;
  const double secs = seconds_since(t0);
  return {mean >= 0.99 && secs < 60.0,
          line("mean precision %.4f over 10 seeds (min %.4f, need >= 0.99), %.2fs (limit 60s)", mean, worst, secs)};
}

Outcome gradient_fidelity() {
  const encoder::Objective objectives[] = {encoder::Objective::kCrossEntropy, encoder::Objective::kSelfContrastive,
                                           encoder::Objective::kWeakContrastive, encoder::Objective::kMetric};
  const char* names[] = {"ce", "self", "weak", "metric"};
  double worst[4] = {0, 0, 0, 0};
  const std::size_t models = 60;
  for (std::uint64_t trial = 0; trial < models; ++trial) {
    Rng rng(5000 + trial);
    const std::size_t dim = 3 + rng.index(4);
    const std::size_t hidden = 2 + rng.index(4);
    const std::size_t proj = 2 + rng.index(3);
    const std::size_t B = 3 + rng.index(2);
    const auto data = testing::random_training_set(8, dim, rng);
    const auto model = encoder::EncoderModel::initialize({dim, hidden, proj}, 9000 + trial);
    const auto batch = testing::contrast_batch(data, B, rng);
    for (int o = 0; o < 4; ++o) {
      encoder::LossOptions opt{objectives[o], {}};
      opt.mrl.tau = 0.5;
      opt.mrl.alpha = rng.uniform(0.0, 1.0);
      const auto analytic = encoder::grad(model, data, batch, opt);
      const auto numeric = testing::numeric_gradient(model, data, batch, opt, 1e-4);
      worst[o] = std::max(worst[o], testing::max_relative_error(analytic, numeric));
    }
  }
  const double all = *std::max_element(worst, worst + 4);
  return {all <= 1e-4, line("%zu models, max relative error %s %.2e, %s %.2e, %s %.2e, %s %.2e (limit 1e-4)", models,
                           names[0], worst[0], names[1], worst[1], names[2], worst[2], names[3], worst[3])};
}

Outcome weight_schedule() {
  const double expected[] = {5.0 / 6.0, 4.0 / 6.0, 3.0 / 6.0, 2.0 / 6.0, 1.0 / 6.0};
  bool exact = true;
  std::string got;
  for (std::size_t e = 1; e <= 5; ++e) {
    const double w = dls::epoch_weight(e, 5);
    exact = exact && w == expected[e - 1];
    got += line("%s%.17g", e == 1 ? "" : ", ", w);
  }
  return {exact, "E_m = 5 weights (" + got + ")"};
}

Outcome scar_statistics() {
  const auto samples = testing::labeled_samples(1000, 1000);
  std::vector<double> counts;
  bool subset = true;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto r = corpus::apply_scar(samples, {0.3, seed, corpus::ScarMode::kBernoulli});
    counts.push_back(static_cast<double>(r.labeled_count));
    for (const auto& s : r.samples) subset = subset && (s.selected == 0 || s.truth == 1);
  }
  const double mean = std::accumulate(counts.begin(), counts.end(), 0.0) / 100.0;
  double ss = 0.0;
  for (double c : counts) ss += (c - mean) * (c - mean);
  const double se = std::sqrt(ss / 99.0) / 10.0;
  const bool ok = std::fabs(mean - 300.0) <= 3.0 * se && subset;
  return {ok, line("mean labeled %.2f, standard error %.3f, |mean - 300| = %.2f (limit %.3f), labeled subset of positives: %s",
                  mean, se, std::fabs(mean - 300.0), 3.0 * se, subset ? "yes" : "no")};
}

Outcome metric_formulas() {
  const double a = 100.0 * eval::f1_score(0.4914, 0.8238);
  const double b = 100.0 * eval::f1_score(0.4083, 0.4734);
  const auto sym = eval::metrics_from_counts(1, 1, 1, 1);
  const bool ok = std::fabs(a - 61.56) <= 0.05 && std::fabs(b - 43.84) <= 0.05 && sym.f1 == 0.5 && sym.accuracy == 0.5;
  return {ok, line("F1(49.14, 82.38) = %.4f, F1(40.83, 47.34) = %.4f, symmetric confusion F1 %.2f", a, b, sym.f1)};
}

struct CodeSetup {
  std::vector<corpus::CodeSample> samples;
  embed::EmbeddingMatrix emb;
  eval::ExperimentConfig cfg;
};

CodeSetup code_setup() {
  synthetic::CodeCorpusSpec spec;
  spec.n_samples = 1000;
  spec.cross_rate = 0.2;
  spec.seed = 7;
  CodeSetup s;
  s.samples = synthetic::code_corpus(spec);
  s.emb = embed::hash_embed(s.samples, {256, 1, true}).matrix;
  s.cfg.hidden = 32;
  s.cfg.proj_dim = 16;
  return s;
}

const std::vector<std::uint64_t> kSeeds = {1, 2, 3};

double mean_f1(const CodeSetup& s, eval::PipelineMode mode, double ratio, LedgerAudit& audit) {
  auto cfg = s.cfg;
  cfg.mode = mode;
  cfg.scar.label_frequency_c = ratio;
  eval::SeedRunOptions options;
  options.hooks = audit.hooks();
  return eval::run_pu_experiment(s.samples, s.emb, cfg, kSeeds, options).mean.f1;
}

Outcome mislabel_recovery(LedgerAudit& audit) {
  synthetic::ClusterSpec spec;
  spec.n_positive = 300;
  spec.n_negative = 700;
  spec.separation = 10.0;
  spec.seed = 11;
  const auto data = synthetic::gaussian_clusters(spec);

  std::vector<corpus::CodeSample> samples;
  for (const auto& id : data.embeddings.ids()) samples.push_back(testing::sample(id, "", data.truth.at(id)));
  eval::ExperimentConfig cfg;
  cfg.hidden = 32;
  cfg.proj_dim = 16;
  cfg.scar.label_frequency_c = 0.3;
  const auto split = corpus::split_dataset(samples, cfg.split_seed);

  // Flip the 5 training positives closest to the positive centroid.
  const std::size_t dim = data.embeddings.dim();
  std::vector<double> centroid(dim, 0.0);
  for (const auto& id : data.positive_ids) {
    const auto row = data.embeddings.row(id);
    for (std::size_t m = 0; m < dim; ++m) centroid[m] += row[m];
  }
  for (auto& v : centroid) v /= static_cast<double>(data.positive_ids.size());
  std::vector<std::pair<double, std::string>> core;
  for (const auto& id : split.train) {
    if (data.truth.at(id) != 1) continue;
    core.emplace_back(embed::l1_distance(std::span<const float>(data.embeddings.row(id)),
                                         std::span<const double>(centroid)),
                      id);
  }
  std::sort(core.begin(), core.end());
  std::vector<std::string> flipped;
  for (std::size_t i = 0; i < 5; ++i) flipped.push_back(core[i].second);
  for (auto& s : samples) {
    if (std::find(flipped.begin(), flipped.end(), s.id) != flipped.end()) s.truth = 0;
  }

  eval::SeedRunOptions options;
  options.hooks = audit.hooks();
  const auto outcome = eval::run_seed(samples, data.embeddings, split, cfg, 1, options);
  const auto report = eval::mislabel_report(outcome.ledger, eval::truth_labels(samples), outcome.confidences);
  std::size_t found = 0;
  for (const auto& e : report.entries) {
    found += std::find(flipped.begin(), flipped.end(), e.id) != flipped.end();
  }
  return {found >= 4, line("recovered %zu of 5 planted flips (need >= 4); report has %zu entries", found,
                          report.entries.size())};
}

}  // namespace

int main() {
  spdlog::set_level(spdlog::level::warn);
  std::vector<std::pair<std::string, std::function<Outcome()>>> checks;
  LedgerAudit audit;
  std::optional<CodeSetup> setup;
  double pilot_at_10 = NAN;
  double e2e_secs = 0.0;

  checks.emplace_back("distance oracle", distance_oracle);
  checks.emplace_back("HN precision", hn_precision);
  checks.emplace_back("gradient fidelity", gradient_fidelity);
  checks.emplace_back("weight schedule", weight_schedule);
  checks.emplace_back("SCAR statistics", scar_statistics);
  checks.emplace_back("metric formulas", metric_formulas);
  checks.emplace_back("end-to-end PU benefit", [&] {
    const auto t0 = Clock::now();
    setup = code_setup();
    pilot_at_10 = mean_f1(*setup, eval::PipelineMode::kPilot, 0.1, audit);
    const double naive = mean_f1(*setup, eval::PipelineMode::kNaive, 0.1, audit);
    e2e_secs = seconds_since(t0);
    return Outcome{pilot_at_10 >= naive + 0.05 && e2e_secs < 300.0,
                   line("10%% labeled, 3-seed mean F1 pipeline %.4f vs baseline %.4f (need +0.05), %.1fs (limit 300s)",
                       pilot_at_10, naive, e2e_secs)};
  });
  checks.emplace_back("mislabel recovery", [&] { return mislabel_recovery(audit); });
  checks.emplace_back("ratio sweep trend", [&] {
    if (!setup) setup = code_setup();
    const double full = mean_f1(*setup, eval::PipelineMode::kPilot, 1.0, audit);
    return Outcome{full > pilot_at_10, line("mean F1 at 100%% %.4f vs 10%% %.4f", full, pilot_at_10)};
  });
  // Runs last so it covers every progressive run above.
  checks.emplace_back("ledger invariants", [&] {
    const bool ok = audit.violations.empty() && audit.runs > 0;
    return Outcome{ok, line("%zu progressive runs, %zu snapshots, %zu violations%s%s", audit.runs, audit.snapshots,
                           audit.violations.size(), ok ? "" : ": ",
                           audit.violations.empty() ? "" : audit.violations.front().c_str())};
  });

  int failures = 0;
  for (const auto& [name, check] : checks) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria failed\n", failures, checks.size());
  return failures == 0 ? 0 : 1;
}
