#pragma once

#include <array>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>

#include "pilot/cli/config.hpp"

namespace pilot::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitStage = 1;
inline constexpr int kExitUsage = 2;

inline constexpr std::array<std::string_view, 7> kCommands = {
    "prep", "simulate-pu", "select", "train", "evaluate", "report", "sweep"};

struct Context {
  std::filesystem::path workdir = ".";
  std::ostream* out = nullptr;  // progress lines; null is quiet
};

/// Run directory layout, rooted at workdir/output:
///   config.yaml, split.json, embeddings.bin, metrics.json, sweep.json, sweep.csv
///   seed-<s>/pu.jsonl, ledger.jsonl, selection.ckpt, progress.json, model.ckpt, mislabels.csv
struct RunPaths {
  std::filesystem::path root;

  std::filesystem::path config() const { return root / "config.yaml"; }
  std::filesystem::path split() const { return root / "split.json"; }
  std::filesystem::path embeddings() const { return root / "embeddings.bin"; }
  std::filesystem::path metrics() const { return root / "metrics.json"; }
  std::filesystem::path sweep_json() const { return root / "sweep.json"; }
  std::filesystem::path sweep_csv() const { return root / "sweep.csv"; }
  std::filesystem::path seed_dir(std::uint64_t seed) const;
  std::filesystem::path pu(std::uint64_t seed) const { return seed_dir(seed) / "pu.jsonl"; }
  std::filesystem::path ledger(std::uint64_t seed) const { return seed_dir(seed) / "ledger.jsonl"; }
  std::filesystem::path selection(std::uint64_t seed) const { return seed_dir(seed) / "selection.ckpt"; }
  std::filesystem::path progress(std::uint64_t seed) const { return seed_dir(seed) / "progress.json"; }
  std::filesystem::path model(std::uint64_t seed) const { return seed_dir(seed) / "model.ckpt"; }
  std::filesystem::path mislabels(std::uint64_t seed) const { return seed_dir(seed) / "mislabels.csv"; }
};

RunPaths run_paths(const RunConfig& cfg, const Context& ctx);

bool is_command(std::string_view command);

/// Runs one command. Returns kExitOk, kExitStage on any pipeline error, or
/// kExitUsage for an unknown command. Every command writes the config it ran
/// with to the run directory.
int dispatch(const std::string& command, const RunConfig& cfg, const Context& ctx);

}  // namespace pilot::cli
