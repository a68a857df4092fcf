#include "pilot/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "pilot/error.hpp"
#include "pilot/random.hpp"

namespace pilot::corpus {
namespace {

int read_binary_field(const nlohmann::json& record, const char* key, std::size_t line_no) {
  const auto& value = record.at(key);
  if (!value.is_number_integer() || (value.get<long long>() != 0 && value.get<long long>() != 1)) {
    throw Error(ErrorKind::kParse,
                "line " + std::to_string(line_no) + ": field '" + key + "' must be 0 or 1");
  }
  return value.get<int>();
}

CodeSample parse_record(const std::string& line, std::size_t line_no) {
  nlohmann::json record;
  try {
    record = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::kParse, "line " + std::to_string(line_no) + ": " + e.what());
  }
  if (!record.is_object()) {
    throw Error(ErrorKind::kParse, "line " + std::to_string(line_no) + ": record is not an object");
  }
  const auto id = record.find("id");
  const auto code = record.find("code");
  if (id == record.end() || !id->is_string()) {
    throw Error(ErrorKind::kParse, "line " + std::to_string(line_no) + ": missing string field 'id'");
  }
  if (code == record.end() || !code->is_string()) {
    throw Error(ErrorKind::kParse,
                "line " + std::to_string(line_no) + ": missing string field 'code'");
  }

  CodeSample sample;
  sample.id = id->get<std::string>();
  sample.code = code->get<std::string>();
  if (record.contains("truth") && !record["truth"].is_null()) {
    sample.truth = read_binary_field(record, "truth", line_no);
  }
  if (record.contains("selected") && !record["selected"].is_null()) {
    sample.selected = read_binary_field(record, "selected", line_no);
  }
  for (auto it = record.begin(); it != record.end(); ++it) {
    if (it.key() != "id" && it.key() != "code" && it.key() != "truth" && it.key() != "selected") {
      sample.extra[it.key()] = it.value();
    }
  }
  return sample;
}

}  // namespace

void ScarConfig::validate() const {
  if (!(label_frequency_c >= 0.0 && label_frequency_c <= 1.0)) {
    throw Error(ErrorKind::kConfiguration, "label_frequency_c must lie in [0, 1]");
  }
}

std::vector<CodeSample> parse_corpus(std::istream& in) {
  std::vector<CodeSample> samples;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    samples.push_back(parse_record(line, line_no));
  }
  validate_samples(samples);
  return samples;
}

std::vector<CodeSample> load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot open dataset " + path.string());
  return parse_corpus(in);
}

void write_corpus(std::ostream& out, std::span<const CodeSample> samples) {
  for (const auto& s : samples) {
    nlohmann::json record = s.extra;
    record["id"] = s.id;
    record["code"] = s.code;
    if (s.truth) record["truth"] = *s.truth;
    record["selected"] = s.selected;
    out << record.dump() << '\n';
  }
}

void write_corpus(const std::filesystem::path& path, std::span<const CodeSample> samples) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::kIo, "cannot write dataset " + path.string());
  write_corpus(out, samples);
}

void validate_samples(std::span<const CodeSample> samples) {
  std::unordered_set<std::string> seen;
  seen.reserve(samples.size());
  for (const auto& s : samples) {
    if (!seen.insert(s.id).second) {
      throw Error(ErrorKind::kValidation, "duplicate id '" + s.id + "'");
    }
    if (s.selected == 1 && s.truth && *s.truth == 0) {
      throw Error(ErrorKind::kValidation, "sample '" + s.id + "' is selected but has truth 0");
    }
  }
}

DatasetSplit split_dataset(std::span<const CodeSample> samples, std::uint64_t seed) {
  if (samples.size() < 10) {
    throw Error(ErrorKind::kSize, "split needs at least 10 samples, got " +
                                      std::to_string(samples.size()));
  }
  std::vector<std::string> ids;
  ids.reserve(samples.size());
  for (const auto& s : samples) ids.push_back(s.id);
  std::sort(ids.begin(), ids.end());

  Rng rng(seed);
  rng.shuffle(ids);

  const std::size_t held_out = samples.size() / 10;
  DatasetSplit split;
  split.seed = seed;
  const auto train_end = ids.begin() + static_cast<std::ptrdiff_t>(ids.size() - 2 * held_out);
  const auto valid_end = train_end + static_cast<std::ptrdiff_t>(held_out);
  split.train.assign(ids.begin(), train_end);
  split.valid.assign(train_end, valid_end);
  split.test.assign(valid_end, ids.end());
  return split;
}

ScarResult apply_scar(std::span<const CodeSample> samples, const ScarConfig& cfg) {
  cfg.validate();
  std::vector<std::size_t> positives;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    if (!s.truth) {
      throw Error(ErrorKind::kPrecondition, "sample '" + s.id + "' has no ground truth");
    }
    if (s.selected != 0) {
      throw Error(ErrorKind::kPrecondition, "sample '" + s.id + "' is already selected");
    }
    if (*s.truth == 1) positives.push_back(i);
  }

  ScarResult result{std::vector<CodeSample>(samples.begin(), samples.end()), 0};
  Rng rng(cfg.seed);
  if (cfg.mode == ScarMode::kBernoulli) {
    for (std::size_t i : positives) {
      if (rng.bernoulli(cfg.label_frequency_c)) {
        result.samples[i].selected = 1;
        ++result.labeled_count;
      }
    }
  } else {
    const auto count = static_cast<std::size_t>(
        std::llround(cfg.label_frequency_c * static_cast<double>(positives.size())));
    for (std::size_t k : rng.sample_without_replacement(positives.size(), count)) {
      result.samples[positives[k]].selected = 1;
    }
    result.labeled_count = count;
  }
  return result;
}

CorpusStats corpus_stats(std::span<const CodeSample> samples) {
  CorpusStats st;
  st.total = samples.size();
  for (const auto& s : samples) {
    if (s.truth) {
      ++st.with_truth;
      if (*s.truth == 1) ++st.positives;
    }
    if (s.selected == 1) ++st.selected;
  }
  if (st.with_truth > 0) st.class_prior = static_cast<double>(st.positives) / st.with_truth;
  if (st.total > 0) st.labeled_fraction = static_cast<double>(st.selected) / st.total;
  if (st.positives > 0) {
    st.observed_label_frequency = static_cast<double>(st.selected) / st.positives;
  }
  return st;
}

std::vector<CodeSample> subset(std::span<const CodeSample> samples,
                               std::span<const std::string> ids) {
  std::unordered_map<std::string_view, std::size_t> index;
  index.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) index.emplace(samples[i].id, i);
  std::vector<CodeSample> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    const auto it = index.find(id);
    if (it == index.end()) throw Error(ErrorKind::kAlignment, "unknown sample id '" + id + "'");
    out.push_back(samples[it->second]);
  }
  return out;
}

std::string to_string(ScarMode mode) {
  return mode == ScarMode::kBernoulli ? "bernoulli" : "exact";
}

ScarMode scar_mode_from_string(const std::string& text) {
  if (text == "exact") return ScarMode::kExactCount;
  if (text == "bernoulli") return ScarMode::kBernoulli;
  throw Error(ErrorKind::kConfiguration, "unknown SCAR mode '" + text + "'");
}

nlohmann::json to_json(const DatasetSplit& split) {
  return {{"seed", split.seed}, {"train", split.train}, {"valid", split.valid}, {"test", split.test}};
}

DatasetSplit split_from_json(const nlohmann::json& j) {
  DatasetSplit split;
  split.seed = j.at("seed").get<std::uint64_t>();
  split.train = j.at("train").get<std::vector<std::string>>();
  split.valid = j.at("valid").get<std::vector<std::string>>();
  split.test = j.at("test").get<std::vector<std::string>>();
  return split;
}

}  // namespace pilot::corpus
