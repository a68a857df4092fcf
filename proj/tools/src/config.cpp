#include "pilot/cli/config.hpp"

#include <yaml-cpp/yaml.h>

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "pilot/error.hpp"

namespace pilot::cli {
namespace {

using Flat = std::map<std::string, YAML::Node>;

struct Field {
  std::string key;  // dotted path
  std::function<void(RunConfig&, const YAML::Node&)> read;
  std::function<YAML::Node(const RunConfig&)> write;
};

template <typename T>
T as(const YAML::Node& node, const std::string& key) {
  try {
    return node.as<T>();
  } catch (const YAML::Exception&) {
    throw Error(ErrorKind::kConfiguration, "invalid value for '" + key + "'");
  }
}

template <typename Convert>
auto as_enum(const YAML::Node& node, const std::string& key, Convert convert) {
  const auto text = as<std::string>(node, key);
  try {
    return convert(text);
  } catch (const Error& e) {
    throw Error(ErrorKind::kConfiguration, "invalid value for '" + key + "': " + e.message());
  }
}

std::size_t as_count(const YAML::Node& node, const std::string& key) {
  const auto v = as<long long>(node, key);
  if (v < 0) throw Error(ErrorKind::kConfiguration, "'" + key + "' must be non-negative");
  return static_cast<std::size_t>(v);
}

// Shortest text that parses back to the same double.
YAML::Node node_of(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return YAML::Node(std::string(buf, r.ptr));
}

template <typename T>
YAML::Node node_of(const T& v) {
  return YAML::Node(v);
}

YAML::Node seq(const std::vector<double>& values) {
  YAML::Node n(YAML::NodeType::Sequence);
  for (double v : values) n.push_back(node_of(v));
  n.SetStyle(YAML::EmitterStyle::Flow);
  return n;
}

#define PILOT_FIELD(key, type, member)                                                    \
  Field {                                                                                 \
    key, [](RunConfig& c, const YAML::Node& n) { c.member = as<type>(n, key); },         \
        [](const RunConfig& c) { return node_of(c.member); }                              \
  }
#define PILOT_COUNT(key, member)                                                          \
  Field {                                                                                 \
    key, [](RunConfig& c, const YAML::Node& n) { c.member = as_count(n, key); },         \
        [](const RunConfig& c) { return YAML::Node(c.member); }                           \
  }
#define PILOT_ENUM(key, member, from)                                                     \
  Field {                                                                                 \
    key, [](RunConfig& c, const YAML::Node& n) { c.member = as_enum(n, key, from); },    \
        [](const RunConfig& c) { return YAML::Node(to_string(c.member)); }                \
  }
#define PILOT_LIST(key, member)                                                           \
  Field {                                                                                 \
    key, [](RunConfig& c, const YAML::Node& n) { c.member = as<std::vector<double>>(n, key); }, \
        [](const RunConfig& c) { return seq(c.member); }                                  \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      PILOT_FIELD("dataset", std::string, dataset),
      PILOT_FIELD("output", std::string, output),
      Field{"seeds",
            [](RunConfig& c, const YAML::Node& n) {
              c.seeds = as<std::vector<std::uint64_t>>(n, "seeds");
            },
            [](const RunConfig& c) {
              YAML::Node n(YAML::NodeType::Sequence);
              for (auto s : c.seeds) n.push_back(s);
              n.SetStyle(YAML::EmitterStyle::Flow);
              return n;
            }},
      PILOT_FIELD("split_seed", std::uint64_t, experiment.split_seed),
      PILOT_ENUM("mode", experiment.mode, eval::pipeline_mode_from_string),
      PILOT_ENUM("validation", experiment.validation, eval::validation_mode_from_string),
      PILOT_FIELD("mixed_supervision", bool, experiment.mixed_supervision),

      PILOT_ENUM("embedding.source", embedding_source, embedding_source_from_string),
      PILOT_FIELD("embedding.path", std::string, embedding_path),
      PILOT_COUNT("embedding.dim", embedder.dim),
      PILOT_FIELD("embedding.ngram", int, embedder.ngram),
      PILOT_FIELD("embedding.normalize", bool, embedder.normalize),

      PILOT_FIELD("scar.label_frequency", double, experiment.scar.label_frequency_c),
      PILOT_ENUM("scar.mode", experiment.scar.mode, corpus::scar_mode_from_string),

      PILOT_ENUM("prototype.k_mode", experiment.prototype.k_mode, dls::k_mode_from_string),
      PILOT_FIELD("prototype.k", double, experiment.prototype.k_value),
      PILOT_FIELD("prototype.t_ratio", double, experiment.prototype.t_ratio),
      PILOT_ENUM("prototype.hn_count", experiment.prototype.hn_count_mode, dls::hn_count_mode_from_string),

      PILOT_FIELD("progressive.t_max", double, experiment.progressive.t_max),
      PILOT_FIELD("progressive.t_min", double, experiment.progressive.t_min),
      PILOT_COUNT("progressive.max_epochs", experiment.progressive.max_epochs),

      PILOT_COUNT("encoder.hidden", experiment.hidden),
      PILOT_COUNT("encoder.proj_dim", experiment.proj_dim),

      PILOT_FIELD("train.learning_rate", double, experiment.train.learning_rate),
      PILOT_COUNT("train.batch_size", experiment.train.batch_size),
      PILOT_COUNT("train.max_epochs", experiment.train.max_epochs),
      PILOT_FIELD("train.seed", std::uint64_t, experiment.train.seed),
      PILOT_ENUM("train.optimizer", experiment.train.optimizer, encoder::optimizer_from_string),
      PILOT_COUNT("train.patience", experiment.train.patience),
      PILOT_FIELD("train.beta1", double, experiment.train.beta1),
      PILOT_FIELD("train.beta2", double, experiment.train.beta2),
      PILOT_FIELD("train.epsilon", double, experiment.train.epsilon),

      PILOT_FIELD("mrl.alpha", double, experiment.mrl.alpha),
      PILOT_FIELD("mrl.tau", double, experiment.mrl.tau),
      PILOT_COUNT("mrl.batch", experiment.mrl.batch_B),
      PILOT_ENUM("mrl.reduction", experiment.mrl.reduction, mrl::reduction_from_string),
      PILOT_ENUM("mrl.anchor", experiment.mrl.anchor_mode, mrl::anchor_mode_from_string),

      PILOT_LIST("sweep.ratios", sweep.ratios),
      PILOT_LIST("sweep.k", sweep.k_values),
      PILOT_LIST("sweep.t_ratio", sweep.t_ratios),
  };
  return table;
}

#undef PILOT_FIELD
#undef PILOT_COUNT
#undef PILOT_ENUM
#undef PILOT_LIST

void flatten(const YAML::Node& node, const std::string& prefix, Flat& out) {
  if (node.IsMap()) {
    for (const auto& kv : node) {
      const auto key = kv.first.as<std::string>();
      flatten(kv.second, prefix.empty() ? key : prefix + "." + key, out);
    }
    return;
  }
  if (prefix.empty()) {
    if (node.IsNull()) return;  // empty document
    throw Error(ErrorKind::kConfiguration, "config must be a mapping");
  }
  out[prefix] = node;
}

void check(const std::string& section, const std::function<void()>& validate) {
  try {
    validate();
  } catch (const Error& e) {
    throw Error(ErrorKind::kConfiguration, section + ": " + e.message());
  }
}

}  // namespace

void RunConfig::validate() const {
  if (dataset.empty()) throw Error(ErrorKind::kConfiguration, "dataset: path is empty");
  if (output.empty()) throw Error(ErrorKind::kConfiguration, "output: path is empty");
  if (seeds.empty()) throw Error(ErrorKind::kConfiguration, "seeds: at least one seed is required");
  if (embedding_source == EmbeddingSource::kFile && embedding_path.empty()) {
    throw Error(ErrorKind::kConfiguration, "embedding.path: required when embedding.source is file");
  }
  check("embedding", [&] { embedder.validate(); });
  check("scar", [&] { experiment.scar.validate(); });
  check("prototype", [&] { experiment.prototype.validate(); });
  check("progressive", [&] { experiment.progressive.validate(); });
  check("train", [&] { experiment.train.validate(); });
  check("mrl", [&] { experiment.mrl.validate(); });
  check("encoder", [&] { experiment.validate(); });
  for (double r : sweep.ratios) {
    if (!(r > 0.0 && r <= 1.0)) throw Error(ErrorKind::kConfiguration, "sweep.ratios: values must be in (0, 1]");
  }
}

RunConfig parse_config_text(const std::string& text, const std::vector<std::string>& overrides) {
  Flat flat;
  try {
    flatten(YAML::Load(text), "", flat);
  } catch (const YAML::Exception& e) {
    throw Error(ErrorKind::kParse, std::string("config: ") + e.what());
  }
  for (const auto& assignment : overrides) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw Error(ErrorKind::kConfiguration, "override '" + assignment + "' is not key=value");
    }
    try {
      flat[assignment.substr(0, eq)] = YAML::Load(assignment.substr(eq + 1));
    } catch (const YAML::Exception& e) {
      throw Error(ErrorKind::kParse, "override '" + assignment + "': " + e.what());
    }
  }

  RunConfig cfg;
  std::map<std::string, const Field*> index;
  for (const auto& f : fields()) index[f.key] = &f;
  for (const auto& [key, node] : flat) {
    const auto it = index.find(key);
    if (it == index.end()) throw Error(ErrorKind::kConfiguration, "unknown config key '" + key + "'");
    it->second->read(cfg, node);
  }
  cfg.validate();
  return cfg;
}

RunConfig parse_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot read config " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config_text(buffer.str(), overrides);
}

std::string serialize_config(const RunConfig& cfg) {
  YAML::Node root(YAML::NodeType::Map);
  for (const auto& f : fields()) {
    const auto dot = f.key.find('.');
    if (dot == std::string::npos) {
      root[f.key] = f.write(cfg);
    } else {
      root[f.key.substr(0, dot)][f.key.substr(dot + 1)] = f.write(cfg);
    }
  }
  YAML::Emitter out;
  out.SetDoublePrecision(17);
  out << root;
  return std::string(out.c_str()) + "\n";
}

std::string to_string(EmbeddingSource source) { return source == EmbeddingSource::kFile ? "file" : "hash"; }

EmbeddingSource embedding_source_from_string(const std::string& text) {
  if (text == "hash") return EmbeddingSource::kHash;
  if (text == "file") return EmbeddingSource::kFile;
  throw Error(ErrorKind::kConfiguration, "unknown embedding source '" + text + "'");
}

}  // namespace pilot::cli
