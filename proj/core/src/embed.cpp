#include "pilot/embed.hpp"

#include <spdlog/spdlog.h>

#include <array>
#include <bit>
#include <cctype>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <unordered_set>

namespace pilot::embed {
namespace {

constexpr std::array<char, 4> kMagic = {'P', 'U', 'V', 'D'};
constexpr std::uint32_t kFormatVersion = 1;

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

std::uint64_t fnv1a(std::uint64_t h, std::string_view bytes) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= kFnvPrime;
  }
  return h;
}

template <typename T>
void put_le(std::ostream& out, T value) {
  static_assert(std::is_integral_v<T>);
  std::array<char, sizeof(T)> buf{};
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    buf[i] = static_cast<char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xFF);
  }
  out.write(buf.data(), buf.size());
}

template <typename T>
T get_le(std::istream& in, const std::filesystem::path& path) {
  std::array<unsigned char, sizeof(T)> buf{};
  if (!in.read(reinterpret_cast<char*>(buf.data()), buf.size())) {
    throw Error(ErrorKind::kCorruption, "truncated embedding file " + path.string());
  }
  std::uint64_t value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) value |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return static_cast<T>(value);
}

std::string list_offenders(const std::vector<std::string>& ids) {
  std::string out;
  for (std::size_t i = 0; i < ids.size() && i < 10; ++i) {
    if (i) out += ", ";
    out += "'" + ids[i] + "'";
  }
  if (ids.size() > 10) out += ", ... (" + std::to_string(ids.size()) + " total)";
  return out;
}

EmbeddingMatrix read_binary(std::istream& in, const std::filesystem::path& path) {
  const auto version = get_le<std::uint32_t>(in, path);
  if (version != kFormatVersion) {
    throw Error(ErrorKind::kCorruption, "unsupported embedding format version " +
                                            std::to_string(version) + " in " + path.string());
  }
  const auto dim = get_le<std::uint32_t>(in, path);
  const auto count = get_le<std::uint64_t>(in, path);
  if (dim == 0) throw Error(ErrorKind::kCorruption, "embedding file declares dim 0");

  std::vector<std::string> ids;
  std::vector<float> values;
  ids.reserve(count);
  values.reserve(count * dim);
  for (std::uint64_t r = 0; r < count; ++r) {
    const auto len = get_le<std::uint32_t>(in, path);
    std::string id(len, '\0');
    if (!in.read(id.data(), len)) {
      throw Error(ErrorKind::kCorruption, "truncated id in " + path.string());
    }
    for (std::uint32_t m = 0; m < dim; ++m) {
      values.push_back(std::bit_cast<float>(get_le<std::uint32_t>(in, path)));
    }
    ids.push_back(std::move(id));
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw Error(ErrorKind::kCorruption, "trailing bytes after declared records in " + path.string());
  }
  return EmbeddingMatrix(std::move(ids), dim, std::move(values));
}

EmbeddingMatrix read_text(std::istream& in, const std::filesystem::path& path) {
  std::vector<std::string> ids;
  std::vector<float> values;
  std::size_t dim = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream fields(line);
    std::string id;
    if (!(fields >> id)) continue;
    std::size_t row_dim = 0;
    std::string token;
    while (fields >> token) {
      float v = 0.0f;
      const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
      if (ec != std::errc() || ptr != token.data() + token.size()) {
        // from_chars rejects "nan"/"inf" spellings on some inputs; fall back to strtof.
        char* end = nullptr;
        v = std::strtof(token.c_str(), &end);
        if (end != token.c_str() + token.size()) {
          throw Error(ErrorKind::kCorruption, path.string() + ":" + std::to_string(line_no) +
                                                  ": bad value '" + token + "'");
        }
      }
      values.push_back(v);
      ++row_dim;
    }
    if (dim == 0) dim = row_dim;
    if (row_dim != dim || dim == 0) {
      throw Error(ErrorKind::kCorruption, path.string() + ":" + std::to_string(line_no) +
                                              ": expected " + std::to_string(dim) + " values");
    }
    ids.push_back(std::move(id));
  }
  if (ids.empty()) throw Error(ErrorKind::kCorruption, "empty embedding file " + path.string());
  return EmbeddingMatrix(std::move(ids), dim, std::move(values));
}

}  // namespace

EmbeddingMatrix::EmbeddingMatrix(std::vector<std::string> ids, std::size_t dim,
                                 std::vector<float> values)
    : ids_(std::move(ids)), dim_(dim), values_(std::move(values)) {
  if (dim_ == 0) throw Error(ErrorKind::kDimension, "embedding dim must be positive");
  if (values_.size() != ids_.size() * dim_) {
    throw Error(ErrorKind::kDimension, "embedding has " + std::to_string(values_.size()) +
                                           " values for " + std::to_string(ids_.size()) +
                                           " rows of dim " + std::to_string(dim_));
  }
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!std::isfinite(values_[i])) {
      throw Error(ErrorKind::kCorruption,
                  "non-finite value in row '" + ids_[i / dim_] + "' column " +
                      std::to_string(i % dim_));
    }
  }
  index_.reserve(ids_.size());
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    if (!index_.emplace(ids_[i], i).second) {
      throw Error(ErrorKind::kCorruption, "duplicate embedding id '" + ids_[i] + "'");
    }
  }
}

std::size_t EmbeddingMatrix::index_of(const std::string& id) const {
  const auto it = index_.find(id);
  if (it == index_.end()) throw Error(ErrorKind::kAlignment, "no embedding for id '" + id + "'");
  return it->second;
}

EmbeddingMatrix EmbeddingMatrix::select(std::span<const std::string> ids) const {
  std::vector<std::string> missing;
  for (const auto& id : ids) {
    if (!contains(id)) missing.push_back(id);
  }
  if (!missing.empty()) {
    throw Error(ErrorKind::kAlignment, "ids missing from embeddings: " + list_offenders(missing));
  }
  std::vector<float> values;
  values.reserve(ids.size() * dim_);
  for (const auto& id : ids) {
    const auto r = row(id);
    values.insert(values.end(), r.begin(), r.end());
  }
  return EmbeddingMatrix(std::vector<std::string>(ids.begin(), ids.end()), dim_, std::move(values));
}

void EmbedderConfig::validate() const {
  if (dim < 8) throw Error(ErrorKind::kConfiguration, "embedder dim must be at least 8");
  if (ngram < 1 || ngram > 3) throw Error(ErrorKind::kConfiguration, "ngram must be 1, 2 or 3");
}

std::vector<std::string> tokenize(const std::string& code) {
  std::vector<std::string> tokens;
  std::size_t i = 0;
  const auto is_word = [](unsigned char c) { return std::isalnum(c) || c == '_' || c >= 0x80; };
  while (i < code.size()) {
    const auto c = static_cast<unsigned char>(code[i]);
    if (std::isspace(c)) {
      ++i;
    } else if (is_word(c)) {
      std::size_t j = i;
      while (j < code.size() && is_word(static_cast<unsigned char>(code[j]))) ++j;
      tokens.emplace_back(code.substr(i, j - i));
      i = j;
    } else {
      tokens.emplace_back(1, code[i]);
      ++i;
    }
  }
  return tokens;
}

HashEmbedding hash_embed(std::span<const corpus::CodeSample> samples, const EmbedderConfig& cfg) {
  cfg.validate();
  if (samples.empty()) throw Error(ErrorKind::kPrecondition, "hash_embed needs at least one sample");

  HashEmbedding out;
  std::vector<std::string> ids;
  std::vector<float> values(samples.size() * cfg.dim, 0.0f);
  ids.reserve(samples.size());

  std::vector<double> counts(cfg.dim);
  for (std::size_t r = 0; r < samples.size(); ++r) {
    ids.push_back(samples[r].id);
    std::fill(counts.begin(), counts.end(), 0.0);
    const auto tokens = tokenize(samples[r].code);
    for (int order = 1; order <= cfg.ngram; ++order) {
      const auto n = static_cast<std::size_t>(order);
      for (std::size_t start = 0; start + n <= tokens.size(); ++start) {
        const char order_tag = static_cast<char>('0' + order);
        std::uint64_t h = fnv1a(kFnvOffset, std::string_view(&order_tag, 1));
        for (std::size_t t = start; t < start + n; ++t) {
          h = fnv1a(h, tokens[t]);
          h = fnv1a(h, std::string_view("\x1f", 1));
        }
        counts[h % cfg.dim] += 1.0;
      }
    }
    if (tokens.empty()) {
      out.zero_rows.push_back(samples[r].id);
      if (cfg.normalize) spdlog::warn("sample '{}' has no tokens; embedding left at zero", samples[r].id);
      continue;
    }
    double scale = 1.0;
    if (cfg.normalize) {
      double sq = 0.0;
      for (double v : counts) sq += v * v;
      scale = 1.0 / std::sqrt(sq);
    }
    float* row = values.data() + r * cfg.dim;
    for (std::size_t m = 0; m < cfg.dim; ++m) row[m] = static_cast<float>(counts[m] * scale);
  }
  out.matrix = EmbeddingMatrix(std::move(ids), cfg.dim, std::move(values));
  return out;
}

void write_embedding_file(const std::filesystem::path& path, const EmbeddingMatrix& matrix,
                          EmbeddingFormat format) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  if (format == EmbeddingFormat::kText) {
    char buf[32];
    for (std::size_t i = 0; i < matrix.size(); ++i) {
      out << matrix.ids()[i];
      for (float v : matrix.row(i)) {
        // 9 significant digits round-trip any float exactly.
        std::snprintf(buf, sizeof(buf), " %.9g", static_cast<double>(v));
        out << buf;
      }
      out << '\n';
    }
    return;
  }
  out.write(kMagic.data(), kMagic.size());
  put_le<std::uint32_t>(out, kFormatVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(matrix.dim()));
  put_le<std::uint64_t>(out, matrix.size());
  for (std::size_t i = 0; i < matrix.size(); ++i) {
    const auto& id = matrix.ids()[i];
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(id.size()));
    out.write(id.data(), static_cast<std::streamsize>(id.size()));
    for (float v : matrix.row(i)) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
  }
  if (!out) throw Error(ErrorKind::kIo, "write failed for " + path.string());
}

EmbeddingMatrix read_embedding_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open embedding file " + path.string());
  std::array<char, 4> head{};
  in.read(head.data(), head.size());
  if (in.gcount() == 4 && head == kMagic) return read_binary(in, path);
  in.clear();
  in.seekg(0);
  return read_text(in, path);
}

EmbeddingMatrix load_embedding_file(const std::filesystem::path& path,
                                    std::span<const std::string> ids) {
  const auto file = read_embedding_file(path);
  std::unordered_set<std::string_view> requested(ids.begin(), ids.end());
  std::vector<std::string> extra;
  for (const auto& id : file.ids()) {
    if (!requested.count(id)) extra.push_back(id);
  }
  std::vector<std::string> missing;
  for (const auto& id : ids) {
    if (!file.contains(id)) missing.push_back(id);
  }
  if (!missing.empty()) {
    throw Error(ErrorKind::kAlignment, "ids missing from " + path.string() + ": " +
                                           list_offenders(missing));
  }
  if (!extra.empty()) {
    throw Error(ErrorKind::kAlignment, "unexpected ids in " + path.string() + ": " +
                                           list_offenders(extra));
  }
  return file.select(ids);
}

}  // namespace pilot::embed
