#pragma once

#include <cmath>
#include <concepts>
#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "pilot/corpus.hpp"
#include "pilot/error.hpp"

namespace pilot::embed {

/// Dense per-sample vectors, row-aligned with `ids()`. Rows are stored as
/// 32-bit floats, the precision of the interchange file, so a write/load cycle
/// is bit-exact. All arithmetic over rows is carried out in double.
class EmbeddingMatrix {
 public:
  EmbeddingMatrix() = default;
  // Throws on shape mismatch, duplicate ids or non-finite entries.
  EmbeddingMatrix(std::vector<std::string> ids, std::size_t dim, std::vector<float> values);

  std::size_t size() const { return ids_.size(); }
  std::size_t dim() const { return dim_; }
  const std::vector<std::string>& ids() const { return ids_; }
  const std::vector<float>& values() const { return values_; }

  std::span<const float> row(std::size_t i) const {
    return {values_.data() + i * dim_, dim_};
  }
  std::span<const float> row(const std::string& id) const { return row(index_of(id)); }

  bool contains(const std::string& id) const { return index_.count(id) != 0; }
  std::size_t index_of(const std::string& id) const;

  // Rows for `ids`, in that order. Missing ids raise an alignment error.
  EmbeddingMatrix select(std::span<const std::string> ids) const;

  bool operator==(const EmbeddingMatrix& other) const {
    return ids_ == other.ids_ && dim_ == other.dim_ && values_ == other.values_;
  }

 private:
  std::vector<std::string> ids_;
  std::size_t dim_ = 0;
  std::vector<float> values_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct EmbedderConfig {
  std::size_t dim = 256;
  int ngram = 2;
  bool normalize = true;

  void validate() const;
  bool operator==(const EmbedderConfig&) const = default;
};

struct HashEmbedding {
  EmbeddingMatrix matrix;
  // Samples whose code produced no tokens; their rows are zero even when
  // normalization is requested.
  std::vector<std::string> zero_rows;
};

/// Splits source text into identifier/number runs and single punctuation
/// characters; whitespace separates tokens and is dropped.
std::vector<std::string> tokenize(const std::string& code);

/// Bag of hashed token n-grams (orders 1..ngram), FNV-1a into `dim` buckets.
HashEmbedding hash_embed(std::span<const corpus::CodeSample> samples, const EmbedderConfig& cfg);

enum class EmbeddingFormat { kBinary, kText };

void write_embedding_file(const std::filesystem::path& path, const EmbeddingMatrix& matrix,
                          EmbeddingFormat format = EmbeddingFormat::kBinary);

// Reads every row in file order. Format is detected from the magic bytes.
EmbeddingMatrix read_embedding_file(const std::filesystem::path& path);

// Reads the file and aligns rows to `ids`; any missing or extra id is an error.
EmbeddingMatrix load_embedding_file(const std::filesystem::path& path,
                                    std::span<const std::string> ids);

template <std::floating_point A, std::floating_point B>
double l1_distance(std::span<const A> u, std::span<const B> v) {
  if (u.size() != v.size()) {
    throw Error(ErrorKind::kDimension, "l1_distance over lengths " + std::to_string(u.size()) +
                                           " and " + std::to_string(v.size()));
  }
  double total = 0.0;
  for (std::size_t m = 0; m < u.size(); ++m) {
    total += std::fabs(static_cast<double>(u[m]) - static_cast<double>(v[m]));
  }
  return total;
}

inline double l1_distance(const std::vector<double>& u, const std::vector<double>& v) {
  return l1_distance(std::span<const double>(u), std::span<const double>(v));
}

}  // namespace pilot::embed
