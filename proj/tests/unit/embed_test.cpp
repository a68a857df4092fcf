#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "pilot/embed.hpp"
#include "pilot/error.hpp"
#include "pilot/random.hpp"
#include "test_support.hpp"

namespace pilot::embed {
namespace {

using testing::sample;
using testing::TempDir;

EmbeddingMatrix random_matrix(std::size_t n, std::size_t dim, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::string> ids;
  std::vector<float> values;
  for (std::size_t i = 0; i < n; ++i) {
    ids.push_back("row" + std::to_string(i));
    for (std::size_t m = 0; m < dim; ++m) values.push_back(static_cast<float>(rng.normal(0.0, 3.0)));
  }
  return EmbeddingMatrix(ids, dim, values);
}

// Little-endian writer independent of the library.
void put32(std::ofstream& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xFF));
}
void put64(std::ofstream& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xFF));
}

TEST(Tokenize, WordsAndPunctuation) {
  auto tokens = tokenize("if (n <= buf_len)\n\tx->y");
  // "->" is two single-character tokens
  const std::vector<std::string> want = {"if", "(", "n", "<", "=", "buf_len", ")", "x", "-", ">", "y"};
  EXPECT_EQ(tokens, want);
  EXPECT_TRUE(tokenize("  \n\t").empty());
}

TEST(HashEmbed, IdenticalCodeIdenticalRows) {
  const std::vector<corpus::CodeSample> s = {sample("a", "memcpy(dst, src, n);", 1),
                                             sample("b", "memcpy(dst, src, n);", 0)};
  const auto e = hash_embed(s, {});
  const auto ra = e.matrix.row("a");
  const auto rb = e.matrix.row("b");
  EXPECT_TRUE(std::equal(ra.begin(), ra.end(), rb.begin()));
}

TEST(HashEmbed, EmptyCodeIsZeroRow) {
  const std::vector<corpus::CodeSample> s = {sample("a", "", 0), sample("b", "x", 0)};
  const auto e = hash_embed(s, {16, 1, false});
  for (float v : e.matrix.row("a")) EXPECT_EQ(v, 0.0f);
  ASSERT_EQ(e.zero_rows.size(), 1u);
  EXPECT_EQ(e.zero_rows[0], "a");
}

TEST(HashEmbed, UnigramMassEqualsTokenCount) {
  const std::vector<corpus::CodeSample> s = {sample("a", "a b a", 0)};
  const auto e = hash_embed(s, {8, 1, false});
  const auto r = e.matrix.row("a");
  EXPECT_DOUBLE_EQ(std::accumulate(r.begin(), r.end(), 0.0), 3.0);
}

TEST(HashEmbed, NgramMassCountsEveryOrder) {
  // 5 tokens: 5 unigrams + 4 bigrams + 3 trigrams
  const std::vector<corpus::CodeSample> s = {sample("a", "x = f ( y", 0)};
  const auto e2 = hash_embed(s, {32, 2, false});
  const auto r2 = e2.matrix.row("a");
  EXPECT_DOUBLE_EQ(std::accumulate(r2.begin(), r2.end(), 0.0), 9.0);
  const auto e3 = hash_embed(s, {32, 3, false});
  const auto r3 = e3.matrix.row("a");
  EXPECT_DOUBLE_EQ(std::accumulate(r3.begin(), r3.end(), 0.0), 12.0);
}

TEST(HashEmbed, NormalizedRowsHaveUnitLength) {
  const std::vector<corpus::CodeSample> s = {sample("a", "int x = strlen(buf); return x;", 0)};
  const auto e = hash_embed(s, {64, 2, true});
  const auto r = e.matrix.row("a");
  double sq = 0.0;
  for (float v : r) sq += static_cast<double>(v) * v;
  EXPECT_NEAR(sq, 1.0, 1e-6);
}

TEST(HashEmbed, ConfigValidation) {
  const std::vector<corpus::CodeSample> s = {sample("a", "x", 0)};
  EXPECT_THROW(hash_embed(s, {4, 1, true}), Error);
  EXPECT_THROW(hash_embed(s, {16, 4, true}), Error);
  EXPECT_THROW(hash_embed({}, {}), Error);
}

TEST(EmbeddingFile, ReorderedOnLoad) {
  TempDir dir;
  const EmbeddingMatrix m({"a", "b"}, 2, {1, 2, 3, 4});
  write_embedding_file(dir / "e.bin", m);
  const std::vector<std::string> order = {"b", "a"};
  const auto loaded = load_embedding_file(dir / "e.bin", order);
  EXPECT_EQ(loaded.ids(), order);
  EXPECT_EQ(loaded.values(), (std::vector<float>{3, 4, 1, 2}));
}

TEST(EmbeddingFile, MissingAndExtraIdsAreAlignmentErrors) {
  TempDir dir;
  write_embedding_file(dir / "e.bin", EmbeddingMatrix({"a", "b"}, 2, {1, 2, 3, 4}));
  const std::vector<std::string> with_c = {"a", "b", "c"};
  try {
    load_embedding_file(dir / "e.bin", with_c);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kAlignment);
    EXPECT_NE(std::string(e.what()).find("c"), std::string::npos);
  }
  const std::vector<std::string> only_a = {"a"};
  EXPECT_THROW(load_embedding_file(dir / "e.bin", only_a), Error);
}

TEST(EmbeddingFile, BinaryRoundTripIsBitExact) {
  TempDir dir;
  const auto m = random_matrix(5, 16, 3);
  write_embedding_file(dir / "e.bin", m);
  EXPECT_EQ(read_embedding_file(dir / "e.bin"), m);
}

TEST(EmbeddingFile, TextRoundTripIsBitExact) {
  TempDir dir;
  const auto m = random_matrix(5, 16, 4);
  write_embedding_file(dir / "e.txt", m, EmbeddingFormat::kText);
  EXPECT_EQ(read_embedding_file(dir / "e.txt"), m);
}

TEST(EmbeddingFile, ReadsHandWrittenBinary) {
  TempDir dir;
  {
    std::ofstream out(dir / "h.bin", std::ios::binary);
    out.write("PUVD", 4);
    put32(out, 1);
    put32(out, 2);
    put64(out, 1);
    put32(out, 3);
    out.write("abc", 3);
    for (float v : {1.5f, -2.0f}) {
      std::uint32_t bits;
      std::memcpy(&bits, &v, 4);
      put32(out, bits);
    }
  }
  const auto m = read_embedding_file(dir / "h.bin");
  ASSERT_EQ(m.size(), 1u);
  EXPECT_EQ(m.ids()[0], "abc");
  EXPECT_EQ(m.values(), (std::vector<float>{1.5f, -2.0f}));
}

TEST(EmbeddingFile, CorruptInputsRejected) {
  TempDir dir;
  {
    std::ofstream out(dir / "trunc.bin", std::ios::binary);
    out.write("PUVD", 4);
    put32(out, 1);
    put32(out, 4);
    put64(out, 3);
  }
  EXPECT_THROW(read_embedding_file(dir / "trunc.bin"), Error);
  {
    std::ofstream out(dir / "ver.bin", std::ios::binary);
    out.write("PUVD", 4);
    put32(out, 7);
    put32(out, 4);
    put64(out, 0);
  }
  EXPECT_THROW(read_embedding_file(dir / "ver.bin"), Error);
  {
    std::ofstream out(dir / "nan.txt");
    out << "a 1 nan\n";
  }
  EXPECT_THROW(read_embedding_file(dir / "nan.txt"), Error);
  {
    std::ofstream out(dir / "ragged.txt");
    out << "a 1 2\nb 1\n";
  }
  EXPECT_THROW(read_embedding_file(dir / "ragged.txt"), Error);
  EXPECT_THROW(read_embedding_file(dir / "absent.bin"), Error);
}

TEST(EmbeddingMatrix, Invariants) {
  EXPECT_THROW(EmbeddingMatrix({"a"}, 2, {1.0f}), Error);
  EXPECT_THROW(EmbeddingMatrix({"a", "a"}, 1, {1.0f, 2.0f}), Error);
  EXPECT_THROW(EmbeddingMatrix({"a"}, 1, {std::numeric_limits<float>::infinity()}), Error);
  const EmbeddingMatrix m({"a", "b"}, 1, {1.0f, 2.0f});
  EXPECT_EQ(m.index_of("b"), 1u);
  EXPECT_THROW(m.index_of("z"), Error);
}

TEST(L1, HandValues) {
  EXPECT_EQ(l1_distance(std::vector<double>{1, 2, 3}, std::vector<double>{1, 2, 3}), 0.0);
  EXPECT_EQ(l1_distance(std::vector<double>{0, 0}, std::vector<double>{10, 10}), 20.0);
  EXPECT_THROW(l1_distance(std::vector<double>{0, 0}, std::vector<double>{1}), Error);
}

TEST(L1, MatchesIndependentLoop) {
  Rng rng(21);
  std::vector<float> u(32), v(32);
  for (int trial = 0; trial < 20; ++trial) {
    for (auto& x : u) x = static_cast<float>(rng.normal());
    for (auto& x : v) x = static_cast<float>(rng.normal());
    long double expected = 0;
    for (std::size_t m = 0; m < 32; ++m) expected += std::fabs(static_cast<long double>(u[m]) - v[m]);
    EXPECT_NEAR(l1_distance(std::span<const float>(u), std::span<const float>(v)),
                static_cast<double>(expected), 1e-12);
  }
}

TEST(L1, TriangleInequalityAndSymmetry) {
  Rng rng(5);
  std::vector<double> a(16), b(16), c(16);
  for (int trial = 0; trial < 200; ++trial) {
    for (auto* vec : {&a, &b, &c}) {
      for (auto& x : *vec) x = rng.normal(0.0, 5.0);
    }
    EXPECT_LE(l1_distance(a, c), l1_distance(a, b) + l1_distance(b, c) + 1e-9);
    EXPECT_EQ(l1_distance(a, b), l1_distance(b, a));
    EXPECT_GE(l1_distance(a, b), 0.0);
  }
}

}  // namespace
}  // namespace pilot::embed
