#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "pilot/corpus.hpp"
#include "pilot/error.hpp"
#include "test_support.hpp"

namespace pilot::corpus {
namespace {

using testing::labeled_samples;
using testing::sample;

std::vector<CodeSample> parse(const std::string& text) {
  std::istringstream in(text);
  return parse_corpus(in);
}

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorKind::kStage;
}

TEST(Corpus, ThreeRecordsInFileOrder) {
  const auto s = parse(R"({"id":"b","code":"x","truth":1}
{"id":"a","code":"y","truth":0}
{"id":"c","code":"z"}
)");
  ASSERT_EQ(s.size(), 3u);
  EXPECT_EQ(s[0].id, "b");
  EXPECT_EQ(s[1].id, "a");
  EXPECT_EQ(s[2].id, "c");
  EXPECT_EQ(s[0].truth, 1);
  EXPECT_FALSE(s[2].truth.has_value());
}

TEST(Corpus, DuplicateIdRejected) {
  EXPECT_EQ(kind_of([] { parse("{\"id\":\"f1\",\"code\":\"a\"}\n{\"id\":\"f1\",\"code\":\"b\"}\n"); }),
            ErrorKind::kValidation);
}

TEST(Corpus, MissingSelectedDefaultsToZeroAndRoundTrips) {
  const auto s = parse(R"({"id":"a","code":"int x;","truth":1,"project":"qemu","commit":"abc"})");
  ASSERT_EQ(s.size(), 1u);
  EXPECT_EQ(s[0].selected, 0);
  EXPECT_EQ(s[0].extra.at("project"), "qemu");

  std::ostringstream out;
  write_corpus(out, s);
  const auto again = parse(out.str());
  EXPECT_EQ(again, s);
}

TEST(Corpus, ParseErrorsNameTheLine) {
  try {
    parse("{\"id\":\"a\",\"code\":\"x\"}\n\n{not json}\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kParse);
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
  }
  EXPECT_EQ(kind_of([] { parse(R"({"id":"a"})"); }), ErrorKind::kParse);
  EXPECT_EQ(kind_of([] { parse(R"({"id":"a","code":"x","truth":2})"); }), ErrorKind::kParse);
}

TEST(Corpus, SelectedNegativeRejected) {
  EXPECT_EQ(kind_of([] { parse(R"({"id":"a","code":"x","truth":0,"selected":1})"); }),
            ErrorKind::kValidation);
}

TEST(Corpus, FileRoundTrip) {
  testing::TempDir dir;
  auto s = labeled_samples(5, 2);
  s[1].selected = 1;
  s[3].code = "line one\n\"quoted\"\ttab";
  write_corpus(dir / "c.jsonl", s);
  EXPECT_EQ(load_corpus(dir / "c.jsonl"), s);
  EXPECT_EQ(kind_of([&] { load_corpus(dir / "missing.jsonl"); }), ErrorKind::kIo);
}

TEST(Split, TenSamplesGiveEightOneOne) {
  for (std::uint64_t seed : {0u, 1u, 99u}) {
    const auto split = split_dataset(labeled_samples(10, 3), seed);
    EXPECT_EQ(split.train.size(), 8u);
    EXPECT_EQ(split.valid.size(), 1u);
    EXPECT_EQ(split.test.size(), 1u);
  }
}

TEST(Split, SameSeedSameSplit) {
  const auto s = labeled_samples(100, 30);
  EXPECT_EQ(split_dataset(s, 7), split_dataset(s, 7));
  EXPECT_NE(split_dataset(s, 7), split_dataset(s, 8));
}

TEST(Split, LargeCorpusSizes) {
  const auto split = split_dataset(labeled_samples(22361, 100), 3);
  EXPECT_EQ(split.train.size(), 17889u);
  EXPECT_EQ(split.valid.size(), 2236u);
  EXPECT_EQ(split.test.size(), 2236u);
}

TEST(Split, PartitionIsDisjointAndCovering) {
  const auto s = labeled_samples(57, 10);
  const auto split = split_dataset(s, 11);
  std::set<std::string> all;
  for (const auto* part : {&split.train, &split.valid, &split.test}) all.insert(part->begin(), part->end());
  EXPECT_EQ(all.size(), s.size());
  EXPECT_EQ(split.train.size() + split.valid.size() + split.test.size(), s.size());
}

TEST(Split, InputOrderIrrelevant) {
  auto s = labeled_samples(40, 10);
  const auto a = split_dataset(s, 5);
  std::reverse(s.begin(), s.end());
  EXPECT_EQ(split_dataset(s, 5), a);
}

TEST(Split, TooSmallIsSizeError) {
  EXPECT_EQ(kind_of([] { split_dataset(labeled_samples(9, 3), 0); }), ErrorKind::kSize);
}

TEST(Split, JsonRoundTrip) {
  const auto split = split_dataset(labeled_samples(30, 10), 2);
  EXPECT_EQ(split_from_json(to_json(split)), split);
}

std::size_t count_selected(const ScarResult& r) {
  return static_cast<std::size_t>(
      std::count_if(r.samples.begin(), r.samples.end(), [](const CodeSample& s) { return s.selected == 1; }));
}

TEST(Scar, FullFrequencySelectsEveryPositive) {
  const auto s = labeled_samples(50, 20);
  for (auto mode : {ScarMode::kExactCount, ScarMode::kBernoulli}) {
    const auto r = apply_scar(s, {1.0, 4, mode});
    EXPECT_EQ(r.labeled_count, 20u);
    for (const auto& x : r.samples) EXPECT_EQ(x.selected, *x.truth);
  }
}

TEST(Scar, ZeroFrequencySelectsNothing) {
  const auto s = labeled_samples(50, 20);
  for (auto mode : {ScarMode::kExactCount, ScarMode::kBernoulli}) {
    const auto r = apply_scar(s, {0.0, 4, mode});
    EXPECT_EQ(r.labeled_count, 0u);
    EXPECT_EQ(count_selected(r), 0u);
  }
}

TEST(Scar, BernoulliCountWithinThreeSigma) {
  const auto s = labeled_samples(1000, 1000);
  const auto r = apply_scar(s, {0.3, 1, ScarMode::kBernoulli});
  const double band = 3.0 * std::sqrt(1000 * 0.3 * 0.7);
  EXPECT_NEAR(static_cast<double>(r.labeled_count), 300.0, band);
}

TEST(Scar, ExactModeCount) {
  const auto r = apply_scar(labeled_samples(100, 45), {0.3, 9, ScarMode::kExactCount});
  EXPECT_EQ(r.labeled_count, 14u);  // round(13.5) away from zero
  EXPECT_EQ(count_selected(r), 14u);
}

TEST(Scar, LabeledAreAlwaysPositives) {
  const auto s = labeled_samples(200, 60);
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    for (auto mode : {ScarMode::kExactCount, ScarMode::kBernoulli}) {
      const auto r = apply_scar(s, {0.5, seed, mode});
      ASSERT_EQ(r.samples.size(), s.size());
      for (std::size_t i = 0; i < s.size(); ++i) {
        EXPECT_EQ(r.samples[i].id, s[i].id);
        if (r.samples[i].selected) {
          EXPECT_EQ(*r.samples[i].truth, 1);
        }
      }
    }
  }
}

TEST(Scar, DeterministicPerSeed) {
  const auto s = labeled_samples(100, 40);
  EXPECT_EQ(apply_scar(s, {0.3, 3, ScarMode::kBernoulli}).samples,
            apply_scar(s, {0.3, 3, ScarMode::kBernoulli}).samples);
}

TEST(Scar, Preconditions) {
  auto s = labeled_samples(10, 5);
  s[2].truth.reset();
  EXPECT_EQ(kind_of([&] { apply_scar(s, {}); }), ErrorKind::kPrecondition);
  s = labeled_samples(10, 5);
  s[0].selected = 1;
  EXPECT_EQ(kind_of([&] { apply_scar(s, {}); }), ErrorKind::kPrecondition);
  EXPECT_EQ(kind_of([] { ScarConfig{1.5, 0, ScarMode::kExactCount}.validate(); }), ErrorKind::kConfiguration);
}

TEST(Corpus, StatsAndSubset) {
  auto s = labeled_samples(10, 4);
  s[0].selected = 1;
  s[1].selected = 1;
  const auto st = corpus_stats(s);
  EXPECT_EQ(st.total, 10u);
  EXPECT_EQ(st.positives, 4u);
  EXPECT_DOUBLE_EQ(st.class_prior, 0.4);
  EXPECT_DOUBLE_EQ(st.observed_label_frequency, 0.5);

  const std::vector<std::string> ids = {"s00007", "s00002"};
  const auto sub = subset(s, ids);
  ASSERT_EQ(sub.size(), 2u);
  EXPECT_EQ(sub[0].id, "s00007");
  EXPECT_EQ(sub[1].id, "s00002");
}

TEST(Corpus, ScarModeStrings) {
  EXPECT_EQ(scar_mode_from_string(to_string(ScarMode::kBernoulli)), ScarMode::kBernoulli);
  EXPECT_EQ(scar_mode_from_string(to_string(ScarMode::kExactCount)), ScarMode::kExactCount);
  EXPECT_THROW(scar_mode_from_string("sometimes"), Error);
}

}  // namespace
}  // namespace pilot::corpus
