#include <gtest/gtest.h>

#include <atomic>
#include <cmath>
#include <sstream>

#include "sdp/rank_sum.hpp"
#include "sdp/sdp_io.hpp"
#include "sdp/study.hpp"
#include "test_support.hpp"

namespace sdp {
namespace {

using stats::rank_sum;
using stats::Tail;

TEST(RankSum, SmallestSeparatedSamples) {
  const std::vector<double> a{1, 2}, b{3, 4};
  const auto r = rank_sum(a, b);
  EXPECT_EQ(r.w, 3.0);
  EXPECT_TRUE(r.exact);
  EXPECT_DOUBLE_EQ(r.p, 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(rank_sum(a, b, Tail::kLess).p, 1.0 / 6.0);
  EXPECT_DOUBLE_EQ(rank_sum(a, b, Tail::kGreater).p, 1.0);
}

TEST(RankSum, IdenticalSamplesGiveOne) {
  const std::vector<double> a{0.91, 0.92, 0.93, 0.9};
  EXPECT_EQ(rank_sum(a, a).p, 1.0);
  const std::vector<double> flat(10, 0.5);
  EXPECT_EQ(rank_sum(flat, flat).p, 1.0);
  const std::vector<double> big(12, 0.5);
  EXPECT_EQ(rank_sum(big, big).p, 1.0);
}

TEST(RankSum, Midranks) {
  const std::vector<double> v{3, 1, 3, 2, 3};
  EXPECT_EQ(stats::midranks(v), (std::vector<double>{4, 1, 4, 2, 4}));
}

TEST(RankSum, ExactModeEqualsEnumerationUpToTen) {
  testing::Rng rng(10);
  for (std::size_t na = 2; na <= 8; ++na) {
    for (std::size_t nb = 2; na + nb <= 10; ++nb) {
      for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> a, b;
        for (std::size_t i = 0; i < na; ++i) a.push_back(testing::uniform_int(rng, 0, 5));
        for (std::size_t i = 0; i < nb; ++i) b.push_back(testing::uniform_int(rng, 0, 5));
        for (Tail tail : {Tail::kTwoSided, Tail::kLess, Tail::kGreater}) {
          const auto r = rank_sum(a, b, tail);
          ASSERT_TRUE(r.exact);
          const bool all_same = std::all_of(a.begin(), a.end(), [&](double x) { return x == a[0]; }) &&
                                std::all_of(b.begin(), b.end(), [&](double x) { return x == a[0]; });
          ASSERT_EQ(r.p, all_same ? 1.0 : testing::enumerated_p(a, b, tail)) << na << "+" << nb << " trial " << trial;
        }
      }
    }
  }
}

TEST(RankSum, MonotoneTransformsKeepTheStatistic) {
  testing::Rng rng(11);
  std::uniform_real_distribution<double> u(0.8, 0.95);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> a(7), b(9);
    for (auto& v : a) v = u(rng);
    for (auto& v : b) v = u(rng);
    auto f = [](std::vector<double> v) {
      for (auto& x : v) x = std::exp(3 * x) - 2;
      return v;
    };
    const auto r = rank_sum(a, b), t = rank_sum(f(a), f(b));
    EXPECT_EQ(r.w, t.w);
    EXPECT_EQ(r.p, t.p);
  }
}

TEST(RankSum, SensitiveToLocationShift) {
  const std::vector<double> a{0.1, 0.3, 0.5, 0.7, 0.9}, b{0.2, 0.4, 0.6, 0.8, 1.0};
  std::vector<double> shifted = a;
  for (auto& v : shifted) v += 1.0;
  EXPECT_GT(rank_sum(a, b).p, 0.5);
  EXPECT_LT(rank_sum(shifted, b).p, 0.01);
  EXPECT_GT(rank_sum(shifted, b).w, rank_sum(a, b).w);
}

TEST(RankSum, NormalApproximationTracksEnumeration) {
  testing::Rng rng(12);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> a(9), b(9);
    for (auto& v : a) v = u(rng) + 0.3;
    for (auto& v : b) v = u(rng);
    const auto r = rank_sum(a, b);
    EXPECT_FALSE(r.exact);
    EXPECT_NEAR(r.p, testing::enumerated_p(a, b, Tail::kTwoSided), 0.01);
  }
}

TEST(RankSum, RejectsBadInput) {
  const std::vector<double> one{1}, two{1, 2}, nan{1, NAN};
  EXPECT_THROW(rank_sum(one, two), std::invalid_argument);
  EXPECT_THROW(rank_sum(two, one), std::invalid_argument);
  EXPECT_THROW(rank_sum(nan, two), std::invalid_argument);
  EXPECT_THROW(stats::parse_tail("sideways"), std::invalid_argument);
  EXPECT_EQ(stats::parse_tail("less"), Tail::kLess);
}

namespace st = study;

// Deterministic stand-in for training: a score from the config and seed.
double fake_lf1(const model::ModelConfig& c, std::uint64_t seed) {
  double base = 0.90 + 0.001 * static_cast<double>(seed % 7);
  if (!c.factorized) base -= 0.05;
  if (c.nonlinearity == model::Activation::kRelu) base += 0.0005;
  return base;
}

TEST(Study, CountsRunsIncludingBaseline) {
  std::atomic<int> calls{0};
  st::StudyOptions o;
  o.replicas = 2;
  const std::vector<st::VariantSpec> v{*st::find_variant("unfactorized")};
  const auto r = st::run_study({}, v, o, [&](const model::ModelConfig& c, std::uint64_t s) {
    ++calls;
    return fake_lf1(c, s);
  });
  EXPECT_EQ(calls.load(), 4);
  ASSERT_EQ(r.runs.size(), 4u);
  EXPECT_EQ(r.runs[0].variant, st::kBaseline);
  EXPECT_EQ(r.runs[2].variant, "unfactorized");
  EXPECT_EQ(r.runs[3].seed, 2u);
  ASSERT_EQ(r.comparisons.size(), 1u);
  EXPECT_EQ(r.comparisons[0].test.w, 3.0);
}

TEST(Study, AppliesVariantAndStepBudget) {
  st::StudyOptions o;
  o.replicas = 2;
  o.steps = 123;
  std::mutex m;
  std::vector<model::ModelConfig> seen;
  const std::vector<st::VariantSpec> v{*st::find_variant("label-full")};
  st::run_study({}, v, o, [&](const model::ModelConfig& c, std::uint64_t) {
    std::lock_guard lock(m);
    seen.push_back(c);
    return 0.5;
  });
  ASSERT_EQ(seen.size(), 4u);
  for (const auto& c : seen) EXPECT_EQ(c.max_steps, 123u);
  EXPECT_TRUE(seen[0].label_diagonal);
  EXPECT_FALSE(seen[3].label_diagonal);
}

TEST(Study, FailuresAreRecordedAndStudyContinues) {
  st::StudyOptions o;
  o.replicas = 4;
  const std::vector<st::VariantSpec> v{*st::find_variant("relu"), *st::find_variant("unfactorized")};
  const auto r = st::run_study({}, v, o, [](const model::ModelConfig& c, std::uint64_t seed) {
    if (c.nonlinearity == model::Activation::kRelu && seed == 3) throw std::runtime_error("diverged");
    if (!c.factorized && seed != 1) throw std::runtime_error("out of memory");
    return fake_lf1(c, seed);
  });
  EXPECT_EQ(r.runs.size(), 12u);
  EXPECT_EQ(std::count_if(r.runs.begin(), r.runs.end(), [](const auto& x) { return !x.lf1; }), 4);
  EXPECT_EQ(r.runs[4 + 2].error, "diverged");
  ASSERT_EQ(r.comparisons.size(), 1u);
  EXPECT_EQ(r.comparisons[0].variant, "relu");
  EXPECT_EQ(r.comparisons[0].replicas, 3u);
  const bool excluded = std::any_of(r.warnings.begin(), r.warnings.end(), [](const std::string& w) {
    return w.find("unfactorized excluded") != std::string::npos;
  });
  EXPECT_TRUE(excluded);

  std::ostringstream runs;
  st::write_runs(runs, r);
  EXPECT_NE(runs.str().find("relu\t2\t3\tfailed\n"), std::string::npos);
}

TEST(Study, IdenticalVariantSitsAtTheNull) {
  st::StudyOptions o;
  o.replicas = 6;
  const std::vector<st::VariantSpec> v{st::parse_variant("copy: eval_every=100")};
  const auto r = st::run_study({}, v, o, fake_lf1);
  ASSERT_EQ(r.comparisons.size(), 1u);
  EXPECT_EQ(r.comparisons[0].test.w, 6.0 * 13.0 / 2.0);
  EXPECT_EQ(r.comparisons[0].test.p, 1.0);
}

TEST(Study, DeterministicAndIndependentOfWorkers) {
  st::StudyOptions o;
  o.replicas = 5;
  o.seeds = {11, 12, 13, 14, 15};
  const auto& all = st::predefined_variants();
  const std::vector<st::VariantSpec> v(all.begin(), all.end());
  const auto serial = st::run_study({}, v, o, fake_lf1);
  o.jobs = 4;
  const auto parallel = st::run_study({}, v, o, fake_lf1);
  std::ostringstream a, b;
  st::write_runs(a, serial);
  st::write_comparisons(a, serial);
  st::write_runs(b, parallel);
  st::write_comparisons(b, parallel);
  EXPECT_EQ(a.str(), b.str());
  EXPECT_EQ(serial.comparisons.size(), v.size());
}

TEST(Study, RejectsTooFewReplicasOrSeeds) {
  st::StudyOptions o;
  o.replicas = 1;
  EXPECT_THROW(st::run_study({}, {}, o, fake_lf1), std::invalid_argument);
  o.replicas = 3;
  o.seeds = {1, 2};
  EXPECT_THROW(st::run_study({}, {}, o, fake_lf1), std::invalid_argument);
}

TEST(Study, RealTrainerProducesWellFormedTables) {
  auto corpus = data::read_sdp_file(std::string(SDP_TEST_DATA) + "/synthetic.sdp");
  corpus.resize(4);
  auto base = testing::small_config();
  base.batch_tokens = 40;
  base.eval_every = 5;
  st::StudyOptions o;
  o.replicas = 2;
  o.steps = 10;
  const std::vector<st::VariantSpec> v{*st::find_variant("no-hidden-both")};
  const auto r = st::run_study(base, v, o, st::parser_trainer(corpus, corpus, data::build_vocab(corpus, 1)));
  for (const auto& run : r.runs) {
    ASSERT_TRUE(run.lf1) << run.error;
    EXPECT_GE(*run.lf1, 0.0);
    EXPECT_LE(*run.lf1, 1.0);
  }
  std::ostringstream out;
  st::write_comparisons(out, r);
  std::istringstream lines(out.str());
  std::string line;
  std::getline(lines, line);
  EXPECT_EQ(line, "variant\tW\tp");
  std::getline(lines, line);
  EXPECT_EQ(line.rfind("no-hidden-both\t", 0), 0u);
  EXPECT_EQ(std::count(line.begin(), line.end(), '\t'), 2);
}

TEST(Variants, PredefinedFamilies) {
  const model::ModelConfig base;
  EXPECT_FALSE(st::apply_variant(base, *st::find_variant("unfactorized")).factorized);
  const auto both = st::apply_variant(base, *st::find_variant("no-hidden-both"));
  EXPECT_FALSE(both.edge_hidden);
  EXPECT_FALSE(both.label_hidden);
  EXPECT_FALSE(st::apply_variant(base, *st::find_variant("no-hidden-edge")).edge_hidden);
  EXPECT_TRUE(st::apply_variant(base, *st::find_variant("no-hidden-edge")).label_hidden);
  EXPECT_FALSE(st::apply_variant(base, *st::find_variant("no-hidden-label")).label_hidden);
  EXPECT_EQ(st::apply_variant(base, *st::find_variant("bilinear")).classifier, model::ClassifierKind::kBilinear);
  EXPECT_TRUE(st::apply_variant(base, *st::find_variant("edge-diagonal")).edge_diagonal);
  EXPECT_FALSE(st::apply_variant(base, *st::find_variant("label-full")).label_diagonal);
  EXPECT_EQ(st::apply_variant(base, *st::find_variant("relu")).nonlinearity, model::Activation::kRelu);
  EXPECT_EQ(st::predefined_variants().size(), 8u);
  EXPECT_FALSE(st::find_variant("baseline"));
}

TEST(Variants, ParsingCustomSpecs) {
  const auto v = st::parse_variant("wide: lstm_hidden = 800, edge_hidden_dim=300");
  EXPECT_EQ(v.name, "wide");
  EXPECT_EQ(v.deltas, (std::vector<std::pair<std::string, std::string>>{{"lstm_hidden", "800"},
                                                                        {"edge_hidden_dim", "300"}}));
  EXPECT_EQ(st::parse_variant("relu"), *st::find_variant("relu"));
  EXPECT_ANY_THROW(st::parse_variant("nonsense"));
  EXPECT_ANY_THROW(st::parse_variant("baseline: relu=1"));
  EXPECT_ANY_THROW(st::parse_variant("empty:"));
  EXPECT_THROW(st::apply_variant({}, st::parse_variant("bad: interpolation=1.5")), model::ConfigError);
  EXPECT_THROW(st::apply_variant({}, st::parse_variant("bad: no_such_key=1")), model::ConfigError);
}

TEST(Manifest, ParsesKeysAndOverrides) {
  std::istringstream in(
      "# desk study\n"
      "variant = unfactorized\n"
      "variant = relu   # trailing comment\n"
      "seeds = 5 6 7\n"
      "jobs = 2\n"
      "tail = greater\n"
      "steps = 300\n"
      "lstm_hidden = 64\n");
  const auto m = st::parse_manifest(in, {});
  ASSERT_EQ(m.variants.size(), 2u);
  EXPECT_EQ(m.variants[1].name, "relu");
  EXPECT_EQ(m.options.seeds, (std::vector<std::uint64_t>{5, 6, 7}));
  EXPECT_EQ(m.options.replicas, 3u);
  EXPECT_EQ(m.options.jobs, 2u);
  EXPECT_EQ(m.options.tail, Tail::kGreater);
  EXPECT_EQ(m.options.steps, 300u);
  EXPECT_EQ(m.base.lstm_hidden, 64u);
}

TEST(Manifest, DefaultsAndErrors) {
  std::istringstream plain("variant = bilinear\n");
  const auto m = st::parse_manifest(plain, {});
  EXPECT_EQ(m.options.replicas, 20u);
  EXPECT_EQ(m.options.steps, 3000u);
  EXPECT_EQ(m.options.tail, Tail::kTwoSided);
  for (const char* bad : {"variant\n", "bogus = 1\n", "seeds = 1 x\n", "interpolation = 0\n", "tail = up\n"}) {
    std::istringstream in(bad);
    EXPECT_THROW(st::parse_manifest(in, {}), model::ConfigError) << bad;
  }
}

}  // namespace
}  // namespace sdp
