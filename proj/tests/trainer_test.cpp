#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <sstream>
#include <unistd.h>

#include "sdp/checkpoint.hpp"
#include "sdp/sdp_io.hpp"
#include "sdp/trainer.hpp"
#include "test_support.hpp"

namespace sdp::train {
namespace {

namespace fs = std::filesystem;
using data::SemanticGraph;

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("sdp_trainer_test_" + name + "_" + std::to_string(getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::vector<SemanticGraph> corpus() {
  auto graphs = data::read_sdp_file(std::string(SDP_TEST_DATA) + "/synthetic.sdp");
  graphs.resize(6);
  return graphs;
}

model::ModelConfig tiny(std::size_t max_steps) {
  auto c = testing::small_config();
  c.batch_tokens = 40;
  c.eval_every = 5;
  c.max_steps = max_steps;
  c.patience = 1000;
  return c;
}

std::vector<std::vector<double>> values_of(const model::ParserModel& m) {
  std::vector<std::vector<double>> out;
  for (const auto& p : m.state()) out.emplace_back(p.tensor.values().begin(), p.tensor.values().end());
  return out;
}

TEST(TrainState, EarlyStopFiresExactlyAtPatience) {
  TrainState s;
  std::optional<StopReason> reason;
  while (!(reason = s.termination(75000, 10000))) {
    ++s.step;
    if (s.step % 100 == 0) s.record_validation(s.step, s.step == 100 ? 0.8 : 0.5);
  }
  EXPECT_EQ(*reason, StopReason::kEarlyStop);
  EXPECT_EQ(s.step, 10100u);
  EXPECT_EQ(s.best_step, 100u);
}

TEST(TrainState, MaxStepsStopsRegardless) {
  TrainState s;
  std::optional<StopReason> reason;
  while (!(reason = s.termination(75000, 10000))) {
    ++s.step;
    if (s.step % 100 == 0) s.record_validation(s.step, static_cast<double>(s.step) / 75000.0);
  }
  EXPECT_EQ(*reason, StopReason::kMaxSteps);
  EXPECT_EQ(s.step, 75000u);
}

TEST(TrainState, TiesDoNotCountAsImprovement) {
  TrainState s;
  EXPECT_TRUE(s.record_validation(100, 0.5));
  EXPECT_FALSE(s.record_validation(200, 0.5));
  EXPECT_FALSE(s.record_validation(300, 0.4));
  EXPECT_EQ(s.best_step, 100u);
  EXPECT_TRUE(s.record_validation(400, 0.50001));
  EXPECT_EQ(s.best_step, 400u);
}

TEST(TrainState, NoPatienceBeforeFirstScore) {
  TrainState s;
  s.step = 50000;
  EXPECT_FALSE(s.termination(75000, 10));
}

TEST(Metrics, RowIsTabSeparated) {
  std::ostringstream out;
  write_metrics_row(out, {100, 0.25, 0.5, 0.75});
  EXPECT_EQ(out.str(), "100\t0.25\t0.5\t0.75\n");
}

TEST(Trainer, SameSeedSameTrajectory) {
  const auto train = corpus();
  const auto vocab = data::build_vocab(train, 1);
  auto run = [&](std::uint64_t seed) {
    model::ParserModel m(tiny(20), vocab, std::nullopt, 3);
    TrainOptions o;
    o.seed = seed;
    Trainer t(m, train, train, o);
    auto r = t.run();
    return std::make_pair(r.metrics, values_of(m));
  };
  const auto a = run(1), b = run(1), c = run(2);
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.second, b.second);
  EXPECT_NE(a.first, c.first);
}

TEST(Trainer, SnapshotResumeMatchesUninterruptedRun) {
  const auto train = corpus();
  const auto vocab = data::build_vocab(train, 1);
  TrainOptions o;
  o.seed = 9;

  model::ParserModel whole(tiny(24), vocab, std::nullopt, 4);
  Trainer straight(whole, train, train, o);
  for (int i = 0; i < 24; ++i) straight.step();

  const auto dir = scratch_dir("resume");
  {
    model::ParserModel first(tiny(24), vocab, std::nullopt, 4);
    Trainer t(first, train, train, o);
    for (int i = 0; i < 13; ++i) t.step();
    t.save_snapshot(dir);
  }
  model::ParserModel second(tiny(24), vocab, std::nullopt, 777);
  Trainer resumed(second, train, train, o);
  resumed.load_snapshot(dir);
  EXPECT_EQ(resumed.state().step, 13u);
  for (int i = 13; i < 24; ++i) resumed.step();

  EXPECT_EQ(values_of(second), values_of(whole));
  EXPECT_EQ(resumed.state().best_lf1, straight.state().best_lf1);
  EXPECT_EQ(resumed.state().best_step, straight.state().best_step);
  // Rows before the snapshot live in the original trainer only.
  const auto& all = straight.metrics();
  const auto& tail = resumed.metrics();
  ASSERT_LE(tail.size(), all.size());
  EXPECT_TRUE(std::equal(tail.begin(), tail.end(), all.end() - static_cast<std::ptrdiff_t>(tail.size())));
  fs::remove_all(dir);
}

TEST(Trainer, BestCheckpointIsMonotoneAndRestored) {
  const auto train = corpus();
  const auto vocab = data::build_vocab(train, 1);
  model::ParserModel m(tiny(60), vocab, std::nullopt, 5);
  const auto dir = scratch_dir("best");
  TrainOptions o;
  o.out_dir = dir;
  Trainer t(m, train, train, o);
  const auto r = t.run();
  ASSERT_TRUE(r.best_lf1);
  ASSERT_EQ(r.metrics.size(), 12u);
  double best = -1;
  std::size_t best_step = 0;
  for (const auto& row : r.metrics) {
    if (row.dev_lf1 > best) {
      best = row.dev_lf1;
      best_step = row.step;
    }
  }
  EXPECT_EQ(*r.best_lf1, best);
  EXPECT_EQ(r.best_step, best_step);
  EXPECT_EQ(evaluate(m, train).labeled.f1(), best);

  model::ParserModel reloaded(tiny(60), vocab, std::nullopt, 99);
  reloaded.load_state(ad::load_checkpoint(dir / "model.sdpm"));
  EXPECT_EQ(values_of(reloaded), values_of(m));
  fs::remove_all(dir);
}

TEST(Trainer, EmptyDevRunsToMaxSteps) {
  const auto train = corpus();
  model::ParserModel m(tiny(7), data::build_vocab(train, 1), std::nullopt, 6);
  Trainer t(m, train, {}, {});
  const auto r = t.run();
  EXPECT_EQ(r.steps, 7u);
  EXPECT_EQ(r.reason, StopReason::kMaxSteps);
  EXPECT_FALSE(r.best_lf1);
  EXPECT_TRUE(r.metrics.empty());
}

TEST(Trainer, NonFiniteLossAborts) {
  const auto train = corpus();
  model::ParserModel m(tiny(7), data::build_vocab(train, 1), std::nullopt, 6);
  m.edge_scorer().b.mutable_values()[0] = NAN;
  Trainer t(m, train, {}, {});
  EXPECT_THROW(t.step(), TrainingDiverged);
}

TEST(Evaluate, MatchesEvaluatorOnParses) {
  const auto train = corpus();
  model::ParserModel m(tiny(10), data::build_vocab(train, 1), std::nullopt, 7);
  Trainer(m, train, {}, {}).run();
  std::vector<SemanticGraph> parsed;
  for (const auto& g : train) parsed.push_back(m.parse(g.stripped()));
  for (bool tops : {true, false}) {
    const auto direct = eval::score(train, parsed, tops);
    const auto via = evaluate(m, train, tops);
    EXPECT_EQ(via.labeled, direct.labeled);
    EXPECT_EQ(via.unlabeled, direct.unlabeled);
  }
}

TEST(Evaluate, MemorizedSentenceScoresOne) {
  const std::vector<SemanticGraph> train{data::read_sdp_file(std::string(SDP_TEST_DATA) + "/figure1b.sdp").front()};
  auto cfg = tiny(1500);
  cfg.lstm_hidden = cfg.edge_hidden_dim = cfg.label_hidden_dim = 32;
  cfg.eval_every = 20;
  model::ParserModel m(cfg, data::build_vocab(train, 1), std::nullopt, 8);
  TrainOptions o;
  o.target_lf1 = 1.0;
  Trainer t(m, train, train, o);
  const auto r = t.run();
  EXPECT_EQ(r.reason, StopReason::kTargetReached);
  EXPECT_EQ(evaluate(m, train).labeled.f1(), 1.0);
  EXPECT_EQ(m.parse(train[0].stripped()), train[0]);
}

}  // namespace
}  // namespace sdp::train
