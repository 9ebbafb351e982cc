#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "sdp/batching.hpp"
#include "sdp/evaluator.hpp"
#include "sdp/optim.hpp"
#include "sdp/parser_model.hpp"

namespace sdp::train {

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct MetricsRow {
  std::size_t step = 0;
  double train_loss = 0.0;  // mean over the steps since the previous validation
  double dev_uf1 = 0.0;
  double dev_lf1 = 0.0;

  bool operator==(const MetricsRow&) const = default;
};

void write_metrics_row(std::ostream& out, const MetricsRow& row);

enum class StopReason { kMaxSteps, kEarlyStop, kTargetReached };
const char* to_string(StopReason reason);

// Step bookkeeping. A "step" is one batch update.
struct TrainState {
  std::size_t step = 0;
  std::optional<double> best_lf1;
  std::size_t best_step = 0;
  std::size_t epoch = 0;
  std::size_t batch_in_epoch = 0;
  double loss_sum = 0.0;
  std::size_t loss_steps = 0;

  // Records a validation score; returns true on a strict improvement.
  bool record_validation(std::size_t at_step, double lf1);
  std::size_t steps_since_improvement() const { return best_lf1 ? step - best_step : 0; }
  // Max-step and patience conditions (patience only once a score exists).
  std::optional<StopReason> termination(std::size_t max_steps, std::size_t patience) const;
};

struct TrainOptions {
  std::uint64_t seed = 1;
  // Stop as soon as a validation reaches this LF1.
  std::optional<double> target_lf1;
  // When set, the best model and the metrics log are written here.
  std::filesystem::path out_dir;
  std::ostream* metrics_log = nullptr;
  bool include_tops = true;
};

struct TrainResult {
  std::vector<MetricsRow> metrics;
  std::optional<double> best_lf1;
  std::size_t best_step = 0;
  std::size_t steps = 0;
  StopReason reason = StopReason::kMaxSteps;
};

// Inference-mode decode of `dev` scored against itself as gold.
eval::EvalReport evaluate(const model::ParserModel& model, std::span<const data::SemanticGraph> dev,
                          bool include_tops = true);

class Trainer {
 public:
  Trainer(model::ParserModel& model, std::span<const data::SemanticGraph> train,
          std::span<const data::SemanticGraph> dev, TrainOptions options);

  // One forward/backward/Adam update on the next batch; returns its loss.
  double step();
  // Trains until a termination condition fires, then restores the best
  // validated parameters (if any validation ran).
  TrainResult run();

  const TrainState& state() const { return state_; }
  const std::vector<MetricsRow>& metrics() const { return metrics_; }

  // Full resumable snapshot: parameters, optimizer moments, best parameters
  // and step counters.
  void save_snapshot(const std::filesystem::path& dir) const;
  void load_snapshot(const std::filesystem::path& dir);

 private:
  const data::Batch& next_batch();
  void validate();

  model::ParserModel& model_;
  std::span<const data::SemanticGraph> train_;
  std::span<const data::SemanticGraph> dev_;
  TrainOptions options_;
  std::vector<model::GoldTargets> targets_;
  std::vector<ad::NamedTensor> params_;
  std::vector<ad::Tensor> param_tensors_;
  ad::AdamState adam_;
  ad::AdamOptions adam_options_;
  TrainState state_;
  std::vector<data::Batch> epoch_batches_;
  std::vector<std::vector<double>> best_values_;
  std::vector<MetricsRow> metrics_;
};

}  // namespace sdp::train
