#include "sdp/trainer.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>

#include "sdp/checkpoint.hpp"

namespace sdp::train {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t derived_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  return splitmix64(splitmix64(seed ^ splitmix64(stream)) + index);
}

constexpr std::uint64_t kBatchStream = 1;
constexpr std::uint64_t kDropoutStream = 2;

}  // namespace

void write_metrics_row(std::ostream& out, const MetricsRow& row) {
  out << row.step << '\t' << std::setprecision(6) << row.train_loss << '\t' << row.dev_uf1 << '\t' << row.dev_lf1
      << '\n';
}

const char* to_string(StopReason reason) {
  switch (reason) {
    case StopReason::kMaxSteps: return "max-steps";
    case StopReason::kEarlyStop: return "early-stop";
    case StopReason::kTargetReached: return "target-reached";
  }
  return "unknown";
}

bool TrainState::record_validation(std::size_t at_step, double lf1) {
  if (best_lf1 && lf1 <= *best_lf1) return false;
  best_lf1 = lf1;
  best_step = at_step;
  return true;
}

std::optional<StopReason> TrainState::termination(std::size_t max_steps, std::size_t patience) const {
  if (step >= max_steps) return StopReason::kMaxSteps;
  if (best_lf1 && steps_since_improvement() >= patience) return StopReason::kEarlyStop;
  return std::nullopt;
}

eval::EvalReport evaluate(const model::ParserModel& model, std::span<const data::SemanticGraph> dev,
                          bool include_tops) {
  std::vector<data::SemanticGraph> predicted;
  predicted.reserve(dev.size());
  for (const auto& g : dev) predicted.push_back(model.parse(g));
  return eval::score(dev, predicted, include_tops);
}

Trainer::Trainer(model::ParserModel& model, std::span<const data::SemanticGraph> train,
                 std::span<const data::SemanticGraph> dev, TrainOptions options)
    : model_(model), train_(train), dev_(dev), options_(std::move(options)) {
  if (train_.empty()) throw std::invalid_argument("Trainer: empty training set");
  for (const auto& g : train_) targets_.push_back(model_.targets(g));
  params_ = model_.parameters();
  for (const auto& p : params_) param_tensors_.push_back(p.tensor);
  adam_ = ad::AdamState::for_params(param_tensors_);
  const auto& c = model_.config();
  adam_options_ = {c.learning_rate, c.beta1, c.beta2, c.epsilon, c.l2};
}

const data::Batch& Trainer::next_batch() {
  const auto budget = model_.config().batch_tokens;
  if (epoch_batches_.empty()) {
    epoch_batches_ = data::batch_by_tokens(train_, budget, derived_seed(options_.seed, kBatchStream, state_.epoch));
  }
  if (state_.batch_in_epoch >= epoch_batches_.size()) {
    ++state_.epoch;
    state_.batch_in_epoch = 0;
    epoch_batches_ = data::batch_by_tokens(train_, budget, derived_seed(options_.seed, kBatchStream, state_.epoch));
  }
  return epoch_batches_[state_.batch_in_epoch++];
}

double Trainer::step() {
  const data::Batch& batch = next_batch();
  model::Rng rng(derived_seed(options_.seed, kDropoutStream, state_.step));
  for (auto& p : param_tensors_) p.zero_grad();

  ad::Tape tape;
  std::vector<model::ScoreSet> scores;
  std::vector<model::GoldTargets> targets;
  for (std::size_t idx : batch.sentences) {
    scores.push_back(model_.forward(tape, train_[idx], &rng));
    targets.push_back(targets_[idx]);
  }
  const auto loss = model::batch_loss(tape, scores, targets, model_.config().interpolation);
  const double value = loss.total.item();
  if (!std::isfinite(value)) {
    throw TrainingDiverged("non-finite loss at step " + std::to_string(state_.step + 1) + " (edge " +
                           std::to_string(loss.edge) + ", label " + std::to_string(loss.label) + ")");
  }
  tape.backward(loss.total);
  ad::adam_step(param_tensors_, adam_, adam_options_);

  ++state_.step;
  state_.loss_sum += value;
  ++state_.loss_steps;
  if (!dev_.empty() && state_.step % model_.config().eval_every == 0) validate();
  return value;
}

void Trainer::validate() {
  const auto report = evaluate(model_, dev_, options_.include_tops);
  MetricsRow row;
  row.step = state_.step;
  row.train_loss = state_.loss_steps ? state_.loss_sum / static_cast<double>(state_.loss_steps) : 0.0;
  row.dev_uf1 = report.unlabeled.f1();
  row.dev_lf1 = report.labeled.f1();
  state_.loss_sum = 0.0;
  state_.loss_steps = 0;
  metrics_.push_back(row);
  if (options_.metrics_log) write_metrics_row(*options_.metrics_log, row);

  if (state_.record_validation(row.step, row.dev_lf1)) {
    best_values_.clear();
    for (const auto& p : param_tensors_) best_values_.emplace_back(p.values().begin(), p.values().end());
    if (!options_.out_dir.empty()) ad::save_checkpoint(options_.out_dir / "model.sdpm", model_.state());
  }
}

TrainResult Trainer::run() {
  const auto& c = model_.config();
  TrainResult result;
  while (true) {
    if (auto reason = state_.termination(c.max_steps, c.patience)) {
      result.reason = *reason;
      break;
    }
    step();
    if (options_.target_lf1 && !metrics_.empty() && metrics_.back().step == state_.step &&
        metrics_.back().dev_lf1 >= *options_.target_lf1) {
      result.reason = StopReason::kTargetReached;
      break;
    }
  }
  if (!best_values_.empty()) {
    for (std::size_t i = 0; i < param_tensors_.size(); ++i) {
      auto dst = param_tensors_[i].mutable_values();
      std::copy(best_values_[i].begin(), best_values_[i].end(), dst.begin());
    }
  }
  if (!options_.out_dir.empty() && best_values_.empty()) {
    ad::save_checkpoint(options_.out_dir / "model.sdpm", model_.state());
  }
  result.metrics = metrics_;
  result.best_lf1 = state_.best_lf1;
  result.best_step = state_.best_step;
  result.steps = state_.step;
  return result;
}

void Trainer::save_snapshot(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  std::vector<ad::NamedTensor> tensors = params_;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    tensors.push_back({"adam.m/" + params_[i].name, adam_.first_moment[i]});
    tensors.push_back({"adam.v/" + params_[i].name, adam_.second_moment[i]});
    if (!best_values_.empty()) {
      tensors.push_back({"best/" + params_[i].name, ad::Tensor(params_[i].tensor.shape(), best_values_[i])});
    }
  }
  ad::save_checkpoint(dir / "snapshot.sdpm", tensors);

  std::ofstream out(dir / "snapshot.state");
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  out << "seed=" << options_.seed << '\n'
      << "step=" << state_.step << '\n'
      << "epoch=" << state_.epoch << '\n'
      << "batch_in_epoch=" << state_.batch_in_epoch << '\n'
      << "loss_sum=" << state_.loss_sum << '\n'
      << "loss_steps=" << state_.loss_steps << '\n'
      << "adam_step=" << adam_.step << '\n'
      << "best_step=" << state_.best_step << '\n';
  if (state_.best_lf1) out << "best_lf1=" << *state_.best_lf1 << '\n';
  for (const auto& row : metrics_) {
    out << "metric=" << row.step << ' ' << row.train_loss << ' ' << row.dev_uf1 << ' ' << row.dev_lf1 << '\n';
  }
  if (!out) throw std::runtime_error("cannot write snapshot state in " + dir.string());
}

void Trainer::load_snapshot(const std::filesystem::path& dir) {
  const auto tensors = ad::load_checkpoint(dir / "snapshot.sdpm");
  ad::assign_values(params_, tensors);
  std::vector<ad::NamedTensor> m, v;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    m.push_back({"adam.m/" + params_[i].name, adam_.first_moment[i]});
    v.push_back({"adam.v/" + params_[i].name, adam_.second_moment[i]});
  }
  ad::assign_values(m, tensors);
  ad::assign_values(v, tensors);
  best_values_.clear();
  for (const auto& p : params_) {
    for (const auto& t : tensors) {
      if (t.name == "best/" + p.name) best_values_.emplace_back(t.tensor.values().begin(), t.tensor.values().end());
    }
  }

  std::ifstream in(dir / "snapshot.state");
  if (!in) throw std::runtime_error("missing snapshot state in " + dir.string());
  state_ = TrainState{};
  metrics_.clear();
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = line.substr(0, eq);
    std::istringstream value(line.substr(eq + 1));
    if (key == "seed") value >> options_.seed;
    else if (key == "step") value >> state_.step;
    else if (key == "epoch") value >> state_.epoch;
    else if (key == "batch_in_epoch") value >> state_.batch_in_epoch;
    else if (key == "loss_sum") value >> state_.loss_sum;
    else if (key == "loss_steps") value >> state_.loss_steps;
    else if (key == "adam_step") value >> adam_.step;
    else if (key == "best_step") value >> state_.best_step;
    else if (key == "best_lf1") {
      double b;
      value >> b;
      state_.best_lf1 = b;
    } else if (key == "metric") {
      MetricsRow row;
      value >> row.step >> row.train_loss >> row.dev_uf1 >> row.dev_lf1;
      metrics_.push_back(row);
    }
  }
  epoch_batches_.clear();
  epoch_batches_ = data::batch_by_tokens(train_, model_.config().batch_tokens,
                                         derived_seed(options_.seed, kBatchStream, state_.epoch));
}

}  // namespace sdp::train
