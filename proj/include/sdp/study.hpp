#pragma once

// Architecture-variation study: trains seeded replicas of a baseline and of
// each variant, then compares every variant's dev LF1 scores against the
// baseline's with a rank-sum test.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sdp/config.hpp"
#include "sdp/graph.hpp"
#include "sdp/pretrained.hpp"
#include "sdp/rank_sum.hpp"
#include "sdp/vocab.hpp"

namespace sdp::study {

inline constexpr const char* kBaseline = "baseline";

struct VariantSpec {
  std::string name;
  std::vector<std::pair<std::string, std::string>> deltas;  // ModelConfig key, value

  bool operator==(const VariantSpec&) const = default;
};

// unfactorized, no-hidden-edge, no-hidden-label, no-hidden-both, bilinear,
// edge-diagonal, label-full, relu.
const std::vector<VariantSpec>& predefined_variants();
std::optional<VariantSpec> find_variant(const std::string& name);

// "name" for a predefined variant, or "name: key=value, key=value".
VariantSpec parse_variant(const std::string& text);

// `base` with the deltas applied; throws model::ConfigError when invalid.
model::ModelConfig apply_variant(const model::ModelConfig& base, const VariantSpec& variant);

struct ReplicaResult {
  std::string variant;
  std::size_t replica = 0;
  std::uint64_t seed = 0;
  std::optional<double> lf1;  // absent when training failed
  std::string error;
};

struct Comparison {
  std::string variant;
  std::size_t replicas = 0;  // successful replicas used on each side
  stats::RankSumResult test;
};

struct StudyResult {
  std::vector<ReplicaResult> runs;  // ordered by variant (baseline first), then replica
  std::vector<Comparison> comparisons;
  std::vector<std::string> warnings;

  std::vector<double> scores(const std::string& variant) const;
};

struct StudyOptions {
  std::size_t replicas = 20;
  // Replica r of every variant trains with seeds[r]; defaults to 1..replicas.
  std::vector<std::uint64_t> seeds;
  std::size_t jobs = 1;
  stats::Tail tail = stats::Tail::kTwoSided;
  // Training step budget of every replica; replaces the base max_steps.
  std::size_t steps = 3000;
};

// Trains one model and returns its dev LF1.
using TrainFunction = std::function<double(const model::ModelConfig&, std::uint64_t seed)>;

StudyResult run_study(const model::ModelConfig& base, std::span<const VariantSpec> variants,
                      const StudyOptions& options, const TrainFunction& train);

// Trains a ParserModel on `train` and reports the best validated LF1 on
// `dev`. The spans must outlive the returned function.
TrainFunction parser_trainer(std::span<const data::SemanticGraph> train, std::span<const data::SemanticGraph> dev,
                             data::Vocabulary vocab, std::optional<nn::PretrainedEmbeddings> pretrained = {});

void write_runs(std::ostream& out, const StudyResult& result);
void write_comparisons(std::ostream& out, const StudyResult& result);

// Study manifest: `key = value` lines. Recognised keys are `variant`
// (repeatable), `replicas`, `seeds` (whitespace separated), `jobs`, `tail`,
// `steps` or `max_steps` (the per-replica budget) and any other ModelConfig
// key, which overrides the base configuration.
struct Manifest {
  model::ModelConfig base;
  std::vector<VariantSpec> variants;
  StudyOptions options;
};

Manifest parse_manifest(std::istream& in, model::ModelConfig base);
Manifest load_manifest(const std::filesystem::path& path, model::ModelConfig base);

}  // namespace sdp::study
