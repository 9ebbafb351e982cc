// sdp: train, apply and evaluate the biaffine semantic dependency parser.
//
// Exit codes:
//   0   success
//   1   unreadable or malformed input, failed check (gradcheck, validate)
//   2   configuration, vocabulary or checkpoint mismatch
//   3   training diverged
//   64  usage error

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "sdp/checkpoint.hpp"
#include "sdp/evaluator.hpp"
#include "sdp/gradcheck.hpp"
#include "sdp/parser_model.hpp"
#include "sdp/pretrained.hpp"
#include "sdp/sdp_io.hpp"
#include "sdp/study.hpp"
#include "sdp/trainer.hpp"
#include "sdp/vocab.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitInput = 1;
constexpr int kExitConfig = 2;
constexpr int kExitDiverged = 3;
constexpr int kExitUsage = 64;

struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag) {
  if (flag) return *flag;
  if (const char* env = std::getenv("SDP_SEED")) {
    try {
      return std::stoull(env);
    } catch (const std::exception&) {
      throw sdp::model::ConfigError(std::string("SDP_SEED is not an integer: '") + env + "'");
    }
  }
  return 1;
}

std::vector<sdp::data::SemanticGraph> read_corpus(const fs::path& path) {
  try {
    return sdp::data::read_sdp_file(path);
  } catch (const std::exception& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

struct ModelFlags {
  std::string config_path;
  std::vector<std::string> overrides;
  bool use_char = false;
  bool use_lemma = false;
};

void add_model_flags(CLI::App* cmd, ModelFlags& flags) {
  cmd->add_option("--config", flags.config_path, "key=value configuration file (default: built-in configuration)")
      ->check(CLI::ExistingFile);
  cmd->add_option("--set", flags.overrides, "override one configuration key, as key=value (repeatable)");
  cmd->add_flag("--use-char", flags.use_char, "add the character-level word encoder (default: off)");
  cmd->add_flag("--use-lemma", flags.use_lemma, "add lemma embeddings (default: off)");
}

sdp::model::ModelConfig resolve_config(const ModelFlags& flags) {
  sdp::model::ModelConfig config;
  if (!flags.config_path.empty()) sdp::model::load_config(config, flags.config_path);
  if (flags.use_char) config.use_char = true;
  if (flags.use_lemma) config.use_lemma = true;
  for (const auto& kv : flags.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw sdp::model::ConfigError("--set expects key=value, got '" + kv + "'");
    config.set(sdp::model::trim(kv.substr(0, eq)), sdp::model::trim(kv.substr(eq + 1)));
  }
  config.validate();
  return config;
}

std::optional<sdp::nn::PretrainedEmbeddings> read_glove(const std::string& path) {
  if (path.empty()) return std::nullopt;
  try {
    return sdp::nn::load_pretrained(path);
  } catch (const std::exception& e) {
    throw InputError(path + ": " + e.what());
  }
}

void save_pretrained_tokens(const fs::path& path, const sdp::nn::PretrainedEmbeddings& p) {
  std::ofstream out(path);
  for (const auto& t : p.tokens) out << t << '\n';
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

sdp::model::ParserModel load_model_files(const fs::path& dir) {
  sdp::model::ModelConfig config;
  sdp::model::load_config(config, dir / "config.txt");
  config.validate();
  const auto vocab = sdp::data::load_vocab(dir / "vocab.txt");
  const auto tensors = sdp::ad::load_checkpoint(dir / "model.sdpm");

  std::optional<sdp::nn::PretrainedEmbeddings> pretrained;
  if (fs::exists(dir / "pretrained.tokens")) {
    std::ifstream in(dir / "pretrained.tokens");
    std::vector<std::string> tokens;
    for (std::string line; std::getline(in, line);) tokens.push_back(line);
    std::optional<sdp::ad::Shape> shape;
    for (const auto& t : tensors)
      if (t.name == "pretrained.table") shape = t.tensor.shape();
    if (!shape) throw sdp::ad::CheckpointError("model has pretrained tokens but no pretrained.table tensor");
    pretrained = sdp::nn::make_pretrained(std::move(tokens), sdp::ad::Tensor::zeros(*shape));
  }
  sdp::model::ParserModel model(config, vocab, std::move(pretrained), 0);
  model.load_state(tensors);
  return model;
}

sdp::model::ParserModel load_model(const fs::path& dir) {
  try {
    return load_model_files(dir);
  } catch (const sdp::model::ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw sdp::ad::CheckpointError(dir.string() + ": " + e.what());
  }
}

int cmd_train(const std::string& train_path, const std::string& dev_path, const std::string& out_dir,
              const ModelFlags& flags, const std::string& glove, std::size_t min_count,
              const std::optional<std::uint64_t>& seed_flag) {
  const auto config = resolve_config(flags);
  const auto seed = resolve_seed(seed_flag);
  const auto train = read_corpus(train_path);
  const auto dev = dev_path.empty() ? std::vector<sdp::data::SemanticGraph>{} : read_corpus(dev_path);
  auto pretrained = read_glove(glove);

  const fs::path out(out_dir);
  fs::create_directories(out);
  const auto vocab = sdp::data::build_vocab(train, min_count);
  sdp::data::save_vocab(out / "vocab.txt", vocab);
  sdp::model::save_config(out / "config.txt", config);
  if (pretrained) save_pretrained_tokens(out / "pretrained.tokens", *pretrained);

  sdp::model::ParserModel model(config, vocab, std::move(pretrained), seed);
  std::ofstream metrics(out / "metrics.tsv");
  metrics << "step\ttrain_loss\tdev_UF1\tdev_LF1\n";
  sdp::train::TrainOptions options;
  options.seed = seed;
  options.out_dir = out;
  options.metrics_log = &metrics;
  sdp::train::Trainer trainer(model, train, dev, options);
  const auto result = trainer.run();
  sdp::ad::save_checkpoint(out / "model.sdpm", model.state());

  std::cout << "steps=" << result.steps << '\n' << "stop=" << sdp::train::to_string(result.reason) << '\n';
  if (result.best_lf1) {
    std::cout << "best_step=" << result.best_step << '\n'
              << "best_dev_LF=" << sdp::eval::format_metric(*result.best_lf1) << '\n';
  }
  return 0;
}

int cmd_parse(const std::string& model_dir, const std::string& input, const std::string& output) {
  const auto model = load_model(model_dir);
  const auto sentences = read_corpus(input);
  std::vector<sdp::data::SemanticGraph> parsed;
  parsed.reserve(sentences.size());
  for (const auto& s : sentences) parsed.push_back(model.parse(s.stripped()));
  if (output.empty() || output == "-") {
    sdp::data::write_sdp(std::cout, parsed);
  } else {
    sdp::data::write_sdp_file(output, parsed);
  }
  return 0;
}

int cmd_eval(const std::string& gold_path, const std::string& pred_path, bool no_tops) {
  const auto gold = read_corpus(gold_path);
  const auto pred = read_corpus(pred_path);
  sdp::eval::EvalReport report;
  try {
    report = sdp::eval::score(gold, pred, !no_tops);
  } catch (const sdp::eval::AlignmentError& e) {
    throw InputError(gold_path + " vs " + pred_path + ": " + e.what());
  }
  sdp::eval::write_report(std::cout, report);
  return 0;
}

int cmd_validate(const std::string& input) {
  const auto graphs = read_corpus(input);
  bool all_valid = true;
  for (std::size_t i = 0; i < graphs.size(); ++i) {
    const auto& g = graphs[i];
    const std::string name = g.id.empty() ? "sentence " + std::to_string(i + 1) : g.id;
    const auto problems = sdp::data::structural_problems(g);
    const auto cycle = sdp::data::find_cycle(g);
    if (problems.empty() && !cycle) {
      std::cout << name << "\tvalid DAG\n";
      continue;
    }
    all_valid = false;
    for (const auto& p : problems) std::cout << name << "\tinvalid: " << p << '\n';
    if (cycle) {
      std::cout << name << "\tcycle:";
      for (int v : *cycle) std::cout << ' ' << v;
      std::cout << '\n';
    }
  }
  return all_valid ? 0 : kExitInput;
}

int cmd_gradcheck(const std::optional<std::uint64_t>& seed_flag, double tolerance) {
  sdp::gradcheck::CheckOptions options;
  options.tolerance = tolerance;
  const auto results = sdp::gradcheck::run_suite(resolve_seed(seed_flag), options);
  sdp::gradcheck::write_results(std::cout, results);
  std::size_t failed = 0;
  for (const auto& r : results) failed += r.passed ? 0 : 1;
  if (failed) std::cerr << failed << " of " << results.size() << " gradient checks failed\n";
  return failed ? kExitInput : 0;
}

struct VariantsArgs {
  std::string manifest;
  std::string train_path;
  std::string dev_path;
  std::string glove;
  std::string runs_out;
  std::string comparisons_out;
  std::optional<std::size_t> jobs;
  std::optional<std::size_t> steps;
  std::size_t min_count = 7;
};

int cmd_variants(const VariantsArgs& args, const ModelFlags& flags, const std::optional<std::uint64_t>& seed_flag) {
  auto manifest = sdp::study::load_manifest(args.manifest, resolve_config(flags));
  if (args.jobs) manifest.options.jobs = *args.jobs;
  if (args.steps) manifest.options.steps = *args.steps;
  if (manifest.options.seeds.empty()) {
    const auto base_seed = resolve_seed(seed_flag);
    for (std::size_t r = 0; r < manifest.options.replicas; ++r) manifest.options.seeds.push_back(base_seed + r);
  }
  const auto train = read_corpus(args.train_path);
  const auto dev = read_corpus(args.dev_path);
  auto vocab = sdp::data::build_vocab(train, args.min_count);
  auto trainer = sdp::study::parser_trainer(train, dev, std::move(vocab), read_glove(args.glove));

  const auto result = sdp::study::run_study(manifest.base, manifest.variants, manifest.options, trainer);
  for (const auto& w : result.warnings) std::cerr << "warning: " << w << '\n';
  sdp::study::write_runs(std::cout, result);
  std::cout << '\n';
  sdp::study::write_comparisons(std::cout, result);
  if (!args.runs_out.empty()) {
    std::ofstream out(args.runs_out);
    sdp::study::write_runs(out, result);
  }
  if (!args.comparisons_out.empty()) {
    std::ofstream out(args.comparisons_out);
    sdp::study::write_comparisons(out, result);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Biaffine semantic dependency parser"};
  app.require_subcommand(1);
  std::optional<std::uint64_t> seed;
  app.add_option("--seed", seed, "random seed (default: $SDP_SEED, else 1)");

  ModelFlags train_flags;
  std::string train_path, dev_path, out_dir, glove;
  std::size_t min_count = 7;
  auto* train = app.add_subcommand("train", "train a parser");
  train->add_option("--train", train_path, "training corpus (SDP format)")->required()->check(CLI::ExistingFile);
  train->add_option("--dev", dev_path, "development corpus for validation and early stopping (default: none)")
      ->check(CLI::ExistingFile);
  train->add_option("--out", out_dir, "output directory for model.sdpm, vocab.txt, config.txt, metrics.tsv")
      ->required();
  train->add_option("--glove", glove, "pretrained embeddings, one token and its vector per line (default: none)")
      ->check(CLI::ExistingFile);
  train->add_option("--min-count", min_count, "minimum training frequency for word and lemma entries")
      ->capture_default_str();
  train->add_option("--seed", seed, "random seed (default: $SDP_SEED, else 1)");
  add_model_flags(train, train_flags);

  std::string model_dir, input, output = "-";
  auto* parse = app.add_subcommand("parse", "parse sentences with a trained model");
  parse->add_option("--model", model_dir, "model directory written by train")->required()->check(CLI::ExistingDirectory);
  parse->add_option("--input", input, "input sentences (SDP format, edges ignored)")->required()->check(CLI::ExistingFile);
  parse->add_option("--output", output, "output path, - for stdout")->capture_default_str();
  parse->add_option("--seed", seed, "accepted for uniformity; parsing is deterministic");

  std::string gold_path, pred_path;
  bool no_tops = false;
  auto* eval = app.add_subcommand("eval", "score predicted graphs against gold graphs");
  eval->add_option("--gold", gold_path, "gold corpus")->required()->check(CLI::ExistingFile);
  eval->add_option("--pred", pred_path, "predicted corpus")->required()->check(CLI::ExistingFile);
  eval->add_flag("--no-tops", no_tops, "leave top designations out of the labeled scores (default: included)");

  VariantsArgs vargs;
  ModelFlags variant_flags;
  auto* variants = app.add_subcommand("variants", "run an architecture-variation study");
  variants->add_option("--manifest", vargs.manifest, "study manifest")->required()->check(CLI::ExistingFile);
  variants->add_option("--train", vargs.train_path, "training corpus")->required()->check(CLI::ExistingFile);
  variants->add_option("--dev", vargs.dev_path, "development corpus")->required()->check(CLI::ExistingFile);
  variants->add_option("--glove", vargs.glove, "pretrained embeddings (default: none)")->check(CLI::ExistingFile);
  variants->add_option("--jobs", vargs.jobs, "parallel training workers (default: manifest value, else 1)");
  variants->add_option("--steps", vargs.steps, "training steps per replica (default: manifest value, else 3000)")
      ->check(CLI::PositiveNumber);
  variants->add_option("--runs-out", vargs.runs_out, "also write the per-replica table here");
  variants->add_option("--comparisons-out", vargs.comparisons_out, "also write the comparison table here");
  variants->add_option("--min-count", vargs.min_count, "minimum training frequency for vocabulary entries")
      ->capture_default_str();
  variants->add_option("--seed", seed, "first replica seed when the manifest lists none");
  add_model_flags(variants, variant_flags);

  double tolerance = 1e-4;
  auto* gradcheck = app.add_subcommand("gradcheck", "compare analytic gradients with finite differences");
  gradcheck->add_option("--tolerance", tolerance, "maximum relative error")->capture_default_str();
  gradcheck->add_option("--seed", seed, "random seed for the test tensors");

  std::string validate_input;
  auto* validate = app.add_subcommand("validate", "check that every graph is a well-formed DAG");
  validate->add_option("--input", validate_input, "SDP corpus")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*train) return cmd_train(train_path, dev_path, out_dir, train_flags, glove, min_count, seed);
    if (*parse) return cmd_parse(model_dir, input, output);
    if (*eval) return cmd_eval(gold_path, pred_path, no_tops);
    if (*variants) return cmd_variants(vargs, variant_flags, seed);
    if (*gradcheck) return cmd_gradcheck(seed, tolerance);
    if (*validate) return cmd_validate(validate_input);
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const sdp::model::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const sdp::ad::CheckpointError& e) {
    std::cerr << "model error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const sdp::train::TrainingDiverged& e) {
    std::cerr << "training diverged: " << e.what() << '\n';
    return kExitDiverged;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  }
  return kExitUsage;
}
