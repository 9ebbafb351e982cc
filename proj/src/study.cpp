#include "sdp/study.hpp"

#include <atomic>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include "sdp/parser_model.hpp"
#include "sdp/trainer.hpp"

namespace sdp::study {

const std::vector<VariantSpec>& predefined_variants() {
  static const std::vector<VariantSpec> variants = {
      {"unfactorized", {{"factorized", "false"}}},
      {"no-hidden-edge", {{"edge_hidden", "false"}}},
      {"no-hidden-label", {{"label_hidden", "false"}}},
      {"no-hidden-both", {{"edge_hidden", "false"}, {"label_hidden", "false"}}},
      {"bilinear", {{"classifier", "bilinear"}}},
      {"edge-diagonal", {{"edge_diagonal", "true"}}},
      {"label-full", {{"label_diagonal", "false"}}},
      {"relu", {{"nonlinearity", "relu"}}},
  };
  return variants;
}

std::optional<VariantSpec> find_variant(const std::string& name) {
  for (const auto& v : predefined_variants())
    if (v.name == name) return v;
  return std::nullopt;
}

VariantSpec parse_variant(const std::string& text) {
  const auto colon = text.find(':');
  const std::string name = model::trim(text.substr(0, colon));
  if (name.empty()) throw model::ConfigError("variant without a name: '" + text + "'");
  if (colon == std::string::npos) {
    if (auto v = find_variant(name)) return *v;
    throw model::ConfigError("unknown variant '" + name + "'");
  }
  if (name == kBaseline) throw model::ConfigError("'baseline' is reserved");
  VariantSpec spec{name, {}};
  std::istringstream rest(text.substr(colon + 1));
  std::string item;
  while (std::getline(rest, item, ',')) {
    item = model::trim(item);
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw model::ConfigError("variant '" + name + "': expected key=value, got '" + item + "'");
    spec.deltas.emplace_back(model::trim(item.substr(0, eq)), model::trim(item.substr(eq + 1)));
  }
  if (spec.deltas.empty()) throw model::ConfigError("variant '" + name + "' changes nothing");
  return spec;
}

model::ModelConfig apply_variant(const model::ModelConfig& base, const VariantSpec& variant) {
  model::ModelConfig config = base;
  for (const auto& [key, value] : variant.deltas) config.set(key, value);
  config.validate();
  return config;
}

std::vector<double> StudyResult::scores(const std::string& variant) const {
  std::vector<double> out;
  for (const auto& r : runs)
    if (r.variant == variant && r.lf1) out.push_back(*r.lf1);
  return out;
}

StudyResult run_study(const model::ModelConfig& base, std::span<const VariantSpec> variants,
                      const StudyOptions& options, const TrainFunction& train) {
  if (options.replicas < 2) throw std::invalid_argument("a study needs at least 2 replicas");
  std::vector<std::uint64_t> seeds = options.seeds;
  if (seeds.empty())
    for (std::size_t r = 0; r < options.replicas; ++r) seeds.push_back(r + 1);
  if (seeds.size() < options.replicas) {
    throw std::invalid_argument("study has " + std::to_string(options.replicas) + " replicas but only " +
                                std::to_string(seeds.size()) + " seeds");
  }

  std::vector<VariantSpec> all{{kBaseline, {}}};
  all.insert(all.end(), variants.begin(), variants.end());
  std::vector<model::ModelConfig> configs;
  if (options.steps == 0) throw std::invalid_argument("a study needs a positive step budget");
  for (const auto& v : all) {
    configs.push_back(apply_variant(base, v));
    configs.back().max_steps = options.steps;
  }

  StudyResult result;
  for (const auto& v : all) {
    for (std::size_t r = 0; r < options.replicas; ++r) result.runs.push_back({v.name, r, seeds[r], std::nullopt, {}});
  }

  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t i = next++; i < result.runs.size(); i = next++) {
      auto& run = result.runs[i];
      try {
        run.lf1 = train(configs[i / options.replicas], run.seed);
      } catch (const std::exception& e) {
        run.error = e.what();
      }
    }
  };
  const std::size_t jobs = std::max<std::size_t>(1, std::min(options.jobs, result.runs.size()));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (std::size_t j = 0; j < jobs; ++j) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }

  for (const auto& run : result.runs) {
    if (!run.lf1) {
      result.warnings.push_back("variant " + run.variant + " replica " + std::to_string(run.replica) + " (seed " +
                                std::to_string(run.seed) + ") failed: " + run.error);
    }
  }
  const auto baseline = result.scores(kBaseline);
  if (baseline.size() < 2) {
    result.warnings.push_back("baseline has fewer than 2 successful replicas; no comparisons made");
    return result;
  }
  for (std::size_t v = 1; v < all.size(); ++v) {
    const auto scores = result.scores(all[v].name);
    if (scores.size() < 2) {
      result.warnings.push_back("variant " + all[v].name + " excluded: fewer than 2 successful replicas");
      continue;
    }
    // Compare only replicas that succeeded on both sides so counts match.
    std::vector<double> a, b;
    for (std::size_t r = 0; r < options.replicas; ++r) {
      const auto& va = result.runs[v * options.replicas + r].lf1;
      const auto& vb = result.runs[r].lf1;
      if (va && vb) {
        a.push_back(*va);
        b.push_back(*vb);
      }
    }
    if (a.size() < 2) {
      result.warnings.push_back("variant " + all[v].name + " excluded: fewer than 2 replicas paired with the baseline");
      continue;
    }
    result.comparisons.push_back({all[v].name, a.size(), stats::rank_sum(a, b, options.tail)});
  }
  return result;
}

TrainFunction parser_trainer(std::span<const data::SemanticGraph> train, std::span<const data::SemanticGraph> dev,
                             data::Vocabulary vocab, std::optional<nn::PretrainedEmbeddings> pretrained) {
  return [train, dev, vocab = std::move(vocab), pretrained = std::move(pretrained)](
             const model::ModelConfig& config, std::uint64_t seed) {
    model::ParserModel parser(config, vocab, pretrained, seed);
    train::TrainOptions options;
    options.seed = seed;
    train::Trainer trainer(parser, train, dev, options);
    const auto result = trainer.run();
    if (result.best_lf1) return *result.best_lf1;
    return train::evaluate(parser, dev).labeled.f1();
  };
}

void write_runs(std::ostream& out, const StudyResult& result) {
  out << "variant\treplica\tseed\tLF1\n";
  for (const auto& r : result.runs) {
    out << r.variant << '\t' << r.replica << '\t' << r.seed << '\t';
    if (r.lf1) out << std::setprecision(6) << *r.lf1;
    else out << "failed";
    out << '\n';
  }
}

void write_comparisons(std::ostream& out, const StudyResult& result) {
  out << "variant\tW\tp\n";
  for (const auto& c : result.comparisons) {
    out << c.variant << '\t' << std::setprecision(6) << c.test.w << '\t' << c.test.p << '\n';
  }
}

Manifest parse_manifest(std::istream& in, model::ModelConfig base) {
  Manifest manifest{std::move(base), {}, {}};
  std::string line;
  std::size_t line_no = 0;
  bool replicas_set = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = model::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw model::ConfigError("manifest line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = model::trim(line.substr(0, eq));
    const std::string value = model::trim(line.substr(eq + 1));
    try {
      if (key == "variant") {
        manifest.variants.push_back(parse_variant(value));
      } else if (key == "replicas") {
        manifest.options.replicas = std::stoul(value);
        replicas_set = true;
      } else if (key == "seeds") {
        std::istringstream s(value);
        manifest.options.seeds.clear();
        for (std::uint64_t seed; s >> seed;) manifest.options.seeds.push_back(seed);
        if (!s.eof()) throw model::ConfigError("malformed seed list '" + value + "'");
      } else if (key == "jobs") {
        manifest.options.jobs = std::stoul(value);
      } else if (key == "tail") {
        manifest.options.tail = stats::parse_tail(value);
      } else if (key == "steps" || key == "max_steps") {
        manifest.options.steps = std::stoul(value);
        if (manifest.options.steps == 0) throw model::ConfigError("steps must be positive");
      } else {
        manifest.base.set(key, value);
      }
    } catch (const std::exception& e) {
      throw model::ConfigError("manifest line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!replicas_set && !manifest.options.seeds.empty()) manifest.options.replicas = manifest.options.seeds.size();
  manifest.base.validate();
  return manifest;
}

Manifest load_manifest(const std::filesystem::path& path, model::ModelConfig base) {
  std::ifstream in(path);
  if (!in) throw model::ConfigError("cannot open manifest " + path.string());
  return parse_manifest(in, std::move(base));
}

}  // namespace sdp::study
