#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "ragcur/pipeline.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitMissingArtifact = 2;
constexpr int kExitBackendFailure = 3;

struct CliOptions {
  std::string config_path;
  std::string out;
  std::string backend;
  std::string stage = "all";
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::size_t k = 0;
  std::size_t n = 0;
  int jobs = 0;
  bool check_backend = false;
};

ragcur::PipelineConfig resolve_config(const CliOptions& options) {
  ragcur::PipelineConfig config;
  if (!options.config_path.empty()) {
    config = ragcur::PipelineConfig::load(options.config_path);
  }
  if (!options.out.empty()) config.out_dir = options.out;
  if (!options.backend.empty()) config.backend_kind = options.backend;
  if (options.seed_set) {
    config.seed = options.seed;
    config.train.seed = options.seed;
  }
  if (options.k != 0) config.k = options.k;
  if (options.n != 0) config.n = options.n;
  if (options.jobs != 0) config.jobs = options.jobs;
  return config;
}

void print_results(const std::vector<ragcur::StepResult>& results) {
  for (const auto& result : results) {
    std::cout << result.step << ": "
              << (result.skipped ? "up to date (cached)" : "done") << '\n';
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Curriculum construction and retriever training for RAG"};
  app.require_subcommand(1);

  CliOptions options;
  app.add_option("--config", options.config_path, "Pipeline config file");
  app.add_option("--out", options.out, "Output directory override");
  app.add_option("--backend", options.backend, "Backend override")
      ->check(CLI::IsMember({"stub", "http"}));
  app.add_option("--seed", options.seed, "Seed override")
      ->each([&](const std::string&) { options.seed_set = true; });
  app.add_option("--k", options.k, "Documents per example override");
  app.add_option("--n", options.n, "Reranked pool size override");
  app.add_option("--jobs", options.jobs, "Worker bound override");
  app.add_option("--stage", options.stage, "Stage selector for build-stages")
      ->check(CLI::IsMember({"1", "2", "3", "all"}));

  auto* validate_cmd =
      app.add_subcommand("validate", "Check config and templates");
  validate_cmd->fallthrough();  // global options may follow the subcommand
  validate_cmd->add_flag("--check-backend", options.check_backend,
                         "Probe backend reachability");
  std::vector<std::string> step_names{
      "ingest", "retrieve",     "augment", "emit-sft",   "score",      "rerank",
      "build-stages", "train",  "evaluate", "robustness", "report", "run-all"};
  for (const auto& name : step_names) {
    app.add_subcommand(name)->fallthrough();
  }

  CLI11_PARSE(app, argc, argv);

  try {
    auto config = resolve_config(options);
    if (validate_cmd->parsed()) {
      auto failures = ragcur::validate_config(config, options.check_backend);
      if (failures.empty()) {
        std::cout << "all checks passed\n";
        return kExitOk;
      }
      for (const auto& failure : failures) {
        std::cout << "FAIL: " << failure << '\n';
      }
      return kExitValidation;
    }

    ragcur::Pipeline pipeline(config);
    const std::string step = app.get_subcommands().front()->get_name();
    std::vector<ragcur::StepResult> results;
    if (step == "run-all") {
      results = pipeline.run_all();
    } else if (step == "ingest") {
      results.push_back(pipeline.ingest());
    } else if (step == "retrieve") {
      results.push_back(pipeline.retrieve());
    } else if (step == "augment") {
      results.push_back(pipeline.augment());
    } else if (step == "emit-sft") {
      results.push_back(pipeline.emit_sft());
    } else if (step == "score") {
      results.push_back(pipeline.score());
    } else if (step == "rerank") {
      results.push_back(pipeline.rerank());
    } else if (step == "build-stages") {
      results.push_back(pipeline.build_stages());
    } else if (step == "train") {
      results.push_back(pipeline.train());
    } else if (step == "evaluate") {
      results.push_back(pipeline.evaluate());
    } else if (step == "robustness") {
      results.push_back(pipeline.robustness());
    } else if (step == "report") {
      results.push_back(pipeline.report());
    }
    print_results(results);
    return kExitOk;
  } catch (const ragcur::MissingArtifactError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitMissingArtifact;
  } catch (const ragcur::TransportError& e) {
    std::cerr << "backend error: " << e.what() << '\n';
    return kExitBackendFailure;
  } catch (const ragcur::CapabilityError& e) {
    std::cerr << "backend error: " << e.what() << '\n';
    return kExitBackendFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  }
}
