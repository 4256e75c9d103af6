#ifndef RAGCUR_PIPELINE_HPP
#define RAGCUR_PIPELINE_HPP

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ragcur/augment.hpp"
#include "ragcur/curriculum.hpp"
#include "ragcur/train.hpp"

namespace ragcur {

class MissingArtifactError : public std::runtime_error {
 public:
  MissingArtifactError(const std::string& artifact,
                       const std::string& producer)
      : std::runtime_error("missing artifact " + artifact + "; run `" +
                           producer + "` first"),
        producer_(producer) {}
  const std::string& producer() const { return producer_; }

 private:
  std::string producer_;
};

struct PipelineConfig {
  std::filesystem::path queries_path;
  std::filesystem::path docs_path;
  std::filesystem::path embeddings_path;  // optional, precomputed vectors
  std::filesystem::path encoder_path;     // optional, initial encoder
  std::filesystem::path prompts_dir;      // optional prompt templates
  std::filesystem::path out_dir = "out";

  std::size_t k = 5;
  std::size_t n = 20;
  std::size_t embedding_dim = 32;
  std::size_t buckets = 4096;
  std::uint64_t seed = 42;
  int jobs = 1;

  std::string backend_kind = "stub";  // stub | http
  long stub_max_rank = 10000;
  HttpBackendConfig http;

  std::vector<StageSchedule> schedules;  // empty = defaults for (k, n)
  TrainConfig train;

  static PipelineConfig load(const std::filesystem::path& path);
  static PipelineConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;

  // Hash of the canonical serialization, recorded in every manifest.
  std::string hash() const;
  std::vector<StageSchedule> effective_schedules() const;
  PromptParts prompt_parts() const;
  std::unique_ptr<GeneratorBackend> make_backend() const;
};

struct StepResult {
  std::string step;
  bool skipped = false;  // cache hit, nothing recomputed
};

class Pipeline {
 public:
  explicit Pipeline(PipelineConfig config);

  StepResult ingest();
  StepResult retrieve();
  StepResult augment();
  StepResult emit_sft();
  StepResult score();
  StepResult rerank();
  StepResult build_stages();
  StepResult train();
  StepResult evaluate();
  StepResult robustness();
  StepResult report();

  // All steps in dependency order.
  std::vector<StepResult> run_all();

  // Corpus-wide invariant check over every emitted example file.
  std::vector<std::string> validate_artifacts() const;

  const PipelineConfig& config() const { return config_; }
  std::filesystem::path out(const std::string& name) const {
    return config_.out_dir / name;
  }

 private:
  bool cache_hit(const std::string& step,
                 const std::vector<std::filesystem::path>& inputs,
                 const std::vector<std::filesystem::path>& outputs) const;
  void write_manifest(const std::string& step,
                      const std::vector<std::filesystem::path>& inputs) const;
  void require(const std::filesystem::path& artifact,
               const std::string& producer) const;
  EncoderParams initial_encoder() const;

  PipelineConfig config_;
};

// Config/environment checks: schedule feasibility, prompt template slots,
// optional backend reachability. Returns failure messages.
std::vector<std::string> validate_config(const PipelineConfig& config,
                                         bool check_backend = false);

}  // namespace ragcur

#endif  // RAGCUR_PIPELINE_HPP
