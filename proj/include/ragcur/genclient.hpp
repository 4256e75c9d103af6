#ifndef RAGCUR_GENCLIENT_HPP
#define RAGCUR_GENCLIENT_HPP

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "ragcur/corpus.hpp"

namespace ragcur {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CapabilityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class RewriteContractError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PromptParts {
  std::string system_text;
  std::string user_template;  // must contain {paragraph} and {instruction}

  void validate() const;
  static PromptParts defaults();
  // Reads inference.txt from a prompts directory: first line block is the
  // system text, the rest the user template, separated by a "---" line.
  static PromptParts load(const std::filesystem::path& prompts_dir);
};

std::string build_prompt(const std::vector<DocumentRecord>& docs,
                         const std::string& question,
                         const PromptParts& parts);

// Content after the first "Answer:" marker, trimmed; the whole trimmed
// response when the marker is absent.
std::string extract_answer(const std::string& response);

struct UtilityScore {
  long answer_rank = 0;       // >= 1
  double answer_logprob = 0;  // length-normalized, <= 0
};

enum class RewriteMode { query_enhanced, counterfactual };

class GeneratorBackend {
 public:
  virtual ~GeneratorBackend() = default;

  // Utility of the gold answer as a forced continuation of the prompt
  // built from (docs, question).
  virtual UtilityScore score(const std::string& question,
                             const std::vector<DocumentRecord>& docs,
                             const std::vector<std::string>& gold_answers) = 0;

  // Raw model response for the inference prompt (includes any
  // "Answer:" framing); callers run extract_answer on it.
  virtual std::string generate(const std::string& question,
                               const std::vector<DocumentRecord>& docs,
                               const std::vector<std::string>& gold_answers) = 0;

  // One rewrite candidate. Contract checking and retries live in
  // rewrite() below, not in the backend.
  virtual std::string rewrite_text(const DocumentRecord& doc, RewriteMode mode,
                                   const std::string& question,
                                   const std::vector<std::string>& gold_answers,
                                   int attempt) = 0;

  virtual std::string name() const = 0;
};

UtilityScore score_with_context(const std::string& question,
                                const std::vector<DocumentRecord>& docs,
                                const std::vector<std::string>& gold_answers,
                                GeneratorBackend& backend);

UtilityScore score_without_context(const std::string& question,
                                   const std::vector<std::string>& gold_answers,
                                   GeneratorBackend& backend);

// Contract-enforced rewriting. query_enhanced output must still contain a
// gold answer and be no longer (in tokens) than the input; counterfactual
// output must contain no gold answer and differ from the input. Throws
// RewriteContractError after max_attempts violations.
DocumentRecord rewrite(const DocumentRecord& doc, RewriteMode mode,
                       const std::string& question,
                       const std::vector<std::string>& gold_answers,
                       GeneratorBackend& backend, int max_attempts = 3);

// Deterministic model-free backend. Scoring rule: rank 1 when the context
// contains a gold answer, otherwise max_rank minus the distinct-token
// overlap between context and question; logprob = -1/(1+overlap).
class LexicalStubBackend : public GeneratorBackend {
 public:
  explicit LexicalStubBackend(PromptParts parts = PromptParts::defaults(),
                              long max_rank = 10000)
      : parts_(std::move(parts)), max_rank_(max_rank) {}

  UtilityScore score(const std::string& question,
                     const std::vector<DocumentRecord>& docs,
                     const std::vector<std::string>& gold_answers) override;
  std::string generate(const std::string& question,
                       const std::vector<DocumentRecord>& docs,
                       const std::vector<std::string>& gold_answers) override;
  std::string rewrite_text(const DocumentRecord& doc, RewriteMode mode,
                           const std::string& question,
                           const std::vector<std::string>& gold_answers,
                           int attempt) override;
  std::string name() const override { return "stub"; }

  long max_rank() const { return max_rank_; }

 private:
  PromptParts parts_;
  long max_rank_;
};

struct HttpBackendConfig {
  std::string base_url = "http://localhost:8000";
  std::string model = "default";
  std::string api_key_env = "RAGCUR_API_KEY";
  int timeout_seconds = 60;
  int max_retries = 3;
  int max_parallel = 4;
  int top_logprobs = 20;
  long max_rank = 10000;  // rank when the answer token is not in the top list
  std::filesystem::path prompts_dir;  // rewrite templates; empty = built-in
};

// Completions-style endpoint with echo + per-token logprobs.
class HttpBackend : public GeneratorBackend {
 public:
  HttpBackend(HttpBackendConfig config, PromptParts parts);

  UtilityScore score(const std::string& question,
                     const std::vector<DocumentRecord>& docs,
                     const std::vector<std::string>& gold_answers) override;
  std::string generate(const std::string& question,
                       const std::vector<DocumentRecord>& docs,
                       const std::vector<std::string>& gold_answers) override;
  std::string rewrite_text(const DocumentRecord& doc, RewriteMode mode,
                           const std::string& question,
                           const std::vector<std::string>& gold_answers,
                           int attempt) override;
  std::string name() const override { return "http"; }

 private:
  nlohmann::json post_with_retries(const std::string& path,
                                   const nlohmann::json& body,
                                   const std::string& context);

  HttpBackendConfig config_;
  PromptParts parts_;
  std::string rewrite_query_enhanced_template_;
  std::string rewrite_counterfactual_template_;
  std::string api_key_;
};

// Score cache keyed by (query_id, doc_id); doc_id "" is the no-context
// baseline row.
class ScoreCache {
 public:
  ScoreCache() = default;
  static ScoreCache load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  bool contains(const std::string& query_id, const std::string& doc_id) const;
  UtilityScore get(const std::string& query_id, const std::string& doc_id) const;
  void put(const std::string& query_id, const std::string& doc_id,
           UtilityScore score);
  std::size_t size() const { return order_.size(); }

 private:
  static std::string key(const std::string& query_id,
                         const std::string& doc_id) {
    return query_id + "\x1f" + doc_id;
  }
  std::vector<std::pair<std::string, std::string>> order_;
  std::unordered_map<std::string, UtilityScore> map_;
};

}  // namespace ragcur

#endif  // RAGCUR_GENCLIENT_HPP
