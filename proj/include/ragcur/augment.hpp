#ifndef RAGCUR_AUGMENT_HPP
#define RAGCUR_AUGMENT_HPP

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ragcur/genclient.hpp"

namespace ragcur {

enum class Difficulty { easy = 1, common = 2, hard = 3 };

int stage_index(Difficulty level);
std::string to_string(Difficulty level);
Difficulty difficulty_from_string(const std::string& name);

enum class Perturbation { irrelevant, counterfactual };

std::string to_string(Perturbation p);
Perturbation perturbation_from_string(const std::string& name);

struct GeneratorExample {
  std::string query_id;
  std::string question;
  std::vector<DocumentRecord> docs;  // exactly k
  std::vector<std::string> gold_answers;
  Difficulty level = Difficulty::common;
  std::optional<std::size_t> perturbed_slot;  // Hard/robustness only
  std::optional<Perturbation> perturbation;
};

struct CrossPoolEntry {
  std::string query_id;  // the query the document was retrieved for
  DocumentRecord doc;
};

// Easy: golden doc, its query-enhanced rewrite, then top retrieved docs,
// skipping documents whose normalized text equals the golden doc's. On a
// rewrite-contract failure the rewrite slot falls back to a verbatim
// golden-doc copy tagged rewritten_query_enhanced_fallback.
GeneratorExample build_easy(const QueryRecord& query,
                            const RetrievalList& retrieved,
                            const DocumentStore& docs, std::size_t k,
                            GeneratorBackend& backend);

GeneratorExample build_common(const QueryRecord& query,
                              const RetrievalList& retrieved,
                              const DocumentStore& docs, std::size_t k);

// Hard: top-k with exactly one slot replaced. The slot is chosen
// uniformly; with probability 0.5 the replacement is an irrelevant
// cross-query document, otherwise a counterfactual rewrite (falling back
// to irrelevant when the rewrite contract cannot be met).
GeneratorExample build_hard(const QueryRecord& query,
                            const RetrievalList& retrieved,
                            const DocumentStore& docs,
                            const std::vector<CrossPoolEntry>& cross_pool,
                            std::size_t k, std::uint64_t seed,
                            GeneratorBackend& backend);

// One fixed-mode perturbation per test query.
std::vector<GeneratorExample> build_robustness_testset(
    const std::vector<QueryRecord>& queries,
    const std::vector<RetrievalList>& retrievals, const DocumentStore& docs,
    const std::vector<CrossPoolEntry>& cross_pool, Perturbation mode,
    std::size_t k, std::uint64_t seed, GeneratorBackend& backend);

std::vector<CrossPoolEntry> build_cross_pool(
    const std::vector<RetrievalList>& retrievals, const DocumentStore& docs);

struct DifficultyRow {
  double em = 0.0;
  double f1 = 0.0;
  double r1 = 0.0;
  double rk = 0.0;
  std::size_t n_queries = 0;
  std::size_t skipped = 0;
};

struct DifficultyReport {
  std::map<Difficulty, DifficultyRow> rows;
  std::size_t k = 0;

  nlohmann::json to_json() const;
};

using LevelSets = std::map<Difficulty, std::vector<GeneratorExample>>;

// EM/F1 from generator answers over each level's docs, R@1/R@k from
// answer containment. Backend failures skip the query and are counted.
DifficultyReport assess_difficulty(const LevelSets& level_sets,
                                   GeneratorBackend& backend, std::size_t k);

// sft/stage{1,2,3}.jsonl with {"system","instruction","output"} triples
// plus manifest.json recording the Easy->Common->Hard stage order.
void emit_sft(const LevelSets& level_sets, const PromptParts& parts,
              const std::filesystem::path& out_dir);

nlohmann::json to_json(const GeneratorExample& example);
GeneratorExample example_from_json(const nlohmann::json& j);
std::vector<GeneratorExample> load_examples(const std::filesystem::path& path);
void save_examples(const std::filesystem::path& path,
                   const std::vector<GeneratorExample>& examples);

// Corpus-wide construction invariants; returns human-readable violation
// messages, empty when clean. Hard/robustness examples are checked
// against their Common counterparts when provided.
std::vector<std::string> validate_examples(
    const std::vector<GeneratorExample>& examples, std::size_t k,
    const std::vector<GeneratorExample>* common_counterparts = nullptr);

}  // namespace ragcur

#endif  // RAGCUR_AUGMENT_HPP
