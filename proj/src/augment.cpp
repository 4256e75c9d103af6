#include "ragcur/augment.hpp"

#include <algorithm>
#include <fstream>
#include <unordered_set>

#include "ragcur/eval.hpp"
#include "ragcur/rng.hpp"

namespace ragcur {

int stage_index(Difficulty level) { return static_cast<int>(level); }

std::string to_string(Difficulty level) {
  switch (level) {
    case Difficulty::easy:
      return "easy";
    case Difficulty::common:
      return "common";
    case Difficulty::hard:
      return "hard";
  }
  throw std::logic_error("unknown Difficulty");
}

Difficulty difficulty_from_string(const std::string& name) {
  if (name == "easy") return Difficulty::easy;
  if (name == "common") return Difficulty::common;
  if (name == "hard") return Difficulty::hard;
  throw ValidationError("unknown difficulty level: " + name);
}

std::string to_string(Perturbation p) {
  return p == Perturbation::irrelevant ? "irrelevant" : "counterfactual";
}

Perturbation perturbation_from_string(const std::string& name) {
  if (name == "irrelevant") return Perturbation::irrelevant;
  if (name == "counterfactual") return Perturbation::counterfactual;
  throw ValidationError("unknown perturbation: " + name);
}

namespace {

void require_depth(const QueryRecord& query, const RetrievalList& retrieved,
                   std::size_t k) {
  if (retrieved.entries.size() < k) {
    throw ValidationError("query " + query.query_id + " has only " +
                          std::to_string(retrieved.entries.size()) +
                          " retrieved documents, need " + std::to_string(k));
  }
}

std::vector<DocumentRecord> top_k_docs(const RetrievalList& retrieved,
                                       const DocumentStore& docs,
                                       std::size_t k) {
  std::vector<DocumentRecord> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    out.push_back(docs.get(retrieved.entries[i].doc_id));
  }
  return out;
}

}  // namespace

GeneratorExample build_easy(const QueryRecord& query,
                            const RetrievalList& retrieved,
                            const DocumentStore& docs, std::size_t k,
                            GeneratorBackend& backend) {
  if (!query.golden_doc) {
    throw ValidationError("query " + query.query_id + " has no golden_doc");
  }
  require_depth(query, retrieved, k);

  GeneratorExample example;
  example.query_id = query.query_id;
  example.question = query.question;
  example.gold_answers = query.gold_answers;
  example.level = Difficulty::easy;

  DocumentRecord golden = *query.golden_doc;
  golden.origin = DocOrigin::golden;
  example.docs.push_back(golden);
  try {
    example.docs.push_back(rewrite(golden, RewriteMode::query_enhanced,
                                   query.question, query.gold_answers,
                                   backend));
  } catch (const RewriteContractError&) {
    DocumentRecord fallback = golden;
    fallback.doc_id = golden.doc_id + "#qe";
    fallback.origin = DocOrigin::rewritten_query_enhanced_fallback;
    example.docs.push_back(fallback);
  }

  // Fill with retrieved docs, skipping re-occurrences of the golden
  // passage (matched on normalized text, not doc_id).
  const std::string golden_text = normalized_text(golden.text);
  for (const auto& entry : retrieved.entries) {
    if (example.docs.size() == k) break;
    const auto& doc = docs.get(entry.doc_id);
    if (normalized_text(doc.text) == golden_text) continue;
    example.docs.push_back(doc);
  }
  if (example.docs.size() != k) {
    throw ValidationError("query " + query.query_id +
                          ": retrieval list too short to fill an Easy "
                          "example after golden-doc deduplication");
  }
  return example;
}

GeneratorExample build_common(const QueryRecord& query,
                              const RetrievalList& retrieved,
                              const DocumentStore& docs, std::size_t k) {
  require_depth(query, retrieved, k);
  GeneratorExample example;
  example.query_id = query.query_id;
  example.question = query.question;
  example.gold_answers = query.gold_answers;
  example.level = Difficulty::common;
  example.docs = top_k_docs(retrieved, docs, k);
  return example;
}

namespace {

// Uniform draw from cross-pool entries belonging to other queries; the
// replacement also must not collide with a doc_id already in the example.
DocumentRecord draw_irrelevant(const GeneratorExample& example,
                               const std::vector<CrossPoolEntry>& cross_pool,
                               SplitMix64& rng) {
  std::unordered_set<std::string> taken;
  for (const auto& doc : example.docs) taken.insert(doc.doc_id);
  std::vector<const CrossPoolEntry*> candidates;
  candidates.reserve(cross_pool.size());
  for (const auto& entry : cross_pool) {
    if (entry.query_id == example.query_id) continue;
    if (taken.count(entry.doc.doc_id) != 0) continue;
    candidates.push_back(&entry);
  }
  if (candidates.empty()) {
    throw ValidationError("cross pool has no documents from other queries "
                          "for query " + example.query_id);
  }
  DocumentRecord doc = candidates[rng.below(candidates.size())]->doc;
  doc.origin = DocOrigin::injected_irrelevant;
  return doc;
}

GeneratorExample perturb_one_slot(const QueryRecord& query,
                                  const RetrievalList& retrieved,
                                  const DocumentStore& docs,
                                  const std::vector<CrossPoolEntry>& cross_pool,
                                  std::size_t k, std::uint64_t seed,
                                  GeneratorBackend& backend,
                                  std::optional<Perturbation> forced_mode,
                                  Difficulty level) {
  GeneratorExample example = build_common(query, retrieved, docs, k);
  example.level = level;
  SplitMix64 rng(seed);
  const std::size_t slot = static_cast<std::size_t>(rng.below(k));
  Perturbation mode = forced_mode.value_or(
      rng.next_double() < 0.5 ? Perturbation::irrelevant
                              : Perturbation::counterfactual);
  if (mode == Perturbation::counterfactual) {
    try {
      example.docs[slot] =
          rewrite(example.docs[slot], RewriteMode::counterfactual,
                  query.question, query.gold_answers, backend);
    } catch (const RewriteContractError&) {
      mode = Perturbation::irrelevant;
    }
  }
  if (mode == Perturbation::irrelevant) {
    example.docs[slot] = draw_irrelevant(example, cross_pool, rng);
  }
  example.perturbed_slot = slot;
  example.perturbation = mode;
  return example;
}

}  // namespace

GeneratorExample build_hard(const QueryRecord& query,
                            const RetrievalList& retrieved,
                            const DocumentStore& docs,
                            const std::vector<CrossPoolEntry>& cross_pool,
                            std::size_t k, std::uint64_t seed,
                            GeneratorBackend& backend) {
  return perturb_one_slot(query, retrieved, docs, cross_pool, k, seed,
                          backend, std::nullopt, Difficulty::hard);
}

std::vector<GeneratorExample> build_robustness_testset(
    const std::vector<QueryRecord>& queries,
    const std::vector<RetrievalList>& retrievals, const DocumentStore& docs,
    const std::vector<CrossPoolEntry>& cross_pool, Perturbation mode,
    std::size_t k, std::uint64_t seed, GeneratorBackend& backend) {
  if (queries.size() != retrievals.size()) {
    throw ValidationError("queries and retrieval lists differ in count");
  }
  std::vector<GeneratorExample> testset;
  testset.reserve(queries.size());
  for (std::size_t i = 0; i < queries.size(); ++i) {
    testset.push_back(perturb_one_slot(
        queries[i], retrievals[i], docs, cross_pool, k,
        mix_seed(seed, queries[i].query_id,
                 static_cast<std::uint64_t>(mode)),
        backend, mode, Difficulty::hard));
  }
  return testset;
}

std::vector<CrossPoolEntry> build_cross_pool(
    const std::vector<RetrievalList>& retrievals, const DocumentStore& docs) {
  std::vector<CrossPoolEntry> pool;
  for (const auto& list : retrievals) {
    for (const auto& entry : list.entries) {
      pool.push_back({list.query_id, docs.get(entry.doc_id)});
    }
  }
  return pool;
}

nlohmann::json DifficultyReport::to_json() const {
  nlohmann::json levels = nlohmann::json::object();
  for (const auto& [level, row] : rows) {
    levels[to_string(level)] = {
        {"em", row.em},   {"f1", row.f1},
        {"r1", row.r1},   {"r" + std::to_string(k), row.rk},
        {"n_queries", row.n_queries}, {"skipped", row.skipped}};
  }
  return {{"k", k}, {"levels", levels}};
}

DifficultyReport assess_difficulty(const LevelSets& level_sets,
                                   GeneratorBackend& backend, std::size_t k) {
  DifficultyReport report;
  report.k = k;
  for (const auto& [level, examples] : level_sets) {
    DifficultyRow row;
    double em_sum = 0, f1_sum = 0, r1_sum = 0, rk_sum = 0;
    for (const auto& example : examples) {
      std::string answer;
      try {
        answer = extract_answer(backend.generate(
            example.question, example.docs, example.gold_answers));
      } catch (const TransportError&) {
        ++row.skipped;
        continue;
      }
      em_sum += exact_match(answer, example.gold_answers);
      f1_sum += f1_score(answer, example.gold_answers);
      r1_sum += recall_at_k(example.docs, example.gold_answers, 1);
      rk_sum += recall_at_k(example.docs, example.gold_answers, k);
      ++row.n_queries;
    }
    if (row.n_queries > 0) {
      const double n = static_cast<double>(row.n_queries);
      row.em = 100.0 * em_sum / n;
      row.f1 = 100.0 * f1_sum / n;
      row.r1 = 100.0 * r1_sum / n;
      row.rk = 100.0 * rk_sum / n;
    }
    report.rows[level] = row;
  }
  return report;
}

void emit_sft(const LevelSets& level_sets, const PromptParts& parts,
              const std::filesystem::path& out_dir) {
  for (Difficulty level :
       {Difficulty::easy, Difficulty::common, Difficulty::hard}) {
    if (level_sets.count(level) == 0) {
      throw ValidationError("emit_sft: missing " + to_string(level) +
                            " level set");
    }
  }
  std::filesystem::create_directories(out_dir);
  nlohmann::json stage_files = nlohmann::json::array();
  for (const auto& [level, examples] : level_sets) {
    const std::string filename =
        "stage" + std::to_string(stage_index(level)) + ".jsonl";
    std::vector<nlohmann::json> records;
    records.reserve(examples.size());
    for (const auto& example : examples) {
      records.push_back(
          {{"system", parts.system_text},
           {"instruction",
            build_prompt(example.docs, example.question,
                         PromptParts{"", parts.user_template})},
           {"output", example.gold_answers.front()}});
    }
    save_jsonl(out_dir / filename, records);
    stage_files.push_back({{"stage", stage_index(level)},
                           {"level", to_string(level)},
                           {"file", filename},
                           {"records", examples.size()}});
  }
  nlohmann::json manifest{{"stage_order", {1, 2, 3}},
                          {"stages", stage_files}};
  std::ofstream out(out_dir / "manifest.json", std::ios::trunc);
  out << manifest.dump(2) << '\n';
}

nlohmann::json to_json(const GeneratorExample& example) {
  nlohmann::json docs = nlohmann::json::array();
  for (const auto& doc : example.docs) docs.push_back(to_json(doc));
  nlohmann::json j{{"query_id", example.query_id},
                   {"question", example.question},
                   {"docs", docs},
                   {"gold_answers", example.gold_answers},
                   {"level", to_string(example.level)}};
  if (example.perturbed_slot) j["perturbed_slot"] = *example.perturbed_slot;
  if (example.perturbation) j["perturbation"] = to_string(*example.perturbation);
  return j;
}

GeneratorExample example_from_json(const nlohmann::json& j) {
  GeneratorExample example;
  example.query_id = j.at("query_id").get<std::string>();
  example.question = j.at("question").get<std::string>();
  for (const auto& doc : j.at("docs")) {
    example.docs.push_back(document_from_json(doc));
  }
  example.gold_answers = j.at("gold_answers").get<std::vector<std::string>>();
  example.level = difficulty_from_string(j.at("level").get<std::string>());
  if (j.contains("perturbed_slot")) {
    example.perturbed_slot = j["perturbed_slot"].get<std::size_t>();
  }
  if (j.contains("perturbation")) {
    example.perturbation =
        perturbation_from_string(j["perturbation"].get<std::string>());
  }
  return example;
}

std::vector<GeneratorExample> load_examples(
    const std::filesystem::path& path) {
  std::vector<GeneratorExample> examples;
  for (const auto& j : load_jsonl(path)) {
    examples.push_back(example_from_json(j));
  }
  return examples;
}

void save_examples(const std::filesystem::path& path,
                   const std::vector<GeneratorExample>& examples) {
  std::vector<nlohmann::json> records;
  records.reserve(examples.size());
  for (const auto& example : examples) records.push_back(to_json(example));
  save_jsonl(path, records);
}

std::vector<std::string> validate_examples(
    const std::vector<GeneratorExample>& examples, std::size_t k,
    const std::vector<GeneratorExample>* common_counterparts) {
  std::vector<std::string> violations;
  std::unordered_map<std::string, const GeneratorExample*> common_by_id;
  if (common_counterparts) {
    for (const auto& example : *common_counterparts) {
      common_by_id[example.query_id] = &example;
    }
  }
  for (const auto& example : examples) {
    const std::string where =
        to_string(example.level) + " example for query " + example.query_id;
    if (example.docs.size() != k) {
      violations.push_back(where + ": has " +
                           std::to_string(example.docs.size()) +
                           " docs, expected " + std::to_string(k));
      continue;
    }
    std::size_t answer_bearing = 0;
    for (const auto& doc : example.docs) {
      if (contains_answer(doc, example.gold_answers)) ++answer_bearing;
      if (doc.origin == DocOrigin::rewritten_counterfactual &&
          contains_answer(doc, example.gold_answers)) {
        violations.push_back(where + ": counterfactual doc " + doc.doc_id +
                             " still contains a gold answer");
      }
      if (doc.origin == DocOrigin::rewritten_query_enhanced &&
          !contains_answer(doc, example.gold_answers)) {
        violations.push_back(where + ": query-enhanced doc " + doc.doc_id +
                             " lost the gold answer");
      }
    }
    switch (example.level) {
      case Difficulty::easy:
        if (answer_bearing < 2) {
          violations.push_back(where + ": only " +
                               std::to_string(answer_bearing) +
                               " answer-bearing docs, need >= 2");
        }
        break;
      case Difficulty::common:
        for (const auto& doc : example.docs) {
          if (doc.origin != DocOrigin::retrieved) {
            violations.push_back(where + ": doc " + doc.doc_id +
                                 " has origin " + to_string(doc.origin));
          }
        }
        if (example.perturbed_slot) {
          violations.push_back(where + ": unexpected perturbed_slot");
        }
        break;
      case Difficulty::hard: {
        std::size_t perturbed = 0;
        for (const auto& doc : example.docs) {
          if (doc.origin == DocOrigin::injected_irrelevant ||
              doc.origin == DocOrigin::rewritten_counterfactual) {
            ++perturbed;
          }
        }
        if (perturbed != 1) {
          violations.push_back(where + ": " + std::to_string(perturbed) +
                               " perturbed docs, expected exactly 1");
        }
        if (!example.perturbed_slot || !example.perturbation) {
          violations.push_back(where + ": missing perturbation provenance");
        }
        if (common_counterparts) {
          auto it = common_by_id.find(example.query_id);
          if (it == common_by_id.end()) {
            violations.push_back(where + ": no Common counterpart");
          } else {
            std::size_t differing = 0;
            for (std::size_t i = 0; i < k; ++i) {
              if (example.docs[i].doc_id != it->second->docs[i].doc_id ||
                  example.docs[i].text != it->second->docs[i].text) {
                ++differing;
              }
            }
            if (differing != 1) {
              violations.push_back(
                  where + ": differs from Common counterpart in " +
                  std::to_string(differing) + " slots, expected exactly 1");
            }
          }
        }
        break;
      }
    }
  }
  return violations;
}

}  // namespace ragcur
