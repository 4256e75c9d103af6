#ifndef RAGCUR_CORPUS_HPP
#define RAGCUR_CORPUS_HPP

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"

namespace ragcur {

class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class DocOrigin {
  retrieved,
  golden,
  rewritten_query_enhanced,
  rewritten_query_enhanced_fallback,
  rewritten_counterfactual,
  injected_irrelevant,
};

std::string to_string(DocOrigin origin);
DocOrigin doc_origin_from_string(const std::string& name);

struct DocumentRecord {
  std::string doc_id;
  std::string text;
  std::optional<std::string> title;
  DocOrigin origin = DocOrigin::retrieved;
};

struct QueryRecord {
  std::string query_id;
  std::string question;
  std::vector<std::string> gold_answers;
  std::optional<DocumentRecord> golden_doc;
};

struct RetrievalEntry {
  std::string doc_id;
  double score = 0.0;
};

struct RetrievalList {
  std::string query_id;
  std::vector<RetrievalEntry> entries;
};

// Lowercase, strip punctuation, drop English articles, whitespace-split.
std::vector<std::string> normalize_answer(const std::string& text);

// Normalized tokens re-joined with single spaces (used for text equality).
std::string normalized_text(const std::string& text);

// True iff some answer's normalized tokens appear as a contiguous
// subsequence of the document's normalized tokens.
bool tokens_contain_answer(const std::vector<std::string>& doc_tokens,
                           const std::vector<std::string>& answers);
bool contains_answer(const DocumentRecord& doc,
                     const std::vector<std::string>& answers);
bool text_contains_answer(const std::string& text,
                          const std::vector<std::string>& answers);

class DocumentStore {
 public:
  void add(DocumentRecord doc);
  bool contains(const std::string& doc_id) const;
  const DocumentRecord& get(const std::string& doc_id) const;
  std::size_t size() const { return docs_.size(); }
  const std::vector<DocumentRecord>& records() const { return docs_; }

 private:
  std::vector<DocumentRecord> docs_;
  std::unordered_map<std::string, std::size_t> index_;
};

nlohmann::json to_json(const DocumentRecord& doc);
nlohmann::json to_json(const QueryRecord& query);
nlohmann::json to_json(const RetrievalList& list);
DocumentRecord document_from_json(const nlohmann::json& j);
QueryRecord query_from_json(const nlohmann::json& j);
RetrievalList retrieval_from_json(const nlohmann::json& j);

std::vector<QueryRecord> load_queries(const std::filesystem::path& path);
DocumentStore load_docs(const std::filesystem::path& path);
std::vector<RetrievalList> load_retrievals(const std::filesystem::path& path);

void save_queries(const std::filesystem::path& path,
                  const std::vector<QueryRecord>& queries);
void save_docs(const std::filesystem::path& path, const DocumentStore& docs);
void save_retrievals(const std::filesystem::path& path,
                     const std::vector<RetrievalList>& lists);

// Generic JSONL helpers shared by the other modules.
std::vector<nlohmann::json> load_jsonl(const std::filesystem::path& path);
void save_jsonl(const std::filesystem::path& path,
                const std::vector<nlohmann::json>& records);

}  // namespace ragcur

#endif  // RAGCUR_CORPUS_HPP
