#ifndef RAGCUR_RERANK_HPP
#define RAGCUR_RERANK_HPP

#include <filesystem>
#include <string>
#include <vector>

#include "ragcur/corpus.hpp"
#include "ragcur/genclient.hpp"

namespace ragcur {

struct PreferenceKey {
  long delta_rank = 0;  // baseline answer_rank - with-document answer_rank
  double answer_logprob = 0.0;
};

// Lexicographic document preference: larger delta_rank first, then larger
// answer_logprob, then ascending doc_id.
bool preferred_before(const std::string& a_id, const PreferenceKey& a,
                      const std::string& b_id, const PreferenceKey& b);

struct RerankedEntry {
  std::string doc_id;
  PreferenceKey key;
  std::size_t position = 0;  // 1..n
};

struct RerankedList {
  std::string query_id;
  std::vector<RerankedEntry> entries;
};

PreferenceKey preference_key(const UtilityScore& baseline,
                             const UtilityScore& with_doc);

// Orders the n scored documents by preference and assigns positions 1..n.
RerankedList rerank_documents(
    const std::string& query_id, const std::vector<std::string>& doc_ids,
    const UtilityScore& baseline,
    const std::unordered_map<std::string, UtilityScore>& with_doc_scores);

struct GroupBounds {
  std::size_t n1 = 0;
  std::size_t n2 = 0;
  std::size_t n = 0;

  void validate() const;
};

struct Groups {
  std::vector<RerankedEntry> d1;  // positions [1, n1]
  std::vector<RerankedEntry> d2;  // positions (n1, n2]
  std::vector<RerankedEntry> d3;  // positions (n2, n]
};

Groups partition_groups(const RerankedList& list, const GroupBounds& bounds);

std::vector<RerankedList> load_reranked(const std::filesystem::path& path);
void save_reranked(const std::filesystem::path& path,
                   const std::vector<RerankedList>& lists);

}  // namespace ragcur

#endif  // RAGCUR_RERANK_HPP
