#include "ragcur/rerank.hpp"

#include <algorithm>

namespace ragcur {

bool preferred_before(const std::string& a_id, const PreferenceKey& a,
                      const std::string& b_id, const PreferenceKey& b) {
  if (a.delta_rank != b.delta_rank) return a.delta_rank > b.delta_rank;
  if (a.answer_logprob != b.answer_logprob) {
    return a.answer_logprob > b.answer_logprob;
  }
  return a_id < b_id;
}

PreferenceKey preference_key(const UtilityScore& baseline,
                             const UtilityScore& with_doc) {
  return {baseline.answer_rank - with_doc.answer_rank,
          with_doc.answer_logprob};
}

RerankedList rerank_documents(
    const std::string& query_id, const std::vector<std::string>& doc_ids,
    const UtilityScore& baseline,
    const std::unordered_map<std::string, UtilityScore>& with_doc_scores) {
  RerankedList list;
  list.query_id = query_id;
  list.entries.reserve(doc_ids.size());
  for (const auto& doc_id : doc_ids) {
    auto it = with_doc_scores.find(doc_id);
    if (it == with_doc_scores.end()) {
      throw ValidationError("missing utility score for doc " + doc_id +
                            " of query " + query_id);
    }
    list.entries.push_back({doc_id, preference_key(baseline, it->second), 0});
  }
  std::sort(list.entries.begin(), list.entries.end(),
            [](const RerankedEntry& a, const RerankedEntry& b) {
              return preferred_before(a.doc_id, a.key, b.doc_id, b.key);
            });
  for (std::size_t i = 0; i < list.entries.size(); ++i) {
    list.entries[i].position = i + 1;
  }
  return list;
}

void GroupBounds::validate() const {
  if (!(n1 >= 1 && n1 < n2 && n2 < n)) {
    throw ValidationError("invalid group bounds: require 1 <= n1 < n2 < n, "
                          "got n1=" + std::to_string(n1) +
                          " n2=" + std::to_string(n2) +
                          " n=" + std::to_string(n));
  }
}

Groups partition_groups(const RerankedList& list, const GroupBounds& bounds) {
  bounds.validate();
  if (list.entries.size() != bounds.n) {
    throw ValidationError("reranked list for query " + list.query_id +
                          " has " + std::to_string(list.entries.size()) +
                          " entries, bounds expect " +
                          std::to_string(bounds.n));
  }
  Groups groups;
  for (const auto& entry : list.entries) {
    if (entry.position <= bounds.n1) {
      groups.d1.push_back(entry);
    } else if (entry.position <= bounds.n2) {
      groups.d2.push_back(entry);
    } else {
      groups.d3.push_back(entry);
    }
  }
  return groups;
}

std::vector<RerankedList> load_reranked(const std::filesystem::path& path) {
  std::vector<RerankedList> lists;
  for (const auto& j : load_jsonl(path)) {
    RerankedList list;
    list.query_id = j.at("query_id").get<std::string>();
    std::size_t expected = 1;
    for (const auto& e : j.at("entries")) {
      RerankedEntry entry;
      entry.doc_id = e.at("doc_id").get<std::string>();
      entry.position = e.at("position").get<std::size_t>();
      entry.key.delta_rank = e.at("delta_rank").get<long>();
      entry.key.answer_logprob = e.at("answer_logprob").get<double>();
      if (entry.position != expected++) {
        throw ValidationError("reranked list for query " + list.query_id +
                              " has a gap at position " +
                              std::to_string(entry.position));
      }
      list.entries.push_back(std::move(entry));
    }
    lists.push_back(std::move(list));
  }
  return lists;
}

void save_reranked(const std::filesystem::path& path,
                   const std::vector<RerankedList>& lists) {
  std::vector<nlohmann::json> records;
  records.reserve(lists.size());
  for (const auto& list : lists) {
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& e : list.entries) {
      entries.push_back({{"doc_id", e.doc_id},
                         {"position", e.position},
                         {"delta_rank", e.key.delta_rank},
                         {"answer_logprob", e.key.answer_logprob}});
    }
    records.push_back({{"query_id", list.query_id}, {"entries", entries}});
  }
  save_jsonl(path, records);
}

}  // namespace ragcur
