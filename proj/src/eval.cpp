#include "ragcur/eval.hpp"

#include <algorithm>
#include <unordered_map>

namespace ragcur {

int exact_match(const std::string& prediction,
                const std::vector<std::string>& gold_answers) {
  const auto pred = normalize_answer(prediction);
  for (const auto& gold : gold_answers) {
    if (pred == normalize_answer(gold)) return 1;
  }
  return 0;
}

double f1_score(const std::string& prediction,
                const std::vector<std::string>& gold_answers) {
  const auto pred = normalize_answer(prediction);
  double best = 0.0;
  for (const auto& gold : gold_answers) {
    const auto gold_tokens = normalize_answer(gold);
    if (pred.empty() && gold_tokens.empty()) {
      best = std::max(best, 1.0);
      continue;
    }
    if (pred.empty() || gold_tokens.empty()) continue;
    std::unordered_map<std::string, int> gold_counts;
    for (const auto& t : gold_tokens) ++gold_counts[t];
    int overlap = 0;
    for (const auto& t : pred) {
      auto it = gold_counts.find(t);
      if (it != gold_counts.end() && it->second > 0) {
        --it->second;
        ++overlap;
      }
    }
    if (overlap == 0) continue;
    const double precision = static_cast<double>(overlap) / pred.size();
    const double recall = static_cast<double>(overlap) / gold_tokens.size();
    best = std::max(best, 2.0 * precision * recall / (precision + recall));
  }
  return best;
}

int recall_at_k(const std::vector<DocumentRecord>& retrieved,
                const std::vector<std::string>& gold_answers, std::size_t k) {
  if (retrieved.size() < k) {
    throw ValidationError("recall_at_k: only " +
                          std::to_string(retrieved.size()) +
                          " documents available for k=" + std::to_string(k));
  }
  for (std::size_t i = 0; i < k; ++i) {
    if (contains_answer(retrieved[i], gold_answers)) return 1;
  }
  return 0;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json recall = nlohmann::json::object();
  for (const auto& [k, value] : recall_at) {
    recall[std::to_string(k)] = value;
  }
  return {{"em", em},
          {"f1", f1},
          {"recall_at", recall},
          {"n_queries", n_queries}};
}

EvalReport aggregate(const std::vector<QueryEvalRow>& rows) {
  EvalReport report;
  report.n_queries = rows.size();
  if (rows.empty()) return report;
  std::map<std::size_t, double> recall_sums;
  double em_sum = 0.0;
  double f1_sum = 0.0;
  for (const auto& row : rows) {
    em_sum += row.em;
    f1_sum += row.f1;
    for (const auto& [k, hit] : row.recall_at) recall_sums[k] += hit;
  }
  const double n = static_cast<double>(rows.size());
  report.em = 100.0 * em_sum / n;
  report.f1 = 100.0 * f1_sum / n;
  for (const auto& [k, sum] : recall_sums) {
    report.recall_at[k] = 100.0 * sum / n;
  }
  return report;
}

}  // namespace ragcur
