#ifndef RAGCUR_EVAL_HPP
#define RAGCUR_EVAL_HPP

#include <map>
#include <string>
#include <vector>

#include "ragcur/corpus.hpp"

namespace ragcur {

// 1 iff the normalized prediction equals some normalized gold answer.
int exact_match(const std::string& prediction,
                const std::vector<std::string>& gold_answers);

// Max over gold answers of token-level F1 on normalized tokens.
double f1_score(const std::string& prediction,
                const std::vector<std::string>& gold_answers);

// 1 iff any of the first k documents contains a gold answer.
int recall_at_k(const std::vector<DocumentRecord>& retrieved,
                const std::vector<std::string>& gold_answers, std::size_t k);

struct EvalReport {
  double em = 0.0;                        // percentage
  double f1 = 0.0;                        // percentage
  std::map<std::size_t, double> recall_at;  // k -> percentage
  std::size_t n_queries = 0;

  nlohmann::json to_json() const;
};

struct QueryEvalRow {
  std::string query_id;
  std::string prediction;
  int em = 0;
  double f1 = 0.0;
  std::map<std::size_t, int> recall_at;
};

EvalReport aggregate(const std::vector<QueryEvalRow>& rows);

}  // namespace ragcur

#endif  // RAGCUR_EVAL_HPP
