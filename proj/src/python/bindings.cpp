#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "ragcur/curriculum.hpp"
#include "ragcur/eval.hpp"
#include "ragcur/genclient.hpp"
#include "ragcur/rerank.hpp"
#include "ragcur/train.hpp"

namespace py = pybind11;

namespace {

ragcur::TieredLossInput make_input(std::vector<double> scores,
                                   std::vector<std::size_t> positions,
                                   std::size_t n) {
  ragcur::TieredLossInput input{std::move(scores), std::move(positions), n};
  input.validate();
  return input;
}

std::vector<ragcur::DocumentRecord> docs_from_texts(
    const std::vector<std::string>& texts) {
  std::vector<ragcur::DocumentRecord> docs;
  docs.reserve(texts.size());
  for (std::size_t i = 0; i < texts.size(); ++i) {
    docs.push_back({"doc-" + std::to_string(i), texts[i], std::nullopt,
                    ragcur::DocOrigin::retrieved});
  }
  return docs;
}

}  // namespace

PYBIND11_MODULE(_ragcur, m) {
  m.doc() = "Difficulty-graded curriculum construction for RAG training";

  m.def("normalize_answer", &ragcur::normalize_answer, py::arg("text"),
        "Lowercase, strip punctuation and articles, split on whitespace.");
  m.def("normalized_text", &ragcur::normalized_text, py::arg("text"));
  m.def("contains_answer", &ragcur::text_contains_answer, py::arg("text"),
        py::arg("answers"),
        "True iff some answer appears as a normalized token subsequence.");

  m.def("exact_match", &ragcur::exact_match, py::arg("prediction"),
        py::arg("gold_answers"));
  m.def("f1_score", &ragcur::f1_score, py::arg("prediction"),
        py::arg("gold_answers"));

  m.def(
      "tiered_loss",
      [](std::vector<double> scores, std::vector<std::size_t> positions,
         std::size_t n) {
        return ragcur::tiered_loss(make_input(std::move(scores),
                                              std::move(positions), n));
      },
      py::arg("scores"), py::arg("positions"), py::arg("n"),
      "Pairwise ranking loss with weights linear in global-position gap.");
  m.def(
      "tiered_loss_grad",
      [](std::vector<double> scores, std::vector<std::size_t> positions,
         std::size_t n) {
        return ragcur::tiered_loss_grad(make_input(std::move(scores),
                                                   std::move(positions), n));
      },
      py::arg("scores"), py::arg("positions"), py::arg("n"));

  m.def(
      "default_schedules",
      [](std::size_t k, std::size_t n) {
        py::list out;
        for (const auto& s : ragcur::default_schedules(k, n)) {
          py::dict d;
          d["stage"] = s.stage;
          d["n1"] = s.n1;
          d["n2"] = s.n2;
          d["k1"] = s.k1;
          d["k2"] = s.k2;
          d["k3"] = s.k3;
          out.append(d);
        }
        return out;
      },
      py::arg("k") = 5, py::arg("n") = 20);

  m.def(
      "sample_stage_positions",
      [](std::size_t n, int stage, std::size_t n1, std::size_t n2,
         std::size_t k1, std::size_t k2, std::size_t k3, std::uint64_t seed) {
        ragcur::RerankedList list;
        list.query_id = "q";
        for (std::size_t p = 1; p <= n; ++p) {
          list.entries.push_back({"doc-" + std::to_string(p), {}, p});
        }
        ragcur::StageSchedule schedule{stage, n1, n2, k1, k2, k3};
        schedule.validate(n);
        auto instance = ragcur::sample_stage_instance(list, schedule, seed);
        std::vector<std::size_t> positions;
        for (const auto& member : instance.members) {
          positions.push_back(member.position);
        }
        return positions;
      },
      py::arg("n"), py::arg("stage"), py::arg("n1"), py::arg("n2"),
      py::arg("k1"), py::arg("k2"), py::arg("k3"), py::arg("seed"),
      "Stratified position sample for one stage instance.");

  m.def(
      "rerank",
      [](long baseline_rank, double baseline_logprob,
         const std::map<std::string, std::pair<long, double>>& with_doc) {
        std::vector<std::string> ids;
        std::unordered_map<std::string, ragcur::UtilityScore> scores;
        for (const auto& [doc_id, score] : with_doc) {
          ids.push_back(doc_id);
          scores[doc_id] = {score.first, score.second};
        }
        auto list = ragcur::rerank_documents(
            "q", ids, {baseline_rank, baseline_logprob}, scores);
        std::vector<std::string> ordered;
        for (const auto& entry : list.entries) ordered.push_back(entry.doc_id);
        return ordered;
      },
      py::arg("baseline_rank"), py::arg("baseline_logprob"),
      py::arg("with_doc"),
      "Order doc ids by (rank improvement, answer logprob, doc id).");

  m.def(
      "build_prompt",
      [](const std::vector<std::string>& doc_texts,
         const std::string& question) {
        return ragcur::build_prompt(docs_from_texts(doc_texts), question,
                                    ragcur::PromptParts::defaults());
      },
      py::arg("doc_texts"), py::arg("question"));
  m.def("extract_answer", &ragcur::extract_answer, py::arg("response"));
}
