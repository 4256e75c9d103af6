#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <set>

#include "helpers.hpp"
#include "ragcur/augment.hpp"
#include "ragcur/eval.hpp"
#include "ragcur/rng.hpp"

using namespace ragcur;
using testutil::TempDir;
using testutil::make_doc;

namespace {

struct Fixture {
  std::vector<QueryRecord> queries;
  DocumentStore docs;
  std::vector<RetrievalList> retrievals;
};

// n_queries synthetic queries; query i's answer appears in its golden doc
// and in its rank-1 retrieved doc, the rest of the retrieved docs are noise.
Fixture make_fixture(int n_queries, std::size_t depth = 8,
                     bool golden_everywhere = true) {
  Fixture fx;
  for (int i = 0; i < n_queries; ++i) {
    std::string qid = "q" + (std::string(3 - std::to_string(i).size(), '0') +
                             std::to_string(i));
    std::string answer = "answer" + std::to_string(i);
    QueryRecord query;
    query.query_id = qid;
    query.question = "what is topic" + std::to_string(i) + " really about?";
    query.gold_answers = {answer};
    if (golden_everywhere || i % 2 == 0) {
      query.golden_doc =
          make_doc(qid + "-golden",
                   "Background sentence one. The topic" + std::to_string(i) +
                       " study concluded that " + answer +
                       " was correct. Unrelated trailing remark.",
                   DocOrigin::golden);
    }
    RetrievalList list;
    list.query_id = qid;
    for (std::size_t r = 0; r < depth; ++r) {
      std::string did = qid + "-d" + std::to_string(r);
      std::string text =
          r == 0 ? "This passage mentions topic" + std::to_string(i) +
                       " and says " + answer + " plainly."
                 : "Filler passage " + std::to_string(r) + " about query " +
                       std::to_string(i) + " with no useful content.";
      fx.docs.add(make_doc(did, text));
      list.entries.push_back({did, 1.0 - 0.1 * static_cast<double>(r)});
    }
    fx.retrievals.push_back(list);
    fx.queries.push_back(query);
  }
  return fx;
}

}  // namespace

TEST_CASE("build_easy layout: golden, rewrite, retrieved fill") {
  auto fx = make_fixture(3);
  LexicalStubBackend stub;
  auto example = build_easy(fx.queries[0], fx.retrievals[0], fx.docs, 5, stub);
  REQUIRE(example.docs.size() == 5);
  CHECK(example.level == Difficulty::easy);
  CHECK(example.docs[0].origin == DocOrigin::golden);
  CHECK(example.docs[1].origin == DocOrigin::rewritten_query_enhanced);
  CHECK(contains_answer(example.docs[1], example.gold_answers));
  for (std::size_t i = 2; i < 5; ++i) {
    CHECK(example.docs[i].doc_id ==
          fx.retrievals[0].entries[i - 2].doc_id);
    CHECK(example.docs[i].origin == DocOrigin::retrieved);
  }
  // At least two answer-bearing docs.
  int bearing = 0;
  for (const auto& d : example.docs) {
    if (contains_answer(d, example.gold_answers)) ++bearing;
  }
  CHECK(bearing >= 2);
}

TEST_CASE("build_easy skips retrieved duplicates of the golden doc") {
  auto fx = make_fixture(1);
  // Make the rank-1 retrieved doc a normalized-text duplicate of the golden.
  QueryRecord& query = fx.queries[0];
  DocumentStore docs;
  RetrievalList list;
  list.query_id = query.query_id;
  docs.add(make_doc("dup", query.golden_doc->text + "  "));
  list.entries.push_back({"dup", 0.9});
  for (int r = 0; r < 5; ++r) {
    std::string did = "fill" + std::to_string(r);
    docs.add(make_doc(did, "Filler " + std::to_string(r) + " text."));
    list.entries.push_back({did, 0.8 - 0.1 * r});
  }
  LexicalStubBackend stub;
  auto example = build_easy(query, list, docs, 5, stub);
  for (const auto& d : example.docs) {
    CHECK(d.doc_id != "dup");
  }
  CHECK(example.docs[2].doc_id == "fill0");
}

namespace {

// Backend whose query-enhanced rewrites always violate the contract, to
// drive the fallback path.
class BrokenRewriter : public LexicalStubBackend {
 public:
  std::string rewrite_text(const DocumentRecord& doc, RewriteMode mode,
                           const std::string& question,
                           const std::vector<std::string>& answers,
                           int attempt) override {
    if (mode == RewriteMode::query_enhanced) return "nothing useful";
    return LexicalStubBackend::rewrite_text(doc, mode, question, answers,
                                            attempt);
  }
};

}  // namespace

TEST_CASE("build_easy falls back to a tagged golden copy on rewrite failure") {
  auto fx = make_fixture(1);
  BrokenRewriter backend;
  auto example = build_easy(fx.queries[0], fx.retrievals[0], fx.docs, 5,
                            backend);
  CHECK(example.docs[1].origin == DocOrigin::rewritten_query_enhanced_fallback);
  CHECK(example.docs[1].text == fx.queries[0].golden_doc->text);
  CHECK(validate_examples({example}, 5).empty());
}

TEST_CASE("build_common is the verbatim top-k") {
  auto fx = make_fixture(2);
  auto example = build_common(fx.queries[1], fx.retrievals[1], fx.docs, 5);
  CHECK(example.level == Difficulty::common);
  CHECK_FALSE(example.perturbed_slot.has_value());
  REQUIRE(example.docs.size() == 5);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(example.docs[i].doc_id == fx.retrievals[1].entries[i].doc_id);
    CHECK(example.docs[i].origin == DocOrigin::retrieved);
  }
}

TEST_CASE("build_common errors on a short retrieval list") {
  auto fx = make_fixture(1, 3);
  CHECK_THROWS(build_common(fx.queries[0], fx.retrievals[0], fx.docs, 5));
}

TEST_CASE("common-set R@5 equals raw retrieval R@5") {
  auto fx = make_fixture(20);
  double common_hits = 0, raw_hits = 0;
  for (std::size_t i = 0; i < fx.queries.size(); ++i) {
    auto example = build_common(fx.queries[i], fx.retrievals[i], fx.docs, 5);
    common_hits += recall_at_k(example.docs, fx.queries[i].gold_answers, 5);
    std::vector<DocumentRecord> raw;
    for (std::size_t r = 0; r < 5; ++r) {
      raw.push_back(fx.docs.get(fx.retrievals[i].entries[r].doc_id));
    }
    raw_hits += recall_at_k(raw, fx.queries[i].gold_answers, 5);
  }
  CHECK(common_hits == raw_hits);
}

TEST_CASE("build_hard perturbs exactly one slot with provenance") {
  auto fx = make_fixture(6);
  LexicalStubBackend stub;
  auto cross_pool = build_cross_pool(fx.retrievals, fx.docs);
  for (std::size_t i = 0; i < fx.queries.size(); ++i) {
    auto common = build_common(fx.queries[i], fx.retrievals[i], fx.docs, 5);
    auto hard = build_hard(fx.queries[i], fx.retrievals[i], fx.docs,
                           cross_pool, 5, 1000 + i, stub);
    CHECK(hard.level == Difficulty::hard);
    REQUIRE(hard.perturbed_slot.has_value());
    REQUIRE(hard.perturbation.has_value());
    std::size_t diffs = 0;
    for (std::size_t s = 0; s < 5; ++s) {
      if (hard.docs[s].doc_id != common.docs[s].doc_id ||
          hard.docs[s].text != common.docs[s].text) {
        ++diffs;
        CHECK(s == *hard.perturbed_slot);
        bool valid_origin =
            hard.docs[s].origin == DocOrigin::injected_irrelevant ||
            hard.docs[s].origin == DocOrigin::rewritten_counterfactual;
        CHECK(valid_origin);
        if (hard.docs[s].origin == DocOrigin::rewritten_counterfactual) {
          CHECK_FALSE(contains_answer(hard.docs[s], hard.gold_answers));
        }
      }
    }
    CHECK(diffs == 1);
  }
}

TEST_CASE("build_hard is deterministic and both branches occur") {
  auto fx = make_fixture(30);
  LexicalStubBackend stub;
  auto cross_pool = build_cross_pool(fx.retrievals, fx.docs);
  std::set<std::string> modes;
  for (std::size_t i = 0; i < fx.queries.size(); ++i) {
    std::uint64_t seed = mix_seed(42, fx.queries[i].query_id, 3);
    auto a = build_hard(fx.queries[i], fx.retrievals[i], fx.docs, cross_pool,
                        5, seed, stub);
    auto b = build_hard(fx.queries[i], fx.retrievals[i], fx.docs, cross_pool,
                        5, seed, stub);
    CHECK(*a.perturbed_slot == *b.perturbed_slot);
    CHECK(a.docs[*a.perturbed_slot].text == b.docs[*b.perturbed_slot].text);
    modes.insert(to_string(*a.perturbation));
  }
  CHECK(modes.size() == 2);  // both irrelevant and counterfactual fire
}

TEST_CASE("build_hard rejects a cross pool with only same-query docs") {
  auto fx = make_fixture(1);
  LexicalStubBackend stub;
  auto cross_pool = build_cross_pool(fx.retrievals, fx.docs);
  CHECK_THROWS(build_hard(fx.queries[0], fx.retrievals[0], fx.docs, cross_pool,
                          5, 7, stub));
}

TEST_CASE("robustness sets apply a single fixed-mode perturbation per query") {
  auto fx = make_fixture(50);
  LexicalStubBackend stub;
  auto cross_pool = build_cross_pool(fx.retrievals, fx.docs);

  auto irrelevant = build_robustness_testset(
      fx.queries, fx.retrievals, fx.docs, cross_pool,
      Perturbation::irrelevant, 5, 42, stub);
  REQUIRE(irrelevant.size() == 50);
  for (const auto& example : irrelevant) {
    REQUIRE(example.perturbed_slot.has_value());
    CHECK(example.docs[*example.perturbed_slot].origin ==
          DocOrigin::injected_irrelevant);
  }

  auto counterfactual = build_robustness_testset(
      fx.queries, fx.retrievals, fx.docs, cross_pool,
      Perturbation::counterfactual, 5, 42, stub);
  for (const auto& example : counterfactual) {
    const auto& doc = example.docs[*example.perturbed_slot];
    // Counterfactual may fall back to irrelevant when the slot's doc
    // cannot be rewritten (e.g. it never contained the answer).
    if (doc.origin == DocOrigin::rewritten_counterfactual) {
      CHECK_FALSE(contains_answer(doc, example.gold_answers));
    }
  }

  // Different seeds move the perturbed position on at least one query.
  auto reseeded = build_robustness_testset(
      fx.queries, fx.retrievals, fx.docs, cross_pool,
      Perturbation::irrelevant, 5, 43, stub);
  bool any_differs = false;
  for (std::size_t i = 0; i < irrelevant.size(); ++i) {
    if (*irrelevant[i].perturbed_slot != *reseeded[i].perturbed_slot) {
      any_differs = true;
    }
  }
  CHECK(any_differs);
}

TEST_CASE("assess_difficulty: R@5(easy)=100, stub EM ordering, hard R@5 <= common") {
  auto fx = make_fixture(20);
  LexicalStubBackend stub;
  auto cross_pool = build_cross_pool(fx.retrievals, fx.docs);
  LevelSets sets;
  for (std::size_t i = 0; i < fx.queries.size(); ++i) {
    sets[Difficulty::easy].push_back(
        build_easy(fx.queries[i], fx.retrievals[i], fx.docs, 5, stub));
    sets[Difficulty::common].push_back(
        build_common(fx.queries[i], fx.retrievals[i], fx.docs, 5));
    sets[Difficulty::hard].push_back(
        build_hard(fx.queries[i], fx.retrievals[i], fx.docs, cross_pool, 5,
                   mix_seed(42, fx.queries[i].query_id, 3), stub));
  }
  auto report = assess_difficulty(sets, stub, 5);
  CHECK(report.rows.at(Difficulty::easy).rk == doctest::Approx(100.0));
  CHECK(report.rows.at(Difficulty::easy).em >=
        report.rows.at(Difficulty::common).em);
  CHECK(report.rows.at(Difficulty::common).em >=
        report.rows.at(Difficulty::hard).em);
  CHECK(report.rows.at(Difficulty::hard).rk <=
        report.rows.at(Difficulty::common).rk);
  for (const auto& [level, row] : report.rows) {
    CHECK(row.n_queries == 20);
    CHECK(row.skipped == 0);
  }
}

TEST_CASE("emit_sft writes one file per stage with built prompts") {
  auto fx = make_fixture(10);
  LexicalStubBackend stub;
  auto cross_pool = build_cross_pool(fx.retrievals, fx.docs);
  LevelSets sets;
  for (std::size_t i = 0; i < fx.queries.size(); ++i) {
    sets[Difficulty::easy].push_back(
        build_easy(fx.queries[i], fx.retrievals[i], fx.docs, 5, stub));
    sets[Difficulty::common].push_back(
        build_common(fx.queries[i], fx.retrievals[i], fx.docs, 5));
    sets[Difficulty::hard].push_back(
        build_hard(fx.queries[i], fx.retrievals[i], fx.docs, cross_pool, 5,
                   1000 + i, stub));
  }
  TempDir dir("sft");
  emit_sft(sets, PromptParts::defaults(), dir.path());
  for (int s = 1; s <= 3; ++s) {
    auto records = load_jsonl(dir / ("stage" + std::to_string(s) + ".jsonl"));
    CHECK(records.size() == 10);
    for (const auto& r : records) {
      CHECK(r.contains("system"));
      CHECK(r.contains("instruction"));
      CHECK(r.contains("output"));
    }
  }
  // Every document text appears verbatim in the instruction.
  auto stage1 = load_jsonl(dir / "stage1.jsonl");
  for (std::size_t i = 0; i < stage1.size(); ++i) {
    auto instr = stage1[i].at("instruction").get<std::string>();
    for (const auto& d : sets[Difficulty::easy][i].docs) {
      CHECK(instr.find(d.text) != std::string::npos);
    }
  }
  auto manifest =
      nlohmann::json::parse(testutil::read_file(dir / "manifest.json"));
  CHECK(manifest.at("stage_order") == nlohmann::json(std::vector<int>{1, 2, 3}));

  // A missing level is an error.
  LevelSets incomplete;
  incomplete[Difficulty::easy] = sets[Difficulty::easy];
  TempDir dir2("sft2");
  CHECK_THROWS(emit_sft(incomplete, PromptParts::defaults(), dir2.path()));
}

TEST_CASE("examples round-trip through JSONL") {
  auto fx = make_fixture(3);
  LexicalStubBackend stub;
  auto cross_pool = build_cross_pool(fx.retrievals, fx.docs);
  std::vector<GeneratorExample> examples;
  for (std::size_t i = 0; i < fx.queries.size(); ++i) {
    examples.push_back(build_hard(fx.queries[i], fx.retrievals[i], fx.docs,
                                  cross_pool, 5, 7 + i, stub));
  }
  TempDir dir("aug-io");
  save_examples(dir / "x.jsonl", examples);
  auto loaded = load_examples(dir / "x.jsonl");
  REQUIRE(loaded.size() == examples.size());
  for (std::size_t i = 0; i < loaded.size(); ++i) {
    CHECK(loaded[i].query_id == examples[i].query_id);
    CHECK(loaded[i].level == examples[i].level);
    CHECK(*loaded[i].perturbed_slot == *examples[i].perturbed_slot);
    CHECK(loaded[i].docs.size() == examples[i].docs.size());
    for (std::size_t d = 0; d < loaded[i].docs.size(); ++d) {
      CHECK(loaded[i].docs[d].text == examples[i].docs[d].text);
      CHECK(loaded[i].docs[d].origin == examples[i].docs[d].origin);
    }
  }
  save_examples(dir / "y.jsonl", loaded);
  CHECK(testutil::read_file(dir / "x.jsonl") ==
        testutil::read_file(dir / "y.jsonl"));
}

TEST_CASE("validator flags broken corpora") {
  auto fx = make_fixture(4);
  LexicalStubBackend stub;
  auto cross_pool = build_cross_pool(fx.retrievals, fx.docs);
  std::vector<GeneratorExample> easy, common, hard;
  for (std::size_t i = 0; i < fx.queries.size(); ++i) {
    easy.push_back(build_easy(fx.queries[i], fx.retrievals[i], fx.docs, 5,
                              stub));
    common.push_back(build_common(fx.queries[i], fx.retrievals[i], fx.docs, 5));
    hard.push_back(build_hard(fx.queries[i], fx.retrievals[i], fx.docs,
                              cross_pool, 5, 11 + i, stub));
  }
  CHECK(validate_examples(easy, 5).empty());
  CHECK(validate_examples(common, 5).empty());
  CHECK(validate_examples(hard, 5, &common).empty());

  // Break the Easy guarantee: drop the answer-bearing docs.
  auto broken_easy = easy;
  for (auto& d : broken_easy[0].docs) d.text = "no useful content";
  CHECK_FALSE(validate_examples(broken_easy, 5).empty());

  // Break the Hard guarantee: perturb a second slot.
  auto broken_hard = hard;
  std::size_t other = (*broken_hard[0].perturbed_slot + 1) % 5;
  broken_hard[0].docs[other].text = "tampered";
  CHECK_FALSE(validate_examples(broken_hard, 5, &common).empty());

  // A counterfactual that still contains the answer is flagged.
  auto leaky = hard;
  for (auto& example : leaky) {
    auto& doc = example.docs[*example.perturbed_slot];
    doc.origin = DocOrigin::rewritten_counterfactual;
    doc.text = "the answer is " + example.gold_answers[0];
  }
  CHECK_FALSE(validate_examples(leaky, 5).empty());
}
