#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <atomic>
#include <thread>

#include "httplib.h"

#include "helpers.hpp"
#include "ragcur/genclient.hpp"

using namespace ragcur;
using testutil::TempDir;
using testutil::make_doc;

TEST_CASE("build_prompt basics") {
  auto parts = PromptParts::defaults();

  SUBCASE("zero docs leave an empty paragraph block, question intact") {
    auto prompt = build_prompt({}, "who won?", parts);
    CHECK(prompt.find("Question: who won?") != std::string::npos);
  }

  SUBCASE("document order is preserved") {
    auto prompt = build_prompt({make_doc("a", "FIRST-DOC"),
                                make_doc("b", "SECOND-DOC")},
                               "q?", parts);
    CHECK(prompt.find("FIRST-DOC") < prompt.find("SECOND-DOC"));
    CHECK(prompt.find("FIRST-DOC\n\nSECOND-DOC") != std::string::npos);
  }

  SUBCASE("default user text begins with the context preamble") {
    auto prompt = build_prompt({}, "q?", parts);
    CHECK(prompt.find("The following contexts will help you answer the "
                      "question.") != std::string::npos);
    CHECK(prompt.rfind("Answer the following questions with two to three "
                       "words",
                       0) == 0);
  }

  SUBCASE("missing slot is a configuration error") {
    PromptParts bad;
    bad.user_template = "no slots here";
    CHECK_THROWS_AS(build_prompt({}, "q?", bad), ConfigError);
    PromptParts twice;
    twice.user_template = "{paragraph} {paragraph} {instruction}";
    CHECK_THROWS_AS(build_prompt({}, "q?", twice), ConfigError);
  }
}

TEST_CASE("PromptParts::load parses the --- separated template file") {
  TempDir dir("prompts");
  testutil::write_file(dir / "inference.txt",
                       "SYSTEM LINE\n---\nBODY {paragraph}\nQ: {instruction}\n");
  auto parts = PromptParts::load(dir.path());
  CHECK(parts.system_text == "SYSTEM LINE");
  CHECK(parts.user_template == "BODY {paragraph}\nQ: {instruction}");
  testutil::write_file(dir / "inference.txt", "no separator {paragraph}");
  CHECK_THROWS_AS(PromptParts::load(dir.path()), ConfigError);
}

TEST_CASE("extract_answer") {
  CHECK(extract_answer("Answer: Cliff Martinez") == "Cliff Martinez");
  CHECK(extract_answer("Answer:  Paris\n") == "Paris");
  CHECK(extract_answer("Paris") == "Paris");
}

TEST_CASE("stub scoring follows the lexical rule") {
  LexicalStubBackend stub;

  SUBCASE("answer-bearing context yields rank 1") {
    auto s = score_with_context("who composed it?",
                                {make_doc("d", "It was Cliff Martinez.")},
                                {"Cliff Martinez"}, stub);
    CHECK(s.answer_rank == 1);
  }

  SUBCASE("zero overlap with question and answer yields the max rank") {
    auto s = score_with_context("who composed the film score?",
                                {make_doc("d", "unrelated gibberish entirely")},
                                {"Cliff Martinez"}, stub);
    CHECK(s.answer_rank == 10000);
    CHECK(s.answer_logprob == doctest::Approx(-1.0));
  }

  SUBCASE("baseline with answer verbatim in the question is rank 1") {
    auto s = score_without_context("is Cliff Martinez the composer?",
                                   {"Cliff Martinez"}, stub);
    CHECK(s.answer_rank == 1);
  }

  SUBCASE("baseline with no overlap is the max rank") {
    auto s = score_without_context("who composed it?", {"Cliff Martinez"}, stub);
    CHECK(s.answer_rank == 10000);
  }

  SUBCASE("scoring is deterministic") {
    auto a = score_without_context("who?", {"x"}, stub);
    auto b = score_without_context("who?", {"x"}, stub);
    CHECK(a.answer_rank == b.answer_rank);
    CHECK(a.answer_logprob == b.answer_logprob);
  }

  SUBCASE("token overlap raises logprob and lowers rank") {
    auto low = score_with_context("the solar eclipse of 1999",
                                  {make_doc("d", "nothing shared")}, {"x"},
                                  stub);
    auto high = score_with_context("the solar eclipse of 1999",
                                   {make_doc("d", "a solar eclipse happened")},
                                   {"x"}, stub);
    CHECK(high.answer_logprob > low.answer_logprob);
    CHECK(high.answer_rank < low.answer_rank);
  }
}

TEST_CASE("stub generate answers iff the answer is in context") {
  LexicalStubBackend stub;
  auto yes = stub.generate("q?", {make_doc("d", "Paris is the capital")},
                           {"Paris"});
  CHECK(extract_answer(yes) == "Paris");
  auto no = stub.generate("q?", {make_doc("d", "unrelated")}, {"Paris"});
  CHECK(extract_answer(no) == "unknown");
}

TEST_CASE("query_enhanced rewrite extracts the minimal answer sentence") {
  LexicalStubBackend stub;
  auto doc = make_doc(
      "g1",
      "A long irrelevant preamble about many things. The score was composed "
      "by Cliff Martinez in 2011. More trailing filler text follows here.");
  auto out = rewrite(doc, RewriteMode::query_enhanced, "who composed it?",
                     {"Cliff Martinez"}, stub);
  CHECK(out.origin == DocOrigin::rewritten_query_enhanced);
  CHECK(out.doc_id == "g1#qe");
  CHECK(out.text == "The score was composed by Cliff Martinez in 2011.");
  CHECK(contains_answer(out, {"Cliff Martinez"}));
  CHECK(normalize_answer(out.text).size() <=
        normalize_answer(doc.text).size());
}

TEST_CASE("query_enhanced rewrite requires an answer-bearing input") {
  LexicalStubBackend stub;
  auto doc = make_doc("d", "no answer here at all");
  CHECK_THROWS_AS(rewrite(doc, RewriteMode::query_enhanced, "q?", {"Paris"},
                          stub),
                  ValidationError);
}

TEST_CASE("counterfactual rewrite removes the answer and differs") {
  LexicalStubBackend stub;
  auto doc = make_doc("d7", "The film score was written by Cliff Martinez.");
  auto out = rewrite(doc, RewriteMode::counterfactual, "who wrote it?",
                     {"Cliff Martinez"}, stub);
  CHECK(out.origin == DocOrigin::rewritten_counterfactual);
  CHECK(out.doc_id == "d7#cf");
  CHECK_FALSE(contains_answer(out, {"Cliff Martinez"}));
  CHECK(out.text != doc.text);
  CHECK(out.text.find("entity-") != std::string::npos);
  // Deterministic across calls.
  auto again = rewrite(doc, RewriteMode::counterfactual, "who wrote it?",
                       {"Cliff Martinez"}, stub);
  CHECK(again.text == out.text);
}

namespace {

// Backend whose rewrites always violate the counterfactual contract.
class StubbornBackend : public LexicalStubBackend {
 public:
  std::string rewrite_text(const DocumentRecord& doc, RewriteMode,
                           const std::string&, const std::vector<std::string>&,
                           int attempt) override {
    ++calls;
    (void)attempt;
    return doc.text;  // unchanged: violates "must differ"
  }
  int calls = 0;
};

}  // namespace

TEST_CASE("rewrite gives up after the configured attempts") {
  StubbornBackend backend;
  auto doc = make_doc("d", "The answer is Paris.");
  CHECK_THROWS_AS(rewrite(doc, RewriteMode::counterfactual, "q?", {"Paris"},
                          backend, 3),
                  RewriteContractError);
  CHECK(backend.calls == 3);
}

TEST_CASE("score cache round-trips and distinguishes the baseline row") {
  TempDir dir("cache");
  ScoreCache cache;
  cache.put("q1", "", {1417, -3.5});
  cache.put("q1", "d1", {1, -0.25});
  cache.save(dir / "scores.jsonl");
  auto loaded = ScoreCache::load(dir / "scores.jsonl");
  CHECK(loaded.size() == 2);
  CHECK(loaded.get("q1", "").answer_rank == 1417);
  CHECK(loaded.get("q1", "d1").answer_rank == 1);
  CHECK(loaded.contains("q1", "d1"));
  CHECK_FALSE(loaded.contains("q2", "d1"));
  CHECK_THROWS_AS(loaded.get("q2", "d1"), ValidationError);
}

namespace {

// Minimal completions endpoint: echo scoring with logprobs, fixed
// generation text, trivial tokenization (one token per character after the
// prompt makes offsets awkward, so tokens are whole words).
struct MockServer {
  httplib::Server server;
  std::thread thread;
  int port = 0;
  std::atomic<int> failures_left{0};
  std::atomic<int> requests{0};

  MockServer() {
    server.Post("/v1/completions", [this](const httplib::Request& req,
                                          httplib::Response& res) {
      ++requests;
      if (failures_left > 0) {
        --failures_left;
        res.status = 503;
        return;
      }
      auto body = nlohmann::json::parse(req.body);
      const std::string prompt = body.at("prompt").get<std::string>();
      const bool echo = body.value("echo", false);
      if (!echo) {
        res.set_content(
            nlohmann::json{{"choices",
                            {{{"text", "Answer: Cliff Martinez"}}}}}.dump(),
            "application/json");
        return;
      }
      // Forced continuation: everything after the last "Answer:" marker.
      const auto marker = prompt.rfind("Answer:");
      const std::size_t prompt_end = marker + std::string("Answer:").size();
      const std::string continuation = prompt.substr(prompt_end);
      // One token per word, offsets tracked in the original string.
      nlohmann::json tokens = nlohmann::json::array();
      nlohmann::json offsets = nlohmann::json::array();
      nlohmann::json logprobs = nlohmann::json::array();
      nlohmann::json tops = nlohmann::json::array();
      tokens.push_back("<prompt>");
      offsets.push_back(0);
      logprobs.push_back(nullptr);
      tops.push_back(nullptr);
      std::size_t pos = prompt_end;
      bool first = true;
      while (pos < prompt.size()) {
        while (pos < prompt.size() && prompt[pos] == ' ') ++pos;
        if (pos >= prompt.size()) break;
        std::size_t end = prompt.find(' ', pos);
        if (end == std::string::npos) end = prompt.size();
        tokens.push_back(" " + prompt.substr(pos, end - pos));
        offsets.push_back(pos - 1);
        logprobs.push_back(first ? -0.2 : -0.4);
        if (first) {
          // Two alternatives beat the answer token -> rank 3.
          tops.push_back({{" " + prompt.substr(pos, end - pos), -0.2},
                          {" better", -0.05},
                          {" best", -0.1},
                          {" worse", -0.9}});
        } else {
          tops.push_back({{" " + prompt.substr(pos, end - pos), -0.4}});
        }
        first = false;
        pos = end;
      }
      nlohmann::json out{
          {"choices",
           {{{"text", continuation},
             {"logprobs",
              {{"tokens", tokens},
               {"text_offset", offsets},
               {"token_logprobs", logprobs},
               {"top_logprobs", tops}}}}}}};
      res.set_content(out.dump(), "application/json");
    });
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~MockServer() {
    server.stop();
    thread.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port); }
};

HttpBackendConfig mock_config(const MockServer& mock) {
  HttpBackendConfig config;
  config.base_url = mock.url();
  config.max_retries = 2;
  config.timeout_seconds = 5;
  return config;
}

}  // namespace

TEST_CASE("http backend scores a forced continuation via echo logprobs") {
  MockServer mock;
  HttpBackend backend(mock_config(mock), PromptParts::defaults());
  auto score = backend.score("who composed it?",
                             {make_doc("d", "Some context.")},
                             {"Cliff Martinez"});
  // First answer token " Cliff" is beaten by two alternatives -> rank 3;
  // mean logprob over the two answer tokens = (-0.2 + -0.4)/2.
  CHECK(score.answer_rank == 3);
  CHECK(score.answer_logprob == doctest::Approx(-0.3));
}

TEST_CASE("http backend retries transient failures with backoff") {
  MockServer mock;
  mock.failures_left = 2;
  HttpBackend backend(mock_config(mock), PromptParts::defaults());
  auto score = backend.score("q?", {}, {"Cliff Martinez"});
  CHECK(score.answer_rank == 3);
  CHECK(mock.requests == 3);
}

TEST_CASE("http backend fails loudly when retries are exhausted") {
  MockServer mock;
  mock.failures_left = 100;
  auto config = mock_config(mock);
  config.max_retries = 1;
  HttpBackend backend(config, PromptParts::defaults());
  CHECK_THROWS_AS(backend.score("q?", {}, {"x"}), TransportError);
}

TEST_CASE("http backend generate returns the raw completion text") {
  MockServer mock;
  HttpBackend backend(mock_config(mock), PromptParts::defaults());
  auto text = backend.generate("who?", {make_doc("d", "ctx")}, {"x"});
  CHECK(extract_answer(text) == "Cliff Martinez");
}

TEST_CASE("http backend reports missing logprob support as a capability error") {
  httplib::Server server;
  server.Post("/v1/completions", [](const httplib::Request&,
                                    httplib::Response& res) {
    res.set_content(nlohmann::json{{"choices", {{{"text", "hi"}}}}}.dump(),
                    "application/json");
  });
  int port = server.bind_to_any_port("127.0.0.1");
  std::thread t([&] { server.listen_after_bind(); });
  server.wait_until_ready();
  HttpBackendConfig config;
  config.base_url = "http://127.0.0.1:" + std::to_string(port);
  HttpBackend backend(config, PromptParts::defaults());
  CHECK_THROWS_AS(backend.score("q?", {}, {"x"}), CapabilityError);
  server.stop();
  t.join();
}
