#include "ragcur/genclient.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>
#include <unordered_set>

#include "httplib.h"
#include "ragcur/rng.hpp"

namespace ragcur {

namespace {

std::size_t count_occurrences(const std::string& haystack,
                              const std::string& needle) {
  std::size_t count = 0;
  std::size_t pos = 0;
  while ((pos = haystack.find(needle, pos)) != std::string::npos) {
    ++count;
    pos += needle.size();
  }
  return count;
}

std::string replace_slot(std::string text, const std::string& slot,
                         const std::string& value) {
  auto pos = text.find(slot);
  if (pos != std::string::npos) {
    text.replace(pos, slot.size(), value);
  }
  return text;
}

std::string trim(const std::string& s) {
  auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot open " + path.string());
  }
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

std::string join_docs(const std::vector<DocumentRecord>& docs) {
  std::string paragraph;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    if (i > 0) paragraph += "\n\n";
    paragraph += docs[i].text;
  }
  return paragraph;
}

std::string doc_ids_of(const std::vector<DocumentRecord>& docs) {
  std::string ids;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    if (i > 0) ids += ",";
    ids += docs[i].doc_id;
  }
  return ids;
}

// Distinct normalized question tokens that also occur in the context.
std::size_t token_overlap(const std::vector<std::string>& context_tokens,
                          const std::string& question) {
  std::unordered_set<std::string> context_set(context_tokens.begin(),
                                              context_tokens.end());
  std::unordered_set<std::string> counted;
  for (const auto& token : normalize_answer(question)) {
    if (context_set.count(token) != 0) counted.insert(token);
  }
  return counted.size();
}

constexpr const char* kDefaultQueryEnhancedTemplate =
    "Rewrite the document so it keeps every fact needed to answer the "
    "question and drops everything else. Keep the answer text verbatim and "
    "do not make the document longer.\n\nQuestion: {question}\nAnswer: "
    "{answer}\nDocument: {document}\n\nRewritten document:";

constexpr const char* kDefaultCounterfactualTemplate =
    "Rewrite the document so that the answer below is replaced everywhere by "
    "a different, plausible but wrong entity. Change nothing else.\n\n"
    "Question: {question}\nAnswer: {answer}\nDocument: {document}\n\n"
    "Rewritten document:";

}  // namespace

void PromptParts::validate() const {
  if (count_occurrences(user_template, "{paragraph}") != 1) {
    throw ConfigError("user template must contain {paragraph} exactly once");
  }
  if (count_occurrences(user_template, "{instruction}") != 1) {
    throw ConfigError("user template must contain {instruction} exactly once");
  }
}

PromptParts PromptParts::defaults() {
  PromptParts parts;
  parts.system_text =
      "Answer the following questions with two to three words. Your answer "
      "must be formatted as follows: Answer: <your answer>";
  parts.user_template =
      "The following contexts will help you answer the question.\n"
      "{paragraph}\n"
      "Question: {instruction}";
  return parts;
}

PromptParts PromptParts::load(const std::filesystem::path& prompts_dir) {
  const auto path = prompts_dir / "inference.txt";
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot open " + path.string());
  }
  PromptParts parts;
  std::string line;
  bool in_user = false;
  std::string system_text;
  std::string user_template;
  while (std::getline(in, line)) {
    if (!in_user && line == "---") {
      in_user = true;
      continue;
    }
    auto& target = in_user ? user_template : system_text;
    if (!target.empty()) target += "\n";
    target += line;
  }
  if (!in_user) {
    throw ConfigError(path.string() +
                      ": missing '---' separator between system text and "
                      "user template");
  }
  parts.system_text = trim(system_text);
  parts.user_template = trim(user_template);
  parts.validate();
  return parts;
}

std::string build_prompt(const std::vector<DocumentRecord>& docs,
                         const std::string& question,
                         const PromptParts& parts) {
  parts.validate();
  std::string user = replace_slot(parts.user_template, "{paragraph}",
                                  join_docs(docs));
  user = replace_slot(user, "{instruction}", question);
  if (parts.system_text.empty()) return user;
  return parts.system_text + "\n\n" + user;
}

std::string extract_answer(const std::string& response) {
  static const std::string marker = "Answer:";
  auto pos = response.find(marker);
  if (pos == std::string::npos) return trim(response);
  return trim(response.substr(pos + marker.size()));
}

UtilityScore score_with_context(const std::string& question,
                                const std::vector<DocumentRecord>& docs,
                                const std::vector<std::string>& gold_answers,
                                GeneratorBackend& backend) {
  return backend.score(question, docs, gold_answers);
}

UtilityScore score_without_context(const std::string& question,
                                   const std::vector<std::string>& gold_answers,
                                   GeneratorBackend& backend) {
  return backend.score(question, {}, gold_answers);
}

DocumentRecord rewrite(const DocumentRecord& doc, RewriteMode mode,
                       const std::string& question,
                       const std::vector<std::string>& gold_answers,
                       GeneratorBackend& backend, int max_attempts) {
  if (mode == RewriteMode::query_enhanced &&
      !contains_answer(doc, gold_answers)) {
    throw ValidationError("query_enhanced rewrite requires an answer-bearing "
                          "document, got " + doc.doc_id);
  }
  const std::size_t input_tokens = normalize_answer(doc.text).size();
  for (int attempt = 1; attempt <= max_attempts; ++attempt) {
    std::string text =
        trim(backend.rewrite_text(doc, mode, question, gold_answers, attempt));
    if (text.empty()) continue;
    if (mode == RewriteMode::query_enhanced) {
      if (!text_contains_answer(text, gold_answers)) continue;
      if (normalize_answer(text).size() > input_tokens) continue;
      DocumentRecord out = doc;
      out.doc_id = doc.doc_id + "#qe";
      out.text = std::move(text);
      out.origin = DocOrigin::rewritten_query_enhanced;
      return out;
    }
    if (text_contains_answer(text, gold_answers)) continue;
    if (text == doc.text) continue;
    DocumentRecord out = doc;
    out.doc_id = doc.doc_id + "#cf";
    out.text = std::move(text);
    out.origin = DocOrigin::rewritten_counterfactual;
    return out;
  }
  throw RewriteContractError("rewrite contract violated after " +
                             std::to_string(max_attempts) + " attempts for " +
                             doc.doc_id);
}

UtilityScore LexicalStubBackend::score(
    const std::string& question, const std::vector<DocumentRecord>& docs,
    const std::vector<std::string>& gold_answers) {
  const auto context_tokens = normalize_answer(join_docs(docs));
  const std::size_t overlap = token_overlap(context_tokens, question);
  UtilityScore score;
  score.answer_logprob = -1.0 / (1.0 + static_cast<double>(overlap));
  if (tokens_contain_answer(context_tokens, gold_answers) ||
      tokens_contain_answer(normalize_answer(question), gold_answers)) {
    score.answer_rank = 1;
  } else {
    score.answer_rank =
        std::max<long>(2, max_rank_ - static_cast<long>(overlap));
  }
  return score;
}

std::string LexicalStubBackend::generate(
    const std::string& question, const std::vector<DocumentRecord>& docs,
    const std::vector<std::string>& gold_answers) {
  (void)question;
  for (const auto& doc : docs) {
    if (contains_answer(doc, gold_answers)) {
      return "Answer: " + gold_answers.front();
    }
  }
  return "Answer: unknown";
}

std::string LexicalStubBackend::rewrite_text(
    const DocumentRecord& doc, RewriteMode mode, const std::string& question,
    const std::vector<std::string>& gold_answers, int attempt) {
  (void)question;
  if (mode == RewriteMode::query_enhanced) {
    // Minimal sentence containing an answer span.
    std::vector<std::string> sentences;
    std::string current;
    for (char c : doc.text) {
      current.push_back(c);
      if (c == '.' || c == '!' || c == '?') {
        sentences.push_back(current);
        current.clear();
      }
    }
    if (!current.empty()) sentences.push_back(current);
    for (const auto& sentence : sentences) {
      if (text_contains_answer(sentence, gold_answers)) return trim(sentence);
    }
    return doc.text;
  }

  // Counterfactual: replace every answer occurrence with a deterministic
  // distractor entity. Works on whitespace words so the surrounding prose
  // survives; matching runs over the normalized token stream.
  std::vector<std::string> words;
  {
    std::istringstream in(doc.text);
    std::string word;
    while (in >> word) words.push_back(word);
  }
  std::vector<std::string> flat_tokens;
  std::vector<std::size_t> token_word;  // flat token index -> word index
  for (std::size_t w = 0; w < words.size(); ++w) {
    for (auto& token : normalize_answer(words[w])) {
      flat_tokens.push_back(std::move(token));
      token_word.push_back(w);
    }
  }
  std::vector<bool> replaced(words.size(), false);
  std::vector<bool> emit_distractor(words.size(), false);
  std::vector<bool> assigned(words.size(), false);
  for (const auto& answer : gold_answers) {
    const auto needle = normalize_answer(answer);
    if (needle.empty() || needle.size() > flat_tokens.size()) continue;
    char hex[16];
    std::snprintf(hex, sizeof(hex), "%08llx",
                  static_cast<unsigned long long>(
                      fnv1a(doc.doc_id + "\x1f" + answer +
                            "\x1f" + std::to_string(attempt)) &
                      0xffffffffULL));
    for (std::size_t i = 0; i + needle.size() <= flat_tokens.size(); ++i) {
      if (!std::equal(needle.begin(), needle.end(),
                      flat_tokens.begin() + static_cast<long>(i))) {
        continue;
      }
      emit_distractor[token_word[i]] = true;
      for (std::size_t t = i; t < i + needle.size(); ++t) {
        replaced[token_word[t]] = true;
      }
    }
    for (std::size_t w = 0; w < words.size(); ++w) {
      if (emit_distractor[w] && !assigned[w]) {
        words[w] = std::string("entity-") + hex;
        assigned[w] = true;
      }
    }
  }
  std::string out;
  for (std::size_t w = 0; w < words.size(); ++w) {
    if (replaced[w] && !emit_distractor[w]) continue;
    if (!out.empty()) out.push_back(' ');
    out += words[w];
  }
  return out;
}

HttpBackend::HttpBackend(HttpBackendConfig config, PromptParts parts)
    : config_(std::move(config)), parts_(std::move(parts)) {
  parts_.validate();
  rewrite_query_enhanced_template_ = kDefaultQueryEnhancedTemplate;
  rewrite_counterfactual_template_ = kDefaultCounterfactualTemplate;
  if (!config_.prompts_dir.empty()) {
    const auto qe = config_.prompts_dir / "rewrite_query_enhanced.txt";
    const auto cf = config_.prompts_dir / "rewrite_counterfactual.txt";
    if (std::filesystem::exists(qe)) {
      rewrite_query_enhanced_template_ = read_file(qe);
    }
    if (std::filesystem::exists(cf)) {
      rewrite_counterfactual_template_ = read_file(cf);
    }
  }
  if (const char* key = std::getenv(config_.api_key_env.c_str())) {
    api_key_ = key;
  }
}

nlohmann::json HttpBackend::post_with_retries(const std::string& path,
                                              const nlohmann::json& body,
                                              const std::string& context) {
  const std::string payload = body.dump();
  std::string last_error;
  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    if (attempt > 0) {
      // Exponential backoff with deterministic jitter.
      const auto jitter = fnv1a(context) % 97;
      std::this_thread::sleep_for(std::chrono::milliseconds(
          (100u << (attempt - 1)) + static_cast<unsigned>(jitter)));
    }
    httplib::Client client(config_.base_url);
    client.set_read_timeout(config_.timeout_seconds, 0);
    client.set_connection_timeout(config_.timeout_seconds, 0);
    httplib::Headers headers;
    if (!api_key_.empty()) {
      headers.emplace("Authorization", "Bearer " + api_key_);
    }
    auto res = client.Post(path, headers, payload, "application/json");
    if (!res) {
      last_error = "transport failure: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 500 || res->status == 429) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200) {
      throw TransportError("backend returned HTTP " +
                           std::to_string(res->status) + " for " + context);
    }
    try {
      return nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception& e) {
      last_error = std::string("bad JSON from backend: ") + e.what();
    }
  }
  throw TransportError("backend unreachable after " +
                       std::to_string(config_.max_retries + 1) +
                       " attempts (" + last_error + ") for " + context);
}

UtilityScore HttpBackend::score(const std::string& question,
                                const std::vector<DocumentRecord>& docs,
                                const std::vector<std::string>& gold_answers) {
  const std::string context = "docs=[" + doc_ids_of(docs) + "]";
  const std::string prompt =
      build_prompt(docs, question, parts_) + "\nAnswer:";
  const std::string continuation = " " + gold_answers.front();
  nlohmann::json body{{"model", config_.model},
                      {"prompt", prompt + continuation},
                      {"max_tokens", 0},
                      {"echo", true},
                      {"logprobs", config_.top_logprobs},
                      {"temperature", 0}};
  auto response = post_with_retries("/v1/completions", body, context);
  const auto& choices = response.at("choices");
  if (choices.empty() || !choices[0].contains("logprobs") ||
      choices[0]["logprobs"].is_null()) {
    throw CapabilityError("backend returned no logprobs for " + context);
  }
  const auto& lp = choices[0]["logprobs"];
  const auto& offsets = lp.at("text_offset");
  const auto& token_logprobs = lp.at("token_logprobs");
  const auto& top_logprobs = lp.at("top_logprobs");
  const auto& tokens = lp.at("tokens");

  double sum = 0.0;
  std::size_t count = 0;
  std::size_t first_answer_token = tokens.size();
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (offsets[i].get<std::size_t>() < prompt.size()) continue;
    if (token_logprobs[i].is_null()) {
      throw CapabilityError("backend omitted a logprob inside the forced "
                            "continuation for " + context);
    }
    if (first_answer_token == tokens.size()) first_answer_token = i;
    sum += token_logprobs[i].get<double>();
    ++count;
  }
  if (count == 0) {
    throw CapabilityError("forced continuation produced no scored tokens "
                          "for " + context);
  }

  UtilityScore score;
  score.answer_logprob = sum / static_cast<double>(count);
  const double own = token_logprobs[first_answer_token].get<double>();
  const auto& alternatives = top_logprobs[first_answer_token];
  if (alternatives.is_null() || !alternatives.is_object()) {
    throw CapabilityError("backend returned no top alternatives for " +
                          context);
  }
  const std::string own_token = tokens[first_answer_token].get<std::string>();
  bool own_listed = false;
  long higher = 0;
  for (auto it = alternatives.begin(); it != alternatives.end(); ++it) {
    if (it.key() == own_token) {
      own_listed = true;
      continue;
    }
    if (it.value().get<double>() > own) ++higher;
  }
  score.answer_rank = own_listed ? higher + 1 : config_.max_rank;
  return score;
}

std::string HttpBackend::generate(const std::string& question,
                                  const std::vector<DocumentRecord>& docs,
                                  const std::vector<std::string>&) {
  const std::string context = "docs=[" + doc_ids_of(docs) + "]";
  nlohmann::json body{{"model", config_.model},
                      {"prompt", build_prompt(docs, question, parts_)},
                      {"max_tokens", 48},
                      {"temperature", 0}};
  auto response = post_with_retries("/v1/completions", body, context);
  return response.at("choices").at(0).at("text").get<std::string>();
}

std::string HttpBackend::rewrite_text(
    const DocumentRecord& doc, RewriteMode mode, const std::string& question,
    const std::vector<std::string>& gold_answers, int attempt) {
  std::string prompt = mode == RewriteMode::query_enhanced
                           ? rewrite_query_enhanced_template_
                           : rewrite_counterfactual_template_;
  prompt = replace_slot(prompt, "{document}", doc.text);
  prompt = replace_slot(prompt, "{question}", question);
  prompt = replace_slot(prompt, "{answer}", gold_answers.front());
  if (attempt > 1) {
    prompt += "\n(The previous rewrite violated the requirements; try "
              "again, attempt " + std::to_string(attempt) + ".)";
  }
  nlohmann::json body{{"model", config_.model},
                      {"prompt", prompt},
                      {"max_tokens", 512},
                      {"temperature", 0}};
  auto response = post_with_retries("/v1/completions", body, doc.doc_id);
  return response.at("choices").at(0).at("text").get<std::string>();
}

ScoreCache ScoreCache::load(const std::filesystem::path& path) {
  ScoreCache cache;
  if (!std::filesystem::exists(path)) return cache;
  for (const auto& j : load_jsonl(path)) {
    UtilityScore score{j.at("answer_rank").get<long>(),
                       j.at("answer_logprob").get<double>()};
    cache.put(j.at("query_id").get<std::string>(),
              j.at("doc_id").get<std::string>(), score);
  }
  return cache;
}

void ScoreCache::save(const std::filesystem::path& path) const {
  std::vector<nlohmann::json> records;
  records.reserve(order_.size());
  for (const auto& [query_id, doc_id] : order_) {
    const auto& score = map_.at(key(query_id, doc_id));
    records.push_back({{"query_id", query_id},
                       {"doc_id", doc_id},
                       {"answer_rank", score.answer_rank},
                       {"answer_logprob", score.answer_logprob}});
  }
  save_jsonl(path, records);
}

bool ScoreCache::contains(const std::string& query_id,
                          const std::string& doc_id) const {
  return map_.count(key(query_id, doc_id)) != 0;
}

UtilityScore ScoreCache::get(const std::string& query_id,
                             const std::string& doc_id) const {
  auto it = map_.find(key(query_id, doc_id));
  if (it == map_.end()) {
    throw ValidationError("missing cached score for query " + query_id +
                          ", doc '" + doc_id + "'");
  }
  return it->second;
}

void ScoreCache::put(const std::string& query_id, const std::string& doc_id,
                     UtilityScore score) {
  auto [it, inserted] = map_.emplace(key(query_id, doc_id), score);
  if (inserted) {
    order_.emplace_back(query_id, doc_id);
  } else {
    it->second = score;
  }
}

}  // namespace ragcur
