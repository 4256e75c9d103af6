#include "ragcur/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <limits>
#include <sstream>
#include <unordered_set>

#include "ragcur/rng.hpp"

namespace ragcur {

std::string to_string(DocOrigin origin) {
  switch (origin) {
    case DocOrigin::retrieved:
      return "retrieved";
    case DocOrigin::golden:
      return "golden";
    case DocOrigin::rewritten_query_enhanced:
      return "rewritten_query_enhanced";
    case DocOrigin::rewritten_query_enhanced_fallback:
      return "rewritten_query_enhanced_fallback";
    case DocOrigin::rewritten_counterfactual:
      return "rewritten_counterfactual";
    case DocOrigin::injected_irrelevant:
      return "injected_irrelevant";
  }
  throw std::logic_error("unknown DocOrigin");
}

DocOrigin doc_origin_from_string(const std::string& name) {
  if (name == "retrieved") return DocOrigin::retrieved;
  if (name == "golden") return DocOrigin::golden;
  if (name == "rewritten_query_enhanced")
    return DocOrigin::rewritten_query_enhanced;
  if (name == "rewritten_query_enhanced_fallback")
    return DocOrigin::rewritten_query_enhanced_fallback;
  if (name == "rewritten_counterfactual")
    return DocOrigin::rewritten_counterfactual;
  if (name == "injected_irrelevant") return DocOrigin::injected_irrelevant;
  throw ValidationError("unknown document origin: " + name);
}

std::vector<std::string> normalize_answer(const std::string& text) {
  std::string cleaned;
  cleaned.reserve(text.size());
  for (unsigned char c : text) {
    if (std::ispunct(c)) {
      cleaned.push_back(' ');
    } else {
      cleaned.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  std::vector<std::string> tokens;
  std::istringstream in(cleaned);
  std::string token;
  while (in >> token) {
    if (token == "a" || token == "an" || token == "the") continue;
    tokens.push_back(token);
  }
  return tokens;
}

std::string normalized_text(const std::string& text) {
  auto tokens = normalize_answer(text);
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i > 0) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

bool tokens_contain_answer(const std::vector<std::string>& doc_tokens,
                           const std::vector<std::string>& answers) {
  for (const auto& answer : answers) {
    auto needle = normalize_answer(answer);
    if (needle.empty()) continue;
    if (needle.size() > doc_tokens.size()) continue;
    auto it = std::search(doc_tokens.begin(), doc_tokens.end(), needle.begin(),
                          needle.end());
    if (it != doc_tokens.end()) return true;
  }
  return false;
}

bool contains_answer(const DocumentRecord& doc,
                     const std::vector<std::string>& answers) {
  return tokens_contain_answer(normalize_answer(doc.text), answers);
}

bool text_contains_answer(const std::string& text,
                          const std::vector<std::string>& answers) {
  return tokens_contain_answer(normalize_answer(text), answers);
}

void DocumentStore::add(DocumentRecord doc) {
  if (doc.text.empty()) {
    throw ValidationError("document " + doc.doc_id + " has empty text");
  }
  if (index_.count(doc.doc_id) != 0) {
    throw ValidationError("duplicate doc_id: " + doc.doc_id);
  }
  index_.emplace(doc.doc_id, docs_.size());
  docs_.push_back(std::move(doc));
}

bool DocumentStore::contains(const std::string& doc_id) const {
  return index_.count(doc_id) != 0;
}

const DocumentRecord& DocumentStore::get(const std::string& doc_id) const {
  auto it = index_.find(doc_id);
  if (it == index_.end()) {
    throw ValidationError("unknown doc_id: " + doc_id);
  }
  return docs_[it->second];
}

nlohmann::json to_json(const DocumentRecord& doc) {
  nlohmann::json j{{"doc_id", doc.doc_id}, {"text", doc.text}};
  if (doc.title) j["title"] = *doc.title;
  if (doc.origin != DocOrigin::retrieved) j["origin"] = to_string(doc.origin);
  return j;
}

DocumentRecord document_from_json(const nlohmann::json& j) {
  DocumentRecord doc;
  doc.doc_id = j.at("doc_id").get<std::string>();
  doc.text = j.at("text").get<std::string>();
  if (j.contains("title") && !j["title"].is_null()) {
    doc.title = j["title"].get<std::string>();
  }
  if (j.contains("origin")) {
    doc.origin = doc_origin_from_string(j["origin"].get<std::string>());
  }
  if (doc.text.empty()) {
    throw ValidationError("document " + doc.doc_id + " has empty text");
  }
  return doc;
}

nlohmann::json to_json(const QueryRecord& query) {
  nlohmann::json j{{"query_id", query.query_id},
                   {"question", query.question},
                   {"gold_answers", query.gold_answers}};
  if (query.golden_doc) j["golden_doc"] = to_json(*query.golden_doc);
  return j;
}

QueryRecord query_from_json(const nlohmann::json& j) {
  QueryRecord query;
  query.query_id = j.at("query_id").get<std::string>();
  query.question = j.at("question").get<std::string>();
  if (!j.contains("gold_answers") || !j["gold_answers"].is_array() ||
      j["gold_answers"].empty()) {
    throw ValidationError("query " + query.query_id +
                          " has empty gold_answers");
  }
  query.gold_answers = j["gold_answers"].get<std::vector<std::string>>();
  if (j.contains("golden_doc") && !j["golden_doc"].is_null()) {
    query.golden_doc = document_from_json(j["golden_doc"]);
    if (!contains_answer(*query.golden_doc, query.gold_answers)) {
      throw ValidationError("golden_doc of query " + query.query_id +
                            " contains no gold answer");
    }
  }
  return query;
}

nlohmann::json to_json(const RetrievalList& list) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : list.entries) {
    entries.push_back({{"doc_id", e.doc_id}, {"score", e.score}});
  }
  return {{"query_id", list.query_id}, {"entries", entries}};
}

RetrievalList retrieval_from_json(const nlohmann::json& j) {
  RetrievalList list;
  list.query_id = j.at("query_id").get<std::string>();
  std::unordered_set<std::string> seen;
  double prev = std::numeric_limits<double>::infinity();
  for (const auto& e : j.at("entries")) {
    RetrievalEntry entry{e.at("doc_id").get<std::string>(),
                         e.at("score").get<double>()};
    if (!seen.insert(entry.doc_id).second) {
      throw ValidationError("retrieval list for query " + list.query_id +
                            " repeats doc_id " + entry.doc_id);
    }
    if (entry.score > prev) {
      throw ValidationError("retrieval list for query " + list.query_id +
                            " is not sorted by descending score");
    }
    prev = entry.score;
    list.entries.push_back(std::move(entry));
  }
  return list;
}

std::vector<nlohmann::json> load_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw ParseError("cannot open " + path.string());
  }
  std::vector<nlohmann::json> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      records.push_back(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": " +
                       e.what());
    }
  }
  return records;
}

void save_jsonl(const std::filesystem::path& path,
                const std::vector<nlohmann::json>& records) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw ParseError("cannot write " + path.string());
  }
  for (const auto& record : records) {
    out << record.dump() << '\n';
  }
}

namespace {

template <typename T, typename Fn>
std::vector<T> load_records(const std::filesystem::path& path, Fn parse) {
  std::ifstream in(path);
  if (!in) {
    throw ParseError("cannot open " + path.string());
  }
  std::vector<T> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      records.push_back(parse(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": " +
                       e.what());
    } catch (const ValidationError& e) {
      throw ValidationError(path.string() + ":" + std::to_string(line_no) +
                            ": " + e.what());
    }
  }
  return records;
}

}  // namespace

std::vector<QueryRecord> load_queries(const std::filesystem::path& path) {
  auto queries = load_records<QueryRecord>(path, query_from_json);
  std::unordered_set<std::string> seen;
  for (const auto& q : queries) {
    if (!seen.insert(q.query_id).second) {
      throw ValidationError("duplicate query_id: " + q.query_id);
    }
  }
  return queries;
}

DocumentStore load_docs(const std::filesystem::path& path) {
  DocumentStore store;
  for (auto& doc : load_records<DocumentRecord>(path, document_from_json)) {
    store.add(std::move(doc));
  }
  return store;
}

std::vector<RetrievalList> load_retrievals(const std::filesystem::path& path) {
  return load_records<RetrievalList>(path, retrieval_from_json);
}

void save_queries(const std::filesystem::path& path,
                  const std::vector<QueryRecord>& queries) {
  std::vector<nlohmann::json> records;
  records.reserve(queries.size());
  for (const auto& q : queries) records.push_back(to_json(q));
  save_jsonl(path, records);
}

void save_docs(const std::filesystem::path& path, const DocumentStore& docs) {
  std::vector<nlohmann::json> records;
  records.reserve(docs.size());
  for (const auto& d : docs.records()) records.push_back(to_json(d));
  save_jsonl(path, records);
}

void save_retrievals(const std::filesystem::path& path,
                     const std::vector<RetrievalList>& lists) {
  std::vector<nlohmann::json> records;
  records.reserve(lists.size());
  for (const auto& l : lists) records.push_back(to_json(l));
  save_jsonl(path, records);
}

std::vector<std::size_t> sample_without_replacement(std::size_t pool,
                                                    std::size_t count,
                                                    SplitMix64& rng) {
  if (count > pool) {
    throw ValidationError("cannot sample " + std::to_string(count) +
                          " items from a pool of " + std::to_string(pool));
  }
  std::vector<std::size_t> indices(pool);
  for (std::size_t i = 0; i < pool; ++i) indices[i] = i;
  for (std::size_t i = 0; i < count; ++i) {
    std::size_t j = i + static_cast<std::size_t>(rng.below(pool - i));
    std::swap(indices[i], indices[j]);
  }
  indices.resize(count);
  std::sort(indices.begin(), indices.end());
  return indices;
}

}  // namespace ragcur
