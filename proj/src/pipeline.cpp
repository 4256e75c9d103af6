#include "ragcur/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "ragcur/eval.hpp"
#include "ragcur/rng.hpp"

namespace ragcur {

namespace {

std::string hex64(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(value));
  return buf;
}

std::string file_hash(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ParseError("cannot open " + path.string());
  }
  std::ostringstream data;
  data << in.rdbuf();
  return hex64(fnv1a(data.str()));
}

void write_json_file(const std::filesystem::path& path,
                     const nlohmann::json& j) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw ParseError("cannot write " + path.string());
  }
  out << j.dump(2) << '\n';
}

nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw ParseError("cannot open " + path.string());
  }
  return nlohmann::json::parse(in);
}

std::string optimizer_name(Optimizer opt) {
  return opt == Optimizer::sgd ? "sgd" : "sgd_momentum";
}

Optimizer optimizer_from_name(const std::string& name) {
  if (name == "sgd") return Optimizer::sgd;
  if (name == "sgd_momentum") return Optimizer::sgd_momentum;
  throw ValidationError("unknown optimizer: " + name);
}

}  // namespace

PipelineConfig PipelineConfig::load(const std::filesystem::path& path) {
  return from_json(read_json_file(path));
}

PipelineConfig PipelineConfig::from_json(const nlohmann::json& j) {
  PipelineConfig config;
  if (j.contains("paths")) {
    const auto& paths = j["paths"];
    auto get_path = [&](const char* key) -> std::filesystem::path {
      if (!paths.contains(key) || paths[key].is_null()) return {};
      return paths[key].get<std::string>();
    };
    config.queries_path = get_path("queries");
    config.docs_path = get_path("docs");
    config.embeddings_path = get_path("embeddings");
    config.encoder_path = get_path("encoder");
    config.prompts_dir = get_path("prompts");
    if (auto p = get_path("out"); !p.empty()) config.out_dir = p;
  }
  config.k = j.value("k", config.k);
  config.n = j.value("n", config.n);
  config.embedding_dim = j.value("embedding_dim", config.embedding_dim);
  config.buckets = j.value("buckets", config.buckets);
  config.seed = j.value("seed", config.seed);
  config.jobs = j.value("jobs", config.jobs);
  if (j.contains("backend")) {
    const auto& b = j["backend"];
    config.backend_kind = b.value("kind", config.backend_kind);
    config.stub_max_rank = b.value("max_rank", config.stub_max_rank);
    if (b.contains("http")) {
      const auto& h = b["http"];
      config.http.base_url = h.value("base_url", config.http.base_url);
      config.http.model = h.value("model", config.http.model);
      config.http.api_key_env = h.value("api_key_env", config.http.api_key_env);
      config.http.timeout_seconds =
          h.value("timeout_seconds", config.http.timeout_seconds);
      config.http.max_retries = h.value("max_retries", config.http.max_retries);
      config.http.max_parallel =
          h.value("max_parallel", config.http.max_parallel);
      config.http.top_logprobs =
          h.value("top_logprobs", config.http.top_logprobs);
      config.http.max_rank = h.value("max_rank", config.http.max_rank);
    }
  }
  if (j.contains("schedules")) {
    for (const auto& s : j["schedules"]) {
      config.schedules.push_back(schedule_from_json(s));
    }
  }
  if (j.contains("train")) {
    const auto& t = j["train"];
    config.train.learning_rate =
        t.value("learning_rate", config.train.learning_rate);
    config.train.epochs = t.value("epochs", config.train.epochs);
    config.train.batch_size = t.value("batch_size", config.train.batch_size);
    config.train.momentum = t.value("momentum", config.train.momentum);
    config.train.passes_per_stage =
        t.value("passes_per_stage", config.train.passes_per_stage);
    if (t.contains("optimizer")) {
      config.train.optimizer =
          optimizer_from_name(t["optimizer"].get<std::string>());
    }
  }
  config.train.seed = config.seed;
  return config;
}

nlohmann::json PipelineConfig::to_json() const {
  nlohmann::json schedules = nlohmann::json::array();
  for (const auto& s : effective_schedules()) {
    schedules.push_back(ragcur::to_json(s));
  }
  return {
      {"paths",
       {{"queries", queries_path.string()},
        {"docs", docs_path.string()},
        {"embeddings", embeddings_path.string()},
        {"encoder", encoder_path.string()},
        {"prompts", prompts_dir.string()},
        {"out", out_dir.string()}}},
      {"k", k},
      {"n", n},
      {"embedding_dim", embedding_dim},
      {"buckets", buckets},
      {"seed", seed},
      {"jobs", jobs},
      {"backend",
       {{"kind", backend_kind},
        {"max_rank", stub_max_rank},
        {"http",
         {{"base_url", http.base_url},
          {"model", http.model},
          {"api_key_env", http.api_key_env},
          {"timeout_seconds", http.timeout_seconds},
          {"max_retries", http.max_retries},
          {"max_parallel", http.max_parallel},
          {"top_logprobs", http.top_logprobs},
          {"max_rank", http.max_rank}}}}},
      {"schedules", schedules},
      {"train",
       {{"learning_rate", train.learning_rate},
        {"epochs", train.epochs},
        {"batch_size", train.batch_size},
        {"optimizer", optimizer_name(train.optimizer)},
        {"momentum", train.momentum},
        {"passes_per_stage", train.passes_per_stage}}}};
}

std::string PipelineConfig::hash() const { return hex64(fnv1a(to_json().dump())); }

std::vector<StageSchedule> PipelineConfig::effective_schedules() const {
  if (!schedules.empty()) {
    for (const auto& s : schedules) s.validate(n);
    return schedules;
  }
  return default_schedules(k, n);
}

PromptParts PipelineConfig::prompt_parts() const {
  if (!prompts_dir.empty() &&
      std::filesystem::exists(prompts_dir / "inference.txt")) {
    return PromptParts::load(prompts_dir);
  }
  return PromptParts::defaults();
}

std::unique_ptr<GeneratorBackend> PipelineConfig::make_backend() const {
  if (backend_kind == "stub") {
    return std::make_unique<LexicalStubBackend>(prompt_parts(), stub_max_rank);
  }
  if (backend_kind == "http") {
    HttpBackendConfig http_config = http;
    http_config.prompts_dir = prompts_dir;
    return std::make_unique<HttpBackend>(http_config, prompt_parts());
  }
  throw ConfigError("unknown backend kind: " + backend_kind);
}

Pipeline::Pipeline(PipelineConfig config) : config_(std::move(config)) {}

bool Pipeline::cache_hit(
    const std::string& step, const std::vector<std::filesystem::path>& inputs,
    const std::vector<std::filesystem::path>& outputs) const {
  const auto manifest_path = out(step + ".manifest.json");
  if (!std::filesystem::exists(manifest_path)) return false;
  for (const auto& output : outputs) {
    if (!std::filesystem::exists(output)) return false;
  }
  nlohmann::json manifest;
  try {
    manifest = read_json_file(manifest_path);
  } catch (const std::exception&) {
    return false;
  }
  if (manifest.value("config_hash", "") != config_.hash()) return false;
  nlohmann::json recorded = manifest.value("inputs", nlohmann::json::object());
  for (const auto& input : inputs) {
    if (!std::filesystem::exists(input)) return false;
    if (recorded.value(input.string(), "") != file_hash(input)) return false;
  }
  if (recorded.size() != inputs.size()) return false;
  return true;
}

void Pipeline::write_manifest(
    const std::string& step,
    const std::vector<std::filesystem::path>& inputs) const {
  nlohmann::json input_hashes = nlohmann::json::object();
  for (const auto& input : inputs) {
    input_hashes[input.string()] = file_hash(input);
  }
  write_json_file(out(step + ".manifest.json"),
                  {{"step", step},
                   {"config_hash", config_.hash()},
                   {"seed", config_.seed},
                   {"inputs", input_hashes}});
}

void Pipeline::require(const std::filesystem::path& artifact,
                       const std::string& producer) const {
  if (!std::filesystem::exists(artifact)) {
    throw MissingArtifactError(artifact.string(), producer);
  }
}

StepResult Pipeline::ingest() {
  const std::vector<std::filesystem::path> inputs{config_.queries_path,
                                                  config_.docs_path};
  const std::vector<std::filesystem::path> outputs{out("queries.jsonl"),
                                                   out("docs.jsonl")};
  if (cache_hit("ingest", inputs, outputs)) return {"ingest", true};
  auto queries = load_queries(config_.queries_path);
  auto docs = load_docs(config_.docs_path);
  save_queries(out("queries.jsonl"), queries);
  save_docs(out("docs.jsonl"), docs);
  write_manifest("ingest", inputs);
  return {"ingest", false};
}

EncoderParams Pipeline::initial_encoder() const {
  if (!config_.encoder_path.empty()) {
    return load_encoder(config_.encoder_path);
  }
  const auto generated = out("encoder_init.json");
  if (std::filesystem::exists(generated)) {
    return load_encoder(generated);
  }
  auto params = random_encoder(config_.embedding_dim, config_.buckets,
                               mix_seed(config_.seed, "encoder-init"));
  save_encoder(generated, params);
  return params;
}

StepResult Pipeline::retrieve() {
  require(out("queries.jsonl"), "ingest");
  require(out("docs.jsonl"), "ingest");
  std::vector<std::filesystem::path> inputs{out("queries.jsonl"),
                                            out("docs.jsonl")};
  if (!config_.embeddings_path.empty()) inputs.push_back(config_.embeddings_path);
  if (!config_.encoder_path.empty()) inputs.push_back(config_.encoder_path);
  if (cache_hit("retrieve", inputs, {out("retrieval.jsonl")})) {
    return {"retrieve", true};
  }

  auto queries = load_queries(out("queries.jsonl"));
  auto docs = load_docs(out("docs.jsonl"));
  if (config_.n > docs.size()) {
    throw ValidationError("n=" + std::to_string(config_.n) +
                          " exceeds document store size " +
                          std::to_string(docs.size()));
  }

  EmbeddingStore embeddings;
  if (!config_.embeddings_path.empty()) {
    embeddings = load_embeddings(config_.embeddings_path);
  } else {
    const auto params = initial_encoder();
    for (const auto& query : queries) {
      embeddings.put(query.query_id,
                     encode(featurize(query.question, params.features), params));
    }
    for (const auto& doc : docs.records()) {
      embeddings.put(doc.doc_id,
                     encode(featurize(doc.text, params.features), params));
    }
  }

  std::vector<std::string> doc_ids;
  doc_ids.reserve(docs.size());
  for (const auto& doc : docs.records()) doc_ids.push_back(doc.doc_id);

  std::vector<RetrievalList> lists;
  lists.reserve(queries.size());
  for (const auto& query : queries) {
    lists.push_back(top_n(query.query_id, embeddings.get(query.query_id),
                          doc_ids, embeddings, config_.n));
  }
  save_retrievals(out("retrieval.jsonl"), lists);
  write_manifest("retrieve", inputs);
  return {"retrieve", false};
}

StepResult Pipeline::augment() {
  require(out("queries.jsonl"), "ingest");
  require(out("docs.jsonl"), "ingest");
  require(out("retrieval.jsonl"), "retrieve");
  const std::vector<std::filesystem::path> inputs{
      out("queries.jsonl"), out("docs.jsonl"), out("retrieval.jsonl")};
  const std::vector<std::filesystem::path> outputs{
      out("generator_curriculum/stage1.jsonl"),
      out("generator_curriculum/stage2.jsonl"),
      out("generator_curriculum/stage3.jsonl"),
      out("generator_curriculum/report.json")};
  if (cache_hit("augment", inputs, outputs)) return {"augment", true};

  auto queries = load_queries(out("queries.jsonl"));
  auto docs = load_docs(out("docs.jsonl"));
  auto retrievals = load_retrievals(out("retrieval.jsonl"));
  if (retrievals.size() != queries.size()) {
    throw ValidationError("retrieval.jsonl does not cover all queries");
  }
  auto backend = config_.make_backend();
  auto cross_pool = build_cross_pool(retrievals, docs);

  std::vector<GeneratorExample> easy, common, hard;
  std::size_t easy_skipped = 0;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const auto& query = queries[i];
    const auto& retrieval = retrievals[i];
    common.push_back(build_common(query, retrieval, docs, config_.k));
    if (query.golden_doc) {
      easy.push_back(build_easy(query, retrieval, docs, config_.k, *backend));
    } else {
      ++easy_skipped;
    }
    hard.push_back(build_hard(query, retrieval, docs, cross_pool, config_.k,
                              mix_seed(config_.seed, query.query_id, 3),
                              *backend));
  }
  save_examples(out("generator_curriculum/stage1.jsonl"), easy);
  save_examples(out("generator_curriculum/stage2.jsonl"), common);
  save_examples(out("generator_curriculum/stage3.jsonl"), hard);
  write_json_file(out("generator_curriculum/report.json"),
                  {{"queries", queries.size()},
                   {"easy_examples", easy.size()},
                   {"easy_skipped_missing_golden", easy_skipped},
                   {"common_examples", common.size()},
                   {"hard_examples", hard.size()}});
  write_manifest("augment", inputs);
  return {"augment", false};
}

StepResult Pipeline::emit_sft() {
  const std::vector<std::filesystem::path> inputs{
      out("generator_curriculum/stage1.jsonl"),
      out("generator_curriculum/stage2.jsonl"),
      out("generator_curriculum/stage3.jsonl")};
  for (const auto& input : inputs) require(input, "augment");
  const std::vector<std::filesystem::path> outputs{
      out("sft/stage1.jsonl"), out("sft/stage2.jsonl"), out("sft/stage3.jsonl"),
      out("sft/manifest.json")};
  if (cache_hit("emit-sft", inputs, outputs)) return {"emit-sft", true};

  LevelSets sets;
  sets[Difficulty::easy] = load_examples(inputs[0]);
  sets[Difficulty::common] = load_examples(inputs[1]);
  sets[Difficulty::hard] = load_examples(inputs[2]);
  ragcur::emit_sft(sets, config_.prompt_parts(), out("sft"));
  write_manifest("emit-sft", inputs);
  return {"emit-sft", false};
}

StepResult Pipeline::score() {
  require(out("queries.jsonl"), "ingest");
  require(out("docs.jsonl"), "ingest");
  require(out("retrieval.jsonl"), "retrieve");
  const std::vector<std::filesystem::path> inputs{
      out("queries.jsonl"), out("docs.jsonl"), out("retrieval.jsonl")};
  if (cache_hit("score", inputs, {out("scores.jsonl")})) {
    return {"score", true};
  }

  auto queries = load_queries(out("queries.jsonl"));
  auto docs = load_docs(out("docs.jsonl"));
  auto retrievals = load_retrievals(out("retrieval.jsonl"));
  auto backend = config_.make_backend();

  // Partial caches from interrupted runs are reused row by row.
  ScoreCache cache = ScoreCache::load(out("scores.jsonl"));
  ScoreCache fresh;
  std::unordered_map<std::string, const RetrievalList*> by_query;
  for (const auto& list : retrievals) by_query[list.query_id] = &list;
  for (const auto& query : queries) {
    auto it = by_query.find(query.query_id);
    if (it == by_query.end()) {
      throw ValidationError("no retrieval list for query " + query.query_id);
    }
    if (!cache.contains(query.query_id, "")) {
      cache.put(query.query_id, "",
                score_without_context(query.question, query.gold_answers,
                                      *backend));
    }
    fresh.put(query.query_id, "", cache.get(query.query_id, ""));
    for (const auto& entry : it->second->entries) {
      if (!cache.contains(query.query_id, entry.doc_id)) {
        cache.put(query.query_id, entry.doc_id,
                  score_with_context(query.question, {docs.get(entry.doc_id)},
                                     query.gold_answers, *backend));
      }
      fresh.put(query.query_id, entry.doc_id,
                cache.get(query.query_id, entry.doc_id));
    }
  }
  fresh.save(out("scores.jsonl"));
  write_manifest("score", inputs);
  return {"score", false};
}

StepResult Pipeline::rerank() {
  require(out("retrieval.jsonl"), "retrieve");
  require(out("scores.jsonl"), "score");
  const std::vector<std::filesystem::path> inputs{out("retrieval.jsonl"),
                                                  out("scores.jsonl")};
  if (cache_hit("rerank", inputs, {out("reranked.jsonl")})) {
    return {"rerank", true};
  }

  auto retrievals = load_retrievals(out("retrieval.jsonl"));
  auto cache = ScoreCache::load(out("scores.jsonl"));
  std::vector<RerankedList> reranked;
  reranked.reserve(retrievals.size());
  for (const auto& list : retrievals) {
    if (list.entries.size() < config_.n) {
      throw ValidationError("retrieval list for query " + list.query_id +
                            " is shorter than n=" + std::to_string(config_.n));
    }
    std::vector<std::string> doc_ids;
    std::unordered_map<std::string, UtilityScore> with_doc;
    for (std::size_t i = 0; i < config_.n; ++i) {
      const auto& doc_id = list.entries[i].doc_id;
      doc_ids.push_back(doc_id);
      with_doc[doc_id] = cache.get(list.query_id, doc_id);
    }
    reranked.push_back(rerank_documents(list.query_id, doc_ids,
                                        cache.get(list.query_id, ""),
                                        with_doc));
  }
  save_reranked(out("reranked.jsonl"), reranked);
  write_manifest("rerank", inputs);
  return {"rerank", false};
}

StepResult Pipeline::build_stages() {
  require(out("reranked.jsonl"), "rerank");
  const std::vector<std::filesystem::path> inputs{out("reranked.jsonl")};
  const auto schedules = config_.effective_schedules();
  std::vector<std::filesystem::path> outputs{out("stages/manifest.json")};
  for (const auto& schedule : schedules) {
    outputs.push_back(
        out("stages/stage" + std::to_string(schedule.stage) + ".jsonl"));
  }
  if (cache_hit("build-stages", inputs, outputs)) {
    return {"build-stages", true};
  }

  auto reranked = load_reranked(out("reranked.jsonl"));
  nlohmann::json manifest_schedules = nlohmann::json::array();
  for (const auto& schedule : schedules) {
    auto instances =
        build_stage_dataset(reranked, schedule, config_.seed, config_.n);
    save_instances(
        out("stages/stage" + std::to_string(schedule.stage) + ".jsonl"),
        instances);
    manifest_schedules.push_back(to_json(schedule));
  }
  write_json_file(out("stages/manifest.json"),
                  {{"seed", config_.seed},
                   {"n", config_.n},
                   {"schedules", manifest_schedules}});
  write_manifest("build-stages", inputs);
  return {"build-stages", false};
}

StepResult Pipeline::train() {
  require(out("queries.jsonl"), "ingest");
  require(out("docs.jsonl"), "ingest");
  const auto schedules = config_.effective_schedules();
  std::vector<std::filesystem::path> inputs{out("queries.jsonl"),
                                            out("docs.jsonl")};
  if (config_.encoder_path.empty()) {
    if (!std::filesystem::exists(out("encoder_init.json"))) {
      throw MissingArtifactError(out("encoder_init.json").string(),
                                 "retrieve");
    }
    inputs.push_back(out("encoder_init.json"));
  } else {
    inputs.push_back(config_.encoder_path);
  }
  std::vector<std::filesystem::path> outputs{out("training_report.json")};
  for (const auto& schedule : schedules) {
    const auto stage_file =
        out("stages/stage" + std::to_string(schedule.stage) + ".jsonl");
    require(stage_file, "build-stages");
    inputs.push_back(stage_file);
    outputs.push_back(
        out("checkpoints/stage" + std::to_string(schedule.stage) + ".json"));
  }
  if (cache_hit("train", inputs, outputs)) return {"train", true};

  auto queries = load_queries(out("queries.jsonl"));
  auto docs = load_docs(out("docs.jsonl"));
  auto params = initial_encoder();
  const auto features = build_feature_store(queries, docs, params.features);

  nlohmann::json report_stages = nlohmann::json::array();
  for (const auto& schedule : schedules) {
    auto instances = load_instances(
        out("stages/stage" + std::to_string(schedule.stage) + ".jsonl"));
    StageReport report;
    params = ragcur::train_stage(instances, features, std::move(params),
                                 config_.train, config_.n, &report);
    save_encoder(
        out("checkpoints/stage" + std::to_string(schedule.stage) + ".json"),
        params);
    report_stages.push_back({{"stage", report.stage},
                             {"mean_loss_per_pass", report.mean_loss_per_pass},
                             {"first_mean_loss", report.first_mean_loss()},
                             {"last_mean_loss", report.last_mean_loss()}});
  }
  write_json_file(out("training_report.json"),
                  {{"seed", config_.seed},
                   {"optimizer", optimizer_name(config_.train.optimizer)},
                   {"learning_rate", config_.train.learning_rate},
                   {"batch_size", config_.train.batch_size},
                   {"stages", report_stages}});
  write_manifest("train", inputs);
  return {"train", false};
}

namespace {

EvalReport retrieval_eval(const std::vector<QueryRecord>& queries,
                          const DocumentStore& docs,
                          const std::vector<RetrievalList>& retrievals,
                          GeneratorBackend& backend, std::size_t k,
                          std::vector<QueryEvalRow>* rows_out) {
  std::unordered_map<std::string, const RetrievalList*> by_query;
  for (const auto& list : retrievals) by_query[list.query_id] = &list;
  std::vector<QueryEvalRow> rows;
  for (const auto& query : queries) {
    auto it = by_query.find(query.query_id);
    if (it == by_query.end()) {
      throw ValidationError("no retrieval list for query " + query.query_id);
    }
    std::vector<DocumentRecord> top_docs;
    for (std::size_t i = 0; i < k && i < it->second->entries.size(); ++i) {
      top_docs.push_back(docs.get(it->second->entries[i].doc_id));
    }
    QueryEvalRow row;
    row.query_id = query.query_id;
    row.prediction = extract_answer(
        backend.generate(query.question, top_docs, query.gold_answers));
    row.em = exact_match(row.prediction, query.gold_answers);
    row.f1 = f1_score(row.prediction, query.gold_answers);
    row.recall_at[1] = recall_at_k(top_docs, query.gold_answers, 1);
    row.recall_at[k] = recall_at_k(top_docs, query.gold_answers, k);
    rows.push_back(std::move(row));
  }
  auto report = aggregate(rows);
  if (rows_out) *rows_out = std::move(rows);
  return report;
}

}  // namespace

StepResult Pipeline::evaluate() {
  require(out("queries.jsonl"), "ingest");
  require(out("docs.jsonl"), "ingest");
  require(out("retrieval.jsonl"), "retrieve");
  std::vector<std::filesystem::path> inputs{
      out("queries.jsonl"), out("docs.jsonl"), out("retrieval.jsonl")};
  const auto trained_checkpoint = out(
      "checkpoints/stage" +
      std::to_string(config_.effective_schedules().back().stage) + ".json");
  const bool has_trained = std::filesystem::exists(trained_checkpoint);
  if (has_trained) inputs.push_back(trained_checkpoint);
  if (cache_hit("evaluate", inputs, {out("eval_report.json")})) {
    return {"evaluate", true};
  }

  auto queries = load_queries(out("queries.jsonl"));
  auto docs = load_docs(out("docs.jsonl"));
  auto retrievals = load_retrievals(out("retrieval.jsonl"));
  auto backend = config_.make_backend();

  std::vector<QueryEvalRow> rows;
  auto report =
      retrieval_eval(queries, docs, retrievals, *backend, config_.k, &rows);
  nlohmann::json per_query = nlohmann::json::array();
  for (const auto& row : rows) {
    nlohmann::json recall = nlohmann::json::object();
    for (const auto& [rk, hit] : row.recall_at) {
      recall[std::to_string(rk)] = hit;
    }
    per_query.push_back({{"query_id", row.query_id},
                         {"prediction", row.prediction},
                         {"em", row.em},
                         {"f1", row.f1},
                         {"recall_at", recall}});
  }
  nlohmann::json j{{"retrieval", report.to_json()}, {"per_query", per_query}};

  if (has_trained) {
    const auto params = load_encoder(trained_checkpoint);
    EmbeddingStore embeddings;
    for (const auto& query : queries) {
      embeddings.put(query.query_id,
                     encode(featurize(query.question, params.features), params));
    }
    std::vector<std::string> doc_ids;
    for (const auto& doc : docs.records()) {
      doc_ids.push_back(doc.doc_id);
      embeddings.put(doc.doc_id,
                     encode(featurize(doc.text, params.features), params));
    }
    std::vector<RetrievalList> trained_lists;
    for (const auto& query : queries) {
      trained_lists.push_back(top_n(query.query_id,
                                    embeddings.get(query.query_id), doc_ids,
                                    embeddings, config_.n));
    }
    j["trained_retrieval"] =
        retrieval_eval(queries, docs, trained_lists, *backend, config_.k,
                       nullptr)
            .to_json();
  }
  write_json_file(out("eval_report.json"), j);
  write_manifest("evaluate", inputs);
  return {"evaluate", false};
}

StepResult Pipeline::robustness() {
  require(out("queries.jsonl"), "ingest");
  require(out("docs.jsonl"), "ingest");
  require(out("retrieval.jsonl"), "retrieve");
  const std::vector<std::filesystem::path> inputs{
      out("queries.jsonl"), out("docs.jsonl"), out("retrieval.jsonl")};
  const std::vector<std::filesystem::path> outputs{
      out("robustness/irrelevant.jsonl"),
      out("robustness/counterfactual.jsonl")};
  if (cache_hit("robustness", inputs, outputs)) return {"robustness", true};

  auto queries = load_queries(out("queries.jsonl"));
  auto docs = load_docs(out("docs.jsonl"));
  auto retrievals = load_retrievals(out("retrieval.jsonl"));
  auto backend = config_.make_backend();
  auto cross_pool = build_cross_pool(retrievals, docs);

  save_examples(out("robustness/irrelevant.jsonl"),
                build_robustness_testset(queries, retrievals, docs, cross_pool,
                                         Perturbation::irrelevant, config_.k,
                                         config_.seed, *backend));
  save_examples(out("robustness/counterfactual.jsonl"),
                build_robustness_testset(queries, retrievals, docs, cross_pool,
                                         Perturbation::counterfactual,
                                         config_.k, config_.seed, *backend));
  write_manifest("robustness", inputs);
  return {"robustness", false};
}

StepResult Pipeline::report() {
  const std::vector<std::filesystem::path> curriculum_files{
      out("generator_curriculum/stage1.jsonl"),
      out("generator_curriculum/stage2.jsonl"),
      out("generator_curriculum/stage3.jsonl")};
  for (const auto& file : curriculum_files) require(file, "augment");
  std::vector<std::filesystem::path> inputs = curriculum_files;
  const auto schedules = config_.effective_schedules();
  for (const auto& schedule : schedules) {
    const auto stage_file =
        out("stages/stage" + std::to_string(schedule.stage) + ".jsonl");
    require(stage_file, "build-stages");
    inputs.push_back(stage_file);
  }
  const bool has_eval = std::filesystem::exists(out("eval_report.json"));
  if (has_eval) inputs.push_back(out("eval_report.json"));
  if (cache_hit("report", inputs, {out("report.json")})) {
    return {"report", true};
  }

  LevelSets sets;
  sets[Difficulty::easy] = load_examples(curriculum_files[0]);
  sets[Difficulty::common] = load_examples(curriculum_files[1]);
  sets[Difficulty::hard] = load_examples(curriculum_files[2]);
  auto backend = config_.make_backend();
  const auto difficulty = assess_difficulty(sets, *backend, config_.k);

  nlohmann::json gap_stats = nlohmann::json::array();
  for (const auto& schedule : schedules) {
    auto instances = load_instances(
        out("stages/stage" + std::to_string(schedule.stage) + ".jsonl"));
    const auto stats = rank_gap_stats(instances);
    gap_stats.push_back({{"stage", schedule.stage},
                         {"avg_gap", stats.avg_gap},
                         {"max_gap", stats.max_gap}});
  }

  nlohmann::json j{{"difficulty", difficulty.to_json()},
                   {"rank_gaps", gap_stats},
                   {"config_hash", config_.hash()}};
  if (has_eval) j["eval"] = read_json_file(out("eval_report.json"));
  write_json_file(out("report.json"), j);
  write_manifest("report", inputs);
  return {"report", false};
}

std::vector<StepResult> Pipeline::run_all() {
  std::vector<StepResult> results;
  results.push_back(ingest());
  results.push_back(retrieve());
  results.push_back(augment());
  results.push_back(emit_sft());
  results.push_back(score());
  results.push_back(rerank());
  results.push_back(build_stages());
  results.push_back(train());
  results.push_back(evaluate());
  results.push_back(robustness());
  results.push_back(report());
  return results;
}

std::vector<std::string> Pipeline::validate_artifacts() const {
  std::vector<std::string> violations;
  const auto check = [&](const std::filesystem::path& path,
                         const std::vector<GeneratorExample>* common) {
    if (!std::filesystem::exists(path)) return;
    auto found = validate_examples(load_examples(path), config_.k, common);
    violations.insert(violations.end(), found.begin(), found.end());
  };
  std::vector<GeneratorExample> common;
  if (std::filesystem::exists(out("generator_curriculum/stage2.jsonl"))) {
    common = load_examples(out("generator_curriculum/stage2.jsonl"));
  }
  const auto* counterparts = common.empty() ? nullptr : &common;
  check(out("generator_curriculum/stage1.jsonl"), nullptr);
  check(out("generator_curriculum/stage2.jsonl"), nullptr);
  check(out("generator_curriculum/stage3.jsonl"), counterparts);
  check(out("robustness/irrelevant.jsonl"), counterparts);
  check(out("robustness/counterfactual.jsonl"), counterparts);
  return violations;
}

std::vector<std::string> validate_config(const PipelineConfig& config,
                                         bool check_backend) {
  std::vector<std::string> failures;
  try {
    config.effective_schedules();
  } catch (const std::exception& e) {
    failures.push_back(std::string("schedule feasibility: ") + e.what());
  }
  try {
    config.prompt_parts().validate();
  } catch (const std::exception& e) {
    failures.push_back(std::string("prompt template: ") + e.what());
  }
  if (config.backend_kind != "stub" && config.backend_kind != "http") {
    failures.push_back("unknown backend kind: " + config.backend_kind);
  }
  if (config.k == 0 || config.k > config.n) {
    failures.push_back("require 1 <= k <= n");
  }
  if (config.train.learning_rate <= 0) {
    failures.push_back("learning_rate must be > 0");
  }
  if (config.train.epochs < 1) {
    failures.push_back("epochs must be >= 1");
  }
  if (check_backend && config.backend_kind == "http") {
    try {
      auto backend = config.make_backend();
      DocumentRecord probe{"probe", "probe"};
      backend->score("probe", {probe}, {"probe"});
    } catch (const std::exception& e) {
      failures.push_back(std::string("backend reachability: ") + e.what());
    }
  }
  return failures;
}

}  // namespace ragcur
