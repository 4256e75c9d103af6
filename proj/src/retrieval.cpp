#include "ragcur/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "ragcur/rng.hpp"

namespace ragcur {

SparseVector featurize(const std::string& text, const FeatureSpec& spec) {
  std::map<std::size_t, double> counts;
  for (const auto& token : normalize_answer(text)) {
    counts[fnv1a(token) % spec.buckets] += 1.0;
  }
  return SparseVector(counts.begin(), counts.end());
}

EmbeddingVector EmbeddingVector::from(Eigen::VectorXd v) {
  EmbeddingVector e;
  e.norm = v.norm();
  e.values = std::move(v);
  return e;
}

EncoderParams random_encoder(std::size_t dim_out, std::size_t buckets,
                             std::uint64_t seed, double scale) {
  SplitMix64 rng(seed);
  EncoderParams params;
  params.features.buckets = buckets;
  params.weight.resize(static_cast<Eigen::Index>(dim_out),
                       static_cast<Eigen::Index>(buckets));
  for (Eigen::Index r = 0; r < params.weight.rows(); ++r) {
    for (Eigen::Index c = 0; c < params.weight.cols(); ++c) {
      params.weight(r, c) = scale * (2.0 * rng.next_double() - 1.0);
    }
  }
  return params;
}

Eigen::VectorXd densify(const SparseVector& features, std::size_t dim) {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim));
  for (const auto& [idx, value] : features) {
    v(static_cast<Eigen::Index>(idx)) = value;
  }
  return v;
}

EmbeddingVector encode(const SparseVector& features,
                       const EncoderParams& params) {
  Eigen::VectorXd out =
      Eigen::VectorXd::Zero(static_cast<Eigen::Index>(params.dim_out()));
  for (const auto& [idx, value] : features) {
    if (idx >= params.dim_in()) {
      throw ValidationError("feature index " + std::to_string(idx) +
                            " out of range for encoder with dim_in " +
                            std::to_string(params.dim_in()));
    }
    out += value * params.weight.col(static_cast<Eigen::Index>(idx));
  }
  return EmbeddingVector::from(std::move(out));
}

double cosine_score(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (!a.scorable() || !b.scorable()) {
    throw ValidationError("cosine score over a zero-norm embedding");
  }
  if (a.values.size() != b.values.size()) {
    throw ValidationError("cosine score over mismatched dimensions");
  }
  return a.values.dot(b.values) / (a.norm * b.norm);
}

void EmbeddingStore::put(std::string id, EmbeddingVector vec) {
  auto [it, inserted] = map_.emplace(id, std::move(vec));
  if (!inserted) {
    throw ValidationError("duplicate embedding id: " + id);
  }
  ids_.push_back(std::move(id));
}

bool EmbeddingStore::contains(const std::string& id) const {
  return map_.count(id) != 0;
}

const EmbeddingVector& EmbeddingStore::get(const std::string& id) const {
  auto it = map_.find(id);
  if (it == map_.end()) {
    throw ValidationError("missing embedding for id: " + id);
  }
  return it->second;
}

EmbeddingStore load_embeddings(const std::filesystem::path& path) {
  EmbeddingStore store;
  for (const auto& j : load_jsonl(path)) {
    auto values = j.at("values").get<std::vector<double>>();
    Eigen::VectorXd v(static_cast<Eigen::Index>(values.size()));
    for (std::size_t i = 0; i < values.size(); ++i) {
      v(static_cast<Eigen::Index>(i)) = values[i];
    }
    store.put(j.at("id").get<std::string>(),
              EmbeddingVector::from(std::move(v)));
  }
  return store;
}

void save_embeddings(const std::filesystem::path& path,
                     const EmbeddingStore& store) {
  std::vector<std::string> ids = store.ids();
  std::sort(ids.begin(), ids.end());
  std::vector<nlohmann::json> records;
  records.reserve(ids.size());
  for (const auto& id : ids) {
    const auto& vec = store.get(id);
    std::vector<double> values(vec.values.data(),
                               vec.values.data() + vec.values.size());
    records.push_back({{"id", id}, {"values", values}});
  }
  save_jsonl(path, records);
}

EncoderParams load_encoder(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw ParseError("cannot open " + path.string());
  }
  nlohmann::json j = nlohmann::json::parse(in);
  EncoderParams params;
  params.features.buckets = j.at("buckets").get<std::size_t>();
  const std::size_t dim_in = j.at("dim_in").get<std::size_t>();
  const std::size_t dim_out = j.at("dim_out").get<std::size_t>();
  const auto& rows = j.at("weight");
  if (rows.size() != dim_out) {
    throw ValidationError("encoder weight has " + std::to_string(rows.size()) +
                          " rows, expected " + std::to_string(dim_out));
  }
  params.weight.resize(static_cast<Eigen::Index>(dim_out),
                       static_cast<Eigen::Index>(dim_in));
  for (std::size_t r = 0; r < dim_out; ++r) {
    const auto row = rows[r].get<std::vector<double>>();
    if (row.size() != dim_in) {
      throw ValidationError("encoder weight row " + std::to_string(r) +
                            " has wrong length");
    }
    for (std::size_t c = 0; c < dim_in; ++c) {
      params.weight(static_cast<Eigen::Index>(r),
                    static_cast<Eigen::Index>(c)) = row[c];
    }
  }
  return params;
}

void save_encoder(const std::filesystem::path& path,
                  const EncoderParams& params) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < params.weight.rows(); ++r) {
    std::vector<double> row(static_cast<std::size_t>(params.weight.cols()));
    for (Eigen::Index c = 0; c < params.weight.cols(); ++c) {
      row[static_cast<std::size_t>(c)] = params.weight(r, c);
    }
    rows.push_back(row);
  }
  nlohmann::json j{{"dim_in", params.dim_in()},
                   {"dim_out", params.dim_out()},
                   {"buckets", params.features.buckets},
                   {"weight", rows}};
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::trunc);
  out << j.dump(2) << '\n';
}

RetrievalList top_n(const std::string& query_id, const EmbeddingVector& query,
                    const std::vector<std::string>& doc_ids,
                    const EmbeddingStore& doc_embeddings, std::size_t n) {
  if (n > doc_ids.size()) {
    throw ValidationError("top_n: n=" + std::to_string(n) +
                          " exceeds store size " +
                          std::to_string(doc_ids.size()));
  }
  RetrievalList list;
  list.query_id = query_id;
  list.entries.reserve(doc_ids.size());
  for (const auto& doc_id : doc_ids) {
    list.entries.push_back(
        {doc_id, cosine_score(query, doc_embeddings.get(doc_id))});
  }
  std::sort(list.entries.begin(), list.entries.end(),
            [](const RetrievalEntry& a, const RetrievalEntry& b) {
              if (a.score != b.score) return a.score > b.score;
              return a.doc_id < b.doc_id;
            });
  list.entries.resize(n);
  return list;
}

}  // namespace ragcur
