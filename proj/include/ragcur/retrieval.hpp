#ifndef RAGCUR_RETRIEVAL_HPP
#define RAGCUR_RETRIEVAL_HPP

#include <Eigen/Dense>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ragcur/corpus.hpp"

namespace ragcur {

struct FeatureSpec {
  std::size_t buckets = 1 << 14;
};

// Sparse feature vector: (bucket index, value) pairs, indices ascending.
using SparseVector = std::vector<std::pair<std::size_t, double>>;

// Hashed bag-of-tokens over normalized text. Deterministic.
SparseVector featurize(const std::string& text, const FeatureSpec& spec);

struct EmbeddingVector {
  Eigen::VectorXd values;
  double norm = 0.0;

  static EmbeddingVector from(Eigen::VectorXd v);
  bool scorable() const { return norm > 0.0; }
};

struct EncoderParams {
  Eigen::MatrixXd weight;  // dim_out x dim_in
  FeatureSpec features;

  std::size_t dim_out() const { return static_cast<std::size_t>(weight.rows()); }
  std::size_t dim_in() const { return static_cast<std::size_t>(weight.cols()); }
};

EncoderParams random_encoder(std::size_t dim_out, std::size_t buckets,
                             std::uint64_t seed, double scale = 0.1);

EmbeddingVector encode(const SparseVector& features,
                       const EncoderParams& params);

// Eigen::VectorXd form of a sparse feature vector.
Eigen::VectorXd densify(const SparseVector& features, std::size_t dim);

double cosine_score(const EmbeddingVector& a, const EmbeddingVector& b);

class EmbeddingStore {
 public:
  void put(std::string id, EmbeddingVector vec);
  bool contains(const std::string& id) const;
  const EmbeddingVector& get(const std::string& id) const;
  std::size_t size() const { return ids_.size(); }
  // Insertion order; callers that need determinism sort by id themselves.
  const std::vector<std::string>& ids() const { return ids_; }

 private:
  std::vector<std::string> ids_;
  std::unordered_map<std::string, EmbeddingVector> map_;
};

EmbeddingStore load_embeddings(const std::filesystem::path& path);
void save_embeddings(const std::filesystem::path& path,
                     const EmbeddingStore& store);

EncoderParams load_encoder(const std::filesystem::path& path);
void save_encoder(const std::filesystem::path& path,
                  const EncoderParams& params);

// Exhaustive scoring of every document embedding against the query.
// Ties broken by ascending doc_id.
RetrievalList top_n(const std::string& query_id, const EmbeddingVector& query,
                    const std::vector<std::string>& doc_ids,
                    const EmbeddingStore& doc_embeddings, std::size_t n);

}  // namespace ragcur

#endif  // RAGCUR_RETRIEVAL_HPP
