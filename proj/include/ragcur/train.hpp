#ifndef RAGCUR_TRAIN_HPP
#define RAGCUR_TRAIN_HPP

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "ragcur/curriculum.hpp"
#include "ragcur/retrieval.hpp"

namespace ragcur {

struct TieredLossInput {
  std::vector<double> scores;        // cosine similarities s_i
  std::vector<std::size_t> positions;  // global reranked positions, increasing
  std::size_t n = 0;                 // total reranked count

  void validate() const;
};

// Pairwise logistic ranking loss whose pair weights grow linearly with
// global-position distance:
//   L = sum over pairs (a,b), pos_a < pos_b, of
//       (pos_b - pos_a)/(n-1) * log(1 + exp(s_b - s_a)).
double tiered_loss(const TieredLossInput& input);

// dL/ds_i, analytic. Entries sum to zero.
std::vector<double> tiered_loss_grad(const TieredLossInput& input);

enum class Optimizer { sgd, sgd_momentum };

struct TrainConfig {
  double learning_rate = 1e-5;
  int epochs = 3;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
  Optimizer optimizer = Optimizer::sgd;
  double momentum = 0.9;
  int passes_per_stage = 1;
};

// Text features for every query_id and doc_id the trainer may touch.
class FeatureStore {
 public:
  void put(const std::string& id, SparseVector features);
  const SparseVector& get(const std::string& id) const;
  bool contains(const std::string& id) const;

 private:
  std::unordered_map<std::string, SparseVector> map_;
};

struct InstanceGrad {
  double loss = 0.0;
  Eigen::MatrixXd d_weight;
};

// Loss and parameter gradient for one instance: chain rule through
// s_i = cos(W f_q, W f_di) into the tiered loss.
InstanceGrad instance_loss_and_param_grad(
    const RetrieverTrainingInstance& instance, const SparseVector& query_features,
    const std::vector<SparseVector>& doc_features, const EncoderParams& params,
    std::size_t n);

struct StageReport {
  int stage = 0;
  std::vector<double> mean_loss_per_pass;

  double first_mean_loss() const { return mean_loss_per_pass.front(); }
  double last_mean_loss() const { return mean_loss_per_pass.back(); }
};

// Mini-batch gradient descent over the stage's instances. Batches are
// formed in seeded shuffled order; per-batch gradients are means over the
// batch, reduced in ascending instance index for bit-reproducibility.
EncoderParams train_stage(const std::vector<RetrieverTrainingInstance>& instances,
                          const FeatureStore& features, EncoderParams params,
                          const TrainConfig& config, std::size_t n,
                          StageReport* report = nullptr);

struct StageDataset {
  int stage = 0;
  std::vector<RetrieverTrainingInstance> instances;
};

// Sequential train_stage calls with parameters threaded through; stages
// must arrive in ascending order.
EncoderParams train_curriculum(const std::vector<StageDataset>& stages,
                               const FeatureStore& features,
                               EncoderParams params, const TrainConfig& config,
                               std::size_t n,
                               std::vector<StageReport>* reports = nullptr);

// Mean tiered loss of a dataset under fixed parameters.
double mean_dataset_loss(const std::vector<RetrieverTrainingInstance>& instances,
                         const FeatureStore& features,
                         const EncoderParams& params, std::size_t n);

FeatureStore build_feature_store(const std::vector<QueryRecord>& queries,
                                 const DocumentStore& docs,
                                 const FeatureSpec& spec);

}  // namespace ragcur

#endif  // RAGCUR_TRAIN_HPP
