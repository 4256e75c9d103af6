#include "ragcur/train.hpp"

#include <algorithm>
#include <cmath>

#include "ragcur/rng.hpp"

namespace ragcur {

namespace {

double softplus(double x) {
  // log(1 + e^x) without overflow.
  if (x > 0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

double logistic(double x) {
  if (x >= 0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

void TieredLossInput::validate() const {
  if (n < 2) {
    throw ValidationError("tiered loss requires n >= 2");
  }
  if (scores.size() != positions.size()) {
    throw ValidationError("tiered loss: scores and positions differ in size");
  }
  for (std::size_t i = 1; i < positions.size(); ++i) {
    if (positions[i] <= positions[i - 1]) {
      throw ValidationError("tiered loss: positions must be strictly "
                            "increasing");
    }
  }
  if (!positions.empty() && (positions.front() < 1 || positions.back() > n)) {
    throw ValidationError("tiered loss: positions must lie in [1, n]");
  }
}

double tiered_loss(const TieredLossInput& input) {
  input.validate();
  const double denom = static_cast<double>(input.n - 1);
  double loss = 0.0;
  for (std::size_t a = 0; a < input.scores.size(); ++a) {
    for (std::size_t b = a + 1; b < input.scores.size(); ++b) {
      const double weight =
          static_cast<double>(input.positions[b] - input.positions[a]) / denom;
      loss += weight * softplus(input.scores[b] - input.scores[a]);
    }
  }
  return loss;
}

std::vector<double> tiered_loss_grad(const TieredLossInput& input) {
  input.validate();
  const double denom = static_cast<double>(input.n - 1);
  std::vector<double> grad(input.scores.size(), 0.0);
  for (std::size_t a = 0; a < input.scores.size(); ++a) {
    for (std::size_t b = a + 1; b < input.scores.size(); ++b) {
      const double weight =
          static_cast<double>(input.positions[b] - input.positions[a]) / denom;
      const double sig = logistic(input.scores[b] - input.scores[a]);
      grad[a] -= weight * sig;
      grad[b] += weight * sig;
    }
  }
  return grad;
}

void FeatureStore::put(const std::string& id, SparseVector features) {
  map_[id] = std::move(features);
}

const SparseVector& FeatureStore::get(const std::string& id) const {
  auto it = map_.find(id);
  if (it == map_.end()) {
    throw ValidationError("missing features for id: " + id);
  }
  return it->second;
}

bool FeatureStore::contains(const std::string& id) const {
  return map_.count(id) != 0;
}

InstanceGrad instance_loss_and_param_grad(
    const RetrieverTrainingInstance& instance,
    const SparseVector& query_features,
    const std::vector<SparseVector>& doc_features, const EncoderParams& params,
    std::size_t n) {
  const std::size_t k = instance.members.size();
  if (doc_features.size() != k) {
    throw ValidationError("instance for query " + instance.query_id +
                          " has " + std::to_string(k) + " members but " +
                          std::to_string(doc_features.size()) +
                          " document feature vectors");
  }

  const EmbeddingVector query_emb = encode(query_features, params);
  if (!query_emb.scorable()) {
    throw ValidationError("zero-norm query embedding for " +
                          instance.query_id);
  }
  std::vector<EmbeddingVector> doc_embs;
  doc_embs.reserve(k);
  TieredLossInput loss_input;
  loss_input.n = n;
  for (std::size_t i = 0; i < k; ++i) {
    doc_embs.push_back(encode(doc_features[i], params));
    if (!doc_embs.back().scorable()) {
      throw ValidationError("zero-norm document embedding for " +
                            instance.members[i].doc_id);
    }
    loss_input.scores.push_back(cosine_score(query_emb, doc_embs.back()));
    loss_input.positions.push_back(instance.members[i].position);
  }

  InstanceGrad result;
  result.loss = tiered_loss(loss_input);
  const auto d_scores = tiered_loss_grad(loss_input);

  result.d_weight = Eigen::MatrixXd::Zero(params.weight.rows(),
                                          params.weight.cols());
  const auto accumulate = [&](const Eigen::VectorXd& d_emb,
                              const SparseVector& features) {
    for (const auto& [idx, value] : features) {
      result.d_weight.col(static_cast<Eigen::Index>(idx)) += value * d_emb;
    }
  };

  Eigen::VectorXd d_query = Eigen::VectorXd::Zero(query_emb.values.size());
  for (std::size_t i = 0; i < k; ++i) {
    const double s = loss_input.scores[i];
    const auto& doc = doc_embs[i];
    // d cos(q, d) / dq and /dd for the normalized dot product.
    Eigen::VectorXd ds_dq =
        doc.values / (query_emb.norm * doc.norm) -
        s * query_emb.values / (query_emb.norm * query_emb.norm);
    Eigen::VectorXd ds_dd =
        query_emb.values / (query_emb.norm * doc.norm) -
        s * doc.values / (doc.norm * doc.norm);
    d_query += d_scores[i] * ds_dq;
    accumulate(d_scores[i] * ds_dd, doc_features[i]);
  }
  accumulate(d_query, query_features);
  return result;
}

namespace {

std::vector<SparseVector> member_features(
    const RetrieverTrainingInstance& instance, const FeatureStore& features) {
  std::vector<SparseVector> out;
  out.reserve(instance.members.size());
  for (const auto& member : instance.members) {
    out.push_back(features.get(member.doc_id));
  }
  return out;
}

}  // namespace

EncoderParams train_stage(
    const std::vector<RetrieverTrainingInstance>& instances,
    const FeatureStore& features, EncoderParams params,
    const TrainConfig& config, std::size_t n, StageReport* report) {
  if (instances.empty()) {
    throw ValidationError("train_stage called with no instances");
  }
  if (config.learning_rate < 0) {
    throw ValidationError("learning rate must be >= 0");
  }
  const int stage = instances.front().stage;
  if (report) {
    report->stage = stage;
    report->mean_loss_per_pass.clear();
  }

  Eigen::MatrixXd velocity;
  if (config.optimizer == Optimizer::sgd_momentum) {
    velocity = Eigen::MatrixXd::Zero(params.weight.rows(),
                                     params.weight.cols());
  }

  for (int pass = 0; pass < config.passes_per_stage; ++pass) {
    std::vector<std::size_t> order(instances.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    SplitMix64 rng(mix_seed(config.seed, "stage-pass",
                            static_cast<std::uint64_t>(stage) * 1000003ULL +
                                static_cast<std::uint64_t>(pass)));
    deterministic_shuffle(order, rng);

    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size();
         start += config.batch_size) {
      const std::size_t end =
          std::min(order.size(), start + config.batch_size);
      Eigen::MatrixXd batch_grad = Eigen::MatrixXd::Zero(
          params.weight.rows(), params.weight.cols());
      for (std::size_t i = start; i < end; ++i) {
        const auto& instance = instances[order[i]];
        auto grad = instance_loss_and_param_grad(
            instance, features.get(instance.query_id),
            member_features(instance, features), params, n);
        if (!std::isfinite(grad.loss)) {
          throw ValidationError("non-finite loss on query " +
                                instance.query_id);
        }
        loss_sum += grad.loss;
        batch_grad += grad.d_weight;
      }
      batch_grad /= static_cast<double>(end - start);
      if (config.optimizer == Optimizer::sgd_momentum) {
        velocity = config.momentum * velocity - config.learning_rate * batch_grad;
        params.weight += velocity;
      } else {
        params.weight -= config.learning_rate * batch_grad;
      }
    }
    if (report) {
      report->mean_loss_per_pass.push_back(
          loss_sum / static_cast<double>(instances.size()));
    }
  }
  return params;
}

EncoderParams train_curriculum(const std::vector<StageDataset>& stages,
                               const FeatureStore& features,
                               EncoderParams params, const TrainConfig& config,
                               std::size_t n,
                               std::vector<StageReport>* reports) {
  if (stages.empty()) {
    throw ValidationError("train_curriculum called with no stages");
  }
  int prev_stage = 0;
  for (const auto& dataset : stages) {
    if (dataset.stage <= prev_stage) {
      throw ValidationError("curriculum stages must be in ascending order, "
                            "got stage " + std::to_string(dataset.stage) +
                            " after " + std::to_string(prev_stage));
    }
    prev_stage = dataset.stage;
  }
  for (const auto& dataset : stages) {
    StageReport report;
    params = train_stage(dataset.instances, features, std::move(params),
                         config, n, &report);
    if (reports) reports->push_back(std::move(report));
  }
  return params;
}

double mean_dataset_loss(
    const std::vector<RetrieverTrainingInstance>& instances,
    const FeatureStore& features, const EncoderParams& params, std::size_t n) {
  if (instances.empty()) {
    throw ValidationError("mean_dataset_loss over an empty dataset");
  }
  double sum = 0.0;
  for (const auto& instance : instances) {
    sum += instance_loss_and_param_grad(
               instance, features.get(instance.query_id),
               member_features(instance, features), params, n)
               .loss;
  }
  return sum / static_cast<double>(instances.size());
}

FeatureStore build_feature_store(const std::vector<QueryRecord>& queries,
                                 const DocumentStore& docs,
                                 const FeatureSpec& spec) {
  FeatureStore store;
  for (const auto& query : queries) {
    store.put(query.query_id, featurize(query.question, spec));
  }
  for (const auto& doc : docs.records()) {
    store.put(doc.doc_id, featurize(doc.text, spec));
  }
  return store;
}

}  // namespace ragcur
