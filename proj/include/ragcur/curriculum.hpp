#ifndef RAGCUR_CURRICULUM_HPP
#define RAGCUR_CURRICULUM_HPP

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ragcur/rerank.hpp"

namespace ragcur {

struct StageSchedule {
  int stage = 1;
  std::size_t n1 = 0;
  std::size_t n2 = 0;
  std::size_t k1 = 0;
  std::size_t k2 = 0;
  std::size_t k3 = 0;

  std::size_t k() const { return k1 + k2 + k3; }
  void validate(std::size_t n) const;
};

// The three-stage schedule: n1 = 1/3/5, n2 = 15, k-vectors
// (1,2,2), (3,2,0), (5,0,0). Only defined for k=5, n=20; other settings
// come in through the config file.
std::vector<StageSchedule> default_schedules(std::size_t k = 5,
                                             std::size_t n = 20);

struct InstanceMember {
  std::string doc_id;
  std::size_t position = 0;  // global reranked position, 1..n
};

struct RetrieverTrainingInstance {
  std::string query_id;
  int stage = 1;
  std::vector<InstanceMember> members;  // positions strictly increasing
};

// Stratified sample: k1 uniformly without replacement from positions
// [1,n1], k2 from (n1,n2], k3 from (n2,n]. Deterministic given the seed;
// callers derive the seed from (global seed, query_id, stage, epoch).
RetrieverTrainingInstance sample_stage_instance(const RerankedList& list,
                                                const StageSchedule& schedule,
                                                std::uint64_t seed);

struct RankGapStats {
  double avg_gap = 0.0;   // mean over instances of mean pairwise gap
  std::size_t max_gap = 0;
};

RankGapStats rank_gap_stats(
    std::span<const RetrieverTrainingInstance> instances);

// One instance per reranked list; per-query seeds derived from
// (seed, query_id, stage).
std::vector<RetrieverTrainingInstance> build_stage_dataset(
    const std::vector<RerankedList>& lists, const StageSchedule& schedule,
    std::uint64_t seed, std::size_t n);

std::vector<RetrieverTrainingInstance> load_instances(
    const std::filesystem::path& path);
void save_instances(const std::filesystem::path& path,
                    const std::vector<RetrieverTrainingInstance>& instances);

nlohmann::json to_json(const StageSchedule& schedule);
StageSchedule schedule_from_json(const nlohmann::json& j);

}  // namespace ragcur

#endif  // RAGCUR_CURRICULUM_HPP
