#include "ragcur/curriculum.hpp"

#include <algorithm>

#include "ragcur/rng.hpp"

namespace ragcur {

void StageSchedule::validate(std::size_t n) const {
  GroupBounds bounds{n1, n2, n};
  bounds.validate();
  if (k() == 0) {
    throw ValidationError("stage " + std::to_string(stage) +
                          ": empty sample schedule");
  }
  if (k1 > n1 || k2 > n2 - n1 || k3 > n - n2) {
    throw ValidationError(
        "stage " + std::to_string(stage) + ": infeasible schedule, need k1<=" +
        std::to_string(n1) + ", k2<=" + std::to_string(n2 - n1) + ", k3<=" +
        std::to_string(n - n2) + ", got (" + std::to_string(k1) + "," +
        std::to_string(k2) + "," + std::to_string(k3) + ")");
  }
}

std::vector<StageSchedule> default_schedules(std::size_t k, std::size_t n) {
  if (k != 5 || n != 20) {
    throw ValidationError("default schedules are defined for k=5, n=20 only; "
                          "override schedules in the config for other "
                          "settings");
  }
  std::vector<StageSchedule> schedules{
      {1, 1, 15, 1, 2, 2},
      {2, 3, 15, 3, 2, 0},
      {3, 5, 15, 5, 0, 0},
  };
  for (const auto& s : schedules) s.validate(n);
  return schedules;
}

RetrieverTrainingInstance sample_stage_instance(const RerankedList& list,
                                                const StageSchedule& schedule,
                                                std::uint64_t seed) {
  const std::size_t n = list.entries.size();
  schedule.validate(n);
  SplitMix64 rng(seed);
  RetrieverTrainingInstance instance;
  instance.query_id = list.query_id;
  instance.stage = schedule.stage;

  // list.entries is ordered by position 1..n, so group g spans a
  // contiguous index range.
  const auto draw = [&](std::size_t lo, std::size_t hi, std::size_t count) {
    // positions in (lo, hi], i.e. indices [lo, hi).
    for (std::size_t idx :
         sample_without_replacement(hi - lo, count, rng)) {
      const auto& entry = list.entries[lo + idx];
      instance.members.push_back({entry.doc_id, entry.position});
    }
  };
  draw(0, schedule.n1, schedule.k1);
  draw(schedule.n1, schedule.n2, schedule.k2);
  draw(schedule.n2, n, schedule.k3);

  std::sort(instance.members.begin(), instance.members.end(),
            [](const InstanceMember& a, const InstanceMember& b) {
              return a.position < b.position;
            });
  return instance;
}

RankGapStats rank_gap_stats(
    std::span<const RetrieverTrainingInstance> instances) {
  if (instances.empty()) {
    throw ValidationError("rank_gap_stats over an empty instance set");
  }
  RankGapStats stats;
  double sum_of_means = 0.0;
  for (const auto& instance : instances) {
    if (instance.stage != instances.front().stage) {
      throw ValidationError("rank_gap_stats over mixed stages");
    }
    const auto& members = instance.members;
    if (members.size() < 2) {
      throw ValidationError("instance for query " + instance.query_id +
                            " has fewer than two members");
    }
    double pair_sum = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < members.size(); ++i) {
      for (std::size_t j = i + 1; j < members.size(); ++j) {
        const std::size_t gap = members[j].position - members[i].position;
        pair_sum += static_cast<double>(gap);
        stats.max_gap = std::max(stats.max_gap, gap);
        ++pairs;
      }
    }
    sum_of_means += pair_sum / static_cast<double>(pairs);
  }
  stats.avg_gap = sum_of_means / static_cast<double>(instances.size());
  return stats;
}

std::vector<RetrieverTrainingInstance> build_stage_dataset(
    const std::vector<RerankedList>& lists, const StageSchedule& schedule,
    std::uint64_t seed, std::size_t n) {
  std::vector<std::string> short_lists;
  for (const auto& list : lists) {
    if (list.entries.size() != n) short_lists.push_back(list.query_id);
  }
  if (!short_lists.empty()) {
    std::string ids;
    for (const auto& id : short_lists) ids += (ids.empty() ? "" : ", ") + id;
    throw ValidationError("reranked lists with length != " +
                          std::to_string(n) + ": " + ids);
  }
  std::vector<RetrieverTrainingInstance> instances;
  instances.reserve(lists.size());
  for (const auto& list : lists) {
    instances.push_back(sample_stage_instance(
        list, schedule,
        mix_seed(seed, list.query_id,
                 static_cast<std::uint64_t>(schedule.stage))));
  }
  std::sort(instances.begin(), instances.end(),
            [](const RetrieverTrainingInstance& a,
               const RetrieverTrainingInstance& b) {
              return a.query_id < b.query_id;
            });
  return instances;
}

std::vector<RetrieverTrainingInstance> load_instances(
    const std::filesystem::path& path) {
  std::vector<RetrieverTrainingInstance> instances;
  for (const auto& j : load_jsonl(path)) {
    RetrieverTrainingInstance instance;
    instance.query_id = j.at("query_id").get<std::string>();
    instance.stage = j.at("stage").get<int>();
    std::size_t prev = 0;
    for (const auto& m : j.at("members")) {
      InstanceMember member{m.at("doc_id").get<std::string>(),
                            m.at("position").get<std::size_t>()};
      if (member.position <= prev) {
        throw ValidationError("instance for query " + instance.query_id +
                              " has non-increasing positions");
      }
      prev = member.position;
      instance.members.push_back(std::move(member));
    }
    instances.push_back(std::move(instance));
  }
  return instances;
}

void save_instances(const std::filesystem::path& path,
                    const std::vector<RetrieverTrainingInstance>& instances) {
  std::vector<nlohmann::json> records;
  records.reserve(instances.size());
  for (const auto& instance : instances) {
    nlohmann::json members = nlohmann::json::array();
    for (const auto& m : instance.members) {
      members.push_back({{"doc_id", m.doc_id}, {"position", m.position}});
    }
    records.push_back({{"query_id", instance.query_id},
                       {"stage", instance.stage},
                       {"members", members}});
  }
  save_jsonl(path, records);
}

nlohmann::json to_json(const StageSchedule& schedule) {
  return {{"stage", schedule.stage}, {"n1", schedule.n1},
          {"n2", schedule.n2},       {"k1", schedule.k1},
          {"k2", schedule.k2},       {"k3", schedule.k3}};
}

StageSchedule schedule_from_json(const nlohmann::json& j) {
  return {j.at("stage").get<int>(),        j.at("n1").get<std::size_t>(),
          j.at("n2").get<std::size_t>(),   j.at("k1").get<std::size_t>(),
          j.at("k2").get<std::size_t>(),   j.at("k3").get<std::size_t>()};
}

}  // namespace ragcur
