#include "bpstack/folds.hpp"

#include <algorithm>
#include <numeric>
#include <spdlog/spdlog.h>

#include "bpstack/error.hpp"
#include "bpstack/rng.hpp"

namespace bpstack {

std::vector<Eigen::Index> FoldPlan::test_rows(int fold) const {
  std::vector<Eigen::Index> out;
  for (std::size_t i = 0; i < row_fold.size(); ++i) {
    if (row_fold[i] == fold) out.push_back(static_cast<Eigen::Index>(i));
  }
  return out;
}

std::vector<Eigen::Index> FoldPlan::train_rows(int fold) const {
  std::vector<Eigen::Index> out;
  for (std::size_t i = 0; i < row_fold.size(); ++i) {
    if (row_fold[i] != fold) out.push_back(static_cast<Eigen::Index>(i));
  }
  return out;
}

FoldPlan plan_group_kfold(const std::vector<std::string>& groups, int k, std::uint64_t seed) {
  if (k < 2) throw ConfigError("group k-fold needs k >= 2");
  std::vector<std::string> distinct;
  std::map<std::string, std::size_t> size;
  for (const auto& g : groups) {
    if (size[g]++ == 0) distinct.push_back(g);
  }
  if (distinct.size() < 2) {
    throw DataError("group k-fold needs at least two distinct groups, got " +
                    std::to_string(distinct.size()));
  }
  FoldPlan plan;
  plan.k = k;
  if (distinct.size() < static_cast<std::size_t>(k)) {
    plan.k = static_cast<int>(distinct.size());
    plan.reduced = true;
    spdlog::warn("only {} groups for {} folds; using {} folds", distinct.size(), k, plan.k);
  }
  Rng rng(seed);
  rng.shuffle(distinct);
  std::stable_sort(distinct.begin(), distinct.end(),
                   [&](const std::string& a, const std::string& b) { return size[a] > size[b]; });
  std::vector<std::size_t> load(static_cast<std::size_t>(plan.k), 0);
  for (const auto& g : distinct) {
    const auto fold = static_cast<std::size_t>(
        std::min_element(load.begin(), load.end()) - load.begin());
    load[fold] += size[g];
    plan.assignments[g] = static_cast<int>(fold);
  }
  const std::size_t biggest = *std::max_element(load.begin(), load.end());
  if (biggest * static_cast<std::size_t>(plan.k) > 2 * groups.size()) {
    spdlog::info("group folds are imbalanced: largest fold holds {} of {} rows", biggest,
                 groups.size());
  }
  plan.row_fold.reserve(groups.size());
  for (const auto& g : groups) plan.row_fold.push_back(plan.assignments[g]);
  return plan;
}

}  // namespace bpstack
