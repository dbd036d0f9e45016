#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace bpstack {

struct FoldPlan {
  int k = 5;
  bool reduced = false;                   // fewer groups than requested folds
  std::map<std::string, int> assignments;  // group id -> fold
  std::vector<int> row_fold;              // fold of every row, input order

  std::vector<Eigen::Index> test_rows(int fold) const;
  std::vector<Eigen::Index> train_rows(int fold) const;
};

// Groups are shuffled by `seed`, then placed largest-first into the fold
// holding the fewest rows so far. Fewer than k groups reduces k (minimum 2)
// with a warning; fewer than two groups is a DataError.
FoldPlan plan_group_kfold(const std::vector<std::string>& groups, int k, std::uint64_t seed);

}  // namespace bpstack
