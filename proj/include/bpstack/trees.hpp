#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

namespace bpstack {

struct TreeParams {
  int max_depth = 3;  // <= 0 means unlimited
  int min_samples_leaf = 1;
  int n_estimators = 100;
  double learning_rate = 0.1;  // boosting only
  double subsample = 1.0;      // boosting only, without replacement
  double feature_fraction = 1.0;  // forest only, per split
  std::uint64_t seed = 42;
  bool bootstrap = true;  // forest only; off reproduces plain trees

  void validate() const;  // throws ConfigError
};

// Flat CART regression tree. Node 0 is the root; feature < 0 marks a leaf.
// Rows with x[feature] <= threshold descend left.
struct RegressionTree {
  std::vector<int> feature;
  std::vector<double> threshold;
  std::vector<int> left;
  std::vector<int> right;
  std::vector<double> value;

  std::size_t node_count() const { return feature.size(); }
  std::size_t leaf_count() const;
  int depth() const;
  double predict_row(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
  Eigen::VectorXd predict(const Eigen::Ref<const Eigen::MatrixXd>& x) const;
};

RegressionTree fit_tree(const Eigen::Ref<const Eigen::MatrixXd>& x,
                        const Eigen::Ref<const Eigen::VectorXd>& y, const TreeParams& params);

struct GbmModel {
  double init = 0.0;
  double learning_rate = 0.1;
  std::vector<RegressionTree> trees;

  Eigen::VectorXd predict(const Eigen::Ref<const Eigen::MatrixXd>& x) const;
};

// Least-squares boosting. When `stage_mse` is given it receives the
// full-sample training MSE after F0 and after every stage (size M + 1).
GbmModel fit_gbm(const Eigen::Ref<const Eigen::MatrixXd>& x,
                 const Eigen::Ref<const Eigen::VectorXd>& y, const TreeParams& params,
                 std::vector<double>* stage_mse = nullptr);

struct ForestModel {
  std::vector<RegressionTree> trees;

  Eigen::VectorXd predict(const Eigen::Ref<const Eigen::MatrixXd>& x) const;
};

ForestModel fit_random_forest(const Eigen::Ref<const Eigen::MatrixXd>& x,
                              const Eigen::Ref<const Eigen::VectorXd>& y, const TreeParams& params);

}  // namespace bpstack
