#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "bpstack/trees.hpp"

namespace bpstack {

struct SearchDimension {
  std::string name;
  double lo = 0.0;
  double hi = 1.0;
  bool integer = false;
  bool log_scale = false;
  std::vector<double> grid;  // lattice values for grid search
};

struct SearchSpace {
  std::vector<SearchDimension> dims;

  // n_estimators [50, 500], learning_rate [0.001, 0.2] (log), max_depth [3, 10].
  static SearchSpace gbm_default();
  void validate() const;
  // Maps [0, 1]^d onto the space, rounding integer dimensions.
  std::vector<double> from_unit(const Eigen::Ref<const Eigen::VectorXd>& u) const;
  Eigen::VectorXd to_unit(const std::vector<double>& point) const;
};

// Writes a point of gbm_default() into boosting parameters.
TreeParams apply_gbm_point(TreeParams base, const std::vector<double>& point);

using Objective = std::function<double(const std::vector<double>&)>;

struct TuningTrial {
  std::vector<double> point;
  double value = 0.0;  // +inf when the objective failed
};

struct TuningResult {
  std::vector<double> best_point;
  double best_value = 0.0;
  std::vector<TuningTrial> trials;
};

// Every point of the declared lattice, evaluated in parallel.
TuningResult tune_grid(const SearchSpace& space, const Objective& objective);

struct BayesOptions {
  int budget = 30;
  int initial_points = 5;
  double xi = 0.01;
  double jitter = 1e-6;
  int candidates = 2000;
  std::uint64_t seed = 42;
};

TuningResult tune_bayes(const SearchSpace& space, const Objective& objective,
                        const BayesOptions& options = {});

// Zero-mean GP with an ARD RBF kernel on standardised targets. Length
// scales are picked from a fixed grid by marginal likelihood.
class GaussianProcess {
 public:
  void fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double jitter = 1e-6);
  // Posterior mean and standard deviation in the original target units.
  std::pair<double, double> predict(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
  const Eigen::VectorXd& length_scales() const { return length_; }

 private:
  double kernel(const Eigen::Ref<const Eigen::RowVectorXd>& a,
                const Eigen::Ref<const Eigen::RowVectorXd>& b) const;

  Eigen::MatrixXd x_;
  Eigen::VectorXd alpha_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  Eigen::VectorXd length_;
  double y_mean_ = 0.0;
  double y_scale_ = 1.0;
  double jitter_ = 1e-6;
};

// Expected improvement for minimisation.
double expected_improvement(double mean, double sd, double best, double xi);

}  // namespace bpstack
