#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "bpstack/cohort.hpp"
#include "bpstack/folds.hpp"
#include "bpstack/quantile.hpp"
#include "bpstack/trees.hpp"
#include "json.hpp"

namespace bpstack {

inline constexpr double kVarianceFloor = 1e-10;
inline constexpr double kIqrFloor = 1e-9;
inline constexpr double kDegenerateAlpha = 0.4;

// Variance filter followed by (x - median) / IQR scaling.
struct Preprocessor {
  std::vector<int> kept;  // surviving input columns
  Eigen::VectorXd median;
  Eigen::VectorXd iqr;
  Eigen::Index input_cols = 0;

  static Preprocessor fit(const Eigen::Ref<const Eigen::MatrixXd>& x);
  Eigen::MatrixXd transform(const Eigen::Ref<const Eigen::MatrixXd>& x) const;
};

struct EnsembleParams {
  TreeParams gbm{.max_depth = 3, .min_samples_leaf = 5, .n_estimators = 300,
                 .learning_rate = 0.05, .subsample = 0.8, .feature_fraction = 1.0,
                 .seed = 42, .bootstrap = true};
  TreeParams forest{.max_depth = 8, .min_samples_leaf = 3, .n_estimators = 100,
                    .learning_rate = 0.1, .subsample = 1.0, .feature_fraction = 0.5,
                    .seed = 43, .bootstrap = true};
  double ridge_penalty = 1.0;
  double quantile_l1_penalty = 0.1;
  double lower_tau = 0.1;
  double upper_tau = 0.9;
  int stack_folds = 5;
  std::uint64_t seed = 42;  // internal stacking folds

  void validate() const;
};

struct StackedModel {
  GbmModel gbm;
  ForestModel forest;
  double meta_intercept = 0.0;
  Eigen::Vector2d meta_coef = Eigen::Vector2d::Zero();

  Eigen::VectorXd combine(const Eigen::Ref<const Eigen::VectorXd>& gbm_pred,
                          const Eigen::Ref<const Eigen::VectorXd>& forest_pred) const;
  Eigen::VectorXd predict(const Eigen::Ref<const Eigen::MatrixXd>& x) const;
};

struct StackFit {
  StackedModel model;
  Eigen::MatrixXd oof;  // n x 2: GBM, forest out-of-fold predictions
  FoldPlan plan;
};

// Bases produce grouped out-of-fold predictions, ridge combines them, then
// the bases are refitted on all rows.
StackFit fit_stacked(const Eigen::Ref<const Eigen::MatrixXd>& x,
                     const Eigen::Ref<const Eigen::VectorXd>& y,
                     const std::vector<std::string>& groups, const EnsembleParams& params);

struct BlendResult {
  double alpha = kDegenerateAlpha;
  bool degenerate = false;
  std::array<double, 11> grid_mse{};  // alpha = 0.0, 0.1, ..., 1.0
  double grid_alpha = kDegenerateAlpha;
};

// Minimises the MSE of alpha * primary + (1 - alpha) * stacked over [0, 1].
BlendResult blend_alpha(const Eigen::Ref<const Eigen::VectorXd>& y,
                        const Eigen::Ref<const Eigen::VectorXd>& primary,
                        const Eigen::Ref<const Eigen::VectorXd>& stacked);

enum class RiskTier { Low, Medium, High };
std::string_view to_string(RiskTier t);
// Low: w <= p33; Medium: p33 < w <= p66; High: w > p66.
RiskTier risk_tier(double width, double p33, double p66);

struct TargetModel {
  StackedModel stack;
  BlendResult blend;
  QuantileModel lower;
  QuantileModel upper;
  double width_p33 = 0.0;
  double width_p66 = 0.0;
};

struct FittedEnsemble {
  std::vector<std::string> feature_names;
  Preprocessor pre;
  std::array<TargetModel, 2> targets;

  const TargetModel& at(Target t) const { return targets[static_cast<std::size_t>(t)]; }
};

struct TargetDiagnostics {
  Eigen::VectorXd oof_primary;
  Eigen::VectorXd oof_stacked;
  Eigen::VectorXd oof_forest;
  Eigen::VectorXd train_width;
  int stack_folds_used = 0;
};

struct EnsembleFit {
  FittedEnsemble model;
  std::array<TargetDiagnostics, 2> diagnostics;
};

// Per target: stack (whose refitted GBM is the primary model), alpha from the
// out-of-fold predictions, quantile heads, frozen width percentiles. `y` has
// one column per target (SBP, DBP).
EnsembleFit fit_ensemble(const Eigen::Ref<const Eigen::MatrixXd>& x,
                         const Eigen::Ref<const Eigen::MatrixXd>& y,
                         const std::vector<std::string>& groups,
                         const std::vector<std::string>& feature_names,
                         const EnsembleParams& params);

struct TargetPrediction {
  Eigen::VectorXd point;
  Eigen::VectorXd primary;
  Eigen::VectorXd forest;
  Eigen::VectorXd stacked;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
  Eigen::VectorXd width;
  std::vector<RiskTier> tier;
  std::size_t swaps = 0;  // rows whose quantile heads crossed
};

struct PredictionSet {
  std::array<TargetPrediction, 2> targets;

  const TargetPrediction& at(Target t) const { return targets[static_cast<std::size_t>(t)]; }
  Eigen::Index rows() const { return targets[0].point.size(); }
};

// `x` columns must follow model.feature_names.
PredictionSet predict_with_intervals(const FittedEnsemble& model,
                                     const Eigen::Ref<const Eigen::MatrixXd>& x);

struct StratifiedModels {
  std::map<Stratum, FittedEnsemble> models;
  std::map<Stratum, std::size_t> counts;
  std::vector<Stratum> flagged;  // below min_stratum, routed to the global model
};

// Strata by true SBP. Inclusive: a stratum with exactly min_stratum rows
// gets its own model.
StratifiedModels fit_stratified(const Eigen::Ref<const Eigen::MatrixXd>& x,
                                const Eigen::Ref<const Eigen::MatrixXd>& y,
                                const std::vector<std::string>& groups,
                                const std::vector<std::string>& feature_names,
                                const EnsembleParams& params, std::size_t min_stratum = 30);

// Rows are routed by the global model's predicted SBP.
PredictionSet predict_stratified(const FittedEnsemble& global, const StratifiedModels& strata,
                                 const Eigen::Ref<const Eigen::MatrixXd>& x);

void to_json(nlohmann::json& j, const FittedEnsemble& m);
void from_json(const nlohmann::json& j, FittedEnsemble& m);
void to_json(nlohmann::json& j, const StratifiedModels& m);
void from_json(const nlohmann::json& j, StratifiedModels& m);

}  // namespace bpstack
