#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "bpstack/ensemble.hpp"
#include "bpstack/evaluate.hpp"
#include "bpstack/folds.hpp"

namespace bpstack {

struct CvOptions {
  int k = 5;
  std::uint64_t seed = 42;
  bool point_models = true;  // false: preprocessing and quantile heads only
  bool median_head = false;  // also fit a tau = 0.5 linear head per fold
};

struct CvResult {
  FoldPlan plan;
  PredictionSet oof;  // assembled out-of-fold predictions
  std::array<Eigen::VectorXd, 2> median;  // tau = 0.5 head, when requested
  std::array<double, 2> rmse{};          // blended point
  std::array<double, 2> rmse_primary{};
  std::array<double, 2> rmse_forest{};
  std::array<double, 2> rmse_stacked{};
  std::vector<std::array<double, 2>> fold_rmse;
  std::array<std::vector<double>, 2> fold_alpha;
};

// Grouped k-fold: every fold refits the full ensemble on its training rows.
CvResult cross_validate(const Eigen::Ref<const Eigen::MatrixXd>& x,
                        const Eigen::Ref<const Eigen::MatrixXd>& y,
                        const std::vector<std::string>& groups,
                        const std::vector<std::string>& feature_names,
                        const EnsembleParams& params, const CvOptions& options);

struct AblationEntry {
  std::string name;
  std::string kind;  // "category" | "component" | "feature"
  std::size_t removed_features = 0;
  std::array<double, 2> rmse{};
  std::array<double, 2> impact{};      // RMSE without - RMSE full
  std::array<double, 2> impact_pct{};  // impact / RMSE full * 100
  bool skipped = false;
  std::string note;
};

struct AblationReport {
  std::array<double, 2> full_rmse{};
  std::vector<AblationEntry> entries;
};

// Domain categories re-run CV without their features; the components
// (no_stacking, no_blend, quantile_only) reuse `baseline`, which must carry
// the median head.
AblationReport ablation_run(const Eigen::Ref<const Eigen::MatrixXd>& x,
                            const Eigen::Ref<const Eigen::MatrixXd>& y,
                            const std::vector<std::string>& groups,
                            const std::vector<std::string>& feature_names,
                            const std::vector<DomainTag>& domains, const EnsembleParams& params,
                            const CvOptions& options, const CvResult& baseline,
                            const std::vector<std::string>& single_features = {});

// Mean RMSE increase per feature and target over `repeats` seeded shuffles.
std::map<std::string, std::array<double, 2>> permutation_importance(
    const FittedEnsemble& model, const Eigen::Ref<const Eigen::MatrixXd>& x,
    const Eigen::Ref<const Eigen::MatrixXd>& y, std::uint64_t seed, int repeats = 5);

// Full metric suite for one target. `equity` maps a subgroup spec name to
// one label per row.
TargetReport target_report(const VectorRef& y_true, const TargetPrediction& pred,
                           const VectorRef& sbp_true, const VectorRef& sbp_pred,
                           const std::map<std::string, std::vector<std::string>>& equity = {});

}  // namespace bpstack
