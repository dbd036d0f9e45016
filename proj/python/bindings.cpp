#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "bpstack/error.hpp"
#include "bpstack/parallel.hpp"
#include "bpstack/pipeline.hpp"
#include "bpstack/report.hpp"

namespace py = pybind11;
using namespace bpstack;

namespace {

TreeParams tree_params(int max_depth, int min_samples_leaf, int n_estimators, double learning_rate,
                       double subsample, double feature_fraction, std::uint64_t seed) {
  TreeParams p;
  p.max_depth = max_depth;
  p.min_samples_leaf = min_samples_leaf;
  p.n_estimators = n_estimators;
  p.learning_rate = learning_rate;
  p.subsample = subsample;
  p.feature_fraction = feature_fraction;
  p.seed = seed;
  return p;
}

py::dict prediction_dict(const PredictionSet& p) {
  py::dict out;
  const char* keys[] = {"sbp", "dbp"};
  for (std::size_t t = 0; t < 2; ++t) {
    const auto& tp = p.targets[t];
    std::vector<std::string> tiers;
    for (auto r : tp.tier) tiers.emplace_back(to_string(r));
    py::dict d;
    d["point"] = tp.point;
    d["lower"] = tp.lower;
    d["upper"] = tp.upper;
    d["width"] = tp.width;
    d["tier"] = tiers;
    out[keys[t]] = d;
  }
  return out;
}

py::object json_to_py(const nlohmann::json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Stacked-ensemble blood pressure prediction";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<InvariantError>(m, "InvariantError", PyExc_RuntimeError);

  m.def("set_max_threads", &set_max_threads, py::arg("n"));

  m.def("leakage_matches", [](const std::vector<std::string>& names, std::vector<std::string> patterns) {
    if (patterns.empty()) patterns = LeakagePatternSet{}.all();
    std::vector<std::string> out;
    for (const auto& n : names) {
      if (matches_leakage_pattern(n, patterns)) out.push_back(n);
    }
    return out;
  }, py::arg("names"), py::arg("patterns") = std::vector<std::string>{});

  m.def("pinball_loss", [](const Eigen::VectorXd& y, const Eigen::VectorXd& yhat, double tau) {
    return pinball_loss(y, yhat, tau);
  }, py::arg("y"), py::arg("yhat"), py::arg("tau"));

  m.def("fit_quantile", [](const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double tau, double l1) {
    const auto q = fit_quantile(x, y, tau, l1);
    return py::make_tuple(q.intercept, q.coef);
  }, py::arg("x"), py::arg("y"), py::arg("tau"), py::arg("l1_penalty") = 0.0,
     "Returns (intercept, coefficients).");

  py::class_<GbmModel>(m, "GbmModel")
      .def("predict", [](const GbmModel& g, const Eigen::MatrixXd& x) { return g.predict(x); })
      .def_property_readonly("n_stages", [](const GbmModel& g) { return g.trees.size(); });

  m.def("fit_gbm", [](const Eigen::MatrixXd& x, const Eigen::VectorXd& y, int n_estimators,
                      double learning_rate, int max_depth, int min_samples_leaf, double subsample,
                      std::uint64_t seed) {
    std::vector<double> mse;
    auto g = fit_gbm(x, y, tree_params(max_depth, min_samples_leaf, n_estimators, learning_rate,
                                       subsample, 1.0, seed), &mse);
    return py::make_tuple(std::move(g), mse);
  }, py::arg("x"), py::arg("y"), py::arg("n_estimators") = 100, py::arg("learning_rate") = 0.1,
     py::arg("max_depth") = 3, py::arg("min_samples_leaf") = 1, py::arg("subsample") = 1.0,
     py::arg("seed") = 42, "Returns (model, per-stage training MSE).");

  m.def("plan_group_kfold", [](const std::vector<std::string>& groups, int k, std::uint64_t seed) {
    return plan_group_kfold(groups, k, seed).row_fold;
  }, py::arg("groups"), py::arg("k") = 5, py::arg("seed") = 42);

  m.def("bhs_grade", [](double w5, double w10, double w15) {
    return std::string(to_string(bhs_grade(w5, w10, w15)));
  });
  m.def("aami_check", &aami_check, py::arg("mean_bias"), py::arg("error_sd"));
  m.def("generalizability", &generalizability, py::arg("rmse_internal"), py::arg("rmse_external"));
  m.def("equity_ratio", [](const std::map<std::string, double>& rmse) {
    const auto e = equity_ratio(rmse);
    return py::make_tuple(e.ratio, e.pass);
  });
  m.def("kl_divergence", [](const Eigen::VectorXd& p, const Eigen::VectorXd& q, int bins) {
    return kl_divergence(p, q, bins);
  }, py::arg("p"), py::arg("q"), py::arg("bins") = kDefaultKlBins);
  m.def("coverage_probability", [](const Eigen::VectorXd& y, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
    return coverage_probability(y, lo, hi);
  });
  m.def("core_metrics", [](const Eigen::VectorXd& y, const Eigen::VectorXd& yhat) {
    const auto c = core_metrics(y, yhat);
    py::dict d;
    d["rmse"] = c.rmse;
    d["mae"] = c.mae;
    d["r2"] = c.r2;
    d["mean_bias"] = c.mean_bias;
    d["error_sd"] = c.error_sd;
    return d;
  });

  py::class_<FittedEnsemble>(m, "Ensemble")
      .def_readonly("feature_names", &FittedEnsemble::feature_names)
      .def("predict", [](const FittedEnsemble& e, const Eigen::MatrixXd& x) {
        return prediction_dict(predict_with_intervals(e, x));
      })
      .def("blend_alpha", [](const FittedEnsemble& e) {
        return py::make_tuple(e.targets[0].blend.alpha, e.targets[1].blend.alpha);
      });

  m.def("fit_ensemble", [](const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                           const std::vector<std::string>& groups, std::vector<std::string> names,
                           int gbm_estimators, int forest_estimators, int stack_folds,
                           std::uint64_t seed) {
    if (names.empty()) {
      for (Eigen::Index j = 0; j < x.cols(); ++j) names.push_back("x" + std::to_string(j));
    }
    EnsembleParams p;
    p.gbm.n_estimators = gbm_estimators;
    p.forest.n_estimators = forest_estimators;
    p.stack_folds = stack_folds;
    p.seed = seed;
    p.gbm.seed = seed;
    p.forest.seed = seed + 1;
    py::gil_scoped_release release;
    return fit_ensemble(x, y, groups, names, p).model;
  }, py::arg("x"), py::arg("y"), py::arg("groups"), py::arg("names") = std::vector<std::string>{},
     py::arg("gbm_estimators") = 300, py::arg("forest_estimators") = 100, py::arg("stack_folds") = 5,
     py::arg("seed") = 42);

  m.def("generate_synthetic", [](std::size_t n, std::uint64_t seed, double shift, double missing_rate,
                                 const std::filesystem::path& dir) {
    RunConfig cfg;
    SyntheticConfig s;
    s.n_patients = n;
    s.seed = seed;
    s.shift_magnitude = shift;
    s.missing_rate = missing_rate;
    cfg.synthetic = s;
    cfg.synthetic_seed_explicit = true;
    std::vector<std::string> out;
    for (const auto& p : run_generate(cfg, dir)) out.push_back(p.string());
    return out;
  }, py::arg("n_patients"), py::arg("seed"), py::arg("shift_magnitude"), py::arg("missing_rate"),
     py::arg("output_dir"));

  m.def("train", [](const std::filesystem::path& config, const std::optional<std::filesystem::path>& model_out) {
    auto cfg = load_run_config(config);
    set_max_threads(cfg.threads);
    TrainResult res;
    {
      py::gil_scoped_release release;
      res = run_train(cfg);
    }
    if (model_out) save_model(res.bundle, *model_out);
    return json_to_py(strip_timestamps(res.report));
  }, py::arg("config"), py::arg("model_out") = std::nullopt, "Runs the train command; returns the report.");

  m.def("predict_file", [](const std::filesystem::path& model, const std::filesystem::path& cohort) {
    const auto bundle = load_model(model);
    auto loaded = load_cohort(cohort, bundle.recipe.cohort_schema, "scoring");
    LeakagePatternSet patterns;
    patterns.patterns = bundle.recipe.leakage_patterns;
    const auto table = clean_cohort(loaded.table, patterns).table;
    return prediction_dict(run_predict(bundle, table));
  }, py::arg("model"), py::arg("cohort"));
}
