// One PASS/FAIL line per acceptance criterion; non-zero exit if any fails.
#include <spdlog/spdlog.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <numbers>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "bpstack/cv.hpp"
#include "bpstack/error.hpp"
#include "bpstack/evaluate.hpp"
#include "bpstack/impute.hpp"
#include "bpstack/leakage.hpp"
#include "bpstack/parallel.hpp"
#include "bpstack/pipeline.hpp"
#include "bpstack/quantile.hpp"
#include "bpstack/report.hpp"
#include "bpstack/rng.hpp"
#include "bpstack/stats.hpp"
#include "bpstack/trees.hpp"

using namespace bpstack;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      if (!detail.empty()) detail += "; ";
      detail += what;
    }
  }
};

std::string num(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

CohortTable make_table(const std::vector<std::string>& names, const Eigen::MatrixXd& v,
                       Eigen::MatrixXd targets = {}) {
  std::vector<ColumnSpec> cols;
  for (const auto& n : names) {
    ColumnSpec c;
    c.name = n;
    cols.push_back(c);
  }
  if (targets.size() == 0) {
    targets.resize(v.rows(), 2);
    targets.col(0).setConstant(120.0);
    targets.col(1).setConstant(80.0);
  }
  std::vector<std::string> groups;
  for (Eigen::Index i = 0; i < v.rows(); ++i) groups.push_back("g" + std::to_string(i));
  return CohortTable(cols, v, targets, groups);
}

Eigen::VectorXd normals(Rng& rng, Eigen::Index n, double sd = 1.0) {
  Eigen::VectorXd v(n);
  for (auto& x : v) x = rng.normal(0.0, sd);
  return v;
}

// Friedman #1 on ten uniform inputs, five of them irrelevant; both targets
// share the function with independent unit noise.
void friedman(Rng& rng, Eigen::Index n, Eigen::MatrixXd& x, Eigen::MatrixXd& y, Eigen::VectorXd& clean) {
  x.resize(n, 10);
  for (auto& v : x.reshaped()) v = rng.uniform(0.0, 1.0);
  clean.resize(n);
  y.resize(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    clean[i] = 10.0 * std::sin(std::numbers::pi * x(i, 0) * x(i, 1)) + 20.0 * std::pow(x(i, 2) - 0.5, 2) +
               10.0 * x(i, 3) + 5.0 * x(i, 4);
    y(i, 0) = 100.0 + clean[i] + rng.normal();
    y(i, 1) = 70.0 + clean[i] + rng.normal();
  }
}

// ---------------------------------------------------------------------------

Outcome c1_leakage() {
  Outcome o;
  const std::vector<std::string> planted{
      "SBP_MEAN_1H", "sbp_mean",     "nibp_sbp_mean_24h", "dbp_mean",      "DBP_Mean_6h",     "map_mean",
      "art_MAP_MEAN", "verify",      "VERIFY_FLAG",       "bp_verify_src", "xverifyx",        "sbp_mean2",
      "dbp_mean_last", "Map_Mean_Hr", "cuff_verify",      "verify_sbp",    "lagged_dbp_mean"};
  std::vector<std::string> names;
  std::set<std::string> expect(planted.begin(), planted.end());
  std::size_t next = 0;
  for (int j = 0; j < 200; ++j) {
    if (j % 11 == 5 && next < planted.size()) {
      names.push_back(planted[next++]);
    } else {
      names.push_back("feature_" + std::to_string(j) + (j % 3 ? "_sbp_base" : "_mean_hr"));
    }
  }
  while (next < planted.size()) names[static_cast<std::size_t>(200 - (planted.size() - next))] = planted[next++];
  o.require(names.size() == 200 && expect.size() == 17, "fixture shape");
  const auto t = make_table(names, Eigen::MatrixXd::Ones(4, 200));
  const auto res = remove_leakage(t);
  const std::set<std::string> removed(res.report.removed_columns.begin(), res.report.removed_columns.end());
  o.require(removed == expect, "removed set differs (" + std::to_string(removed.size()) + " removed)");
  o.require(res.table.cols() == 183, "183 survivors");
  o.require(res.report.post_validation_matches == 0, "post-validation zero");
  const auto again = remove_leakage(res.table);
  o.require(again.report.removed_columns.empty() && again.table.column_names() == res.table.column_names(),
            "idempotence");
  o.detail = o.pass ? "17/200 removed, idempotent" : o.detail;
  return o;
}

Outcome c2_pinball() {
  Outcome o;
  Rng rng(2024);
  double worst = 0.0;
  for (int rep = 0; rep < 50; ++rep) {
    const auto n = static_cast<Eigen::Index>(5 + rng.index(496));
    const double scale = rng.uniform(0.1, 100.0);
    Eigen::VectorXd y(n);
    for (auto& v : y) v = rng.normal(rng.uniform(-50, 50), scale);
    std::vector<double> sorted(y.data(), y.data() + n);
    std::sort(sorted.begin(), sorted.end());
    const double data_scale = std::max(stats::sd(sorted), 1e-12);
    for (double tau : {0.1, 0.5, 0.9}) {
      // Minimisers of the summed pinball loss: y_(ceil(tau n)) when tau n is
      // fractional, the closed gap [y_(tau n), y_(tau n + 1)] when integral.
      const double k = tau * static_cast<double>(n);
      double lo, hi;
      if (std::abs(k - std::round(k)) < 1e-9) {
        const auto r = static_cast<std::size_t>(std::llround(k));
        lo = sorted[r - 1];
        hi = sorted[std::min<std::size_t>(r, sorted.size() - 1)];
      } else {
        lo = hi = sorted[static_cast<std::size_t>(std::ceil(k)) - 1];
      }
      const auto q = fit_quantile(Eigen::MatrixXd(n, 0), y, tau, 0.0);
      const double gap = std::max({0.0, lo - q.intercept, q.intercept - hi}) / data_scale;
      worst = std::max(worst, gap);
    }
  }
  o.require(worst <= 1e-4, "max deviation " + std::to_string(worst));
  o.detail = "max deviation / sd = " + num(worst, 8) + (o.pass ? "" : " " + o.detail);
  return o;
}

Outcome c3_coverage() {
  Outcome o;
  const double sigma[2] = {8.0, 5.0};
  std::string summary;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed * 7919);
    const Eigen::Index n = 2000;
    Eigen::MatrixXd x(n, 5), y(n, 2);
    for (auto& v : x.reshaped()) v = rng.normal();
    std::vector<std::string> groups, names{"a", "b", "c", "d", "e"};
    for (Eigen::Index i = 0; i < n; ++i) {
      y(i, 0) = 120.0 + 10.0 * x(i, 0) - 6.0 * x(i, 1) + 3.0 * x(i, 2) + rng.normal(0.0, sigma[0]);
      y(i, 1) = 75.0 + 5.0 * x(i, 0) + 4.0 * x(i, 3) + rng.normal(0.0, sigma[1]);
      groups.push_back("p" + std::to_string(i));
    }
    EnsembleParams p;
    p.seed = seed;
    CvOptions opts;
    opts.point_models = false;
    opts.seed = seed;
    const auto cv = cross_validate(x, y, groups, names, p, opts);
    for (int t = 0; t < 2; ++t) {
      const auto& tp = cv.oof.targets[static_cast<std::size_t>(t)];
      const double cov = coverage_probability(y.col(t), tp.lower, tp.upper);
      // 80% normal interval width: 2 * z_0.9 * sigma
      const double expect_w = 2.0 * stats::normal_quantile(0.9) * sigma[t];
      const double w = tp.width.mean();
      o.require(cov >= 0.75 && cov <= 0.85, "seed " + std::to_string(seed) + " coverage " + num(cov));
      o.require(std::abs(w / expect_w - 1.0) <= 0.15, "seed " + std::to_string(seed) + " width " + num(w));
      summary += (summary.empty() ? "" : " ") + num(cov, 3);
    }
  }
  o.detail = "coverage " + summary + (o.pass ? "" : " | " + o.detail);
  return o;
}

Outcome c4_gates() {
  Outcome o;
  o.require(bhs_grade(57.0, 91.1, 99.0) == BhsGrade::B, "BHS (57.0, 91.1, 99.0) != B");
  o.require(aami_check(-0.15, 6.03), "AAMI (-0.15, 6.03) failed");
  o.detail = o.pass ? "BHS B, AAMI pass" : o.detail;
  return o;
}

Outcome c5_generalizability() {
  Outcome o;
  const double a = generalizability(6.03, 7.84);
  const double b = generalizability(7.13, 9.31);
  o.require(std::abs(a - 30.0) < 0.1, "(6.03, 7.84) -> " + num(a, 3));
  o.require(std::abs(b - 30.6) < 0.1, "(7.13, 9.31) -> " + num(b, 3));
  o.detail = "+" + num(a, 2) + "%, +" + num(b, 2) + "%" + (o.pass ? "" : " | " + o.detail);
  return o;
}

RunConfig synthetic_run(std::uint64_t seed, std::size_t n, double shift) {
  auto cfg = parse_run_config("synthetic: {n_patients: " + std::to_string(n) + "}\n");
  cfg.seed = seed;
  cfg.synthetic->shift_magnitude = shift;
  cfg.model.gbm.n_estimators = 150;
  cfg.model.forest.n_estimators = 40;
  cfg.model.stack_folds = 3;
  cfg.evaluation.bootstrap_resamples = 200;
  cfg.evaluation.permutation_repeats = 1;
  cfg.propagate_seed();
  return cfg;
}

Outcome c6_degradation() {
  Outcome o;
  double prev[2] = {-1e300, -1e300};
  std::string summary;
  for (double shift : {0.0, 0.5, 1.0, 2.0}) {
    const auto res = run_train(synthetic_run(11, 2000, shift));
    const auto& ext = res.report.at("external");
    for (int t = 0; t < 2; ++t) {
      const double g = ext.at(t == 0 ? "sbp" : "dbp").at("generalizability_pct").get<double>();
      o.require(g >= prev[t], "non-monotone at shift " + num(shift, 1));
      if (shift == 0.0) o.require(std::abs(g) < 5.0, "shift 0 degradation " + num(g, 2) + "%");
      prev[t] = g;
      summary += (t == 0 ? " [" : "/") + num(g, 1) + (t == 1 ? "]" : "");
    }
  }
  o.detail = "SBP/DBP %:" + summary + (o.pass ? "" : " | " + o.detail);
  return o;
}

Outcome c7_kl() {
  Outcome o;
  const double two_bin = kl_from_histograms({0.5, 0.5}, {0.75, 0.25});
  o.require(std::abs(two_bin - 0.1438) < 1e-3, "two-bin " + num(two_bin));
  Rng rng(77);
  const auto p = normals(rng, 2000);
  const double self = kl_divergence(p, p);
  o.require(self < 0.01, "self KL " + num(self));
  double prev = -1.0;
  std::string summary;
  for (double shift : {0.0, 0.5, 1.0, 2.0}) {
    SyntheticConfig s;
    s.n_patients = 2000;
    s.seed = 5;
    s.shift_magnitude = shift;
    const auto pair = generate_synthetic_pair(s);
    const double kl = shift_profile(pair.internal, pair.external).mean_kl;
    o.require(kl > prev, "mean KL not increasing at shift " + num(shift, 1));
    prev = kl;
    summary += " " + num(kl, 3);
  }
  o.detail = "two-bin " + num(two_bin) + ", self " + num(self, 5) + ", mean KL" + summary +
             (o.pass ? "" : " | " + o.detail);
  return o;
}

Outcome c8_groups() {
  Outcome o;
  Rng rng(8);
  for (int rep = 0; rep < 100; ++rep) {
    const auto n = 10 + rng.index(500);
    const auto g = 2 + rng.index(120);
    std::vector<std::string> groups;
    for (std::size_t i = 0; i < n; ++i) groups.push_back("p" + std::to_string(rng.index(g)));
    std::set<std::string> distinct(groups.begin(), groups.end());
    if (distinct.size() < 2) groups[0] = "other";
    const int k = 2 + static_cast<int>(rng.index(9));
    const auto plan = plan_group_kfold(groups, k, rep);
    std::vector<int> seen(n, 0);
    std::map<std::string, std::set<int>> folds_of;
    for (int f = 0; f < plan.k; ++f) {
      for (auto r : plan.test_rows(f)) {
        ++seen[static_cast<std::size_t>(r)];
        folds_of[groups[static_cast<std::size_t>(r)]].insert(f);
      }
    }
    for (int s : seen) o.require(s == 1, "row not in exactly one fold (rep " + std::to_string(rep) + ")");
    for (const auto& [name, fs] : folds_of) o.require(fs.size() == 1, "group " + name + " spans folds");
    if (!o.pass) break;
  }
  o.detail = o.pass ? "100 structures clean" : o.detail;
  return o;
}

Outcome c9_ensemble() {
  Outcome o;
  Rng rng(99);
  Eigen::MatrixXd x, y, xt, yt;
  Eigen::VectorXd clean, clean_t;
  friedman(rng, 1500, x, y, clean);
  friedman(rng, 1000, xt, yt, clean_t);
  std::vector<std::string> groups, names;
  for (Eigen::Index i = 0; i < x.rows(); ++i) groups.push_back("p" + std::to_string(i));
  for (int j = 0; j < 10; ++j) names.push_back("x" + std::to_string(j));
  EnsembleParams p;
  const auto fit = fit_ensemble(x, y, groups, names, p);
  const auto pred = predict_with_intervals(fit.model, xt);
  const auto cv = cross_validate(x, y, groups, names, p, CvOptions{});
  std::string summary;
  for (int t = 0; t < 2; ++t) {
    const auto ts = static_cast<std::size_t>(t);
    const double r2 = core_metrics(yt.col(t), pred.targets[ts].point).r2;
    o.require(r2 > 0.8, "test R2 " + num(r2, 3));
    const double best_base = std::min(cv.rmse_primary[ts], cv.rmse_forest[ts]);
    o.require(cv.rmse[ts] <= 1.01 * best_base, "blend CV RMSE " + num(cv.rmse[ts], 3) + " vs base " + num(best_base, 3));
    const auto& diag = fit.diagnostics[ts];
    const double a = fit.model.targets[ts].blend.alpha;
    auto mse = [&](double alpha) {
      return (y.col(t) - alpha * diag.oof_primary - (1.0 - alpha) * diag.oof_stacked).squaredNorm();
    };
    o.require(mse(a) <= std::min(mse(0.0), mse(1.0)) * (1.0 + 1e-12), "blend alpha not optimal");
    summary += (t ? ", " : "") + std::string(t ? "DBP" : "SBP") + " R2 " + num(r2, 3) + " blend " +
               num(cv.rmse[ts], 3) + " best base " + num(best_base, 3);
  }
  o.detail = summary + (o.pass ? "" : " | " + o.detail);
  return o;
}

Outcome c10_descent() {
  Outcome o;
  Rng rng(10);
  Eigen::MatrixXd x, y;
  Eigen::VectorXd clean;
  friedman(rng, 800, x, y, clean);
  TreeParams p;
  p.n_estimators = 200;
  p.subsample = 1.0;
  p.learning_rate = 0.1;
  std::vector<double> mse;
  fit_gbm(x, y.col(0), p, &mse);
  o.require(mse.size() == 201, "stage count");
  int violations = 0;
  for (std::size_t m = 1; m < mse.size(); ++m) violations += mse[m] > mse[m - 1];
  o.require(violations == 0, std::to_string(violations) + " increasing stages");
  o.detail = "MSE " + num(mse.front(), 2) + " -> " + num(mse.back(), 3) + (o.pass ? "" : " | " + o.detail);
  return o;
}

Outcome c11_imputation() {
  Outcome o;
  Rng rng(11);
  const Eigen::Index n = 300;
  Eigen::MatrixXd v(n, 4);
  for (Eigen::Index i = 0; i < n; ++i) {
    v(i, 0) = rng.normal();
    v(i, 1) = rng.normal();
    v(i, 2) = rng.normal();
    v(i, 3) = 2.0 - 1.5 * v(i, 0) + 0.5 * v(i, 1) + 3.0 * v(i, 2);
  }
  Eigen::MatrixXd holed = v;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (rng.uniform() < 0.2) holed(i, 3) = std::nan("");
  }
  const std::vector<std::string> names{"a", "b", "c", "d"};
  const auto t = make_table(names, holed);
  ImputePolicy policy;
  const auto mice = mice_impute(t, policy);
  const double err = (mice.table.values() - v).cwiseAbs().maxCoeff();
  o.require(err <= 1e-6, "MICE max error " + std::to_string(err));

  const auto full = make_table(names, v);
  const auto same = mice_impute(full, policy).table.values();
  o.require(std::memcmp(same.data(), v.data(), sizeof(double) * static_cast<std::size_t>(v.size())) == 0,
            "zero-missing not a bitwise no-op");

  Eigen::MatrixXd holed2 = v;
  for (Eigen::Index i = 0; i < n; i += 5) holed2(i, 0) = holed2(i, 3) = std::nan("");
  const auto t2 = make_table(names, holed2);
  const auto m2 = mice_impute(t2, policy).table;
  const auto k2 = knn_impute(t2, policy.knn_k);
  Eigen::MatrixXd corrupted = m2.values();
  const double iqr = stats::iqr(stats::finite_values(holed2.col(0)));
  for (Eigen::Index i = 0; i < n; i += 5) corrupted(i, 0) += 3.0 * iqr;
  const auto audit = validate_imputation(t2, m2.with_columns(m2.schema(), corrupted), k2);
  o.require(audit.columns[0].flagged, "corrupted column not flagged");
  o.require(audit.columns[0].disagreement == audit.max_disagreement, "corrupted column not the worst");
  o.detail = "MICE err " + num(err, 10) + ", corrupted disagreement " + num(audit.columns[0].disagreement, 2) +
             (o.pass ? "" : " | " + o.detail);
  return o;
}

Outcome c12_equity() {
  Outcome o;
  const auto a = equity_ratio({{"g1", 6.0}, {"g2", 6.48}});
  const auto b = equity_ratio({{"g1", 6.0}, {"g2", 7.38}});
  auto two = [](double r) { return std::round(r * 100.0) / 100.0; };
  o.require(two(a.ratio) == 1.08 && a.pass, "{6.0, 6.48} -> " + num(a.ratio, 4));
  o.require(two(b.ratio) == 1.23 && !b.pass, "{6.0, 7.38} -> " + num(b.ratio, 4));
  o.detail = num(a.ratio, 2) + " pass, " + num(b.ratio, 2) + " fail" + (o.pass ? "" : " | " + o.detail);
  return o;
}

Outcome c13_determinism() {
  Outcome o;
  auto cfg = parse_run_config(R"(
seed: 13
synthetic: {n_patients: 500, shift_magnitude: 1.0}
model:
  gbm: {n_estimators: 60}
  forest: {n_estimators: 20}
  stack_folds: 3
tuning: {method: bayes, budget: 3, initial_points: 2}
evaluation: {bootstrap_resamples: 200, permutation_repeats: 2}
stratified: {enabled: true}
ablation: {enabled: true}
)");
  const auto max_threads = std::max<std::size_t>(4, std::thread::hardware_concurrency());
  std::vector<std::string> reports, models;
  for (std::size_t threads : {std::size_t{1}, std::size_t{1}, max_threads, max_threads}) {
    cfg.threads = threads;
    set_max_threads(threads);
    const auto res = run_train(cfg);
    reports.push_back(strip_timestamps(res.report).dump());
    models.push_back(bundle_to_json(res.bundle).dump());
  }
  set_max_threads(0);
  for (std::size_t r = 1; r < reports.size(); ++r) {
    o.require(reports[r] == reports[0], "report " + std::to_string(r) + " differs");
    o.require(models[r] == models[0], "model " + std::to_string(r) + " differs");
  }
  o.detail = "4 runs (1, 1, " + std::to_string(max_threads) + ", " + std::to_string(max_threads) +
             " threads), " + std::to_string(reports[0].size()) + " report bytes" + (o.pass ? "" : " | " + o.detail);
  return o;
}

struct Criterion {
  int id;
  const char* name;
  double limit_s;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_level(spdlog::level::err);
  std::set<int> only;
  for (int a = 1; a < argc; ++a) only.insert(std::atoi(argv[a]));

  const std::vector<Criterion> criteria{
      {1, "leakage removal exactness", 1.0, c1_leakage},
      {2, "pinball optimality oracle", 10.0, c2_pinball},
      {3, "coverage calibration", 300.0, c3_coverage},
      {4, "clinical gates logic", 1.0, c4_gates},
      {5, "generalizability arithmetic", 1.0, c5_generalizability},
      {6, "degradation monotonicity", 600.0, c6_degradation},
      {7, "KL oracle", 5.0, c7_kl},
      {8, "group CV integrity", 5.0, c8_groups},
      {9, "ensemble learning power", 300.0, c9_ensemble},
      {10, "GBM descent property", 30.0, c10_descent},
      {11, "imputation validation", 30.0, c11_imputation},
      {12, "equity ratio gates", 1.0, c12_equity},
      {13, "end-to-end determinism", 600.0, c13_determinism},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && !only.count(c.id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (secs > c.limit_s) {
      o.pass = false;
      o.detail += " | runtime " + num(secs, 2) + " s over " + num(c.limit_s, 0) + " s";
    }
    failures += o.pass ? 0 : 1;
    std::printf("%s criterion %d (%s) [%.2f s]: %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, secs,
                o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
