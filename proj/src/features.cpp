#include "bpstack/features.hpp"

#include <algorithm>
#include <boost/math/distributions/fisher_f.hpp>
#include <cctype>
#include <cmath>
#include <limits>
#include <numeric>

#include "bpstack/error.hpp"
#include "bpstack/parallel.hpp"

namespace bpstack {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}  // namespace

void FeaturePipelineConfig::validate() const {
  if (!(p_value_cutoff > 0.0) || !(vif_cutoff > 0.0) || !(mi_cutoff > 0.0)) {
    throw ConfigError("feature selection cutoffs must be positive");
  }
  if (target_feature_count == 0) throw ConfigError("target_feature_count must be >= 1");
}

std::string interaction_name(std::string_view a, std::string_view b) {
  return std::string(a) + "__x__" + std::string(b);
}

CohortTable build_interactions(const CohortTable& table,
                               const std::vector<std::pair<std::string, std::string>>& pairs) {
  auto schema = table.schema();
  Eigen::MatrixXd values(table.rows(), table.cols() + static_cast<Eigen::Index>(pairs.size()));
  values.leftCols(table.cols()) = table.values();
  Eigen::Index next = table.cols();
  for (const auto& [a, b] : pairs) {
    const auto ja = table.find(a);
    const auto jb = table.find(b);
    if (!ja || !jb) {
      throw ConfigError("interaction pair (" + a + ", " + b + ") references a missing column '" +
                        (ja ? b : a) + "'");
    }
    for (auto j : {*ja, *jb}) {
      if (table.schema()[static_cast<std::size_t>(j)].kind == ColumnKind::Categorical) {
        throw ConfigError("interaction pair (" + a + ", " + b + ") uses a categorical column");
      }
    }
    values.col(next) = table.values().col(*ja).cwiseProduct(table.values().col(*jb));
    ColumnSpec spec;
    spec.name = interaction_name(a, b);
    spec.domain = DomainTag::Derived;
    schema.push_back(std::move(spec));
    ++next;
  }
  return table.with_columns(std::move(schema), std::move(values));
}

CohortTable build_power_transforms(const CohortTable& table, const std::vector<std::string>& columns) {
  auto schema = table.schema();
  Eigen::MatrixXd values(table.rows(), table.cols() + 3 * static_cast<Eigen::Index>(columns.size()));
  values.leftCols(table.cols()) = table.values();
  Eigen::Index next = table.cols();
  for (const auto& name : columns) {
    const auto j = table.find(name);
    if (!j) throw ConfigError("power transform column '" + name + "' is missing");
    const auto src = table.values().col(*j);
    for (Eigen::Index i = 0; i < table.rows(); ++i) {
      if (src[i] < 0.0) {
        throw DataError("negative value " + std::to_string(src[i]) + " in transform column '" +
                        name + "' at row " + std::to_string(i));
      }
    }
    values.col(next) = src.array().square();
    values.col(next + 1) = src.array().sqrt();
    values.col(next + 2) = src.array().log1p();
    for (const char* suffix : {"__sq", "__sqrt", "__log1p"}) {
      ColumnSpec spec;
      spec.name = name + suffix;
      spec.domain = DomainTag::Derived;
      schema.push_back(std::move(spec));
    }
    next += 3;
  }
  return table.with_columns(std::move(schema), std::move(values));
}

double univariate_p_value(const Eigen::Ref<const Eigen::VectorXd>& x,
                          const Eigen::Ref<const Eigen::VectorXd>& y) {
  const auto n = x.size();
  if (n < 3) return 1.0;
  const Eigen::ArrayXd xc = x.array() - x.mean();
  const Eigen::ArrayXd yc = y.array() - y.mean();
  const double sxx = xc.square().sum();
  const double syy = yc.square().sum();
  if (!(sxx > 0.0) || !(syy > 0.0)) return 1.0;
  const double r2 = std::min(1.0, (xc * yc).sum() * (xc * yc).sum() / (sxx * syy));
  if (r2 >= 1.0 - 1e-15) return 0.0;
  const double f = r2 * static_cast<double>(n - 2) / (1.0 - r2);
  const boost::math::fisher_f_distribution<double> dist(1.0, static_cast<double>(n - 2));
  return boost::math::cdf(boost::math::complement(dist, f));
}

namespace {

bool is_constant(const Eigen::Ref<const Eigen::VectorXd>& v) {
  return v.size() == 0 || (v.array() == v[0]).all();
}

// Correlation matrix; constant columns get zero off-diagonal entries.
Eigen::MatrixXd correlation(const Eigen::Ref<const Eigen::MatrixXd>& x) {
  const Eigen::MatrixXd centred = x.rowwise() - x.colwise().mean();
  Eigen::VectorXd norms = centred.colwise().norm();
  Eigen::MatrixXd z = centred;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    if (norms[j] > 0.0 && !is_constant(x.col(j))) {
      z.col(j) /= norms[j];
    } else {
      z.col(j).setZero();
    }
  }
  Eigen::MatrixXd r = z.transpose() * z;
  r.diagonal().setOnes();
  return r;
}

double vif_from_correlation(const Eigen::MatrixXd& r, Eigen::Index j) {
  const Eigen::Index m = r.cols();
  if (m < 2) return 1.0;
  std::vector<Eigen::Index> others;
  for (Eigen::Index c = 0; c < m; ++c) {
    if (c != j) others.push_back(c);
  }
  const Eigen::MatrixXd r_oo = r(others, others);
  const Eigen::VectorXd r_oj = r(others, j);
  const Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(r_oo);
  const Eigen::VectorXd beta = cod.solve(r_oj);
  const double r2 = std::clamp(r_oj.dot(beta), 0.0, 1.0);
  if (r2 >= 1.0 - 1e-10) return kInf;
  return 1.0 / (1.0 - r2);
}

}  // namespace

std::vector<double> vif_all(const Eigen::Ref<const Eigen::MatrixXd>& x) {
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    if (is_constant(x.col(j))) {
      throw UndefinedVifError("VIF undefined for a constant column (index " + std::to_string(j) + ")");
    }
  }
  const Eigen::MatrixXd r = correlation(x);
  std::vector<double> out(static_cast<std::size_t>(x.cols()));
  parallel_for(out.size(), [&](std::size_t j) {
    out[j] = vif_from_correlation(r, static_cast<Eigen::Index>(j));
  });
  return out;
}

double compute_vif(const CohortTable& table, std::string_view column) {
  const Eigen::Index j = table.index_of(column);
  if (table.cols() < 2) throw DataError("compute_vif needs at least two feature columns");
  if (table.values().array().isNaN().any()) throw DataError("compute_vif needs a complete table");
  if (is_constant(table.values().col(j))) {
    throw UndefinedVifError("VIF undefined for constant column '" + std::string(column) + "'");
  }
  return vif_from_correlation(correlation(table.values()), j);
}

int mi_bin_count(Eigen::Index n) {
  return std::max(1, static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n) / 5.0))));
}

namespace {

// Equal-frequency bin per element; tied values share the bin of their first
// sorted position.
std::vector<int> equal_frequency_bins(const Eigen::Ref<const Eigen::VectorXd>& v, int bins) {
  const auto n = static_cast<std::size_t>(v.size());
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return v[static_cast<Eigen::Index>(a)] < v[static_cast<Eigen::Index>(b)];
  });
  std::vector<int> out(n);
  int current = 0;
  for (std::size_t p = 0; p < n; ++p) {
    const std::size_t idx = order[p];
    if (p == 0 || v[static_cast<Eigen::Index>(idx)] != v[static_cast<Eigen::Index>(order[p - 1])]) {
      current = static_cast<int>(p * static_cast<std::size_t>(bins) / n);
    }
    out[idx] = current;
  }
  return out;
}

// Plug-in entropy with the Miller-Madow (m - 1) / 2n correction.
double mm_entropy(const std::vector<double>& counts, double n) {
  double h = 0.0;
  int occupied = 0;
  for (double c : counts) {
    if (c <= 0.0) continue;
    ++occupied;
    const double p = c / n;
    h -= p * std::log(p);
  }
  return h + static_cast<double>(occupied - 1) / (2.0 * n);
}

}  // namespace

double estimate_mutual_information(const Eigen::Ref<const Eigen::VectorXd>& x,
                                   const Eigen::Ref<const Eigen::VectorXd>& y) {
  if (x.size() != y.size()) throw DataError("mutual information: length mismatch");
  if (x.size() < 2 || is_constant(x) || is_constant(y)) return 0.0;
  const int bins = mi_bin_count(x.size());
  const auto bx = equal_frequency_bins(x, bins);
  const auto by = equal_frequency_bins(y, bins);
  const auto b = static_cast<std::size_t>(bins);
  std::vector<double> cx(b, 0.0), cy(b, 0.0), cxy(b * b, 0.0);
  for (std::size_t i = 0; i < bx.size(); ++i) {
    cx[static_cast<std::size_t>(bx[i])] += 1.0;
    cy[static_cast<std::size_t>(by[i])] += 1.0;
    cxy[static_cast<std::size_t>(bx[i]) * b + static_cast<std::size_t>(by[i])] += 1.0;
  }
  const auto n = static_cast<double>(x.size());
  const double mi = mm_entropy(cx, n) + mm_entropy(cy, n) - mm_entropy(cxy, n);
  return std::max(0.0, mi);
}

SelectionResult select_features(const CohortTable& table, const FeaturePipelineConfig& cfg) {
  cfg.validate();
  if (table.values().array().isNaN().any()) {
    throw DataError("select_features requires a complete (imputed) table");
  }
  SelectionAudit audit;
  std::vector<Eigen::Index> alive;
  for (Eigen::Index j = 0; j < table.cols(); ++j) {
    const auto& spec = table.schema()[static_cast<std::size_t>(j)];
    if (spec.domain == DomainTag::Id || spec.domain == DomainTag::Target) continue;
    ++audit.candidates;
    if (!cfg.domain_whitelist.empty() &&
        std::find(cfg.domain_whitelist.begin(), cfg.domain_whitelist.end(), spec.domain) ==
            cfg.domain_whitelist.end()) {
      audit.drops.push_back({spec.name, "whitelist", 0.0});
      continue;
    }
    alive.push_back(j);
  }
  audit.after_whitelist = alive.size();
  const Eigen::VectorXd sbp = table.target(Target::Sbp);
  const Eigen::VectorXd dbp = table.target(Target::Dbp);
  auto name_of = [&](Eigen::Index j) { return table.schema()[static_cast<std::size_t>(j)].name; };

  // Stage 1: univariate screen, minimum p-value over the two targets.
  {
    std::vector<double> p(alive.size());
    parallel_for(alive.size(), [&](std::size_t k) {
      const auto col = table.values().col(alive[k]);
      p[k] = std::min(univariate_p_value(col, sbp), univariate_p_value(col, dbp));
    });
    std::vector<Eigen::Index> kept;
    for (std::size_t k = 0; k < alive.size(); ++k) {
      if (p[k] < cfg.p_value_cutoff) {
        kept.push_back(alive[k]);
      } else {
        audit.drops.push_back({name_of(alive[k]), "univariate", p[k]});
      }
    }
    alive = std::move(kept);
  }
  audit.after_univariate = alive.size();

  // Stage 2: iterative VIF elimination, ties dropped first-listed.
  while (alive.size() >= 2) {
    const auto vifs = vif_all(table.values()(Eigen::all, alive));
    std::size_t worst = 0;
    for (std::size_t k = 1; k < vifs.size(); ++k) {
      if (vifs[k] > vifs[worst]) worst = k;
    }
    if (vifs[worst] < cfg.vif_cutoff) break;
    audit.drops.push_back({name_of(alive[worst]), "vif", vifs[worst]});
    alive.erase(alive.begin() + static_cast<std::ptrdiff_t>(worst));
  }
  audit.after_vif = alive.size();

  // Stage 3: mutual information against either target.
  std::vector<double> mi(alive.size());
  parallel_for(alive.size(), [&](std::size_t k) {
    const auto col = table.values().col(alive[k]);
    mi[k] = std::max(estimate_mutual_information(col, sbp), estimate_mutual_information(col, dbp));
  });
  {
    std::vector<Eigen::Index> kept;
    std::vector<double> kept_mi;
    for (std::size_t k = 0; k < alive.size(); ++k) {
      if (mi[k] > cfg.mi_cutoff) {
        kept.push_back(alive[k]);
        kept_mi.push_back(mi[k]);
      } else {
        audit.drops.push_back({name_of(alive[k]), "mutual_information", mi[k]});
      }
    }
    alive = std::move(kept);
    mi = std::move(kept_mi);
  }
  audit.after_mutual_information = alive.size();

  // Stage 4: cap by MI, preserving schema order among the survivors.
  if (alive.size() > cfg.target_feature_count) {
    std::vector<std::size_t> order(alive.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return mi[a] > mi[b]; });
    std::vector<bool> keep(alive.size(), false);
    for (std::size_t r = 0; r < cfg.target_feature_count; ++r) keep[order[r]] = true;
    std::vector<Eigen::Index> kept;
    for (std::size_t k = 0; k < alive.size(); ++k) {
      if (keep[k]) {
        kept.push_back(alive[k]);
      } else {
        audit.drops.push_back({name_of(alive[k]), "cap", mi[k]});
      }
    }
    alive = std::move(kept);
  }
  if (alive.empty()) {
    throw SelectionError(
        "feature selection eliminated every feature; relax p_value_cutoff, vif_cutoff or mi_cutoff");
  }
  for (auto j : alive) audit.selected.push_back(name_of(j));
  return {table.select_columns(alive), std::move(audit)};
}

std::string normalize_name(std::string_view name) {
  std::string out;
  bool pending_sep = false;
  for (unsigned char c : name) {
    if (std::isalnum(c)) {
      if (pending_sep && !out.empty()) out.push_back('_');
      pending_sep = false;
      out.push_back(static_cast<char>(std::tolower(c)));
    } else {
      pending_sep = true;
    }
  }
  return out;
}

AlignmentResult align_features(const CohortTable& external,
                               const std::vector<ColumnSpec>& reference_schema,
                               const std::map<std::string, double>& clinical_defaults,
                               const std::map<std::string, double>& training_medians) {
  if (reference_schema.empty()) throw ConfigError("align_features: empty reference schema");
  std::map<std::string, Eigen::Index> by_norm;
  for (Eigen::Index j = 0; j < external.cols(); ++j) {
    by_norm.emplace(normalize_name(external.schema()[static_cast<std::size_t>(j)].name), j);
  }
  AlignmentResult res;
  const auto d = static_cast<Eigen::Index>(reference_schema.size());
  Eigen::MatrixXd values(external.rows(), d);
  std::vector<bool> used(static_cast<std::size_t>(external.cols()), false);
  for (Eigen::Index k = 0; k < d; ++k) {
    const auto& ref = reference_schema[static_cast<std::size_t>(k)];
    if (auto it = by_norm.find(normalize_name(ref.name)); it != by_norm.end()) {
      values.col(k) = external.values().col(it->second);
      used[static_cast<std::size_t>(it->second)] = true;
      res.map.direct_matches[external.schema()[static_cast<std::size_t>(it->second)].name] = ref.name;
      continue;
    }
    double fill = kNaN;
    if (auto it = clinical_defaults.find(ref.name); it != clinical_defaults.end()) {
      fill = it->second;
    } else if (auto m = training_medians.find(ref.name); m != training_medians.end()) {
      fill = m->second;
    } else {
      fill = 0.0;
    }
    values.col(k).setConstant(fill);
    res.map.defaulted[ref.name] = fill;
  }
  for (Eigen::Index j = 0; j < external.cols(); ++j) {
    const auto& spec = external.schema()[static_cast<std::size_t>(j)];
    if (!used[static_cast<std::size_t>(j)] && spec.domain != DomainTag::Id) {
      res.map.unmatched_external.push_back(spec.name);
    }
  }
  res.map.coverage = static_cast<double>(res.map.direct_matches.size()) / static_cast<double>(d);
  res.table = external.with_columns(reference_schema, std::move(values));
  return res;
}

}  // namespace bpstack
