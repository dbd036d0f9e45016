#pragma once

#include <string>
#include <vector>

#include "bpstack/cohort.hpp"
#include "bpstack/rng.hpp"

namespace testutil {

inline bpstack::ColumnSpec numeric(std::string name,
                                   bpstack::DomainTag domain = bpstack::DomainTag::Derived) {
  bpstack::ColumnSpec c;
  c.name = std::move(name);
  c.domain = domain;
  return c;
}

// Targets fixed at a plausible (120, 80); one group per row unless given.
inline bpstack::CohortTable table(std::vector<bpstack::ColumnSpec> cols, const Eigen::MatrixXd& values,
                                  Eigen::MatrixXd targets = {}, std::vector<std::string> groups = {}) {
  const auto n = values.rows();
  if (targets.size() == 0) {
    targets.resize(n, 2);
    targets.col(0).setConstant(120.0);
    targets.col(1).setConstant(80.0);
  }
  if (groups.empty()) {
    for (Eigen::Index i = 0; i < n; ++i) groups.push_back("g" + std::to_string(i));
  }
  return bpstack::CohortTable(std::move(cols), values, targets, std::move(groups));
}

inline Eigen::VectorXd normals(bpstack::Rng& rng, Eigen::Index n, double sd = 1.0) {
  Eigen::VectorXd v(n);
  for (auto& x : v) x = rng.normal(0.0, sd);
  return v;
}

}  // namespace testutil

#include "bpstack/ensemble.hpp"

namespace testutil {

// Small ensemble so fits stay fast in tests.
inline bpstack::EnsembleParams fast_params(std::uint64_t seed = 42) {
  bpstack::EnsembleParams p;
  p.gbm.n_estimators = 40;
  p.gbm.seed = seed;
  p.forest.n_estimators = 10;
  p.forest.seed = seed + 1;
  p.stack_folds = 3;
  p.seed = seed;
  return p;
}

struct Regression {
  Eigen::MatrixXd x;
  Eigen::MatrixXd y;
  std::vector<std::string> groups;
  std::vector<std::string> names;
};

// Two informative columns, one noise column; y = (SBP, DBP).
inline Regression regression(bpstack::Rng& rng, Eigen::Index n, double noise = 3.0) {
  Regression r;
  r.x.resize(n, 3);
  for (auto& v : r.x.reshaped()) v = rng.normal();
  r.y.resize(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    r.y(i, 0) = 120.0 + 12.0 * r.x(i, 0) + 6.0 * r.x(i, 1) + rng.normal(0.0, noise);
    r.y(i, 1) = 75.0 + 6.0 * r.x(i, 0) - 4.0 * r.x(i, 1) + rng.normal(0.0, noise);
    r.groups.push_back("p" + std::to_string(i / 2));
  }
  r.names = {"signal_a", "signal_b", "noise"};
  return r;
}

}  // namespace testutil
