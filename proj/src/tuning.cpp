#include "bpstack/tuning.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "bpstack/error.hpp"
#include "bpstack/parallel.hpp"
#include "bpstack/rng.hpp"
#include "bpstack/stats.hpp"

namespace bpstack {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr std::array<double, 6> kLengthGrid{0.05, 0.1, 0.2, 0.4, 0.8, 1.6};
}  // namespace

SearchSpace SearchSpace::gbm_default() {
  SearchSpace s;
  s.dims.push_back({"n_estimators", 50, 500, true, false, {100, 300}});
  s.dims.push_back({"learning_rate", 0.001, 0.2, false, true, {0.05, 0.1}});
  s.dims.push_back({"max_depth", 3, 10, true, false, {3, 5}});
  return s;
}

void SearchSpace::validate() const {
  if (dims.empty()) throw ConfigError("search space has no dimensions");
  for (const auto& d : dims) {
    if (!(d.lo <= d.hi)) throw ConfigError("search dimension '" + d.name + "' has lo > hi");
    if (d.log_scale && !(d.lo > 0.0)) {
      throw ConfigError("log-scale dimension '" + d.name + "' needs a positive lower bound");
    }
    for (double g : d.grid) {
      if (g < d.lo || g > d.hi) {
        throw ConfigError("grid value for '" + d.name + "' lies outside its range");
      }
    }
  }
}

std::vector<double> SearchSpace::from_unit(const Eigen::Ref<const Eigen::VectorXd>& u) const {
  std::vector<double> out(dims.size());
  for (std::size_t k = 0; k < dims.size(); ++k) {
    const auto& d = dims[k];
    const double t = std::clamp(u[static_cast<Eigen::Index>(k)], 0.0, 1.0);
    double v = d.log_scale ? std::exp(std::log(d.lo) + t * (std::log(d.hi) - std::log(d.lo)))
                           : d.lo + t * (d.hi - d.lo);
    if (d.integer) v = std::round(v);
    out[k] = std::clamp(v, d.lo, d.hi);
  }
  return out;
}

Eigen::VectorXd SearchSpace::to_unit(const std::vector<double>& point) const {
  Eigen::VectorXd u(static_cast<Eigen::Index>(dims.size()));
  for (std::size_t k = 0; k < dims.size(); ++k) {
    const auto& d = dims[k];
    double t = 0.0;
    if (d.hi > d.lo) {
      t = d.log_scale ? (std::log(point[k]) - std::log(d.lo)) / (std::log(d.hi) - std::log(d.lo))
                      : (point[k] - d.lo) / (d.hi - d.lo);
    }
    u[static_cast<Eigen::Index>(k)] = t;
  }
  return u;
}

TreeParams apply_gbm_point(TreeParams base, const std::vector<double>& point) {
  if (point.size() != 3) throw ConfigError("boosting search point needs three coordinates");
  base.n_estimators = static_cast<int>(std::lround(point[0]));
  base.learning_rate = point[1];
  base.max_depth = static_cast<int>(std::lround(point[2]));
  return base;
}

namespace {

double safe_eval(const Objective& f, const std::vector<double>& point) {
  try {
    const double v = f(point);
    return std::isfinite(v) ? v : kInf;
  } catch (const std::exception&) {
    return kInf;
  }
}

void finish(TuningResult& r) {
  r.best_value = kInf;
  r.best_point = r.trials.front().point;
  for (const auto& t : r.trials) {
    if (t.value < r.best_value) {
      r.best_value = t.value;
      r.best_point = t.point;
    }
  }
}

}  // namespace

TuningResult tune_grid(const SearchSpace& space, const Objective& objective) {
  space.validate();
  std::vector<std::vector<double>> axes;
  for (const auto& d : space.dims) {
    if (!d.grid.empty()) {
      axes.push_back(d.grid);
    } else {
      axes.emplace_back();
      auto& ax = axes.back();
      for (double t : {0.0, 0.5, 1.0}) {
        double v = d.log_scale ? std::exp(std::log(d.lo) + t * (std::log(d.hi) - std::log(d.lo)))
                               : d.lo + t * (d.hi - d.lo);
        if (d.integer) v = std::round(v);
        if (std::find(ax.begin(), ax.end(), v) == ax.end()) ax.push_back(v);
      }
    }
  }
  std::vector<std::vector<double>> lattice{{}};
  for (const auto& ax : axes) {
    std::vector<std::vector<double>> next;
    for (const auto& prefix : lattice) {
      for (double v : ax) {
        auto p = prefix;
        p.push_back(v);
        next.push_back(std::move(p));
      }
    }
    lattice = std::move(next);
  }
  TuningResult r;
  r.trials.resize(lattice.size());
  parallel_for(lattice.size(), [&](std::size_t i) {
    r.trials[i] = {lattice[i], safe_eval(objective, lattice[i])};
  });
  finish(r);
  return r;
}

double expected_improvement(double mean, double sd, double best, double xi) {
  const double imp = best - mean - xi;
  if (!(sd > 0.0)) return std::max(imp, 0.0);
  const double z = imp / sd;
  return imp * stats::normal_cdf(z) + sd * stats::normal_pdf(z);
}

double GaussianProcess::kernel(const Eigen::Ref<const Eigen::RowVectorXd>& a,
                               const Eigen::Ref<const Eigen::RowVectorXd>& b) const {
  return std::exp(-0.5 * ((a - b).array() / length_.transpose().array()).square().sum());
}

void GaussianProcess::fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double jitter) {
  if (x.rows() != y.size() || x.rows() == 0) throw DataError("GP fit: bad shapes");
  x_ = x;
  jitter_ = jitter;
  y_mean_ = y.mean();
  y_scale_ = std::sqrt((y.array() - y_mean_).square().mean());
  if (!(y_scale_ > 0.0)) y_scale_ = 1.0;
  const Eigen::VectorXd ys = (y.array() - y_mean_) / y_scale_;
  const auto d = static_cast<std::size_t>(x.cols());
  const auto n = x.rows();

  // Full grid for up to three dimensions, a shared scale beyond that.
  std::vector<Eigen::VectorXd> combos;
  if (d <= 3) {
    std::vector<std::size_t> idx(d, 0);
    while (true) {
      Eigen::VectorXd l(static_cast<Eigen::Index>(d));
      for (std::size_t k = 0; k < d; ++k) l[static_cast<Eigen::Index>(k)] = kLengthGrid[idx[k]];
      combos.push_back(l);
      std::size_t k = 0;
      while (k < d && ++idx[k] == kLengthGrid.size()) idx[k++] = 0;
      if (k == d) break;
    }
  } else {
    for (double g : kLengthGrid) combos.push_back(Eigen::VectorXd::Constant(static_cast<Eigen::Index>(d), g));
  }
  double best = -kInf;
  Eigen::VectorXd chosen;
  for (const auto& l : combos) {
    length_ = l;
    Eigen::MatrixXd k(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j <= i; ++j) k(i, j) = k(j, i) = kernel(x.row(i), x.row(j));
    }
    k.diagonal().array() += jitter;
    Eigen::LLT<Eigen::MatrixXd> llt(k);
    if (llt.info() != Eigen::Success) continue;
    const Eigen::VectorXd a = llt.solve(ys);
    const double lml = -0.5 * ys.dot(a) - llt.matrixLLT().diagonal().array().log().sum();
    if (lml > best) {
      best = lml;
      chosen = l;
      llt_ = std::move(llt);
      alpha_ = a;
    }
  }
  if (best == -kInf) throw DataError("GP fit: kernel matrix not positive definite");
  length_ = chosen;
}

std::pair<double, double> GaussianProcess::predict(
    const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
  Eigen::VectorXd ks(x_.rows());
  for (Eigen::Index i = 0; i < x_.rows(); ++i) ks[i] = kernel(x, x_.row(i));
  const double mean = ks.dot(alpha_);
  const Eigen::VectorXd v = llt_.matrixL().solve(ks);
  const double var = std::max(0.0, 1.0 - v.squaredNorm());
  return {y_mean_ + y_scale_ * mean, y_scale_ * std::sqrt(var)};
}

TuningResult tune_bayes(const SearchSpace& space, const Objective& objective,
                        const BayesOptions& options) {
  space.validate();
  if (options.budget < 1) throw ConfigError("tuning budget must be >= 1");
  const auto d = static_cast<Eigen::Index>(space.dims.size());
  Rng rng(options.seed);
  TuningResult r;
  const int n_init = std::clamp(options.initial_points, 1, options.budget);
  std::vector<std::vector<double>> init;
  for (int i = 0; i < n_init; ++i) {
    Eigen::VectorXd u(d);
    for (Eigen::Index k = 0; k < d; ++k) u[k] = rng.uniform();
    init.push_back(space.from_unit(u));
  }
  r.trials.resize(init.size());
  parallel_for(init.size(), [&](std::size_t i) {
    r.trials[i] = {init[i], safe_eval(objective, init[i])};
  });

  while (static_cast<int>(r.trials.size()) < options.budget) {
    double worst = -kInf;
    for (const auto& t : r.trials) {
      if (std::isfinite(t.value)) worst = std::max(worst, t.value);
    }
    Eigen::VectorXd next(d);
    if (worst == -kInf) {
      for (Eigen::Index k = 0; k < d; ++k) next[k] = rng.uniform();
    } else {
      const auto n = static_cast<Eigen::Index>(r.trials.size());
      Eigen::MatrixXd xs(n, d);
      Eigen::VectorXd ys(n);
      double best = kInf;
      Eigen::Index best_i = 0;
      for (Eigen::Index i = 0; i < n; ++i) {
        const auto& t = r.trials[static_cast<std::size_t>(i)];
        xs.row(i) = space.to_unit(t.point).transpose();
        ys[i] = std::isfinite(t.value) ? t.value : worst;
        if (ys[i] < best) {
          best = ys[i];
          best_i = i;
        }
      }
      GaussianProcess gp;
      gp.fit(xs, ys, options.jitter);
      double best_ei = -1.0;
      const int local = options.candidates / 10;
      for (int c = 0; c < options.candidates + local; ++c) {
        Eigen::RowVectorXd u(d);
        for (Eigen::Index k = 0; k < d; ++k) {
          u[k] = c < options.candidates ? rng.uniform()
                                        : std::clamp(xs(best_i, k) + 0.05 * rng.normal(), 0.0, 1.0);
        }
        // Score the point that would actually be evaluated.
        const Eigen::VectorXd snapped = space.to_unit(space.from_unit(u.transpose()));
        const auto [mu, sd] = gp.predict(snapped.transpose());
        const double ei = expected_improvement(mu, sd, best, options.xi);
        if (ei > best_ei) {
          best_ei = ei;
          next = snapped;
        }
      }
    }
    const auto point = space.from_unit(next);
    r.trials.push_back({point, safe_eval(objective, point)});
  }
  finish(r);
  return r;
}

}  // namespace bpstack
