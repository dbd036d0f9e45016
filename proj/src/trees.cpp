#include "bpstack/trees.hpp"

#include <algorithm>
#include <numeric>

#include "bpstack/error.hpp"
#include "bpstack/parallel.hpp"
#include "bpstack/rng.hpp"

namespace bpstack {

void TreeParams::validate() const {
  if (min_samples_leaf < 1) throw ConfigError("min_samples_leaf must be >= 1");
  if (n_estimators < 1) throw ConfigError("n_estimators must be >= 1");
  if (!(learning_rate > 0.0 && learning_rate <= 1.0)) {
    throw ConfigError("learning_rate must lie in (0, 1]");
  }
  if (!(subsample > 0.0 && subsample <= 1.0)) throw ConfigError("subsample must lie in (0, 1]");
  if (!(feature_fraction > 0.0 && feature_fraction <= 1.0)) {
    throw ConfigError("feature_fraction must lie in (0, 1]");
  }
}

std::size_t RegressionTree::leaf_count() const {
  return static_cast<std::size_t>(std::count(feature.begin(), feature.end(), -1));
}

int RegressionTree::depth() const {
  if (feature.empty()) return 0;
  std::vector<int> d(feature.size(), 0);
  int best = 0;
  for (std::size_t i = 0; i < feature.size(); ++i) {
    best = std::max(best, d[i]);
    if (feature[i] >= 0) {
      d[static_cast<std::size_t>(left[i])] = d[i] + 1;
      d[static_cast<std::size_t>(right[i])] = d[i] + 1;
    }
  }
  return best;
}

double RegressionTree::predict_row(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
  std::size_t node = 0;
  while (feature[node] >= 0) {
    node = static_cast<std::size_t>(x[feature[node]] <= threshold[node] ? left[node] : right[node]);
  }
  return value[node];
}

Eigen::VectorXd RegressionTree::predict(const Eigen::Ref<const Eigen::MatrixXd>& x) const {
  Eigen::VectorXd out(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    std::size_t node = 0;
    while (feature[node] >= 0) {
      node = static_cast<std::size_t>(x(i, feature[node]) <= threshold[node] ? left[node]
                                                                              : right[node]);
    }
    out[i] = value[node];
  }
  return out;
}

namespace {

using Matrix = Eigen::Ref<const Eigen::MatrixXd>;
using Vector = Eigen::Ref<const Eigen::VectorXd>;

// Row order per feature, ascending, ties by row index.
std::vector<std::vector<int>> presort(const Matrix& x) {
  std::vector<std::vector<int>> order(static_cast<std::size_t>(x.cols()));
  parallel_for(order.size(), [&](std::size_t f) {
    auto& o = order[f];
    o.resize(static_cast<std::size_t>(x.rows()));
    std::iota(o.begin(), o.end(), 0);
    const auto col = x.col(static_cast<Eigen::Index>(f));
    std::stable_sort(o.begin(), o.end(), [&](int a, int b) { return col[a] < col[b]; });
  });
  return order;
}

class Builder {
 public:
  Builder(const Matrix& x, const Vector& y, const TreeParams& params,
          const std::vector<std::vector<int>>& order, const std::vector<int>& counts, Rng& rng)
      : x_(x), params_(params), rng_(rng) {
    const auto d = static_cast<std::size_t>(x.cols());
    if (d == 0) throw DataError("cannot fit a tree without feature columns");
    lists_.resize(d);
    std::size_t m = 0;
    for (int c : counts) m += static_cast<std::size_t>(c);
    for (std::size_t f = 0; f < d; ++f) {
      auto& list = lists_[f];
      list.reserve(m);
      const auto col = x.col(static_cast<Eigen::Index>(f));
      for (int row : order[f]) {
        for (int c = 0; c < counts[static_cast<std::size_t>(row)]; ++c) {
          list.push_back({col[row], y[row], row});
        }
      }
    }
    size_ = m;
    buffer_.resize(m);
    features_.resize(d);
    std::iota(features_.begin(), features_.end(), 0);
  }

  RegressionTree build() {
    if (size_ == 0) throw DataError("cannot fit a tree on zero rows");
    grow(0, size_, 0);
    return std::move(tree_);
  }

 private:
  struct Entry {
    double x;
    double y;
    int row;
  };

  struct Split {
    int feature = -1;
    double threshold = 0.0;
    double score = 0.0;
  };

  int add_node() {
    tree_.feature.push_back(-1);
    tree_.threshold.push_back(0.0);
    tree_.left.push_back(-1);
    tree_.right.push_back(-1);
    tree_.value.push_back(0.0);
    return static_cast<int>(tree_.feature.size() - 1);
  }

  int grow(std::size_t begin, std::size_t end, int depth) {
    const int node = add_node();
    const auto& rows = lists_[0];
    const auto n = static_cast<double>(end - begin);
    double sum = 0.0;
    for (std::size_t p = begin; p < end; ++p) sum += rows[p].y;
    const double mean = sum / n;
    tree_.value[static_cast<std::size_t>(node)] = mean;
    double sse = 0.0;
    for (std::size_t p = begin; p < end; ++p) {
      const double r = rows[p].y - mean;
      sse += r * r;
    }
    const auto min_leaf = static_cast<std::size_t>(params_.min_samples_leaf);
    if ((params_.max_depth > 0 && depth >= params_.max_depth) || end - begin < 2 * min_leaf ||
        !(sse > 0.0)) {
      return node;
    }
    const Split split = best_split(begin, end, sum);
    if (split.feature < 0 || !(split.score - sum * sum / n > 1e-12 * sse)) return node;

    // Stable partition of the feature lists around the chosen split. Children
    // at the depth limit only need the first list for their leaf values.
    const auto col = x_.col(split.feature);
    const bool children_final = params_.max_depth > 0 && depth + 1 >= params_.max_depth;
    const std::size_t n_lists = children_final ? 1 : lists_.size();
    std::size_t mid = begin;
    for (std::size_t li = 0; li < n_lists; ++li) {
      auto& list = lists_[li];
      std::size_t l = 0;
      std::size_t r = end - begin;
      for (std::size_t p = begin; p < end; ++p) {
        const Entry& e = list[p];
        if (col[e.row] <= split.threshold) {
          buffer_[l++] = e;
        } else {
          buffer_[--r] = e;
        }
      }
      std::copy(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(l),
                list.begin() + static_cast<std::ptrdiff_t>(begin));
      std::reverse_copy(buffer_.begin() + static_cast<std::ptrdiff_t>(l),
                        buffer_.begin() + static_cast<std::ptrdiff_t>(end - begin),
                        list.begin() + static_cast<std::ptrdiff_t>(begin + l));
      mid = begin + l;
    }
    const auto i = static_cast<std::size_t>(node);
    tree_.feature[i] = split.feature;
    tree_.threshold[i] = split.threshold;
    const int l = grow(begin, mid, depth + 1);
    tree_.left[i] = l;
    const int r = grow(mid, end, depth + 1);
    tree_.right[i] = r;
    return node;
  }

  Split best_split(std::size_t begin, std::size_t end, double total) {
    const std::size_t d = lists_.size();
    std::size_t k = d;
    if (params_.feature_fraction < 1.0) {
      k = std::max<std::size_t>(
          1, static_cast<std::size_t>(std::lround(params_.feature_fraction * static_cast<double>(d))));
      for (std::size_t i = 0; i < k; ++i) {
        std::swap(features_[i], features_[i + rng_.index(d - i)]);
      }
    }
    std::vector<std::size_t> candidates(features_.begin(), features_.begin() + static_cast<std::ptrdiff_t>(k));
    if (k < d) std::sort(candidates.begin(), candidates.end());

    const auto min_leaf = static_cast<std::size_t>(params_.min_samples_leaf);
    const std::size_t n = end - begin;
    Split best;
    for (std::size_t f : candidates) {
      const auto& list = lists_[f];
      double left_sum = 0.0;
      for (std::size_t p = begin; p + 1 < end; ++p) {
        left_sum += list[p].y;
        const std::size_t nl = p - begin + 1;
        const double a = list[p].x;
        const double b = list[p + 1].x;
        if (!(a < b) || nl < min_leaf || n - nl < min_leaf) continue;
        const double right_sum = total - left_sum;
        const double score = left_sum * left_sum / static_cast<double>(nl) +
                             right_sum * right_sum / static_cast<double>(n - nl);
        if (best.feature < 0 || score > best.score) {
          double thr = a + (b - a) / 2.0;
          if (!(thr < b)) thr = a;
          best = {static_cast<int>(f), thr, score};
        }
      }
    }
    return best;
  }

  const Matrix& x_;
  const TreeParams& params_;
  Rng& rng_;
  std::vector<std::vector<Entry>> lists_;
  std::vector<Entry> buffer_;
  std::vector<std::size_t> features_;
  std::size_t size_ = 0;
  RegressionTree tree_;
};

void check_shapes(const Matrix& x, const Vector& y) {
  if (x.rows() != y.size()) throw DataError("feature matrix and target differ in length");
  if (x.rows() == 0) throw DataError("cannot fit on zero rows");
  if (!x.allFinite() || !y.allFinite()) throw DataError("tree learners require finite inputs");
}

RegressionTree build_tree(const Matrix& x, const Vector& y, const TreeParams& params,
                          const std::vector<std::vector<int>>& order, const std::vector<int>& counts,
                          Rng& rng) {
  Builder b(x, y, params, order, counts, rng);
  return b.build();
}

}  // namespace

RegressionTree fit_tree(const Matrix& x, const Vector& y, const TreeParams& params) {
  params.validate();
  check_shapes(x, y);
  const auto order = presort(x);
  const std::vector<int> counts(static_cast<std::size_t>(x.rows()), 1);
  Rng rng(params.seed);
  return build_tree(x, y, params, order, counts, rng);
}

Eigen::VectorXd GbmModel::predict(const Matrix& x) const {
  Eigen::VectorXd f = Eigen::VectorXd::Constant(x.rows(), init);
  for (const auto& t : trees) f += learning_rate * t.predict(x);
  return f;
}

GbmModel fit_gbm(const Matrix& x, const Vector& y, const TreeParams& params,
                 std::vector<double>* stage_mse) {
  params.validate();
  check_shapes(x, y);
  const auto n = static_cast<std::size_t>(x.rows());
  const auto order = presort(x);
  GbmModel model;
  model.learning_rate = params.learning_rate;
  model.init = y.mean();
  Eigen::VectorXd f = Eigen::VectorXd::Constant(x.rows(), model.init);
  Eigen::VectorXd resid = y - f;
  if (stage_mse) {
    stage_mse->clear();
    stage_mse->push_back(resid.squaredNorm() / static_cast<double>(n));
  }
  const auto take = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::lround(params.subsample * static_cast<double>(n))));
  std::vector<int> counts(n, 1);
  std::vector<int> perm(n);
  model.trees.reserve(static_cast<std::size_t>(params.n_estimators));
  for (int m = 0; m < params.n_estimators; ++m) {
    Rng rng(Rng::derive(params.seed, static_cast<std::uint64_t>(m)));
    if (take < n) {
      std::iota(perm.begin(), perm.end(), 0);
      std::fill(counts.begin(), counts.end(), 0);
      for (std::size_t i = 0; i < take; ++i) {
        std::swap(perm[i], perm[i + rng.index(n - i)]);
        counts[static_cast<std::size_t>(perm[i])] = 1;
      }
    }
    auto tree = build_tree(x, resid, params, order, counts, rng);
    f += params.learning_rate * tree.predict(x);
    resid = y - f;
    if (stage_mse) stage_mse->push_back(resid.squaredNorm() / static_cast<double>(n));
    model.trees.push_back(std::move(tree));
  }
  return model;
}

Eigen::VectorXd ForestModel::predict(const Matrix& x) const {
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(x.rows());
  for (const auto& t : trees) sum += t.predict(x);
  return sum / static_cast<double>(trees.size());
}

ForestModel fit_random_forest(const Matrix& x, const Vector& y, const TreeParams& params) {
  params.validate();
  check_shapes(x, y);
  const auto n = static_cast<std::size_t>(x.rows());
  const auto order = presort(x);
  ForestModel model;
  model.trees.resize(static_cast<std::size_t>(params.n_estimators));
  parallel_for(model.trees.size(), [&](std::size_t t) {
    Rng rng(Rng::derive(params.seed, t));
    std::vector<int> counts(n, params.bootstrap ? 0 : 1);
    if (params.bootstrap) {
      for (std::size_t i = 0; i < n; ++i) ++counts[rng.index(n)];
    }
    model.trees[t] = build_tree(x, y, params, order, counts, rng);
  });
  return model;
}

}  // namespace bpstack
