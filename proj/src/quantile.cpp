#include "bpstack/quantile.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "bpstack/error.hpp"

namespace bpstack {

Eigen::VectorXd QuantileModel::predict(const Eigen::Ref<const Eigen::MatrixXd>& x) const {
  if (x.cols() != coef.size()) throw DataError("quantile model: feature count mismatch");
  return (x * coef).array() + intercept;
}

double pinball_loss(const Eigen::Ref<const Eigen::VectorXd>& y,
                    const Eigen::Ref<const Eigen::VectorXd>& yhat, double tau) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double u = y[i] - yhat[i];
    total += u * (tau - (u < 0.0 ? 1.0 : 0.0));
  }
  return total;
}

namespace {

// Largest step in (0, 1] keeping v + step * dv strictly positive.
double max_step(const Eigen::ArrayXd& v, const Eigen::ArrayXd& dv) {
  double step = 1.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (dv[i] < 0.0) step = std::min(step, -v[i] / dv[i]);
  }
  return step;
}

}  // namespace

// The dual of the quantile LP is
//   min -y'a  s.t.  A'a = A'c_minus,  0 <= a <= c_plus + c_minus
// with A = [1, X] plus one [0, e_j] row per penalised coefficient. The
// coefficients are the negated multipliers of the equality constraint.
QuantileModel fit_quantile(const Eigen::Ref<const Eigen::MatrixXd>& x,
                           const Eigen::Ref<const Eigen::VectorXd>& y, double tau,
                           double l1_penalty, const QuantileSolverOptions& options) {
  if (!(tau > 0.0 && tau < 1.0)) throw ConfigError("tau must lie in (0, 1)");
  if (!(l1_penalty >= 0.0)) throw ConfigError("l1_penalty must be >= 0");
  if (x.rows() != y.size()) throw DataError("quantile fit: length mismatch");
  if (y.size() == 0) throw DataError("quantile fit on zero rows");
  if (!x.allFinite() || !y.allFinite()) throw DataError("quantile fit requires finite inputs");

  const Eigen::Index n = y.size();
  const Eigen::Index p = x.cols();
  const Eigen::Index k = p + 1;
  const Eigen::Index pen = (l1_penalty > 0.0) ? p : 0;
  const Eigen::Index m = n + pen;

  // Work on a centred, unit-scale response.
  const double shift = y.mean();
  double scale = std::sqrt((y.array() - shift).square().mean());
  if (!(scale > 0.0)) scale = 1.0;
  // Both loss and penalty scale linearly with y, so the penalty is unchanged.
  const double lam = l1_penalty;

  Eigen::MatrixXd a_mat = Eigen::MatrixXd::Zero(m, k);
  a_mat.col(0).head(n).setOnes();
  a_mat.block(0, 1, n, p) = x;
  for (Eigen::Index j = 0; j < pen; ++j) a_mat(n + j, 1 + j) = 1.0;
  Eigen::VectorXd c = Eigen::VectorXd::Zero(m);
  c.head(n) = -(y.array() - shift) / scale;
  Eigen::ArrayXd c_plus(m), c_minus(m);
  c_plus.head(n).setConstant(tau);
  c_minus.head(n).setConstant(1.0 - tau);
  c_plus.tail(pen).setConstant(lam);
  c_minus.tail(pen).setConstant(lam);
  const Eigen::ArrayXd upper = c_plus + c_minus;
  const Eigen::VectorXd b = a_mat.transpose() * c_minus.matrix();

  Eigen::ArrayXd a = c_minus;
  Eigen::ArrayXd s = c_plus;
  Eigen::VectorXd lambda =
      (a_mat.transpose() * a_mat).ldlt().solve(a_mat.transpose() * c);
  const Eigen::ArrayXd res = (c - a_mat * lambda).array();
  const double shift_dual = std::max(0.1, 0.5 * res.abs().mean());
  Eigen::ArrayXd z = res.max(0.0) + shift_dual;
  Eigen::ArrayXd w = (-res).max(0.0) + shift_dual;

  const double eta = 0.99995;
  const double dm = 2.0 * static_cast<double>(m);
  double gap = std::numeric_limits<double>::infinity();
  int iter = 0;
  bool converged = false;

  Eigen::ArrayXd d_vec, q;
  Eigen::VectorXd dlam;
  Eigen::ArrayXd da, dz, dw;
  auto direction = [&](const Eigen::ArrayXd& r_az, const Eigen::ArrayXd& r_sw,
                       const Eigen::VectorXd& r_p, const Eigen::VectorXd& r_d) {
    d_vec = 1.0 / (z / a + w / s);
    q = r_d.array() - r_az / a + r_sw / s;
    const Eigen::MatrixXd normal = a_mat.transpose() * d_vec.matrix().asDiagonal() * a_mat;
    const Eigen::VectorXd rhs = r_p + a_mat.transpose() * (d_vec * q).matrix();
    dlam = normal.ldlt().solve(rhs);
    da = d_vec * ((a_mat * dlam).array() - q);
    dz = (r_az - z * da) / a;
    dw = (r_sw + w * da) / s;
  };

  for (iter = 1; iter <= options.max_iter; ++iter) {
    const Eigen::VectorXd r_p = b - a_mat.transpose() * a.matrix();
    const Eigen::VectorXd r_d = c - a_mat * lambda - z.matrix() + w.matrix();
    gap = (a * z).sum() + (s * w).sum();
    const double obj = std::abs(c.dot(a.matrix()));
    if (gap / (1.0 + obj) < options.tol && r_p.lpNorm<Eigen::Infinity>() < 1e-9 &&
        r_d.lpNorm<Eigen::Infinity>() < 1e-9) {
      converged = true;
      break;
    }
    const double mu = gap / dm;

    // Predictor (affine scaling).
    direction(-(a * z), -(s * w), r_p, r_d);
    const double ap_aff = std::min(max_step(a, da), max_step(s, -da));
    const double ad_aff = std::min(max_step(z, dz), max_step(w, dw));
    const double mu_aff = (((a + ap_aff * da) * (z + ad_aff * dz)).sum() +
                           ((s - ap_aff * da) * (w + ad_aff * dw)).sum()) /
                          dm;
    const double sigma = std::pow(mu_aff / mu, 3.0);

    // Corrector.
    const Eigen::ArrayXd da_aff = da, dz_aff = dz, dw_aff = dw;
    direction(sigma * mu - a * z - da_aff * dz_aff, sigma * mu - s * w + da_aff * dw_aff, r_p, r_d);
    const double ap = std::min(1.0, eta * std::min(max_step(a, da), max_step(s, -da)));
    const double ad = std::min(1.0, eta * std::min(max_step(z, dz), max_step(w, dw)));
    a += ap * da;
    s = (upper - a).max(1e-300);
    lambda += ad * dlam;
    z += ad * dz;
    w += ad * dw;
  }
  if (!converged) {
    throw SolverError("quantile regression did not converge within " +
                          std::to_string(options.max_iter) + " iterations (gap " +
                          std::to_string(gap) + ")",
                      gap);
  }

  QuantileModel model;
  model.tau = tau;
  model.l1_penalty = l1_penalty;
  model.iterations = iter;
  model.intercept = shift - scale * lambda[0];
  model.coef = -scale * lambda.tail(p);
  model.objective =
      pinball_loss(y, model.predict(x), tau) + l1_penalty * model.coef.lpNorm<1>();
  return model;
}

}  // namespace bpstack
