#pragma once

#include <Eigen/Dense>

namespace bpstack {

struct QuantileModel {
  double tau = 0.5;
  double l1_penalty = 0.0;
  double intercept = 0.0;
  Eigen::VectorXd coef;
  double objective = 0.0;  // sum of pinball losses + l1_penalty * |coef|_1
  int iterations = 0;

  Eigen::VectorXd predict(const Eigen::Ref<const Eigen::MatrixXd>& x) const;
};

struct QuantileSolverOptions {
  int max_iter = 200;
  double tol = 1e-10;  // duality gap relative to 1 + |objective|
};

// Sum of rho_tau(y - yhat), rho_tau(u) = u * (tau - 1{u < 0}).
double pinball_loss(const Eigen::Ref<const Eigen::VectorXd>& y,
                    const Eigen::Ref<const Eigen::VectorXd>& yhat, double tau);

// Linear quantile regression with an unpenalised intercept, solved as a
// linear program by a primal-dual interior point method. A matrix with zero
// columns fits the intercept alone. Raises SolverError when the iteration
// cap is reached.
QuantileModel fit_quantile(const Eigen::Ref<const Eigen::MatrixXd>& x,
                           const Eigen::Ref<const Eigen::VectorXd>& y, double tau,
                           double l1_penalty, const QuantileSolverOptions& options = {});

}  // namespace bpstack
