#pragma once

#include <Eigen/Dense>
#include <vector>

namespace csens {

struct QrSolution {
  Eigen::VectorXd coef;
  double objective = 0.0;
  std::vector<int> basis;  // row indices with zero residual, size d
  int iterations = 0;
};

// Exterior-point simplex over basic solutions of the check-loss LP.
// The returned vertex is the lexicographically smallest coefficient vector
// among the optimal vertices reachable along zero-gradient edges.
QrSolution solve_quantile_lp(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                             double tau, const std::vector<int>* warm_basis = nullptr);

double check_loss(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double tau,
                  const Eigen::VectorXd& coef);

}  // namespace csens
