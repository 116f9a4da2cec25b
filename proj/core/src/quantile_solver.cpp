#include "csens/quantile_solver.hpp"

#include <algorithm>
#include <cmath>

#include "csens/errors.hpp"

namespace csens {

double check_loss(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double tau,
                  const Eigen::VectorXd& coef) {
  const Eigen::VectorXd r = y - X * coef;
  double f = 0.0;
  for (Eigen::Index i = 0; i < r.size(); ++i)
    f += r[i] * (tau - (r[i] < 0.0 ? 1.0 : 0.0));
  return f;
}

namespace {

// First d rows that are linearly independent, in row order.
std::vector<int> initial_basis(const Eigen::MatrixXd& X) {
  const Eigen::Index n = X.rows(), d = X.cols();
  std::vector<int> basis;
  Eigen::MatrixXd ortho(d, d);
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < n && k < d; ++i) {
    Eigen::VectorXd v = X.row(i).transpose();
    const double norm0 = v.norm();
    for (Eigen::Index j = 0; j < k; ++j)
      v -= ortho.row(j).dot(X.row(i)) * ortho.row(j).transpose();
    if (v.norm() > 1e-12 * std::max(1.0, norm0)) {
      ortho.row(k) = v.transpose() / v.norm();
      basis.push_back(static_cast<int>(i));
      ++k;
    }
  }
  if (k < d)
    throw EstimationError("quantile solver: design has fewer independent rows than columns");
  return basis;
}

struct Vertex {
  std::vector<int> basis;
  Eigen::PartialPivLU<Eigen::MatrixXd> lu;  // of X rows in basis
  Eigen::VectorXd coef;
  Eigen::VectorXd resid;

  bool factor(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
    const Eigen::Index d = X.cols();
    Eigen::MatrixXd B(d, d);
    Eigen::VectorXd yb(d);
    for (Eigen::Index j = 0; j < d; ++j) {
      B.row(j) = X.row(basis[static_cast<std::size_t>(j)]);
      yb[j] = y[basis[static_cast<std::size_t>(j)]];
    }
    lu.compute(B);
    const Eigen::VectorXd diag = lu.matrixLU().diagonal().cwiseAbs();
    if (diag.minCoeff() <= 1e-13 * std::max(1.0, diag.maxCoeff())) return false;
    coef = lu.solve(yb);
    resid = y - X * coef;
    for (int i : basis) resid[i] = 0.0;
    return true;
  }
};

bool lex_less(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double tol = 1e-9 * (1.0 + std::abs(a[i]) + std::abs(b[i]));
    if (a[i] < b[i] - tol) return true;
    if (a[i] > b[i] + tol) return false;
  }
  return false;
}

}  // namespace

QrSolution solve_quantile_lp(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                             double tau, const std::vector<int>* warm_basis) {
  const Eigen::Index n = X.rows(), d = X.cols();
  if (tau <= 0.0 || tau >= 1.0) throw ConfigError("quantile level must lie in (0,1)");
  if (n < d) throw EstimationError("quantile solver: more columns than rows");

  Vertex v;
  bool ok = false;
  if (warm_basis && static_cast<Eigen::Index>(warm_basis->size()) == d) {
    v.basis = *warm_basis;
    if (std::all_of(v.basis.begin(), v.basis.end(),
                    [&](int i) { return i >= 0 && i < n; }))
      ok = v.factor(X, y);
  }
  if (!ok) {
    v.basis = initial_basis(X);
    if (!v.factor(X, y))
      throw EstimationError("quantile solver: singular initial basis");
  }

  const double ztol = 1e-11 * (1.0 + y.cwiseAbs().maxCoeff());
  const int max_pivots = static_cast<int>(100 * n + 500);
  int pivots = 0;
  std::vector<char> in_basis(static_cast<std::size_t>(n), 0);
  std::vector<std::pair<double, int>> crossings;
  crossings.reserve(static_cast<std::size_t>(n));

  // Directional derivative of the objective along s * column k of X_h^{-1},
  // plus a closure running the matching line search.
  auto set_basis_flags = [&]() {
    std::fill(in_basis.begin(), in_basis.end(), 0);
    for (int i : v.basis) in_basis[static_cast<std::size_t>(i)] = 1;
  };

  Eigen::VectorXd phi(d);
  std::vector<int> zero_rows;
  auto refresh_gradient_state = [&]() {
    set_basis_flags();
    zero_rows.clear();
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(d);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (in_basis[static_cast<std::size_t>(i)]) continue;
      const double r = v.resid[i];
      if (std::abs(r) <= ztol) {
        zero_rows.push_back(static_cast<int>(i));
        continue;
      }
      acc += (r > 0.0 ? tau : tau - 1.0) * X.row(i).transpose();
    }
    phi = v.lu.transpose().solve(acc);
  };

  auto direction_derivative = [&](Eigen::Index k, double s) {
    double dd = (s > 0.0 ? 1.0 - tau : tau) - s * phi[k];
    if (!zero_rows.empty()) {
      for (int i : zero_rows) {
        const Eigen::VectorXd wz = v.lu.transpose().solve(X.row(i).transpose());
        const double mv = -s * wz[k];  // residual derivative for row i
        dd += std::max(tau * mv, (tau - 1.0) * mv);
      }
    }
    return dd;
  };

  auto direction_vector = [&](Eigen::Index k, double s) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(d);
    e[k] = 1.0;
    return Eigen::VectorXd(s * v.lu.solve(e));
  };

  // Walk breakpoints until the accumulated slope turns nonnegative; returns
  // the entering row, or -1 when no crossing exists.
  auto line_search_enter = [&](const Eigen::VectorXd& dirvec, double slope0) {
    const Eigen::VectorXd g = X * dirvec;
    crossings.clear();
    for (Eigen::Index i = 0; i < n; ++i) {
      if (in_basis[static_cast<std::size_t>(i)]) continue;
      const double r = v.resid[i];
      if (std::abs(r) <= ztol || g[i] == 0.0) continue;
      const double t = r / g[i];
      if (t > 0.0) crossings.emplace_back(t, static_cast<int>(i));
    }
    std::sort(crossings.begin(), crossings.end());
    double slope = slope0;
    for (const auto& [t, i] : crossings) {
      slope += std::abs(g[i]);
      if (slope >= 0.0) return i;
    }
    return -1;
  };

  // Phase 1: descend to an optimal vertex.
  while (true) {
    if (++pivots > max_pivots)
      throw EstimationError("quantile solver: iteration cap exceeded");
    refresh_gradient_state();
    const double tol_d = 1e-9 * (1.0 + phi.cwiseAbs().maxCoeff());

    double best_dd = -tol_d;
    Eigen::Index best_k = -1;
    double best_s = 0.0;
    for (Eigen::Index k = 0; k < d; ++k) {
      for (double s : {1.0, -1.0}) {
        const double dd = direction_derivative(k, s);
        if (dd < best_dd) {
          best_dd = dd;
          best_k = k;
          best_s = s;
        }
      }
    }
    if (best_k < 0) break;  // optimal

    const Eigen::VectorXd dirvec = direction_vector(best_k, best_s);
    const int enter = line_search_enter(dirvec, best_dd);
    if (enter < 0)
      throw EstimationError("quantile solver: unbounded descent direction");
    v.basis[static_cast<std::size_t>(best_k)] = enter;
    if (!v.factor(X, y))
      throw EstimationError("quantile solver: singular basis after pivot");
  }

  // Phase 2: walk zero-gradient edges toward the lexicographically smallest
  // optimal vertex. Each accepted move strictly decreases the coefficient
  // vector, so this terminates.
  bool moved = true;
  while (moved && pivots <= max_pivots) {
    moved = false;
    refresh_gradient_state();
    const double tol_d = 1e-9 * (1.0 + phi.cwiseAbs().maxCoeff());
    for (Eigen::Index k = 0; k < d && !moved; ++k) {
      for (double s : {1.0, -1.0}) {
        const double dd = direction_derivative(k, s);
        if (std::abs(dd) > tol_d) continue;
        const Eigen::VectorXd dirvec = direction_vector(k, s);
        const Eigen::VectorXd g = X * dirvec;
        double t1 = std::numeric_limits<double>::infinity();
        int enter = -1;
        for (Eigen::Index i = 0; i < n; ++i) {
          if (in_basis[static_cast<std::size_t>(i)]) continue;
          const double r = v.resid[i];
          if (std::abs(r) <= ztol || g[i] == 0.0) continue;
          const double t = r / g[i];
          if (t > 0.0 && t < t1) {
            t1 = t;
            enter = static_cast<int>(i);
          }
        }
        if (enter < 0) continue;
        const Eigen::VectorXd cand = v.coef + t1 * dirvec;
        if (!lex_less(cand, v.coef)) continue;
        Vertex trial = v;
        trial.basis[static_cast<std::size_t>(k)] = enter;
        if (!trial.factor(X, y)) continue;
        v = trial;
        ++pivots;
        moved = true;
        break;
      }
    }
  }

  QrSolution sol;
  sol.coef = v.coef;
  sol.basis = v.basis;
  sol.iterations = pivots;
  sol.objective = check_loss(X, y, tau, v.coef);
  return sol;
}

}  // namespace csens
