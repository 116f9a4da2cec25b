#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "csens/errors.hpp"

namespace csens {

// Observed data: outcome y, binary treatment x, covariate matrix w.
struct Sample {
  Eigen::VectorXd y;
  Eigen::VectorXi x;   // entries in {0,1}
  Eigen::MatrixXd w;   // n x d_raw
  std::vector<std::string> names;  // covariate labels, size d_raw

  Eigen::Index n() const { return y.size(); }
  Eigen::Index d_raw() const { return w.cols(); }

  // Throws DataError unless finite, x binary with both arms, n >= 2.
  void validate() const;
};

// One column of a design matrix: x^(treat) * cov^power, or the intercept
// when treat is false and cov is empty.
struct Term {
  bool treat = false;
  std::string cov;  // empty means no covariate factor
  int power = 1;

  bool intercept() const { return !treat && cov.empty(); }
  bool references(const std::string& name) const { return cov == name; }
  std::string label() const;
};

// Term lists for q(x,w) and r(w).
struct DesignSpec {
  std::vector<Term> q_terms;
  std::vector<Term> r_terms;

  // q = (1, x, w...), r = (1, w...)
  static DesignSpec linear(const std::vector<std::string>& covariates);
  // q additionally gets x*w interactions
  static DesignSpec interacted(const std::vector<std::string>& covariates);

  // Spec with every q/r term referencing covariate k removed.
  DesignSpec without_covariate(const std::string& name) const;
};

struct DesignMatrices {
  Eigen::MatrixXd qmat;  // n x d_q, rows q(X_i, W_i)
  Eigen::MatrixXd rmat;  // n x d_W, rows r(W_i)
  std::vector<Term> q_terms;  // surviving terms, one per column
  std::vector<Term> r_terms;
  std::vector<std::string> dropped;  // labels of collinear columns removed

  Eigen::Index d_q() const { return qmat.cols(); }
  Eigen::Index d_w() const { return rmat.cols(); }

  // Row builders reproduce the matrix rows exactly for in-sample inputs.
  Eigen::VectorXd q_row(int x, const Eigen::Ref<const Eigen::RowVectorXd>& w_row) const;
  Eigen::VectorXd r_row(const Eigen::Ref<const Eigen::RowVectorXd>& w_row) const;

  std::vector<std::string> cov_names;  // needed by builders to resolve terms
};

// Parse a CSV file (header row, comma separated, '.' decimal) into a Sample.
Sample load_csv(const std::string& path, const std::string& outcome,
                const std::string& treatment,
                const std::vector<std::string>& covariates);

// Build q/r matrices from the spec, dropping exactly collinear columns
// (pivoted Cholesky of the Gram matrix, relative tolerance 1e-10).
DesignMatrices build_design(const Sample& sample, const DesignSpec& spec);

}  // namespace csens
