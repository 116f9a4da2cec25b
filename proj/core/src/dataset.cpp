#include "csens/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>

namespace csens {

void Sample::validate() const {
  const Eigen::Index nn = y.size();
  if (nn < 2) throw DataError("sample must contain at least 2 rows");
  if (x.size() != nn || w.rows() != nn)
    throw DataError("outcome/treatment/covariate row counts disagree");
  if (static_cast<Eigen::Index>(names.size()) != w.cols())
    throw DataError("covariate name count does not match covariate columns");
  for (Eigen::Index i = 0; i < nn; ++i) {
    if (!std::isfinite(y[i]))
      throw DataError("non-finite outcome at row " + std::to_string(i + 1));
    if (x[i] != 0 && x[i] != 1)
      throw DataError("non-binary treatment at row " + std::to_string(i + 1));
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
      if (!std::isfinite(w(i, j)))
        throw DataError("non-finite covariate '" + names[j] + "' at row " +
                        std::to_string(i + 1));
    }
  }
  const int treated = x.sum();
  if (treated == 0 || treated == nn)
    throw DataError("treatment column must contain both 0 and 1");
}

std::string Term::label() const {
  if (intercept()) return "1";
  std::string s;
  if (treat) s = "x";
  if (!cov.empty()) {
    if (!s.empty()) s += "*";
    s += cov;
    if (power != 1) s += "^" + std::to_string(power);
  }
  return s;
}

DesignSpec DesignSpec::linear(const std::vector<std::string>& covariates) {
  DesignSpec spec;
  spec.q_terms.push_back(Term{});
  spec.q_terms.push_back(Term{true, "", 1});
  spec.r_terms.push_back(Term{});
  for (const auto& c : covariates) {
    spec.q_terms.push_back(Term{false, c, 1});
    spec.r_terms.push_back(Term{false, c, 1});
  }
  return spec;
}

DesignSpec DesignSpec::interacted(const std::vector<std::string>& covariates) {
  DesignSpec spec = linear(covariates);
  for (const auto& c : covariates) spec.q_terms.push_back(Term{true, c, 1});
  return spec;
}

DesignSpec DesignSpec::without_covariate(const std::string& name) const {
  DesignSpec out;
  for (const auto& t : q_terms)
    if (!t.references(name)) out.q_terms.push_back(t);
  for (const auto& t : r_terms)
    if (!t.references(name)) out.r_terms.push_back(t);
  return out;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.push_back("");
  return cells;
}

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double parse_cell(const std::string& cell, std::size_t row, const std::string& col) {
  const std::string t = trim(cell);
  if (t.empty())
    throw DataError("empty cell at row " + std::to_string(row) + ", column '" + col + "'");
  std::size_t pos = 0;
  double v;
  try {
    v = std::stod(t, &pos);
  } catch (const std::exception&) {
    throw DataError("unparseable value '" + t + "' at row " + std::to_string(row) +
                    ", column '" + col + "'");
  }
  if (pos != t.size())
    throw DataError("unparseable value '" + t + "' at row " + std::to_string(row) +
                    ", column '" + col + "'");
  if (!std::isfinite(v))
    throw DataError("non-finite value at row " + std::to_string(row) + ", column '" +
                    col + "'");
  return v;
}

}  // namespace

Sample load_csv(const std::string& path, const std::string& outcome,
                const std::string& treatment,
                const std::vector<std::string>& covariates) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open file: " + path);

  std::string line;
  if (!std::getline(in, line)) throw DataError("empty file: " + path);
  if (!line.empty() && line.front() == '\xEF' && line.size() >= 3)
    line = line.substr(3);  // strip UTF-8 BOM

  std::unordered_map<std::string, std::size_t> col_index;
  {
    auto header = split_csv_line(line);
    for (std::size_t j = 0; j < header.size(); ++j) col_index[trim(header[j])] = j;
  }
  auto require = [&](const std::string& name) {
    auto it = col_index.find(name);
    if (it == col_index.end()) throw DataError("missing column '" + name + "' in " + path);
    return it->second;
  };
  const std::size_t yc = require(outcome);
  const std::size_t xc = require(treatment);
  std::vector<std::size_t> wc;
  for (const auto& c : covariates) wc.push_back(require(c));

  std::vector<double> ys, ws;
  std::vector<int> xs;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    auto cells = split_csv_line(line);
    auto cell = [&](std::size_t j, const std::string& name) -> const std::string& {
      if (j >= cells.size())
        throw DataError("row " + std::to_string(row) + " has too few columns (need '" +
                        name + "')");
      return cells[j];
    };
    ys.push_back(parse_cell(cell(yc, outcome), row, outcome));
    const double xv = parse_cell(cell(xc, treatment), row, treatment);
    if (xv != 0.0 && xv != 1.0)
      throw DataError("non-binary treatment value " + std::to_string(xv) + " at row " +
                      std::to_string(row));
    xs.push_back(static_cast<int>(xv));
    for (std::size_t k = 0; k < wc.size(); ++k)
      ws.push_back(parse_cell(cell(wc[k], covariates[k]), row, covariates[k]));
  }

  const Eigen::Index n = static_cast<Eigen::Index>(ys.size());
  const Eigen::Index d = static_cast<Eigen::Index>(covariates.size());
  Sample s;
  s.y = Eigen::Map<Eigen::VectorXd>(ys.data(), n);
  s.x = Eigen::Map<Eigen::VectorXi>(xs.data(), n);
  s.w.resize(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j) s.w(i, j) = ws[i * d + j];
  s.names = covariates;
  s.validate();
  return s;
}

namespace {

int cov_column(const std::vector<std::string>& names, const std::string& cov) {
  auto it = std::find(names.begin(), names.end(), cov);
  if (it == names.end()) throw DataError("design term references unknown covariate '" + cov + "'");
  return static_cast<int>(it - names.begin());
}

double term_value(const Term& t, double x, const Eigen::Ref<const Eigen::RowVectorXd>& w_row,
                  const std::vector<std::string>& names) {
  double v = 1.0;
  if (t.treat) v *= x;
  if (!t.cov.empty()) v *= std::pow(w_row[cov_column(names, t.cov)], t.power);
  return v;
}

Eigen::MatrixXd raw_matrix(const Sample& s, const std::vector<Term>& terms, bool use_x) {
  Eigen::MatrixXd m(s.n(), static_cast<Eigen::Index>(terms.size()));
  for (Eigen::Index i = 0; i < s.n(); ++i) {
    const double xi = use_x ? static_cast<double>(s.x[i]) : 0.0;
    for (std::size_t j = 0; j < terms.size(); ++j)
      m(i, static_cast<Eigen::Index>(j)) = term_value(terms[j], xi, s.w.row(i), s.names);
  }
  return m;
}

// Greedy left-to-right Gram-Schmidt on the Gram matrix: keep column j when its
// residual pivot exceeds 1e-10 times the leading kept pivot.
std::vector<int> independent_columns(const Eigen::MatrixXd& m) {
  const Eigen::Index d = m.cols();
  const Eigen::MatrixXd gram = m.transpose() * m;
  std::vector<int> kept;
  Eigen::MatrixXd basis(m.rows(), d);  // orthonormalized kept columns
  double lead_pivot = -1.0;
  for (Eigen::Index j = 0; j < d; ++j) {
    Eigen::VectorXd col = m.col(j);
    for (std::size_t k = 0; k < kept.size(); ++k)
      col -= basis.col(static_cast<Eigen::Index>(k)).dot(m.col(j)) *
             basis.col(static_cast<Eigen::Index>(k));
    const double pivot = col.squaredNorm();
    if (lead_pivot < 0.0) {
      if (pivot > 0.0) {
        lead_pivot = pivot;
        basis.col(0) = col / std::sqrt(pivot);
        kept.push_back(static_cast<int>(j));
      }
      continue;
    }
    if (pivot >= 1e-10 * lead_pivot && gram(j, j) > 0.0) {
      basis.col(static_cast<Eigen::Index>(kept.size())) = col / std::sqrt(pivot);
      kept.push_back(static_cast<int>(j));
    }
  }
  return kept;
}

}  // namespace

Eigen::VectorXd DesignMatrices::q_row(int x, const Eigen::Ref<const Eigen::RowVectorXd>& w_row) const {
  Eigen::VectorXd v(static_cast<Eigen::Index>(q_terms.size()));
  for (std::size_t j = 0; j < q_terms.size(); ++j)
    v[static_cast<Eigen::Index>(j)] =
        term_value(q_terms[j], static_cast<double>(x), w_row, cov_names);
  return v;
}

Eigen::VectorXd DesignMatrices::r_row(const Eigen::Ref<const Eigen::RowVectorXd>& w_row) const {
  Eigen::VectorXd v(static_cast<Eigen::Index>(r_terms.size()));
  for (std::size_t j = 0; j < r_terms.size(); ++j)
    v[static_cast<Eigen::Index>(j)] = term_value(r_terms[j], 0.0, w_row, cov_names);
  return v;
}

DesignMatrices build_design(const Sample& sample, const DesignSpec& spec) {
  if (spec.q_terms.empty() || spec.r_terms.empty())
    throw ConfigError("design spec must contain at least one q term and one r term");
  for (const auto& t : spec.q_terms)
    if (!t.cov.empty()) cov_column(sample.names, t.cov);
  for (const auto& t : spec.r_terms) {
    if (t.treat) throw ConfigError("r(w) terms cannot reference the treatment");
    if (!t.cov.empty()) cov_column(sample.names, t.cov);
  }

  DesignMatrices d;
  d.cov_names = sample.names;

  const Eigen::MatrixXd q_full = raw_matrix(sample, spec.q_terms, true);
  const Eigen::MatrixXd r_full = raw_matrix(sample, spec.r_terms, false);

  const auto q_keep = independent_columns(q_full);
  const auto r_keep = independent_columns(r_full);
  if (q_keep.empty()) throw DataError("all q(x,w) design columns are degenerate");
  if (r_keep.empty()) throw DataError("all r(w) design columns are degenerate");

  auto select = [](const Eigen::MatrixXd& m, const std::vector<int>& keep) {
    Eigen::MatrixXd out(m.rows(), static_cast<Eigen::Index>(keep.size()));
    for (std::size_t j = 0; j < keep.size(); ++j)
      out.col(static_cast<Eigen::Index>(j)) = m.col(keep[j]);
    return out;
  };
  d.qmat = select(q_full, q_keep);
  d.rmat = select(r_full, r_keep);
  for (int j : q_keep) d.q_terms.push_back(spec.q_terms[static_cast<std::size_t>(j)]);
  for (int j : r_keep) d.r_terms.push_back(spec.r_terms[static_cast<std::size_t>(j)]);

  for (std::size_t j = 0; j < spec.q_terms.size(); ++j)
    if (std::find(q_keep.begin(), q_keep.end(), static_cast<int>(j)) == q_keep.end())
      d.dropped.push_back("q:" + spec.q_terms[j].label());
  for (std::size_t j = 0; j < spec.r_terms.size(); ++j)
    if (std::find(r_keep.begin(), r_keep.end(), static_cast<int>(j)) == r_keep.end())
      d.dropped.push_back("r:" + spec.r_terms[j].label());

  return d;
}

}  // namespace csens
