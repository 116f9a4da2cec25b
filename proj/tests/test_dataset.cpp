#include <doctest.h>

#include "csens/dataset.hpp"
#include "test_helpers.hpp"

using namespace csens;

TEST_CASE("load_csv parses a small file") {
  const auto dir = testing::temp_dir("dataset");
  const auto path = (dir / "small.csv").string();
  testing::write_file(path, "y,x,w\n1.5,0,0.1\n2.5,1,0.2\n3.5,0,0.3\n4.5,1,0.4\n");
  const Sample s = load_csv(path, "y", "x", {"w"});
  CHECK(s.n() == 4);
  CHECK(s.y[0] == doctest::Approx(1.5));
  CHECK(s.x[1] == 1);
  CHECK(s.w(3, 0) == doctest::Approx(0.4));
}

TEST_CASE("load_csv rejects non-binary treatment") {
  const auto dir = testing::temp_dir("dataset");
  const auto path = (dir / "badx.csv").string();
  testing::write_file(path, "y,x,w\n1,0,0.1\n2,2,0.2\n");
  CHECK_THROWS_WITH_AS(load_csv(path, "y", "x", {"w"}),
                       doctest::Contains("non-binary treatment"), DataError);
}

TEST_CASE("load_csv names row and column of an empty cell") {
  const auto dir = testing::temp_dir("dataset");
  const auto path = (dir / "hole.csv").string();
  testing::write_file(path, "y,x,w\n1,0,0.1\n2,1,\n3,0,0.3\n");
  try {
    load_csv(path, "y", "x", {"w"});
    FAIL("expected DataError");
  } catch (const DataError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("row 3") != std::string::npos);
    CHECK(msg.find("'w'") != std::string::npos);
  }
}

TEST_CASE("load_csv reports missing columns") {
  const auto dir = testing::temp_dir("dataset");
  const auto path = (dir / "cols.csv").string();
  testing::write_file(path, "y,x\n1,0\n2,1\n");
  CHECK_THROWS_AS(load_csv(path, "y", "x", {"w"}), DataError);
}

namespace {

Sample two_cov_sample() {
  Sample s;
  s.y.resize(6);
  s.y << 1, 2, 3, 4, 5, 6;
  s.x.resize(6);
  s.x << 0, 1, 0, 1, 0, 1;
  s.w.resize(6, 2);
  s.w << 0.3, 1.0, -0.2, 0.5, 0.9, -1.1, 0.1, 0.0, -0.7, 2.0, 1.4, 0.3;
  s.names = {"a", "b"};
  return s;
}

}  // namespace

TEST_CASE("build_design column counts") {
  const Sample s = two_cov_sample();
  const DesignMatrices lin = build_design(s, DesignSpec::linear({"a", "b"}));
  CHECK(lin.d_q() == 4);  // 1, x, a, b
  CHECK(lin.d_w() == 3);  // 1, a, b
  const DesignMatrices inter = build_design(s, DesignSpec::interacted({"a", "b"}));
  CHECK(inter.d_q() == 6);  // adds x*a, x*b
}

TEST_CASE("duplicate design term is dropped with a warning entry") {
  const Sample s = two_cov_sample();
  DesignSpec spec = DesignSpec::linear({"a", "b"});
  spec.q_terms.push_back(Term{false, "a", 1});  // duplicate of the 'a' column
  const DesignMatrices d = build_design(s, spec);
  CHECK(d.d_q() == 4);
  REQUIRE(d.dropped.size() == 1);
  CHECK(d.dropped[0] == "q:a");
}

TEST_CASE("builders reproduce matrix rows exactly") {
  const Sample s = two_cov_sample();
  const DesignMatrices d = build_design(s, DesignSpec::interacted({"a", "b"}));
  for (Eigen::Index i = 0; i < s.n(); ++i) {
    const Eigen::VectorXd q = d.q_row(s.x[i], s.w.row(i));
    const Eigen::VectorXd r = d.r_row(s.w.row(i));
    for (Eigen::Index j = 0; j < d.d_q(); ++j) CHECK(q[j] == d.qmat(i, j));
    for (Eigen::Index j = 0; j < d.d_w(); ++j) CHECK(r[j] == d.rmat(i, j));
  }
}

TEST_CASE("returned design has full column rank") {
  const Sample s = two_cov_sample();
  const DesignMatrices d = build_design(s, DesignSpec::interacted({"a", "b"}));
  const Eigen::MatrixXd gram = d.qmat.transpose() * d.qmat;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
  const Eigen::VectorXd pivots = ldlt.vectorD();
  CHECK(pivots.minCoeff() > 1e-10 * pivots.maxCoeff());
}

TEST_CASE("unknown covariate in a term is rejected") {
  const Sample s = two_cov_sample();
  DesignSpec spec = DesignSpec::linear({"a", "b"});
  spec.q_terms.push_back(Term{false, "zz", 1});
  CHECK_THROWS_AS(build_design(s, spec), DataError);
}

TEST_CASE("sample validation catches bad inputs") {
  Sample s = two_cov_sample();
  s.x[0] = 2;
  CHECK_THROWS_AS(s.validate(), DataError);
  s = two_cov_sample();
  s.y[3] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(s.validate(), DataError);
  s = two_cov_sample();
  s.x.setZero();
  CHECK_THROWS_AS(s.validate(), DataError);
}
