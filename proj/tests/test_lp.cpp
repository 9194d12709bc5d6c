#include <cmath>
#include <random>
#include <string>

#include "doctest.h"
#include "outrigger/error.hpp"
#include "outrigger/lp.hpp"

using namespace outrigger;

namespace {

Dataset uniform_design(Index n, int d, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(lo, hi);
  Dataset data;
  data.X.resize(n, d);
  data.Y.resize(n);
  for (Index i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) data.X(i, j) = U(rng);
  return data;
}

Vector x0_of(std::initializer_list<double> v) {
  Vector out(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

const KernelSpec kEpan{};

}  // namespace

TEST_CASE("fit_lp: constant response is reproduced exactly") {
  Dataset data = uniform_design(300, 1, 1);
  data.Y.setConstant(3.25);
  for (int p : {0, 1, 2}) {
    const LpFit fit = fit_lp(data, x0_of({0.1}), 0.3, p, kEpan);
    CHECK(fit.estimate == doctest::Approx(3.25).epsilon(1e-13));
    CHECK(fit.n_effective > 0);
  }
}

TEST_CASE("fit_lp: linear response with symmetric design") {
  Dataset data;
  const int m = 41;
  data.X.resize(m, 1);
  data.Y.resize(m);
  for (int i = 0; i < m; ++i) {
    data.X(i, 0) = -1.0 + 2.0 * i / (m - 1);
    data.Y(i) = 2.0 * data.X(i, 0);
  }
  const double h = 0.5;
  const LpFit fit = fit_lp(data, x0_of({0.0}), h, 1, kEpan);
  REQUIRE(fit.theta.size() == 2);
  CHECK(std::abs(fit.theta(0)) < 1e-13);
  CHECK(fit.theta(1) == doctest::Approx(2.0 * h).epsilon(1e-12));
}

TEST_CASE("fit_lp: empty or too-small window") {
  Dataset data = uniform_design(50, 1, 2, 0.5, 1.0);
  data.Y.setOnes();
  try {
    fit_lp(data, x0_of({-0.5}), 0.2, 0, kEpan);
    FAIL("expected InsufficientLocalData");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InsufficientLocalData);
  }
  // one point in the window cannot carry a linear fit
  Dataset two;
  two.X = (Matrix(2, 1) << 0.0, 5.0).finished();
  two.Y = Vector::Ones(2);
  CHECK_THROWS_AS(fit_lp(two, x0_of({0.0}), 0.5, 1, kEpan), Error);
  CHECK_THROWS_AS(fit_lp(data, x0_of({0.7}), 0.0, 0, kEpan), Error);
  CHECK_THROWS_AS(fit_lp(data, x0_of({0.7, 0.1}), 0.2, 0, kEpan), Error);
}

TEST_CASE("fit_lp: collinear design gives SingularGram") {
  // All points at one location give a rank-one Gram. The jitter caps the
  // condition number near p_bar * 1e10, so only p_bar > 100 stays singular.
  Dataset small;
  small.X = Matrix::Constant(20, 1, 0.1);
  small.Y = Vector::LinSpaced(20, 0.0, 1.0);
  CHECK_NOTHROW(fit_lp(small, x0_of({0.0}), 0.5, 1, kEpan));

  Dataset data;
  data.X = Matrix::Constant(200, 3, 0.1);
  data.Y = Vector::LinSpaced(200, 0.0, 1.0);
  const KernelSpec K3{KernelName::Epanechnikov, 3, 2.0};
  REQUIRE(PolyBasis(7, 3).size() == 120);
  try {
    fit_lp(data, Vector::Zero(3), 0.5, 7, K3);
    FAIL("expected SingularGram");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::SingularGram);
  }
}

TEST_CASE("fit_lp: normal equations hold at the solution") {
  Dataset data = uniform_design(400, 2, 3);
  std::mt19937_64 rng(4);
  std::normal_distribution<double> N;
  for (Index i = 0; i < data.size(); ++i) data.Y(i) = std::sin(3 * data.X(i, 0)) + data.X(i, 1) + N(rng);
  const Vector x0 = x0_of({0.1, -0.2});
  const double h = 0.5;
  for (int p : {0, 1, 2}) {
    const LpFit fit = fit_lp(data, x0, h, p, KernelSpec{KernelName::Epanechnikov, 2, 2.0});
    Vector g = Vector::Zero(fit.theta.size());
    double scale = 0.0;
    for (Index i = 0; i < data.size(); ++i) {
      const Vector u = data.X.row(i).transpose() - x0;
      const ScaledEval s = scaled_eval(KernelSpec{KernelName::Epanechnikov, 2, 2.0}, p, h, u);
      const double r = data.Y(i) - s.basis.dot(fit.theta);
      g += s.weight * r * s.basis;
      scale += s.weight * std::abs(data.Y(i)) * s.basis.lpNorm<Eigen::Infinity>();
    }
    CHECK(g.lpNorm<Eigen::Infinity>() <= 1e-10 * scale);
  }
}

TEST_CASE("polynomial reproduction") {
  for (int d : {1, 2})
    for (int p : {0, 1, 2, 3}) {
      Dataset data = uniform_design(600, d, 10 + static_cast<std::uint64_t>(p));
      // a fixed polynomial of total degree p
      auto poly = [p, d](const double* x) {
        double v = 1.5;
        for (int j = 0; j < d; ++j) {
          double xp = 1.0;
          for (int k = 1; k <= p; ++k) {
            xp *= x[j];
            v += (0.7 - 0.3 * k + 0.2 * j) * xp;
          }
        }
        if (p >= 2 && d == 2) v += 0.9 * x[0] * x[1];
        return v;
      };
      for (Index i = 0; i < data.size(); ++i) {
        const Vector xi = data.X.row(i).transpose();
        data.Y(i) = poly(xi.data());
      }
      const KernelSpec K{KernelName::Triweight, d, 2.0};
      for (double c : {-0.3, 0.0, 0.25}) {
        Vector x0 = Vector::Constant(d, c);
        CAPTURE(d);
        CAPTURE(p);
        CHECK(std::abs(fit_lp(data, x0, 0.6, p, K).estimate - poly(x0.data())) <= 1e-8);
      }
    }
}

TEST_CASE("affine equivariance in Y") {
  Dataset data = uniform_design(500, 1, 21);
  std::mt19937_64 rng(22);
  std::normal_distribution<double> N;
  for (Index i = 0; i < data.size(); ++i) data.Y(i) = std::cos(3.0 * data.X(i, 0)) + 0.5 * N(rng);
  Dataset t = data;
  const double a = -2.5, b = 7.0;
  t.Y = (a * data.Y.array() + b).matrix();
  for (int p : {0, 1, 2}) {
    const double f = fit_lp(data, x0_of({0.2}), 0.3, p, kEpan).estimate;
    const double g = fit_lp(t, x0_of({0.2}), 0.3, p, kEpan).estimate;
    CHECK(std::abs(g - (a * f + b)) <= 1e-10 * std::max(1.0, std::abs(g)));
  }
}

TEST_CASE("locality: zero-weight points do not change the fit") {
  Dataset data = uniform_design(400, 1, 31);
  std::mt19937_64 rng(32);
  std::normal_distribution<double> N;
  for (Index i = 0; i < data.size(); ++i) data.Y(i) = data.X(i, 0) + N(rng);
  const Vector x0 = x0_of({0.1});
  const double h = 0.25;
  std::vector<Index> keep;
  for (Index i = 0; i < data.size(); ++i)
    if (std::abs(data.X(i, 0) - 0.1) < h) keep.push_back(i);
  const Dataset local = data.subset(keep);
  for (int p : {0, 1}) {
    const LpFit a = fit_lp(data, x0, h, p, kEpan);
    const LpFit b = fit_lp(local, x0, h, p, kEpan);
    CHECK(a.estimate == b.estimate);
    CHECK(a.theta == b.theta);
  }
}

TEST_CASE("predict_lp_many: constants, training points, empty input, errors") {
  Dataset data = uniform_design(300, 1, 41);
  data.Y.setConstant(-1.5);
  const Matrix pts = (Matrix(3, 1) << -0.5, 0.0, 0.5).finished();
  const Vector pred = predict_lp_many(data, pts, 0.2, 1, kEpan);
  for (Index r = 0; r < 3; ++r) CHECK(pred(r) == doctest::Approx(-1.5).epsilon(1e-13));

  for (Index i = 0; i < data.size(); ++i) data.Y(i) = 1.0 - 2.0 * data.X(i, 0) + data.X(i, 0) * data.X(i, 0);
  const Matrix train_pts = data.X.topRows(25);
  const Vector fitted = predict_lp_many(data, train_pts, 0.3, 2, kEpan);
  for (Index r = 0; r < 25; ++r) {
    const double x = train_pts(r, 0);
    CHECK(std::abs(fitted(r) - (1.0 - 2.0 * x + x * x)) <= 1e-8);
  }

  CHECK(predict_lp_many(data, Matrix(0, 1), 0.2, 1, kEpan).size() == 0);

  const Matrix far = (Matrix(3, 1) << 0.0, 5.0, 0.1).finished();
  try {
    predict_lp_many(data, far, 0.2, 0, kEpan);
    FAIL("expected a failure at point 1");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InsufficientLocalData);
    CHECK(std::string(e.what()).find("point 1") != std::string::npos);
  }
}

TEST_CASE("predict_lp_many matches the serial reference") {
  Dataset data = uniform_design(2000, 2, 51);
  std::mt19937_64 rng(52);
  std::normal_distribution<double> N;
  for (Index i = 0; i < data.size(); ++i) data.Y(i) = data.X(i, 0) * data.X(i, 1) + N(rng);
  const Matrix pts = data.X.topRows(300) * 0.8;
  const KernelSpec K{KernelName::Epanechnikov, 2, 2.0};
  const Vector a = predict_lp_many(data, pts, 0.3, 1, K);
  const Vector b = predict_lp_many_serial(data, pts, 0.3, 1, K);
  CHECK(a == b);
}

TEST_CASE("solve_spd_with_jitter: accepted, jittered and rejected systems") {
  Vector x;
  const Matrix G = (Matrix(2, 2) << 2.0, 0.5, 0.5, 1.0).finished();
  const Vector b = (Vector(2) << 1.0, 2.0).finished();
  solve_spd_with_jitter(G, b, x, ErrorCode::SingularGram, "gram");
  CHECK((G * x - b).lpNorm<Eigen::Infinity>() < 1e-14);

  const Matrix Z = Matrix::Zero(2, 2);
  CHECK_THROWS_AS(solve_spd_with_jitter(Z, b, x, ErrorCode::SingularJacobian, "J"), Error);
  try {
    solve_spd_with_jitter(Z, b, x, ErrorCode::SingularJacobian, "J");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::SingularJacobian);
  }
}

TEST_CASE("NeighborIndex returns exactly the l_q ball") {
  Dataset data = uniform_design(500, 2, 61);
  const NeighborIndex idx(data.X);
  std::vector<Index> got;
  const double c[2] = {0.1, -0.3};
  for (double q : {1.0, 2.0, std::numeric_limits<double>::infinity()}) {
    idx.query(c, 0.4, q, got);
    std::sort(got.begin(), got.end());
    std::vector<Index> want;
    for (Index i = 0; i < data.size(); ++i) {
      const double u[2] = {data.X(i, 0) - c[0], data.X(i, 1) - c[1]};
      if (lq_norm(u, 2, q) <= 0.4) want.push_back(i);
    }
    CHECK(got == want);
  }
}
