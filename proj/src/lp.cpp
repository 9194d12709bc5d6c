#include "outrigger/lp.hpp"

#include <algorithm>
#include <limits>
#include <atomic>
#include <cmath>
#include <numeric>
#include <string>

#include "outrigger/error.hpp"

namespace outrigger {

namespace {

constexpr double kMaxCondition = 1e12;
constexpr double kJitter = 1e-10;

double condition_number(const Matrix& G) {
  if (G.rows() == 1) return G(0, 0) > 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
  Eigen::SelfAdjointEigenSolver<Matrix> es(G, Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues().minCoeff();
  const double hi = es.eigenvalues().maxCoeff();
  if (!(lo > 0.0)) return std::numeric_limits<double>::infinity();
  return hi / lo;
}

}  // namespace

double solve_spd_with_jitter(const Matrix& G, const Vector& b, Vector& x, ErrorCode singular_code,
                             const char* what) {
  double cond = condition_number(G);
  if (cond <= kMaxCondition) {
    x = G.llt().solve(b);
    return cond;
  }
  Matrix J = G;
  const double jitter = kJitter * G.trace() / static_cast<double>(G.rows());
  J.diagonal().array() += jitter;
  cond = condition_number(J);
  if (!(cond <= kMaxCondition) || !(jitter > 0.0))
    fail(singular_code, std::string(what) + ": condition number exceeds 1e12 after jitter");
  x = J.llt().solve(b);
  return cond;
}

// ---------------------------------------------------------------------------

NeighborIndex::NeighborIndex(const Matrix& X) : X_(&X) {
  order_.resize(static_cast<std::size_t>(X.rows()));
  std::iota(order_.begin(), order_.end(), Index{0});
  std::stable_sort(order_.begin(), order_.end(),
                   [&](Index a, Index b) { return X(a, 0) < X(b, 0); });
  first_.reserve(order_.size());
  for (Index i : order_) first_.push_back(X(i, 0));
}

void NeighborIndex::query(const double* center, double radius, double q,
                          std::vector<Index>& out) const {
  out.clear();
  const Matrix& X = *X_;
  const int d = static_cast<int>(X.cols());
  auto lo = std::lower_bound(first_.begin(), first_.end(), center[0] - radius);
  auto hi = std::upper_bound(first_.begin(), first_.end(), center[0] + radius);
  double diff[16];
  std::vector<double> heap_diff;
  double* u = diff;
  if (d > 16) {
    heap_diff.resize(static_cast<std::size_t>(d));
    u = heap_diff.data();
  }
  for (auto it = lo; it != hi; ++it) {
    const Index i = order_[static_cast<std::size_t>(it - first_.begin())];
    for (int j = 0; j < d; ++j) u[j] = X(i, j) - center[j];
    if (lq_norm(u, d, q) <= radius) out.push_back(i);
  }
}

// ---------------------------------------------------------------------------

LocalPolynomial::LocalPolynomial(const Dataset& train, double h, int p, KernelSpec kernel)
    : data_(&train),
      h_(h),
      p_(p),
      kernel_(kernel),
      basis_(p, kernel.dim),
      kernel_c_(kernel.normalizer()),
      index_(train.X) {
  require(h > 0.0, "bandwidth must be positive");
  require(train.dim() == kernel.dim, "kernel dimension does not match the data",
          ErrorCode::DimensionMismatch);
}

LpFit LocalPolynomial::fit(const double* x0) const {
  const Matrix& X = data_->X;
  const Vector& Y = data_->Y;
  const int d = kernel_.dim;
  const Index pb = basis_.size();
  const double inv_h = 1.0 / h_;
  const double scale = kernel_c_ / std::pow(h_, d);

  thread_local std::vector<Index> window;
  index_.query(x0, h_, kernel_.norm_q, window);

  Matrix G = Matrix::Zero(pb, pb);
  Vector rhs = Vector::Zero(pb);
  Vector q(pb);
  thread_local std::vector<double> nu_buf;
  nu_buf.resize(static_cast<std::size_t>(d));
  double* nu = nu_buf.data();
  Index n_eff = 0;
  for (Index i : window) {
    for (int j = 0; j < d; ++j) nu[j] = (X(i, j) - x0[j]) * inv_h;
    const double w = scale * kernel_.profile(lq_norm(nu, d, kernel_.norm_q));
    if (!(w > 0.0)) continue;
    ++n_eff;
    basis_.eval(nu, q.data());
    G.selfadjointView<Eigen::Lower>().rankUpdate(q, w);
    rhs.noalias() += (w * Y(i)) * q;
  }
  if (n_eff < pb)
    fail(ErrorCode::InsufficientLocalData,
         "local polynomial fit has " + std::to_string(n_eff) + " weighted points, needs " +
             std::to_string(pb));
  G = G.selfadjointView<Eigen::Lower>();

  LpFit out;
  out.gram_condition = solve_spd_with_jitter(G, rhs, out.theta, ErrorCode::SingularGram,
                                             "local polynomial Gram matrix");
  out.estimate = out.theta(0);
  out.n_effective = n_eff;
  return out;
}

LpFit fit_lp(const Dataset& data, const Vector& x0, double h, int p, const KernelSpec& K) {
  K.validate();
  require(x0.size() == data.dim(), "x0 dimension does not match the data",
          ErrorCode::DimensionMismatch);
  return LocalPolynomial(data, h, p, K).fit(x0);
}

namespace {

Vector predict_impl(const Dataset& train, const Matrix& points, double h, int p,
                    const KernelSpec& K, bool parallel) {
  K.validate();
  require(points.rows() == 0 || points.cols() == train.dim(),
          "prediction points have the wrong dimension", ErrorCode::DimensionMismatch);
  const Index m = points.rows();
  Vector out(m);
  if (m == 0) return out;
  const LocalPolynomial lp(train, h, p, K);
  // Row-major copy so each point is contiguous.
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> P = points;

  std::atomic<Index> first_bad{m};
  std::vector<std::string> messages(static_cast<std::size_t>(m));
  std::vector<ErrorCode> codes(static_cast<std::size_t>(m), ErrorCode::InvalidArgument);

#pragma omp parallel for schedule(static) if (parallel)
  for (Index r = 0; r < m; ++r) {
    try {
      out(r) = lp.fit(P.row(r).data()).estimate;
    } catch (const Error& e) {
      messages[static_cast<std::size_t>(r)] = e.what();
      codes[static_cast<std::size_t>(r)] = e.code();
      Index cur = first_bad.load();
      while (r < cur && !first_bad.compare_exchange_weak(cur, r)) {
      }
    }
  }
  const Index bad = first_bad.load();
  if (bad < m)
    fail(codes[static_cast<std::size_t>(bad)],
         "prediction point " + std::to_string(bad) + ": " + messages[static_cast<std::size_t>(bad)]);
  return out;
}

}  // namespace

Vector predict_lp_many(const Dataset& train, const Matrix& points, double h, int p,
                       const KernelSpec& K) {
  return predict_impl(train, points, h, p, K, true);
}

Vector predict_lp_many_serial(const Dataset& train, const Matrix& points, double h, int p,
                              const KernelSpec& K) {
  return predict_impl(train, points, h, p, K, false);
}

}  // namespace outrigger
