#include "skinf/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace skinf {

std::optional<PsdFactor> factor_psd(const Mat& a) {
  const auto n = a.rows();
  PsdFactor out;
  out.lower = Mat::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double d = a(i, i);
    if (!std::isfinite(d) || d < 0.0) {
      if (d < 0.0 && d > -1e-12) continue;  // round-off around a zero variance
      return std::nullopt;
    }
    if (d > 0.0) out.active.push_back(static_cast<int>(i));
  }
  const auto k = static_cast<Eigen::Index>(out.active.size());
  if (k == 0) return out;

  Mat sub(k, k);
  for (Eigen::Index i = 0; i < k; ++i)
    for (Eigen::Index j = 0; j < k; ++j) sub(i, j) = a(out.active[i], out.active[j]);

  double jitter = 0.0;
  Eigen::LLT<Mat> llt(sub);
  while (llt.info() != Eigen::Success) {
    jitter = jitter == 0.0 ? 1e-12 : jitter * 10.0;
    if (jitter > 1e-6 * (1.0 + 1e-9)) return std::nullopt;
    llt.compute(sub + jitter * Mat::Identity(k, k));
  }
  const Mat l = llt.matrixL();
  for (Eigen::Index i = 0; i < k; ++i) {
    if (!(l(i, i) > 0.0)) return std::nullopt;
    out.log_det_active += 2.0 * std::log(l(i, i));
    for (Eigen::Index j = 0; j <= i; ++j) out.lower(out.active[i], out.active[j]) = l(i, j);
  }
  out.jitter = jitter;
  return out;
}

PsdFactor factor_psd_or_throw(const Mat& a, const std::string& what) {
  auto f = factor_psd(a);
  if (!f) throw NumericalError(what + ": matrix is not positive semi-definite after jitter");
  return *std::move(f);
}

double log_mvn_density(const Vec& x, const Vec& mean, const PsdFactor& f) {
  const auto n = x.size();
  const auto k = static_cast<Eigen::Index>(f.active.size());
  std::vector<bool> is_active(static_cast<size_t>(n), false);
  for (int i : f.active) is_active[static_cast<size_t>(i)] = true;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (is_active[static_cast<size_t>(i)]) continue;
    const double tol = 1e-12 * (1.0 + std::abs(mean(i)));
    if (std::abs(x(i) - mean(i)) > tol) return -std::numeric_limits<double>::infinity();
  }
  if (k == 0) return 0.0;
  Vec r(k);
  Mat l(k, k);
  for (Eigen::Index i = 0; i < k; ++i) {
    r(i) = x(f.active[i]) - mean(f.active[i]);
    for (Eigen::Index j = 0; j < k; ++j) l(i, j) = f.lower(f.active[i], f.active[j]);
  }
  l.triangularView<Eigen::Lower>().solveInPlace(r);
  return -0.5 * (static_cast<double>(k) * std::log(2.0 * std::numbers::pi) + f.log_det_active +
                 r.squaredNorm());
}

double log_mvn_density(const Vec& x, const Vec& mean, const Mat& cov) {
  auto f = factor_psd(cov);
  if (!f) return -std::numeric_limits<double>::infinity();
  return log_mvn_density(x, mean, *f);
}

double std_normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double log_sum_exp(std::span<const double> v) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : v) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double acc = 0.0;
  for (double x : v) acc += std::exp(x - m);
  return m + std::log(acc);
}

Mat sample_covariance(const Mat& samples) {
  const auto n = samples.rows();
  const Eigen::RowVectorXd mean = samples.colwise().mean();
  const Mat centred = samples.rowwise() - mean;
  return centred.transpose() * centred / static_cast<double>(std::max<Eigen::Index>(n - 1, 1));
}

Mat nearest_pd(const Mat& a, double floor) {
  Mat sym = 0.5 * (a + a.transpose());
  Eigen::SelfAdjointEigenSolver<Mat> es(sym);
  Vec ev = es.eigenvalues().cwiseMax(floor);
  Mat out = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
  symmetrize(out);
  return out;
}

}  // namespace skinf
