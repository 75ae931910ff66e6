#ifndef SKINF_LINALG_HPP
#define SKINF_LINALG_HPP

#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace skinf {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Raised when a numerical routine cannot produce a usable result
/// (non-PD covariance after jitter, ODE step underflow, explosion, ...).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Lower-triangular factor of a symmetric PSD matrix.
///
/// Coordinates whose diagonal entry is exactly zero are treated as
/// degenerate: their rows and columns of the factor are zero. The remaining
/// block is Cholesky-factorised, adding jitter 1e-12, 1e-11, ..., 1e-6 to the
/// diagonal until it succeeds.
struct PsdFactor {
  Mat lower;                 // full size, zero rows/cols on degenerate coordinates
  std::vector<int> active;   // coordinates with positive variance
  double jitter = 0.0;
  double log_det_active = 0.0;
};

std::optional<PsdFactor> factor_psd(const Mat& a);

/// As factor_psd, throwing NumericalError naming `what` on failure.
PsdFactor factor_psd_or_throw(const Mat& a, const std::string& what);

/// log N(x; mean, cov), allowing degenerate coordinates (point mass).
/// Returns -inf when x disagrees with the mean on a degenerate coordinate
/// or when the covariance cannot be factorised.
double log_mvn_density(const Vec& x, const Vec& mean, const Mat& cov);

/// Same, with a precomputed factor.
double log_mvn_density(const Vec& x, const Vec& mean, const PsdFactor& f);

double std_normal_cdf(double z);

/// Numerically safe log(sum(exp(v))); -inf when every entry is -inf.
double log_sum_exp(std::span<const double> v);

inline void symmetrize(Mat& m) { m = 0.5 * (m + m.transpose()).eval(); }

/// Sample covariance of the rows of `samples`.
Mat sample_covariance(const Mat& samples);

/// Nearest (in Frobenius norm) symmetric matrix with eigenvalues >= floor.
Mat nearest_pd(const Mat& a, double floor = 1e-10);

}  // namespace skinf

#endif  // SKINF_LINALG_HPP
