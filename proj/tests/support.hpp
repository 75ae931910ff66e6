#ifndef SKINF_TESTS_SUPPORT_HPP
#define SKINF_TESTS_SUPPORT_HPP

// Statistical helpers and independent oracles shared by the test binaries.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>

#include "skinf/diagnostics.hpp"
#include "skinf/sampler.hpp"

namespace skinf::testing {

/// Kolmogorov distribution tail Q(lambda) = 2 sum (-1)^(k-1) exp(-2 k^2 lambda^2).
inline double kolmogorov_q(double lambda) {
  if (lambda < 0.2) return 1.0;
  double sum = 0.0;
  for (int k = 1; k <= 200; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    sum += (k % 2 ? 1.0 : -1.0) * term;
    if (term < 1e-16) break;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

inline double ks_statistic(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= v) ++i;
    while (j < b.size() && b[j] <= v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / a.size() - static_cast<double>(j) / b.size()));
  }
  return d;
}

/// Two-sample KS p-value with effective sizes (pass ESS for correlated chains).
inline double ks_two_sample_p(const std::vector<double>& a, const std::vector<double>& b, double na = 0,
                              double nb = 0) {
  if (na <= 0) na = static_cast<double>(a.size());
  if (nb <= 0) nb = static_cast<double>(b.size());
  const double ne = na * nb / (na + nb);
  const double sq = std::sqrt(ne);
  return kolmogorov_q((sq + 0.12 + 0.11 / sq) * ks_statistic(a, b));
}

/// One-sample KS p-value against a continuous CDF.
inline double ks_one_sample_p(std::vector<double> x, const std::function<double(double)>& cdf, double n_eff = 0) {
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    const double f = cdf(x[i]);
    d = std::max({d, (i + 1) / n - f, f - i / n});
  }
  if (n_eff <= 0) n_eff = n;
  const double sq = std::sqrt(n_eff);
  return kolmogorov_q((sq + 0.12 + 0.11 / sq) * d);
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

inline double chi_squared_p(double stat, double dof) {
  return boost::math::cdf(boost::math::complement(boost::math::chi_squared(dof), stat));
}

inline double mean(const std::vector<double>& x) {
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

inline double variance(const std::vector<double>& x) {
  const double m = mean(x);
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return s / static_cast<double>(x.size() - 1);
}

inline std::vector<double> column(const Mat& m, Eigen::Index j, Eigen::Index from = 0) {
  std::vector<double> out;
  for (Eigen::Index i = from; i < m.rows(); ++i) out.push_back(m(i, j));
  return out;
}

/// Exact Kalman filter for x' = A x + b + N(0, Q), y = P'x + N(0, Sigma),
/// started from the point mass x0 observed at the first time.
inline double kalman_loglik(const LinearGaussianModel& m, const Dataset& data, const Vec& x0) {
  const Mat& P = data.observation_model.P();
  const Mat& R = data.observation_model.sigma();
  double ll = log_mvn_density(data.y(0), P.transpose() * x0, R);
  Vec a = x0;
  Mat B = Mat::Zero(x0.size(), x0.size());
  for (int i = 0; i < data.num_intervals(); ++i) {
    const Vec mu = m.A * a + m.b;
    const Mat V = m.A * B * m.A.transpose() + m.Q;
    const Mat S = P.transpose() * V * P + R;
    const Vec y = data.y(i + 1);
    ll += log_mvn_density(y, P.transpose() * mu, S);
    const Mat K = V * P * S.inverse();
    a = mu + K * (y - P.transpose() * mu);
    B = V - K * P.transpose() * V;
  }
  return ll;
}

/// Chi-squared goodness of fit of binned draws to bin probabilities, with the
/// statistic deflated by n / ess for correlated draws.
struct ChiSquaredFit {
  double statistic;
  double p_value;
};
inline ChiSquaredFit chi_squared_fit(const std::vector<long>& counts, const std::vector<double>& probs,
                                     double ess) {
  double n = 0.0;
  for (long c : counts) n += static_cast<double>(c);
  double stat = 0.0;
  for (size_t k = 0; k < counts.size(); ++k) {
    const double e = n * probs[k];
    stat += (counts[k] - e) * (counts[k] - e) / e;
  }
  stat *= std::min(1.0, ess / n);
  return {stat, chi_squared_p(stat, static_cast<double>(counts.size() - 1))};
}

/// Lotka-Volterra data: one Gillespie realisation at integer times 0..n_obs-1
/// from the default rates and state, both species observed with N(0, sigma^2).
inline Dataset lv_dataset(int n_obs, std::uint64_t seed = 2024, double sigma = 1.0) {
  const auto lv = builtin("lotka_volterra");
  Vec times(n_obs);
  for (int i = 0; i < n_obs; ++i) times(i) = i;
  Rng rng(seed);
  const auto obs = ObservationModel::constant(Mat::Identity(2, 2), sigma * sigma * Mat::Identity(2, 2));
  return synthesize_dataset(lv.network, lv.rates, lv.initial_state, times, obs, rng, Generator::mjp).dataset;
}

/// Immigration-death data: kappa = 5, c = 0.5, x0 = 10, one Gillespie path
/// at integer times 0..n_obs-1 observed with N(0, sigma^2).
inline Dataset imd_dataset(int n_obs, std::uint64_t seed = 11, double sigma = 1.0) {
  const auto imd = builtin("immigration_death");
  Vec times(n_obs);
  for (int i = 0; i < n_obs; ++i) times(i) = i;
  Rng rng(seed);
  const auto obs = ObservationModel::constant(Mat::Identity(1, 1), sigma * sigma * Mat::Identity(1, 1));
  return synthesize_dataset(imd.network, imd.rates, imd.initial_state, times, obs, rng, Generator::mjp).dataset;
}

/// Exact jump-process log-likelihood of immigration-death data by the forward
/// algorithm on the truncated state space {0..box}. Requires unit spacing.
inline double imd_exact_loglik(const Dataset& data, double kappa, double c, int x0, int box = 80) {
  const auto imd = builtin("immigration_death");
  const auto cme = cme_transition_oracle(imd.network, RateConstants(Vec{{kappa, c}}),
                                         Eigen::VectorXi::Constant(1, box), 1.0);
  const auto& om = data.observation_model;
  const int n = static_cast<int>(cme.states.size());
  Vec dens(n);
  auto emit = [&](int i) {
    for (int k = 0; k < n; ++k) dens(k) = std::exp(om.log_density(data.y(i), cme.states[static_cast<size_t>(k)].cast<double>()));
  };
  Eigen::RowVectorXd alpha = Eigen::RowVectorXd::Zero(n);
  alpha(cme.index_of(Eigen::VectorXi::Constant(1, x0))) = 1.0;
  emit(0);
  alpha = alpha.cwiseProduct(dens.transpose());
  double ll = std::log(alpha.sum());
  alpha /= alpha.sum();
  for (int i = 0; i < data.num_intervals(); ++i) {
    alpha = alpha * cme.transition;
    emit(i + 1);
    alpha = alpha.cwiseProduct(dens.transpose());
    ll += std::log(alpha.sum());
    alpha /= alpha.sum();
  }
  return ll;
}

/// Normalised posterior on an even grid of log c values from unnormalised
/// log densities; returns bin probabilities for the given edges by
/// integrating a fine grid with the trapezoid rule.
struct GridPosterior {
  std::vector<double> x;
  std::vector<double> density;

  double mean() const {
    double m = 0.0, z = 0.0;
    for (size_t k = 0; k < x.size(); ++k) {
      m += x[k] * density[k];
      z += density[k];
    }
    return m / z;
  }
  double cdf(double v) const {
    double below = 0.0, total = 0.0;
    for (size_t k = 0; k + 1 < x.size(); ++k) {
      const double seg = 0.5 * (density[k] + density[k + 1]) * (x[k + 1] - x[k]);
      total += seg;
      if (x[k + 1] <= v) {
        below += seg;
      } else if (x[k] < v) {
        const double w = (v - x[k]) / (x[k + 1] - x[k]);
        const double dv = density[k] + w * (density[k + 1] - density[k]);
        below += 0.5 * (density[k] + dv) * (v - x[k]);
      }
    }
    return below / total;
  }
  std::vector<double> bin_probabilities(const std::vector<double>& edges) const {
    std::vector<double> p;
    for (size_t k = 0; k + 1 < edges.size(); ++k) p.push_back(cdf(edges[k + 1]) - cdf(edges[k]));
    p.front() += cdf(edges.front());
    p.back() += 1.0 - cdf(edges.back());
    return p;
  }
};

inline GridPosterior grid_posterior(double lo, double hi, int points, const std::function<double(double)>& log_post) {
  GridPosterior g;
  std::vector<double> lp;
  for (int k = 0; k < points; ++k) {
    g.x.push_back(lo + (hi - lo) * k / (points - 1));
    lp.push_back(log_post(g.x.back()));
  }
  const double top = *std::max_element(lp.begin(), lp.end());
  for (double v : lp) g.density.push_back(std::exp(v - top));
  return g;
}

/// Plain pseudo-marginal random walk on the free coordinates, written
/// independently of run_chain: fresh auxiliary draws at every proposal.
inline Mat reference_pmmh(const ParticleFilter& pf, const Prior& prior, Vec log_c, const std::vector<bool>& free,
                          double step, int iterations, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> nz;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<double> u(pf.dimension());
  auto estimate = [&](const Vec& lc) {
    for (auto& v : u) v = nz(rng);
    return pf.log_likelihood(RateConstants::from_log(lc), u);
  };
  double cur = estimate(log_c) + prior.log_density(log_c);
  Mat out(iterations, log_c.size());
  for (int it = 0; it < iterations; ++it) {
    Vec prop = log_c;
    for (Eigen::Index j = 0; j < log_c.size(); ++j)
      if (free.empty() || free[static_cast<size_t>(j)]) prop(j) += step * nz(rng);
    const double next = estimate(prop) + prior.log_density(prop);
    if (std::log(unif(rng)) < next - cur) {
      log_c = prop;
      cur = next;
    }
    out.row(it) = log_c.transpose();
  }
  return out;
}

}  // namespace skinf::testing

#endif  // SKINF_TESTS_SUPPORT_HPP
