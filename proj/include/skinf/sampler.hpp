#ifndef SKINF_SAMPLER_HPP
#define SKINF_SAMPLER_HPP

#include <cstdint>
#include <functional>
#include <string_view>
#include <vector>

#include "skinf/pfilter.hpp"

namespace skinf {

enum class ProposalKind { rwm, mala, smala };
ProposalKind parse_proposal(std::string_view s);
std::string_view to_string(ProposalKind p);

/// Independent normal priors on log c.
struct Prior {
  Vec mean;
  Vec sd;

  static Prior standard(int r, double mean = 0.0, double sd = 10.0);
  double log_density(const Vec& log_c) const;
  Vec gradient(const Vec& log_c) const;
};

struct ChainConfig {
  ProposalKind proposal = ProposalKind::rwm;
  double lambda = 0.1;
  Mat sigma_T;                     // r x r; identity when empty
  double rho = 0.0;
  bool delayed_acceptance = false;
  int iterations = 1000;
  std::uint64_t seed = 1;
  Vec initial_log_c;               // prior mean when empty
  std::vector<bool> free;          // all parameters free when empty
  bool force_stage_two = false;    // test mode: Stage Two always accepts
};

void validate(const ChainConfig& cfg, int r);

struct ChainOutput {
  Mat log_c;                       // iterations x r
  Vec log_phat;
  Vec log_plna;                    // NaN when no surrogate was evaluated
  std::vector<std::uint8_t> stage1;
  std::vector<std::uint8_t> stage2;
  Vec u_trace;                     // first auxiliary variable
  long stage1_accepts = 0;
  long accepts = 0;
  long numerical_failures = 0;
  long gradient_fallbacks = 0;
  double seconds = 0.0;

  int iterations() const { return static_cast<int>(log_c.rows()); }
  double alpha1() const;
  double alpha21() const;
  double alpha() const;
};

/// Proposal mechanics in log c, restricted to the free coordinates.
class ParameterProposal {
 public:
  ParameterProposal(ProposalKind kind, double lambda, const Mat& sigma_T, std::vector<bool> free);

  /// Draws log_c*. Uses the gradient drift when the kind is MALA-like and
  /// `grad` is finite, a random walk otherwise.
  Vec propose(const Vec& log_c, const Vec& grad, Rng& rng) const;
  /// log q(to | from) for the kernel that `from` uses.
  double log_density(const Vec& to, const Vec& from, const Vec& grad_from) const;
  bool uses_gradient(const Vec& grad) const;

 private:
  Vec mean(const Vec& from, const Vec& grad) const;

  ProposalKind kind_;
  double lambda_;
  std::vector<int> idx_;
  Mat sigma_;        // free block
  Mat chol_;
  double log_det_ = 0.0;
};

/// u* = rho u + sqrt(1 - rho^2) omega.
void crank_nicolson(std::span<const double> u, double rho, Rng& rng, std::span<double> out);

/// log alpha_1 and log alpha_2|1 of the delayed-acceptance scheme (before
/// taking the minimum with 0).
double stage_one_log_ratio(double log_prior_new, double log_prior_old, double log_plna_new,
                           double log_plna_old, double log_q_reverse, double log_q_forward);
double stage_two_log_ratio(double log_phat_new, double log_phat_old, double log_plna_new,
                           double log_plna_old);

/// Optional per-iteration callback (iteration index, output so far).
using ChainObserver = std::function<void(int, const ChainOutput&)>;

/// Accelerated pseudo-marginal Metropolis-Hastings on log c.
ChainOutput run_chain(const ParticleFilter& pf, const Prior& prior, const ChainConfig& cfg,
                      const ChainObserver& observer = {});

/// Surrogate posterior log density and its gradient in log c.
struct SurrogatePoint {
  double log_post = 0.0;
  Vec grad;
};
SurrogatePoint surrogate_posterior(const ParticleFilter& pf, const Prior& prior, const Vec& log_c);

/// Mode and inverse negative Hessian of the surrogate posterior over the free
/// coordinates (fixed coordinates keep their starting values).
struct LaplaceApprox {
  Vec mode;
  Mat covariance;    // r x r, zero rows/columns for fixed parameters
  int iterations = 0;
};
LaplaceApprox surrogate_laplace(const ParticleFilter& pf, const Prior& prior, const Vec& start,
                                const std::vector<bool>& free = {});

// Tuning rules.

/// Sample covariance of the pilot draws, repaired to be positive definite.
Mat tune_sigma(const Mat& pilot_log_c);

/// Particle count scaled so that the log-ratio variance reaches `target`,
/// assuming variance proportional to 1/N.
int tune_particles(int particles, double log_ratio_variance, double target = 1.0);

/// Halves lambda below the target acceptance band and multiplies it by 1.5
/// above it. Bands: [0.15, 0.30] for RWM and [0.40, 0.55] for MALA kinds.
double tune_lambda(double lambda, double acceptance, ProposalKind kind);

/// Scaling for delayed-acceptance schemes: runs `pilot` once per candidate
/// (same seed) and returns the candidate with the largest minimum ESS over
/// the free parameters, discarding the first fifth of each run.
double tune_lambda_mess(const ParticleFilter& pf, const Prior& prior, const ChainConfig& pilot,
                        const std::vector<double>& candidates);

struct RhoPilot {
  double rho;
  double mess;
  double u_ess;
};
/// Largest-mESS candidate among those whose auxiliary-variable ESS is at
/// least their mESS; the largest-mESS candidate overall when none qualifies.
double tune_rho(const std::vector<RhoPilot>& pilots);

/// Variance of log p_hat(u*) - log p_hat(u) at fixed c with u* a
/// Crank-Nicolson move of u (rho = 0: independent draws).
double log_ratio_variance(const ParticleFilter& pf, const RateConstants& c, double rho, int reps,
                          Rng& rng);

}  // namespace skinf

#endif  // SKINF_SAMPLER_HPP
