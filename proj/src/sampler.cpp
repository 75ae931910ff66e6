#include "skinf/sampler.hpp"

#include "skinf/diagnostics.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

#include <boost/random/normal_distribution.hpp>

namespace skinf {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

bool lna_eval(const ParticleFilter& pf, const RateConstants& c, LnaMode mode, FilterOutput& out) {
  try {
    out = forward_filter(pf.network(), c, pf.initial_state(), pf.data(), pf.lna_options(mode));
    return std::isfinite(out.loglik);
  } catch (const NumericalError&) {
    return false;
  }
}

bool representable(const Vec& log_c) {
  const auto c = log_c.array().exp();
  return c.isFinite().all() && (c > 0.0).all();
}

std::vector<int> free_indices(const std::vector<bool>& free, int r) {
  std::vector<int> idx;
  for (int i = 0; i < r; ++i)
    if (free.empty() || free[static_cast<size_t>(i)]) idx.push_back(i);
  return idx;
}

}  // namespace

ProposalKind parse_proposal(std::string_view s) {
  if (s == "rwm") return ProposalKind::rwm;
  if (s == "mala") return ProposalKind::mala;
  if (s == "smala") return ProposalKind::smala;
  throw std::invalid_argument("unknown proposal '" + std::string(s) + "' (rwm, mala, smala)");
}

std::string_view to_string(ProposalKind p) {
  switch (p) {
    case ProposalKind::rwm: return "rwm";
    case ProposalKind::mala: return "mala";
    case ProposalKind::smala: return "smala";
  }
  return "?";
}

Prior Prior::standard(int r, double mean, double sd) {
  return {Vec::Constant(r, mean), Vec::Constant(r, sd)};
}

double Prior::log_density(const Vec& log_c) const {
  const Vec z = (log_c - mean).cwiseQuotient(sd);
  return -0.5 * z.squaredNorm() - sd.array().log().sum() -
         0.5 * static_cast<double>(mean.size()) * std::log(2.0 * std::numbers::pi);
}

Vec Prior::gradient(const Vec& log_c) const {
  return -(log_c - mean).cwiseQuotient(sd.cwiseProduct(sd));
}

void validate(const ChainConfig& cfg, int r) {
  if (!(cfg.lambda >= 0.0) || !std::isfinite(cfg.lambda)) throw std::invalid_argument("lambda must be non-negative");
  if (!(cfg.rho >= 0.0 && cfg.rho <= 1.0)) throw std::invalid_argument("rho must lie in [0, 1]");
  if (cfg.iterations < 1) throw std::invalid_argument("iterations must be positive");
  if (cfg.sigma_T.size() != 0 && (cfg.sigma_T.rows() != r || cfg.sigma_T.cols() != r))
    throw std::invalid_argument("sigma_T must be r x r");
  if (cfg.initial_log_c.size() != 0 && cfg.initial_log_c.size() != r)
    throw std::invalid_argument("initial log c has the wrong length");
  if (!cfg.free.empty() && static_cast<int>(cfg.free.size()) != r)
    throw std::invalid_argument("free mask has the wrong length");
  if (free_indices(cfg.free, r).empty()) throw std::invalid_argument("at least one parameter must be free");
}

double ChainOutput::alpha1() const { return iterations() ? static_cast<double>(stage1_accepts) / iterations() : 0.0; }
double ChainOutput::alpha21() const { return stage1_accepts ? static_cast<double>(accepts) / stage1_accepts : 0.0; }
double ChainOutput::alpha() const { return iterations() ? static_cast<double>(accepts) / iterations() : 0.0; }

ParameterProposal::ParameterProposal(ProposalKind kind, double lambda, const Mat& sigma_T,
                                     std::vector<bool> free)
    : kind_(kind), lambda_(lambda) {
  const auto r = static_cast<int>(sigma_T.rows());
  idx_ = free_indices(free, r);
  const auto k = static_cast<Eigen::Index>(idx_.size());
  sigma_.resize(k, k);
  for (Eigen::Index i = 0; i < k; ++i)
    for (Eigen::Index j = 0; j < k; ++j) sigma_(i, j) = sigma_T(idx_[i], idx_[j]);
  Eigen::LLT<Mat> llt(sigma_);
  if (llt.info() != Eigen::Success) throw std::invalid_argument("sigma_T must be positive definite");
  chol_ = llt.matrixL();
  log_det_ = 2.0 * chol_.diagonal().array().log().sum();
}

bool ParameterProposal::uses_gradient(const Vec& grad) const {
  if (kind_ == ProposalKind::rwm || grad.size() == 0) return false;
  for (int i : idx_)
    if (!std::isfinite(grad(i))) return false;
  return true;
}

Vec ParameterProposal::mean(const Vec& from, const Vec& grad) const {
  const auto k = static_cast<Eigen::Index>(idx_.size());
  Vec m(k);
  for (Eigen::Index i = 0; i < k; ++i) m(i) = from(idx_[i]);
  if (uses_gradient(grad)) {
    Vec g(k);
    for (Eigen::Index i = 0; i < k; ++i) g(i) = grad(idx_[i]);
    m += 0.5 * lambda_ * lambda_ * sigma_ * g;
  }
  return m;
}

Vec ParameterProposal::propose(const Vec& log_c, const Vec& grad, Rng& rng) const {
  boost::random::normal_distribution<double> nd;
  const auto k = static_cast<Eigen::Index>(idx_.size());
  Vec z(k);
  for (Eigen::Index i = 0; i < k; ++i) z(i) = nd(rng);
  const Vec next = mean(log_c, grad) + lambda_ * (chol_ * z);
  Vec out = log_c;
  for (Eigen::Index i = 0; i < k; ++i) out(idx_[i]) = next(i);
  return out;
}

double ParameterProposal::log_density(const Vec& to, const Vec& from, const Vec& grad_from) const {
  const auto k = static_cast<Eigen::Index>(idx_.size());
  if (lambda_ == 0.0) return 0.0;
  Vec d(k);
  const Vec m = mean(from, grad_from);
  for (Eigen::Index i = 0; i < k; ++i) d(i) = (to(idx_[i]) - m(i)) / lambda_;
  chol_.triangularView<Eigen::Lower>().solveInPlace(d);
  return -0.5 * d.squaredNorm() - static_cast<double>(k) * std::log(lambda_) - 0.5 * log_det_ -
         0.5 * static_cast<double>(k) * std::log(2.0 * std::numbers::pi);
}

void crank_nicolson(std::span<const double> u, double rho, Rng& rng, std::span<double> out) {
  if (u.size() != out.size()) throw std::invalid_argument("crank_nicolson: size mismatch");
  if (rho == 1.0) {
    std::copy(u.begin(), u.end(), out.begin());
    return;
  }
  boost::random::normal_distribution<double> nd;
  const double s = std::sqrt(1.0 - rho * rho);
  for (size_t i = 0; i < u.size(); ++i) out[i] = rho * u[i] + s * nd(rng);
}

double stage_one_log_ratio(double log_prior_new, double log_prior_old, double log_plna_new,
                           double log_plna_old, double log_q_reverse, double log_q_forward) {
  if (log_plna_new == kNegInf) return kNegInf;
  return (log_prior_new + log_plna_new + log_q_reverse) - (log_prior_old + log_plna_old + log_q_forward);
}

double stage_two_log_ratio(double log_phat_new, double log_phat_old, double log_plna_new,
                           double log_plna_old) {
  if (log_phat_new == kNegInf) return kNegInf;
  return (log_phat_new - log_phat_old) + (log_plna_old - log_plna_new);
}

ChainOutput run_chain(const ParticleFilter& pf, const Prior& prior, const ChainConfig& cfg,
                      const ChainObserver& observer) {
  const int r = pf.network().num_reactions();
  validate(cfg, r);
  if (prior.mean.size() != r || prior.sd.size() != r) throw std::invalid_argument("prior has the wrong length");
  const Mat sigma = cfg.sigma_T.size() ? cfg.sigma_T : Mat::Identity(r, r);
  const ParameterProposal proposal(cfg.proposal, cfg.lambda, sigma, cfg.free);
  Rng rng(cfg.seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  const bool gradient = cfg.proposal != ProposalKind::rwm;
  const LnaMode mode = cfg.proposal == ProposalKind::mala    ? LnaMode::full_sens
                       : cfg.proposal == ProposalKind::smala ? LnaMode::simplified_sens
                                                             : LnaMode::eta_G_V;
  const bool need_lna = cfg.delayed_acceptance || gradient || pf.uses_filter_grid();

  Vec lc = cfg.initial_log_c.size() ? cfg.initial_log_c : prior.mean;
  std::vector<double> u(pf.dimension());
  std::vector<double> u_new(u.size());
  draw_normals(u, rng);

  FilterOutput lna;
  double lplna = kNaN;
  Vec grad = Vec::Constant(r, kNaN);
  if (need_lna) {
    if (!lna_eval(pf, RateConstants::from_log(lc), mode, lna))
      throw NumericalError("surrogate likelihood is not finite at the initial parameters; choose a different start");
    lplna = lna.loglik;
    if (gradient) grad = lna.grad_log_c + prior.gradient(lc);
  }
  double lphat = pf.log_likelihood(RateConstants::from_log(lc), u, need_lna ? &lna : nullptr);
  if (!std::isfinite(lphat))
    throw NumericalError("likelihood estimate is not finite at the initial parameters; choose a different start");
  double lprior = prior.log_density(lc);

  ChainOutput out;
  const int n = cfg.iterations;
  out.log_c.resize(n, r);
  out.log_phat.resize(n);
  out.log_plna.resize(n);
  out.stage1.assign(static_cast<size_t>(n), 0);
  out.stage2.assign(static_cast<size_t>(n), 0);
  out.u_trace.resize(n);

  auto record = [&](int it, bool s1, bool s2) {
    out.log_c.row(it) = lc.transpose();
    out.log_phat(it) = lphat;
    out.log_plna(it) = lplna;
    out.stage1[static_cast<size_t>(it)] = s1;
    out.stage2[static_cast<size_t>(it)] = s2;
    out.u_trace(it) = u.empty() ? 0.0 : u[0];
    if (observer) observer(it, out);
  };

  const auto start = std::chrono::steady_clock::now();
  for (int it = 0; it < n; ++it) {
    if (!proposal.uses_gradient(grad) && gradient) ++out.gradient_fallbacks;
    const Vec lc_new = proposal.propose(lc, grad, rng);
    // Rates that overflow or underflow have zero posterior density.
    if (!representable(lc_new)) {
      record(it, false, false);
      continue;
    }
    const RateConstants c_new = RateConstants::from_log(lc_new);
    const double lprior_new = prior.log_density(lc_new);
    FilterOutput lna_new;
    double lplna_new = kNaN;
    Vec grad_new = Vec::Constant(r, kNaN);
    bool lna_ok = true;
    if (need_lna) {
      lna_ok = lna_eval(pf, c_new, mode, lna_new);
      if (lna_ok) {
        lplna_new = lna_new.loglik;
        if (gradient) grad_new = lna_new.grad_log_c + prior.gradient(lc_new);
      } else {
        lplna_new = kNegInf;
        ++out.numerical_failures;
      }
    }
    const double lq_fwd = proposal.log_density(lc_new, lc, grad);
    const double lq_rev = proposal.log_density(lc, lc_new, grad_new);

    bool s1 = true;
    if (cfg.delayed_acceptance)
      s1 = std::log(unif(rng)) < stage_one_log_ratio(lprior_new, lprior, lplna_new, lplna, lq_rev, lq_fwd);
    bool s2 = false;
    double lphat_new = kNegInf;
    if (s1) {
      ++out.stage1_accepts;
      crank_nicolson(u, cfg.rho, rng, u_new);
      if (lna_ok || !pf.uses_filter_grid()) {
        try {
          lphat_new = pf.log_likelihood(c_new, u_new, lna_ok && need_lna ? &lna_new : nullptr);
        } catch (const NumericalError&) {
          ++out.numerical_failures;
        }
      }
      const double la = cfg.delayed_acceptance
                            ? stage_two_log_ratio(lphat_new, lphat, lplna_new, lplna)
                            : (lphat_new == kNegInf ? kNegInf
                                                    : lprior_new + lphat_new + lq_rev - lprior - lphat - lq_fwd);
      s2 = cfg.force_stage_two || std::log(unif(rng)) < la;
    }
    if (s2) {
      ++out.accepts;
      lc = lc_new;
      std::swap(u, u_new);
      lphat = lphat_new;
      lplna = lplna_new;
      grad = std::move(grad_new);
      lprior = lprior_new;
    }
    record(it, s1, s2);
  }
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

SurrogatePoint surrogate_posterior(const ParticleFilter& pf, const Prior& prior, const Vec& log_c) {
  const FilterOutput f = forward_filter(pf.network(), RateConstants::from_log(log_c), pf.initial_state(),
                                        pf.data(), pf.lna_options(LnaMode::full_sens));
  return {f.loglik + prior.log_density(log_c), f.grad_log_c + prior.gradient(log_c)};
}

LaplaceApprox surrogate_laplace(const ParticleFilter& pf, const Prior& prior, const Vec& start,
                                const std::vector<bool>& free) {
  const int r = static_cast<int>(start.size());
  const std::vector<int> idx = free_indices(free, r);
  const auto k = static_cast<Eigen::Index>(idx.size());
  auto value = [&](const Vec& x) {
    if (!representable(x)) return SurrogatePoint{kNegInf, Vec::Constant(r, kNaN)};
    try {
      return surrogate_posterior(pf, prior, x);
    } catch (const NumericalError&) {
      return SurrogatePoint{kNegInf, Vec::Constant(r, kNaN)};
    }
  };
  auto hessian = [&](const Vec& x) {
    Mat h(k, k);
    for (Eigen::Index j = 0; j < k; ++j) {
      const double step = 1e-4;
      Vec a = x, b = x;
      a(idx[j]) += step;
      b(idx[j]) -= step;
      const Vec ga = value(a).grad;
      const Vec gb = value(b).grad;
      for (Eigen::Index i = 0; i < k; ++i) h(i, j) = (ga(idx[i]) - gb(idx[i])) / (2.0 * step);
    }
    symmetrize(h);
    return h;
  };

  LaplaceApprox out;
  Vec x = start;
  SurrogatePoint cur = value(x);
  if (!std::isfinite(cur.log_post)) throw NumericalError("surrogate posterior is not finite at the start");
  Mat neg_h;
  auto grad_free = [&](const SurrogatePoint& p) {
    Vec g(k);
    for (Eigen::Index i = 0; i < k; ++i) g(i) = p.grad(idx[i]);
    return g;
  };
  // Backtracking along `dir`; returns the accepted step length or 0.
  auto line_search = [&](const Vec& dir, Vec& trial, SurrogatePoint& next) {
    for (double t = 1.0; t > 1e-10; t *= 0.5) {
      trial = x;
      for (Eigen::Index i = 0; i < k; ++i) trial(idx[i]) += t * dir(i);
      next = value(trial);
      if (next.log_post > cur.log_post) return t;
    }
    return 0.0;
  };
  // Takes a backtracked step along `dir`; false when it made no real progress.
  auto advance = [&](const Vec& dir) {
    Vec trial;
    SurrogatePoint next;
    const double t = line_search(dir, trial, next);
    if (t == 0.0) return false;
    const double moved = (t * dir).cwiseAbs().maxCoeff();
    const double gain = next.log_post - cur.log_post;
    x = trial;
    cur = next;
    return moved >= 1e-7 && gain >= 1e-10;
  };
  for (out.iterations = 0; out.iterations < 200; ++out.iterations) {
    const Vec g = grad_free(cur);
    if (!g.allFinite()) break;
    const Vec dir = nearest_pd(-hessian(x), 1e-8).llt().solve(g);
    if (dir.allFinite() && advance(dir)) continue;
    // Newton stalled: steepest ascent with at most a unit move per coordinate.
    if (g.norm() == 0.0 || !advance(g / g.cwiseAbs().maxCoeff())) break;
  }
  neg_h = nearest_pd(-hessian(x), 1e-8);
  const Mat cov_free = neg_h.llt().solve(Mat::Identity(k, k));
  out.mode = x;
  out.covariance = Mat::Zero(r, r);
  for (Eigen::Index i = 0; i < k; ++i)
    for (Eigen::Index j = 0; j < k; ++j) out.covariance(idx[i], idx[j]) = cov_free(i, j);
  return out;
}

Mat tune_sigma(const Mat& pilot_log_c) {
  if (pilot_log_c.rows() < 100) throw std::invalid_argument("tuning needs at least 100 pilot samples");
  return nearest_pd(sample_covariance(pilot_log_c), 1e-10);
}

int tune_particles(int particles, double log_ratio_variance, double target) {
  if (particles < 1 || !(target > 0.0) || !std::isfinite(log_ratio_variance))
    throw std::invalid_argument("tune_particles: invalid input");
  return std::max(1, static_cast<int>(std::ceil(particles * log_ratio_variance / target - 1e-9)));
}

double tune_lambda(double lambda, double acceptance, ProposalKind kind) {
  const double lo = kind == ProposalKind::rwm ? 0.15 : 0.40;
  const double hi = kind == ProposalKind::rwm ? 0.30 : 0.55;
  if (acceptance < lo) return lambda * 0.5;
  if (acceptance > hi) return lambda * 1.5;
  return lambda;
}

double tune_lambda_mess(const ParticleFilter& pf, const Prior& prior, const ChainConfig& pilot,
                        const std::vector<double>& candidates) {
  if (candidates.empty()) throw std::invalid_argument("tune_lambda_mess: no candidates");
  double best = candidates.front(), best_mess = -1.0;
  for (double lambda : candidates) {
    ChainConfig cfg = pilot;
    cfg.lambda = lambda;
    const ChainOutput out = run_chain(pf, prior, cfg);
    const int burn = cfg.iterations / 5;
    const int r = static_cast<int>(out.log_c.cols());
    double mess = INFINITY;
    for (int j = 0; j < r; ++j) {
      if (!cfg.free.empty() && !cfg.free[static_cast<size_t>(j)]) continue;
      const Vec col = out.log_c.col(j).tail(out.log_c.rows() - burn);
      mess = std::min(mess, ess(std::span<const double>(col.data(), static_cast<size_t>(col.size()))));
    }
    if (mess > best_mess) {
      best_mess = mess;
      best = lambda;
    }
  }
  return best;
}

double tune_rho(const std::vector<RhoPilot>& pilots) {
  if (pilots.empty()) throw std::invalid_argument("tune_rho: no pilot runs");
  const RhoPilot* best = nullptr;
  for (const auto& p : pilots)
    if (p.u_ess >= p.mess && (!best || p.mess > best->mess)) best = &p;
  if (!best)
    for (const auto& p : pilots)
      if (!best || p.mess > best->mess) best = &p;
  return best->rho;
}

double log_ratio_variance(const ParticleFilter& pf, const RateConstants& c, double rho, int reps,
                          Rng& rng) {
  FilterOutput lna;
  const FilterOutput* lp = nullptr;
  if (pf.uses_filter_grid()) {
    lna = forward_filter(pf.network(), c, pf.initial_state(), pf.data(), pf.lna_options(LnaMode::eta_G_V));
    lp = &lna;
  }
  std::vector<double> u(pf.dimension()), v(pf.dimension());
  double s = 0.0, s2 = 0.0;
  int m = 0;
  for (int i = 0; i < reps; ++i) {
    draw_normals(u, rng);
    crank_nicolson(u, rho, rng, v);
    const double d = pf.log_likelihood(c, v, lp) - pf.log_likelihood(c, u, lp);
    if (!std::isfinite(d)) continue;
    s += d;
    s2 += d * d;
    ++m;
  }
  if (m < 2) return std::numeric_limits<double>::infinity();
  return (s2 - s * s / m) / (m - 1);
}

}  // namespace skinf
