#include "skinf/bridge.hpp"

#include <algorithm>
#include <cstring>
#include <limits>
#include <stdexcept>
#include <string>

namespace skinf {

namespace {

constexpr double kMaxLogRatio = 700.0;

void add_identities(IntervalCache& cache) {
  const int m = cache.size();
  const Mat& GT = cache.G.back();
  const Mat& VT = cache.V.back();
  cache.G_T_from.resize(static_cast<size_t>(m));
  cache.V_T_from.resize(static_cast<size_t>(m));
  for (int k = 0; k < m; ++k) {
    const Mat& Gk = cache.G[static_cast<size_t>(k)];
    Eigen::JacobiSVD<Mat> svd(Gk);
    const Vec sv = svd.singularValues();
    if (!(sv(sv.size() - 1) > 0.0) || sv(0) / sv(sv.size() - 1) > 1e12)
      throw NumericalError("fundamental matrix is singular at t = " + std::to_string(cache.t[static_cast<size_t>(k)]));
    Mat GTk = GT * Gk.inverse();
    Mat VTk = VT - GTk * cache.V[static_cast<size_t>(k)] * GTk.transpose();
    symmetrize(VTk);
    cache.G_T_from[static_cast<size_t>(k)] = std::move(GTk);
    cache.V_T_from[static_cast<size_t>(k)] = std::move(VTk);
  }
}

std::uint64_t fnv1a(std::span<const double> z) {
  std::uint64_t h = 1469598103934665603ULL;
  for (double v : z) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    for (int b = 0; b < 8; ++b) {
      h ^= (bits >> (8 * b)) & 0xffU;
      h *= 1099511628211ULL;
    }
  }
  return h ^ z.size();
}

// log p(y | x + S_i) - log p(y | x) for every reaction, clamped.
void ch_log_ratios(const ReactionNetwork& net, const Vec& x, double t, const IntervalCache& cache,
                   const Vec& y, const ObservationModel& obs, Vec& out) {
  const int r = net.num_reactions();
  out.setZero(r);
  const auto& times = cache.t;
  auto it = std::upper_bound(times.begin(), times.end(), t);
  size_t k = it == times.begin() ? 0 : static_cast<size_t>(it - times.begin()) - 1;
  k = std::min(k, times.size() - 2);
  const double w = std::clamp((t - times[k]) / (times[k + 1] - times[k]), 0.0, 1.0);
  const Vec eta_t = (1.0 - w) * cache.eta[k] + w * cache.eta[k + 1];
  const Mat GTt = (1.0 - w) * cache.G_T_from[k] + w * cache.G_T_from[k + 1];
  const Mat VTt = (1.0 - w) * cache.V_T_from[k] + w * cache.V_T_from[k + 1];
  const Mat& P = obs.P();
  Mat A = P.transpose() * VTt * P + bridge_noise(obs, cache.eta.back());
  symmetrize(A);
  Eigen::LLT<Mat> llt(A);
  for (double jit = 1e-12; llt.info() != Eigen::Success; jit *= 10.0) {
    if (jit > 1e-6 * (1.0 + A.diagonal().cwiseAbs().maxCoeff())) return;
    llt.compute(A + jit * Mat::Identity(A.rows(), A.cols()));
  }
  const Vec e = llt.matrixL().solve(y - P.transpose() * (cache.eta.back() + GTt * (x - eta_t)));
  const Mat PG = P.transpose() * GTt;
  const Mat& S = net.stoichiometry_real();
  for (int i = 0; i < r; ++i) {
    const Vec d = llt.matrixL().solve(PG * S.col(i));
    out(i) = std::clamp(e.dot(d) - 0.5 * d.squaredNorm(), -kMaxLogRatio, kMaxLogRatio);
  }
}

}  // namespace

BridgeType parse_bridge_type(std::string_view s) {
  if (s == "myopic") return BridgeType::myopic;
  if (s == "ch") return BridgeType::ch;
  if (s == "rb") return BridgeType::rb;
  if (s == "rbminus") return BridgeType::rbminus;
  throw std::invalid_argument("unknown bridge '" + std::string(s) + "' (myopic, ch, rb, rbminus)");
}

std::string_view to_string(BridgeType b) {
  switch (b) {
    case BridgeType::myopic: return "myopic";
    case BridgeType::ch: return "ch";
    case BridgeType::rb: return "rb";
    case BridgeType::rbminus: return "rbminus";
  }
  return "?";
}

IntervalCache build_interval_cache(const FilterOutput& filter, int interval, bool identities) {
  if (interval < 0 || interval + 1 >= static_cast<int>(filter.steps.size()))
    throw std::invalid_argument("interval index out of range");
  const auto& grid = filter.steps[static_cast<size_t>(interval + 1)].grid;
  if (grid.size() < 2) throw std::invalid_argument("forward filter was run without a dense grid");
  const Mat& B = filter.steps[static_cast<size_t>(interval)].B;
  IntervalCache cache;
  cache.flavour = CacheFlavour::per_iteration;
  for (const auto& p : grid) {
    cache.t.push_back(p.t);
    cache.eta.push_back(p.eta);
    cache.G.push_back(p.G);
    Mat v = p.V - p.G * B * p.G.transpose();
    symmetrize(v);
    cache.V.push_back(std::move(v));
  }
  if (identities) add_identities(cache);
  return cache;
}

IntervalCache build_particle_cache(const ReactionNetwork& net, const RateConstants& c,
                                   const Vec& x, double t0, double t1, double grid_dt,
                                   bool with_variance, bool identities, const OdeTolerances& tol) {
  IntervalCache cache;
  cache.flavour = CacheFlavour::per_particle;
  std::vector<LnaGridPoint> grid;
  const LnaState init = LnaState::initial(x, t0, net.num_reactions());
  integrate_lna(net, c, init, t1, with_variance ? LnaMode::eta_G_V : LnaMode::eta_only, grid_dt,
                &grid, tol);
  for (auto& p : grid) {
    cache.t.push_back(p.t);
    cache.eta.push_back(std::move(p.eta));
    if (with_variance) {
      cache.G.push_back(std::move(p.G));
      cache.V.push_back(std::move(p.V));
    }
  }
  if (with_variance && identities) add_identities(cache);
  return cache;
}

Mat bridge_noise(const ObservationModel& obs, const Vec& eta_T) {
  if (obs.kind() == NoiseKind::state_proportional) return obs.noise_covariance(eta_T);
  return obs.sigma();
}

double EventStream::uniform() {
  double u;
  if (pos_ < z_.size()) {
    u = std_normal_cdf(z_[pos_]);
  } else {
    if (!fallback_) fallback_.emplace(fnv1a(z_));
    u = std::uniform_real_distribution<double>(0.0, 1.0)(*fallback_);
  }
  ++pos_;
  return std::clamp(u, std::numeric_limits<double>::min(), 1.0 - 0x1p-53);
}

Vec conditioned_hazard(const ReactionNetwork& net, const RateConstants& c, const Vec& x, double t,
                       const IntervalCache& cache, const Vec& y, const ObservationModel& obs) {
  if (!cache.has_identities()) throw std::invalid_argument("conditioned hazard needs G and V identities");
  Vec ratio;
  ch_log_ratios(net, x, t, cache, y, obs, ratio);
  return net.hazard(c, x).cwiseProduct(ratio.array().exp().matrix());
}

PathProposal mjp_propose(const ReactionNetwork& net, const RateConstants& c, const Vec& x0,
                         double t0, double t1, EventStream& stream, const IntervalCache* ch,
                         const Vec& y, const ObservationModel& obs, std::int64_t max_events,
                         std::vector<JumpEvent>* events) {
  if (ch && !ch->has_identities()) throw std::invalid_argument("conditioned hazard needs G and V identities");
  const int r = net.num_reactions();
  const Mat& S = net.stoichiometry_real();
  const auto cs = std::span<const double>(c.values().data(), static_cast<size_t>(r));
  PathProposal out{x0, 0.0, 0.0, 0};
  Vec& x = out.x_end;
  HazardWork w;
  Vec lr;
  Vec hstar(r);
  double t = t0;
  while (true) {
    net.evaluate(cs, {x.data(), static_cast<size_t>(x.size())}, w, 0);
    const double h0 = w.h.sum();
    if (ch) {
      ch_log_ratios(net, x, t, *ch, y, obs, lr);
      hstar = w.h.cwiseProduct(lr.array().exp().matrix());
    } else {
      hstar = w.h;
    }
    const double hs0 = hstar.sum();
    if (!(hs0 > 0.0)) {
      out.log_p -= h0 * (t1 - t);
      break;
    }
    const double tau = stream.exponential() / hs0;
    if (t + tau > t1) {
      out.log_p -= h0 * (t1 - t);
      out.log_q -= hs0 * (t1 - t);
      break;
    }
    double u = stream.uniform() * hs0;
    int nu = 0;
    for (; nu < r - 1; ++nu) {
      if (u < hstar(nu)) break;
      u -= hstar(nu);
    }
    while (!(hstar(nu) > 0.0)) --nu;
    out.log_p += std::log(w.h(nu)) - h0 * tau;
    out.log_q += std::log(hstar(nu)) - hs0 * tau;
    t += tau;
    x += S.col(nu);
    if (events) events->push_back({t, nu});
    if (static_cast<std::int64_t>(++out.events) > max_events)
      throw NumericalError("more than " + std::to_string(max_events) + " events in one interval (explosion)");
  }
  return out;
}

std::vector<Vec> rho_hat(const IntervalCache& cache, const Vec& r0, const Vec& y,
                         const ObservationModel& obs) {
  if (!cache.has_identities()) throw std::invalid_argument("rho_hat needs G and V identities");
  const Mat& P = obs.P();
  const Vec& etaT = cache.eta.back();
  const Mat& GT = cache.G.back();
  Mat A = P.transpose() * cache.V.back() * P + bridge_noise(obs, etaT);
  symmetrize(A);
  Eigen::LLT<Mat> llt(A);
  if (llt.info() != Eigen::Success) throw NumericalError("rho_hat: end-point covariance is singular");
  const Vec sol = llt.solve(y - P.transpose() * (etaT + GT * r0));
  std::vector<Vec> out;
  out.reserve(cache.t.size());
  for (size_t k = 0; k < cache.t.size(); ++k)
    out.push_back(cache.G[k] * r0 + cache.V[k] * (cache.G_T_from[k].transpose() * (P * sol)));
  return out;
}

BridgeStep rb_step(const ReactionNetwork& net, const RateConstants& c, const Vec& x, int k,
                   const IntervalCache& cache, const Vec& y, const ObservationModel& obs,
                   std::span<const double> z, const std::vector<Vec>* rho) {
  const int s = net.num_species();
  const int last = cache.size() - 1;
  if (k < 0 || k >= last) throw std::invalid_argument("rb_step: grid index out of range");
  const auto ku = static_cast<size_t>(k);
  BridgeStep out;
  const bool pinned = obs.is_exact() || (obs.kind() == NoiseKind::constant && obs.sigma().norm() == 0.0 &&
                                          obs.P().isIdentity(0.0));
  if (k + 1 == last && pinned) {
    out.x_next = y;
    out.mean = y;
    out.cov = Mat::Zero(s, s);
    return out;
  }
  const double dt = cache.t[ku + 1] - cache.t[ku];
  const double delta = cache.end() - cache.t[ku];
  const Mat& S = net.stoichiometry_real();
  const Mat& P = obs.P();
  const Vec h = net.hazard(c, x);
  const Vec alpha = S * h;
  Mat beta = S * h.asDiagonal() * S.transpose();
  const Vec zero = Vec::Zero(s);
  const Vec& rho_k = rho ? (*rho)[ku] : zero;
  const Vec& rho_k1 = rho ? (*rho)[ku + 1] : zero;
  const Vec& rho_T = rho ? rho->back() : zero;
  const Vec drift = alpha - (cache.eta[ku + 1] - cache.eta[ku]) / dt - (rho_k1 - rho_k) / dt;
  const Vec res = x - cache.eta[ku] - rho_k;

  const Mat betaP = beta * P;
  Mat A = P.transpose() * betaP * delta + bridge_noise(obs, cache.eta.back());
  symmetrize(A);
  Eigen::LLT<Mat> llt(A);
  if (llt.info() != Eigen::Success) throw NumericalError("residual bridge: P'beta P + Sigma is singular");
  const Vec innov = y - P.transpose() * (cache.eta.back() + rho_T + res + drift * delta);
  const Vec mean_res = res + drift * dt + betaP * dt * llt.solve(innov);
  out.cov = beta * dt - betaP * dt * llt.solve(betaP.transpose() * dt);
  symmetrize(out.cov);
  out.mean = cache.eta[ku + 1] + rho_k1 + mean_res;
  const PsdFactor f = factor_psd_or_throw(out.cov, "residual bridge variance");
  out.x_next = out.mean + f.lower * Eigen::Map<const Vec>(z.data(), s);
  out.log_q = log_mvn_density(out.x_next, out.mean, f);
  return out;
}

PathProposal cle_propose(const ReactionNetwork& net, const RateConstants& c, const Vec& x0,
                         BridgeType kind, const IntervalCache& cache, const Vec& y,
                         const ObservationModel& obs, std::span<const double> z) {
  const int s = net.num_species();
  const int m = cache.size() - 1;
  if (static_cast<int>(z.size()) < m * s) throw std::invalid_argument("cle_propose: not enough normals");
  PathProposal out{x0, 0.0, 0.0, 0};
  if (kind == BridgeType::myopic) {
    for (int k = 0; k < m; ++k) {
      const double dt = cache.t[static_cast<size_t>(k + 1)] - cache.t[static_cast<size_t>(k)];
      out.x_end = euler_step(net, c, out.x_end, dt, z.subspan(static_cast<size_t>(k * s), static_cast<size_t>(s)));
    }
    return out;
  }
  if (kind == BridgeType::ch) throw std::invalid_argument("conditioned hazard applies to the jump process only");
  std::vector<Vec> rho;
  if (kind == BridgeType::rbminus) rho = rho_hat(cache, x0 - cache.eta.front(), y, obs);
  for (int k = 0; k < m; ++k) {
    const BridgeStep st = rb_step(net, c, out.x_end, k, cache, y, obs,
                                  z.subspan(static_cast<size_t>(k * s), static_cast<size_t>(s)),
                                  kind == BridgeType::rbminus ? &rho : nullptr);
    const double dt = cache.t[static_cast<size_t>(k + 1)] - cache.t[static_cast<size_t>(k)];
    out.log_p += euler_log_density(net, c, out.x_end, st.x_next, dt);
    out.log_q += st.log_q;
    out.x_end = st.x_next;
  }
  return out;
}

}  // namespace skinf
