#include "skinf/lna.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include <boost/numeric/odeint.hpp>

namespace skinf {

namespace odeint = boost::numeric::odeint;

namespace {

using OdeState = std::vector<double>;

int tri(int s) { return s * (s + 1) / 2; }

void pack_lower(const Mat& m, double* out) {
  const auto s = m.rows();
  for (Eigen::Index j = 0; j < s; ++j)
    for (Eigen::Index i = j; i < s; ++i) *out++ = m(i, j);
}

void unpack_lower(const double* in, Mat& m) {
  const auto s = m.rows();
  for (Eigen::Index j = 0; j < s; ++j)
    for (Eigen::Index i = j; i < s; ++i) {
      m(i, j) = *in;
      m(j, i) = *in++;
    }
}

struct Layout {
  int s, r;
  bool g, v, deta, dv;
  int off_g, off_v, off_deta, off_dv, size;

  Layout(int s_, int r_, LnaMode mode) : s(s_), r(r_) {
    g = v = mode != LnaMode::eta_only;
    deta = mode == LnaMode::full_sens || mode == LnaMode::simplified_sens;
    dv = mode == LnaMode::full_sens;
    off_g = s;
    off_v = off_g + (g ? s * s : 0);
    off_deta = off_v + (v ? tri(s) : 0);
    off_dv = off_deta + (deta ? r * s : 0);
    size = off_dv + (dv ? r * tri(s) : 0);
  }
};

class LnaSystem {
 public:
  LnaSystem(const ReactionNetwork& net, const RateConstants& c, const Layout& lay)
      : net_(net), c_(c.values()), lay_(lay), S_(net.stoichiometry_real()) {
    const int s = lay.s;
    F_.resize(s, s);
    V_.resize(s, s);
    dV_.resize(s, s);
    dF_.resize(s, s);
    M_.resize(lay.r, s);
    tmp_.resize(s, s);
  }

  void operator()(const OdeState& y, OdeState& dy, double t) {
    last_t = t;
    const int s = lay_.s;
    const int r = lay_.r;
    const int order = lay_.dv ? 2 : (lay_.g || lay_.v || lay_.deta ? 1 : 0);
    net_.evaluate({c_.data(), static_cast<size_t>(r)}, {y.data(), static_cast<size_t>(s)}, w_, order);
    Eigen::Map<Vec>(dy.data(), s) = S_ * w_.h;
    if (order == 0) return;
    F_.noalias() = S_ * w_.grad;
    if (lay_.g) {
      Eigen::Map<const Mat> G(y.data() + lay_.off_g, s, s);
      Eigen::Map<Mat>(dy.data() + lay_.off_g, s, s).noalias() = F_ * G;
    }
    if (lay_.v) {
      unpack_lower(y.data() + lay_.off_v, V_);
      tmp_.noalias() = F_ * V_;
      tmp_ += tmp_.transpose().eval();
      tmp_.noalias() += S_ * w_.h.asDiagonal() * S_.transpose();
      pack_lower(tmp_, dy.data() + lay_.off_v);
    }
    if (!lay_.deta) return;
    for (int i = 0; i < r; ++i) {
      Eigen::Map<const Vec> de(y.data() + lay_.off_deta + i * s, s);
      Eigen::Map<Vec> dde(dy.data() + lay_.off_deta + i * s, s);
      dde.noalias() = F_ * de;
      dde += S_.col(i) * w_.unit(i);
      if (!lay_.dv) continue;
      // d/dc_i of grad h: the explicit c_i dependence of row i plus the
      // Hessian acting on d eta_i.
      for (int l = 0; l < r; ++l) M_.row(l).noalias() = (w_.hess[static_cast<size_t>(l)] * de).transpose();
      M_.row(i) += w_.grad.row(i) / c_(i);
      dF_.noalias() = S_ * M_;
      Vec dh = w_.grad * de;
      dh(i) += w_.unit(i);
      unpack_lower(y.data() + lay_.off_dv + i * tri(s), dV_);
      tmp_.noalias() = F_ * dV_ + dF_ * V_;
      tmp_ += tmp_.transpose().eval();
      tmp_.noalias() += S_ * dh.asDiagonal() * S_.transpose();
      pack_lower(tmp_, dy.data() + lay_.off_dv + i * tri(s));
    }
  }

  double last_t = 0.0;

 private:
  const ReactionNetwork& net_;
  const Vec& c_;
  const Layout& lay_;
  const Mat& S_;
  HazardWork w_;
  Mat F_, V_, dV_, dF_, M_, tmp_;
};

void pack_state(const LnaState& st, const Layout& lay, OdeState& y) {
  const int s = lay.s;
  y.assign(static_cast<size_t>(lay.size), 0.0);
  Eigen::Map<Vec>(y.data(), s) = st.eta;
  if (lay.g) Eigen::Map<Mat>(y.data() + lay.off_g, s, s) = st.G;
  if (lay.v) pack_lower(st.V, y.data() + lay.off_v);
  if (lay.deta) Eigen::Map<Mat>(y.data() + lay.off_deta, s, lay.r) = st.d_eta;
  if (lay.dv)
    for (int i = 0; i < lay.r; ++i) pack_lower(st.d_V[static_cast<size_t>(i)], y.data() + lay.off_dv + i * tri(s));
}

LnaState unpack_state(const OdeState& y, const Layout& lay, double t, const LnaState& like) {
  const int s = lay.s;
  LnaState st = like;
  st.t = t;
  st.eta = Eigen::Map<const Vec>(y.data(), s);
  if (lay.g) st.G = Eigen::Map<const Mat>(y.data() + lay.off_g, s, s);
  if (lay.v) unpack_lower(y.data() + lay.off_v, st.V);
  if (lay.deta) st.d_eta = Eigen::Map<const Mat>(y.data() + lay.off_deta, s, lay.r);
  if (lay.dv)
    for (int i = 0; i < lay.r; ++i) unpack_lower(y.data() + lay.off_dv + i * tri(s), st.d_V[static_cast<size_t>(i)]);
  return st;
}

bool all_finite(const OdeState& y) {
  for (double v : y)
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace

LnaState LnaState::initial(const Vec& x, double t, int num_reactions, const Mat& v0) {
  const auto s = x.size();
  LnaState st;
  st.t = t;
  st.eta = x;
  st.G = Mat::Identity(s, s);
  st.V = v0.size() == 0 ? Mat::Zero(s, s) : v0;
  st.d_eta = Mat::Zero(s, num_reactions);
  st.d_V.assign(static_cast<size_t>(num_reactions), Mat::Zero(s, s));
  return st;
}

int ode_dimension(int s, int r, LnaMode mode) { return Layout(s, r, mode).size; }

std::vector<double> make_grid(double t0, double t1, double dt) {
  if (!(t1 > t0)) throw std::invalid_argument("grid end must exceed its start");
  std::vector<double> out{t0};
  if (dt > 0.0) {
    const double steps = (t1 - t0) / dt;
    const auto m = static_cast<long>(std::ceil(steps - 1e-9));
    for (long k = 1; k < m; ++k) out.push_back(t0 + static_cast<double>(k) * dt);
  }
  out.push_back(t1);
  return out;
}

LnaState integrate_lna(const ReactionNetwork& net, const RateConstants& c, const LnaState& init,
                       double t1, LnaMode mode, double grid_dt, std::vector<LnaGridPoint>* grid,
                       const OdeTolerances& tol) {
  if (!(t1 > init.t)) throw std::invalid_argument("integrate_lna: t1 must exceed the start time");
  const int s = net.num_species();
  const int r = net.num_reactions();
  const Layout lay(s, r, mode);
  LnaState like = init;
  if (lay.g && like.G.size() == 0) like.G = Mat::Identity(s, s);
  if (lay.v && like.V.size() == 0) like.V = Mat::Zero(s, s);
  if (lay.deta && like.d_eta.size() == 0) like.d_eta = Mat::Zero(s, r);
  if (lay.dv && like.d_V.size() != static_cast<size_t>(r)) like.d_V.assign(static_cast<size_t>(r), Mat::Zero(s, s));

  OdeState y;
  pack_state(like, lay, y);
  LnaSystem sys(net, c, lay);
  const std::vector<double> times = make_grid(init.t, t1, grid ? grid_dt : 0.0);
  if (grid) grid->clear();

  bool finite = true;
  double bad_t = init.t;
  auto observer = [&](const OdeState& x, double t) {
    if (!all_finite(x)) {
      if (finite) bad_t = t;
      finite = false;
      return;
    }
    if (!grid) return;
    LnaGridPoint p{t, Eigen::Map<const Vec>(x.data(), s), Mat(), Mat()};
    if (lay.g) p.G = Eigen::Map<const Mat>(x.data() + lay.off_g, s, s);
    if (lay.v) {
      p.V.resize(s, s);
      unpack_lower(x.data() + lay.off_v, p.V);
    }
    grid->push_back(std::move(p));
  };

  auto stepper = odeint::make_controlled(tol.abs, tol.rel, odeint::runge_kutta_dopri5<OdeState>());
  const double dt0 = std::min(0.01, (t1 - init.t) / 10.0);
  try {
    odeint::integrate_times(stepper, std::ref(sys), y, times.begin(), times.end(), dt0, observer,
                            odeint::max_step_checker(20000));
  } catch (const std::runtime_error& e) {
    throw NumericalError("LNA integration failed near t = " + std::to_string(sys.last_t) + ": " + e.what());
  }
  if (!finite || !all_finite(y))
    throw NumericalError("LNA solution became non-finite near t = " + std::to_string(finite ? sys.last_t : bad_t));
  return unpack_state(y, lay, t1, like);
}

double gaussian_loggrad_term(const Vec& y, const Vec& mu, const Mat& psi, const Vec& dmu,
                             const Mat& dpsi) {
  Eigen::LLT<Mat> llt(psi);
  if (llt.info() != Eigen::Success) throw NumericalError("gradient term: covariance is not positive definite");
  const Vec g = llt.solve(y - mu);
  double out = g.dot(dmu);
  if (dpsi.size() != 0) {
    const Mat inv = llt.solve(Mat::Identity(psi.rows(), psi.cols()));
    out += 0.5 * ((g * g.transpose() - inv).cwiseProduct(dpsi)).sum();
  }
  return out;
}

FilterOutput forward_filter(const ReactionNetwork& net, const RateConstants& c,
                            const SpeciesState& x0, const Dataset& data, const FilterOptions& opts) {
  data.validate();
  if (opts.mode == LnaMode::eta_only) throw std::invalid_argument("forward filter needs the LNA variance");
  if (x0.size() != net.num_species()) throw std::invalid_argument("initial state has the wrong dimension");
  const auto& obs = data.observation_model;
  if (obs.num_species() != net.num_species()) throw std::invalid_argument("observation matrix P must have s rows");
  const int s = net.num_species();
  const int r = net.num_reactions();
  const int p = obs.dim();
  const int n = data.num_intervals();
  const bool want_grad = opts.mode == LnaMode::full_sens || opts.mode == LnaMode::simplified_sens;
  const bool full = opts.mode == LnaMode::full_sens;
  const Mat& P = obs.P();

  FilterOutput out;
  out.steps.resize(static_cast<size_t>(n + 1));
  out.steps[0] = {x0, Mat::Zero(s, s), {}};
  out.loglik = obs.log_density(data.y(0), x0);
  Vec grad = Vec::Zero(r);
  if (want_grad) out.grad_log_c = grad;
  if (!std::isfinite(out.loglik)) return out;

  LnaState st = LnaState::initial(x0, data.times(0), r);
  std::vector<Mat> dpsi(static_cast<size_t>(r));
  Mat dmu(p, r);
  for (int i = 0; i < n; ++i) {
    st.t = data.times(i);
    st.G.setIdentity();
    auto& step = out.steps[static_cast<size_t>(i + 1)];
    const LnaState pr = integrate_lna(net, c, st, data.times(i + 1), opts.mode, opts.grid_dt,
                                      opts.grid_dt > 0.0 ? &step.grid : nullptr, opts.tol);
    const Vec y = data.y(i + 1);
    const Vec mu = P.transpose() * pr.eta;
    Mat psi = P.transpose() * pr.V * P;
    if (obs.kind() == NoiseKind::state_proportional) {
      if (!(mu(0) > 0.0))
        throw NumericalError("observation " + std::to_string(i + 1) + ": LNA mean is not positive");
      psi(0, 0) += obs.sigma2() * mu(0);
    } else {
      psi += obs.sigma();
    }
    symmetrize(psi);
    Eigen::LLT<Mat> llt(psi);
    if (llt.info() != Eigen::Success)
      throw NumericalError("forecast covariance is not positive definite at observation " + std::to_string(i + 1));
    const Vec resid = y - mu;
    const Vec gamma = llt.solve(resid);
    const Mat psi_inv = llt.solve(Mat::Identity(p, p));
    const Mat L = llt.matrixL();
    out.loglik += -0.5 * (p * std::log(2.0 * std::numbers::pi) +
                          2.0 * L.diagonal().array().log().sum() + resid.dot(gamma));

    if (want_grad) {
      dmu.noalias() = P.transpose() * pr.d_eta;
      const Mat gg = gamma * gamma.transpose() - psi_inv;
      for (int k = 0; k < r; ++k) {
        grad(k) += gamma.dot(dmu.col(k));
        if (!full) continue;
        Mat& dp = dpsi[static_cast<size_t>(k)];
        dp.noalias() = P.transpose() * pr.d_V[static_cast<size_t>(k)] * P;
        if (obs.kind() == NoiseKind::state_proportional) dp(0, 0) += obs.sigma2() * dmu(0, k);
        grad(k) += 0.5 * gg.cwiseProduct(dp).sum();
      }
    }

    LnaState next = LnaState::initial(Vec(), data.times(i + 1), r);
    if (obs.is_exact()) {
      next.eta = y;
      next.V = Mat::Zero(s, s);
      next.G = Mat::Identity(s, s);
      next.d_eta = Mat::Zero(s, r);
      next.d_V.assign(static_cast<size_t>(r), Mat::Zero(s, s));
    } else {
      const Mat VP = pr.V * P;
      const Mat K = VP * psi_inv;
      next.eta = pr.eta + K * resid;
      next.V = pr.V - K * VP.transpose();
      symmetrize(next.V);
      next.G = Mat::Identity(s, s);
      next.d_eta = Mat::Zero(s, r);
      next.d_V.assign(static_cast<size_t>(r), Mat::Zero(s, s));
      if (want_grad) {
        for (int k = 0; k < r; ++k) {
          if (full) {
            const Mat& dV = pr.d_V[static_cast<size_t>(k)];
            const Mat dK = (dV * P - K * dpsi[static_cast<size_t>(k)]) * psi_inv;
            next.d_eta.col(k) = pr.d_eta.col(k) + dK * resid - K * dmu.col(k);
            Mat dB = dV - dK * VP.transpose() - K * P.transpose() * dV;
            symmetrize(dB);
            next.d_V[static_cast<size_t>(k)] = std::move(dB);
          } else {
            next.d_eta.col(k) = pr.d_eta.col(k) - K * dmu.col(k);
          }
        }
      }
    }
    step.a = next.eta;
    step.B = next.V;
    st = std::move(next);
  }
  if (want_grad) out.grad_log_c = grad.cwiseProduct(c.values());
  return out;
}

}  // namespace skinf
