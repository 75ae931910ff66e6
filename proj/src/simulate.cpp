#include "skinf/simulate.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <unsupported/Eigen/MatrixFunctions>

namespace skinf {

SpeciesState JumpPath::final_state(const ReactionNetwork& net) const {
  SpeciesState x = initial_state;
  for (const auto& e : events) x += net.stoichiometry_real().col(e.reaction);
  return x;
}

ObservationModel ObservationModel::constant(Mat P, Mat sigma) {
  if (sigma.rows() != P.cols() || sigma.cols() != P.cols())
    throw std::invalid_argument("observation covariance must be p x p");
  if ((sigma - sigma.transpose()).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + sigma.cwiseAbs().maxCoeff()))
    throw std::invalid_argument("observation covariance must be symmetric");
  Eigen::SelfAdjointEigenSolver<Mat> es(sigma);
  if (es.eigenvalues().minCoeff() < -1e-12)
    throw std::invalid_argument("observation covariance must be positive semi-definite");
  ObservationModel m;
  m.kind_ = NoiseKind::constant;
  m.p_ = std::move(P);
  m.sigma_ = std::move(sigma);
  return m;
}

ObservationModel ObservationModel::state_proportional(Mat P, double sigma2) {
  if (P.cols() != 1) throw std::invalid_argument("state-proportional noise requires p = 1");
  if (!(sigma2 > 0.0)) throw std::invalid_argument("sigma^2 must be positive");
  ObservationModel m;
  m.kind_ = NoiseKind::state_proportional;
  m.p_ = std::move(P);
  m.sigma2_ = sigma2;
  m.sigma_ = Mat::Zero(1, 1);
  return m;
}

ObservationModel ObservationModel::exact(int num_species) {
  ObservationModel m;
  m.kind_ = NoiseKind::exact;
  m.p_ = Mat::Identity(num_species, num_species);
  m.sigma_ = Mat::Zero(num_species, num_species);
  return m;
}

Mat ObservationModel::noise_covariance(const Vec& x) const {
  if (kind_ == NoiseKind::state_proportional) {
    Mat out(1, 1);
    out(0, 0) = sigma2_ * (p_.transpose() * x)(0);
    return out;
  }
  return sigma_;
}

double ObservationModel::log_density(const Vec& y, const Vec& x) const {
  const Vec mean = p_.transpose() * x;
  if (kind_ == NoiseKind::exact) {
    for (Eigen::Index i = 0; i < y.size(); ++i)
      if (std::abs(y(i) - mean(i)) > 1e-9 * (1.0 + std::abs(y(i))))
        return -std::numeric_limits<double>::infinity();
    return 0.0;
  }
  if (kind_ == NoiseKind::state_proportional) {
    const double var = sigma2_ * mean(0);
    if (!(var > 0.0)) return -std::numeric_limits<double>::infinity();
    const double r = y(0) - mean(0);
    return -0.5 * (std::log(2.0 * M_PI * var) + r * r / var);
  }
  return log_mvn_density(y, mean, sigma_);
}

void Dataset::validate() const {
  if (times.size() < 1) throw std::invalid_argument("dataset has no observations");
  if (observations.rows() != times.size())
    throw std::invalid_argument("dataset row count does not match the number of times");
  if (observations.cols() != observation_model.dim())
    throw std::invalid_argument("dataset has " + std::to_string(observations.cols()) +
                                " columns, observation model expects " +
                                std::to_string(observation_model.dim()));
  for (Eigen::Index i = 1; i < times.size(); ++i)
    if (!(times(i) > times(i - 1))) throw std::invalid_argument("observation times must be strictly increasing");
}

JumpPath gillespie(const ReactionNetwork& net, const RateConstants& c, const SpeciesState& x0,
                   double t0, double t_end, Rng& rng, std::int64_t max_events) {
  if (!(t_end > t0)) throw std::invalid_argument("gillespie: t_end must exceed t0");
  for (Eigen::Index j = 0; j < x0.size(); ++j)
    if (x0(j) < 0.0 || x0(j) != std::floor(x0(j)))
      throw std::invalid_argument("gillespie: initial state must be non-negative integers");
  JumpPath path{x0, t0, t_end, {}};
  SpeciesState x = x0;
  HazardWork w;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const auto cs = std::span<const double>(c.values().data(), static_cast<size_t>(c.size()));
  double t = t0;
  while (true) {
    net.evaluate(cs, {x.data(), static_cast<size_t>(x.size())}, w, 0);
    const double total = w.h.sum();
    if (!(total > 0.0)) break;
    std::exponential_distribution<double> expo(total);
    t += expo(rng);
    if (t > t_end) break;
    double u = unif(rng) * total;
    int nu = 0;
    const int r = net.num_reactions();
    for (; nu < r - 1; ++nu) {
      if (u < w.h(nu)) break;
      u -= w.h(nu);
    }
    while (w.h(nu) <= 0.0 && nu > 0) --nu;
    x += net.stoichiometry_real().col(nu);
    path.events.push_back({t, nu});
    if (static_cast<std::int64_t>(path.events.size()) > max_events)
      throw NumericalError("gillespie: more than " + std::to_string(max_events) +
                           " events in one interval (explosion)");
  }
  return path;
}

Vec euler_step(const ReactionNetwork& net, const RateConstants& c, const Vec& x, double dt,
               std::span<const double> z) {
  const Vec h = net.hazard(c, x);
  const Mat& S = net.stoichiometry_real();
  Vec next = x + S * h * dt;
  if (h.isZero(0.0)) return next;
  Mat beta = S * h.asDiagonal() * S.transpose() * dt;
  symmetrize(beta);
  const auto f = factor_psd_or_throw(beta, "euler_maruyama: diffusion matrix");
  next += f.lower * Eigen::Map<const Vec>(z.data(), static_cast<Eigen::Index>(z.size()));
  return next;
}

double euler_log_density(const ReactionNetwork& net, const RateConstants& c, const Vec& x,
                         const Vec& next, double dt) {
  const Vec h = net.hazard(c, x);
  const Mat& S = net.stoichiometry_real();
  Mat beta = S * h.asDiagonal() * S.transpose() * dt;
  symmetrize(beta);
  return log_mvn_density(next, x + S * h * dt, beta);
}

int euler_steps(double t0, double t_end, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("Euler step must be positive");
  const double ratio = (t_end - t0) / dt;
  const double m = std::round(ratio);
  if (m < 1.0 || std::abs(ratio - m) > 1e-9 * std::max(1.0, ratio))
    throw std::invalid_argument("Euler step does not divide the interval length");
  return static_cast<int>(m);
}

DiscretisedPath euler_maruyama(const ReactionNetwork& net, const RateConstants& c,
                               const SpeciesState& x0, double t0, double t_end, double dt,
                               std::span<const double> normals) {
  const int m = euler_steps(t0, t_end, dt);
  const int s = net.num_species();
  if (static_cast<int>(normals.size()) < m * s)
    throw std::invalid_argument("euler_maruyama: need m * s normals");
  DiscretisedPath path;
  path.grid.resize(m + 1);
  path.states.resize(m + 1, s);
  path.states.row(0) = x0.transpose();
  Vec x = x0;
  for (int k = 0; k < m; ++k) {
    path.grid(k) = t0 + k * dt;
    try {
      x = euler_step(net, c, x, dt, normals.subspan(static_cast<size_t>(k * s), static_cast<size_t>(s)));
    } catch (const NumericalError& e) {
      throw NumericalError(std::string(e.what()) + " at step " + std::to_string(k));
    }
    path.states.row(k + 1) = x.transpose();
  }
  path.grid(m) = t_end;
  return path;
}

DiscretisedPath euler_maruyama(const ReactionNetwork& net, const RateConstants& c,
                               const SpeciesState& x0, double t0, double t_end, double dt,
                               Rng& rng) {
  const int m = euler_steps(t0, t_end, dt);
  std::normal_distribution<double> norm;
  std::vector<double> z(static_cast<size_t>(m * net.num_species()));
  for (double& v : z) v = norm(rng);
  return euler_maruyama(net, c, x0, t0, t_end, dt, z);
}

SyntheticData synthesize_dataset(const ReactionNetwork& net, const RateConstants& c,
                                 const SpeciesState& x0, const Vec& times,
                                 const ObservationModel& obs, Rng& rng, Generator generator,
                                 double dt) {
  if (obs.num_species() != net.num_species())
    throw std::invalid_argument("observation matrix P must have s rows");
  const auto n1 = times.size();
  SyntheticData out;
  out.latent.resize(n1, net.num_species());
  Vec x = x0;
  out.latent.row(0) = x.transpose();
  for (Eigen::Index i = 1; i < n1; ++i) {
    if (generator == Generator::mjp) {
      x = gillespie(net, c, x, times(i - 1), times(i), rng).final_state(net);
    } else {
      auto p = euler_maruyama(net, c, x, times(i - 1), times(i), dt, rng);
      x = p.states.row(p.states.rows() - 1).transpose();
    }
    out.latent.row(i) = x.transpose();
  }
  const int p = obs.dim();
  Mat y(n1, p);
  std::normal_distribution<double> norm;
  for (Eigen::Index i = 0; i < n1; ++i) {
    const Vec xi = out.latent.row(i).transpose();
    Vec mean = obs.P().transpose() * xi;
    if (obs.is_exact()) {
      y.row(i) = mean.transpose();
      continue;
    }
    const Mat cov = obs.noise_covariance(xi);
    if (obs.kind() == NoiseKind::state_proportional && !(cov(0, 0) > 0.0))
      throw std::invalid_argument("state-proportional noise needs P'x > 0 at every observation time");
    Vec z(p);
    for (int k = 0; k < p; ++k) z(k) = norm(rng);
    const auto f = factor_psd_or_throw(cov, "synthesize_dataset: observation covariance");
    y.row(i) = (mean + f.lower * z).transpose();
  }
  out.dataset = Dataset{times, y, obs};
  return out;
}

double mjp_complete_loglik(const ReactionNetwork& net, const RateConstants& c,
                           const JumpPath& path) {
  SpeciesState x = path.initial_state;
  double t = path.start_time;
  double ll = 0.0;
  for (const auto& e : path.events) {
    const Vec h = net.hazard(c, x);
    ll -= h.sum() * (e.time - t);
    if (!(h(e.reaction) > 0.0)) return -std::numeric_limits<double>::infinity();
    ll += std::log(h(e.reaction));
    x += net.stoichiometry_real().col(e.reaction);
    t = e.time;
  }
  ll -= net.hazard(c, x).sum() * (path.end_time - t);
  return ll;
}

int CmeTransition::index_of(const Eigen::VectorXi& x) const {
  int idx = 0;
  int stride = 1;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    if (x(j) < 0 || x(j) > max_counts(j)) return -1;
    idx += stride * x(j);
    stride *= max_counts(j) + 1;
  }
  return idx;
}

CmeTransition cme_transition_oracle(const ReactionNetwork& net, const RateConstants& c,
                                    const Eigen::VectorXi& max_counts, double t) {
  const int s = net.num_species();
  if (max_counts.size() != s) throw std::invalid_argument("truncation needs one bound per species");
  long total = 1;
  for (int j = 0; j < s; ++j) total *= (max_counts(j) + 1);
  if (total > 5000) throw std::invalid_argument("CME oracle is limited to 5000 states");
  CmeTransition out;
  out.max_counts = max_counts;
  const auto n = static_cast<Eigen::Index>(total);
  out.states.reserve(static_cast<size_t>(n));
  for (Eigen::Index k = 0; k < n; ++k) {
    Eigen::VectorXi x(s);
    long rem = k;
    for (int j = 0; j < s; ++j) {
      x(j) = static_cast<int>(rem % (max_counts(j) + 1));
      rem /= (max_counts(j) + 1);
    }
    out.states.push_back(x);
  }
  Mat q = Mat::Zero(n, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const Vec h = net.hazard(c, out.states[static_cast<size_t>(k)].cast<double>());
    for (int i = 0; i < net.num_reactions(); ++i) {
      if (!(h(i) > 0.0)) continue;
      q(k, k) -= h(i);
      const Eigen::VectorXi next = out.states[static_cast<size_t>(k)] + net.stoichiometry().col(i);
      const int j = out.index_of(next);
      if (j >= 0) q(k, j) += h(i);
    }
  }
  out.transition = t == 0.0 ? Mat::Identity(n, n) : Mat((q * t).exp());
  for (Eigen::Index k = 0; k < n; ++k)
    out.max_leak = std::max(out.max_leak, 1.0 - out.transition.row(k).sum());
  if (out.max_leak > 1e-3)
    out.warning = "truncation too small: up to " + std::to_string(out.max_leak) +
                  " probability mass leaves the state box";
  return out;
}

Dataset eyam_dataset() {
  Vec times{{0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 4.0}};
  Mat y(8, 2);
  y << 254, 7, 235, 14, 201, 22, 153, 29, 121, 20, 110, 8, 97, 8, 83, 0;
  return Dataset{times, y, ObservationModel::exact(2)};
}

Dataset read_dataset_csv(const std::string& path, const ObservationModel& obs) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open dataset '" + path + "'");
  std::string line;
  if (!std::getline(in, line) || line.rfind("time", 0) != 0)
    throw std::invalid_argument("dataset '" + path + "' must start with a 'time,y1,...' header");
  std::vector<std::vector<double>> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw std::invalid_argument(path + ":" + std::to_string(lineno) + ": bad number '" + cell + "'");
      }
    }
    if (!rows.empty() && row.size() != rows.front().size())
      throw std::invalid_argument(path + ":" + std::to_string(lineno) + ": inconsistent column count");
    rows.push_back(std::move(row));
  }
  if (rows.empty() || rows.front().size() < 2) throw std::invalid_argument("dataset '" + path + "' has no data");
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto p = static_cast<Eigen::Index>(rows.front().size()) - 1;
  Dataset d{Vec(n), Mat(n, p), obs};
  for (Eigen::Index i = 0; i < n; ++i) {
    d.times(i) = rows[static_cast<size_t>(i)][0];
    for (Eigen::Index j = 0; j < p; ++j) d.observations(i, j) = rows[static_cast<size_t>(i)][static_cast<size_t>(j + 1)];
  }
  d.validate();
  return d;
}

void write_dataset_csv(const std::string& path, const Dataset& data) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write dataset '" + path + "'");
  out << "time";
  for (Eigen::Index j = 0; j < data.observations.cols(); ++j) out << ",y" << (j + 1);
  out << '\n' << std::setprecision(17);
  for (Eigen::Index i = 0; i < data.times.size(); ++i) {
    out << data.times(i);
    for (Eigen::Index j = 0; j < data.observations.cols(); ++j) out << ',' << data.observations(i, j);
    out << '\n';
  }
}

}  // namespace skinf
