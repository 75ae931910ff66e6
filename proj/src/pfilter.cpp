#include "skinf/pfilter.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

#include <boost/random/normal_distribution.hpp>

namespace skinf {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double sanitize(double lw) { return lw < std::numeric_limits<double>::infinity() ? lw : kNegInf; }

int max_euler_steps(const Dataset& data, double dt) {
  int m = 0;
  for (int i = 0; i < data.num_intervals(); ++i)
    m = std::max(m, euler_steps(data.times(i), data.times(i + 1), dt));
  return m;
}

class SkmPropagator : public Propagator {
 public:
  SkmPropagator(const ReactionNetwork& net, const RateConstants& c, const Dataset& data,
                const PfConfig& cfg, const FilterOutput* lna)
      : net_(net), c_(c), data_(data), cfg_(cfg), lna_(lna) {
    block_ = cfg.model == ModelKind::mjp ? cfg.mjp_block : max_euler_steps(data, cfg.dt) * net.num_species();
  }

  int block_size() const override { return block_; }

  void begin_interval(int i) override {
    t0_ = data_.times(i);
    t1_ = data_.times(i + 1);
    y_ = data_.y(i + 1);
    const bool per_iter = cfg_.flavour == CacheFlavour::per_iteration;
    if (cfg_.bridge != BridgeType::myopic && per_iter) {
      const bool ids = cfg_.bridge == BridgeType::ch || cfg_.bridge == BridgeType::rbminus;
      cache_ = build_interval_cache(*lna_, i, ids);
    } else if (cfg_.model == ModelKind::cle) {
      cache_ = IntervalCache{};
      cache_.t = make_grid(t0_, t1_, cfg_.dt);
    }
  }

  double propagate(int, Vec& x, std::span<const double> z) override {
    const auto& obs = data_.observation_model;
    const bool per_part = cfg_.flavour == CacheFlavour::per_particle && cfg_.bridge != BridgeType::myopic;
    try {
      IntervalCache local;
      if (per_part) {
        const bool variance = cfg_.bridge != BridgeType::rb;
        local = build_particle_cache(net_, c_, x, t0_, t1_, cfg_.dt, variance, variance, cfg_.tol);
      }
      const IntervalCache& cache = per_part ? local : cache_;
      PathProposal p;
      if (cfg_.model == ModelKind::mjp) {
        EventStream stream(z);
        p = mjp_propose(net_, c_, x, t0_, t1_, stream, cfg_.bridge == BridgeType::ch ? &cache : nullptr,
                        y_, obs, cfg_.max_events);
        if (stream.overflowed()) ++overflows;
      } else {
        p = cle_propose(net_, c_, x, cfg_.bridge, cache, y_, obs, z);
      }
      x = std::move(p.x_end);
      return sanitize(obs.log_density(y_, x) + p.log_p - p.log_q);
    } catch (const NumericalError&) {
      return kNegInf;
    }
  }

  std::size_t overflows = 0;

 private:
  const ReactionNetwork& net_;
  const RateConstants& c_;
  const Dataset& data_;
  const PfConfig& cfg_;
  const FilterOutput* lna_;
  int block_ = 0;
  double t0_ = 0.0;
  double t1_ = 0.0;
  Vec y_;
  IntervalCache cache_;
};

}  // namespace

ModelKind parse_model_kind(std::string_view s) {
  if (s == "mjp") return ModelKind::mjp;
  if (s == "cle") return ModelKind::cle;
  throw std::invalid_argument("unknown inferential model '" + std::string(s) + "' (mjp, cle)");
}

std::string_view to_string(ModelKind m) { return m == ModelKind::mjp ? "mjp" : "cle"; }

void draw_normals(std::span<double> u, Rng& rng) {
  boost::random::normal_distribution<double> nd;
  for (double& v : u) v = nd(rng);
}

std::vector<int> systematic_resample(std::span<const double> weights, double uniform) {
  const auto n = static_cast<int>(weights.size());
  if (n == 0) throw std::invalid_argument("systematic_resample: no weights");
  double total = 0.0;
  for (double w : weights) {
    if (!std::isfinite(w) || w < 0.0) throw std::invalid_argument("systematic_resample: weights must be finite and non-negative");
    total += w;
  }
  if (!(total > 0.0)) throw std::invalid_argument("systematic_resample: weights sum to zero");
  std::vector<int> out(static_cast<size_t>(n));
  int idx = 0;
  double cum = weights[0];
  for (int j = 0; j < n; ++j) {
    const double pos = (uniform + j) / n * total;
    while (idx < n - 1 && cum <= pos) cum += weights[static_cast<size_t>(++idx)];
    out[static_cast<size_t>(j)] = idx;
  }
  return out;
}

std::vector<int> sort_permutation(const std::vector<Vec>& states) {
  std::vector<int> perm(states.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::stable_sort(perm.begin(), perm.end(), [&](int a, int b) {
    const Vec& x = states[static_cast<size_t>(a)];
    const Vec& y = states[static_cast<size_t>(b)];
    return std::lexicographical_compare(x.data(), x.data() + x.size(), y.data(), y.data() + y.size());
  });
  return perm;
}

PfRun run_particle_filter(Propagator& prop, const Dataset& data, const Vec& x0,
                          std::span<const double> u, const PfOptions& opts) {
  const int n = data.num_intervals();
  const int N = opts.particles;
  if (N < 1) throw std::invalid_argument("need at least one particle");
  const AuxLayout lay{n, N, prop.block_size()};
  if (u.size() != lay.dimension())
    throw std::invalid_argument("auxiliary variables have length " + std::to_string(u.size()) +
                                ", layout needs " + std::to_string(lay.dimension()));
  const auto& obs = data.observation_model;
  PfRun out;
  out.loglik = obs.log_density(data.y(0), x0);
  out.interval_loglik.push_back(out.loglik);
  if (!std::isfinite(out.loglik)) return out;

  std::vector<Vec> xs(static_cast<size_t>(N), x0);
  std::vector<Vec> next(static_cast<size_t>(N));
  std::vector<double> lw(static_cast<size_t>(N));
  std::vector<double> w(static_cast<size_t>(N));
  const double log_n = std::log(static_cast<double>(N));
  for (int i = 0; i < n; ++i) {
    prop.begin_interval(i);
    for (int k = 0; k < N; ++k)
      lw[static_cast<size_t>(k)] = sanitize(
          prop.propagate(i, xs[static_cast<size_t>(k)], u.subspan(lay.block_offset(i, k), static_cast<size_t>(lay.block))));
    const double lse = log_sum_exp(lw);
    const double li = lse - log_n;
    out.interval_loglik.push_back(li);
    if (!std::isfinite(li)) {
      out.loglik = kNegInf;
      return out;
    }
    out.loglik += li;
    if (obs.is_exact()) {
      const Vec y = data.y(i + 1);
      for (auto& x : xs) x = y;
      continue;
    }
    if (i == n - 1) break;
    std::vector<int> perm(static_cast<size_t>(N));
    if (opts.sort) {
      perm = sort_permutation(xs);
    } else {
      std::iota(perm.begin(), perm.end(), 0);
    }
    for (int j = 0; j < N; ++j) w[static_cast<size_t>(j)] = std::exp(lw[static_cast<size_t>(perm[static_cast<size_t>(j)])] - lse);
    const double uni = std::min(std_normal_cdf(u[lay.resample_offset(i)]), 1.0 - 0x1p-53);
    const auto anc = systematic_resample(w, uni);
    for (int j = 0; j < N; ++j) next[static_cast<size_t>(j)] = xs[static_cast<size_t>(perm[static_cast<size_t>(anc[static_cast<size_t>(j)])])];
    std::swap(xs, next);
  }
  return out;
}

void validate(const PfConfig& cfg, const Dataset& data) {
  if (cfg.particles < 1) throw std::invalid_argument("particles must be at least 1");
  if (cfg.bridge == BridgeType::ch && cfg.model != ModelKind::mjp)
    throw std::invalid_argument("bridge 'ch' requires the jump-process model (model = mjp)");
  if ((cfg.bridge == BridgeType::rb || cfg.bridge == BridgeType::rbminus) && cfg.model != ModelKind::cle)
    throw std::invalid_argument("residual bridges require the Langevin model (model = cle)");
  if (!(cfg.dt > 0.0)) throw std::invalid_argument("dt must be positive");
  if (cfg.model == ModelKind::mjp && cfg.mjp_block < 1) throw std::invalid_argument("mjp_block must be at least 1");
  if (cfg.model == ModelKind::cle) max_euler_steps(data, cfg.dt);
}

ParticleFilter::ParticleFilter(const ReactionNetwork& net, Dataset data, SpeciesState x0, PfConfig cfg)
    : net_(net), data_(std::move(data)), x0_(std::move(x0)), cfg_(cfg) {
  data_.validate();
  if (x0_.size() != net.num_species()) throw std::invalid_argument("initial state has the wrong dimension");
  if (data_.observation_model.num_species() != net.num_species())
    throw std::invalid_argument("observation matrix P must have s rows");
  validate(cfg_, data_);
}

AuxLayout ParticleFilter::layout() const {
  const int block = cfg_.model == ModelKind::mjp ? cfg_.mjp_block
                                                 : max_euler_steps(data_, cfg_.dt) * net_.num_species();
  return AuxLayout{data_.num_intervals(), cfg_.particles, block};
}

bool ParticleFilter::uses_filter_grid() const {
  return cfg_.bridge != BridgeType::myopic && cfg_.flavour == CacheFlavour::per_iteration;
}

FilterOptions ParticleFilter::lna_options(LnaMode mode) const {
  FilterOptions o;
  o.mode = mode;
  o.grid_dt = cfg_.dt;
  o.tol = cfg_.tol;
  return o;
}

double ParticleFilter::log_likelihood(const RateConstants& c, std::span<const double> u,
                                      const FilterOutput* lna) const {
  FilterOutput local;
  if (uses_filter_grid() && !lna) {
    local = forward_filter(net_, c, x0_, data_, lna_options(LnaMode::eta_G_V));
    lna = &local;
  }
  SkmPropagator prop(net_, c, data_, cfg_, lna);
  const PfRun run = run_particle_filter(prop, data_, x0_, u, {cfg_.particles, cfg_.sort});
  overflows_ = prop.overflows;
  return run.loglik;
}

int suggest_mjp_block(const ReactionNetwork& net, const RateConstants& c, const Vec& x0,
                      const Dataset& data, Rng& rng, int reps, double safety, int cap) {
  const int n = data.num_intervals();
  std::vector<double> mean(static_cast<size_t>(n), 0.0);
  for (int rep = 0; rep < reps; ++rep) {
    Vec x = x0;
    for (int i = 0; i < n; ++i) {
      if (data.observation_model.is_exact() && i > 0) x = data.y(i);
      const JumpPath p = gillespie(net, c, x, data.times(i), data.times(i + 1), rng);
      mean[static_cast<size_t>(i)] += (2.0 * static_cast<double>(p.events.size()) + 1.0) / reps;
      x = p.final_state(net);
    }
  }
  const double worst = *std::max_element(mean.begin(), mean.end());
  return std::clamp(static_cast<int>(std::ceil(safety * worst)), 16, cap);
}

LinearGaussianModel LinearGaussianModel::from_lna(const ReactionNetwork& net, const RateConstants& c,
                                                  const Vec& x_ref, double horizon) {
  const LnaState init = LnaState::initial(x_ref, 0.0, net.num_reactions());
  const LnaState end = integrate_lna(net, c, init, horizon, LnaMode::eta_G_V);
  return {end.G, end.eta - end.G * x_ref, end.V};
}

LinearGaussianPropagator::LinearGaussianPropagator(LinearGaussianModel model, const Dataset& data)
    : model_(std::move(model)), data_(data), chol_(factor_psd_or_throw(model_.Q, "transition covariance")) {}

double LinearGaussianPropagator::propagate(int interval, Vec& x, std::span<const double> z) {
  x = model_.A * x + model_.b + chol_.lower * Eigen::Map<const Vec>(z.data(), static_cast<Eigen::Index>(z.size()));
  return data_.observation_model.log_density(data_.y(interval + 1), x);
}

}  // namespace skinf
