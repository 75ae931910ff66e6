#ifndef SKINF_PFILTER_HPP
#define SKINF_PFILTER_HPP

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "skinf/bridge.hpp"

namespace skinf {

enum class ModelKind { mjp, cle };
ModelKind parse_model_kind(std::string_view s);
std::string_view to_string(ModelKind m);

/// Positions of the standard normals that drive one filter run: a block per
/// (interval, particle) for propagation followed by one normal per interval
/// for resampling.
struct AuxLayout {
  int intervals = 0;
  int particles = 0;
  int block = 0;

  std::size_t dimension() const {
    return static_cast<std::size_t>(intervals) * (static_cast<std::size_t>(particles) * block + 1);
  }
  std::size_t block_offset(int interval, int particle) const {
    return (static_cast<std::size_t>(interval) * particles + particle) * block;
  }
  std::size_t resample_offset(int interval) const {
    return static_cast<std::size_t>(intervals) * particles * block + interval;
  }
};

/// Fills u with independent standard normals.
void draw_normals(std::span<double> u, Rng& rng);

/// Systematic resampling with a single uniform: positions (uniform + j) / N
/// against the cumulative weights. Returns 0-based ancestor indices.
std::vector<int> systematic_resample(std::span<const double> weights, double uniform);

/// Permutation that orders the states lexicographically.
std::vector<int> sort_permutation(const std::vector<Vec>& states);

/// Moves one particle across an observation interval.
class Propagator {
 public:
  virtual ~Propagator() = default;
  /// Standard normals consumed per particle and interval.
  virtual int block_size() const = 0;
  virtual void begin_interval(int /*interval*/) {}
  /// Advances x from observation `interval` to the next and returns the log
  /// importance weight, observation density included.
  virtual double propagate(int interval, Vec& x, std::span<const double> z) = 0;
};

struct PfOptions {
  int particles = 1;
  bool sort = true;
};

struct PfRun {
  double loglik = 0.0;
  std::vector<double> interval_loglik;   // n + 1 terms, the first for y_{t0}
};

/// Generic particle filter driven entirely by u. Resampling is skipped after
/// the final interval and whenever observation is exact; in that case every
/// particle is placed on the observation.
PfRun run_particle_filter(Propagator& prop, const Dataset& data, const Vec& x0,
                          std::span<const double> u, const PfOptions& opts);

struct PfConfig {
  ModelKind model = ModelKind::cle;
  int particles = 100;
  BridgeType bridge = BridgeType::myopic;
  CacheFlavour flavour = CacheFlavour::per_iteration;
  double dt = 0.1;
  int mjp_block = 256;
  bool sort = true;
  std::int64_t max_events = kMaxEvents;
  OdeTolerances tol;
};

/// Checks the bridge/model pairing and the Euler grid; throws
/// std::invalid_argument with a readable message.
void validate(const PfConfig& cfg, const Dataset& data);

/// Particle filter for a reaction network observed through `data`.
class ParticleFilter {
 public:
  ParticleFilter(const ReactionNetwork& net, Dataset data, SpeciesState x0, PfConfig cfg);

  const ReactionNetwork& network() const { return net_; }
  const PfConfig& config() const { return cfg_; }
  const Dataset& data() const { return data_; }
  const SpeciesState& initial_state() const { return x0_; }
  AuxLayout layout() const;
  std::size_t dimension() const { return layout().dimension(); }
  /// Whether the bridges read the forward filter's dense grid.
  bool uses_filter_grid() const;
  /// Forward-filter options that produce the grid the bridges need.
  FilterOptions lna_options(LnaMode mode) const;

  /// log p_hat_u(D | c). `lna` must come from forward_filter with
  /// lna_options() when uses_filter_grid(); it is computed here if null.
  double log_likelihood(const RateConstants& c, std::span<const double> u,
                        const FilterOutput* lna = nullptr) const;

  /// Number of (interval, particle) event streams that ran past their block
  /// in the last call.
  std::size_t last_overflows() const { return overflows_; }

 private:
  const ReactionNetwork& net_;
  Dataset data_;
  SpeciesState x0_;
  PfConfig cfg_;
  mutable std::size_t overflows_ = 0;
};

/// Event-block size for the jump process: `safety` times the largest mean
/// number of normals consumed per interval in `reps` forward simulations at c,
/// bounded to [16, cap].
int suggest_mjp_block(const ReactionNetwork& net, const RateConstants& c, const Vec& x0,
                      const Dataset& data, Rng& rng, int reps = 20, double safety = 3.0,
                      int cap = 4096);

/// Linear-Gaussian state-space model x' = A x + b + N(0, Q), used to check the
/// particle filter against an exact Kalman filter.
struct LinearGaussianModel {
  Mat A;
  Vec b;
  Mat Q;

  /// Transition frozen from the LNA over `horizon` started at x_ref:
  /// A = G, b = eta - G x_ref, Q = V.
  static LinearGaussianModel from_lna(const ReactionNetwork& net, const RateConstants& c,
                                      const Vec& x_ref, double horizon);
};

class LinearGaussianPropagator : public Propagator {
 public:
  LinearGaussianPropagator(LinearGaussianModel model, const Dataset& data);
  int block_size() const override { return static_cast<int>(model_.b.size()); }
  double propagate(int interval, Vec& x, std::span<const double> z) override;

 private:
  LinearGaussianModel model_;
  const Dataset& data_;
  PsdFactor chol_;
};

}  // namespace skinf

#endif  // SKINF_PFILTER_HPP
