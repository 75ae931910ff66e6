#ifndef SKINF_BRIDGE_HPP
#define SKINF_BRIDGE_HPP

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "skinf/lna.hpp"

namespace skinf {

enum class BridgeType { myopic, ch, rb, rbminus };
enum class CacheFlavour { per_iteration, per_particle };

BridgeType parse_bridge_type(std::string_view s);
std::string_view to_string(BridgeType b);

/// LNA solution over one observation interval [t_i, T], expressed relative to
/// the interval start: eta_{t|t_i}, G_{t|t_i}, V_{t|t_i}. When built with
/// identities it also holds G_{T|t} and V_{T|t} at every grid time.
struct IntervalCache {
  CacheFlavour flavour = CacheFlavour::per_iteration;
  std::vector<double> t;
  std::vector<Vec> eta;
  std::vector<Mat> G;
  std::vector<Mat> V;
  std::vector<Mat> G_T_from;
  std::vector<Mat> V_T_from;

  int size() const { return static_cast<int>(t.size()); }
  double start() const { return t.front(); }
  double end() const { return t.back(); }
  bool has_variance() const { return !V.empty(); }
  bool has_identities() const { return !G_T_from.empty(); }
};

/// Cache for the interval from observation i to i + 1 reusing the filter's
/// dense grid (requires FilterOptions::grid_dt > 0).
IntervalCache build_interval_cache(const FilterOutput& filter, int interval, bool identities = true);

/// Cache integrated afresh from a particle's state with G = I, V = 0.
IntervalCache build_particle_cache(const ReactionNetwork& net, const RateConstants& c,
                                   const Vec& x, double t0, double t1, double grid_dt,
                                   bool with_variance, bool identities = true,
                                   const OdeTolerances& tol = {});

/// Observation noise covariance used inside the bridges: Sigma, or
/// sigma^2 P' eta_T for state-proportional noise.
Mat bridge_noise(const ObservationModel& obs, const Vec& eta_T);

/// Uniforms and unit exponentials drawn from a block of standard normals;
/// once the block is used up, draws come from a generator seeded by a hash
/// of the block.
class EventStream {
 public:
  explicit EventStream(std::span<const double> normals) : z_(normals) {}
  double uniform();
  double exponential() { return -std::log(uniform()); }
  std::size_t consumed() const { return pos_; }
  bool overflowed() const { return pos_ > z_.size(); }

 private:
  std::span<const double> z_;
  std::size_t pos_ = 0;
  std::optional<Rng> fallback_;
};

/// Conditioned hazard h_i(x) p(y | x + S_i) / p(y | x) at time t, with the
/// LNA transition quantities linearly interpolated on the cache grid. The log
/// ratio is clamped to [-700, 700].
Vec conditioned_hazard(const ReactionNetwork& net, const RateConstants& c, const Vec& x, double t,
                       const IntervalCache& cache, const Vec& y, const ObservationModel& obs);

struct PathProposal {
  Vec x_end;
  double log_p = 0.0;   // model path density (MJP complete-data / Euler)
  double log_q = 0.0;   // proposal density
  std::size_t events = 0;
};

/// Jump process path over (t0, t1] from x0: myopic forward simulation when
/// `ch` is null, conditioned hazard otherwise.
PathProposal mjp_propose(const ReactionNetwork& net, const RateConstants& c, const Vec& x0,
                         double t0, double t1, EventStream& stream, const IntervalCache* ch,
                         const Vec& y, const ObservationModel& obs, std::int64_t max_events = kMaxEvents,
                         std::vector<JumpEvent>* events = nullptr);

/// Conditional expected residual on the cache grid for initial residual r0.
std::vector<Vec> rho_hat(const IntervalCache& cache, const Vec& r0, const Vec& y,
                         const ObservationModel& obs);

struct BridgeStep {
  Vec x_next;
  Vec mean;
  Mat cov;
  double log_q = 0.0;
};

/// Residual bridge step from grid index k to k + 1. With `rho` the extra
/// subtraction variant is used (x = eta + rho + r).
BridgeStep rb_step(const ReactionNetwork& net, const RateConstants& c, const Vec& x, int k,
                   const IntervalCache& cache, const Vec& y, const ObservationModel& obs,
                   std::span<const double> z, const std::vector<Vec>* rho = nullptr);

/// Discretised CLE path over the cache grid. For the myopic kind only the grid
/// times are used and log_p = log_q = 0, as the two cancel in the weight.
PathProposal cle_propose(const ReactionNetwork& net, const RateConstants& c, const Vec& x0,
                         BridgeType kind, const IntervalCache& cache, const Vec& y,
                         const ObservationModel& obs, std::span<const double> z);

}  // namespace skinf

#endif  // SKINF_BRIDGE_HPP
