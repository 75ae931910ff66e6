#ifndef SKINF_SIMULATE_HPP
#define SKINF_SIMULATE_HPP

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "skinf/network.hpp"

namespace skinf {

using Rng = std::mt19937_64;

/// Default cap on the number of reaction events in one simulated interval.
inline constexpr std::int64_t kMaxEvents = 10'000'000;

struct JumpEvent {
  double time;
  int reaction;
};

/// A realisation of the Markov jump process on (start_time, end_time].
struct JumpPath {
  SpeciesState initial_state;
  double start_time = 0.0;
  double end_time = 0.0;
  std::vector<JumpEvent> events;

  /// Replays the events from the initial state.
  SpeciesState final_state(const ReactionNetwork& net) const;
};

/// Euler-Maruyama path on a uniform grid.
struct DiscretisedPath {
  Vec grid;      // m + 1 times
  Mat states;    // (m + 1) x s
};

enum class NoiseKind { constant, state_proportional, exact };

/// Y = P'X + eps with eps ~ N(0, Sigma), N(0, sigma^2 P'X) (p = 1), or no
/// noise at all (P = I, Sigma = 0).
class ObservationModel {
 public:
  static ObservationModel constant(Mat P, Mat sigma);
  static ObservationModel state_proportional(Mat P, double sigma2);
  static ObservationModel exact(int num_species);

  NoiseKind kind() const { return kind_; }
  bool is_exact() const { return kind_ == NoiseKind::exact; }
  const Mat& P() const { return p_; }
  int num_species() const { return static_cast<int>(p_.rows()); }
  int dim() const { return static_cast<int>(p_.cols()); }
  const Mat& sigma() const { return sigma_; }
  double sigma2() const { return sigma2_; }

  /// Noise covariance at latent state x (for the state-proportional kind this
  /// is sigma^2 P'x).
  Mat noise_covariance(const Vec& x) const;
  /// log p(y | x); 0 or -inf for exact observation.
  double log_density(const Vec& y, const Vec& x) const;

 private:
  NoiseKind kind_ = NoiseKind::constant;
  Mat p_;
  Mat sigma_;
  double sigma2_ = 0.0;
};

/// Observations on a strictly increasing time grid.
struct Dataset {
  Vec times;           // n + 1
  Mat observations;    // (n + 1) x p
  ObservationModel observation_model;

  int num_intervals() const { return static_cast<int>(times.size()) - 1; }
  Vec y(int i) const { return observations.row(i).transpose(); }
  void validate() const;
};

/// Gillespie's direct method on (t0, t_end].
JumpPath gillespie(const ReactionNetwork& net, const RateConstants& c, const SpeciesState& x0,
                   double t0, double t_end, Rng& rng, std::int64_t max_events = kMaxEvents);

/// One Euler-Maruyama step x + S h(x) dt + chol(beta(x) dt) z.
Vec euler_step(const ReactionNetwork& net, const RateConstants& c, const Vec& x, double dt,
               std::span<const double> z);

/// log N(next; x + S h(x) dt, beta(x) dt).
double euler_log_density(const ReactionNetwork& net, const RateConstants& c, const Vec& x,
                         const Vec& next, double dt);

/// Number of Euler steps for an interval; throws unless dt divides it.
int euler_steps(double t0, double t_end, double dt);

/// Euler-Maruyama path driven by m * s standard normals.
DiscretisedPath euler_maruyama(const ReactionNetwork& net, const RateConstants& c,
                               const SpeciesState& x0, double t0, double t_end, double dt,
                               std::span<const double> normals);
DiscretisedPath euler_maruyama(const ReactionNetwork& net, const RateConstants& c,
                               const SpeciesState& x0, double t0, double t_end, double dt,
                               Rng& rng);

enum class Generator { mjp, cle };

struct SyntheticData {
  Dataset dataset;
  Mat latent;   // (n + 1) x s latent states at the observation times
};

SyntheticData synthesize_dataset(const ReactionNetwork& net, const RateConstants& c,
                                 const SpeciesState& x0, const Vec& times,
                                 const ObservationModel& obs, Rng& rng, Generator generator,
                                 double dt = 0.1);

/// log p(path | c) = sum log h_{nu_i}(x_{s_{i-1}}) - integral of the total hazard.
double mjp_complete_loglik(const ReactionNetwork& net, const RateConstants& c,
                           const JumpPath& path);

/// Transition matrix of the MJP on the box {0..max_counts_j}, by exponentiating
/// the truncated generator. Mass that would leave the box is dropped and reported.
struct CmeTransition {
  std::vector<Eigen::VectorXi> states;
  Mat transition;
  double max_leak = 0.0;
  std::string warning;

  int index_of(const Eigen::VectorXi& x) const;
  Eigen::VectorXi max_counts;
};

CmeTransition cme_transition_oracle(const ReactionNetwork& net, const RateConstants& c,
                                    const Eigen::VectorXi& max_counts, double t);

/// Eyam plague data (susceptibles, infectives), exactly observed.
Dataset eyam_dataset();

/// CSV with header `time,y1..yp`.
Dataset read_dataset_csv(const std::string& path, const ObservationModel& obs);
void write_dataset_csv(const std::string& path, const Dataset& data);

}  // namespace skinf

#endif  // SKINF_SIMULATE_HPP
