#ifndef SKINF_LNA_HPP
#define SKINF_LNA_HPP

#include <vector>

#include "skinf/network.hpp"
#include "skinf/simulate.hpp"

namespace skinf {

/// Which components of the LNA system are integrated.
///   eta_only        eta
///   eta_G_V         eta, G, V
///   full_sens       eta, G, V, d eta / d c_i, d V / d c_i
///   simplified_sens eta, G, V, d eta / d c_i
enum class LnaMode { eta_only, eta_G_V, full_sens, simplified_sens };

struct LnaState {
  double t = 0.0;
  Vec eta;
  Mat G;
  Mat V;
  Mat d_eta;               // s x r, column i is d eta / d c_i
  std::vector<Mat> d_V;    // r of s x s

  /// eta = x, G = I, V = v0 (zero when empty), sensitivities zero.
  static LnaState initial(const Vec& x, double t, int num_reactions, const Mat& v0 = Mat());
};

/// eta, G, V at one time of a dense output grid.
struct LnaGridPoint {
  double t;
  Vec eta;
  Mat G;
  Mat V;
};

struct OdeTolerances {
  double abs = 1e-8;
  double rel = 1e-6;
};

/// Number of scalar ODE components integrated in `mode`.
int ode_dimension(int s, int r, LnaMode mode);

/// Integrates the LNA system from init.t to t1. When `grid` is non-null it is
/// filled with the solution at init.t, init.t + grid_dt, ..., t1 (the last
/// spacing may be shorter). Throws NumericalError with the failure time when
/// the step size collapses.
LnaState integrate_lna(const ReactionNetwork& net, const RateConstants& c, const LnaState& init,
                       double t1, LnaMode mode, double grid_dt = 0.0,
                       std::vector<LnaGridPoint>* grid = nullptr,
                       const OdeTolerances& tol = {});

/// Times t0, t0 + dt, ..., t1 (the final point is t1 exactly).
std::vector<double> make_grid(double t0, double t1, double dt);

/// Filtering distribution at one observation time plus the LNA solution over
/// the interval that ends there (empty for the first observation).
struct FilterStep {
  Vec a;
  Mat B;
  std::vector<LnaGridPoint> grid;
};

struct FilterOutput {
  double loglik = 0.0;
  Vec grad_log_c;                  // empty unless a sensitivity mode was used
  std::vector<FilterStep> steps;   // n + 1 entries
};

struct FilterOptions {
  LnaMode mode = LnaMode::eta_G_V;
  double grid_dt = 0.0;            // 0: no dense grid
  OdeTolerances tol;
};

/// Restarting LNA forward filter started from the known initial state x0.
/// Sensitivities are carried through the Kalman update, so the gradient is
/// that of the returned log-likelihood.
FilterOutput forward_filter(const ReactionNetwork& net, const RateConstants& c,
                            const SpeciesState& x0, const Dataset& data,
                            const FilterOptions& opts = {});

/// One forecast term's derivative: 0.5 tr{(g g' - Psi^-1) dPsi} + g' dmu with
/// g = Psi^-1 (y - mu). Pass an empty dPsi for the mean-only variant.
double gaussian_loggrad_term(const Vec& y, const Vec& mu, const Mat& psi, const Vec& dmu,
                             const Mat& dpsi);

}  // namespace skinf

#endif  // SKINF_LNA_HPP
