#ifndef SKINF_NETWORK_HPP
#define SKINF_NETWORK_HPP

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "skinf/linalg.hpp"

namespace skinf {

/// Strictly positive rate constants, one per reaction.
class RateConstants {
 public:
  RateConstants() = default;
  explicit RateConstants(Vec c);
  static RateConstants from_log(const Vec& log_c);

  const Vec& values() const { return c_; }
  Vec log_values() const { return c_.array().log().matrix(); }
  double operator[](Eigen::Index i) const { return c_(i); }
  Eigen::Index size() const { return c_.size(); }

 private:
  Vec c_;
};

/// Species counts (MJP: non-negative integers stored as doubles; CLE: reals).
using SpeciesState = Vec;

/// Scratch space for hazard evaluations on hot paths.
struct HazardWork {
  Vec h;                    // r, clamped at zero
  Vec unit;                 // r, dh_i/dc_i
  Mat grad;                 // r x s, dh_i/dx_j
  std::vector<Mat> hess;    // r of s x s
};

/// Mass-action reaction network defined by reactant (A) and product (B)
/// coefficient matrices, both r x s. The stoichiometry S = (B - A)' is derived.
class ReactionNetwork {
 public:
  ReactionNetwork(std::vector<std::string> species, std::vector<std::string> rate_names,
                  Eigen::MatrixXi reactants, Eigen::MatrixXi products);

  int num_species() const { return static_cast<int>(species_.size()); }
  int num_reactions() const { return static_cast<int>(reactants_.rows()); }
  const std::vector<std::string>& species_names() const { return species_; }
  const std::vector<std::string>& rate_names() const { return rate_names_; }
  const Eigen::MatrixXi& reactants() const { return reactants_; }
  const Eigen::MatrixXi& products() const { return products_; }
  const Eigen::MatrixXi& stoichiometry() const { return stoich_; }
  const Mat& stoichiometry_real() const { return stoich_real_; }

  /// h_i(x) = c_i prod_j C(x_j, a_ij), falling-factorial binomial, clamped at 0.
  Vec hazard(const RateConstants& c, const SpeciesState& x) const;
  /// d h_i / d x_j (r x s); rows of clamped reactions are zero.
  Mat hazard_gradient(const RateConstants& c, const SpeciesState& x) const;
  /// S h(x).
  Vec drift(const RateConstants& c, const SpeciesState& x) const;
  /// F = d[S h(eta)]/d eta.
  Mat jacobian_F(const RateConstants& c, const Vec& eta) const;
  /// beta(x) = S diag{h(x)} S'.
  Mat diffusion_beta(const RateConstants& c, const SpeciesState& x) const;

  /// Fills work.h and work.unit; also work.grad when order >= 1 and
  /// work.hess when order >= 2.
  void evaluate(std::span<const double> c, std::span<const double> x, HazardWork& work,
                int order) const;

 private:
  struct Factor {
    int species;
    int order;
  };
  void check_state(Eigen::Index n) const;

  std::vector<std::string> species_;
  std::vector<std::string> rate_names_;
  Eigen::MatrixXi reactants_;
  Eigen::MatrixXi products_;
  Eigen::MatrixXi stoich_;
  Mat stoich_real_;
  std::vector<std::vector<Factor>> factors_;  // per reaction, species with a_ij > 0
};

struct BuiltinModel {
  ReactionNetwork network;
  RateConstants rates;
  SpeciesState initial_state;
};

/// Built-in models: "sir", "aphid", "lotka_volterra", "immigration_death".
BuiltinModel builtin(std::string_view model_id);
std::vector<std::string> builtin_ids();

/// Parses the plain-text model format:
///
///     species: X1 X2
///     X1 -> 2 X1 @ c1
///     X1 + X2 -> 2 X2 @ c2
///     X2 -> 0 @ c3
///
/// Lines starting with '#' are comments. An empty side is written as 0.
ReactionNetwork parse_model(std::string_view text);
ReactionNetwork load_model_file(const std::string& path);

}  // namespace skinf

#endif  // SKINF_NETWORK_HPP
