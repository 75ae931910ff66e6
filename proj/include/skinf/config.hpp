#ifndef SKINF_CONFIG_HPP
#define SKINF_CONFIG_HPP

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "skinf/sampler.hpp"

namespace skinf {

/// Run configuration as read from an INI file. Every key name is unique
/// across sections, so `--set key=value` needs no section prefix.
struct RunSpec {
  // [model]
  std::string model = "lotka_volterra";   // built-in id
  std::string model_file;                  // overrides `model` when set
  std::string inference = "cle";           // mjp | cle
  std::vector<double> x0;                  // built-in default when empty

  // [data]
  std::string dataset;                     // CSV path or "eyam"
  std::string noise = "constant";          // constant | state_proportional | exact
  std::vector<int> observed;               // 1-based species indices; all when empty
  double sigma = 1.0;                      // constant noise sd
  double sigma2 = 1.0;                     // state-proportional variance factor

  // [synthesis]
  std::vector<double> c_true;              // synthesis is requested when non-empty
  std::string times;                       // "start:step:end" or a list
  std::string generator = "mjp";
  std::uint64_t synth_seed = 1;

  // [prior]
  std::vector<double> prior_mean{0.0};     // one value or one per parameter
  std::vector<double> prior_sd{10.0};

  // [filter]
  int particles = 100;
  std::string bridge = "myopic";
  std::string bridge_ode = "iter";
  double dt = 0.1;
  int mjp_block = 0;                       // 0: sized from forward simulations
  bool sort = true;
  int replicates = 100;

  // [chain]
  std::string proposal = "rwm";
  double lambda = 0.1;
  std::vector<double> sigma_T;             // row-major r x r; identity when empty
  double rho = 0.0;
  bool delayed_acceptance = false;
  int iterations = 1000;
  std::uint64_t seed = 1;
  std::vector<double> init;                // prior mean when empty
  std::vector<int> fixed;                  // 1-based indices held at `init`

  // [tune]
  int pilot_iterations = 1000;
  int ratio_reps = 100;
  std::vector<double> rho_candidates{0.0, 0.9, 0.99};

  // [output]
  std::string output_dir = "out";
  int burn_in = 0;
  int bins = 30;

  bool operator==(const RunSpec&) const = default;
};

/// Parses INI text; unknown keys, keys in the wrong section and malformed
/// values throw std::invalid_argument.
RunSpec parse_config_text(const std::string& text);
RunSpec parse_config(const std::string& path);

/// Applies a `key=value` override.
void apply_override(RunSpec& spec, const std::string& assignment);

/// INI text that parses back to the same RunSpec.
std::string emit_config(const RunSpec& spec);

/// Checks ranges and combinations that do not need the model.
void validate(const RunSpec& spec);

/// Everything needed to run a command, resolved from a RunSpec.
struct Problem {
  std::unique_ptr<ReactionNetwork> network;
  Vec x0;
  Dataset data;
  Vec c_true;          // empty unless synthesised
  PfConfig filter;
  ChainConfig chain;
  Prior prior;
};

/// Builds the network, data (loading or synthesising) and configurations.
Problem resolve(const RunSpec& spec);

/// Observation model described by the spec for a network with s species.
ObservationModel observation_model(const RunSpec& spec, int s);

/// Parses "a:step:b" or a whitespace/comma separated list.
Vec parse_times(const std::string& text);

}  // namespace skinf

#endif  // SKINF_CONFIG_HPP
