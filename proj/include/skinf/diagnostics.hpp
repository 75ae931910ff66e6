#ifndef SKINF_DIAGNOSTICS_HPP
#define SKINF_DIAGNOSTICS_HPP

#include <span>
#include <string>
#include <vector>

#include "skinf/sampler.hpp"

namespace skinf {

struct EssResult {
  double ess = 0.0;
  bool degenerate = false;   // constant chain, reported as n
  bool antithetic = false;   // ess > n
};

/// Effective sample size n / tau with tau from Geyer's initial monotone
/// sequence estimator. Needs at least 100 samples. Antithetic chains are
/// capped at n log10(n).
EssResult ess_detail(std::span<const double> x);
double ess(std::span<const double> x);

/// Minimum ESS over the columns.
double min_ess(const Mat& samples);

struct Histogram {
  std::vector<double> edges;   // bins + 1
  std::vector<long> counts;
};
Histogram histogram(std::span<const double> x, int bins);

struct ParameterSummary {
  std::string name;
  double mean, sd, ess, mcse, q025, q500, q975;
};

struct RunSummary {
  std::vector<ParameterSummary> parameters;
  double mess = 0.0;
  double mess_per_second = 0.0;
  double alpha1 = 0.0;
  double alpha21 = 0.0;
  double alpha = 0.0;
  double seconds = 0.0;
  int iterations = 0;
};

/// Empirical quantile with linear interpolation (type 7).
double quantile(std::vector<double> x, double p);

RunSummary summarize(const ChainOutput& chain, const std::vector<std::string>& names, int burn_in = 0);

/// Chain CSV: iter,log_c_1..log_c_r,log_phat,log_plna,stage1_accept,stage2_accept
void write_chain_csv(const std::string& path, const ChainOutput& chain);
ChainOutput read_chain_csv(const std::string& path);

}  // namespace skinf

#endif  // SKINF_DIAGNOSTICS_HPP
