// skinf: command-line front end for simulation, likelihood estimation and
// particle MCMC on stochastic kinetic models.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "skinf/config.hpp"
#include "skinf/diagnostics.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace skinf;

namespace {

RunSpec load_spec(const std::string& path, const std::vector<std::string>& overrides) {
  RunSpec spec = path.empty() ? RunSpec{} : parse_config(path);
  for (const auto& o : overrides) apply_override(spec, o);
  validate(spec);
  return spec;
}

fs::path output_dir(const RunSpec& spec) {
  fs::path dir(spec.output_dir);
  fs::create_directories(dir);
  return dir;
}

Vec start_log_c(const Problem& pb) {
  if (pb.chain.initial_log_c.size()) return pb.chain.initial_log_c;
  if (pb.c_true.size()) return pb.c_true.array().log().matrix();
  return pb.prior.mean;
}

std::vector<double> to_vector(const Vec& v) { return {v.data(), v.data() + v.size()}; }

json summary_json(const RunSummary& s) {
  json j;
  j["iterations"] = s.iterations;
  j["seconds"] = s.seconds;
  j["mess"] = s.mess;
  j["mess_per_second"] = s.mess_per_second;
  j["alpha1"] = s.alpha1;
  j["alpha21"] = s.alpha21;
  j["alpha"] = s.alpha;
  for (const auto& p : s.parameters) {
    j["parameters"].push_back({{"name", p.name},
                               {"mean", p.mean},
                               {"sd", p.sd},
                               {"ess", p.ess},
                               {"mcse", p.mcse},
                               {"q025", p.q025},
                               {"q500", p.q500},
                               {"q975", p.q975}});
  }
  return j;
}

void write_histograms(const fs::path& path, const ChainOutput& chain, const std::vector<std::string>& names,
                      int burn_in, int bins) {
  std::ofstream out(path);
  out << "parameter,bin,lower,upper,count\n" << std::setprecision(17);
  for (Eigen::Index j = 0; j < chain.log_c.cols(); ++j) {
    std::vector<double> col;
    for (int i = burn_in; i < chain.iterations(); ++i) col.push_back(chain.log_c(i, j));
    const Histogram h = histogram(col, bins);
    for (size_t b = 0; b < h.counts.size(); ++b)
      out << names[static_cast<size_t>(j)] << ',' << b << ',' << h.edges[b] << ',' << h.edges[b + 1] << ','
          << h.counts[b] << '\n';
  }
}

void print_summary(const RunSummary& s, std::ostream& os) {
  os << std::setprecision(4);
  os << "parameter        mean         sd        ess       q025       q975\n";
  for (const auto& p : s.parameters)
    os << std::left << std::setw(10) << p.name << std::right << std::setw(11) << p.mean << std::setw(11) << p.sd
       << std::setw(11) << p.ess << std::setw(11) << p.q025 << std::setw(11) << p.q975 << '\n';
  os << "mESS " << s.mess << "  mESS/s " << s.mess_per_second << "  alpha1 " << s.alpha1 << "  alpha2|1 "
     << s.alpha21 << "  alpha " << s.alpha << "  seconds " << s.seconds << '\n';
}

int cmd_simulate(const RunSpec& spec) {
  if (spec.c_true.empty()) throw std::invalid_argument("simulate needs a [synthesis] block");
  const Problem pb = resolve(spec);
  const fs::path path = output_dir(spec) / "data.csv";
  write_dataset_csv(path.string(), pb.data);
  std::cout << "wrote " << pb.data.num_intervals() + 1 << " observations to " << path.string() << '\n';
  return 0;
}

int cmd_filter(const RunSpec& spec) {
  const Problem pb = resolve(spec);
  const ParticleFilter pf(*pb.network, pb.data, pb.x0, pb.filter);
  const RateConstants c = RateConstants::from_log(start_log_c(pb));
  Rng rng(spec.seed);
  std::vector<double> u(pf.dimension());
  std::vector<double> est;
  const auto t0 = std::chrono::steady_clock::now();
  for (int k = 0; k < spec.replicates; ++k) {
    draw_normals(u, rng);
    est.push_back(pf.log_likelihood(c, u));
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  double mean = 0.0, var = 0.0;
  for (double e : est) mean += e;
  mean /= static_cast<double>(est.size());
  for (double e : est) var += (e - mean) * (e - mean);
  var = est.size() > 1 ? var / static_cast<double>(est.size() - 1) : 0.0;

  const fs::path dir = output_dir(spec);
  std::ofstream out(dir / "filter.csv");
  out << "replicate,log_phat\n" << std::setprecision(17);
  for (size_t k = 0; k < est.size(); ++k) out << k << ',' << est[k] << '\n';
  json j{{"c", to_vector(c.values())},
         {"replicates", spec.replicates},
         {"particles", pb.filter.particles},
         {"mean", mean},
         {"variance", var},
         {"seconds", secs}};
  std::ofstream(dir / "filter.json") << j.dump(2) << '\n';
  std::cout << std::setprecision(8) << "log p_hat mean " << mean << "  variance " << var << "  ("
            << spec.replicates << " replicates, " << secs << " s)\n";
  return 0;
}

int cmd_sample(const RunSpec& spec) {
  const Problem pb = resolve(spec);
  const ParticleFilter pf(*pb.network, pb.data, pb.x0, pb.filter);
  const ChainOutput chain = run_chain(pf, pb.prior, pb.chain);
  const auto& names = pb.network->rate_names();
  const fs::path dir = output_dir(spec);
  write_chain_csv((dir / "chain.csv").string(), chain);
  const RunSummary s = summarize(chain, names, spec.burn_in);
  json j = summary_json(s);
  j["numerical_failures"] = chain.numerical_failures;
  j["gradient_fallbacks"] = chain.gradient_fallbacks;
  j["config"] = emit_config(spec);
  std::ofstream(dir / "summary.json") << j.dump(2) << '\n';
  write_histograms(dir / "histograms.csv", chain, names, spec.burn_in, spec.bins);
  print_summary(s, std::cout);
  return 0;
}

int cmd_tune(const RunSpec& spec) {
  const Problem pb = resolve(spec);
  const ParticleFilter pf(*pb.network, pb.data, pb.x0, pb.filter);
  const int r = pb.network->num_reactions();

  ChainConfig pilot = pb.chain;
  pilot.iterations = spec.pilot_iterations;
  pilot.initial_log_c = start_log_c(pb);
  const ChainOutput pchain = run_chain(pf, pb.prior, pilot);
  const int burn = pilot.iterations / 5;
  const Mat draws = pchain.log_c.bottomRows(pilot.iterations - burn);
  const Vec mean = draws.colwise().mean().transpose();

  Mat sigma = Mat::Identity(r, r);
  if (draws.rows() >= 100) sigma = tune_sigma(draws);
  double lambda = tune_lambda(pilot.lambda, pchain.alpha(), pilot.proposal);
  if (pilot.delayed_acceptance) {
    ChainConfig scan = pilot;
    scan.sigma_T = sigma;
    scan.initial_log_c = mean;
    std::vector<double> candidates;
    for (double f : {0.5, 0.75, 1.0, 1.5, 2.0}) candidates.push_back(f * pilot.lambda);
    lambda = tune_lambda_mess(pf, pb.prior, scan, candidates);
  }

  Rng rng(spec.seed + 1);
  const RateConstants c = RateConstants::from_log(mean);
  // With independent draws the ratio variance is twice Var[log p_hat].
  const double var0 = log_ratio_variance(pf, c, pb.chain.rho, spec.ratio_reps, rng);
  const int particles = tune_particles(pb.filter.particles, var0, pb.chain.rho > 0.0 ? 1.0 : 2.0);

  std::vector<RhoPilot> rho_pilots;
  for (double rho : spec.rho_candidates) {
    ChainConfig cc = pilot;
    cc.rho = rho;
    cc.sigma_T = sigma;
    cc.initial_log_c = mean;
    const ChainOutput out = run_chain(pf, pb.prior, cc);
    const RunSummary s = summarize(out, pb.network->rate_names(), burn);
    std::vector<double> ut(out.u_trace.data() + burn, out.u_trace.data() + out.u_trace.size());
    rho_pilots.push_back({rho, s.mess_per_second, ess(ut)});
  }
  const double rho = rho_pilots.empty() ? pb.chain.rho : tune_rho(rho_pilots);

  std::vector<double> sig(static_cast<size_t>(r * r));
  for (int a = 0; a < r; ++a)
    for (int b = 0; b < r; ++b) sig[static_cast<size_t>(a * r + b)] = sigma(a, b);
  RunSpec tuned = spec;
  tuned.particles = particles;
  tuned.lambda = lambda;
  tuned.sigma_T = sig;
  tuned.rho = rho;
  tuned.init = to_vector(mean);

  const fs::path dir = output_dir(spec);
  std::ofstream(dir / "tuned.ini") << emit_config(tuned);
  json j{{"pilot_acceptance", pchain.alpha()},
         {"log_ratio_variance", var0},
         {"particles", particles},
         {"lambda", lambda},
         {"rho", rho},
         {"sigma_T", sig},
         {"posterior_mean", to_vector(mean)}};
  for (const auto& p : rho_pilots) j["rho_pilots"].push_back({{"rho", p.rho}, {"mess", p.mess}, {"u_ess", p.u_ess}});
  std::ofstream(dir / "tune.json") << j.dump(2) << '\n';
  std::cout << j.dump(2) << '\n';
  return 0;
}

int cmd_report(const std::vector<std::string>& runs, int burn_in, int bins) {
  if (runs.empty()) throw std::invalid_argument("report needs at least one run directory");
  std::vector<RunSummary> summaries;
  for (const auto& run : runs) {
    const fs::path dir(run);
    ChainOutput chain = read_chain_csv((dir / "chain.csv").string());
    std::ifstream js(dir / "summary.json");
    if (js) chain.seconds = json::parse(js).value("seconds", 0.0);
    std::vector<std::string> names;
    for (Eigen::Index j = 0; j < chain.log_c.cols(); ++j) names.push_back("log_c_" + std::to_string(j + 1));
    summaries.push_back(summarize(chain, names, burn_in));
    write_histograms(dir / "histograms.csv", chain, names, burn_in, bins);
  }
  const double base = summaries.front().mess_per_second;
  std::cout << std::setprecision(4);
  std::cout << "run                        mESS     mESS/s   relative    alpha1  alpha2|1     alpha   seconds\n";
  for (size_t k = 0; k < runs.size(); ++k) {
    const auto& s = summaries[k];
    std::cout << std::left << std::setw(22) << runs[k] << std::right << std::setw(10) << s.mess << std::setw(11)
              << s.mess_per_second << std::setw(11) << (base > 0.0 ? s.mess_per_second / base : 0.0) << std::setw(10)
              << s.alpha1 << std::setw(10) << s.alpha21 << std::setw(10) << s.alpha << std::setw(10) << s.seconds
              << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian inference for stochastic kinetic models"};
  app.require_subcommand(1);
  std::string config;
  std::vector<std::string> overrides;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", config, "INI run configuration");
    sub->add_option("--set", overrides, "override a configuration key (key=value)")->allow_extra_args(false);
  };
  auto* sim = app.add_subcommand("simulate", "synthesise a dataset");
  auto* filt = app.add_subcommand("filter", "replicated likelihood estimates at fixed c");
  auto* samp = app.add_subcommand("sample", "run a particle MCMC chain");
  auto* tune = app.add_subcommand("tune", "pilot run and tuning recommendations");
  for (auto* s : {sim, filt, samp, tune}) add_common(s);
  auto* rep = app.add_subcommand("report", "summaries and histogram data from stored chains");
  std::vector<std::string> runs;
  int burn_in = 0, bins = 30;
  rep->add_option("runs", runs, "run directories containing chain.csv")->required();
  rep->add_option("--burn-in", burn_in);
  rep->add_option("--bins", bins);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (rep->parsed()) return cmd_report(runs, burn_in, bins);
    const RunSpec spec = load_spec(config, overrides);
    if (sim->parsed()) return cmd_simulate(spec);
    if (filt->parsed()) return cmd_filter(spec);
    if (samp->parsed()) return cmd_sample(spec);
    return cmd_tune(spec);
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 3;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
