#include "skinf/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

namespace skinf {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
}

std::vector<std::string> split(const std::string& s) {
  std::string t = s;
  std::replace_if(t.begin(), t.end(), [](char ch) { return ch == ',' || ch == ';'; }, ' ');
  std::istringstream in(t);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos == v.size()) return d;
  } catch (const std::exception&) {
  }
  throw std::invalid_argument("'" + key + "' expects a number, got '" + v + "'");
}

long long to_int(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const long long i = std::stoll(v, &pos);
    if (pos == v.size()) return i;
  } catch (const std::exception&) {
  }
  throw std::invalid_argument("'" + key + "' expects an integer, got '" + v + "'");
}

std::uint64_t to_uint(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    if (!v.empty() && v[0] != '-') {
      const unsigned long long i = std::stoull(v, &pos);
      if (pos == v.size()) return i;
    }
  } catch (const std::exception&) {
  }
  throw std::invalid_argument("'" + key + "' expects a non-negative integer, got '" + v + "'");
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw std::invalid_argument("'" + key + "' expects true or false, got '" + v + "'");
}

std::string fmt(double d) {
  for (int p = 1; p <= 17; ++p) {
    std::ostringstream o;
    o.precision(p);
    o << d;
    if (std::stod(o.str()) == d) return o.str();
  }
  std::ostringstream o;
  o.precision(17);
  o << d;
  return o.str();
}

template <class T>
std::string join(const std::vector<T>& v) {
  std::string out;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) out += ' ';
    if constexpr (std::is_same_v<T, double>) {
      out += fmt(v[i]);
    } else {
      out += std::to_string(v[i]);
    }
  }
  return out;
}

struct Field {
  const char* section;
  const char* key;
  std::function<void(RunSpec&, const std::string&)> set;
  std::function<std::string(const RunSpec&)> get;
};

template <class M>
Field field(const char* section, const char* key, M RunSpec::*member) {
  Field f{section, key, {}, {}};
  f.set = [member, key](RunSpec& s, const std::string& v) {
    if constexpr (std::is_same_v<M, std::string>) {
      s.*member = v;
    } else if constexpr (std::is_same_v<M, double>) {
      s.*member = to_double(key, v);
    } else if constexpr (std::is_same_v<M, bool>) {
      s.*member = to_bool(key, v);
    } else if constexpr (std::is_same_v<M, int>) {
      s.*member = static_cast<int>(to_int(key, v));
    } else if constexpr (std::is_same_v<M, std::uint64_t>) {
      s.*member = to_uint(key, v);
    } else if constexpr (std::is_same_v<M, std::vector<double>>) {
      std::vector<double> out;
      for (const auto& w : split(v)) out.push_back(to_double(key, w));
      s.*member = out;
    } else {
      std::vector<int> out;
      for (const auto& w : split(v)) out.push_back(static_cast<int>(to_int(key, w)));
      s.*member = out;
    }
  };
  f.get = [member](const RunSpec& s) -> std::string {
    const M& v = s.*member;
    if constexpr (std::is_same_v<M, std::string>) {
      return v;
    } else if constexpr (std::is_same_v<M, double>) {
      return fmt(v);
    } else if constexpr (std::is_same_v<M, bool>) {
      return v ? "true" : "false";
    } else if constexpr (std::is_same_v<M, int> || std::is_same_v<M, std::uint64_t>) {
      return std::to_string(v);
    } else {
      return join(v);
    }
  };
  return f;
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      field("model", "model", &RunSpec::model),
      field("model", "model_file", &RunSpec::model_file),
      field("model", "inference", &RunSpec::inference),
      field("model", "x0", &RunSpec::x0),
      field("data", "dataset", &RunSpec::dataset),
      field("data", "noise", &RunSpec::noise),
      field("data", "observed", &RunSpec::observed),
      field("data", "sigma", &RunSpec::sigma),
      field("data", "sigma2", &RunSpec::sigma2),
      field("synthesis", "c_true", &RunSpec::c_true),
      field("synthesis", "times", &RunSpec::times),
      field("synthesis", "generator", &RunSpec::generator),
      field("synthesis", "synth_seed", &RunSpec::synth_seed),
      field("prior", "prior_mean", &RunSpec::prior_mean),
      field("prior", "prior_sd", &RunSpec::prior_sd),
      field("filter", "particles", &RunSpec::particles),
      field("filter", "bridge", &RunSpec::bridge),
      field("filter", "bridge_ode", &RunSpec::bridge_ode),
      field("filter", "dt", &RunSpec::dt),
      field("filter", "mjp_block", &RunSpec::mjp_block),
      field("filter", "sort", &RunSpec::sort),
      field("filter", "replicates", &RunSpec::replicates),
      field("chain", "proposal", &RunSpec::proposal),
      field("chain", "lambda", &RunSpec::lambda),
      field("chain", "sigma_T", &RunSpec::sigma_T),
      field("chain", "rho", &RunSpec::rho),
      field("chain", "delayed_acceptance", &RunSpec::delayed_acceptance),
      field("chain", "iterations", &RunSpec::iterations),
      field("chain", "seed", &RunSpec::seed),
      field("chain", "init", &RunSpec::init),
      field("chain", "fixed", &RunSpec::fixed),
      field("tune", "pilot_iterations", &RunSpec::pilot_iterations),
      field("tune", "ratio_reps", &RunSpec::ratio_reps),
      field("tune", "rho_candidates", &RunSpec::rho_candidates),
      field("output", "output_dir", &RunSpec::output_dir),
      field("output", "burn_in", &RunSpec::burn_in),
      field("output", "bins", &RunSpec::bins),
  };
  return table;
}

const Field& find_field(const std::string& key) {
  for (const auto& f : fields())
    if (key == f.key) return f;
  throw std::invalid_argument("unknown configuration key '" + key + "'");
}

Vec broadcast(const std::vector<double>& v, int r, const std::string& key) {
  if (static_cast<int>(v.size()) == r) return Eigen::Map<const Vec>(v.data(), r);
  if (v.size() == 1) return Vec::Constant(r, v[0]);
  throw std::invalid_argument("'" + key + "' needs 1 or " + std::to_string(r) + " values");
}

}  // namespace

RunSpec parse_config_text(const std::string& text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw std::invalid_argument(std::string("malformed configuration: ") + e.what());
  }
  RunSpec spec;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty())
      throw std::invalid_argument("key '" + section + "' must appear inside a section");
    for (const auto& [key, value] : body) {
      const Field& f = find_field(key);
      if (section != f.section)
        throw std::invalid_argument("key '" + key + "' belongs in [" + f.section + "], found in [" + section + "]");
      f.set(spec, trim(value.data()));
    }
  }
  return spec;
}

RunSpec parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open configuration '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

void apply_override(RunSpec& spec, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw std::invalid_argument("override '" + assignment + "' is not key=value");
  find_field(trim(assignment.substr(0, eq))).set(spec, trim(assignment.substr(eq + 1)));
}

std::string emit_config(const RunSpec& spec) {
  std::string out;
  std::string section;
  for (const auto& f : fields()) {
    if (section != f.section) {
      if (!section.empty()) out += '\n';
      section = f.section;
      out += "[" + section + "]\n";
    }
    out += std::string(f.key) + " = " + f.get(spec) + "\n";
  }
  return out;
}

void validate(const RunSpec& spec) {
  const ModelKind kind = parse_model_kind(spec.inference);
  const BridgeType bridge = parse_bridge_type(spec.bridge);
  parse_proposal(spec.proposal);
  if (spec.bridge_ode != "iter" && spec.bridge_ode != "part")
    throw std::invalid_argument("bridge_ode must be iter or part");
  if (spec.noise != "constant" && spec.noise != "state_proportional" && spec.noise != "exact")
    throw std::invalid_argument("noise must be constant, state_proportional or exact");
  if (spec.generator != "mjp" && spec.generator != "cle") throw std::invalid_argument("generator must be mjp or cle");
  if (spec.dataset.empty() == spec.c_true.empty())
    throw std::invalid_argument("give exactly one of 'dataset' and 'c_true' (synthesis)");
  if (!spec.c_true.empty() && spec.times.empty()) throw std::invalid_argument("synthesis needs 'times'");
  for (double s : spec.prior_sd)
    if (!(s > 0.0)) throw std::invalid_argument("prior_sd must be positive");
  if (spec.prior_sd.empty() || spec.prior_mean.empty()) throw std::invalid_argument("prior needs a mean and sd");
  if (!(spec.rho >= 0.0 && spec.rho <= 1.0)) throw std::invalid_argument("rho must lie in [0, 1]");
  if (!(spec.lambda >= 0.0)) throw std::invalid_argument("lambda must be non-negative");
  if (spec.particles < 1) throw std::invalid_argument("particles must be at least 1");
  if (!(spec.dt > 0.0)) throw std::invalid_argument("dt must be positive");
  if (spec.mjp_block < 0) throw std::invalid_argument("mjp_block must be non-negative");
  if (spec.iterations < 1) throw std::invalid_argument("iterations must be positive");
  if (spec.replicates < 1 || spec.ratio_reps < 2 || spec.pilot_iterations < 1)
    throw std::invalid_argument("replicates, ratio_reps and pilot_iterations must be positive");
  if (spec.burn_in < 0 || spec.bins < 1) throw std::invalid_argument("burn_in must be >= 0 and bins >= 1");
  if (!(spec.sigma > 0.0) || !(spec.sigma2 > 0.0)) throw std::invalid_argument("sigma and sigma2 must be positive");
  for (double r : spec.rho_candidates)
    if (!(r >= 0.0 && r <= 1.0)) throw std::invalid_argument("rho_candidates must lie in [0, 1]");
  if (bridge == BridgeType::ch && kind != ModelKind::mjp)
    throw std::invalid_argument("bridge 'ch' requires inference = mjp");
  if ((bridge == BridgeType::rb || bridge == BridgeType::rbminus) && kind != ModelKind::cle)
    throw std::invalid_argument("bridge '" + spec.bridge + "' requires inference = cle");
}

Vec parse_times(const std::string& text) {
  const std::string t = trim(text);
  if (std::count(t.begin(), t.end(), ':') == 2) {
    const auto a = t.find(':');
    const auto b = t.find(':', a + 1);
    const double start = to_double("times", trim(t.substr(0, a)));
    const double step = to_double("times", trim(t.substr(a + 1, b - a - 1)));
    const double end = to_double("times", trim(t.substr(b + 1)));
    if (!(step > 0.0) || end < start) throw std::invalid_argument("times range must have step > 0 and end >= start");
    const auto n = static_cast<Eigen::Index>(std::floor((end - start) / step + 1e-9)) + 1;
    Vec out(n);
    for (Eigen::Index i = 0; i < n; ++i) out(i) = start + static_cast<double>(i) * step;
    return out;
  }
  std::vector<double> v;
  for (const auto& w : split(t)) v.push_back(to_double("times", w));
  if (v.empty()) throw std::invalid_argument("times is empty");
  for (size_t i = 1; i < v.size(); ++i)
    if (!(v[i] > v[i - 1])) throw std::invalid_argument("times must be strictly increasing");
  return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

ObservationModel observation_model(const RunSpec& spec, int s) {
  if (spec.noise == "exact") {
    if (!spec.observed.empty() && static_cast<int>(spec.observed.size()) != s)
      throw std::invalid_argument("exact observation requires every species to be observed");
    return ObservationModel::exact(s);
  }
  std::vector<int> obs = spec.observed;
  if (obs.empty())
    for (int j = 1; j <= s; ++j) obs.push_back(j);
  Mat P = Mat::Zero(s, static_cast<Eigen::Index>(obs.size()));
  for (size_t k = 0; k < obs.size(); ++k) {
    if (obs[k] < 1 || obs[k] > s) throw std::invalid_argument("observed species index out of range");
    P(obs[k] - 1, static_cast<Eigen::Index>(k)) = 1.0;
  }
  if (spec.noise == "state_proportional") return ObservationModel::state_proportional(P, spec.sigma2);
  const auto p = P.cols();
  return ObservationModel::constant(P, spec.sigma * spec.sigma * Mat::Identity(p, p));
}

Problem resolve(const RunSpec& spec) {
  validate(spec);
  Problem pb;
  Vec default_x0;
  if (!spec.model_file.empty()) {
    pb.network = std::make_unique<ReactionNetwork>(load_model_file(spec.model_file));
  } else {
    BuiltinModel bm = builtin(spec.model);
    default_x0 = bm.initial_state;
    pb.network = std::make_unique<ReactionNetwork>(std::move(bm.network));
  }
  const ReactionNetwork& net = *pb.network;
  const int s = net.num_species();
  const int r = net.num_reactions();
  if (!spec.x0.empty()) {
    if (static_cast<int>(spec.x0.size()) != s) throw std::invalid_argument("x0 needs one value per species");
    pb.x0 = Eigen::Map<const Vec>(spec.x0.data(), s);
  } else if (default_x0.size() == s) {
    pb.x0 = default_x0;
  } else {
    throw std::invalid_argument("x0 is required for a model file");
  }

  const ObservationModel obs = observation_model(spec, s);
  if (!spec.dataset.empty()) {
    if (spec.dataset == "eyam") {
      if (s != 2 || spec.noise != "exact") throw std::invalid_argument("the eyam dataset needs a 2-species model with noise = exact");
      pb.data = eyam_dataset();
    } else {
      pb.data = read_dataset_csv(spec.dataset, obs);
    }
  } else {
    if (static_cast<int>(spec.c_true.size()) != r) throw std::invalid_argument("c_true needs one value per reaction");
    pb.c_true = Eigen::Map<const Vec>(spec.c_true.data(), r);
    Rng rng(spec.synth_seed);
    pb.data = synthesize_dataset(net, RateConstants(pb.c_true), pb.x0, parse_times(spec.times), obs, rng,
                                 spec.generator == "mjp" ? Generator::mjp : Generator::cle, spec.dt)
                  .dataset;
  }

  pb.prior = {broadcast(spec.prior_mean, r, "prior_mean"), broadcast(spec.prior_sd, r, "prior_sd")};

  ChainConfig& cc = pb.chain;
  cc.proposal = parse_proposal(spec.proposal);
  cc.lambda = spec.lambda;
  if (!spec.sigma_T.empty()) {
    if (static_cast<int>(spec.sigma_T.size()) != r * r) throw std::invalid_argument("sigma_T needs r*r values");
    cc.sigma_T = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        spec.sigma_T.data(), r, r);
  }
  cc.rho = spec.rho;
  cc.delayed_acceptance = spec.delayed_acceptance;
  cc.iterations = spec.iterations;
  cc.seed = spec.seed;
  if (!spec.init.empty()) cc.initial_log_c = broadcast(spec.init, r, "init");
  if (!spec.fixed.empty()) {
    cc.free.assign(static_cast<size_t>(r), true);
    for (int i : spec.fixed) {
      if (i < 1 || i > r) throw std::invalid_argument("fixed parameter index out of range");
      cc.free[static_cast<size_t>(i - 1)] = false;
    }
  }
  validate(cc, r);

  PfConfig& fc = pb.filter;
  fc.model = parse_model_kind(spec.inference);
  fc.particles = spec.particles;
  fc.bridge = parse_bridge_type(spec.bridge);
  fc.flavour = spec.bridge_ode == "part" ? CacheFlavour::per_particle : CacheFlavour::per_iteration;
  fc.dt = spec.dt;
  fc.sort = spec.sort;
  if (fc.model == ModelKind::mjp) {
    if (spec.mjp_block > 0) {
      fc.mjp_block = spec.mjp_block;
    } else {
      const Vec c = cc.initial_log_c.size() ? Vec(cc.initial_log_c.array().exp())
                    : pb.c_true.size()      ? pb.c_true
                                            : Vec(pb.prior.mean.array().exp());
      Rng rng(spec.seed ^ 0x5eedULL);
      fc.mjp_block = suggest_mjp_block(net, RateConstants(c), pb.x0, pb.data, rng);
    }
  }
  validate(fc, pb.data);
  return pb;
}

}  // namespace skinf
