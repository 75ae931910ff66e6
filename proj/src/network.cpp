#include "skinf/network.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace skinf {

namespace {

struct FallingFactorial {
  double value;
  double d1;
  double d2;
};

// C(x, a) = x (x-1) ... (x-a+1) / a! and its first two derivatives.
FallingFactorial falling_factorial(double x, int a) {
  double fact = 1.0;
  for (int k = 2; k <= a; ++k) fact *= k;
  double v = 1.0;
  for (int k = 0; k < a; ++k) v *= (x - k);
  double d1 = 0.0;
  double d2 = 0.0;
  for (int k = 0; k < a; ++k) {
    double p = 1.0;
    for (int l = 0; l < a; ++l)
      if (l != k) p *= (x - l);
    d1 += p;
    for (int l = 0; l < a; ++l) {
      if (l == k) continue;
      double q = 1.0;
      for (int m = 0; m < a; ++m)
        if (m != k && m != l) q *= (x - m);
      d2 += q;
    }
  }
  return {v / fact, d1 / fact, d2 / fact};
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

RateConstants::RateConstants(Vec c) : c_(std::move(c)) {
  for (Eigen::Index i = 0; i < c_.size(); ++i)
    if (!(c_(i) > 0.0) || !std::isfinite(c_(i)))
      throw std::invalid_argument("rate constants must be finite and strictly positive");
}

RateConstants RateConstants::from_log(const Vec& log_c) {
  return RateConstants(log_c.array().exp().matrix());
}

ReactionNetwork::ReactionNetwork(std::vector<std::string> species,
                                 std::vector<std::string> rate_names,
                                 Eigen::MatrixXi reactants, Eigen::MatrixXi products)
    : species_(std::move(species)),
      rate_names_(std::move(rate_names)),
      reactants_(std::move(reactants)),
      products_(std::move(products)) {
  const auto s = static_cast<Eigen::Index>(species_.size());
  if (s < 1 || reactants_.rows() < 1) throw std::invalid_argument("network needs s >= 1 and r >= 1");
  if (reactants_.cols() != s || products_.cols() != s || products_.rows() != reactants_.rows())
    throw std::invalid_argument("reactant/product matrices must both be r x s");
  if (static_cast<Eigen::Index>(rate_names_.size()) != reactants_.rows())
    throw std::invalid_argument("one rate name per reaction is required");
  if ((reactants_.array() < 0).any() || (products_.array() < 0).any())
    throw std::invalid_argument("stoichiometric coefficients must be non-negative");
  stoich_ = (products_ - reactants_).transpose();
  stoich_real_ = stoich_.cast<double>();
  factors_.resize(static_cast<size_t>(reactants_.rows()));
  for (Eigen::Index i = 0; i < reactants_.rows(); ++i)
    for (Eigen::Index j = 0; j < s; ++j)
      if (reactants_(i, j) > 0)
        factors_[static_cast<size_t>(i)].push_back({static_cast<int>(j), reactants_(i, j)});
  for (const auto& f : factors_)
    if (f.size() > 16) throw std::invalid_argument("a reaction may consume at most 16 distinct species");
}

void ReactionNetwork::check_state(Eigen::Index n) const {
  if (n != num_species())
    throw std::invalid_argument("state has " + std::to_string(n) + " components, network has " +
                                std::to_string(num_species()) + " species");
}

void ReactionNetwork::evaluate(std::span<const double> c, std::span<const double> x,
                               HazardWork& w, int order) const {
  const int s = num_species();
  const int r = num_reactions();
  if (w.h.size() != r) {
    w.h.resize(r);
    w.unit.resize(r);
  }
  if (order >= 1 && (w.grad.rows() != r || w.grad.cols() != s)) w.grad.resize(r, s);
  if (order >= 2 && static_cast<int>(w.hess.size()) != r) w.hess.assign(static_cast<size_t>(r), Mat(s, s));

  FallingFactorial ff[16];
  for (int i = 0; i < r; ++i) {
    const auto& fac = factors_[static_cast<size_t>(i)];
    const int nf = static_cast<int>(fac.size());
    double unit = 1.0;
    bool below = false;
    for (int k = 0; k < nf; ++k) {
      const double xs = x[static_cast<size_t>(fac[k].species)];
      ff[k] = falling_factorial(xs, fac[k].order);
      unit *= ff[k].value;
      below = below || xs < fac[k].order - 1;
    }
    const double ci = c[static_cast<size_t>(i)];
    // Products of several negative factors can be positive, hence the
    // per-species check as well as the sign check.
    const bool clamped = below || ci * unit < 0.0;
    w.unit(i) = clamped ? 0.0 : unit;
    w.h(i) = clamped ? 0.0 : ci * unit;
    if (order >= 1) {
      w.grad.row(i).setZero();
      if (!clamped) {
        for (int k = 0; k < nf; ++k) {
          double p = ci * ff[k].d1;
          for (int l = 0; l < nf; ++l)
            if (l != k) p *= ff[l].value;
          w.grad(i, fac[k].species) = p;
        }
      }
    }
    if (order >= 2) {
      Mat& hm = w.hess[static_cast<size_t>(i)];
      hm.setZero();
      if (clamped) continue;
      for (int k = 0; k < nf; ++k) {
        for (int l = 0; l < nf; ++l) {
          double p = ci;
          if (k == l) {
            p *= ff[k].d2;
            for (int m = 0; m < nf; ++m)
              if (m != k) p *= ff[m].value;
          } else {
            p *= ff[k].d1 * ff[l].d1;
            for (int m = 0; m < nf; ++m)
              if (m != k && m != l) p *= ff[m].value;
          }
          hm(fac[k].species, fac[l].species) = p;
        }
      }
    }
  }
}

Vec ReactionNetwork::hazard(const RateConstants& c, const SpeciesState& x) const {
  check_state(x.size());
  HazardWork w;
  evaluate({c.values().data(), static_cast<size_t>(c.size())}, {x.data(), static_cast<size_t>(x.size())}, w, 0);
  return w.h;
}

Mat ReactionNetwork::hazard_gradient(const RateConstants& c, const SpeciesState& x) const {
  check_state(x.size());
  HazardWork w;
  evaluate({c.values().data(), static_cast<size_t>(c.size())}, {x.data(), static_cast<size_t>(x.size())}, w, 1);
  return w.grad;
}

Vec ReactionNetwork::drift(const RateConstants& c, const SpeciesState& x) const {
  return stoich_real_ * hazard(c, x);
}

Mat ReactionNetwork::jacobian_F(const RateConstants& c, const Vec& eta) const {
  return stoich_real_ * hazard_gradient(c, eta);
}

Mat ReactionNetwork::diffusion_beta(const RateConstants& c, const SpeciesState& x) const {
  const Vec h = hazard(c, x);
  Mat b = stoich_real_ * h.asDiagonal() * stoich_real_.transpose();
  symmetrize(b);
  return b;
}

std::vector<std::string> builtin_ids() {
  return {"sir", "aphid", "lotka_volterra", "immigration_death"};
}

BuiltinModel builtin(std::string_view model_id) {
  auto make = [](std::vector<std::string> sp, std::vector<std::string> rn,
                 std::initializer_list<std::initializer_list<int>> a,
                 std::initializer_list<std::initializer_list<int>> b) {
    const auto r = static_cast<Eigen::Index>(a.size());
    const auto s = static_cast<Eigen::Index>(sp.size());
    Eigen::MatrixXi am(r, s), bm(r, s);
    Eigen::Index i = 0;
    for (auto row : a) {
      Eigen::Index j = 0;
      for (int v : row) am(i, j++) = v;
      ++i;
    }
    i = 0;
    for (auto row : b) {
      Eigen::Index j = 0;
      for (int v : row) bm(i, j++) = v;
      ++i;
    }
    return ReactionNetwork(std::move(sp), std::move(rn), am, bm);
  };
  if (model_id == "sir") {
    // S + I -> 2I, I -> 0
    return {make({"S", "I"}, {"c1", "c2"}, {{1, 1}, {0, 1}}, {{0, 2}, {0, 0}}),
            RateConstants(Vec{{0.02, 3.0}}), Vec{{254.0, 7.0}}};
  }
  if (model_id == "aphid") {
    // X1 -> 2 X1 + X2, X1 + X2 -> X2
    return {make({"X1", "X2"}, {"c1", "c2"}, {{1, 0}, {1, 1}}, {{2, 1}, {0, 1}}),
            RateConstants(Vec{{1.75, 0.001}}), Vec{{5.0, 5.0}}};
  }
  if (model_id == "lotka_volterra") {
    return {make({"X1", "X2"}, {"c1", "c2", "c3"}, {{1, 0}, {1, 1}, {0, 1}},
                 {{2, 0}, {0, 2}, {0, 0}}),
            RateConstants(Vec{{0.5, 0.0025, 0.3}}), Vec{{100.0, 100.0}}};
  }
  if (model_id == "immigration_death") {
    // 0 -> X at rate kappa, X -> 0 at rate c x
    return {make({"X"}, {"kappa", "c"}, {{0}, {1}}, {{1}, {0}}), RateConstants(Vec{{5.0, 0.5}}),
            Vec{{10.0}}};
  }
  throw std::invalid_argument("unknown built-in model '" + std::string(model_id) + "'");
}

ReactionNetwork parse_model(std::string_view text) {
  std::vector<std::string> species;
  std::map<std::string, int> index;
  struct Line {
    std::vector<std::pair<int, std::string>> lhs, rhs;
    std::string rate;
    int lineno;
  };
  std::vector<Line> reactions;

  auto parse_side = [](const std::string& side, int lineno) {
    std::vector<std::pair<int, std::string>> terms;
    std::stringstream ss(side);
    std::string term;
    while (std::getline(ss, term, '+')) {
      term = trim(term);
      if (term.empty() || term == "0" || term == "∅") continue;
      std::stringstream ts(term);
      std::string first, second, extra;
      ts >> first >> second >> extra;
      if (!extra.empty())
        throw std::invalid_argument("line " + std::to_string(lineno) + ": malformed term '" + term + "'");
      if (second.empty()) {
        terms.emplace_back(1, first);
      } else {
        int k = 0;
        try {
          size_t pos = 0;
          k = std::stoi(first, &pos);
          if (pos != first.size()) throw std::invalid_argument("");
        } catch (const std::exception&) {
          throw std::invalid_argument("line " + std::to_string(lineno) + ": bad multiplicity '" + first + "'");
        }
        if (k < 0) throw std::invalid_argument("line " + std::to_string(lineno) + ": negative multiplicity");
        terms.emplace_back(k, second);
      }
    }
    return terms;
  };

  std::stringstream in{std::string(text)};
  std::string raw;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    const auto hash = raw.find('#');
    std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    if (species.empty()) {
      if (line.rfind("species", 0) == 0) {
        line = line.substr(7);
        if (!line.empty() && line[0] == ':') line = line.substr(1);
      }
      for (char& ch : line)
        if (ch == ',') ch = ' ';
      std::stringstream ss(line);
      std::string name;
      while (ss >> name) {
        if (index.count(name)) throw std::invalid_argument("duplicate species '" + name + "'");
        index[name] = static_cast<int>(species.size());
        species.push_back(name);
      }
      if (species.empty()) throw std::invalid_argument("model file lists no species");
      continue;
    }
    const auto arrow = line.find("->");
    const auto at = line.find('@');
    if (arrow == std::string::npos || at == std::string::npos || at < arrow)
      throw std::invalid_argument("line " + std::to_string(lineno) +
                                  ": expected 'reactants -> products @ rate'");
    Line l;
    l.lineno = lineno;
    l.lhs = parse_side(line.substr(0, arrow), lineno);
    l.rhs = parse_side(line.substr(arrow + 2, at - arrow - 2), lineno);
    l.rate = trim(line.substr(at + 1));
    if (l.rate.empty()) throw std::invalid_argument("line " + std::to_string(lineno) + ": missing rate name");
    reactions.push_back(std::move(l));
  }
  if (species.empty()) throw std::invalid_argument("model file is empty");
  if (reactions.empty()) throw std::invalid_argument("model file defines no reactions");

  const auto r = static_cast<Eigen::Index>(reactions.size());
  const auto s = static_cast<Eigen::Index>(species.size());
  Eigen::MatrixXi a = Eigen::MatrixXi::Zero(r, s), b = Eigen::MatrixXi::Zero(r, s);
  std::vector<std::string> rates;
  for (Eigen::Index i = 0; i < r; ++i) {
    const auto& l = reactions[static_cast<size_t>(i)];
    auto fill = [&](const auto& terms, Eigen::MatrixXi& m) {
      for (const auto& [k, name] : terms) {
        auto it = index.find(name);
        if (it == index.end())
          throw std::invalid_argument("line " + std::to_string(l.lineno) + ": unknown species '" + name + "'");
        m(i, it->second) += k;
      }
    };
    fill(l.lhs, a);
    fill(l.rhs, b);
    rates.push_back(l.rate);
  }
  return ReactionNetwork(species, rates, a, b);
}

ReactionNetwork load_model_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open model file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_model(ss.str());
}

}  // namespace skinf
