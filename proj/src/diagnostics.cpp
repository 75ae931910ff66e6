#include "skinf/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace skinf {

EssResult ess_detail(std::span<const double> x) {
  const auto n = x.size();
  if (n < 100) throw std::invalid_argument("ESS needs at least 100 samples");
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(n);
  std::vector<double> c(n);
  for (size_t i = 0; i < n; ++i) c[i] = x[i] - mean;
  auto autocov = [&](size_t lag) {
    double s = 0.0;
    for (size_t i = 0; i + lag < n; ++i) s += c[i] * c[i + lag];
    return s / static_cast<double>(n);
  };
  const double g0 = autocov(0);
  EssResult out;
  if (std::all_of(x.begin(), x.end(), [&](double v) { return v == x[0]; }) || !(g0 > 0.0)) {
    out.ess = static_cast<double>(n);
    out.degenerate = true;
    return out;
  }
  double sum = 0.0;
  double prev = std::numeric_limits<double>::infinity();
  for (size_t m = 0; 2 * m + 1 < n; ++m) {
    double pair = autocov(2 * m) + autocov(2 * m + 1);
    if (pair <= 0.0) break;
    pair = std::min(pair, prev);
    prev = pair;
    sum += pair;
  }
  const double tau = -1.0 + 2.0 * sum / g0;
  const double cap = static_cast<double>(n) * std::log10(static_cast<double>(n));
  out.ess = tau > 0.0 ? std::min(static_cast<double>(n) / tau, cap) : cap;
  out.antithetic = out.ess > static_cast<double>(n);
  return out;
}

double ess(std::span<const double> x) { return ess_detail(x).ess; }

double min_ess(const Mat& samples) {
  double m = std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j < samples.cols(); ++j) {
    const Vec col = samples.col(j);
    m = std::min(m, ess({col.data(), static_cast<size_t>(col.size())}));
  }
  return m;
}

Histogram histogram(std::span<const double> x, int bins) {
  if (bins < 1) throw std::invalid_argument("histogram needs at least one bin");
  if (x.empty()) throw std::invalid_argument("histogram of an empty sample");
  const auto [mn, mx] = std::minmax_element(x.begin(), x.end());
  double lo = *mn, hi = *mx;
  if (hi == lo) {
    lo -= 0.5;
    hi += 0.5;
  }
  Histogram h;
  h.edges.resize(static_cast<size_t>(bins + 1));
  for (int i = 0; i <= bins; ++i) h.edges[static_cast<size_t>(i)] = lo + (hi - lo) * i / bins;
  h.counts.assign(static_cast<size_t>(bins), 0);
  for (double v : x) {
    int b = static_cast<int>((v - lo) / (hi - lo) * bins);
    b = std::clamp(b, 0, bins - 1);
    ++h.counts[static_cast<size_t>(b)];
  }
  return h;
}

double quantile(std::vector<double> x, double p) {
  if (x.empty()) throw std::invalid_argument("quantile of an empty sample");
  std::sort(x.begin(), x.end());
  const double pos = p * static_cast<double>(x.size() - 1);
  const auto lo = static_cast<size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, x.size() - 1);
  return x[lo] + (pos - static_cast<double>(lo)) * (x[hi] - x[lo]);
}

RunSummary summarize(const ChainOutput& chain, const std::vector<std::string>& names, int burn_in) {
  const int n = chain.iterations() - burn_in;
  if (burn_in < 0 || n < 100) throw std::invalid_argument("summary needs at least 100 post burn-in iterations");
  RunSummary s;
  s.iterations = chain.iterations();
  s.alpha1 = chain.alpha1();
  s.alpha21 = chain.alpha21();
  s.alpha = chain.alpha();
  s.seconds = chain.seconds;
  s.mess = std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j < chain.log_c.cols(); ++j) {
    std::vector<double> col(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) col[static_cast<size_t>(i)] = chain.log_c(burn_in + i, j);
    ParameterSummary p;
    p.name = j < static_cast<Eigen::Index>(names.size()) ? names[static_cast<size_t>(j)] : "c" + std::to_string(j + 1);
    double m = 0.0, m2 = 0.0;
    for (double v : col) m += v;
    m /= n;
    for (double v : col) m2 += (v - m) * (v - m);
    p.mean = m;
    p.sd = std::sqrt(m2 / std::max(n - 1, 1));
    p.ess = ess(col);
    p.mcse = p.sd / std::sqrt(p.ess);
    p.q025 = quantile(col, 0.025);
    p.q500 = quantile(col, 0.5);
    p.q975 = quantile(col, 0.975);
    s.mess = std::min(s.mess, p.ess);
    s.parameters.push_back(std::move(p));
  }
  s.mess_per_second = s.seconds > 0.0 ? s.mess / s.seconds : 0.0;
  return s;
}

void write_chain_csv(const std::string& path, const ChainOutput& chain) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  const auto r = chain.log_c.cols();
  out << "iter";
  for (Eigen::Index j = 0; j < r; ++j) out << ",log_c_" << (j + 1);
  out << ",log_phat,log_plna,stage1_accept,stage2_accept\n" << std::setprecision(17);
  for (int i = 0; i < chain.iterations(); ++i) {
    out << i;
    for (Eigen::Index j = 0; j < r; ++j) out << ',' << chain.log_c(i, j);
    out << ',' << chain.log_phat(i) << ',' << chain.log_plna(i) << ','
        << static_cast<int>(chain.stage1[static_cast<size_t>(i)]) << ','
        << static_cast<int>(chain.stage2[static_cast<size_t>(i)]) << '\n';
  }
}

ChainOutput read_chain_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open chain file '" + path + "'");
  std::string line;
  std::getline(in, line);
  const auto cols = static_cast<int>(std::count(line.begin(), line.end(), ',')) + 1;
  const int r = cols - 5;
  if (line.rfind("iter,", 0) != 0 || r < 1) throw std::invalid_argument("'" + path + "' is not a chain file");
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    if (static_cast<int>(row.size()) != cols) throw std::invalid_argument("'" + path + "': ragged row");
    rows.push_back(std::move(row));
  }
  ChainOutput c;
  const auto n = static_cast<Eigen::Index>(rows.size());
  c.log_c.resize(n, r);
  c.log_phat.resize(n);
  c.log_plna.resize(n);
  c.u_trace = Vec::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& row = rows[static_cast<size_t>(i)];
    for (int j = 0; j < r; ++j) c.log_c(i, j) = row[static_cast<size_t>(j + 1)];
    c.log_phat(i) = row[static_cast<size_t>(r + 1)];
    c.log_plna(i) = row[static_cast<size_t>(r + 2)];
    c.stage1.push_back(static_cast<std::uint8_t>(row[static_cast<size_t>(r + 3)]));
    c.stage2.push_back(static_cast<std::uint8_t>(row[static_cast<size_t>(r + 4)]));
    c.stage1_accepts += c.stage1.back();
    c.accepts += c.stage2.back();
  }
  return c;
}

}  // namespace skinf
