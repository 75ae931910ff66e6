#include "doctest.h"

#include <filesystem>
#include <fstream>

#include "skinf/diagnostics.hpp"
#include "support.hpp"

using namespace skinf;
using namespace skinf::testing;

namespace {

std::vector<double> ar1(int n, double phi, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> nz;
  std::vector<double> x(static_cast<size_t>(n));
  double v = nz(rng) / std::sqrt(1.0 - phi * phi);
  for (auto& xi : x) {
    xi = v;
    v = phi * v + nz(rng);
  }
  return x;
}

ChainOutput toy_chain(int n) {
  ChainOutput c;
  const auto a = ar1(n, 0.5, 3), b = ar1(n, 0.8, 4);
  c.log_c.resize(n, 2);
  c.log_phat.resize(n);
  c.log_plna.resize(n);
  for (int i = 0; i < n; ++i) {
    c.log_c(i, 0) = a[static_cast<size_t>(i)];
    c.log_c(i, 1) = b[static_cast<size_t>(i)] * 0.1 + 1.0 / 3.0;
    c.log_phat(i) = -100.0 - i * 1e-3;
    c.log_plna(i) = i % 7 ? -99.5 : NAN;
    c.stage1.push_back(i % 3 != 0);
    c.stage2.push_back(i % 6 == 1);
  }
  c.stage1_accepts = std::count(c.stage1.begin(), c.stage1.end(), 1);
  c.accepts = std::count(c.stage2.begin(), c.stage2.end(), 1);
  c.seconds = 2.5;
  return c;
}

}  // namespace

TEST_CASE("ESS of independent draws is close to n") {
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto x = ar1(10000, 0.0, seed);
    const double e = ess(x);
    CHECK(e > 0.9 * 10000);
    CHECK(e < 1.1 * 10000);
  }
}

TEST_CASE("ESS of an AR(1) chain matches n (1 - phi) / (1 + phi)") {
  const int n = 100000;
  const auto x = ar1(n, 0.9, 5);
  const double expected = n * 0.1 / 1.9;
  CHECK(std::abs(ess(x) - expected) < 0.2 * expected);
}

TEST_CASE("antithetic and degenerate chains") {
  std::vector<double> alt;
  for (int i = 0; i < 1000; ++i) alt.push_back(i % 2 ? 1.0 : -1.0);
  const auto a = ess_detail(alt);
  CHECK(a.antithetic);
  CHECK_FALSE(a.degenerate);
  CHECK(a.ess == doctest::Approx(1000 * 3.0));

  const auto neg = ess_detail(ar1(10000, -0.5, 6));
  CHECK(neg.antithetic);
  CHECK(neg.ess > 10000);

  const std::vector<double> flat(500, 2.5);
  const auto d = ess_detail(flat);
  CHECK(d.degenerate);
  CHECK(d.ess == 500);

  CHECK_THROWS_AS(ess(std::vector<double>(50, 0.0)), std::invalid_argument);
}

TEST_CASE("minimum ESS over columns") {
  Mat m(5000, 2);
  const auto a = ar1(5000, 0.0, 7), b = ar1(5000, 0.9, 8);
  for (int i = 0; i < 5000; ++i) m.row(i) << a[static_cast<size_t>(i)], b[static_cast<size_t>(i)];
  CHECK(min_ess(m) == ess(b));
}

TEST_CASE("histogram") {
  const auto x = ar1(1234, 0.3, 9);
  const auto h = histogram(x, 17);
  CHECK(h.counts.size() == 17);
  CHECK(h.edges.size() == 18);
  CHECK(std::accumulate(h.counts.begin(), h.counts.end(), 0L) == 1234);
  CHECK(h.edges.front() == *std::min_element(x.begin(), x.end()));
  CHECK(h.edges.back() == *std::max_element(x.begin(), x.end()));

  const auto flat = histogram(std::vector<double>(10, 1.0), 4);
  CHECK(std::accumulate(flat.counts.begin(), flat.counts.end(), 0L) == 10);
  CHECK_THROWS_AS(histogram(x, 0), std::invalid_argument);
}

TEST_CASE("quantiles interpolate linearly") {
  const std::vector<double> x{4.0, 1.0, 3.0, 2.0};
  CHECK(quantile(x, 0.0) == 1.0);
  CHECK(quantile(x, 1.0) == 4.0);
  CHECK(quantile(x, 0.5) == doctest::Approx(2.5));
  CHECK(quantile(x, 0.25) == doctest::Approx(1.75));
}

TEST_CASE("summary") {
  const auto c = toy_chain(4000);
  const auto s = summarize(c, {"a", "b"}, 500);
  REQUIRE(s.parameters.size() == 2);
  CHECK(s.parameters[0].name == "a");
  const auto col = column(c.log_c, 1, 500);
  CHECK(s.parameters[1].mean == doctest::Approx(mean(col)).epsilon(1e-12));
  CHECK(s.parameters[1].sd == doctest::Approx(std::sqrt(variance(col))).epsilon(1e-12));
  CHECK(s.parameters[1].ess == ess(col));
  CHECK(s.mess == std::min(s.parameters[0].ess, s.parameters[1].ess));
  CHECK(s.mess_per_second == doctest::Approx(s.mess / 2.5));
  CHECK(s.alpha == doctest::Approx(s.alpha1 * s.alpha21));
  CHECK_THROWS_AS(summarize(c, {}, 3950), std::invalid_argument);
}

TEST_CASE("chain CSV round trip is exact and reports are stable") {
  const auto c = toy_chain(300);
  const auto dir = std::filesystem::temp_directory_path() / "skinf_diag_test";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "chain.csv").string();
  write_chain_csv(path, c);
  const auto back = read_chain_csv(path);
  CHECK(back.log_c == c.log_c);
  CHECK(back.log_phat == c.log_phat);
  for (int i = 0; i < c.iterations(); ++i) {
    CHECK(std::isnan(back.log_plna(i)) == std::isnan(c.log_plna(i)));
    if (!std::isnan(c.log_plna(i))) CHECK(back.log_plna(i) == c.log_plna(i));
  }
  CHECK(back.stage1 == c.stage1);
  CHECK(back.stage2 == c.stage2);
  CHECK(back.stage1_accepts == c.stage1_accepts);
  CHECK(back.accepts == c.accepts);

  auto timed = back;
  timed.seconds = c.seconds;
  const auto s1 = summarize(c, {"a", "b"}, 100);
  const auto s2 = summarize(timed, {"a", "b"}, 100);
  CHECK(s1.mess == s2.mess);
  CHECK(s1.mess_per_second == s2.mess_per_second);
  for (size_t j = 0; j < 2; ++j) {
    CHECK(s1.parameters[j].mean == s2.parameters[j].mean);
    CHECK(s1.parameters[j].q975 == s2.parameters[j].q975);
  }

  std::ofstream(dir / "bad.csv") << "time,y\n0,1\n";
  CHECK_THROWS_AS(read_chain_csv((dir / "bad.csv").string()), std::invalid_argument);
  CHECK_THROWS_AS(read_chain_csv((dir / "missing.csv").string()), std::invalid_argument);
  std::filesystem::remove_all(dir);
}
