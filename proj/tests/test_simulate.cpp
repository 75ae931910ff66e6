#include "doctest.h"

#include <cstdio>
#include <filesystem>

#include "skinf/simulate.hpp"
#include "support.hpp"

using namespace skinf;
using namespace skinf::testing;

namespace {

ReactionNetwork pure_death() { return parse_model("species: X\nX -> 0 @ c\n"); }

// Total variation between an empirical histogram of end states and a row of
// the oracle's transition matrix.
double total_variation(const CmeTransition& cme, int from, const std::vector<Vec>& ends) {
  std::vector<double> freq(cme.states.size(), 0.0);
  double outside = 0.0;
  for (const Vec& x : ends) {
    const int k = cme.index_of(x.cast<int>());
    if (k < 0) {
      outside += 1.0;
    } else {
      freq[static_cast<size_t>(k)] += 1.0;
    }
  }
  double tv = outside / ends.size();
  for (size_t k = 0; k < freq.size(); ++k) tv += std::abs(freq[k] / ends.size() - cme.transition(from, static_cast<Eigen::Index>(k)));
  return 0.5 * tv;
}

}  // namespace

TEST_CASE("gillespie: no events when every hazard is zero") {
  const auto sir = builtin("sir");
  Rng rng(1);
  const JumpPath p = gillespie(sir.network, sir.rates, Vec{{5.0, 0.0}}, 0.0, 10.0, rng);
  CHECK(p.events.empty());
  CHECK(p.final_state(sir.network) == Vec{{5.0, 0.0}});
}

TEST_CASE("gillespie: pure-death extinction time is Exp(1)") {
  const auto net = pure_death();
  const RateConstants c(Vec{{1.0}});
  Rng rng(2);
  std::vector<double> t;
  for (int k = 0; k < 100000; ++k) {
    const JumpPath p = gillespie(net, c, Vec{{1.0}}, 0.0, 1e9, rng);
    REQUIRE(p.events.size() == 1);
    t.push_back(p.events[0].time);
  }
  const double mcse = std::sqrt(variance(t) / t.size());
  CHECK(std::abs(mean(t) - 1.0) < 3 * mcse);
}

TEST_CASE("gillespie: replaying events reproduces the end state and loglik is finite") {
  const auto lv = builtin("lotka_volterra");
  Rng rng(3);
  for (int k = 0; k < 10000; ++k) {
    const JumpPath p = gillespie(lv.network, lv.rates, lv.initial_state, 0.0, 0.1, rng);
    Vec x = p.initial_state;
    for (const auto& e : p.events) x += lv.network.stoichiometry_real().col(e.reaction);
    CHECK(x == p.final_state(lv.network));
    CHECK(std::isfinite(mjp_complete_loglik(lv.network, lv.rates, p)));
  }
}

TEST_CASE("gillespie: explosion guard") {
  const auto lv = builtin("lotka_volterra");
  Rng rng(4);
  CHECK_THROWS_AS(gillespie(lv.network, RateConstants(Vec{{50.0, 1e-9, 0.3}}), lv.initial_state, 0.0, 10.0, rng, 1000),
                  NumericalError);
}

TEST_CASE("CME oracle: identity at t = 0, pure death, conservation") {
  const auto net = pure_death();
  const RateConstants c(Vec{{1.0}});
  const auto at0 = cme_transition_oracle(net, c, Eigen::VectorXi::Constant(1, 5), 0.0);
  CHECK((at0.transition - Mat::Identity(6, 6)).norm() < 1e-14);
  const auto at1 = cme_transition_oracle(net, c, Eigen::VectorXi::Constant(1, 5), 1.0);
  const int one = at1.index_of(Eigen::VectorXi::Constant(1, 1));
  const int zero = at1.index_of(Eigen::VectorXi::Constant(1, 0));
  CHECK(at1.transition(one, zero) == doctest::Approx(1.0 - std::exp(-1.0)).epsilon(1e-12));
  for (Eigen::Index k = 0; k < at1.transition.rows(); ++k)
    CHECK(at1.transition.row(k).sum() == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(at1.warning.empty());
}

TEST_CASE("CME oracle agrees with Gillespie Monte Carlo") {
  Rng rng(5);
  SUBCASE("pure death") {
    const auto net = pure_death();
    const RateConstants c(Vec{{0.7}});
    const auto cme = cme_transition_oracle(net, c, Eigen::VectorXi::Constant(1, 20), 1.0);
    std::vector<Vec> ends;
    for (int k = 0; k < 100000; ++k) ends.push_back(gillespie(net, c, Vec{{20.0}}, 0.0, 1.0, rng).final_state(net));
    CHECK(total_variation(cme, cme.index_of(Eigen::VectorXi::Constant(1, 20)), ends) < 0.02);
  }
  SUBCASE("small SIR") {
    const auto sir = builtin("sir");
    const RateConstants c(Vec{{0.1, 0.5}});
    const Vec x0{{20.0, 3.0}};
    const auto cme = cme_transition_oracle(sir.network, c, Eigen::VectorXi::Constant(2, 23), 1.0);
    const int from = cme.index_of(x0.cast<int>());
    CHECK(cme.transition.row(from).sum() == doctest::Approx(1.0).epsilon(1e-10));
    std::vector<Vec> ends;
    for (int k = 0; k < 100000; ++k) ends.push_back(gillespie(sir.network, c, x0, 0.0, 1.0, rng).final_state(sir.network));
    CHECK(total_variation(cme, from, ends) < 0.02);
  }
  SUBCASE("small Lotka-Volterra") {
    const auto lv = builtin("lotka_volterra");
    const RateConstants c(Vec{{0.5, 0.025, 0.3}});
    const Vec x0{{10.0, 10.0}};
    const auto cme = cme_transition_oracle(lv.network, c, Eigen::VectorXi::Constant(2, 40), 1.0);
    const int from = cme.index_of(x0.cast<int>());
    CHECK(1.0 - cme.transition.row(from).sum() < 1e-3);
    std::vector<Vec> ends;
    for (int k = 0; k < 100000; ++k) ends.push_back(gillespie(lv.network, c, x0, 0.0, 1.0, rng).final_state(lv.network));
    CHECK(total_variation(cme, from, ends) < 0.02);
  }
}

TEST_CASE("CME oracle refuses oversized state spaces") {
  const auto lv = builtin("lotka_volterra");
  CHECK_THROWS_AS(cme_transition_oracle(lv.network, lv.rates, Eigen::VectorXi::Constant(2, 200), 1.0),
                  std::invalid_argument);
}

TEST_CASE("complete-data log-likelihood") {
  const auto net = pure_death();
  const RateConstants c(Vec{{1.3}});
  JumpPath empty{Vec{{4.0}}, 0.0, 2.0, {}};
  CHECK(mjp_complete_loglik(net, c, empty) == doctest::Approx(-1.3 * 4.0 * 2.0));
  JumpPath one{Vec{{1.0}}, 0.0, 2.0, {{0.6, 0}}};
  CHECK(mjp_complete_loglik(net, c, one) == doctest::Approx(std::log(1.3) - 1.3 * 0.6).epsilon(1e-14));

  // Path densities over {no event} and {one event at s in (0, T]} integrate to one.
  const double T = 0.8;
  double total = std::exp(mjp_complete_loglik(net, c, JumpPath{Vec{{1.0}}, 0.0, T, {}}));
  const int m = 20000;
  for (int k = 0; k < m; ++k) {
    const double s = (k + 0.5) * T / m;
    total += std::exp(mjp_complete_loglik(net, c, JumpPath{Vec{{1.0}}, 0.0, T, {{s, 0}}})) * T / m;
  }
  CHECK(total == doctest::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("Euler-Maruyama: hand step, zero hazard, determinism, grid check") {
  const auto id = builtin("immigration_death");
  const RateConstants c(Vec{{5.0, 0.5}});
  const double x = 10.0, dt = 0.1, z = 0.37;
  const double hand = x + (5.0 - 0.5 * x) * dt + std::sqrt((5.0 + 0.5 * x) * dt) * z;
  CHECK(std::abs(euler_step(id.network, c, Vec{{x}}, dt, std::vector<double>{z})(0) - hand) < 1e-14);

  const auto sir = builtin("sir");
  Rng rng(9);
  const auto flat = euler_maruyama(sir.network, sir.rates, Vec{{10.0, 0.0}}, 0.0, 1.0, 0.1, rng);
  for (Eigen::Index k = 0; k < flat.states.rows(); ++k) CHECK(flat.states.row(k) == Vec{{10.0, 0.0}}.transpose());

  const auto lv = builtin("lotka_volterra");
  std::vector<double> normals(20);
  draw_normals(normals, rng);
  const auto a = euler_maruyama(lv.network, lv.rates, lv.initial_state, 0.0, 1.0, 0.1, normals);
  const auto b = euler_maruyama(lv.network, lv.rates, lv.initial_state, 0.0, 1.0, 0.1, normals);
  CHECK(a.states == b.states);
  CHECK_THROWS_AS(euler_steps(0.0, 1.0, 0.3), std::invalid_argument);
}

TEST_CASE("Euler-Maruyama: step refinement leaves the mean at t = 1 unchanged") {
  const auto lv = builtin("lotka_volterra");
  Rng rng(11);
  std::vector<double> coarse, fine;
  for (int k = 0; k < 10000; ++k) {
    coarse.push_back(euler_maruyama(lv.network, lv.rates, lv.initial_state, 0.0, 1.0, 0.1, rng).states(10, 0));
    fine.push_back(euler_maruyama(lv.network, lv.rates, lv.initial_state, 0.0, 1.0, 0.0125, rng).states(80, 0));
  }
  const double se = std::sqrt(variance(coarse) / coarse.size() + variance(fine) / fine.size());
  CHECK(std::abs(mean(coarse) - mean(fine)) < 3 * se);
}

TEST_CASE("observation models and synthesis") {
  const auto lv = builtin("lotka_volterra");
  Rng rng(13);
  Vec times(51);
  for (int i = 0; i <= 50; ++i) times(i) = i;

  const auto exact = synthesize_dataset(lv.network, lv.rates, lv.initial_state, times, ObservationModel::exact(2), rng,
                                        Generator::mjp);
  CHECK(exact.dataset.observations == exact.latent);

  const auto noisy = synthesize_dataset(lv.network, lv.rates, lv.initial_state, times,
                                        ObservationModel::constant(Mat::Identity(2, 2), Mat::Identity(2, 2)), rng,
                                        Generator::mjp);
  CHECK(noisy.dataset.num_intervals() == 50);
  const Mat resid = noisy.dataset.observations - noisy.latent;
  CHECK(resid.cwiseAbs().maxCoeff() > 0.0);
  CHECK(resid.cwiseAbs().maxCoeff() < 6.0);

  const auto aphid = builtin("aphid");
  const auto obs = ObservationModel::state_proportional(Mat(Vec{{1.0, 0.0}}), 0.25);
  CHECK(obs.noise_covariance(Vec{{40.0, 3.0}})(0, 0) == doctest::Approx(10.0));
  const auto ad = synthesize_dataset(aphid.network, aphid.rates, aphid.initial_state, Vec{{0.0, 1.0, 2.0}}, obs, rng,
                                     Generator::cle);
  CHECK(ad.dataset.observations.cols() == 1);

  CHECK(ObservationModel::exact(2).log_density(Vec{{3.0, 4.0}}, Vec{{3.0, 4.0}}) == 0.0);
  CHECK(ObservationModel::exact(2).log_density(Vec{{3.0, 4.0}}, Vec{{3.0, 5.0}}) == -std::numeric_limits<double>::infinity());
}

TEST_CASE("dataset CSV round trip and Eyam data") {
  const Dataset e = eyam_dataset();
  CHECK(e.num_intervals() == 7);
  CHECK(e.y(7) == Vec{{83.0, 0.0}});
  const auto path = (std::filesystem::temp_directory_path() / "skinf_eyam_roundtrip.csv").string();
  write_dataset_csv(path, e);
  const Dataset back = read_dataset_csv(path, ObservationModel::exact(2));
  CHECK(back.times == e.times);
  CHECK(back.observations == e.observations);
  std::remove(path.c_str());
  CHECK_THROWS_AS(read_dataset_csv("/nonexistent/file.csv", ObservationModel::exact(2)), std::invalid_argument);
}
