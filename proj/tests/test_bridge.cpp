#include "doctest.h"

#include "skinf/bridge.hpp"
#include "support.hpp"

using namespace skinf;
using namespace skinf::testing;

namespace {

ReactionNetwork pure_death() { return parse_model("species: X\nX -> 0 @ c\n"); }

std::vector<double> normals(Rng& rng, size_t n) {
  std::vector<double> z(n);
  draw_normals(z, rng);
  return z;
}

double hit_fraction(const ReactionNetwork& net, const RateConstants& c, const Vec& x0, const Vec& y, double t1,
                    const IntervalCache* ch, int reps, Rng& rng) {
  const auto obs = ObservationModel::exact(net.num_species());
  int hits = 0;
  for (int k = 0; k < reps; ++k) {
    const auto z = normals(rng, 1024);
    EventStream stream(z);
    const auto p = mjp_propose(net, c, x0, 0.0, t1, stream, ch, y, obs);
    hits += p.x_end == y;
  }
  return static_cast<double>(hits) / reps;
}

}  // namespace

TEST_CASE("particle cache starts at the particle with G = I and V = 0") {
  const auto lv = builtin("lotka_volterra");
  const Vec x{{71.0, 113.0}};
  const auto cache = build_particle_cache(lv.network, lv.rates, x, 2.0, 3.0, 0.1, true);
  CHECK(cache.size() == 11);
  CHECK(cache.eta.front() == x);
  CHECK(cache.G.front() == Mat::Identity(2, 2));
  CHECK(cache.V.front().norm() == 0.0);
  CHECK(cache.end() == 3.0);
}

TEST_CASE("transition identities compose") {
  const auto lv = builtin("lotka_volterra");
  const auto cache = build_particle_cache(lv.network, lv.rates, lv.initial_state, 0.0, 1.0, 0.1, true);
  for (int k = 0; k < cache.size(); ++k) {
    const Mat composed = cache.G_T_from[static_cast<size_t>(k)] * cache.G[static_cast<size_t>(k)];
    CHECK((composed - cache.G.back()).cwiseAbs().maxCoeff() < 1e-8);
  }
  CHECK((cache.G_T_from.back() - Mat::Identity(2, 2)).norm() < 1e-12);
  CHECK(cache.V_T_from.back().norm() < 1e-9);
  CHECK((cache.V_T_from.front() - cache.V.back()).cwiseAbs().maxCoeff() < 1e-9 * cache.V.back().norm());
}

TEST_CASE("per-iteration and per-particle caches agree when B = 0") {
  const auto lv = builtin("lotka_volterra");
  Vec times(6);
  for (int i = 0; i < 6; ++i) times(i) = i;
  Rng rng(1);
  const auto obs = ObservationModel::exact(2);
  const Dataset d = synthesize_dataset(lv.network, lv.rates, lv.initial_state, times, obs, rng, Generator::mjp).dataset;
  const auto filt = forward_filter(lv.network, lv.rates, lv.initial_state, d, {LnaMode::eta_G_V, 0.1, {}});
  for (int i = 0; i < d.num_intervals(); ++i) {
    const auto iter = build_interval_cache(filt, i);
    const auto part = build_particle_cache(lv.network, lv.rates, d.y(i), d.times(i), d.times(i + 1), 0.1, true);
    REQUIRE(iter.size() == part.size());
    const Vec y = d.y(i + 1);
    const auto z = normals(rng, 2);
    for (int k = 0; k + 1 < iter.size(); ++k) {
      const auto ku = static_cast<size_t>(k);
      CHECK((iter.eta[ku] - part.eta[ku]).norm() < 1e-6 * part.eta[ku].norm());
      CHECK((iter.V[ku] - part.V[ku]).norm() < 1e-6 * (1 + part.V[ku].norm()));
      const Vec x = iter.eta[ku];
      const auto a = rb_step(lv.network, lv.rates, x, k, iter, y, obs, z);
      const auto b = rb_step(lv.network, lv.rates, x, k, part, y, obs, z);
      CHECK((a.mean - b.mean).norm() < 1e-6 * b.mean.norm());
    }
  }
}

TEST_CASE("conditioned hazard: hand value on pure death") {
  const auto net = pure_death();
  const double c = 0.4, x = 12.0, T = 1.5, sigma2 = 2.0, y = 5.0;
  const auto cache = build_particle_cache(net, RateConstants(Vec{{c}}), Vec{{x}}, 0.0, T, 0.1, true,
                                          true, {1e-12, 1e-12});
  const auto obs = ObservationModel::constant(Mat::Identity(1, 1), Mat::Identity(1, 1) * sigma2);
  const double e = std::exp(-c * T);
  const double var = x * e * (1 - e) + sigma2;
  auto logn = [&](double m) { return -0.5 * (y - m) * (y - m) / var; };
  const double hand = c * x * std::exp(logn(x * e - e) - logn(x * e));
  const Vec got = conditioned_hazard(net, RateConstants(Vec{{c}}), Vec{{x}}, 0.0, cache, Vec{{y}}, obs);
  CHECK(std::abs(got(0) - hand) < 1e-10 * hand);
}

TEST_CASE("conditioned hazard: diffuse observation leaves the hazard unchanged") {
  const auto sir = builtin("sir");
  const auto cache = build_particle_cache(sir.network, sir.rates, sir.initial_state, 0.0, 0.5, 0.1, true);
  const auto obs = ObservationModel::constant(Mat::Identity(2, 2), Mat::Identity(2, 2) * 1e12);
  const Vec y{{235.0, 14.0}};
  for (double t : {0.0, 0.05, 0.23, 0.49}) {
    const Vec hs = conditioned_hazard(sir.network, sir.rates, sir.initial_state, t, cache, y, obs);
    const Vec h = sir.network.hazard(sir.rates, sir.initial_state);
    CHECK((hs.array() / h.array() - 1.0).abs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("conditioned hazard hits the Eyam observation more often than forward simulation") {
  const auto sir = builtin("sir");
  const Dataset e = eyam_dataset();
  const auto cache = build_particle_cache(sir.network, sir.rates, e.y(0), 0.0, 0.5, 0.1, true);
  Rng rng(3);
  const double ch = hit_fraction(sir.network, sir.rates, e.y(0), e.y(1), 0.5, &cache, 10000, rng);
  const double myopic = hit_fraction(sir.network, sir.rates, e.y(0), e.y(1), 0.5, nullptr, 10000, rng);
  CHECK(ch > myopic);
  CHECK(ch > 0.05);
}

TEST_CASE("residual bridge: hand step on immigration-death") {
  const auto id = builtin("immigration_death");
  const RateConstants c(Vec{{5.0, 0.5}});
  const Vec x0{{14.0}};
  const double sigma2 = 1.5, y = 9.0;
  const auto obs = ObservationModel::constant(Mat::Identity(1, 1), Mat::Identity(1, 1) * sigma2);
  const auto cache = build_particle_cache(id.network, c, x0, 0.0, 1.0, 0.1, true);
  const Vec x{{14.3}};
  const double z = -0.8;
  const auto st = rb_step(id.network, c, x, 0, cache, Vec{{y}}, obs, std::vector<double>{z});

  const double dt = cache.t[1] - cache.t[0], delta = cache.end() - cache.t[0];
  const double alpha = 5.0 - 0.5 * x(0), beta = 5.0 + 0.5 * x(0);
  const double eta0 = cache.eta[0](0), eta1 = cache.eta[1](0), etaT = cache.eta.back()(0);
  const double r = x(0) - eta0, drift = alpha - (eta1 - eta0) / dt;
  const double A = beta * delta + sigma2;
  const double mean = eta1 + r + drift * dt + beta * dt / A * (y - (etaT + r + drift * delta));
  const double var = beta * dt - beta * dt * beta * dt / A;
  CHECK(std::abs(st.mean(0) - mean) < 1e-12 * std::abs(mean));
  CHECK(std::abs(st.cov(0, 0) - var) < 1e-12 * var);
  CHECK(std::abs(st.x_next(0) - (mean + std::sqrt(var) * z)) < 1e-12 * std::abs(mean));
  CHECK(st.log_q == doctest::Approx(-0.5 * std::log(2 * M_PI * var) - 0.5 * z * z).epsilon(1e-12));
}

TEST_CASE("residual bridges hit the observation with P = I and Sigma = 0") {
  const auto lv = builtin("lotka_volterra");
  const auto obs = ObservationModel::constant(Mat::Identity(2, 2), Mat::Zero(2, 2));
  const Vec y{{131.0, 87.0}};
  const auto cache = build_particle_cache(lv.network, lv.rates, lv.initial_state, 0.0, 1.0, 0.1, true);
  Rng rng(5);
  for (auto kind : {BridgeType::rb, BridgeType::rbminus}) {
    for (int rep = 0; rep < 100; ++rep) {
      const auto z = normals(rng, 20);
      const auto p = cle_propose(lv.network, lv.rates, lv.initial_state, kind, cache, y, obs, z);
      CHECK((p.x_end - y).cwiseAbs().maxCoeff() <= 1e-12 * y.norm());
    }
  }
}

TEST_CASE("residual bridge reduces to Euler dynamics under a diffuse observation") {
  const auto lv = builtin("lotka_volterra");
  const auto obs = ObservationModel::constant(Mat::Identity(2, 2), Mat::Identity(2, 2) * 1e14);
  const auto cache = build_particle_cache(lv.network, lv.rates, lv.initial_state, 0.0, 1.0, 0.1, true);
  const Vec x{{96.0, 104.0}};
  const auto st = rb_step(lv.network, lv.rates, x, 3, cache, Vec{{120.0, 90.0}}, obs, std::vector<double>{0.1, 0.2});
  const double dt = 0.1;
  const Vec euler = x + lv.network.drift(lv.rates, x) * dt;
  const Mat beta = lv.network.diffusion_beta(lv.rates, x) * dt;
  CHECK((st.mean - euler).norm() < 1e-6 * euler.norm());
  CHECK((st.cov - beta).norm() < 1e-6 * beta.norm());
}

TEST_CASE("rho_hat: zero, start value and hand value") {
  const auto net = pure_death();
  const double c = 0.6, x = 20.0, T = 2.0, sigma2 = 0.5;
  const RateConstants rc(Vec{{c}});
  const auto obs = ObservationModel::constant(Mat::Identity(1, 1), Mat::Identity(1, 1) * sigma2);
  const auto cache = build_particle_cache(net, rc, Vec{{x}}, 0.0, T, 0.1, true, true, {1e-12, 1e-12});

  const auto zero = rho_hat(cache, Vec::Zero(1), cache.eta.back(), obs);
  for (const auto& v : zero) CHECK(std::abs(v(0)) < 1e-12);

  const double r0 = 1.7, y = 3.0;
  const auto rh = rho_hat(cache, Vec{{r0}}, Vec{{y}}, obs);
  CHECK(rh.front()(0) == doctest::Approx(r0).epsilon(1e-14));

  const size_t mid = 10;
  REQUIRE(cache.t[mid] == doctest::Approx(T / 2));
  const double t = T / 2;
  const double Gt = std::exp(-c * t), Vt = x * Gt * (1 - Gt);
  const double GT = std::exp(-c * T), VT = x * GT * (1 - GT), GTt = std::exp(-c * (T - t));
  const double hand = Gt * r0 + Vt * GTt / (VT + sigma2) * (y - (x * GT + GT * r0));
  CHECK(std::abs(rh[mid](0) - hand) < 1e-8 * std::abs(hand));
}

TEST_CASE("extra subtraction with a zero rho is bitwise the simple residual bridge") {
  const auto lv = builtin("lotka_volterra");
  const auto obs = ObservationModel::constant(Mat::Identity(2, 2), Mat::Identity(2, 2));
  const auto cache = build_particle_cache(lv.network, lv.rates, lv.initial_state, 0.0, 1.0, 0.1, true);
  const std::vector<Vec> zeros(static_cast<size_t>(cache.size()), Vec::Zero(2));
  Rng rng(7);
  for (int k = 0; k + 1 < cache.size(); ++k) {
    const auto z = normals(rng, 2);
    const Vec x{{99.0 + k, 101.0 - k}};
    const auto a = rb_step(lv.network, lv.rates, x, k, cache, Vec{{110.0, 95.0}}, obs, z);
    const auto b = rb_step(lv.network, lv.rates, x, k, cache, Vec{{110.0, 95.0}}, obs, z, &zeros);
    CHECK(a.x_next == b.x_next);
    CHECK(a.log_q == b.log_q);
  }
}

TEST_CASE("one-step proposal densities integrate to one") {
  const auto id = builtin("immigration_death");
  const RateConstants c(Vec{{5.0, 0.5}});
  const auto obs = ObservationModel::constant(Mat::Identity(1, 1), Mat::Identity(1, 1) * 2.0);
  const auto cache = build_particle_cache(id.network, c, Vec{{12.0}}, 0.0, 0.1, 0.1, true);
  REQUIRE(cache.size() == 2);
  const Vec x{{12.0}}, y{{10.0}};
  const auto rho = rho_hat(cache, x - cache.eta.front(), y, obs);
  for (const std::vector<Vec>* rp : {static_cast<const std::vector<Vec>*>(nullptr), &rho}) {
    const double sd = std::sqrt(rb_step(id.network, c, x, 0, cache, y, obs, std::vector<double>{0.0}, rp).cov(0, 0));
    double total = 0.0;
    const int m = 4000;
    for (int k = 0; k < m; ++k) {
      const double z = -10.0 + 20.0 * (k + 0.5) / m;
      total += std::exp(rb_step(id.network, c, x, 0, cache, y, obs, std::vector<double>{z}, rp).log_q) * sd * 20.0 / m;
    }
    CHECK(std::abs(total - 1.0) < 1e-4);
  }
  double euler = 0.0;
  const double sd = std::sqrt(id.network.diffusion_beta(c, x)(0, 0) * 0.1);
  const int m = 4000;
  for (int k = 0; k < m; ++k) {
    const double v = x(0) - 10 * sd + 20 * sd * (k + 0.5) / m;
    euler += std::exp(euler_log_density(id.network, c, x, Vec{{v}}, 0.1)) * 20 * sd / m;
  }
  CHECK(std::abs(euler - 1.0) < 1e-4);
}

TEST_CASE("bridge paths have finite densities; extra subtraction lowers weight variance") {
  const auto lv = builtin("lotka_volterra");
  const Dataset d = lv_dataset(51);
  const auto filt = forward_filter(lv.network, lv.rates, lv.initial_state, d, {LnaMode::eta_G_V, 0.1, {}});
  const auto cache = build_interval_cache(filt, 0);
  const Vec y = d.y(1);
  Rng rng(9);
  std::vector<double> w_rb, w_rbm;
  for (int rep = 0; rep < 10000; ++rep) {
    const auto z = normals(rng, 20);
    for (auto kind : {BridgeType::rb, BridgeType::rbminus}) {
      const auto p = cle_propose(lv.network, lv.rates, lv.initial_state, kind, cache, y, d.observation_model, z);
      REQUIRE(std::isfinite(p.log_p));
      REQUIRE(std::isfinite(p.log_q));
      const double lw = p.log_p - p.log_q + d.observation_model.log_density(y, p.x_end);
      (kind == BridgeType::rb ? w_rb : w_rbm).push_back(lw);
    }
  }
  CHECK(variance(w_rbm) <= variance(w_rb));
}

TEST_CASE("event stream: uniforms from normals, determinism, overflow") {
  const std::vector<double> z{0.0, 1.0, -1.0};
  EventStream a(z);
  CHECK(a.uniform() == 0.5);
  CHECK(a.uniform() == doctest::Approx(normal_cdf(1.0)).epsilon(1e-14));
  a.uniform();
  CHECK(!a.overflowed());
  const double tail = a.uniform();
  CHECK(a.overflowed());
  EventStream b(z);
  for (int k = 0; k < 3; ++k) b.uniform();
  CHECK(b.uniform() == tail);

  const auto sir = builtin("sir");
  Rng rng(11);
  const auto zs = normals(rng, 512);
  EventStream s1(zs), s2(zs);
  const auto obs = ObservationModel::exact(2);
  const Vec y{{235.0, 14.0}};
  const auto p1 = mjp_propose(sir.network, sir.rates, sir.initial_state, 0.0, 0.5, s1, nullptr, y, obs);
  const auto p2 = mjp_propose(sir.network, sir.rates, sir.initial_state, 0.0, 0.5, s2, nullptr, y, obs);
  CHECK(p1.x_end == p2.x_end);
  CHECK(p1.log_p == p2.log_p);
}

TEST_CASE("myopic jump proposals have log_q equal to log_p") {
  const auto sir = builtin("sir");
  Rng rng(13);
  const auto obs = ObservationModel::exact(2);
  for (int k = 0; k < 100; ++k) {
    const auto z = normals(rng, 512);
    EventStream s(z);
    const auto p = mjp_propose(sir.network, sir.rates, sir.initial_state, 0.0, 0.5, s, nullptr, Vec{{235.0, 14.0}}, obs);
    CHECK(p.log_p == p.log_q);
  }
}
