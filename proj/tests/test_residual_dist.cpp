#include <algorithm>
#include <cmath>

#include "catch_amalgamated.hpp"
#include "paft/residual_dist.hpp"
#include "paft/rng.hpp"
#include "oracles/brute.hpp"

using Catch::Approx;
using namespace paft;

TEST_CASE("residuals carry censoring through") {
  TrialDataset ds{{{std::exp(1.0), 1, 0, {0.0}}, {1.5, 0, 1, {1.0}}, {3.0, 1, 1, {0.0}}}, {"x"}};
  const PaftParams p{1.0, 2.0, {0.5}};
  const auto r = estimate_residuals(ds, p);
  CHECK(r[0].value == Approx(1.0).epsilon(1e-15));
  CHECK(r[0].delta == 1);
  CHECK(r[1].value == Approx(std::log(1.5) - 0.5).epsilon(1e-15));
  CHECK(r[1].delta == 0);
  CHECK(r[2].value == Approx(0.861994804058251082).epsilon(1e-15));
  PaftParams other = p;
  other.alpha = -3.0;
  CHECK(estimate_residuals(ds, other)[1].value == r[1].value);
}

TEST_CASE("Kaplan-Meier examples") {
  const std::vector<CensoredValue> all{{2, 1}, {1, 1}, {3, 1}};
  const auto km = km_estimate(all);
  CHECK(km.times == std::vector<double>{1, 2, 3});
  CHECK(km.survival[0] == Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(km.survival[1] == Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(km.survival[2] == 0.0);
  CHECK(km(0.5) == 1.0);
  CHECK(km(1.0) == km.survival[0]);

  const std::vector<CensoredValue> mixed{{1, 1}, {2, 0}, {3, 1}};
  const auto k2 = km_estimate(mixed);
  CHECK(k2(1.0) == Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(k2(2.5) == Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(k2(3.0) == 0.0);

  const std::vector<CensoredValue> one{{4, 0}};
  const auto k3 = km_estimate(one);
  CHECK(k3(-10.0) == 1.0);
  CHECK(k3(10.0) == 1.0);
  CHECK_THROWS_AS(km_estimate(std::vector<CensoredValue>{}), usage_error);
}

TEST_CASE("events precede censorings at tied values") {
  const std::vector<CensoredValue> v{{1, 0}, {1, 1}, {2, 1}};
  const auto km = km_estimate(v);
  CHECK(km.at_risk[0] == 3);
  CHECK(km(1.0) == Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(km(2.0) == 0.0);
}

TEST_CASE("Kaplan-Meier matches brute-force risk sets and the empirical CDF") {
  philox_engine eng(21, 0);
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 1 + uniform_index(eng, 20);
    std::vector<CensoredValue> v(n);
    for (auto& p : v) {
      p.value = static_cast<double>(uniform_index(eng, 8));  // ties on purpose
      p.delta = uniform_open(eng) < 0.7;
    }
    const auto km = km_estimate(v);
    for (double q = -1.0; q <= 9.0; q += 0.5) CHECK(std::abs(km(q) - oracle::km_survival(v, q)) <= 1e-14);
    for (std::size_t k = 1; k < km.survival.size(); ++k) CHECK(km.survival[k] <= km.survival[k - 1]);

    for (auto& p : v) p.delta = 1;
    const auto full = km_estimate(v);
    for (const auto& p : v) {
      const double ecdf = static_cast<double>(std::count_if(v.begin(), v.end(), [&](const CensoredValue& o) {
                            return o.value <= p.value;
                          })) / static_cast<double>(n);
      const double below = ecdf * static_cast<double>(n);
      CHECK(full(p.value) == (static_cast<double>(n) - std::round(below)) / static_cast<double>(n));
      CHECK(std::abs(1.0 - full(p.value) - ecdf) <= 0x1p-52);
    }
  }
}

TEST_CASE("benefit score") {
  // Residuals symmetric about log tau = 0 with beta = 0.
  std::vector<CensoredValue> v;
  for (int k = 1; k <= 10; ++k) {
    v.push_back({0.1 * k, 1});
    v.push_back({-0.1 * k, 1});
  }
  const auto km = km_estimate(v);
  const PaftParams p{0.5, 1.0, {0.0}};
  const std::vector<double> x{3.0};
  const auto b = prob_death_before_tau(x, p, km);
  CHECK(b.threshold_arg == 0.0);
  CHECK(b.p_hat == Approx(0.5).margin(1.0 / 20.0));
  CHECK_FALSE(b.tail_defective);

  const PaftParams big{0.5, 1.0, {100.0}};
  CHECK(prob_death_before_tau(std::vector<double>{1.0}, big, km).p_hat == 0.0);

  // p_hat is non-increasing in the linear predictor.
  double prev = 2.0;
  for (double lp = -2.0; lp <= 2.0; lp += 0.01) {
    const double ph = prob_death_before_tau(std::vector<double>{lp}, PaftParams{0.0, 1.0, {1.0}}, km).p_hat;
    CHECK(ph <= prev);
    CHECK(ph >= 0.0);
    CHECK(ph <= 1.0);
    prev = ph;
  }
}

TEST_CASE("thresholds past a censored tail are flagged") {
  const std::vector<CensoredValue> v{{0.0, 1}, {0.5, 1}, {1.0, 0}};
  const auto km = km_estimate(v);
  const auto b = prob_death_before_tau(std::vector<double>{}, PaftParams{0.0, std::exp(2.0), {}}, km);
  CHECK(b.tail_defective);
  CHECK(b.p_hat == Approx(2.0 / 3.0).epsilon(1e-15));
  const auto inside = prob_death_before_tau(std::vector<double>{}, PaftParams{0.0, std::exp(0.7), {}}, km);
  CHECK_FALSE(inside.tail_defective);
}

TEST_CASE("scores ignore the treatment arm") {
  TrialDataset ds{{{1.0, 1, 0, {0.2}}, {2.0, 1, 1, {0.2}}, {3.0, 0, 1, {-0.4}}, {0.5, 1, 0, {0.0}}}, {"x"}};
  const auto a = score_subjects(ds, {1.2, 1.5, {0.8}});
  REQUIRE(a.scores.size() == 4);
  CHECK(a.scores[0].p_hat == a.scores[1].p_hat);
  CHECK(a.curve.times.size() == 4);
}
