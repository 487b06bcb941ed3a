#include <cmath>
#include <vector>

#include "catch_amalgamated.hpp"
#include "paft/numerics.hpp"

using Catch::Approx;
using namespace paft;

TEST_CASE("normal tail with shared exponential matches erfc") {
  double worst = 0.0;
  for (int k = 0; k <= 40000; ++k) {
    const double x = k * 0.001;
    const double ref = 0.5 * std::erfc(x / std::sqrt(2.0));
    const double got = normal_tail_with_exp(x, std::exp(-0.5 * x * x));
    worst = std::max(worst, std::abs(got - ref));
  }
  CHECK(worst <= 2e-16);
}

TEST_CASE("normal tail keeps about eight digits relative to the value in the far tail") {
  for (double x : {7.5, 10.0, 20.0, 35.0}) {
    const double ref = 0.5 * std::erfc(x / std::sqrt(2.0));
    const double got = normal_tail_with_exp(x, std::exp(-0.5 * x * x));
    CHECK(std::abs(got - ref) <= 1e-8 * ref);
  }
}

TEST_CASE("softplus and logistic stay finite at extreme arguments") {
  CHECK(softplus(0.0) == Approx(std::log(2.0)));
  CHECK(softplus(800.0) == 800.0);
  CHECK(softplus(-800.0) >= 0.0);
  CHECK(logistic(0.0) == 0.5);
  CHECK(logistic(-800.0) == 0.0);
  CHECK(logistic(800.0) == 1.0);
  CHECK(logistic(4.61) == Approx(0.990146244476768733).epsilon(1e-15));
}

TEST_CASE("type 7 quantiles agree with R") {
  // R: quantile(c(1, 2, 3, 4, 10), c(.25, .5, .75, .9)) -> 2, 3, 4, 7.6
  const std::vector<double> v{10, 3, 1, 4, 2};
  CHECK(quantile(v, 0.25) == 2.0);
  CHECK(quantile(v, 0.5) == 3.0);
  CHECK(quantile(v, 0.75) == 4.0);
  CHECK(quantile(v, 0.9) == Approx(7.6).epsilon(1e-15));
  CHECK(quantile(v, 0.0) == 1.0);
  CHECK(quantile(v, 1.0) == 10.0);
  CHECK_THROWS_AS(quantile({}, 0.5), usage_error);
}

TEST_CASE("sample sd uses the n-1 divisor") {
  const std::vector<double> v{1, 2, 3};
  CHECK(sample_sd(v) == 1.0);
  CHECK(mean(v) == 2.0);
}

TEST_CASE("adaptive Simpson integrates to tolerance") {
  CHECK(adaptive_simpson([](double s) { return std::exp(-s); }, 0.0, 3.0) == Approx(1.0 - std::exp(-3.0)).margin(1e-10));
  const double steep = adaptive_simpson([](double s) { return logistic((s - 1.0) / 0.01); }, 0.0, 2.0);
  CHECK(steep == Approx(1.0).margin(1e-10));
  CHECK(adaptive_simpson([](double) { return 1.0; }, 2.0, 2.0) == 0.0);
}

TEST_CASE("adaptive Simpson reports the worst interval when the budget runs out") {
  simpson_options opt;
  opt.abs_tol = 1e-30;
  opt.max_depth = 4;
  try {
    adaptive_simpson([](double s) { return std::sin(50.0 * s); }, 0.0, 3.0, opt);
    FAIL("expected numerical_error");
  } catch (const numerical_error& e) {
    CHECK(std::string(e.what()).find("worst interval") != std::string::npos);
  }
}
