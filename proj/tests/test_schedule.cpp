#include <cmath>
#include <stdexcept>

#include "doctest.h"
#include "rdm/schedule.hpp"

using namespace rdm;

TEST_CASE("linear schedule endpoints and derived arrays") {
  NoiseSchedule s = linear_schedule(1000, 1e-4, 0.02);
  CHECK(s.beta(1) == doctest::Approx(1e-4).epsilon(1e-14));
  CHECK(s.beta(1000) == doctest::Approx(0.02).epsilon(1e-14));
  CHECK(s.alpha_bar(0) == 1.0);
  CHECK(s.sigma(10) == doctest::Approx(std::sqrt(s.beta(10))).epsilon(1e-15));
}

TEST_CASE("single-step schedule") {
  NoiseSchedule s = linear_schedule(1, 0.01, 0.01);
  CHECK(s.betas.size() == 1);
  CHECK(s.beta(1) == 0.01);
  CHECK(s.alpha_bar(1) == doctest::Approx(0.99).epsilon(1e-15));
}

TEST_CASE("alpha_bar matches the cumulative product oracle") {
  NoiseSchedule s = linear_schedule(2, 1e-4, 0.02);
  CHECK(s.alpha_bar(2) == doctest::Approx((1.0 - 1e-4) * (1.0 - 0.02)).epsilon(1e-15));

  NoiseSchedule big = linear_schedule(500, 1e-4, 0.03);
  double prod = 1.0;
  for (int t = 1; t <= 500; ++t) {
    prod *= big.alpha(t);
    CHECK(std::abs(big.alpha_bar(t) - prod) <= 1e-12);
  }
}

TEST_CASE("alpha_bar decreases strictly") {
  NoiseSchedule s = linear_schedule(200, 1e-4, 0.05);
  for (int t = 1; t <= 200; ++t) CHECK(s.alpha_bar(t) < s.alpha_bar(t - 1));
}

TEST_CASE("schedule argument validation") {
  CHECK_THROWS_AS(linear_schedule(0, 1e-4, 0.02), std::invalid_argument);
  CHECK_THROWS_AS(linear_schedule(10, 0.0, 0.02), std::invalid_argument);
  CHECK_THROWS_AS(linear_schedule(10, 0.03, 0.02), std::invalid_argument);
  CHECK_THROWS_AS(linear_schedule(10, 1e-4, 1.0), std::invalid_argument);
}

TEST_CASE("ddim subschedule spans T down to 1") {
  NoiseSchedule s = linear_schedule(1000, 1e-4, 0.02);
  auto full = ddim_subschedule(s, 1000);
  CHECK(full.size() == 1000);
  CHECK(full.front() == 1000);
  CHECK(full.back() == 1);
  for (size_t i = 1; i < full.size(); ++i) CHECK(full[i] == full[i - 1] - 1);

  auto ten = ddim_subschedule(s, 10);
  CHECK(ten.size() == 10);
  CHECK(ten.front() == 1000);
  CHECK(ten.back() == 1);
  for (size_t i = 1; i < ten.size(); ++i) CHECK(ten[i] < ten[i - 1]);
}

TEST_CASE("ddim even spacing with round-to-nearest") {
  NoiseSchedule s = linear_schedule(100, 1e-4, 0.02);
  auto steps = ddim_subschedule(s, 4);
  CHECK(steps == std::vector<int>{100, 67, 34, 1});
}

TEST_CASE("ddim bounds checks and n_steps = 1") {
  NoiseSchedule s = linear_schedule(50, 1e-4, 0.02);
  CHECK_THROWS_AS(ddim_subschedule(s, 0), std::invalid_argument);
  CHECK_THROWS_AS(ddim_subschedule(s, 51), std::invalid_argument);
  CHECK(ddim_subschedule(s, 1) == std::vector<int>{50});
}
