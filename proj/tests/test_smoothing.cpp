#include <doctest.h>

#include <cmath>
#include <vector>

#include "ctr/rng.hpp"
#include "ctr/smoothing.hpp"

using namespace ctr;

TEST_CASE("smoothed_rate: posterior mean formula") {
  const SmoothingPrior p_2_98{2.0, 98.0, 0.3, CounterFamily::clicks};
  CHECK(smoothed_rate(0, 0, p_2_98) == doctest::Approx(0.02).epsilon(1e-12));

  const SmoothingPrior p_1_19{1.0, 19.0, 0.3, CounterFamily::clicks};
  CHECK(smoothed_rate(5, 95, p_1_19) == doctest::Approx(6.0 / 115.0).epsilon(1e-12));

  CHECK(smoothed_rate(500, 1000, p_2_98) == doctest::Approx(502.0 / 1100.0).epsilon(1e-12));
}

TEST_CASE("smoothed_rate: rejects c > v and invalid priors") {
  const SmoothingPrior prior{2.0, 98.0, 0.3, CounterFamily::clicks};
  CHECK_THROWS_AS(smoothed_rate(5, 4, prior), DataError);
  CHECK_THROWS_AS(smoothed_rate(-1, 4, prior), DataError);
  CHECK_THROWS_AS(smoothed_rate(0, 0, SmoothingPrior{0.0, 98.0, 0.3, CounterFamily::clicks}),
                  ConfigError);
  CHECK_THROWS_AS(smoothed_rate(0, 0, SmoothingPrior{1.0, 1.0, 1.5, CounterFamily::clicks}),
                  ConfigError);
}

TEST_CASE("smoothed_rate: shrinkage keeps the estimate between MLE and prior mean") {
  Rng rng(23);
  for (int t = 0; t < 1000; ++t) {
    const SmoothingPrior prior{0.1 + 5.0 * rng.uniform01(), 1.0 + 200.0 * rng.uniform01(), 0.3,
                               CounterFamily::clicks};
    const int64_t v = 1 + static_cast<int64_t>(rng.below(500));
    const int64_t c = static_cast<int64_t>(rng.below(static_cast<uint64_t>(v + 1)));
    const double mle = static_cast<double>(c) / static_cast<double>(v);
    const double prior_mean = prior.mean();
    const double rate = smoothed_rate(c, v, prior);
    CHECK(rate > 0.0);
    CHECK(rate < 1.0);
    if (mle != prior_mean) {
      CHECK(rate > std::min(mle, prior_mean));
      CHECK(rate < std::max(mle, prior_mean));
    }
  }
}

TEST_CASE("smoothed_rate: converges to the empirical rate as evidence grows") {
  const SmoothingPrior prior{2.0, 98.0, 0.3, CounterFamily::clicks};
  const double r = 0.37;
  for (int64_t v : {1000, 100000, 10000000}) {
    const auto c = static_cast<int64_t>(std::floor(r * static_cast<double>(v)));
    CHECK(std::fabs(smoothed_rate(c, v, prior) - r) < 110.0 / static_cast<double>(v));
  }
}

TEST_CASE("smoothed_rate: beats the MLE on low-impression listings (simulation)") {
  // Listings drawn from the true prior with v in {0..20}; the MLE's 0/0 case
  // falls back to the global mean.
  const double alpha = 2.0, beta = 98.0;
  const SmoothingPrior prior{alpha, beta, 0.3, CounterFamily::clicks};
  const double global_mean = alpha / (alpha + beta);
  Rng rng(29);
  double mse_smoothed = 0.0, mse_mle = 0.0;
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) {
    const double theta = rng.beta(alpha, beta);
    const int64_t v = static_cast<int64_t>(rng.below(21));
    const int64_t c = rng.binomial(v, theta);
    const double smoothed = smoothed_rate(c, v, prior);
    const double mle = v == 0 ? global_mean : static_cast<double>(c) / static_cast<double>(v);
    mse_smoothed += (smoothed - theta) * (smoothed - theta);
    mse_mle += (mle - theta) * (mle - theta);
  }
  CHECK(mse_smoothed / draws <= mse_mle / draws);
}

TEST_CASE("update_prior: exponential smoothing of the period averages") {
  SUBCASE("s = 1 replaces the prior") {
    const SmoothingPrior prior{7.0, 300.0, 1.0, CounterFamily::clicks};
    const auto out = update_prior(prior, PeriodAggregate{Date{}, 3.0, 150.0});
    CHECK(out.alpha == 3.0);
    CHECK(out.beta == 150.0);
  }

  SUBCASE("s = 0.5 lands on the midpoint") {
    const SmoothingPrior prior{2.0, 100.0, 0.5, CounterFamily::clicks};
    const auto out = update_prior(prior, PeriodAggregate{Date{}, 4.0, 200.0});
    CHECK(out.alpha == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(out.beta == doctest::Approx(150.0).epsilon(1e-12));
  }

  SUBCASE("repeated application converges geometrically") {
    SmoothingPrior prior{2.0, 200.0, 0.3, CounterFamily::clicks};
    const PeriodAggregate agg{Date{}, 5.0, 250.0};
    const double alpha_gap = std::fabs(prior.alpha - agg.avg_clicks);
    const double beta_gap = std::fabs(prior.beta - agg.avg_impressions);
    for (int i = 0; i < 50; ++i) prior = update_prior(prior, agg);
    const double contraction = std::pow(0.7, 50);
    CHECK(std::fabs(prior.alpha - 5.0) <= contraction * alpha_gap + 1e-12);
    CHECK(std::fabs(prior.beta - 250.0) <= contraction * beta_gap + 1e-12);
    CHECK(std::fabs(prior.alpha - 5.0) < 1e-6);
    CHECK(std::fabs(prior.beta - 250.0) < 1e-6);
  }

  SUBCASE("rejects non-positive period averages") {
    const SmoothingPrior prior{2.0, 100.0, 0.5, CounterFamily::clicks};
    CHECK_THROWS_AS(update_prior(prior, PeriodAggregate{Date{}, 0.0, 100.0}), DataError);
    CHECK_THROWS_AS(update_prior(prior, PeriodAggregate{Date{}, 2.0, 0.0}), DataError);
  }

  SUBCASE("rejects aggregates with clicks above impressions") {
    const SmoothingPrior prior{2.0, 100.0, 0.5, CounterFamily::clicks};
    CHECK_THROWS_AS(update_prior(prior, PeriodAggregate{Date{}, 5.0, 3.0}), DataError);
  }
}

TEST_CASE("fit_prior: chronological fold matches a hand-rolled recurrence") {
  const std::vector<PeriodAggregate> periods = {
      {Date::parse("2026-06-01"), 1.0, 40.0},
      {Date::parse("2026-06-02"), 2.0, 60.0},
      {Date::parse("2026-06-03"), 1.5, 55.0},
  };
  SmoothingConfig cfg;
  cfg.smoothing_factor = 0.3;
  const auto prior = fit_prior(periods, cfg, CounterFamily::clicks);

  double alpha = 1.0, beta = 40.0;
  alpha = 0.3 * 2.0 + 0.7 * alpha;
  beta = 0.3 * 60.0 + 0.7 * beta;
  alpha = 0.3 * 1.5 + 0.7 * alpha;
  beta = 0.3 * 55.0 + 0.7 * beta;
  CHECK(prior.alpha == doctest::Approx(alpha).epsilon(1e-12));
  CHECK(prior.beta == doctest::Approx(beta).epsilon(1e-12));
  CHECK(prior.family == CounterFamily::clicks);
}

TEST_CASE("fit_prior: beta convention flag switches to non-click counts") {
  const std::vector<PeriodAggregate> periods = {{Date::parse("2026-06-01"), 2.0, 102.0}};
  SmoothingConfig impressions_cfg;
  SmoothingConfig non_clicks_cfg;
  non_clicks_cfg.beta_convention = BetaConvention::non_clicks;

  CHECK(fit_prior(periods, impressions_cfg, CounterFamily::clicks).beta == 102.0);
  CHECK(fit_prior(periods, non_clicks_cfg, CounterFamily::clicks).beta == 100.0);
  CHECK_THROWS_AS(fit_prior({}, impressions_cfg, CounterFamily::clicks), DataError);
}
