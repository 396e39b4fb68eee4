#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>

#include "ctr/common.hpp"
#include "ctr/date.hpp"

namespace ctr {

enum class CounterFamily { clicks, favorites, purchases };

std::string to_string(CounterFamily f);
CounterFamily counter_family_from_string(const std::string& s);

// Beta prior on a per-listing event rate. alpha plays the role of pseudo-events,
// beta of pseudo-exposures.
struct SmoothingPrior {
  double alpha = 1.0;
  double beta = 50.0;
  double smoothing_factor = 0.3;  // weight on the newest period
  CounterFamily family = CounterFamily::clicks;

  double mean() const { return alpha / (alpha + beta); }
  void validate() const;
};

using PriorMap = std::map<CounterFamily, SmoothingPrior>;

// Per-period averages feeding the prior update.
struct PeriodAggregate {
  Date period;
  double avg_clicks = 0.0;
  double avg_impressions = 0.0;

  void validate() const;
};

// Posterior mean (c + alpha) / (v + alpha + beta). Rejects c > v.
double smoothed_rate(int64_t c, int64_t v, const SmoothingPrior& prior);

// Exponential smoothing of the prior toward the newest period's averages.
SmoothingPrior update_prior(const SmoothingPrior& prior, const PeriodAggregate& agg);

// Which period statistic feeds beta: the literal average-impressions reading,
// or the conjugate average of non-events.
enum class BetaConvention { impressions, non_clicks };

struct SmoothingConfig {
  double smoothing_factor = 0.3;
  BetaConvention beta_convention = BetaConvention::impressions;
};

// Folds chronologically ordered period aggregates into a prior: the first
// period seeds (alpha, beta), later periods are blended in via update_prior.
SmoothingPrior fit_prior(std::span<const PeriodAggregate> periods, const SmoothingConfig& cfg,
                         CounterFamily family);

}  // namespace ctr
