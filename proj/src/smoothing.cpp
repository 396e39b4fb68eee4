#include "ctr/smoothing.hpp"

#include <cmath>

namespace ctr {

std::string to_string(CounterFamily f) {
  switch (f) {
    case CounterFamily::clicks: return "clicks";
    case CounterFamily::favorites: return "favorites";
    case CounterFamily::purchases: return "purchases";
  }
  throw InternalError("unknown counter family");
}

CounterFamily counter_family_from_string(const std::string& s) {
  if (s == "clicks") return CounterFamily::clicks;
  if (s == "favorites") return CounterFamily::favorites;
  if (s == "purchases") return CounterFamily::purchases;
  throw ConfigError("unknown counter family: " + s);
}

void SmoothingPrior::validate() const {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ConfigError("prior alpha must be positive");
  if (!(beta > 0.0) || !std::isfinite(beta)) throw ConfigError("prior beta must be positive");
  if (!(smoothing_factor > 0.0) || smoothing_factor > 1.0) {
    throw ConfigError("smoothing factor must be in (0, 1]");
  }
}

void PeriodAggregate::validate() const {
  if (avg_clicks < 0.0 || avg_impressions < 0.0 || avg_clicks > avg_impressions) {
    throw DataError("period aggregate: need 0 <= avg_clicks <= avg_impressions");
  }
}

double smoothed_rate(int64_t c, int64_t v, const SmoothingPrior& prior) {
  prior.validate();
  if (c < 0 || v < 0 || c > v) throw DataError("smoothed_rate: need 0 <= c <= v");
  return (static_cast<double>(c) + prior.alpha) /
         (static_cast<double>(v) + prior.alpha + prior.beta);
}

SmoothingPrior update_prior(const SmoothingPrior& prior, const PeriodAggregate& agg) {
  prior.validate();
  agg.validate();
  if (!(agg.avg_clicks > 0.0) || !(agg.avg_impressions > 0.0)) {
    throw DataError("update_prior: period averages must be positive");
  }
  const double s = prior.smoothing_factor;
  SmoothingPrior out = prior;
  out.alpha = s * agg.avg_clicks + (1.0 - s) * prior.alpha;
  out.beta = s * agg.avg_impressions + (1.0 - s) * prior.beta;
  return out;
}

SmoothingPrior fit_prior(std::span<const PeriodAggregate> periods, const SmoothingConfig& cfg,
                         CounterFamily family) {
  if (periods.empty()) throw DataError("fit_prior: no period aggregates");
  // Aggregates of empty or click-free periods are floored to keep the prior
  // strictly positive.
  const auto floored = [&](const PeriodAggregate& p) {
    PeriodAggregate out = p;
    if (cfg.beta_convention == BetaConvention::non_clicks) {
      out.avg_impressions = p.avg_impressions - p.avg_clicks;
      if (out.avg_clicks > out.avg_impressions) out.avg_impressions = out.avg_clicks;
    }
    out.avg_clicks = std::max(out.avg_clicks, 1e-9);
    out.avg_impressions = std::max(out.avg_impressions, 1e-9);
    return out;
  };
  const PeriodAggregate first = floored(periods.front());
  SmoothingPrior prior;
  prior.family = family;
  prior.smoothing_factor = cfg.smoothing_factor;
  prior.alpha = first.avg_clicks;
  prior.beta = first.avg_impressions;
  for (size_t i = 1; i < periods.size(); ++i) {
    prior = update_prior(prior, floored(periods[i]));
  }
  return prior;
}

}  // namespace ctr
