#include "ctr/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace ctr {

namespace {

constexpr double kScoreClamp = 1e-15;

double clamp_score(double p) {
  return std::min(1.0 - kScoreClamp, std::max(kScoreClamp, p));
}

void check_example(const ScoredExample& ex) {
  if (!std::isfinite(ex.score) || ex.score <= 0.0 || ex.score >= 1.0) {
    throw DataError("scored example: score must be finite in (0, 1)");
  }
  if (ex.label != 0 && ex.label != 1) throw DataError("scored example: label must be 0 or 1");
  if (!(ex.weight > 0.0)) throw DataError("scored example: weight must be positive");
}

// Canonical evaluation order; examples equal on all keys are interchangeable,
// so any multiset of examples yields bit-identical metrics.
void canonical_sort(std::vector<ScoredExample>& v) {
  std::sort(v.begin(), v.end(), [](const ScoredExample& a, const ScoredExample& b) {
    if (a.score != b.score) return a.score < b.score;
    if (a.label != b.label) return a.label < b.label;
    return a.weight < b.weight;
  });
}

std::optional<double> auc_sorted(const std::vector<ScoredExample>& sorted) {
  double pos_total = 0.0, neg_total = 0.0;
  for (const auto& ex : sorted) (ex.label ? pos_total : neg_total) += ex.weight;
  if (pos_total == 0.0 || neg_total == 0.0) return std::nullopt;

  double concordant = 0.0;
  double neg_below = 0.0;
  size_t i = 0;
  while (i < sorted.size()) {
    const double score = sorted[i].score;
    double pos_here = 0.0, neg_here = 0.0;
    for (; i < sorted.size() && sorted[i].score == score; ++i) {
      (sorted[i].label ? pos_here : neg_here) += sorted[i].weight;
    }
    concordant += pos_here * (neg_below + 0.5 * neg_here);
    neg_below += neg_here;
  }
  return concordant / (pos_total * neg_total);
}

double log_loss_sorted(const std::vector<ScoredExample>& sorted) {
  if (sorted.empty()) throw DataError("log loss of an empty example set");
  double loss = 0.0, weight = 0.0;
  for (const auto& ex : sorted) {
    const double p = clamp_score(ex.score);
    loss += ex.weight * (ex.label ? -std::log(p) : -std::log(1.0 - p));
    weight += ex.weight;
  }
  return loss / weight;
}

double bernoulli_entropy(double p) {
  return -(p * std::log(p) + (1.0 - p) * std::log(1.0 - p));
}

double ne_denominator_value(double training_base_rate, NeDenominator denominator) {
  if (!(training_base_rate > 0.0) || !(training_base_rate < 1.0)) {
    throw DataError("training base rate must be strictly inside (0, 1)");
  }
  return denominator == NeDenominator::entropy ? bernoulli_entropy(training_base_rate)
                                               : training_base_rate;
}

}  // namespace

std::string to_string(Slice s) {
  switch (s) {
    case Slice::mixed: return "mixed";
    case Slice::cold: return "cold";
    case Slice::warm: return "warm";
  }
  throw InternalError("unknown slice");
}

std::optional<double> auc(std::span<const ScoredExample> examples) {
  std::vector<ScoredExample> v(examples.begin(), examples.end());
  for (const auto& ex : v) check_example(ex);
  canonical_sort(v);
  return auc_sorted(v);
}

double avg_log_loss(std::span<const ScoredExample> examples) {
  std::vector<ScoredExample> v(examples.begin(), examples.end());
  for (const auto& ex : v) check_example(ex);
  canonical_sort(v);
  return log_loss_sorted(v);
}

double normalized_cross_entropy(std::span<const ScoredExample> examples, double training_base_rate,
                                NeDenominator denominator) {
  return avg_log_loss(examples) / ne_denominator_value(training_base_rate, denominator);
}

void MetricsAccumulator::add(const ScoredExample& ex) {
  check_example(ex);
  examples_.push_back(ex);
}

void MetricsAccumulator::merge(const MetricsAccumulator& other) {
  examples_.insert(examples_.end(), other.examples_.begin(), other.examples_.end());
}

EvalReport MetricsAccumulator::report(double training_base_rate, NeDenominator denominator) const {
  if (examples_.empty()) throw DataError("evaluation of an empty example set");
  std::vector<ScoredExample> sorted = examples_;
  canonical_sort(sorted);

  EvalReport out;
  double pos_weight = 0.0, total_weight = 0.0;
  for (const auto& ex : sorted) {
    total_weight += ex.weight;
    if (ex.label) {
      pos_weight += ex.weight;
      ++out.positives;
    } else {
      ++out.negatives;
    }
  }
  out.base_rate = pos_weight / total_weight;
  out.auc = auc_sorted(sorted);
  out.avg_log_loss = log_loss_sorted(sorted);
  out.normalized_cross_entropy =
      out.avg_log_loss / ne_denominator_value(training_base_rate, denominator);
  return out;
}

std::map<Slice, EvalReport> evaluate_slices(std::span<const ScoredExample> examples,
                                            double training_base_rate, NeDenominator denominator) {
  MetricsAccumulator mixed, cold, warm;
  for (const auto& ex : examples) {
    mixed.add(ex);
    if (ex.slice == Slice::cold) cold.add(ex);
    if (ex.slice == Slice::warm) warm.add(ex);
  }
  std::map<Slice, EvalReport> out;
  if (mixed.size() > 0) out.emplace(Slice::mixed, mixed.report(training_base_rate, denominator));
  if (cold.size() > 0) out.emplace(Slice::cold, cold.report(training_base_rate, denominator));
  if (warm.size() > 0) out.emplace(Slice::warm, warm.report(training_base_rate, denominator));
  return out;
}

MetricDeltas deltas_vs_baseline(const EvalReport& variant, const EvalReport& baseline) {
  MetricDeltas d;
  if (variant.auc && baseline.auc) d.auc_pp = (*variant.auc - *baseline.auc) * 100.0;
  d.log_loss_x1e3 = (variant.avg_log_loss - baseline.avg_log_loss) * 1e3;
  d.ne_x1e3 = (variant.normalized_cross_entropy - baseline.normalized_cross_entropy) * 1e3;
  return d;
}

}  // namespace ctr
