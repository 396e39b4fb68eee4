#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ctr/common.hpp"

namespace ctr {

enum class Slice { mixed, cold, warm };

std::string to_string(Slice s);

struct ScoredExample {
  double score;      // in (0, 1)
  int label;         // {0, 1}
  Slice slice = Slice::mixed;
  double weight = 1.0;
};

enum class NeDenominator { entropy, rate };

struct MetricsConfig {
  NeDenominator ne_denominator = NeDenominator::entropy;
};

// One model on one dataset slice. auc is empty for single-class slices.
struct EvalReport {
  std::optional<double> auc;
  double avg_log_loss = 0.0;
  double normalized_cross_entropy = 0.0;
  uint64_t positives = 0;
  uint64_t negatives = 0;
  double base_rate = 0.0;  // weighted positive fraction of the slice
};

// Weighted Mann-Whitney AUC, ties counted half. Empty optional when the
// input is single-class.
std::optional<double> auc(std::span<const ScoredExample> examples);

// Weighted mean Bernoulli negative log-likelihood; scores clamped to
// [1e-15, 1 - 1e-15].
double avg_log_loss(std::span<const ScoredExample> examples);

// avg_log_loss normalized by the entropy of the training base rate (or by the
// raw rate under NeDenominator::rate).
double normalized_cross_entropy(std::span<const ScoredExample> examples, double training_base_rate,
                                NeDenominator denominator = NeDenominator::entropy);

// Mergeable evaluation aggregate: partition examples arbitrarily, merge, and
// the report equals the single-pass result exactly (finalization canonically
// sorts before computing).
class MetricsAccumulator {
 public:
  void add(const ScoredExample& ex);
  void merge(const MetricsAccumulator& other);
  EvalReport report(double training_base_rate,
                    NeDenominator denominator = NeDenominator::entropy) const;
  size_t size() const { return examples_.size(); }

 private:
  std::vector<ScoredExample> examples_;
};

// Per-slice reports; mixed covers every example, cold/warm their subsets.
std::map<Slice, EvalReport> evaluate_slices(std::span<const ScoredExample> examples,
                                            double training_base_rate,
                                            NeDenominator denominator = NeDenominator::entropy);

// Deltas versus a baseline report, in the reporting units: AUC in percentage
// points, log loss and NE in thousandths.
struct MetricDeltas {
  std::optional<double> auc_pp;
  std::optional<double> log_loss_x1e3;
  std::optional<double> ne_x1e3;
};

MetricDeltas deltas_vs_baseline(const EvalReport& variant, const EvalReport& baseline);

}  // namespace ctr
