#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ctr/date.hpp"
#include "ctr/ensemble.hpp"
#include "ctr/features.hpp"
#include "ctr/ftrl.hpp"
#include "ctr/metrics.hpp"
#include "ctr/record.hpp"
#include "ctr/smoothing.hpp"

namespace ctr {

// Progressive-validation window anchored at date t: train on [t-32, t-2],
// validate on t-1.
struct WindowConfig {
  Date anchor;
  double negative_sample_rate = 0.25;
  uint64_t sample_seed = 1;

  Date train_begin() const { return anchor - 32; }
  Date train_end() const { return anchor - 2; }  // inclusive
  Date validation_day() const { return anchor - 1; }

  void validate() const;
};

// Affine score calibration to reference moments.
struct CalibrationParams {
  double scale = 1.0;
  double shift = 0.0;
  double reference_mean = 0.0;
  double reference_std = 0.0;
  uint64_t clamped = 0;  // entries that hit the (0,1) clamp after mapping
};

// Maps scores by a*s + b so the pre-clamp mean and population std equal the
// references exactly; clamps to [1e-6, 1 - 1e-6] afterward. Rejects
// zero-variance inputs.
std::pair<std::vector<double>, CalibrationParams> calibrate(std::span<const double> scores,
                                                            double reference_mean,
                                                            double reference_std);

// A record prepared for training or validation: click/impression counters
// recomputed from the window's events (strictly before the record's date for
// training rows, full window for validation rows), plus the full-window
// impression count used for cold/warm assignment.
struct PreparedRow {
  ListingRecord rec;
  double weight = 1.0;
  int64_t window_impressions = 0;
};

struct PreparedData {
  std::vector<PreparedRow> train;       // negative-subsampled, weighted
  std::vector<PreparedRow> validation;  // weight 1, in input order
  PriorMap priors;                      // fitted on the training window
  size_t window_rows = 0;               // training rows before subsampling
  size_t out_of_range = 0;              // rows outside [t-32, t-1]
};

// Keeps each negative independently with probability rate (keyed by the
// sample seed and the row's ordinal); kept negatives carry weight 1/rate.
struct SubsampledRow {
  size_t index;
  double weight;
};
std::vector<SubsampledRow> subsample_negatives(std::span<const ListingRecord> records,
                                               const WindowConfig& cfg);

PreparedData prepare_window(std::span<const ListingRecord> logs, const WindowConfig& window,
                            const SmoothingConfig& smoothing);

enum class VariantKind { baseline, historical, content, ensemble };

std::string to_string(VariantKind k);
VariantKind variant_kind_from_string(const std::string& s);

struct VariantSpec {
  std::string name;
  VariantKind kind;
  std::optional<FtrlHyperparams> hyper;  // overrides the experiment default
};

struct ExperimentConfig {
  HashConfig hash;
  ContentConfig content;
  SmoothingConfig smoothing;
  FtrlHyperparams hyper;
  EnsembleConfig ensemble;
  PartitionConfig partition;
  MetricsConfig metrics;
  int threads = 1;
};

// A trained variant plus everything needed to score new records: feature
// configuration, priors, and the training base rate for NE.
struct VariantModel {
  std::string name;
  VariantKind kind = VariantKind::baseline;
  HashConfig hash;
  ContentConfig content;
  PriorMap priors;
  PartitionConfig partition_cfg;
  double training_base_rate = 0.0;
  std::optional<FtrlModel> single;      // baseline | historical | content
  std::optional<EnsembleBundle> bundle;  // ensemble
};

// Sparse features for a single-model variant kind.
SparseVector variant_features(VariantKind kind, const ListingRecord& rec, const HashConfig& hash,
                              const ContentConfig& content, const PriorMap& priors);

VariantModel train_variant(const VariantSpec& spec, const PreparedData& data,
                           const ExperimentConfig& cfg);

double score_record(const VariantModel& model, const ListingRecord& rec);

// Versioned container: config header plus the model's (z, n) state;
// round-trips to bit-identical predictions.
void save_variant(const VariantModel& model, const std::string& path);
VariantModel load_variant(const std::string& path);

struct VariantResult {
  std::string name;
  VariantKind kind = VariantKind::baseline;
  double training_base_rate = 0.0;
  CalibrationParams calibration;
  std::map<Slice, EvalReport> reports;
  std::map<Slice, MetricDeltas> deltas;
};

struct ExperimentResult {
  std::string baseline;
  std::vector<VariantResult> variants;
  std::map<Slice, size_t> slice_sizes;
};

// Full progressive-validation run: prepare the window, train every variant,
// score the validation day, calibrate against the baseline variant's score
// moments, slice by training-window impressions, and evaluate.
ExperimentResult run_experiment(std::span<const ListingRecord> logs,
                                std::span<const VariantSpec> variants,
                                const std::string& baseline_name, const WindowConfig& window,
                                const ExperimentConfig& cfg);

// Scores validation-day records with pre-trained models and reports deltas
// against the named baseline model (used by the evaluate command).
ExperimentResult evaluate_models(std::span<const ListingRecord> logs,
                                 std::span<const VariantModel> models,
                                 const std::string& baseline_name, const WindowConfig& window,
                                 const PartitionConfig& partition_cfg, const MetricsConfig& metrics,
                                 int threads = 1);

// Reporting-unit delta table (AUC in percentage points, log loss and NE in
// thousandths), one column group per non-baseline variant.
std::string render_delta_table(const ExperimentResult& result);

}  // namespace ctr
