#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ctr/features.hpp"
#include "ctr/ftrl.hpp"
#include "ctr/record.hpp"
#include "ctr/smoothing.hpp"

namespace ctr {

// Impression threshold splitting listings into cold (< k) and warm (>= k).
struct PartitionConfig {
  int64_t k = 30;
  void validate() const;
};

struct Partition {
  std::vector<size_t> cold;
  std::vector<size_t> warm;
};

// Partitions by per-item impression counts: warm means impressions >= k.
Partition partition(std::span<const int64_t> impressions, const PartitionConfig& cfg);

struct EnsembleConfig {
  int folds = 2;
  bool out_of_fold = true;  // false scores training rows with the final base models
  uint64_t fold_seed = 0;
  // Base scores feed the stacker in logit space, so the historical base's
  // probability spread has to be calibrated, not just rank-correct. Its
  // smoothed-rate inputs are tiny values, which a single cold-start pass
  // cannot scale; extra shuffled passes on that 16-dim model are ~free. The
  // high-dimensional content base keeps the caller's regime (extra passes
  // would memorize listing ids and image noise), as does anything else.
  int historical_epochs = 25;
  double historical_lr_alpha = 1.0;
  // The content base sees few positives in the cold region and overshoots
  // rare-token weights, leaving its logit spread overconfident; ridge decay
  // (which scales against (beta + sqrt(n))/alpha, so it bites hardest on
  // rarely-updated coordinates) pulls its probabilities back to earth.
  double content_lambda2 = 96.0;
  int stacker_epochs = 300;
  double stacker_lr_alpha = 2.0;
};

// Two base models, their training priors, and the stacking model over base
// scores plus the impression feature.
struct EnsembleBundle {
  FtrlModel historical;
  FtrlModel content;
  FtrlModel stacker;
  PriorMap priors;
  PartitionConfig partition_cfg;
  HashConfig hash;
  ContentConfig content_cfg;
};

// Stacker input at the reserved layout: bias, base scores in logit space, and
// floor(ln(1 + impressions)).
SparseVector ensemble_row_from_scores(double historical_score, double content_score,
                                      int64_t impressions);

struct EnsembleTrainRow {
  const ListingRecord* rec;
  double weight;
  int64_t window_impressions;  // full-window count used for the cold/warm split
};

// Trains the bundle: historical base on warm rows, content base on cold rows,
// stacker on all rows with out-of-fold base scores (folds assigned per
// listing). Throws DataError when a base partition is empty.
EnsembleBundle train_ensemble(std::span<const EnsembleTrainRow> rows, const EnsembleConfig& cfg,
                              const HashConfig& hash, const ContentConfig& content,
                              const PriorMap& priors, const PartitionConfig& partition_cfg,
                              const FtrlHyperparams& hyper, int threads = 1);

double predict_ensemble(const EnsembleBundle& bundle, const ListingRecord& rec);

}  // namespace ctr
