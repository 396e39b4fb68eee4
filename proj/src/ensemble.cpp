#include "ctr/ensemble.hpp"

#include <algorithm>
#include <future>
#include <string>

#include "ctr/hashing.hpp"

namespace ctr {

void PartitionConfig::validate() const {
  if (k < 1) throw ConfigError("partition threshold k must be >= 1");
}

Partition partition(std::span<const int64_t> impressions, const PartitionConfig& cfg) {
  cfg.validate();
  Partition out;
  for (size_t i = 0; i < impressions.size(); ++i) {
    if (impressions[i] < 0) throw DataError("partition: negative impression count");
    (impressions[i] >= cfg.k ? out.warm : out.cold).push_back(i);
  }
  return out;
}

SparseVector ensemble_row_from_scores(double historical_score, double content_score,
                                      int64_t impressions) {
  SparseVector x;
  x.dimension = kEnsembleDimension;
  x.entries.push_back({kBiasIndex, 1.0});
  const double hist_logit = logit(historical_score);
  const double content_logit = logit(content_score);
  if (hist_logit != 0.0) x.entries.push_back({kHistoricalLogitIndex, hist_logit});
  if (content_logit != 0.0) x.entries.push_back({kContentLogitIndex, content_logit});
  const auto log_impressions = static_cast<double>(ensemble_impression_feature(impressions));
  if (log_impressions != 0.0) x.entries.push_back({kLogImpressionsIndex, log_impressions});
  return x;
}

namespace {

constexpr uint64_t kFoldSalt = 0x464F4C4453504C49ULL;

// Folds are assigned per listing so an id-keyed feature cannot leak across
// the out-of-fold boundary.
int fold_of(const std::string& listing_id, int folds, uint64_t fold_seed) {
  return static_cast<int>(hash01(listing_id, mix64(fold_seed ^ kFoldSalt)) * folds);
}

struct BaseTrainInputs {
  std::span<const EnsembleTrainRow> rows;
  const std::vector<size_t>* region;  // indices into rows
  int skip_fold;                      // -1 trains on the whole region
  int folds;
  uint64_t fold_seed;
};

FtrlModel train_historical_base(const BaseTrainInputs& in, const PriorMap& priors,
                                const FtrlHyperparams& hyper) {
  FtrlModel model(kHistoricalDimension, hyper);
  std::vector<size_t> use;
  use.reserve(in.region->size());
  for (const size_t idx : *in.region) {
    if (in.skip_fold >= 0 &&
        fold_of(in.rows[idx].rec->listing_id, in.folds, in.fold_seed) == in.skip_fold) {
      continue;
    }
    use.push_back(idx);
  }
  SparseVector x;
  model.train_stream(use.size(), [&](size_t i) {
    const EnsembleTrainRow& row = in.rows[use[i]];
    x = build_historical_features(*row.rec, priors);
    return FtrlModel::RowView{&x, row.rec->label, row.weight};
  });
  return model;
}

FtrlModel train_content_base(const BaseTrainInputs& in, const HashConfig& hash,
                             const ContentConfig& content, const FtrlHyperparams& hyper) {
  FtrlModel model(hash.dimension() + static_cast<uint32_t>(kImageDim), hyper);
  std::vector<size_t> use;
  use.reserve(in.region->size());
  for (const size_t idx : *in.region) {
    if (in.skip_fold >= 0 &&
        fold_of(in.rows[idx].rec->listing_id, in.folds, in.fold_seed) == in.skip_fold) {
      continue;
    }
    use.push_back(idx);
  }
  SparseVectorBuilder builder;
  SparseVector x;
  model.train_stream(use.size(), [&](size_t i) {
    const EnsembleTrainRow& row = in.rows[use[i]];
    x = build_content_vector(*row.rec, hash, content, builder);
    return FtrlModel::RowView{&x, row.rec->label, row.weight};
  });
  return model;
}

}  // namespace

EnsembleBundle train_ensemble(std::span<const EnsembleTrainRow> rows, const EnsembleConfig& cfg,
                              const HashConfig& hash, const ContentConfig& content,
                              const PriorMap& priors, const PartitionConfig& partition_cfg,
                              const FtrlHyperparams& hyper, int threads) {
  if (cfg.folds < 2 && cfg.out_of_fold) throw ConfigError("out-of-fold stacking needs >= 2 folds");
  std::vector<int64_t> impressions;
  impressions.reserve(rows.size());
  for (const auto& row : rows) impressions.push_back(row.window_impressions);
  const Partition split = partition(impressions, partition_cfg);
  if (split.warm.empty()) {
    throw DataError("ensemble: warm partition is empty, historical base model has no data");
  }
  if (split.cold.empty()) {
    throw DataError("ensemble: cold partition is empty, content base model has no data");
  }

  FtrlHyperparams hist_hyper = hyper;
  hist_hyper.epochs = std::max(hyper.epochs, cfg.historical_epochs);
  hist_hyper.lr_alpha = cfg.historical_lr_alpha;
  FtrlHyperparams content_hyper = hyper;
  content_hyper.lambda2 = std::max(hyper.lambda2, cfg.content_lambda2);
  const auto train_pair = [&](int skip_fold) {
    const BaseTrainInputs hist_in{rows, &split.warm, skip_fold, cfg.folds, cfg.fold_seed};
    const BaseTrainInputs cont_in{rows, &split.cold, skip_fold, cfg.folds, cfg.fold_seed};
    if (threads > 1) {
      auto hist_future = std::async(std::launch::async, [&] {
        return train_historical_base(hist_in, priors, hist_hyper);
      });
      FtrlModel content_model = train_content_base(cont_in, hash, content, content_hyper);
      return std::make_pair(hist_future.get(), std::move(content_model));
    }
    return std::make_pair(train_historical_base(hist_in, priors, hist_hyper),
                          train_content_base(cont_in, hash, content, content_hyper));
  };

  // Base scores for stacker rows: out-of-fold by default so a base model never
  // scores a listing it trained on.
  std::vector<double> hist_scores(rows.size()), content_scores(rows.size());
  if (cfg.out_of_fold) {
    for (int fold = 0; fold < cfg.folds; ++fold) {
      const auto [hist_model, content_model] = train_pair(fold);
      SparseVectorBuilder builder;
      for (size_t i = 0; i < rows.size(); ++i) {
        if (fold_of(rows[i].rec->listing_id, cfg.folds, cfg.fold_seed) != fold) continue;
        hist_scores[i] = hist_model.predict(build_historical_features(*rows[i].rec, priors));
        content_scores[i] =
            content_model.predict(build_content_vector(*rows[i].rec, hash, content, builder));
      }
    }
  }

  auto [hist_final, content_final] = train_pair(-1);
  if (!cfg.out_of_fold) {
    SparseVectorBuilder builder;
    for (size_t i = 0; i < rows.size(); ++i) {
      hist_scores[i] = hist_final.predict(build_historical_features(*rows[i].rec, priors));
      content_scores[i] =
          content_final.predict(build_content_vector(*rows[i].rec, hash, content, builder));
    }
  }

  // The log-impression input is the count backing the historical estimate at
  // scoring time (the record's counter), matching what predict_ensemble sees.
  FtrlHyperparams stacker_hyper = hyper;
  stacker_hyper.epochs = std::max(hyper.epochs, cfg.stacker_epochs);
  stacker_hyper.lr_alpha = cfg.stacker_lr_alpha;
  FtrlModel stacker(kEnsembleDimension, stacker_hyper);
  SparseVector x;
  stacker.train_stream(rows.size(), [&](size_t i) {
    x = ensemble_row_from_scores(hist_scores[i], content_scores[i], rows[i].rec->impressions);
    return FtrlModel::RowView{&x, rows[i].rec->label, rows[i].weight};
  });

  return EnsembleBundle{std::move(hist_final), std::move(content_final), std::move(stacker),
                        priors, partition_cfg, hash, content};
}

double predict_ensemble(const EnsembleBundle& bundle, const ListingRecord& rec) {
  const double hist_score =
      bundle.historical.predict(build_historical_features(rec, bundle.priors));
  SparseVectorBuilder builder;
  const double content_score =
      bundle.content.predict(build_content_vector(rec, bundle.hash, bundle.content_cfg, builder));
  const SparseVector x = ensemble_row_from_scores(hist_score, content_score, rec.impressions);
  return bundle.stacker.predict(x);
}

}  // namespace ctr
