#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ctr/record.hpp"

namespace ctr {

// Synthetic click-log generator. Listings draw a latent rate theta from
// Beta(prior_alpha, prior_beta); expected window impressions follow a
// truncated power law solved so that the requested fraction of listings
// lands at or above the warm threshold; text and image channels encode the
// listing's theta quantile at the configured signal strengths.
struct SyntheticSpec {
  int64_t n_listings = 20000;
  int days = 32;  // last generated day is the validation day
  int vocab_size = 1500;
  double prior_alpha = 2.0;
  double prior_beta = 98.0;
  double impression_exponent = 2.2;  // power-law exponent, > 1
  double text_signal_strength = 0.38;
  double image_signal_strength = 0.28;
  double warm_fraction = 0.3;
  int64_t warm_threshold = 30;
  double image_coverage = 0.7;    // fraction of listings with an embedding
  double validation_scale = 4.0;  // validation-day traffic multiplier
  uint64_t seed = 1;

  void validate() const;
};

struct SyntheticStats {
  uint64_t records = 0;
  uint64_t positives = 0;
  int64_t listings = 0;
  double realized_warm_fraction = 0.0;  // by training-window impressions
  double mean_label = 0.0;
};

// In-memory generation; records come out ordered by day, then listing.
struct SyntheticLogs {
  std::vector<ListingRecord> records;
  ImageStore images;
  SyntheticStats stats;
};

SyntheticLogs generate_synthetic_logs(const SyntheticSpec& spec);

// File-level generation: line-delimited records at log_path, binary embedding
// sidecar at image_path. Writes are atomic (temp file + rename), so an
// infeasible spec leaves nothing behind. Byte-identical for a fixed seed.
SyntheticStats generate_synthetic_logs(const SyntheticSpec& spec, const std::string& log_path,
                                       const std::string& image_path);

}  // namespace ctr
