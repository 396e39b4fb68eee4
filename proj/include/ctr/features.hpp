#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ctr/record.hpp"
#include "ctr/smoothing.hpp"
#include "ctr/sparse_vector.hpp"

namespace ctr {

// Hashed text feature space configuration.
struct HashConfig {
  int dimension_bits = 18;
  uint64_t seed = 0xC3A5C85C97CB3127ULL;
  bool use_sign_hash = true;

  uint32_t dimension() const { return 1u << dimension_bits; }
  void validate() const;
};

// Content-feature channels beyond raw text.
struct ContentConfig {
  bool include_listing_id = true;
  bool include_price = true;
  bool include_query = false;
  std::vector<double> price_grid = default_price_grid();

  static std::vector<double> default_price_grid();
};

// Reserved low-index layout shared by the historical and ensemble spaces.
inline constexpr uint32_t kReservedIndices = 16;
inline constexpr uint32_t kBiasIndex = 0;
inline constexpr uint32_t kSmoothedCtrIndex = 1;
inline constexpr uint32_t kSmoothedFavoriteIndex = 2;
inline constexpr uint32_t kSmoothedPurchaseIndex = 3;
inline constexpr uint32_t kHistoricalDimension = kReservedIndices;

inline constexpr uint32_t kHistoricalLogitIndex = 1;
inline constexpr uint32_t kContentLogitIndex = 2;
inline constexpr uint32_t kLogImpressionsIndex = 3;
inline constexpr uint32_t kEnsembleDimension = kReservedIndices;

// Constant feature carried by every hashed vector (the intercept).
inline constexpr std::string_view kInterceptToken = "c|1";

// Lowercased unigrams and adjacent bigrams, namespaced by field and arity.
// Title bigrams never span into tags; each tag forms its own n-gram unit.
std::vector<std::string> tokenize(std::string_view title, std::span<const std::string> tags);

// Query unigrams in their own namespace (opt-in channel).
std::vector<std::string> query_tokens(std::string_view query);

// Hashing trick: index = h(token) mod 2^b, value +-1 per occurrence under the
// sign hash (else +1), collisions summed.
SparseVector hash_text(std::span<const std::string> tokens, const HashConfig& cfg);

// F_l = [T_l, I_l]: hashed text in [0, D_text), image values at
// [D_text, D_text + kImageDim).
struct MultimodalEmbedding {
  SparseVector text;
  bool has_image = false;
  SparseVector combined;
};

MultimodalEmbedding build_content_features(const ListingRecord& rec, const HashConfig& hash,
                                           const ContentConfig& content);

// Hot-path variant that only materializes the combined vector.
SparseVector build_content_vector(const ListingRecord& rec, const HashConfig& hash,
                                  const ContentConfig& content, SparseVectorBuilder& builder);

// Smoothed behavioral rates at reserved indices plus a constant bias feature.
// Requires the clicks prior; favorite/purchase rates appear only when their
// priors are supplied.
SparseVector build_historical_features(const ListingRecord& rec, const PriorMap& priors);

// floor(ln(1 + impressions)); the +1 keeps zero-impression listings defined.
int64_t ensemble_impression_feature(int64_t impressions);

}  // namespace ctr
