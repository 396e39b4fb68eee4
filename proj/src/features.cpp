#include "ctr/features.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "ctr/hashing.hpp"

namespace ctr {

namespace {

constexpr uint64_t kSignSeedSalt = 0x5349474E48415348ULL;

// Splits on non-alphanumeric runs, lowercasing ASCII letters.
void split_words(std::string_view text, std::vector<std::string>& out) {
  std::string word;
  for (const char raw : text) {
    const unsigned char c = static_cast<unsigned char>(raw);
    if (std::isalnum(c)) {
      word.push_back(static_cast<char>(std::tolower(c)));
    } else if (!word.empty()) {
      out.push_back(std::move(word));
      word.clear();
    }
  }
  if (!word.empty()) out.push_back(std::move(word));
}

// Namespaced unigrams and adjacent bigrams for one field instance.
void emit_ngrams(std::string_view text, std::string_view uni_ns, std::string_view bi_ns,
                 std::vector<std::string>& out) {
  std::vector<std::string> words;
  split_words(text, words);
  for (const auto& w : words) {
    out.push_back(std::string(uni_ns) + w);
  }
  for (size_t i = 0; i + 1 < words.size(); ++i) {
    out.push_back(std::string(bi_ns) + words[i] + ' ' + words[i + 1]);
  }
}

}  // namespace

void HashConfig::validate() const {
  if (dimension_bits < 8 || dimension_bits > 28) {
    throw ConfigError("hash dimension_bits must be in [8, 28]");
  }
}

std::vector<double> ContentConfig::default_price_grid() {
  return {2.5, 4.0, 6.5, 10.0, 16.0, 25.0, 40.0, 63.0, 100.0};
}

std::vector<std::string> tokenize(std::string_view title, std::span<const std::string> tags) {
  std::vector<std::string> tokens;
  emit_ngrams(title, "tu|", "tb|", tokens);
  for (const auto& tag : tags) {
    emit_ngrams(tag, "gu|", "gb|", tokens);
  }
  return tokens;
}

std::vector<std::string> query_tokens(std::string_view query) {
  std::vector<std::string> words;
  split_words(query, words);
  std::vector<std::string> tokens;
  tokens.reserve(words.size());
  for (const auto& w : words) tokens.push_back("qu|" + w);
  return tokens;
}

SparseVector hash_text(std::span<const std::string> tokens, const HashConfig& cfg) {
  cfg.validate();
  SparseVectorBuilder builder;
  const uint32_t mask = cfg.dimension() - 1;
  for (const auto& token : tokens) {
    const uint32_t index = static_cast<uint32_t>(hash_bytes(token, cfg.seed)) & mask;
    double value = 1.0;
    if (cfg.use_sign_hash) {
      value = (hash_bytes(token, cfg.seed ^ kSignSeedSalt) & 1u) ? 1.0 : -1.0;
    }
    builder.add(index, value);
  }
  return builder.build(cfg.dimension());
}

namespace {

void add_content_tokens(const ListingRecord& rec, const ContentConfig& content,
                        std::vector<std::string>& tokens) {
  tokens = tokenize(rec.title, rec.tags);
  // Constant intercept token; hashed like any other feature so the text space
  // needs no reserved slot.
  tokens.push_back(std::string(kInterceptToken));
  if (content.include_listing_id) {
    tokens.push_back("id|" + rec.listing_id);
  }
  if (content.include_price) {
    const auto& grid = content.price_grid;
    const size_t bucket =
        std::upper_bound(grid.begin(), grid.end(), rec.price) - grid.begin();
    tokens.push_back("pr|" + std::to_string(bucket));
  }
  if (content.include_query) {
    for (auto& q : query_tokens(rec.query)) tokens.push_back(std::move(q));
  }
}

void check_embedding(const ListingRecord& rec) {
  if (!rec.image_embedding) return;
  if (rec.image_embedding->size() != kImageDim) {
    throw DataError("listing " + rec.listing_id + ": image embedding has " +
                    std::to_string(rec.image_embedding->size()) + " entries, expected " +
                    std::to_string(kImageDim));
  }
  for (const float f : *rec.image_embedding) {
    if (!std::isfinite(f)) throw DataError("listing " + rec.listing_id + ": non-finite embedding");
  }
}

}  // namespace

MultimodalEmbedding build_content_features(const ListingRecord& rec, const HashConfig& hash,
                                           const ContentConfig& content) {
  check_embedding(rec);
  std::vector<std::string> tokens;
  add_content_tokens(rec, content, tokens);

  MultimodalEmbedding out;
  out.text = hash_text(tokens, hash);
  out.has_image = rec.image_embedding != nullptr;

  const uint32_t text_dim = hash.dimension();
  out.combined.dimension = text_dim + static_cast<uint32_t>(kImageDim);
  out.combined.entries = out.text.entries;
  if (rec.image_embedding) {
    for (size_t j = 0; j < kImageDim; ++j) {
      const double v = (*rec.image_embedding)[j];
      if (v != 0.0) {
        out.combined.entries.push_back({text_dim + static_cast<uint32_t>(j), v});
      }
    }
  }
  return out;
}

SparseVector build_content_vector(const ListingRecord& rec, const HashConfig& hash,
                                  const ContentConfig& content, SparseVectorBuilder& builder) {
  check_embedding(rec);
  std::vector<std::string> tokens;
  add_content_tokens(rec, content, tokens);

  builder.clear();
  const uint32_t mask = hash.dimension() - 1;
  for (const auto& token : tokens) {
    const uint32_t index = static_cast<uint32_t>(hash_bytes(token, hash.seed)) & mask;
    double value = 1.0;
    if (hash.use_sign_hash) {
      value = (hash_bytes(token, hash.seed ^ kSignSeedSalt) & 1u) ? 1.0 : -1.0;
    }
    builder.add(index, value);
  }
  SparseVector out = builder.build(hash.dimension());
  out.dimension = hash.dimension() + static_cast<uint32_t>(kImageDim);
  if (rec.image_embedding) {
    const uint32_t text_dim = hash.dimension();
    for (size_t j = 0; j < kImageDim; ++j) {
      const double v = (*rec.image_embedding)[j];
      if (v != 0.0) out.entries.push_back({text_dim + static_cast<uint32_t>(j), v});
    }
  }
  return out;
}

SparseVector build_historical_features(const ListingRecord& rec, const PriorMap& priors) {
  const auto clicks_it = priors.find(CounterFamily::clicks);
  if (clicks_it == priors.end()) {
    throw DataError("historical features require the clicks/impressions prior");
  }
  SparseVector out;
  out.dimension = kHistoricalDimension;
  out.entries.push_back({kBiasIndex, 1.0});
  out.entries.push_back(
      {kSmoothedCtrIndex, smoothed_rate(rec.clicks, rec.impressions, clicks_it->second)});
  // Favorites and purchases can accrue off-impression, so cap the numerator
  // at the impression count before smoothing.
  if (const auto it = priors.find(CounterFamily::favorites); it != priors.end()) {
    out.entries.push_back({kSmoothedFavoriteIndex,
                           smoothed_rate(std::min(rec.favorites, rec.impressions),
                                         rec.impressions, it->second)});
  }
  if (const auto it = priors.find(CounterFamily::purchases); it != priors.end()) {
    out.entries.push_back({kSmoothedPurchaseIndex,
                           smoothed_rate(std::min(rec.purchases, rec.impressions),
                                         rec.impressions, it->second)});
  }
  return out;
}

int64_t ensemble_impression_feature(int64_t impressions) {
  if (impressions < 0) throw DataError("impression count must be non-negative");
  return static_cast<int64_t>(std::floor(std::log1p(static_cast<double>(impressions))));
}

}  // namespace ctr
