#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "ctr/features.hpp"
#include "ctr/hashing.hpp"
#include "ctr/rng.hpp"

using namespace ctr;

namespace {

ListingRecord make_record() {
  ListingRecord rec;
  rec.listing_id = "L42";
  rec.title = "layering necklace";
  rec.tags = {"gold", "minimal jewelry"};
  rec.price = 18.0;
  rec.impressions = 40;
  rec.clicks = 2;
  rec.date = Date::parse("2026-06-10");
  return rec;
}

std::vector<std::string> random_tokens(Rng& rng, int count) {
  std::vector<std::string> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    out.push_back("tok" + std::to_string(rng.below(1000000)));
  }
  return out;
}

}  // namespace

TEST_CASE("tokenize: empty input yields no tokens") {
  CHECK(tokenize("", {}).empty());
}

TEST_CASE("tokenize: unigrams plus adjacent bigrams, namespaced") {
  const auto tokens = tokenize("layering necklace", {});
  const std::set<std::string> expected = {"tu|layering", "tu|necklace", "tb|layering necklace"};
  CHECK(std::set<std::string>(tokens.begin(), tokens.end()) == expected);
}

TEST_CASE("tokenize: n-gram count matches hand enumeration") {
  // 3 title unigrams + 2 title bigrams + 1 tag unigram.
  const std::vector<std::string> tags = {"x"};
  const auto tokens = tokenize("a b c", tags);
  CHECK(tokens.size() == 6);
}

TEST_CASE("tokenize: title and tag words are distinct tokens; bigrams never span fields") {
  const std::vector<std::string> tags = {"x"};
  const auto tokens = tokenize("x", tags);
  CHECK(tokens.size() == 2);
  CHECK(tokens[0] != tokens[1]);

  // Two one-word tags produce no bigram.
  const std::vector<std::string> two_tags = {"a", "b"};
  for (const auto& t : tokenize("", two_tags)) {
    CHECK(t.substr(0, 3) == "gu|");
  }
}

TEST_CASE("tokenize: lowercases and splits on punctuation") {
  const auto tokens = tokenize("Hand-Made, Gift!", {});
  CHECK(std::find(tokens.begin(), tokens.end(), "tu|hand") != tokens.end());
  CHECK(std::find(tokens.begin(), tokens.end(), "tu|made") != tokens.end());
  CHECK(std::find(tokens.begin(), tokens.end(), "tu|gift") != tokens.end());
}

TEST_CASE("hash_text: empty input, determinism, dimension") {
  HashConfig cfg;
  const auto empty = hash_text({}, cfg);
  CHECK(empty.entries.empty());
  CHECK(empty.dimension == cfg.dimension());
  validate(empty);

  const auto tokens = tokenize("layering necklace", {});
  CHECK(hash_text(tokens, cfg) == hash_text(tokens, cfg));
}

TEST_CASE("hash_text: repeated token doubles its single entry") {
  HashConfig cfg;
  const std::vector<std::string> once = {"tu|gold"};
  const std::vector<std::string> twice = {"tu|gold", "tu|gold"};
  const auto v1 = hash_text(once, cfg);
  const auto v2 = hash_text(twice, cfg);
  REQUIRE(v1.entries.size() == 1);
  REQUIRE(v2.entries.size() == 1);
  CHECK(v2.entries[0].index == v1.entries[0].index);
  CHECK(v2.entries[0].value == 2.0 * v1.entries[0].value);
  CHECK(std::fabs(v2.entries[0].value) == 2.0);
}

TEST_CASE("hash_text: without sign hash all contributions are +1") {
  HashConfig cfg;
  cfg.use_sign_hash = false;
  Rng rng(7);
  const auto tokens = random_tokens(rng, 50);
  double total = 0.0;
  for (const auto& e : hash_text(tokens, cfg).entries) {
    CHECK(e.value >= 1.0);
    total += e.value;
  }
  CHECK(total == 50.0);
}

TEST_CASE("hash_text: linearity over concatenation") {
  HashConfig cfg;
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const auto a = random_tokens(rng, 1 + rng.below(20));
    const auto b = random_tokens(rng, 1 + rng.below(20));
    std::vector<std::string> ab = a;
    ab.insert(ab.end(), b.begin(), b.end());

    SparseVectorBuilder builder;
    for (const auto& e : hash_text(a, cfg).entries) builder.add(e.index, e.value);
    for (const auto& e : hash_text(b, cfg).entries) builder.add(e.index, e.value);
    const auto sum = builder.build(cfg.dimension());
    const auto joint = hash_text(ab, cfg);
    validate(joint);
    CHECK(joint == sum);
  }
}

TEST_CASE("hash_text: sign hash keeps disjoint-set inner products unbiased") {
  HashConfig cfg;
  cfg.dimension_bits = 10;  // force collisions so the sign hash has work to do
  Rng rng(13);
  const int trials = 10000;
  double sum = 0.0, sum_sq = 0.0;
  for (int t = 0; t < trials; ++t) {
    const auto a = hash_text(random_tokens(rng, 12), cfg);
    const auto b = hash_text(random_tokens(rng, 12), cfg);
    double dot = 0.0;
    size_t i = 0, j = 0;
    while (i < a.entries.size() && j < b.entries.size()) {
      if (a.entries[i].index < b.entries[j].index) {
        ++i;
      } else if (a.entries[i].index > b.entries[j].index) {
        ++j;
      } else {
        dot += a.entries[i].value * b.entries[j].value;
        ++i;
        ++j;
      }
    }
    sum += dot;
    sum_sq += dot * dot;
  }
  const double mean = sum / trials;
  const double var = sum_sq / trials - mean * mean;
  const double stderr_mean = std::sqrt(var / trials);
  CHECK(std::fabs(mean) <= 3.0 * std::max(stderr_mean, 1e-12));
}

TEST_CASE("content features: image handling") {
  HashConfig hash;
  ContentConfig content;
  ListingRecord rec = make_record();

  SUBCASE("no image leaves the image range empty") {
    const auto mm = build_content_features(rec, hash, content);
    CHECK(!mm.has_image);
    for (const auto& e : mm.combined.entries) CHECK(e.index < hash.dimension());
    CHECK(mm.combined.dimension == hash.dimension() + kImageDim);
    validate(mm.combined);
  }

  SUBCASE("all-zero embedding contributes no entries") {
    rec.image_embedding = std::make_shared<std::vector<float>>(kImageDim, 0.0f);
    const auto mm = build_content_features(rec, hash, content);
    CHECK(mm.has_image);
    for (const auto& e : mm.combined.entries) CHECK(e.index < hash.dimension());
  }

  SUBCASE("embedding values land at offset indices") {
    auto emb = std::make_shared<std::vector<float>>(kImageDim, 0.0f);
    (*emb)[0] = 0.5f;
    (*emb)[kImageDim - 1] = -0.25f;
    rec.image_embedding = emb;
    const auto mm = build_content_features(rec, hash, content);
    validate(mm.combined);
    bool saw_first = false, saw_last = false;
    for (const auto& e : mm.combined.entries) {
      if (e.index == hash.dimension()) {
        saw_first = true;
        CHECK(e.value == 0.5);
      }
      if (e.index == hash.dimension() + kImageDim - 1) {
        saw_last = true;
        CHECK(e.value == -0.25);
      }
    }
    CHECK(saw_first);
    CHECK(saw_last);
  }

  SUBCASE("wrong-length embedding is rejected") {
    rec.image_embedding = std::make_shared<std::vector<float>>(16, 0.1f);
    CHECK_THROWS_AS(build_content_features(rec, hash, content), DataError);
  }

  SUBCASE("non-finite embedding is rejected") {
    auto emb = std::make_shared<std::vector<float>>(kImageDim, 0.0f);
    (*emb)[7] = std::numeric_limits<float>::quiet_NaN();
    rec.image_embedding = emb;
    CHECK_THROWS_AS(build_content_features(rec, hash, content), DataError);
  }
}

TEST_CASE("content features: deterministic and equal across builder paths") {
  HashConfig hash;
  ContentConfig content;
  ListingRecord rec = make_record();
  auto emb = std::make_shared<std::vector<float>>(kImageDim, 0.0f);
  (*emb)[3] = 1.5f;
  rec.image_embedding = emb;

  const auto a = build_content_features(rec, hash, content).combined;
  const auto b = build_content_features(rec, hash, content).combined;
  CHECK(a == b);

  SparseVectorBuilder builder;
  const auto c = build_content_vector(rec, hash, content, builder);
  CHECK(a == c);
}

TEST_CASE("content features: optional channels") {
  HashConfig hash;
  ListingRecord rec = make_record();
  ContentConfig all_off;
  all_off.include_listing_id = false;
  all_off.include_price = false;
  ContentConfig all_on;
  all_on.include_query = true;

  const auto lean = build_content_features(rec, hash, all_off).text;
  const auto full = build_content_features(rec, hash, all_on).text;
  CHECK(full.entries.size() > lean.entries.size());
}

TEST_CASE("historical features: smoothed rates at reserved indices") {
  PriorMap priors;
  priors.emplace(CounterFamily::clicks,
                 SmoothingPrior{2.0, 98.0, 0.3, CounterFamily::clicks});

  ListingRecord rec = make_record();

  SUBCASE("zero counters reduce to the prior mean") {
    rec.impressions = 0;
    rec.clicks = 0;
    const auto v = build_historical_features(rec, priors);
    validate(v);
    REQUIRE(v.entries.size() == 2);
    CHECK(v.entries[0].index == kBiasIndex);
    CHECK(v.entries[0].value == 1.0);
    CHECK(v.entries[1].index == kSmoothedCtrIndex);
    CHECK(v.entries[1].value == doctest::Approx(0.02).epsilon(1e-12));
  }

  SUBCASE("direct substitution") {
    PriorMap p2;
    p2.emplace(CounterFamily::clicks, SmoothingPrior{2.0, 38.0, 0.3, CounterFamily::clicks});
    rec.impressions = 90;
    rec.clicks = 10;
    const auto v = build_historical_features(rec, p2);
    CHECK(v.entries[1].value == doctest::Approx(12.0 / 130.0).epsilon(1e-12));
  }

  SUBCASE("favorite and purchase rates appear only with their priors") {
    priors.emplace(CounterFamily::favorites,
                   SmoothingPrior{1.0, 50.0, 0.3, CounterFamily::favorites});
    priors.emplace(CounterFamily::purchases,
                   SmoothingPrior{0.5, 50.0, 0.3, CounterFamily::purchases});
    rec.favorites = 3;
    rec.purchases = 1;
    const auto v = build_historical_features(rec, priors);
    REQUIRE(v.entries.size() == 4);
    CHECK(v.entries[2].index == kSmoothedFavoriteIndex);
    CHECK(v.entries[2].value == doctest::Approx((3.0 + 1.0) / (40.0 + 51.0)).epsilon(1e-12));
    CHECK(v.entries[3].index == kSmoothedPurchaseIndex);
    CHECK(v.dimension == kHistoricalDimension);
  }

  SUBCASE("missing clicks prior is rejected") {
    CHECK_THROWS_AS(build_historical_features(rec, PriorMap{}), DataError);
  }
}

TEST_CASE("ensemble impression feature: floor of ln(1 + count)") {
  CHECK(ensemble_impression_feature(0) == 0);
  // Hand checks: ln(31) ~ 3.434, ln(1001) ~ 6.909.
  CHECK(ensemble_impression_feature(30) == 3);
  CHECK(ensemble_impression_feature(1000) == 6);
  for (int64_t v : {1, 2, 7, 29, 31, 999, 12345}) {
    CHECK(ensemble_impression_feature(v) ==
          static_cast<int64_t>(std::floor(std::log1p(static_cast<double>(v)))));
  }
  CHECK_THROWS_AS(ensemble_impression_feature(-1), DataError);
}

TEST_CASE("index spaces: reserved layout stays clear of content indices") {
  CHECK(kBiasIndex < kReservedIndices);
  CHECK(kSmoothedCtrIndex < kReservedIndices);
  CHECK(kSmoothedFavoriteIndex < kReservedIndices);
  CHECK(kSmoothedPurchaseIndex < kReservedIndices);
  CHECK(kHistoricalLogitIndex < kReservedIndices);
  CHECK(kContentLogitIndex < kReservedIndices);
  CHECK(kLogImpressionsIndex < kReservedIndices);
  CHECK(kHistoricalDimension == kReservedIndices);
  CHECK(kEnsembleDimension == kReservedIndices);

  HashConfig hash;
  CHECK(hash.dimension() == (1u << 18));
  CHECK_THROWS_AS([] { HashConfig h; h.dimension_bits = 7; h.validate(); }(), ConfigError);
  CHECK_THROWS_AS([] { HashConfig h; h.dimension_bits = 29; h.validate(); }(), ConfigError);
}

TEST_CASE("sparse vector builder: merges duplicates, drops zeros, validates range") {
  SparseVectorBuilder builder;
  builder.add(5, 1.0);
  builder.add(2, -1.0);
  builder.add(5, -1.0);
  builder.add(3, 0.5);
  const auto v = builder.build(8);
  validate(v);
  REQUIRE(v.entries.size() == 2);
  CHECK(v.entries[0].index == 2);
  CHECK(v.entries[1].index == 3);

  builder.add(9, 1.0);
  CHECK_THROWS_AS(builder.build(8), DataError);
}
