#include "ctr/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <vector>

#include "ctr/rng.hpp"

namespace ctr {

namespace {

constexpr double kMaxWindowImpressions = 3000.0;  // power-law truncation
constexpr double kMinScaleFloor = 0.05;
constexpr double kTotalImpressionBudget = 6e7;
constexpr int kImageClusters = 16;
constexpr int kTitleWords = 6;
constexpr int kTagCount = 3;
constexpr double kTokenKernelWidth = 0.08;

// Truncated Pareto with density proportional to m^(-exponent) on [lo, hi].
struct TruncatedPareto {
  double lo, hi, exponent;

  double icdf(double u) const {
    const double t = 1.0 - exponent;
    const double a = std::pow(lo, t);
    const double b = std::pow(hi, t);
    return std::pow(a - u * (a - b), 1.0 / t);
  }

  double tail(double x) const {  // P(m >= x)
    if (x <= lo) return 1.0;
    if (x >= hi) return 0.0;
    const double t = 1.0 - exponent;
    const double a = std::pow(lo, t);
    const double b = std::pow(hi, t);
    return (std::pow(x, t) - b) / (a - b);
  }

  double mean() const {
    // Quadrature over quantile midpoints; exact enough for budgeting.
    double sum = 0.0;
    constexpr int kBins = 4096;
    for (int i = 0; i < kBins; ++i) sum += icdf((i + 0.5) / kBins);
    return sum / kBins;
  }
};

double poisson_tail_at_least(double mean, int64_t k) {
  if (k <= 0) return 1.0;
  if (mean <= 0.0) return 0.0;
  if (mean > 250.0) return 1.0;  // tail below k=O(30) is negligible here
  double pmf = std::exp(-mean);
  double cdf = pmf;
  for (int64_t i = 1; i < k; ++i) {
    pmf *= mean / static_cast<double>(i);
    cdf += pmf;
  }
  return std::max(0.0, 1.0 - cdf);
}

double warm_fraction_for_scale(double lo, const SyntheticSpec& spec) {
  const TruncatedPareto dist{lo, kMaxWindowImpressions, spec.impression_exponent};
  double sum = 0.0;
  constexpr int kBins = 512;
  for (int i = 0; i < kBins; ++i) {
    const double m = dist.icdf((i + 0.5) / kBins);
    sum += poisson_tail_at_least(m, spec.warm_threshold);
  }
  return sum / kBins;
}

// Solves the power-law scale so the expected fraction of listings with at
// least warm_threshold window impressions matches the target. The scale must
// leave the cold region populated (lo <= k/2), otherwise the requested warm
// fraction is not reachable under the power law.
double solve_impression_scale(const SyntheticSpec& spec) {
  const double hi_bound = static_cast<double>(spec.warm_threshold) / 2.0;
  const double lo_bound = kMinScaleFloor;
  const double wf_lo = warm_fraction_for_scale(lo_bound, spec);
  const double wf_hi = warm_fraction_for_scale(hi_bound, spec);
  if (spec.warm_fraction > wf_hi) {
    char msg[256];
    std::snprintf(msg, sizeof(msg),
                  "infeasible synthetic spec: warm_fraction %.3f is unreachable under power-law "
                  "exponent %.2f (max attainable %.3f with the cold region populated)",
                  spec.warm_fraction, spec.impression_exponent, wf_hi);
    throw ConfigError(msg);
  }
  if (spec.warm_fraction < wf_lo) {
    char msg[256];
    std::snprintf(msg, sizeof(msg),
                  "infeasible synthetic spec: warm_fraction %.3f is below the minimum %.3f "
                  "attainable under power-law exponent %.2f",
                  spec.warm_fraction, wf_lo, spec.impression_exponent);
    throw ConfigError(msg);
  }
  double lo = lo_bound, hi = hi_bound;
  for (int iter = 0; iter < 80; ++iter) {
    const double mid = 0.5 * (lo + hi);
    if (warm_fraction_for_scale(mid, spec) < spec.warm_fraction) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

struct ListingProfile {
  std::string id;
  double theta;
  double quantile;
  double daily_rate;
  double favorite_rate;
  double purchase_rate;
  std::string title;
  std::vector<std::string> tags;
  std::string query;
  double price;
  std::shared_ptr<const std::vector<float>> embedding;  // null when uncovered
  int64_t cum_impressions = 0;
  int64_t cum_clicks = 0;
  int64_t cum_favorites = 0;
  int64_t cum_purchases = 0;
  int64_t train_impressions = 0;
};

std::string vocab_word(int index) { return "w" + std::to_string(index); }

int draw_word(Rng& rng, double quantile, const SyntheticSpec& spec) {
  if (rng.uniform01() < spec.text_signal_strength) {
    const double pos = quantile + kTokenKernelWidth * rng.gaussian();
    const double clamped = std::min(1.0 - 1e-9, std::max(0.0, pos));
    return static_cast<int>(clamped * spec.vocab_size);
  }
  return static_cast<int>(rng.below(static_cast<uint64_t>(spec.vocab_size)));
}

std::string draw_phrase(Rng& rng, double quantile, const SyntheticSpec& spec, int words) {
  std::string out;
  for (int i = 0; i < words; ++i) {
    if (i) out.push_back(' ');
    out += vocab_word(draw_word(rng, quantile, spec));
  }
  return out;
}

}  // namespace

void SyntheticSpec::validate() const {
  if (n_listings < 10) throw ConfigError("synthetic spec: need at least 10 listings");
  if (days < 2) throw ConfigError("synthetic spec: need at least 2 days");
  if (vocab_size < 16) throw ConfigError("synthetic spec: vocab_size must be >= 16");
  if (!(prior_alpha > 0.0) || !(prior_beta > 0.0)) {
    throw ConfigError("synthetic spec: prior parameters must be positive");
  }
  if (!(impression_exponent > 1.0)) {
    throw ConfigError("synthetic spec: impression exponent must exceed 1");
  }
  if (text_signal_strength < 0.0 || text_signal_strength > 1.0 || image_signal_strength < 0.0 ||
      image_signal_strength > 1.0) {
    throw ConfigError("synthetic spec: signal strengths must be in [0, 1]");
  }
  if (warm_fraction < 0.0 || warm_fraction >= 1.0) {
    throw ConfigError("synthetic spec: warm_fraction must be in [0, 1)");
  }
  if (warm_threshold < 1) throw ConfigError("synthetic spec: warm threshold must be >= 1");
  if (image_coverage < 0.0 || image_coverage > 1.0) {
    throw ConfigError("synthetic spec: image coverage must be in [0, 1]");
  }
  if (!(validation_scale > 0.0)) {
    throw ConfigError("synthetic spec: validation_scale must be positive");
  }
}

namespace {

SyntheticStats generate_impl(const SyntheticSpec& spec,
                             const std::function<void(const ListingRecord&)>& sink,
                             ImageStore* images) {
  spec.validate();
  const int train_days = spec.days - 1;
  const double scale = solve_impression_scale(spec);
  const TruncatedPareto dist{scale, kMaxWindowImpressions, spec.impression_exponent};
  const double expected_total = static_cast<double>(spec.n_listings) * dist.mean() *
                                (1.0 + spec.validation_scale / train_days);
  if (expected_total > kTotalImpressionBudget) {
    throw ConfigError("infeasible synthetic spec: expected impression volume exceeds budget");
  }

  Rng rng(spec.seed);

  // Image cluster centroids.
  std::vector<std::vector<float>> centroids(kImageClusters);
  for (auto& c : centroids) {
    c.resize(kImageDim);
    for (auto& v : c) v = static_cast<float>(rng.gaussian());
  }

  // Latent rates first, then their in-population quantiles.
  std::vector<double> theta(spec.n_listings);
  for (auto& t : theta) t = rng.beta(spec.prior_alpha, spec.prior_beta);
  std::vector<int> order(spec.n_listings);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&theta](int a, int b) {
    if (theta[a] != theta[b]) return theta[a] < theta[b];
    return a < b;
  });
  std::vector<double> quantile(spec.n_listings);
  for (int r = 0; r < spec.n_listings; ++r) {
    quantile[order[r]] = (r + 0.5) / static_cast<double>(spec.n_listings);
  }

  std::vector<ListingProfile> listings(spec.n_listings);
  for (int l = 0; l < spec.n_listings; ++l) {
    ListingProfile& p = listings[l];
    char id[24];
    std::snprintf(id, sizeof(id), "L%07d", l);
    p.id = id;
    p.theta = theta[l];
    p.quantile = quantile[l];
    p.daily_rate = dist.icdf(rng.uniform01()) / train_days;
    p.favorite_rate = std::min(0.9, 1.5 * p.theta);
    p.purchase_rate = std::min(0.9, 0.4 * p.theta);
    p.title = draw_phrase(rng, p.quantile, spec, kTitleWords);
    p.tags.reserve(kTagCount);
    for (int t = 0; t < kTagCount; ++t) {
      p.tags.push_back(draw_phrase(rng, p.quantile, spec, 1 + static_cast<int>(rng.below(2))));
    }
    p.query = draw_phrase(rng, p.quantile, spec, 2);
    p.price = std::round(std::exp(2.5 + 0.8 * rng.gaussian()) * 100.0) / 100.0;

    if (rng.uniform01() < spec.image_coverage) {
      // Cluster by theta quantile at full strength, random otherwise; residual
      // noise shrinks as the signal strength rises.
      const bool informative = rng.uniform01() < spec.image_signal_strength;
      const int cluster = informative
                              ? std::min(kImageClusters - 1,
                                         static_cast<int>(p.quantile * kImageClusters))
                              : static_cast<int>(rng.below(kImageClusters));
      auto emb = std::make_shared<std::vector<float>>(kImageDim);
      const double noise = 1.0 - spec.image_signal_strength;
      double norm_sq = 0.0;
      for (size_t j = 0; j < kImageDim; ++j) {
        const double v = centroids[cluster][j] + noise * rng.gaussian();
        (*emb)[j] = static_cast<float>(v);
        norm_sq += v * v;
      }
      const float inv_norm = norm_sq > 0.0 ? static_cast<float>(1.0 / std::sqrt(norm_sq)) : 1.0f;
      for (auto& v : *emb) v *= inv_norm;
      p.embedding = std::move(emb);
      if (images) images->insert(p.id, std::vector<float>(*p.embedding));
    }
  }

  // Day 0 is the window start; the last generated day is the validation day.
  const Date first_day = Date::parse("2026-06-01");
  SyntheticStats stats;
  stats.listings = spec.n_listings;

  for (int day = 0; day < spec.days; ++day) {
    const Date date = first_day + day;
    const bool validation_day = day == spec.days - 1;
    for (int l = 0; l < spec.n_listings; ++l) {
      ListingProfile& p = listings[l];
      const int64_t n_imp =
          rng.poisson(p.daily_rate * (validation_day ? spec.validation_scale : 1.0));
      if (n_imp == 0) continue;
      int64_t day_clicks = 0;
      ListingRecord rec;
      rec.listing_id = p.id;
      rec.query = p.query;
      rec.title = p.title;
      rec.tags = p.tags;
      rec.price = p.price;
      rec.impressions = p.cum_impressions;
      rec.clicks = p.cum_clicks;
      rec.favorites = p.cum_favorites;
      rec.purchases = p.cum_purchases;
      rec.date = date;
      if (p.embedding) {
        rec.image_ref = p.id;
        rec.image_embedding = p.embedding;
      }
      for (int64_t i = 0; i < n_imp; ++i) {
        rec.label = rng.uniform01() < p.theta ? 1 : 0;
        day_clicks += rec.label;
        stats.positives += rec.label;
        ++stats.records;
        sink(rec);
      }
      const int64_t day_favs = rng.binomial(n_imp, p.favorite_rate);
      const int64_t day_purs = rng.binomial(n_imp, p.purchase_rate);
      p.cum_impressions += n_imp;
      p.cum_clicks += day_clicks;
      p.cum_favorites += day_favs;
      p.cum_purchases += day_purs;
      if (day < train_days) p.train_impressions += n_imp;
    }
  }

  int64_t warm = 0;
  for (const auto& p : listings) {
    if (p.train_impressions >= spec.warm_threshold) ++warm;
  }
  stats.realized_warm_fraction = static_cast<double>(warm) / static_cast<double>(spec.n_listings);
  stats.mean_label =
      stats.records > 0 ? static_cast<double>(stats.positives) / stats.records : 0.0;
  return stats;
}

}  // namespace

SyntheticLogs generate_synthetic_logs(const SyntheticSpec& spec) {
  SyntheticLogs out;
  out.stats = generate_impl(
      spec, [&out](const ListingRecord& rec) { out.records.push_back(rec); }, &out.images);
  return out;
}

SyntheticStats generate_synthetic_logs(const SyntheticSpec& spec, const std::string& log_path,
                                       const std::string& image_path) {
  namespace fs = std::filesystem;
  const std::string log_tmp = log_path + ".tmp";
  const std::string image_tmp = image_path + ".tmp";
  SyntheticStats stats;
  try {
    std::ofstream out(log_tmp);
    if (!out) throw DataError("cannot write log file: " + log_tmp);
    ImageStore images;
    stats = generate_impl(
        spec,
        [&out](const ListingRecord& rec) {
          ListingRecord stripped = rec;
          stripped.image_embedding = nullptr;  // embeddings live in the sidecar
          write_log_line(out, stripped);
        },
        &images);
    if (!out) throw DataError("failed writing log file: " + log_tmp);
    out.close();
    images.save(image_tmp);
  } catch (...) {
    std::error_code ec;
    fs::remove(log_tmp, ec);
    fs::remove(image_tmp, ec);
    throw;
  }
  fs::rename(log_tmp, log_path);
  fs::rename(image_tmp, image_path);
  return stats;
}

}  // namespace ctr
