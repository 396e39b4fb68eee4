#include <doctest.h>

#include <unistd.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "ctr/manifest.hpp"
#include "ctr/metrics.hpp"
#include "ctr/pipeline.hpp"
#include "ctr/rng.hpp"
#include "ctr/synthetic.hpp"

using namespace ctr;

namespace {

WindowConfig window_for(const std::vector<ListingRecord>& records, uint64_t seed = 1,
                        double rate = 0.25) {
  WindowConfig w;
  Date max_date = records.front().date;
  for (const auto& r : records) max_date = std::max(max_date, r.date);
  w.anchor = max_date + 1;
  w.negative_sample_rate = rate;
  w.sample_seed = seed;
  return w;
}

SyntheticSpec small_spec(uint64_t seed) {
  SyntheticSpec spec;
  spec.n_listings = 2500;
  spec.days = 10;
  spec.vocab_size = 300;
  spec.warm_threshold = 12;
  spec.seed = seed;
  return spec;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() /
           ("ctr_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter()++));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
  static int& counter() {
    static int c = 0;
    return c;
  }
};

}  // namespace

TEST_CASE("subsample_negatives: rate 1 keeps everything at weight 1") {
  std::vector<ListingRecord> records(100);
  for (size_t i = 0; i < records.size(); ++i) {
    records[i].listing_id = "L" + std::to_string(i);
    records[i].label = i % 7 == 0 ? 1 : 0;
  }
  WindowConfig cfg;
  cfg.negative_sample_rate = 1.0;
  const auto kept = subsample_negatives(records, cfg);
  REQUIRE(kept.size() == records.size());
  for (const auto& k : kept) CHECK(k.weight == 1.0);
}

TEST_CASE("subsample_negatives: binomial count, weights, determinism") {
  const size_t n = 100000;
  std::vector<ListingRecord> records(n);
  for (size_t i = 0; i < n; ++i) {
    records[i].listing_id = "L" + std::to_string(i);
    records[i].label = 0;
  }
  WindowConfig cfg;
  cfg.negative_sample_rate = 0.25;
  cfg.sample_seed = 99;
  const auto kept = subsample_negatives(records, cfg);

  // Binomial oracle: 4 sigma around n * r.
  const double sigma = std::sqrt(n * 0.25 * 0.75);
  CHECK(std::fabs(static_cast<double>(kept.size()) - 25000.0) <= 4.0 * sigma);
  for (const auto& k : kept) CHECK(k.weight == 4.0);

  const auto again = subsample_negatives(records, cfg);
  REQUIRE(again.size() == kept.size());
  for (size_t i = 0; i < kept.size(); ++i) CHECK(again[i].index == kept[i].index);

  WindowConfig other = cfg;
  other.sample_seed = 100;
  CHECK(subsample_negatives(records, other).size() != kept.size());
}

TEST_CASE("subsample_negatives: weighted positive rate stays unbiased") {
  const size_t n = 80000;
  Rng rng(7);
  std::vector<ListingRecord> records(n);
  size_t positives = 0;
  for (size_t i = 0; i < n; ++i) {
    records[i].listing_id = "L" + std::to_string(i);
    records[i].label = rng.uniform01() < 0.02 ? 1 : 0;
    positives += records[i].label;
  }
  const double raw_rate = static_cast<double>(positives) / n;

  WindowConfig cfg;
  cfg.negative_sample_rate = 0.25;
  cfg.sample_seed = 3;
  const auto kept = subsample_negatives(records, cfg);
  double pos_w = 0.0, total_w = 0.0;
  for (const auto& k : kept) {
    total_w += k.weight;
    pos_w += records[k.index].label ? k.weight : 0.0;
  }
  const double weighted_rate = pos_w / total_w;
  // The weighted denominator is a binomial sum; 3 sigma on the implied rate.
  const double sigma = raw_rate * std::sqrt(0.75 / (0.25 * n));
  CHECK(std::fabs(weighted_rate - raw_rate) <= 3.0 * std::max(sigma, 1e-6));
}

TEST_CASE("calibrate: affine map to reference moments") {
  SUBCASE("already at the reference is the identity") {
    const std::vector<double> scores = {0.1, 0.2, 0.3};
    // Reference moments computed exactly the way calibrate computes its own,
    // so the map must be the bitwise identity.
    double mean = 0.0;
    for (const double s : scores) mean += s;
    mean /= static_cast<double>(scores.size());
    double var = 0.0;
    for (const double s : scores) var += (s - mean) * (s - mean);
    const double stdev = std::sqrt(var / static_cast<double>(scores.size()));
    const auto [out, params] = calibrate(scores, mean, stdev);
    CHECK(params.scale == 1.0);
    CHECK(params.shift == 0.0);
    CHECK(out == scores);
    CHECK(params.clamped == 0);
  }

  SUBCASE("hand-computed map") {
    const std::vector<double> scores = {0.1, 0.3};
    const auto [out, params] = calibrate(scores, 0.4, 0.2);
    CHECK(params.scale == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(params.shift == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(out[0] == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(out[1] == doctest::Approx(0.6).epsilon(1e-12));
  }

  SUBCASE("moment identity to 1e-9 relative error") {
    Rng rng(11);
    std::vector<double> scores(5000);
    for (auto& s : scores) s = 0.2 + 0.1 * rng.uniform01();
    const double ref_mean = 0.3, ref_std = 0.02;  // far from the clamp
    const auto [out, params] = calibrate(scores, ref_mean, ref_std);
    CHECK(params.clamped == 0);
    double mean = 0.0;
    for (const double s : out) mean += s;
    mean /= out.size();
    double var = 0.0;
    for (const double s : out) var += (s - mean) * (s - mean);
    const double stdev = std::sqrt(var / out.size());
    CHECK(std::fabs(mean - ref_mean) <= 1e-9 * ref_mean);
    CHECK(std::fabs(stdev - ref_std) <= 1e-9 * ref_std);
  }

  SUBCASE("ranking safety: identical AUC before and after") {
    Rng rng(13);
    std::vector<double> scores(400);
    std::vector<ScoredExample> raw, mapped;
    for (auto& s : scores) s = 0.05 + 0.9 * rng.uniform01();
    const auto [out, params] = calibrate(scores, 0.3, 0.05);
    for (size_t i = 0; i < scores.size(); ++i) {
      const int label = rng.uniform01() < scores[i] ? 1 : 0;
      raw.push_back({scores[i], label});
      mapped.push_back({out[i], label});
    }
    CHECK(*auc(mapped) == *auc(raw));
  }

  SUBCASE("clamping is counted") {
    const std::vector<double> scores = {0.1, 0.9};
    const auto [out, params] = calibrate(scores, 0.5, 10.0);
    CHECK(params.clamped == 2);
    CHECK(out[0] == 1e-6);
    CHECK(out[1] == 1.0 - 1e-6);
  }

  SUBCASE("zero variance and bad references are rejected") {
    const std::vector<double> flat = {0.2, 0.2, 0.2};
    CHECK_THROWS_AS(calibrate(flat, 0.3, 0.1), DataError);
    const std::vector<double> ok = {0.2, 0.4};
    CHECK_THROWS_AS(calibrate(ok, 0.3, 0.0), DataError);
    CHECK_THROWS_AS(calibrate({}, 0.3, 0.1), DataError);
  }
}

TEST_CASE("prepare_window: counters recomputed from events, leak-free") {
  // Three listings over four days plus a validation day; counters carried in
  // the log are garbage on purpose: the pipeline must rebuild them.
  std::vector<ListingRecord> logs;
  const Date d0 = Date::parse("2026-06-01");
  const auto add = [&](const std::string& id, int day, int label) {
    ListingRecord rec;
    rec.listing_id = id;
    rec.title = "t";
    rec.price = 1.0;
    rec.impressions = 777;  // wrong on purpose
    rec.clicks = 5;
    rec.label = label;
    rec.date = d0 + day;
    logs.push_back(rec);
  };
  add("A", 0, 1);
  add("A", 0, 0);
  add("A", 1, 0);
  add("A", 3, 1);
  add("B", 2, 0);
  add("B", 3, 0);
  add("C", 4, 1);  // validation day only
  add("A", 4, 0);  // validation day
  add("A", 10, 0);  // outside any window

  WindowConfig window;
  window.anchor = d0 + 5;  // train [d0-27 .. d0+3], validate d0+4
  window.negative_sample_rate = 1.0;
  const PreparedData data = prepare_window(logs, window, SmoothingConfig{});

  CHECK(data.window_rows == 6);
  CHECK(data.out_of_range == 1);
  REQUIRE(data.train.size() == 6);
  REQUIRE(data.validation.size() == 2);

  // Training rows carry strictly-before-date counters.
  CHECK(data.train[0].rec.impressions == 0);  // A day 0
  CHECK(data.train[0].rec.clicks == 0);
  CHECK(data.train[2].rec.impressions == 2);  // A day 1 sees day 0
  CHECK(data.train[2].rec.clicks == 1);
  CHECK(data.train[3].rec.impressions == 3);  // A day 3 sees days 0-1
  CHECK(data.train[3].rec.clicks == 1);
  CHECK(data.train[4].rec.impressions == 0);  // B day 2
  CHECK(data.train[5].rec.impressions == 1);  // B day 3 sees day 2

  // Window totals drive the cold/warm assignment and validation counters.
  CHECK(data.train[0].window_impressions == 4);
  CHECK(data.validation[0].rec.listing_id == "C");
  CHECK(data.validation[0].rec.impressions == 0);  // unseen in the window
  CHECK(data.validation[1].rec.listing_id == "A");
  CHECK(data.validation[1].rec.impressions == 4);
  CHECK(data.validation[1].rec.clicks == 2);

  CHECK(data.priors.count(CounterFamily::clicks) == 1);
}

TEST_CASE("generate_synthetic_logs: determinism and feasibility") {
  TempDir dir;
  const auto spec = small_spec(5);

  SUBCASE("fixed seed gives byte-identical files") {
    const auto s1 = generate_synthetic_logs(spec, dir.file("a.jsonl"), dir.file("a.img"));
    const auto s2 = generate_synthetic_logs(spec, dir.file("b.jsonl"), dir.file("b.img"));
    CHECK(s1.records == s2.records);
    CHECK(file_digest(dir.file("a.jsonl")) == file_digest(dir.file("b.jsonl")));
    CHECK(file_digest(dir.file("a.img")) == file_digest(dir.file("b.img")));

    SyntheticSpec other = spec;
    other.seed = 6;
    generate_synthetic_logs(other, dir.file("c.jsonl"), dir.file("c.img"));
    CHECK(file_digest(dir.file("a.jsonl")) != file_digest(dir.file("c.jsonl")));
  }

  SUBCASE("infeasible warm fraction is rejected and leaves no file behind") {
    SyntheticSpec bad = spec;
    bad.warm_fraction = 0.99;
    bad.impression_exponent = 6.0;
    CHECK_THROWS_AS(
        generate_synthetic_logs(bad, dir.file("bad.jsonl"), dir.file("bad.img")), ConfigError);
    CHECK(!std::filesystem::exists(dir.file("bad.jsonl")));
    CHECK(!std::filesystem::exists(dir.file("bad.jsonl") + ".tmp"));
  }

  SUBCASE("generated records parse and validate") {
    generate_synthetic_logs(spec, dir.file("d.jsonl"), dir.file("d.img"));
    const ImageStore images = ImageStore::load(dir.file("d.img"));
    const auto records = read_log_file(dir.file("d.jsonl"), &images);
    CHECK(records.size() > 10000);
    for (const auto& rec : records) validate(rec);
    size_t with_image = 0;
    for (const auto& rec : records) with_image += rec.image_embedding != nullptr;
    CHECK(with_image > 0);
  }
}

TEST_CASE("generate_synthetic_logs: label mean matches the latent prior") {
  const auto logs = generate_synthetic_logs(small_spec(21));
  // Cluster-robust standard error: labels within a listing share theta.
  std::unordered_map<std::string, std::pair<double, double>> by_listing;  // sum, count
  double total = 0.0;
  for (const auto& rec : logs.records) {
    auto& [sum, count] = by_listing[rec.listing_id];
    sum += rec.label;
    count += 1.0;
    total += 1.0;
  }
  const double mean = static_cast<double>(logs.stats.positives) / logs.stats.records;
  double cluster_var = 0.0;
  for (const auto& [id, sc] : by_listing) {
    const double resid = sc.first - mean * sc.second;
    cluster_var += resid * resid;
  }
  const double se = std::sqrt(cluster_var) / total;
  CHECK(std::fabs(mean - 0.02) <= 3.0 * se);
}

TEST_CASE("generate_synthetic_logs: no text signal means no content edge") {
  // Null check over 10 seeds: with both signal channels off and the id/price
  // channels disabled, the content model cannot beat a coin flip.
  double auc_sum = 0.0;
  for (uint64_t seed = 1; seed <= 10; ++seed) {
    SyntheticSpec spec = small_spec(seed);
    spec.n_listings = 1500;
    spec.text_signal_strength = 0.0;
    spec.image_signal_strength = 0.0;
    spec.image_coverage = 0.0;
    const auto logs = generate_synthetic_logs(spec);

    ExperimentConfig cfg;
    cfg.content.include_listing_id = false;
    cfg.content.include_price = false;
    cfg.partition.k = spec.warm_threshold;
    const WindowConfig window = window_for(logs.records, seed);
    const PreparedData data = prepare_window(logs.records, window, cfg.smoothing);
    const VariantModel model =
        train_variant({"content", VariantKind::content, {}}, data, cfg);

    std::vector<ScoredExample> scored;
    for (const auto& row : data.validation) {
      scored.push_back({score_record(model, row.rec), row.rec.label, Slice::mixed, 1.0});
    }
    const auto a = auc(scored);
    REQUIRE(a.has_value());
    CHECK(*a > 0.42);
    CHECK(*a < 0.58);
    auc_sum += *a;
  }
  const double mean_auc = auc_sum / 10.0;
  CHECK(std::fabs(mean_auc - 0.5) <= 0.02);
}

TEST_CASE("run_experiment: deterministic across runs and thread counts") {
  const auto logs = generate_synthetic_logs(small_spec(31));
  const std::vector<VariantSpec> variants = {{"baseline", VariantKind::baseline, {}},
                                             {"historical", VariantKind::historical, {}},
                                             {"ensemble", VariantKind::ensemble, {}}};
  ExperimentConfig cfg;
  cfg.partition.k = 12;

  const WindowConfig window = window_for(logs.records, 31);
  cfg.threads = 1;
  const ExperimentResult r1 = run_experiment(logs.records, variants, "baseline", window, cfg);
  cfg.threads = 4;
  const ExperimentResult r2 = run_experiment(logs.records, variants, "baseline", window, cfg);

  REQUIRE(r1.variants.size() == r2.variants.size());
  for (size_t i = 0; i < r1.variants.size(); ++i) {
    const auto& a = r1.variants[i];
    const auto& b = r2.variants[i];
    CHECK(a.name == b.name);
    for (const auto& [slice, report] : a.reports) {
      const auto& other = b.reports.at(slice);
      CHECK(report.auc == other.auc);
      CHECK(report.avg_log_loss == other.avg_log_loss);
      CHECK(report.normalized_cross_entropy == other.normalized_cross_entropy);
    }
  }
  CHECK(render_delta_table(r1) == render_delta_table(r2));

  SUBCASE("baseline against itself reports zero deltas") {
    const auto& baseline = r1.variants[0];
    for (const auto& [slice, d] : baseline.deltas) {
      CHECK(*d.auc_pp == 0.0);
      CHECK(*d.log_loss_x1e3 == 0.0);
      CHECK(*d.ne_x1e3 == 0.0);
    }
  }
}

TEST_CASE("temporal hygiene: validation labels cannot reach training") {
  const auto logs = generate_synthetic_logs(small_spec(37));
  const WindowConfig window = window_for(logs.records, 37);

  std::vector<ListingRecord> corrupted = logs.records;
  for (auto& rec : corrupted) {
    if (rec.date == window.validation_day()) rec.label = 1 - rec.label;
  }

  ExperimentConfig cfg;
  cfg.partition.k = 12;
  const PreparedData clean = prepare_window(logs.records, window, cfg.smoothing);
  const PreparedData dirty = prepare_window(corrupted, window, cfg.smoothing);

  TempDir dir;
  for (const auto kind : {VariantKind::baseline, VariantKind::historical, VariantKind::content,
                          VariantKind::ensemble}) {
    const VariantSpec spec{to_string(kind), kind, {}};
    const VariantModel a = train_variant(spec, clean, cfg);
    const VariantModel b = train_variant(spec, dirty, cfg);
    const std::string pa = dir.file(to_string(kind) + "_clean.ctrm");
    const std::string pb = dir.file(to_string(kind) + "_dirty.ctrm");
    save_variant(a, pa);
    save_variant(b, pb);
    CHECK(read_file(pa) == read_file(pb));
  }
}

TEST_CASE("variant models: save/load round trip preserves predictions exactly") {
  const auto logs = generate_synthetic_logs(small_spec(41));
  const WindowConfig window = window_for(logs.records, 41);
  ExperimentConfig cfg;
  cfg.partition.k = 12;
  const PreparedData data = prepare_window(logs.records, window, cfg.smoothing);

  TempDir dir;
  for (const auto kind : {VariantKind::baseline, VariantKind::historical, VariantKind::content,
                          VariantKind::ensemble}) {
    const VariantModel trained = train_variant({to_string(kind), kind, {}}, data, cfg);
    const std::string path = dir.file(to_string(kind) + ".ctrm");
    save_variant(trained, path);
    const VariantModel reloaded = load_variant(path);
    CHECK(reloaded.name == trained.name);
    CHECK(reloaded.training_base_rate == trained.training_base_rate);
    for (size_t i = 0; i < data.validation.size(); i += 7) {
      CHECK(score_record(reloaded, data.validation[i].rec) ==
            score_record(trained, data.validation[i].rec));
    }
  }
}

TEST_CASE("evaluate_models: a model against itself zeroes every delta") {
  const auto logs = generate_synthetic_logs(small_spec(43));
  const WindowConfig window = window_for(logs.records, 43);
  ExperimentConfig cfg;
  cfg.partition.k = 12;
  const PreparedData data = prepare_window(logs.records, window, cfg.smoothing);
  VariantModel model = train_variant({"baseline", VariantKind::baseline, {}}, data, cfg);
  VariantModel copy = model;
  copy.name = "again";

  const std::vector<VariantModel> models = {model, copy};
  const ExperimentResult result =
      evaluate_models(logs.records, models, "baseline", window, cfg.partition, cfg.metrics, 1);
  const auto& again = result.variants[1];
  for (const auto& [slice, d] : again.deltas) {
    CHECK(*d.auc_pp == 0.0);
    CHECK(*d.log_loss_x1e3 == 0.0);
    CHECK(*d.ne_x1e3 == 0.0);
  }
  CHECK(result.slice_sizes.at(Slice::mixed) ==
        result.slice_sizes.at(Slice::cold) + result.slice_sizes.at(Slice::warm));
}

TEST_CASE("window config validation") {
  WindowConfig w;
  w.negative_sample_rate = 0.0;
  CHECK_THROWS_AS(w.validate(), ConfigError);
  w.negative_sample_rate = 1.5;
  CHECK_THROWS_AS(w.validate(), ConfigError);
}
