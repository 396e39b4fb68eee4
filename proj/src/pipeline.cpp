#include "ctr/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <future>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "ctr/hashing.hpp"
#include "ctr/parallel.hpp"

namespace ctr {

using nlohmann::json;

void WindowConfig::validate() const {
  if (!(negative_sample_rate > 0.0) || negative_sample_rate > 1.0) {
    throw ConfigError("negative sample rate must be in (0, 1]");
  }
}

std::pair<std::vector<double>, CalibrationParams> calibrate(std::span<const double> scores,
                                                            double reference_mean,
                                                            double reference_std) {
  if (scores.empty()) throw DataError("calibrate: no scores");
  if (!(reference_std > 0.0)) throw DataError("calibrate: reference std must be positive");
  double mean = 0.0;
  for (const double s : scores) mean += s;
  mean /= static_cast<double>(scores.size());
  double var = 0.0;
  for (const double s : scores) var += (s - mean) * (s - mean);
  var /= static_cast<double>(scores.size());
  const double std_dev = std::sqrt(var);
  if (std_dev <= 1e-12 * std::max(1.0, std::fabs(mean))) {
    throw DataError("calibrate: variant scores have zero variance, affine map is undefined");
  }

  CalibrationParams params;
  params.reference_mean = reference_mean;
  params.reference_std = reference_std;
  params.scale = reference_std / std_dev;
  params.shift = reference_mean - params.scale * mean;

  constexpr double kClampLo = 1e-6;
  constexpr double kClampHi = 1.0 - 1e-6;
  std::vector<double> out;
  out.reserve(scores.size());
  for (const double s : scores) {
    const double mapped = params.scale * s + params.shift;
    const double clamped = std::min(kClampHi, std::max(kClampLo, mapped));
    if (clamped != mapped) ++params.clamped;
    out.push_back(clamped);
  }
  return {std::move(out), params};
}

std::vector<SubsampledRow> subsample_negatives(std::span<const ListingRecord> records,
                                               const WindowConfig& cfg) {
  cfg.validate();
  std::vector<SubsampledRow> kept;
  kept.reserve(records.size());
  const double rate = cfg.negative_sample_rate;
  for (size_t i = 0; i < records.size(); ++i) {
    if (records[i].label == 1) {
      kept.push_back({i, 1.0});
      continue;
    }
    if (rate >= 1.0) {
      kept.push_back({i, 1.0});
      continue;
    }
    // Keyed by (seed, row ordinal): the kept set is a pure function of the
    // input stream and the seed.
    const double u =
        static_cast<double>(mix64(mix64(cfg.sample_seed) ^ static_cast<uint64_t>(i)) >> 11) *
        0x1.0p-53;
    if (u < rate) kept.push_back({i, 1.0 / rate});
  }
  return kept;
}

namespace {

// Per-listing, per-day impression/click counts recomputed from the window's
// events. Favorites/purchases have no event stream in the log, so their
// carried counter snapshots are used as-is.
struct ListingHistory {
  std::vector<int32_t> day_offsets;  // sorted, relative to window begin
  std::vector<int64_t> impressions;  // per day
  std::vector<int64_t> clicks;       // per day
  int64_t window_impressions = 0;
  int64_t window_clicks = 0;

  // Totals strictly before the given offset.
  std::pair<int64_t, int64_t> before(int32_t day_offset) const {
    int64_t imp = 0, clk = 0;
    for (size_t i = 0; i < day_offsets.size() && day_offsets[i] < day_offset; ++i) {
      imp += impressions[i];
      clk += clicks[i];
    }
    return {imp, clk};
  }
};

struct WindowIndex {
  std::unordered_map<std::string, ListingHistory> listings;
  std::vector<size_t> train_rows;       // indices into the input span
  std::vector<size_t> validation_rows;  // indices into the input span
  size_t out_of_range = 0;
};

WindowIndex build_window_index(std::span<const ListingRecord> logs, const WindowConfig& window) {
  WindowIndex index;
  const Date begin = window.train_begin();
  const Date end = window.train_end();
  const Date validation = window.validation_day();
  for (size_t i = 0; i < logs.size(); ++i) {
    const Date d = logs[i].date;
    if (d >= begin && d <= end) {
      index.train_rows.push_back(i);
      auto& hist = index.listings[logs[i].listing_id];
      const int32_t offset = d - begin;
      if (hist.day_offsets.empty() || hist.day_offsets.back() != offset) {
        if (!hist.day_offsets.empty() && hist.day_offsets.back() > offset) {
          // Tolerate unsorted logs: merge into the right day below.
          size_t j = 0;
          while (j < hist.day_offsets.size() && hist.day_offsets[j] < offset) ++j;
          if (j == hist.day_offsets.size() || hist.day_offsets[j] != offset) {
            hist.day_offsets.insert(hist.day_offsets.begin() + j, offset);
            hist.impressions.insert(hist.impressions.begin() + j, 0);
            hist.clicks.insert(hist.clicks.begin() + j, 0);
          }
          hist.impressions[j] += 1;
          hist.clicks[j] += logs[i].label;
          hist.window_impressions += 1;
          hist.window_clicks += logs[i].label;
          continue;
        }
        hist.day_offsets.push_back(offset);
        hist.impressions.push_back(0);
        hist.clicks.push_back(0);
      }
      hist.impressions.back() += 1;
      hist.clicks.back() += logs[i].label;
      hist.window_impressions += 1;
      hist.window_clicks += logs[i].label;
    } else if (d == validation) {
      index.validation_rows.push_back(i);
    } else {
      ++index.out_of_range;
    }
  }
  return index;
}

// Daily aggregates over the window: per active listing, the cumulative
// impression/click counts through each day. The prior update folds these
// chronologically, so the prior strength tracks the typical per-listing
// exposure in the window.
std::vector<PeriodAggregate> click_period_aggregates(const WindowIndex& index,
                                                     const WindowConfig& window) {
  const int days = window.train_end() - window.train_begin() + 1;
  std::vector<PeriodAggregate> out;
  std::vector<double> cum_imps, cum_clicks;  // running per-listing totals
  std::vector<const ListingHistory*> hists;
  hists.reserve(index.listings.size());
  for (const auto& [_, hist] : index.listings) hists.push_back(&hist);
  cum_imps.assign(hists.size(), 0.0);
  cum_clicks.assign(hists.size(), 0.0);
  std::vector<size_t> cursor(hists.size(), 0);

  for (int day = 0; day < days; ++day) {
    double imps = 0.0, clicks = 0.0;
    size_t active = 0;
    for (size_t l = 0; l < hists.size(); ++l) {
      const auto& h = *hists[l];
      if (cursor[l] < h.day_offsets.size() && h.day_offsets[cursor[l]] == day) {
        cum_imps[l] += static_cast<double>(h.impressions[cursor[l]]);
        cum_clicks[l] += static_cast<double>(h.clicks[cursor[l]]);
        ++cursor[l];
      }
      if (cum_imps[l] > 0.0) {
        ++active;
        imps += cum_imps[l];
        clicks += cum_clicks[l];
      }
    }
    if (active == 0) continue;
    out.push_back({window.train_begin() + day, clicks / static_cast<double>(active),
                   imps / static_cast<double>(active)});
  }
  return out;
}

}  // namespace

PreparedData prepare_window(std::span<const ListingRecord> logs, const WindowConfig& window,
                            const SmoothingConfig& smoothing) {
  window.validate();
  const WindowIndex index = build_window_index(logs, window);
  if (index.train_rows.empty()) throw DataError("no training rows inside the window");

  PreparedData data;
  data.window_rows = index.train_rows.size();
  data.out_of_range = index.out_of_range;

  // Click/impression prior from the recomputed daily aggregates.
  const auto periods = click_period_aggregates(index, window);
  data.priors.emplace(CounterFamily::clicks,
                      fit_prior(periods, smoothing, CounterFamily::clicks));

  // Favorite/purchase priors from end-of-window carried counters (the log has
  // no event stream for them): single-period averages over active listings.
  {
    std::unordered_map<std::string, std::pair<int64_t, int64_t>> last_seen;  // fav, pur
    std::unordered_map<std::string, Date> last_date;
    for (const size_t i : index.train_rows) {
      const auto& rec = logs[i];
      auto it = last_date.find(rec.listing_id);
      if (it == last_date.end() || rec.date > it->second) {
        last_date[rec.listing_id] = rec.date;
        last_seen[rec.listing_id] = {rec.favorites, rec.purchases};
      }
    }
    double fav_sum = 0.0, pur_sum = 0.0, imp_sum = 0.0;
    size_t active = 0;
    for (const auto& [id, hist] : index.listings) {
      if (hist.window_impressions == 0) continue;
      ++active;
      imp_sum += static_cast<double>(hist.window_impressions);
      const auto it = last_seen.find(id);
      if (it != last_seen.end()) {
        fav_sum += static_cast<double>(it->second.first);
        pur_sum += static_cast<double>(it->second.second);
      }
    }
    if (active > 0 && fav_sum > 0.0) {
      const PeriodAggregate agg{window.train_end(), fav_sum / active, imp_sum / active};
      data.priors.emplace(CounterFamily::favorites,
                          fit_prior(std::span(&agg, 1), smoothing, CounterFamily::favorites));
    }
    if (active > 0 && pur_sum > 0.0) {
      const PeriodAggregate agg{window.train_end(), pur_sum / active, imp_sum / active};
      data.priors.emplace(CounterFamily::purchases,
                          fit_prior(std::span(&agg, 1), smoothing, CounterFamily::purchases));
    }
  }

  // Training rows: counters strictly before the record's date, subsampled.
  std::vector<ListingRecord> window_records;
  window_records.reserve(index.train_rows.size());
  std::vector<int64_t> window_imps;
  window_imps.reserve(index.train_rows.size());
  for (const size_t i : index.train_rows) {
    ListingRecord rec = logs[i];
    const auto& hist = index.listings.at(rec.listing_id);
    const auto [imp, clk] = hist.before(rec.date - window.train_begin());
    rec.impressions = imp;
    rec.clicks = clk;
    window_imps.push_back(hist.window_impressions);
    window_records.push_back(std::move(rec));
  }
  const auto kept = subsample_negatives(window_records, window);
  data.train.reserve(kept.size());
  for (const auto& [idx, weight] : kept) {
    data.train.push_back({std::move(window_records[idx]), weight, window_imps[idx]});
  }

  // Validation rows: counters over the full training window.
  data.validation.reserve(index.validation_rows.size());
  for (const size_t i : index.validation_rows) {
    ListingRecord rec = logs[i];
    const auto it = index.listings.find(rec.listing_id);
    const int64_t window_count = it == index.listings.end() ? 0 : it->second.window_impressions;
    rec.impressions = window_count;
    rec.clicks = it == index.listings.end() ? 0 : it->second.window_clicks;
    data.validation.push_back({std::move(rec), 1.0, window_count});
  }
  return data;
}

std::string to_string(VariantKind k) {
  switch (k) {
    case VariantKind::baseline: return "baseline";
    case VariantKind::historical: return "historical";
    case VariantKind::content: return "content";
    case VariantKind::ensemble: return "ensemble";
  }
  throw InternalError("unknown variant kind");
}

VariantKind variant_kind_from_string(const std::string& s) {
  if (s == "baseline") return VariantKind::baseline;
  if (s == "historical") return VariantKind::historical;
  if (s == "content") return VariantKind::content;
  if (s == "ensemble") return VariantKind::ensemble;
  throw ConfigError("unknown variant kind: " + s + " (expected baseline|historical|content|ensemble)");
}

SparseVector variant_features(VariantKind kind, const ListingRecord& rec, const HashConfig& hash,
                              const ContentConfig& content, const PriorMap& priors) {
  switch (kind) {
    case VariantKind::baseline: {
      const std::vector<std::string> tokens = {"id|" + rec.listing_id,
                                               std::string(kInterceptToken)};
      return hash_text(tokens, hash);
    }
    case VariantKind::historical:
      return build_historical_features(rec, priors);
    case VariantKind::content: {
      SparseVectorBuilder builder;
      return build_content_vector(rec, hash, content, builder);
    }
    case VariantKind::ensemble:
      throw InternalError("ensemble features are built from base-model scores");
  }
  throw InternalError("unknown variant kind");
}

VariantModel train_variant(const VariantSpec& spec, const PreparedData& data,
                           const ExperimentConfig& cfg) {
  VariantModel out;
  out.name = spec.name;
  out.kind = spec.kind;
  out.hash = cfg.hash;
  out.content = cfg.content;
  out.priors = data.priors;
  out.partition_cfg = cfg.partition;
  const FtrlHyperparams hyper = spec.hyper.value_or(cfg.hyper);

  // Region assignment mirrors the reported setup: the historical variant
  // trains on warm rows, the content variant on cold rows, baseline and
  // ensemble (stacker) on the mixed set.
  std::vector<size_t> use;
  use.reserve(data.train.size());
  for (size_t i = 0; i < data.train.size(); ++i) {
    const bool warm = data.train[i].window_impressions >= cfg.partition.k;
    if (spec.kind == VariantKind::historical && !warm) continue;
    if (spec.kind == VariantKind::content && warm) continue;
    use.push_back(i);
  }
  if (use.empty()) throw DataError("variant '" + spec.name + "': no training rows");

  double pos_weight = 0.0, total_weight = 0.0;
  for (const size_t i : use) {
    total_weight += data.train[i].weight;
    if (data.train[i].rec.label) pos_weight += data.train[i].weight;
  }
  out.training_base_rate = total_weight > 0.0 ? pos_weight / total_weight : 0.0;

  if (spec.kind == VariantKind::ensemble) {
    std::vector<EnsembleTrainRow> rows;
    rows.reserve(data.train.size());
    for (const auto& row : data.train) {
      rows.push_back({&row.rec, row.weight, row.window_impressions});
    }
    out.bundle = train_ensemble(rows, cfg.ensemble, cfg.hash, cfg.content, data.priors,
                                cfg.partition, hyper, cfg.threads);
    // The stacker's training rows are the mixed set.
    return out;
  }

  uint32_t dimension = 0;
  switch (spec.kind) {
    case VariantKind::baseline: dimension = cfg.hash.dimension(); break;
    case VariantKind::historical: dimension = kHistoricalDimension; break;
    case VariantKind::content:
      dimension = cfg.hash.dimension() + static_cast<uint32_t>(kImageDim);
      break;
    default: break;
  }
  FtrlModel model(dimension, hyper);
  SparseVector x;
  model.train_stream(use.size(), [&](size_t j) {
    const PreparedRow& row = data.train[use[j]];
    x = variant_features(spec.kind, row.rec, cfg.hash, cfg.content, data.priors);
    return FtrlModel::RowView{&x, row.rec.label, row.weight};
  });
  out.single = std::move(model);
  return out;
}

double score_record(const VariantModel& model, const ListingRecord& rec) {
  if (model.kind == VariantKind::ensemble) {
    if (!model.bundle) throw InternalError("ensemble variant without a bundle");
    return predict_ensemble(*model.bundle, rec);
  }
  if (!model.single) throw InternalError("variant without a model");
  return model.single->predict(
      variant_features(model.kind, rec, model.hash, model.content, model.priors));
}

namespace {

json hash_to_json(const HashConfig& h) {
  return {{"dimension_bits", h.dimension_bits}, {"seed", h.seed}, {"use_sign_hash", h.use_sign_hash}};
}

HashConfig hash_from_json(const json& j) {
  HashConfig h;
  h.dimension_bits = j.value("dimension_bits", h.dimension_bits);
  h.seed = j.value("seed", h.seed);
  h.use_sign_hash = j.value("use_sign_hash", h.use_sign_hash);
  h.validate();
  return h;
}

json content_to_json(const ContentConfig& c) {
  return {{"include_listing_id", c.include_listing_id},
          {"include_price", c.include_price},
          {"include_query", c.include_query},
          {"price_grid", c.price_grid}};
}

ContentConfig content_from_json(const json& j) {
  ContentConfig c;
  c.include_listing_id = j.value("include_listing_id", c.include_listing_id);
  c.include_price = j.value("include_price", c.include_price);
  c.include_query = j.value("include_query", c.include_query);
  if (j.contains("price_grid")) c.price_grid = j.at("price_grid").get<std::vector<double>>();
  return c;
}

json priors_to_json(const PriorMap& priors) {
  json out = json::object();
  for (const auto& [family, prior] : priors) {
    out[to_string(family)] = {{"alpha", prior.alpha},
                              {"beta", prior.beta},
                              {"smoothing_factor", prior.smoothing_factor}};
  }
  return out;
}

PriorMap priors_from_json(const json& j) {
  PriorMap out;
  for (const auto& [key, value] : j.items()) {
    SmoothingPrior prior;
    prior.family = counter_family_from_string(key);
    prior.alpha = value.at("alpha").get<double>();
    prior.beta = value.at("beta").get<double>();
    prior.smoothing_factor = value.value("smoothing_factor", prior.smoothing_factor);
    prior.validate();
    out.emplace(prior.family, prior);
  }
  return out;
}

constexpr char kModelMagic[8] = {'C', 'T', 'R', 'M', 'D', 'L', '1', '\0'};

void put_u32(std::ostream& out, uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& out, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw DataError("model container truncated");
  uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  if (!in) throw DataError("model container truncated");
  uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

}  // namespace

void save_variant(const VariantModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write model file: " + path);
  out.write(kModelMagic, 8);
  put_u32(out, 1);  // version

  json header;
  header["name"] = model.name;
  header["kind"] = to_string(model.kind);
  header["hash"] = hash_to_json(model.hash);
  header["content"] = content_to_json(model.content);
  header["priors"] = priors_to_json(model.priors);
  header["partition_k"] = model.partition_cfg.k;
  header["training_base_rate"] = model.training_base_rate;
  const std::string header_bytes = header.dump();
  put_u64(out, header_bytes.size());
  out.write(header_bytes.data(), static_cast<std::streamsize>(header_bytes.size()));

  const auto write_tagged = [&out](const std::string& tag, const FtrlModel& m) {
    put_u32(out, static_cast<uint32_t>(tag.size()));
    out.write(tag.data(), static_cast<std::streamsize>(tag.size()));
    save_ftrl(m, out);
  };
  if (model.kind == VariantKind::ensemble) {
    if (!model.bundle) throw InternalError("ensemble variant without a bundle");
    put_u32(out, 3);
    write_tagged("historical", model.bundle->historical);
    write_tagged("content", model.bundle->content);
    write_tagged("stacker", model.bundle->stacker);
  } else {
    if (!model.single) throw InternalError("variant without a model");
    put_u32(out, 1);
    write_tagged("main", *model.single);
  }
  if (!out) throw DataError("failed writing model file: " + path);
}

VariantModel load_variant(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open model file: " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kModelMagic, 8) != 0) {
    throw DataError("bad model file header: " + path);
  }
  const uint32_t version = get_u32(in);
  if (version != 1) throw DataError("unsupported model file version");

  const uint64_t header_len = get_u64(in);
  std::string header_bytes(header_len, '\0');
  in.read(header_bytes.data(), static_cast<std::streamsize>(header_len));
  if (!in) throw DataError("model container truncated");
  const json header = json::parse(header_bytes);

  VariantModel model;
  model.name = header.at("name").get<std::string>();
  model.kind = variant_kind_from_string(header.at("kind").get<std::string>());
  model.hash = hash_from_json(header.at("hash"));
  model.content = content_from_json(header.at("content"));
  model.priors = priors_from_json(header.at("priors"));
  model.partition_cfg.k = header.value("partition_k", int64_t{30});
  model.training_base_rate = header.at("training_base_rate").get<double>();

  const uint32_t model_count = get_u32(in);
  std::map<std::string, FtrlModel> parts;
  for (uint32_t k = 0; k < model_count; ++k) {
    const uint32_t tag_len = get_u32(in);
    std::string tag(tag_len, '\0');
    in.read(tag.data(), tag_len);
    parts.emplace(tag, load_ftrl(in));
  }
  if (model.kind == VariantKind::ensemble) {
    if (!parts.count("historical") || !parts.count("content") || !parts.count("stacker")) {
      throw DataError("ensemble model file missing a component");
    }
    model.bundle = EnsembleBundle{std::move(parts.at("historical")), std::move(parts.at("content")),
                                  std::move(parts.at("stacker")), model.priors,
                                  model.partition_cfg, model.hash, model.content};
  } else {
    if (!parts.count("main")) throw DataError("model file missing its main model");
    model.single = std::move(parts.at("main"));
  }
  return model;
}

namespace {

std::vector<double> score_validation(const VariantModel& model,
                                     std::span<const PreparedRow> validation, int threads) {
  std::vector<double> scores(validation.size());
  parallel_chunks(validation.size(), threads, [&](size_t begin, size_t end) {
    for (size_t i = begin; i < end; ++i) {
      scores[i] = score_record(model, validation[i].rec);
    }
  });
  return scores;
}

ExperimentResult evaluate_prepared(std::span<const PreparedRow> validation,
                                   std::span<const VariantModel> models,
                                   const std::string& baseline_name,
                                   const PartitionConfig& partition_cfg,
                                   const MetricsConfig& metrics, int threads) {
  if (validation.empty()) throw DataError("no validation rows");
  partition_cfg.validate();

  size_t baseline_idx = models.size();
  for (size_t i = 0; i < models.size(); ++i) {
    if (models[i].name == baseline_name) baseline_idx = i;
  }
  if (baseline_idx == models.size()) {
    throw ConfigError("baseline variant '" + baseline_name + "' not found");
  }

  std::vector<Slice> slices(validation.size());
  ExperimentResult result;
  result.baseline = baseline_name;
  for (size_t i = 0; i < validation.size(); ++i) {
    slices[i] = validation[i].window_impressions >= partition_cfg.k ? Slice::warm : Slice::cold;
    ++result.slice_sizes[slices[i]];
    ++result.slice_sizes[Slice::mixed];
  }

  // Baseline scores anchor the calibration moments.
  const std::vector<double> baseline_raw =
      score_validation(models[baseline_idx], validation, threads);
  double ref_mean = 0.0;
  for (const double s : baseline_raw) ref_mean += s;
  ref_mean /= static_cast<double>(baseline_raw.size());
  double ref_var = 0.0;
  for (const double s : baseline_raw) ref_var += (s - ref_mean) * (s - ref_mean);
  ref_var /= static_cast<double>(baseline_raw.size());
  const double ref_std = std::sqrt(ref_var);

  // One evaluation shares one NE denominator: the baseline's training base
  // rate. Per-variant denominators shift NE by far more than the log-loss
  // differences at this scale, which would make deltas meaningless.
  const double ne_base_rate = models[baseline_idx].training_base_rate;

  std::map<Slice, EvalReport> baseline_reports;
  std::vector<VariantResult> results(models.size());
  for (size_t m = 0; m < models.size(); ++m) {
    const VariantModel& model = models[m];
    const std::vector<double> raw =
        m == baseline_idx ? baseline_raw : score_validation(model, validation, threads);
    auto [scores, params] = calibrate(raw, ref_mean, ref_std);

    std::vector<ScoredExample> examples;
    examples.reserve(scores.size());
    for (size_t i = 0; i < scores.size(); ++i) {
      examples.push_back({scores[i], validation[i].rec.label, slices[i], validation[i].weight});
    }
    VariantResult& vr = results[m];
    vr.name = model.name;
    vr.kind = model.kind;
    vr.training_base_rate = model.training_base_rate;
    vr.calibration = params;
    vr.reports = evaluate_slices(examples, ne_base_rate, metrics.ne_denominator);
    if (m == baseline_idx) baseline_reports = vr.reports;
  }

  for (auto& vr : results) {
    for (const auto& [slice, report] : vr.reports) {
      const auto it = baseline_reports.find(slice);
      if (it != baseline_reports.end()) {
        vr.deltas[slice] = deltas_vs_baseline(report, it->second);
      }
    }
  }
  result.variants = std::move(results);
  return result;
}

}  // namespace

ExperimentResult run_experiment(std::span<const ListingRecord> logs,
                                std::span<const VariantSpec> variants,
                                const std::string& baseline_name, const WindowConfig& window,
                                const ExperimentConfig& cfg) {
  if (variants.empty()) throw ConfigError("run_experiment: no variants");
  const PreparedData data = prepare_window(logs, window, cfg.smoothing);
  if (data.validation.empty()) throw DataError("no validation-day rows in the logs");

  std::vector<VariantModel> models(variants.size());
  const int outer_threads = std::min<int>(cfg.threads, static_cast<int>(variants.size()));
  if (outer_threads > 1) {
    std::vector<std::future<VariantModel>> futures;
    futures.reserve(variants.size());
    ExperimentConfig inner = cfg;
    inner.threads = 1;
    for (const auto& spec : variants) {
      futures.push_back(std::async(std::launch::async,
                                   [&spec, &data, &inner] { return train_variant(spec, data, inner); }));
    }
    for (size_t i = 0; i < futures.size(); ++i) models[i] = futures[i].get();
  } else {
    for (size_t i = 0; i < variants.size(); ++i) {
      models[i] = train_variant(variants[i], data, cfg);
    }
  }

  return evaluate_prepared(data.validation, models, baseline_name, cfg.partition, cfg.metrics,
                           cfg.threads);
}

ExperimentResult evaluate_models(std::span<const ListingRecord> logs,
                                 std::span<const VariantModel> models,
                                 const std::string& baseline_name, const WindowConfig& window,
                                 const PartitionConfig& partition_cfg, const MetricsConfig& metrics,
                                 int threads) {
  if (models.empty()) throw ConfigError("evaluate: no models");
  SmoothingConfig smoothing;  // priors come from the model files; this only shapes counters
  const PreparedData data = prepare_window(logs, window, smoothing);
  if (data.validation.empty()) throw DataError("no validation-day rows in the logs");
  return evaluate_prepared(data.validation, models, baseline_name, partition_cfg, metrics, threads);
}

namespace {

std::string format_cell(const std::optional<double>& v, const char* fmt) {
  if (!v) return "undef";
  char buf[32];
  std::snprintf(buf, sizeof(buf), fmt, *v);
  return buf;
}

}  // namespace

std::string render_delta_table(const ExperimentResult& result) {
  std::ostringstream out;
  const Slice slices[3] = {Slice::mixed, Slice::cold, Slice::warm};
  out << "Deltas vs baseline '" << result.baseline << "'\n";
  out << "variant          metric       mixed      cold      warm\n";
  for (const auto& vr : result.variants) {
    if (vr.name == result.baseline) continue;
    const auto row = [&](const char* metric,
                         const std::function<std::optional<double>(const MetricDeltas&)>& pick) {
      out << "  " << vr.name;
      for (size_t pad = vr.name.size(); pad < 15; ++pad) out << ' ';
      out << metric;
      for (size_t pad = std::strlen(metric); pad < 13; ++pad) out << ' ';
      for (const Slice s : slices) {
        const auto it = vr.deltas.find(s);
        std::string cell = "n/a";
        if (it != vr.deltas.end()) cell = format_cell(pick(it->second), "%+9.3f");
        out << cell;
        for (size_t pad = cell.size(); pad < 10; ++pad) out << ' ';
      }
      out << '\n';
    };
    row("AUC(%)", [](const MetricDeltas& d) { return d.auc_pp; });
    row("LogLoss(1e3)", [](const MetricDeltas& d) { return d.log_loss_x1e3; });
    row("NE(1e3)", [](const MetricDeltas& d) { return d.ne_x1e3; });
  }
  return out.str();
}

}  // namespace ctr
