// Command-line surface for the CTR prediction pipeline: synthetic log
// generation, variant training, offline evaluation, and batch scoring.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ctr/manifest.hpp"
#include "ctr/parallel.hpp"
#include "ctr/pipeline.hpp"
#include "ctr/synthetic.hpp"

namespace {

using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitInternal = 4;

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ctr::ConfigError("cannot open config file: " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ctr::ConfigError("config file " + path + ": " + e.what());
  }
}

struct CommonOptions {
  std::string config_path;
  std::optional<uint64_t> seed;
  int threads = 0;  // 0 = not given; config file or default applies
};

struct PipelineOptions {
  ctr::ExperimentConfig experiment;
  ctr::WindowConfig window;
  std::optional<ctr::Date> anchor;
};

ctr::SyntheticSpec synthetic_spec_from_json(const json& j) {
  ctr::SyntheticSpec spec;
  spec.n_listings = j.value("n_listings", spec.n_listings);
  spec.days = j.value("days", spec.days);
  spec.vocab_size = j.value("vocab_size", spec.vocab_size);
  spec.prior_alpha = j.value("prior_alpha", spec.prior_alpha);
  spec.prior_beta = j.value("prior_beta", spec.prior_beta);
  spec.impression_exponent = j.value("impression_exponent", spec.impression_exponent);
  spec.text_signal_strength = j.value("text_signal_strength", spec.text_signal_strength);
  spec.image_signal_strength = j.value("image_signal_strength", spec.image_signal_strength);
  spec.warm_fraction = j.value("warm_fraction", spec.warm_fraction);
  spec.warm_threshold = j.value("warm_threshold", spec.warm_threshold);
  spec.image_coverage = j.value("image_coverage", spec.image_coverage);
  spec.validation_scale = j.value("validation_scale", spec.validation_scale);
  spec.seed = j.value("seed", spec.seed);
  return spec;
}

json synthetic_spec_to_json(const ctr::SyntheticSpec& s) {
  return {{"n_listings", s.n_listings},
          {"days", s.days},
          {"vocab_size", s.vocab_size},
          {"prior_alpha", s.prior_alpha},
          {"prior_beta", s.prior_beta},
          {"impression_exponent", s.impression_exponent},
          {"text_signal_strength", s.text_signal_strength},
          {"image_signal_strength", s.image_signal_strength},
          {"warm_fraction", s.warm_fraction},
          {"warm_threshold", s.warm_threshold},
          {"image_coverage", s.image_coverage},
          {"validation_scale", s.validation_scale},
          {"seed", s.seed}};
}

// Precedence: flags > config file > defaults. The master seed derives the
// sampling/shuffle/fold seeds unless the config pins them explicitly.
PipelineOptions pipeline_options(const CommonOptions& common) {
  PipelineOptions opts;
  json cfg = json::object();
  if (!common.config_path.empty()) cfg = read_json_file(common.config_path);

  if (cfg.contains("hash")) {
    const auto& h = cfg["hash"];
    opts.experiment.hash.dimension_bits = h.value("dimension_bits", opts.experiment.hash.dimension_bits);
    opts.experiment.hash.seed = h.value("seed", opts.experiment.hash.seed);
    opts.experiment.hash.use_sign_hash = h.value("use_sign_hash", opts.experiment.hash.use_sign_hash);
  }
  if (cfg.contains("content")) {
    const auto& c = cfg["content"];
    auto& cc = opts.experiment.content;
    cc.include_listing_id = c.value("include_listing_id", cc.include_listing_id);
    cc.include_price = c.value("include_price", cc.include_price);
    cc.include_query = c.value("include_query", cc.include_query);
    if (c.contains("price_grid")) cc.price_grid = c["price_grid"].get<std::vector<double>>();
  }
  if (cfg.contains("smoothing")) {
    const auto& s = cfg["smoothing"];
    opts.experiment.smoothing.smoothing_factor =
        s.value("smoothing_factor", opts.experiment.smoothing.smoothing_factor);
    const std::string convention = s.value("beta_convention", std::string("impressions"));
    if (convention == "impressions") {
      opts.experiment.smoothing.beta_convention = ctr::BetaConvention::impressions;
    } else if (convention == "non_clicks") {
      opts.experiment.smoothing.beta_convention = ctr::BetaConvention::non_clicks;
    } else {
      throw ctr::ConfigError("smoothing.beta_convention must be impressions|non_clicks");
    }
  }
  if (cfg.contains("learner")) {
    const auto& l = cfg["learner"];
    auto& hp = opts.experiment.hyper;
    hp.lr_alpha = l.value("lr_alpha", hp.lr_alpha);
    hp.lr_beta = l.value("lr_beta", hp.lr_beta);
    hp.lambda1 = l.value("lambda1", hp.lambda1);
    hp.lambda2 = l.value("lambda2", hp.lambda2);
    hp.epochs = l.value("epochs", hp.epochs);
    if (l.contains("shuffle_seed")) hp.shuffle_seed = l["shuffle_seed"].get<uint64_t>();
  }
  if (cfg.contains("window")) {
    const auto& w = cfg["window"];
    opts.window.negative_sample_rate =
        w.value("negative_sample_rate", opts.window.negative_sample_rate);
    if (w.contains("sample_seed")) opts.window.sample_seed = w["sample_seed"].get<uint64_t>();
    if (w.contains("anchor")) opts.anchor = ctr::Date::parse(w["anchor"].get<std::string>());
  }
  if (cfg.contains("partition")) {
    opts.experiment.partition.k = cfg["partition"].value("k", opts.experiment.partition.k);
  }
  if (cfg.contains("ensemble")) {
    const auto& e = cfg["ensemble"];
    opts.experiment.ensemble.folds = e.value("folds", opts.experiment.ensemble.folds);
    opts.experiment.ensemble.out_of_fold =
        e.value("out_of_fold", opts.experiment.ensemble.out_of_fold);
    if (e.contains("fold_seed")) opts.experiment.ensemble.fold_seed = e["fold_seed"].get<uint64_t>();
  }
  if (cfg.contains("metrics")) {
    const std::string d = cfg["metrics"].value("ne_denominator", std::string("entropy"));
    if (d == "entropy") {
      opts.experiment.metrics.ne_denominator = ctr::NeDenominator::entropy;
    } else if (d == "rate") {
      opts.experiment.metrics.ne_denominator = ctr::NeDenominator::rate;
    } else {
      throw ctr::ConfigError("metrics.ne_denominator must be entropy|rate");
    }
  }
  opts.experiment.threads = cfg.value("threads", 1);

  if (common.seed) {
    const uint64_t master = *common.seed;
    if (!cfg.contains("window") || !cfg["window"].contains("sample_seed")) {
      opts.window.sample_seed = ctr::mix64(master ^ 1);
    }
    if (!cfg.contains("learner") || !cfg["learner"].contains("shuffle_seed")) {
      opts.experiment.hyper.shuffle_seed = ctr::mix64(master ^ 2);
    }
    if (!cfg.contains("ensemble") || !cfg["ensemble"].contains("fold_seed")) {
      opts.experiment.ensemble.fold_seed = ctr::mix64(master ^ 3);
    }
  }
  if (common.threads > 0) opts.experiment.threads = common.threads;
  return opts;
}

json effective_config_json(const PipelineOptions& opts) {
  const auto& e = opts.experiment;
  json j;
  j["hash"] = {{"dimension_bits", e.hash.dimension_bits},
               {"seed", e.hash.seed},
               {"use_sign_hash", e.hash.use_sign_hash}};
  j["content"] = {{"include_listing_id", e.content.include_listing_id},
                  {"include_price", e.content.include_price},
                  {"include_query", e.content.include_query},
                  {"price_grid", e.content.price_grid}};
  j["smoothing"] = {
      {"smoothing_factor", e.smoothing.smoothing_factor},
      {"beta_convention",
       e.smoothing.beta_convention == ctr::BetaConvention::impressions ? "impressions" : "non_clicks"}};
  j["learner"] = {{"lr_alpha", e.hyper.lr_alpha},   {"lr_beta", e.hyper.lr_beta},
                  {"lambda1", e.hyper.lambda1},     {"lambda2", e.hyper.lambda2},
                  {"epochs", e.hyper.epochs},       {"shuffle_seed", e.hyper.shuffle_seed}};
  j["window"] = {{"negative_sample_rate", opts.window.negative_sample_rate},
                 {"sample_seed", opts.window.sample_seed},
                 {"anchor", opts.window.anchor.to_string()}};
  j["partition"] = {{"k", e.partition.k}};
  j["ensemble"] = {{"folds", e.ensemble.folds},
                   {"out_of_fold", e.ensemble.out_of_fold},
                   {"fold_seed", e.ensemble.fold_seed}};
  j["metrics"] = {{"ne_denominator",
                   e.metrics.ne_denominator == ctr::NeDenominator::entropy ? "entropy" : "rate"}};
  j["threads"] = e.threads;
  return j;
}

ctr::Date resolve_anchor(const std::optional<ctr::Date>& flag_anchor,
                         const std::optional<ctr::Date>& config_anchor,
                         const std::vector<ctr::ListingRecord>& logs) {
  if (flag_anchor) return *flag_anchor;
  if (config_anchor) return *config_anchor;
  if (logs.empty()) throw ctr::DataError("empty log file and no anchor date given");
  ctr::Date max_date = logs.front().date;
  for (const auto& rec : logs) max_date = std::max(max_date, rec.date);
  return max_date + 1;  // the last logged day becomes the validation day
}

std::vector<ctr::ListingRecord> load_logs(const std::string& log_path,
                                          const std::string& image_path,
                                          std::optional<ctr::ImageStore>& images) {
  if (!image_path.empty()) {
    images = ctr::ImageStore::load(image_path);
  } else {
    const std::string sidecar = log_path + ".images";
    if (std::filesystem::exists(sidecar)) images = ctr::ImageStore::load(sidecar);
  }
  return ctr::read_log_file(log_path, images ? &*images : nullptr);
}

json report_to_json(const ctr::ExperimentResult& result) {
  json j;
  j["baseline"] = result.baseline;
  json sizes = json::object();
  for (const auto& [slice, n] : result.slice_sizes) sizes[ctr::to_string(slice)] = n;
  j["slice_sizes"] = sizes;
  j["variants"] = json::array();
  for (const auto& vr : result.variants) {
    json v;
    v["name"] = vr.name;
    v["kind"] = ctr::to_string(vr.kind);
    v["training_base_rate"] = vr.training_base_rate;
    v["calibration"] = {{"scale", vr.calibration.scale},
                        {"shift", vr.calibration.shift},
                        {"clamped", vr.calibration.clamped}};
    json slices = json::object();
    for (const auto& [slice, report] : vr.reports) {
      json r;
      if (report.auc) {
        r["auc"] = *report.auc;
      } else {
        r["auc"] = nullptr;
        r["auc_undefined"] = true;
      }
      r["avg_log_loss"] = report.avg_log_loss;
      r["normalized_cross_entropy"] = report.normalized_cross_entropy;
      r["positives"] = report.positives;
      r["negatives"] = report.negatives;
      r["base_rate"] = report.base_rate;
      slices[ctr::to_string(slice)] = r;
    }
    v["slices"] = slices;
    json deltas = json::object();
    for (const auto& [slice, d] : vr.deltas) {
      json dj;
      dj["auc_pp"] = d.auc_pp ? json(*d.auc_pp) : json(nullptr);
      dj["log_loss_x1e3"] = d.log_loss_x1e3 ? json(*d.log_loss_x1e3) : json(nullptr);
      dj["ne_x1e3"] = d.ne_x1e3 ? json(*d.ne_x1e3) : json(nullptr);
      deltas[ctr::to_string(slice)] = dj;
    }
    v["deltas"] = deltas;
    j["variants"].push_back(v);
  }
  return j;
}

double elapsed_ms(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
      .count();
}

int cmd_gen_data(const std::string& spec_path, const std::string& out_path,
                 const CommonOptions& common) {
  const auto start = std::chrono::steady_clock::now();
  ctr::SyntheticSpec spec = synthetic_spec_from_json(read_json_file(spec_path));
  if (common.seed) spec.seed = *common.seed;
  const std::string image_path = out_path + ".images";
  const ctr::SyntheticStats stats = ctr::generate_synthetic_logs(spec, out_path, image_path);

  ctr::RunManifest manifest;
  manifest.command = "gen-data";
  manifest.config = {{"spec", synthetic_spec_to_json(spec)},
                     {"stats",
                      {{"records", stats.records},
                       {"positives", stats.positives},
                       {"listings", stats.listings},
                       {"realized_warm_fraction", stats.realized_warm_fraction},
                       {"mean_label", stats.mean_label}}}};
  manifest.inputs.emplace_back(spec_path, ctr::file_digest(spec_path));
  manifest.outputs.emplace_back(out_path, ctr::file_digest(out_path));
  manifest.outputs.emplace_back(image_path, ctr::file_digest(image_path));
  manifest.timings_ms.emplace_back("total", elapsed_ms(start));
  manifest.write(out_path + ".manifest.json");

  std::cout << "wrote " << stats.records << " records (" << stats.positives << " clicks, warm "
            << stats.realized_warm_fraction << ") to " << out_path << "\n";
  return kExitOk;
}

int cmd_train(const std::string& log_path, const std::string& image_path,
              const std::string& variant_name, const std::string& kind_name,
              const std::string& out_path, const std::string& anchor_flag, double rate_override,
              int64_t k_override, const CommonOptions& common) {
  const auto start = std::chrono::steady_clock::now();
  PipelineOptions opts = pipeline_options(common);
  if (rate_override > 0.0) opts.window.negative_sample_rate = rate_override;
  if (k_override > 0) opts.experiment.partition.k = k_override;
  std::optional<ctr::Date> flag_anchor;
  if (!anchor_flag.empty()) flag_anchor = ctr::Date::parse(anchor_flag);

  std::optional<ctr::ImageStore> images;
  const std::vector<ctr::ListingRecord> logs = load_logs(log_path, image_path, images);
  opts.window.anchor = resolve_anchor(flag_anchor, opts.anchor, logs);

  ctr::VariantSpec spec;
  spec.kind = ctr::variant_kind_from_string(kind_name);
  spec.name = variant_name.empty() ? kind_name : variant_name;

  const ctr::PreparedData data =
      ctr::prepare_window(logs, opts.window, opts.experiment.smoothing);
  const ctr::VariantModel model = ctr::train_variant(spec, data, opts.experiment);
  ctr::save_variant(model, out_path);

  ctr::RunManifest manifest;
  manifest.command = "train";
  json cfg = effective_config_json(opts);
  cfg["variant"] = {{"name", spec.name}, {"kind", kind_name}};
  cfg["training_base_rate"] = model.training_base_rate;
  manifest.config = cfg;
  manifest.inputs.emplace_back(log_path, ctr::file_digest(log_path));
  manifest.outputs.emplace_back(out_path, ctr::file_digest(out_path));
  manifest.timings_ms.emplace_back("total", elapsed_ms(start));
  manifest.write(out_path + ".manifest.json");

  std::cout << "trained " << spec.name << " on " << data.train.size() << " rows ("
            << data.window_rows << " before subsampling), model at " << out_path << "\n";
  return kExitOk;
}

int cmd_evaluate(const std::string& log_path, const std::string& image_path,
                 const std::vector<std::string>& model_args, const std::string& baseline,
                 int64_t partition_k, const std::string& out_path, const std::string& anchor_flag,
                 const CommonOptions& common) {
  const auto start = std::chrono::steady_clock::now();
  PipelineOptions opts = pipeline_options(common);
  if (partition_k > 0) opts.experiment.partition.k = partition_k;
  std::optional<ctr::Date> flag_anchor;
  if (!anchor_flag.empty()) flag_anchor = ctr::Date::parse(anchor_flag);

  std::optional<ctr::ImageStore> images;
  std::vector<ctr::ListingRecord> logs = load_logs(log_path, image_path, images);
  opts.window.anchor = resolve_anchor(flag_anchor, opts.anchor, logs);

  std::vector<ctr::VariantModel> models;
  std::vector<std::string> model_paths;
  for (const auto& arg : model_args) {
    const size_t eq = arg.find('=');
    std::string name, path;
    if (eq == std::string::npos) {
      path = arg;
    } else {
      name = arg.substr(0, eq);
      path = arg.substr(eq + 1);
    }
    ctr::VariantModel model = ctr::load_variant(path);
    if (!name.empty()) model.name = name;
    model_paths.push_back(path);
    models.push_back(std::move(model));
  }
  const std::string baseline_name = baseline.empty() ? models.front().name : baseline;

  const ctr::ExperimentResult result =
      ctr::evaluate_models(logs, models, baseline_name, opts.window, opts.experiment.partition,
                           opts.experiment.metrics, opts.experiment.threads);

  std::cout << ctr::render_delta_table(result);
  const json report = report_to_json(result);
  if (!out_path.empty()) {
    std::ofstream out(out_path);
    if (!out) throw ctr::DataError("cannot write report: " + out_path);
    out << report.dump(2) << '\n';

    ctr::RunManifest manifest;
    manifest.command = "evaluate";
    json cfg = effective_config_json(opts);
    cfg["baseline"] = baseline_name;
    manifest.config = cfg;
    manifest.inputs.emplace_back(log_path, ctr::file_digest(log_path));
    for (const auto& path : model_paths) manifest.inputs.emplace_back(path, ctr::file_digest(path));
    manifest.outputs.emplace_back(out_path, ctr::file_digest(out_path));
    manifest.timings_ms.emplace_back("total", elapsed_ms(start));
    manifest.write(out_path + ".manifest.json");
  }
  return kExitOk;
}

int cmd_predict(const std::string& model_path, const std::string& log_path,
                const std::string& image_path, const std::string& out_path,
                std::optional<double> calibrate_mean, std::optional<double> calibrate_std,
                const CommonOptions& common) {
  const auto start = std::chrono::steady_clock::now();
  if (calibrate_mean.has_value() != calibrate_std.has_value()) {
    throw ctr::ConfigError("--calibrate-mean and --calibrate-std must be given together");
  }
  const ctr::VariantModel model = ctr::load_variant(model_path);
  std::optional<ctr::ImageStore> images;
  const std::vector<ctr::ListingRecord> logs = load_logs(log_path, image_path, images);

  std::vector<double> scores(logs.size());
  ctr::parallel_chunks(logs.size(), common.threads, [&](size_t begin, size_t end) {
    for (size_t i = begin; i < end; ++i) scores[i] = ctr::score_record(model, logs[i]);
  });
  ctr::CalibrationParams params;
  if (calibrate_mean) {
    auto [calibrated, p] = ctr::calibrate(scores, *calibrate_mean, *calibrate_std);
    scores = std::move(calibrated);
    params = p;
  }

  const std::string tmp_path = out_path + ".tmp";
  {
    std::ofstream out(tmp_path);
    if (!out) throw ctr::DataError("cannot write scores: " + tmp_path);
    for (size_t i = 0; i < logs.size(); ++i) {
      json j;
      j["listing_id"] = logs[i].listing_id;
      j["date"] = logs[i].date.to_string();
      j["score"] = scores[i];
      out << j.dump() << '\n';
    }
    if (!out) throw ctr::DataError("failed writing scores: " + tmp_path);
  }
  std::filesystem::rename(tmp_path, out_path);

  ctr::RunManifest manifest;
  manifest.command = "predict";
  json cfg;
  cfg["model"] = model_path;
  if (calibrate_mean) {
    cfg["calibration"] = {{"mean", *calibrate_mean},
                          {"std", *calibrate_std},
                          {"scale", params.scale},
                          {"shift", params.shift},
                          {"clamped", params.clamped}};
  }
  manifest.config = cfg;
  manifest.inputs.emplace_back(log_path, ctr::file_digest(log_path));
  manifest.inputs.emplace_back(model_path, ctr::file_digest(model_path));
  manifest.outputs.emplace_back(out_path, ctr::file_digest(out_path));
  manifest.timings_ms.emplace_back("total", elapsed_ms(start));
  manifest.write(out_path + ".manifest.json");

  std::cout << "scored " << logs.size() << " records to " << out_path << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Offline CTR prediction pipeline"};
  app.require_subcommand(1);
  app.fallthrough();

  CommonOptions common;
  std::optional<uint64_t> seed_flag;
  app.add_option("--config", common.config_path, "JSON config file")->capture_default_str();
  app.add_option("--seed", seed_flag, "master seed (derives sampling/shuffle/fold seeds)");
  app.add_option("--threads", common.threads, "worker threads (default 1)");

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic click log");
  std::string gen_spec, gen_out;
  gen->add_option("--spec", gen_spec, "synthetic spec JSON")->required();
  gen->add_option("--out", gen_out, "output log path")->required();

  auto* train = app.add_subcommand("train", "train one model variant");
  std::string train_logs, train_images, train_variant = "baseline", train_name, train_out,
              train_anchor;
  double train_rate = -1.0;
  int64_t train_k = -1;
  train->add_option("--logs", train_logs, "input click log")->required();
  train->add_option("--images", train_images, "image embedding sidecar");
  train->add_option("--variant", train_variant, "baseline|historical|content|ensemble")->required();
  train->add_option("--name", train_name, "model name (defaults to the variant kind)");
  train->add_option("--out", train_out, "output model path")->required();
  train->add_option("--anchor", train_anchor, "anchor date t (YYYY-MM-DD); default last day + 1");
  train->add_option("--rate", train_rate, "negative sample rate override");
  train->add_option("--k", train_k, "cold/warm impression threshold override");

  auto* evaluate = app.add_subcommand("evaluate", "score validation day and report deltas");
  std::string eval_logs, eval_images, eval_baseline, eval_out, eval_anchor;
  std::vector<std::string> eval_models;
  int64_t eval_k = -1;
  evaluate->add_option("--logs", eval_logs, "input click log")->required();
  evaluate->add_option("--images", eval_images, "image embedding sidecar");
  evaluate->add_option("--model", eval_models, "model file, optionally name=path")
      ->required()
      ->take_all();
  evaluate->add_option("--baseline", eval_baseline, "baseline model name (default: first model)");
  evaluate->add_option("--k", eval_k, "cold/warm impression threshold");
  evaluate->add_option("--out", eval_out, "machine-readable report path");
  evaluate->add_option("--anchor", eval_anchor, "anchor date t (YYYY-MM-DD)");

  auto* predict = app.add_subcommand("predict", "score every record in a log");
  std::string pred_model, pred_logs, pred_images, pred_out;
  std::optional<double> pred_mean, pred_std;
  predict->add_option("--model", pred_model, "model file")->required();
  predict->add_option("--logs", pred_logs, "input log")->required();
  predict->add_option("--images", pred_images, "image embedding sidecar");
  predict->add_option("--out", pred_out, "output scored file")->required();
  predict->add_option("--calibrate-mean", pred_mean, "reference score mean");
  predict->add_option("--calibrate-std", pred_std, "reference score std");

  try {
    app.parse(argc, argv);
    common.seed = seed_flag;

    if (gen->parsed()) return cmd_gen_data(gen_spec, gen_out, common);
    if (train->parsed()) {
      return cmd_train(train_logs, train_images, train_name, train_variant, train_out,
                       train_anchor, train_rate, train_k, common);
    }
    if (evaluate->parsed()) {
      return cmd_evaluate(eval_logs, eval_images, eval_models, eval_baseline, eval_k, eval_out,
                          eval_anchor, common);
    }
    if (predict->parsed()) {
      return cmd_predict(pred_model, pred_logs, pred_images, pred_out, pred_mean, pred_std,
                         common);
    }
    return kExitConfig;
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitConfig;
  } catch (const ctr::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ctr::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
}
