#include "fewner/experiment.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <utility>

#include "fewner/corpus.hpp"
#include "fewner/episodes.hpp"
#include "fewner/metrics.hpp"
#include "fewner/referents.hpp"

namespace fs = std::filesystem;

namespace fewner::experiment {

namespace {

// --- config plumbing -------------------------------------------------------

template <typename T>
void read_field(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void read_dims(const nlohmann::json& j, neural::EncoderDims& dims) {
  read_field(j, "hash_vocab", dims.hash_vocab);
  read_field(j, "width", dims.width);
  read_field(j, "radius", dims.radius);
}

void read_common_meta(const nlohmann::json& j, double& zeta_query, double& zeta_support,
                      double& alpha, double& beta, int& inner_steps, int& adapt_steps,
                      int& batch_episodes, int& total_meta_steps, int& eval_interval,
                      bool& meta_adamw) {
  read_field(j, "zeta_query", zeta_query);
  read_field(j, "zeta_support", zeta_support);
  read_field(j, "alpha", alpha);
  read_field(j, "beta", beta);
  read_field(j, "inner_steps", inner_steps);
  read_field(j, "adapt_steps", adapt_steps);
  read_field(j, "batch_episodes", batch_episodes);
  read_field(j, "total_meta_steps", total_meta_steps);
  read_field(j, "eval_interval", eval_interval);
  read_field(j, "meta_adamw", meta_adamw);
}

}  // namespace

ExperimentConfig config_from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  if (j.contains("data")) {
    const auto& d = j["data"];
    read_field(d, "n_types", c.data.n_types);
    read_field(d, "sentences_per_type", c.data.sentences_per_type);
    read_field(d, "seed", c.data.seed);
  }
  if (j.contains("pretrain")) {
    const auto& p = j["pretrain"];
    read_field(p, "enabled", c.pretrain.enabled);
    read_field(p, "n_types", c.pretrain.n_types);
    read_field(p, "sentences_per_type", c.pretrain.sentences_per_type);
    read_field(p, "seed", c.pretrain.seed);
    read_field(p, "steps", c.pretrain.steps);
    read_field(p, "batch", c.pretrain.batch);
    read_field(p, "learning_rate", c.pretrain.learning_rate);
  }
  if (j.contains("split")) {
    const auto& s = j["split"];
    read_field(s, "fractions", c.split.fractions);
    read_field(s, "seed", c.split.seed);
  }
  if (j.contains("episodes")) {
    const auto& e = j["episodes"];
    read_field(e, "n_way", c.episodes.n_way);
    read_field(e, "k_shot", c.episodes.k_shot);
    read_field(e, "query_shots", c.episodes.query_shots);
    read_field(e, "train", c.episodes.train);
    read_field(e, "val", c.episodes.val);
    read_field(e, "test", c.episodes.test);
    read_field(e, "seed", c.episodes.seed);
  }
  if (j.contains("encoder")) read_dims(j["encoder"], c.encoder);
  read_field(j, "classifier_radius", c.classifier_radius);
  if (j.contains("detector")) {
    const auto& d = j["detector"];
    read_common_meta(d, c.detector.zeta_query, c.detector.zeta_support, c.detector.alpha,
                     c.detector.beta, c.detector.inner_steps, c.detector.adapt_steps,
                     c.detector.batch_episodes, c.detector.total_meta_steps,
                     c.detector.eval_interval, c.detector.meta_adamw);
  }
  if (j.contains("classifier")) {
    const auto& d = j["classifier"];
    read_common_meta(d, c.classifier.zeta_query, c.classifier.zeta_support, c.classifier.alpha,
                     c.classifier.beta, c.classifier.inner_steps, c.classifier.adapt_steps,
                     c.classifier.batch_episodes, c.classifier.total_meta_steps,
                     c.classifier.eval_interval, c.classifier.meta_adamw);
    read_field(d, "softmax_over_types", c.classifier.softmax_over_types);
  }
  read_field(j, "referent_variant", c.referent_variant);
  read_field(j, "definitions_path", c.definitions_path);
  read_field(j, "examples_path", c.examples_path);
  read_field(j, "seeds", c.seeds);
  read_field(j, "init_mode", c.init_mode);
  read_field(j, "convergence_epsilon", c.convergence_epsilon);
  read_field(j, "convergence_patience", c.convergence_patience);

  c.detector.encoder = c.encoder;
  c.classifier.encoder = c.encoder;
  c.classifier.encoder.radius = c.classifier_radius;
  c.detector.pretrain_opt.learning_rate = c.pretrain.learning_rate;
  c.detector.pretrain_steps = c.pretrain.steps;
  c.detector.pretrain_batch = c.pretrain.batch;

  if (c.init_mode != "steppingstone" && c.init_mode != "random" && c.init_mode != "both") {
    throw std::invalid_argument("init_mode must be steppingstone|random|both, got \"" +
                                c.init_mode + "\"");
  }
  if (c.init_mode != "random" && !c.pretrain.enabled) {
    throw std::invalid_argument("init_mode \"" + c.init_mode +
                                "\" needs the pretrain stage enabled");
  }
  if (c.seeds.empty()) {
    throw std::invalid_argument("seeds list must be nonempty");
  }
  return c;
}

nlohmann::json config_to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["data"] = {{"n_types", c.data.n_types},
               {"sentences_per_type", c.data.sentences_per_type},
               {"seed", c.data.seed}};
  j["pretrain"] = {{"enabled", c.pretrain.enabled},
                   {"n_types", c.pretrain.n_types},
                   {"sentences_per_type", c.pretrain.sentences_per_type},
                   {"seed", c.pretrain.seed},
                   {"steps", c.pretrain.steps},
                   {"batch", c.pretrain.batch},
                   {"learning_rate", c.pretrain.learning_rate}};
  j["split"] = {{"fractions", c.split.fractions}, {"seed", c.split.seed}};
  j["episodes"] = {{"n_way", c.episodes.n_way},       {"k_shot", c.episodes.k_shot},
                   {"query_shots", c.episodes.query_shots}, {"train", c.episodes.train},
                   {"val", c.episodes.val},           {"test", c.episodes.test},
                   {"seed", c.episodes.seed}};
  j["encoder"] = {{"hash_vocab", c.encoder.hash_vocab},
                  {"width", c.encoder.width},
                  {"radius", c.encoder.radius}};
  j["classifier_radius"] = c.classifier_radius;
  j["detector"] = {{"zeta_query", c.detector.zeta_query},
                   {"zeta_support", c.detector.zeta_support},
                   {"alpha", c.detector.alpha},
                   {"beta", c.detector.beta},
                   {"inner_steps", c.detector.inner_steps},
                   {"adapt_steps", c.detector.adapt_steps},
                   {"batch_episodes", c.detector.batch_episodes},
                   {"total_meta_steps", c.detector.total_meta_steps},
                   {"eval_interval", c.detector.eval_interval},
                   {"meta_adamw", c.detector.meta_adamw}};
  j["classifier"] = {{"zeta_query", c.classifier.zeta_query},
                     {"zeta_support", c.classifier.zeta_support},
                     {"alpha", c.classifier.alpha},
                     {"beta", c.classifier.beta},
                     {"inner_steps", c.classifier.inner_steps},
                     {"adapt_steps", c.classifier.adapt_steps},
                     {"batch_episodes", c.classifier.batch_episodes},
                     {"total_meta_steps", c.classifier.total_meta_steps},
                     {"eval_interval", c.classifier.eval_interval},
                     {"meta_adamw", c.classifier.meta_adamw},
                     {"softmax_over_types", c.classifier.softmax_over_types}};
  j["referent_variant"] = c.referent_variant;
  j["definitions_path"] = c.definitions_path;
  j["examples_path"] = c.examples_path;
  j["seeds"] = c.seeds;
  j["init_mode"] = c.init_mode;
  j["convergence_epsilon"] = c.convergence_epsilon;
  j["convergence_patience"] = c.convergence_patience;
  return j;
}

namespace {

// --- stage helpers ---------------------------------------------------------

bool stage_done(const fs::path& out, const std::string& name) {
  return fs::exists(out / (name + ".done"));
}

void mark_done(const fs::path& out, const std::string& name) {
  std::ofstream marker(out / (name + ".done"));
  marker << "ok\n";
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << j.dump(2) << "\n";
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read " + path.string());
  return nlohmann::json::parse(f);
}

void write_curve(const fs::path& path, const std::vector<std::pair<int, double>>& points) {
  nlohmann::json j;
  j["points"] = nlohmann::json::array();
  for (const auto& [step, score] : points) j["points"].push_back({step, score});
  write_json(path, j);
}

metrics::RunCurve read_curve(const fs::path& path) {
  const nlohmann::json j = read_json(path);
  metrics::RunCurve curve;
  for (const auto& p : j.at("points")) {
    curve.points.emplace_back(p.at(0).get<int>(), p.at(1).get<double>());
  }
  return curve;
}

std::vector<std::pair<int, double>> detector_val_curve(
    const std::vector<detector::TrainLogEntry>& log) {
  std::vector<std::pair<int, double>> points;
  for (const auto& entry : log) {
    if (entry.val_f1 >= 0.0) points.emplace_back(entry.step, entry.val_f1);
  }
  return points;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

nlohmann::json report_cell(const std::vector<double>& values) {
  metrics::Aggregate agg = metrics::aggregate(values);
  return {{"mean", agg.mean},
          {"std", agg.stddev},
          {"cell", metrics::format_mean_std(agg)},
          {"values", values}};
}

nlohmann::json dims_meta(const neural::EncoderDims& dims) {
  return {{"hash_vocab", dims.hash_vocab}, {"width", dims.width}, {"radius", dims.radius}};
}

}  // namespace

ExperimentResult run_full_experiment(const ExperimentConfig& config_in, const std::string& out_dir) {
  ExperimentConfig config = config_in;
  config.detector.encoder = config.encoder;
  config.classifier.encoder = config.encoder;
  config.classifier.encoder.radius = config.classifier_radius;
  config.detector.pretrain_opt.learning_rate = config.pretrain.learning_rate;
  config.detector.pretrain_steps = config.pretrain.steps;
  config.detector.pretrain_batch = config.pretrain.batch;
  if (config.init_mode != "steppingstone" && config.init_mode != "random" &&
      config.init_mode != "both") {
    throw std::invalid_argument("init_mode must be steppingstone|random|both, got \"" +
                                config.init_mode + "\"");
  }
  if (config.init_mode != "random" && !config.pretrain.enabled) {
    throw std::invalid_argument("init_mode \"" + config.init_mode +
                                "\" needs the pretrain stage enabled");
  }
  if (config.seeds.empty()) throw std::invalid_argument("seeds list must be nonempty");

  const fs::path out(out_dir);
  fs::create_directories(out);

  // Config snapshot: written once, must match on resume.
  const nlohmann::json resolved = config_to_json(config);
  const fs::path snapshot_path = out / "config.json";
  if (fs::exists(snapshot_path)) {
    if (read_json(snapshot_path) != resolved) {
      throw std::runtime_error("config does not match the snapshot in " + out_dir +
                               "; use a fresh directory to change configuration");
    }
  } else {
    write_json(snapshot_path, resolved);
  }

  // --- stage: data ---------------------------------------------------------
  const fs::path corpus_path = out / "corpus.jsonl";
  const fs::path splits_path = out / "splits.json";
  corpus::Dataset dataset;
  episodes::ClassSplit split;
  if (stage_done(out, "data")) {
    dataset = corpus::load_dataset(corpus_path.string());
    nlohmann::json sj = read_json(splits_path);
    split.train_classes = sj.at("train").get<std::vector<std::string>>();
    split.dev_classes = sj.at("dev").get<std::vector<std::string>>();
    split.test_classes = sj.at("test").get<std::vector<std::string>>();
  } else {
    dataset = corpus::generate_synthetic_corpus(config.data.n_types,
                                                config.data.sentences_per_type, config.data.seed);
    corpus::write_dataset(dataset, corpus_path.string());
    split = episodes::partition_classes(dataset.class_inventory, config.split.fractions,
                                        config.split.seed);
    write_json(splits_path, {{"train", split.train_classes},
                             {"dev", split.dev_classes},
                             {"test", split.test_classes}});
    mark_done(out, "data");
  }

  // --- stage: episodes -----------------------------------------------------
  const fs::path train_eps_path = out / "episodes_train.jsonl";
  const fs::path val_eps_path = out / "episodes_val.jsonl";
  const fs::path test_eps_path = out / "episodes_test.jsonl";
  std::vector<episodes::Episode> train_eps, val_eps, test_eps;
  if (stage_done(out, "episodes")) {
    train_eps = episodes::load_episodes(train_eps_path.string());
    val_eps = episodes::load_episodes(val_eps_path.string());
    test_eps = episodes::load_episodes(test_eps_path.string());
  } else {
    const auto& e = config.episodes;
    train_eps = episodes::sample_episodes(dataset, split.train_classes, e.n_way, e.k_shot,
                                          e.query_shots, e.train, e.seed);
    val_eps = episodes::sample_episodes(dataset, split.dev_classes, e.n_way, e.k_shot,
                                        e.query_shots, e.val, e.seed + 1000);
    test_eps = episodes::sample_episodes(dataset, split.test_classes, e.n_way, e.k_shot,
                                         e.query_shots, e.test, e.seed + 2000);
    episodes::persist_episodes(train_eps, train_eps_path.string());
    episodes::persist_episodes(val_eps, val_eps_path.string());
    episodes::persist_episodes(test_eps, test_eps_path.string());
    mark_done(out, "episodes");
  }

  // --- stage: pretrain -----------------------------------------------------
  const bool wants_steppingstone = config.init_mode != "random";
  const fs::path ssd_path = out / "steppingstone.ckpt.json";
  detector::SpanDetectorParams steppingstone;
  if (wants_steppingstone) {
    if (stage_done(out, "pretrain")) {
      neural::Checkpoint ckpt = neural::load_checkpoint(ssd_path.string());
      steppingstone = {config.encoder, std::move(ckpt.params)};
    } else {
      corpus::Dataset pre = corpus::generate_synthetic_corpus(
          config.pretrain.n_types, config.pretrain.sentences_per_type, config.pretrain.seed);
      detector::PretrainResult res =
          detector::pretrain_steppingstone(pre, config.detector, config.pretrain.seed);
      steppingstone = std::move(res.params);
      neural::save_checkpoint(steppingstone.values, "steppingstone", dims_meta(config.encoder),
                              ssd_path.string());
      nlohmann::json log = nlohmann::json::array();
      for (const auto& entry : res.log) log.push_back({{"step", entry.step}, {"loss", entry.loss}});
      write_json(out / "pretrain_log.json", log);
      mark_done(out, "pretrain");
    }
  }

  // Referent machinery (offline).
  referents::ClientConfig client;
  client.live = false;
  referents::DefinitionCache cache = referents::DefinitionCache::load(config.definitions_path);
  const referents::ReferentVariant variant = referents::variant_from_string(config.referent_variant);
  std::map<std::string, std::vector<std::string>> examples;
  if (variant == referents::ReferentVariant::Example) {
    examples = referents::load_example_fixtures(config.examples_path);
  }
  classifier::ReferentProvider provider = referents::make_referent_provider(
      variant, client, cache, examples, config.data.seed, config.classifier.encoder.width);

  std::vector<std::string> arms;
  if (config.init_mode == "both") {
    arms = {"steppingstone", "random"};
  } else {
    arms = {config.init_mode};
  }

  // --- per-seed stages -----------------------------------------------------
  ExperimentResult result;
  for (std::uint64_t seed : config.seeds) {
    const std::string seed_str = std::to_string(seed);

    for (const std::string& arm : arms) {
      const std::string stage = "detector_" + arm + "_" + seed_str;
      const fs::path ckpt_path = out / (stage + ".ckpt.json");
      const fs::path curve_path = out / ("detector_curve_" + arm + "_" + seed_str + ".json");
      if (stage_done(out, stage)) continue;
      detector::SpanDetectorParams init =
          arm == "steppingstone" ? steppingstone : detector::init_detector(config.encoder, seed);
      detector::MetaTrainResult mt =
          detector::meta_train_detector(init, train_eps, val_eps, config.detector, seed);
      nlohmann::json meta = dims_meta(config.encoder);
      meta["arm"] = arm;
      meta["seed"] = seed;
      neural::save_checkpoint(mt.params.values, "meta-trained-detector", meta, ckpt_path.string());
      write_curve(curve_path, detector_val_curve(mt.log));
      mark_done(out, stage);
    }

    {
      const std::string stage = "classifier_" + seed_str;
      const fs::path ckpt_path = out / (stage + ".ckpt.json");
      const fs::path curve_path = out / ("classifier_curve_" + seed_str + ".json");
      if (!stage_done(out, stage)) {
        classifier::ClassifierParams init =
            classifier::init_classifier(config.classifier.encoder, seed);
        classifier::ClassifierTrainResult ct = classifier::meta_train_classifier(
            init, train_eps, val_eps, provider, config.classifier, seed);
        nlohmann::json meta = dims_meta(config.classifier.encoder);
        meta["seed"] = seed;
        meta["referent_variant"] = config.referent_variant;
        neural::save_checkpoint(ct.params.values, "entity-classifier", meta, ckpt_path.string());
        write_curve(curve_path, ct.val_curve);
        mark_done(out, stage);
      }
    }

    {
      const std::string stage = "evaluate_" + seed_str;
      const fs::path eval_path = out / ("eval_" + seed_str + ".json");
      if (!stage_done(out, stage)) {
        const std::string primary_arm = wants_steppingstone ? "steppingstone" : "random";
        neural::Checkpoint dc = neural::load_checkpoint(
            (out / ("detector_" + primary_arm + "_" + seed_str + ".ckpt.json")).string());
        neural::Checkpoint cc =
            neural::load_checkpoint((out / ("classifier_" + seed_str + ".ckpt.json")).string());
        detector::SpanDetectorParams det{config.encoder, std::move(dc.params)};
        classifier::ClassifierParams cls{config.classifier.encoder, std::move(cc.params)};

        std::vector<std::vector<tagging::Span>> pred_typed, gold_typed;
        std::vector<std::vector<tagging::Span>> pred_untyped, gold_untyped;
        for (const episodes::Episode& ep : test_eps) {
          auto detected = detector::adapt_and_detect(det, ep, config.detector);
          auto typed = classifier::adapt_and_classify(cls, ep, provider(ep.classes), detected,
                                                      config.classifier);
          for (std::size_t i = 0; i < ep.query.size(); ++i) {
            std::vector<tagging::Span> gold =
                ep.query[i].spans ? *ep.query[i].spans : std::vector<tagging::Span>{};
            pred_typed.push_back(typed[i]);
            gold_typed.push_back(gold);
            pred_untyped.push_back(detected[i]);
            gold_untyped.push_back(std::move(gold));
          }
        }
        nlohmann::json eval{
            {"typed", metrics::report_to_json(metrics::micro_f1(pred_typed, gold_typed, false))},
            {"span_only",
             metrics::report_to_json(metrics::micro_f1(pred_untyped, gold_untyped, true))}};
        write_json(eval_path, eval);
        mark_done(out, stage);
      }
    }
  }

  // --- stage: aggregate ----------------------------------------------------
  std::vector<double> typed_f1, typed_p, typed_r, span_f1;
  std::map<std::string, std::vector<double>> convergence;  // arm -> per-seed steps
  for (std::uint64_t seed : config.seeds) {
    const std::string seed_str = std::to_string(seed);
    nlohmann::json ev = read_json(out / ("eval_" + seed_str + ".json"));
    SeedOutcome outcome;
    outcome.seed = seed;
    outcome.typed_f1 = ev.at("typed").at("f1").get<double>();
    outcome.typed_precision = ev.at("typed").at("precision").get<double>();
    outcome.typed_recall = ev.at("typed").at("recall").get<double>();
    outcome.span_f1 = ev.at("span_only").at("f1").get<double>();
    typed_f1.push_back(outcome.typed_f1);
    typed_p.push_back(outcome.typed_precision);
    typed_r.push_back(outcome.typed_recall);
    span_f1.push_back(outcome.span_f1);
    for (const std::string& arm : arms) {
      metrics::RunCurve curve =
          read_curve(out / ("detector_curve_" + arm + "_" + seed_str + ".json"));
      const int steps =
          metrics::convergence_steps(curve, config.convergence_epsilon, config.convergence_patience);
      convergence[arm].push_back(static_cast<double>(steps));
      if (arm == "steppingstone") outcome.convergence_steppingstone = steps;
      if (arm == "random") outcome.convergence_random = steps;
    }
    result.per_seed.push_back(outcome);
  }

  nlohmann::json report;
  report["seeds"] = config.seeds;
  report["typed_f1"] = report_cell(typed_f1);
  report["typed_precision"] = report_cell(typed_p);
  report["typed_recall"] = report_cell(typed_r);
  report["span_f1"] = report_cell(span_f1);
  for (const auto& [arm, steps] : convergence) {
    nlohmann::json cell = report_cell(steps);
    cell["median"] = median(steps);
    report["convergence"][arm] = std::move(cell);
  }

  // Plain-text table, paper-style mean±std cells.
  std::string text;
  {
    char line[256];
    text += "Pipeline results (" + std::to_string(config.seeds.size()) + " seeds)\n";
    text += "metric             mean+/-std\n";
    std::snprintf(line, sizeof(line), "typed F1           %s\n",
                  report["typed_f1"]["cell"].get<std::string>().c_str());
    text += line;
    std::snprintf(line, sizeof(line), "typed precision    %s\n",
                  report["typed_precision"]["cell"].get<std::string>().c_str());
    text += line;
    std::snprintf(line, sizeof(line), "typed recall       %s\n",
                  report["typed_recall"]["cell"].get<std::string>().c_str());
    text += line;
    std::snprintf(line, sizeof(line), "span-only F1       %s\n",
                  report["span_f1"]["cell"].get<std::string>().c_str());
    text += line;
    if (!convergence.empty()) {
      text += "\nConvergence steps comparison between span detectors\n";
      text += "Span detector                   Convergence steps\n";
      for (const auto& [arm, steps] : convergence) {
        const std::string label =
            arm == "steppingstone" ? "steppingstone initialization" : "random initialization";
        std::snprintf(line, sizeof(line), "%-30s  %s (median %.0f)\n", label.c_str(),
                      report["convergence"][arm]["cell"].get<std::string>().c_str(),
                      median(steps));
        text += line;
      }
    }
  }
  result.report = report;
  result.report_text = text;
  write_json(out / "report.json", report);
  {
    std::ofstream f(out / "report.txt");
    f << text;
  }
  mark_done(out, "aggregate");
  return result;
}

}  // namespace fewner::experiment
