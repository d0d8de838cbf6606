#include "fewner/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "fewner/classifier.hpp"
#include "fewner/corpus.hpp"
#include "fewner/detector.hpp"
#include "fewner/episodes.hpp"
#include "fewner/experiment.hpp"
#include "fewner/llm_baseline.hpp"
#include "fewner/metrics.hpp"
#include "fewner/neural.hpp"
#include "fewner/referents.hpp"

namespace fewner::cli {
namespace {

// --- small shared helpers ----------------------------------------------------

void write_json_file(const std::string& path, const nlohmann::json& j) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << j.dump(2) << "\n";
}

std::string read_text_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read " + path);
  std::ostringstream buf;
  buf << f.rdbuf();
  return buf.str();
}

nlohmann::json dims_meta(const neural::EncoderDims& dims) {
  return {{"hash_vocab", dims.hash_vocab}, {"width", dims.width}, {"radius", dims.radius}};
}

neural::EncoderDims dims_from_meta(const nlohmann::json& meta, neural::EncoderDims fallback) {
  if (meta.contains("hash_vocab")) fallback.hash_vocab = meta["hash_vocab"].get<std::size_t>();
  if (meta.contains("width")) fallback.width = meta["width"].get<std::size_t>();
  if (meta.contains("radius")) fallback.radius = meta["radius"].get<std::size_t>();
  return fallback;
}

void attach_encoder_flags(CLI::App* cmd, neural::EncoderDims& dims) {
  cmd->add_option("--hash-vocab", dims.hash_vocab, "hashed embedding vocabulary size");
  cmd->add_option("--width", dims.width, "token representation width");
  cmd->add_option("--radius", dims.radius, "context window radius");
}

template <typename Cfg>
void attach_meta_flags(CLI::App* cmd, Cfg& cfg) {
  cmd->add_option("--alpha", cfg.alpha, "inner-loop learning rate");
  cmd->add_option("--beta", cfg.beta, "meta learning rate");
  cmd->add_option("--inner-steps", cfg.inner_steps, "inner-loop steps per episode");
  cmd->add_option("--adapt-steps", cfg.adapt_steps, "fine-tune steps at test time (-1 = inner)");
  cmd->add_option("--batch-episodes", cfg.batch_episodes, "episodes per meta step");
  cmd->add_option("--total-steps", cfg.total_meta_steps, "meta-training steps");
  cmd->add_option("--eval-interval", cfg.eval_interval, "validation interval in meta steps");
  cmd->add_option("--zeta-support", cfg.zeta_support, "max-loss weight on support batches");
  cmd->add_option("--zeta-query", cfg.zeta_query, "max-loss weight on query batches");
  cmd->add_flag("--meta-adamw", cfg.meta_adamw, "AdamW for the meta update instead of SGD");
}

// --- hyperparameter grid -----------------------------------------------------

struct GridAxis {
  std::string name;
  std::vector<double> values;
};

// "alpha=0.01,0.05;inner_steps=1,3" -> axes in the given order.
std::vector<GridAxis> parse_grid(const std::string& text) {
  std::vector<GridAxis> axes;
  std::stringstream outer(text);
  std::string axis_text;
  while (std::getline(outer, axis_text, ';')) {
    if (axis_text.empty()) continue;
    const auto eq = axis_text.find('=');
    if (eq == std::string::npos) {
      throw CLI::ValidationError("--grid", "expected name=v1,v2,... in \"" + axis_text + "\"");
    }
    GridAxis axis;
    axis.name = axis_text.substr(0, eq);
    std::stringstream inner(axis_text.substr(eq + 1));
    std::string value_text;
    while (std::getline(inner, value_text, ',')) {
      if (!value_text.empty()) axis.values.push_back(std::stod(value_text));
    }
    if (axis.values.empty()) {
      throw CLI::ValidationError("--grid", "no values for axis \"" + axis.name + "\"");
    }
    axes.push_back(std::move(axis));
  }
  return axes;
}

template <typename Cfg>
void set_hyper(Cfg& cfg, const std::string& name, double v) {
  if (name == "alpha") {
    cfg.alpha = v;
  } else if (name == "beta") {
    cfg.beta = v;
  } else if (name == "inner_steps") {
    cfg.inner_steps = static_cast<int>(std::lround(v));
  } else if (name == "zeta_support") {
    cfg.zeta_support = v;
  } else if (name == "zeta_query") {
    cfg.zeta_query = v;
  } else if (name == "batch_episodes") {
    cfg.batch_episodes = static_cast<int>(std::lround(v));
  } else if (name == "total_steps") {
    cfg.total_meta_steps = static_cast<int>(std::lround(v));
  } else {
    throw CLI::ValidationError("--grid", "unknown hyperparameter \"" + name + "\"");
  }
}

// All axis-value combinations, later axes varying fastest.
std::vector<std::vector<double>> grid_combos(const std::vector<GridAxis>& axes) {
  std::vector<std::vector<double>> combos{{}};
  for (const GridAxis& axis : axes) {
    std::vector<std::vector<double>> next;
    for (const auto& combo : combos) {
      for (double v : axis.values) {
        auto extended = combo;
        extended.push_back(v);
        next.push_back(std::move(extended));
      }
    }
    combos = std::move(next);
  }
  return combos;
}

std::string combo_label(const std::vector<GridAxis>& axes, const std::vector<double>& combo) {
  std::string label;
  for (std::size_t i = 0; i < axes.size(); ++i) {
    if (!label.empty()) label += " ";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%s=%g", axes[i].name.c_str(), combo[i]);
    label += buf;
  }
  return label.empty() ? "(defaults)" : label;
}

referents::ReferentVariant parse_variant(const std::string& name) {
  try {
    return referents::variant_from_string(name);
  } catch (const std::exception& e) {
    throw CLI::ValidationError("--variant", e.what());
  }
}

classifier::ReferentProvider build_provider(referents::ReferentVariant variant,
                                            const referents::ClientConfig& client,
                                            referents::DefinitionCache& cache,
                                            const std::string& examples_path, std::uint64_t seed,
                                            std::size_t width) {
  std::map<std::string, std::vector<std::string>> examples;
  if (variant == referents::ReferentVariant::Example) {
    examples = referents::load_example_fixtures(examples_path);
  }
  return referents::make_referent_provider(variant, client, cache, std::move(examples), seed,
                                           width);
}

// --- per-subcommand option bundles (owned by dispatch's stack frame) ---------

struct IngestOpts {
  std::string in, out, doc_id;
};

struct SynthOpts {
  int n_types = 30, sentences_per_type = 30;
  std::uint64_t seed = 7;
  std::string out, definitions, examples;
};

struct PretrainOpts {
  std::string data, out, log;
  neural::EncoderDims dims;
  int steps = 200, batch = 16;
  double lr = 1e-2, warmup = 0.1;
  std::uint64_t seed = 11;
};

struct SampleOpts {
  std::string data, out, classes_csv;
  int n_way = 5, k_shot = 1, query_shots = 2, count = 10;
  std::uint64_t seed = 17;
};

struct TrainDetectorOpts {
  std::string train, val, init, out, curve, grid;
  neural::EncoderDims dims;
  detector::DetectorConfig cfg;
  std::uint64_t seed = 0;
};

struct TrainClassifierOpts {
  std::string train, val, init, out, curve, grid;
  std::string definitions = "data/fixtures/definitions.jsonl";
  std::string examples = "data/fixtures/examples.jsonl";
  std::string variant = "mcs";
  neural::EncoderDims dims;
  classifier::ClassifierConfig cfg;
  std::uint64_t seed = 0;
};

struct EvaluateOpts {
  std::string detector_ckpt, classifier_ckpt, episodes, out;
  std::string definitions = "data/fixtures/definitions.jsonl";
  std::string examples = "data/fixtures/examples.jsonl";
  std::string variant = "mcs";
  neural::EncoderDims dims;
  double alpha = 0.05, zeta_support = 5.0;
  int adapt_steps = 3;
};

struct AblateOpts {
  std::string train, val, episodes, out;
  std::string definitions = "data/fixtures/definitions.jsonl";
  std::string examples = "data/fixtures/examples.jsonl";
  std::vector<std::string> variants{"mcs", "random", "name", "example"};
  std::vector<std::uint64_t> seeds{171, 354, 550, 667, 985};
  neural::EncoderDims dims;
  classifier::ClassifierConfig cfg;
};

struct BaselineOpts {
  std::string episodes, responses, out;
  bool live = false;
};

struct GradcheckOpts {
  std::uint64_t seed = 0;
  std::size_t points = 20;
  double tolerance = 1e-4, step = 1e-4;
};

struct ExperimentOpts {
  std::string out, config_path, init_mode, referent_variant, definitions, examples;
  std::vector<std::uint64_t> seeds;
  bool no_steppingstone = false;
};

// --- subcommand bodies --------------------------------------------------------

void run_ingest(const IngestOpts& o) {
  corpus::MarkupDocument doc;
  doc.doc_id = o.doc_id.empty() ? std::filesystem::path(o.in).filename().string() : o.doc_id;
  doc.text = read_text_file(o.in);
  corpus::AnnotationResult result = corpus::annotate_hyperlinks(doc);
  std::set<std::string> types;
  for (const auto& s : result.sentences) {
    if (s.spans) {
      for (const auto& span : *s.spans) types.insert(span.type);
    }
  }
  corpus::Dataset dataset{std::move(result.sentences), {types.begin(), types.end()}};
  corpus::write_dataset(dataset, o.out);
  std::cout << "ingested " << dataset.sentences.size() << " sentences ("
            << result.discarded << " discarded, " << dataset.class_inventory.size()
            << " entity types) -> " << o.out << "\n";
}

void run_synth(const SynthOpts& o) {
  corpus::Dataset dataset =
      corpus::generate_synthetic_corpus(o.n_types, o.sentences_per_type, o.seed);
  corpus::write_dataset(dataset, o.out);
  if (!o.definitions.empty()) {
    referents::DefinitionCache cache;
    for (const auto& [type, text] : corpus::derive_type_descriptions(dataset)) {
      cache.put({type, text, "fixture", std::nullopt});
    }
    cache.save(o.definitions);
  }
  if (!o.examples.empty()) {
    std::ofstream f(o.examples);
    if (!f) throw std::runtime_error("cannot write " + o.examples);
    for (const auto& [type, mentions] : corpus::derive_type_examples(dataset)) {
      f << nlohmann::json{{"type", type}, {"examples", mentions}}.dump() << "\n";
    }
  }
  std::cout << "generated " << dataset.sentences.size() << " sentences over "
            << dataset.class_inventory.size() << " types -> " << o.out << "\n";
}

void run_pretrain(const PretrainOpts& o) {
  corpus::Dataset dataset = corpus::load_dataset(o.data);
  detector::DetectorConfig cfg;
  cfg.encoder = o.dims;
  cfg.pretrain_steps = o.steps;
  cfg.pretrain_batch = o.batch;
  cfg.pretrain_opt.learning_rate = o.lr;
  cfg.pretrain_opt.warmup_fraction = o.warmup;
  detector::PretrainResult result = detector::pretrain_steppingstone(dataset, cfg, o.seed);
  neural::save_checkpoint(result.params.values, "steppingstone", dims_meta(o.dims), o.out);
  if (!o.log.empty()) {
    nlohmann::json log = nlohmann::json::array();
    for (const auto& e : result.log) log.push_back({{"step", e.step}, {"loss", e.loss}});
    write_json_file(o.log, log);
  }
  std::cout << "pretrained span detector for " << o.steps << " steps, final loss "
            << (result.log.empty() ? 0.0 : result.log.back().loss) << " -> " << o.out << "\n";
}

void run_sample(const SampleOpts& o) {
  corpus::Dataset dataset = corpus::load_dataset(o.data);
  std::vector<std::string> pool;
  if (o.classes_csv.empty()) {
    pool = dataset.class_inventory;
  } else {
    std::stringstream ss(o.classes_csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (!item.empty()) pool.push_back(item);
    }
  }
  auto eps = episodes::sample_episodes(dataset, pool, o.n_way, o.k_shot, o.query_shots, o.count,
                                       o.seed);
  episodes::persist_episodes(eps, o.out);
  std::cout << "sampled " << eps.size() << " episodes (" << o.n_way << "-way " << o.k_shot
            << "-shot, " << o.query_shots << " query) -> " << o.out << "\n";
}

void write_curve_file(const std::string& path, const std::vector<std::pair<int, double>>& points) {
  nlohmann::json j;
  j["points"] = nlohmann::json::array();
  for (const auto& [step, score] : points) j["points"].push_back({step, score});
  write_json_file(path, j);
}

void run_train_detector(const TrainDetectorOpts& o) {
  auto train_eps = episodes::load_episodes(o.train);
  auto val_eps = episodes::load_episodes(o.val);

  neural::EncoderDims dims = o.dims;
  detector::SpanDetectorParams init;
  if (!o.init.empty()) {
    neural::Checkpoint ckpt = neural::load_checkpoint(o.init);
    dims = dims_from_meta(ckpt.meta, dims);
    init = {dims, std::move(ckpt.params)};
  } else {
    init = detector::init_detector(dims, o.seed);
  }
  detector::DetectorConfig cfg = o.cfg;
  cfg.encoder = dims;

  const auto axes = parse_grid(o.grid);
  detector::MetaTrainResult best;
  double best_f1 = -1.0;
  std::string best_label;
  for (const auto& combo : grid_combos(axes)) {
    detector::DetectorConfig trial = cfg;
    for (std::size_t i = 0; i < axes.size(); ++i) set_hyper(trial, axes[i].name, combo[i]);
    detector::MetaTrainResult result =
        detector::meta_train_detector(init, train_eps, val_eps, trial, o.seed);
    const double f1 = detector::evaluate_span_f1(result.params, val_eps, trial);
    if (!axes.empty()) {
      std::cout << "grid " << combo_label(axes, combo) << " -> val span F1 " << f1 << "\n";
    }
    if (f1 > best_f1) {
      best_f1 = f1;
      best = std::move(result);
      best_label = combo_label(axes, combo);
    }
  }

  nlohmann::json meta = dims_meta(dims);
  meta["seed"] = o.seed;
  if (!o.init.empty()) meta["init"] = o.init;
  neural::save_checkpoint(best.params.values, "meta-trained-detector", meta, o.out);
  if (!o.curve.empty()) {
    std::vector<std::pair<int, double>> points;
    for (const auto& e : best.log) {
      if (e.val_f1 >= 0.0) points.emplace_back(e.step, e.val_f1);
    }
    write_curve_file(o.curve, points);
  }
  std::cout << "meta-trained span detector (" << best_label << "), val span F1 " << best_f1
            << " -> " << o.out << "\n";
}

void run_train_classifier(const TrainClassifierOpts& o, const referents::ClientConfig& client) {
  auto train_eps = episodes::load_episodes(o.train);
  auto val_eps = episodes::load_episodes(o.val);

  neural::EncoderDims dims = o.dims;
  classifier::ClassifierParams init;
  if (!o.init.empty()) {
    neural::Checkpoint ckpt = neural::load_checkpoint(o.init);
    dims = dims_from_meta(ckpt.meta, dims);
    init = {dims, std::move(ckpt.params)};
  } else {
    init = classifier::init_classifier(dims, o.seed);
  }
  classifier::ClassifierConfig cfg = o.cfg;
  cfg.encoder = dims;

  referents::DefinitionCache cache = referents::DefinitionCache::load(o.definitions);
  const auto variant = parse_variant(o.variant);
  classifier::ReferentProvider provider =
      build_provider(variant, client, cache, o.examples, o.seed, dims.width);

  const auto axes = parse_grid(o.grid);
  classifier::ClassifierTrainResult best;
  double best_f1 = -1.0;
  std::string best_label;
  for (const auto& combo : grid_combos(axes)) {
    classifier::ClassifierConfig trial = cfg;
    for (std::size_t i = 0; i < axes.size(); ++i) set_hyper(trial, axes[i].name, combo[i]);
    classifier::ClassifierTrainResult result =
        classifier::meta_train_classifier(init, train_eps, val_eps, provider, trial, o.seed);
    const double f1 =
        classifier::evaluate_typed_f1_on_gold_spans(result.params, val_eps, provider, trial);
    if (!axes.empty()) {
      std::cout << "grid " << combo_label(axes, combo) << " -> val typed F1 " << f1 << "\n";
    }
    if (f1 > best_f1) {
      best_f1 = f1;
      best = std::move(result);
      best_label = combo_label(axes, combo);
    }
  }

  nlohmann::json meta = dims_meta(dims);
  meta["seed"] = o.seed;
  meta["referent_variant"] = o.variant;
  neural::save_checkpoint(best.params.values, "entity-classifier", meta, o.out);
  if (!o.curve.empty()) write_curve_file(o.curve, best.val_curve);
  std::cout << "meta-trained entity classifier (" << best_label << ", " << o.variant
            << " referents), val typed F1 " << best_f1 << " -> " << o.out << "\n";
}

void run_evaluate(const EvaluateOpts& o, const referents::ClientConfig& client) {
  auto eps = episodes::load_episodes(o.episodes);
  neural::Checkpoint dc = neural::load_checkpoint(o.detector_ckpt);
  neural::Checkpoint cc = neural::load_checkpoint(o.classifier_ckpt);
  const neural::EncoderDims det_dims = dims_from_meta(dc.meta, o.dims);
  const neural::EncoderDims cls_dims = dims_from_meta(cc.meta, o.dims);
  detector::SpanDetectorParams det{det_dims, std::move(dc.params)};
  classifier::ClassifierParams cls{cls_dims, std::move(cc.params)};

  detector::DetectorConfig det_cfg;
  det_cfg.encoder = det_dims;
  det_cfg.alpha = o.alpha;
  det_cfg.adapt_steps = o.adapt_steps;
  det_cfg.zeta_support = o.zeta_support;
  classifier::ClassifierConfig cls_cfg;
  cls_cfg.encoder = cls_dims;
  cls_cfg.alpha = o.alpha;
  cls_cfg.adapt_steps = o.adapt_steps;
  cls_cfg.zeta_support = o.zeta_support;

  referents::DefinitionCache cache = referents::DefinitionCache::load(o.definitions);
  const auto variant = parse_variant(o.variant);
  classifier::ReferentProvider provider =
      build_provider(variant, client, cache, o.examples, 0, cls_dims.width);

  std::vector<std::vector<tagging::Span>> pred_typed, gold_typed, pred_untyped, gold_untyped;
  for (const auto& ep : eps) {
    auto detected = detector::adapt_and_detect(det, ep, det_cfg);
    auto typed = classifier::adapt_and_classify(cls, ep, provider(ep.classes), detected, cls_cfg);
    for (std::size_t i = 0; i < ep.query.size(); ++i) {
      std::vector<tagging::Span> gold =
          ep.query[i].spans ? *ep.query[i].spans : std::vector<tagging::Span>{};
      pred_typed.push_back(typed[i]);
      gold_typed.push_back(gold);
      pred_untyped.push_back(detected[i]);
      gold_untyped.push_back(std::move(gold));
    }
  }
  metrics::EvalReport typed = metrics::micro_f1(pred_typed, gold_typed, false);
  metrics::EvalReport span_only = metrics::micro_f1(pred_untyped, gold_untyped, true);
  nlohmann::json report{{"typed", metrics::report_to_json(typed)},
                        {"span_only", metrics::report_to_json(span_only)}};
  if (!o.out.empty()) write_json_file(o.out, report);
  std::cout << report.dump(2) << "\n";
  std::cout << "evaluated " << eps.size() << " episodes: typed F1 " << typed.f1
            << ", span-only F1 " << span_only.f1 << "\n";
}

void run_ablate(const AblateOpts& o, const referents::ClientConfig& client) {
  auto train_eps = episodes::load_episodes(o.train);
  auto val_eps = episodes::load_episodes(o.val);
  auto test_eps = episodes::load_episodes(o.episodes);
  classifier::ClassifierConfig cfg = o.cfg;
  cfg.encoder = o.dims;

  referents::DefinitionCache cache = referents::DefinitionCache::load(o.definitions);

  nlohmann::json rows = nlohmann::json::object();
  std::string text = "Entity type referent ablation (typed F1 on gold spans, " +
                     std::to_string(o.seeds.size()) + " seeds)\n";
  text += "referent      typed F1\n";
  for (const std::string& name : o.variants) {
    const auto variant = parse_variant(name);
    std::vector<double> scores;
    for (std::uint64_t seed : o.seeds) {
      classifier::ReferentProvider provider =
          build_provider(variant, client, cache, o.examples, seed, o.dims.width);
      classifier::ClassifierParams init = classifier::init_classifier(o.dims, seed);
      classifier::ClassifierTrainResult result =
          classifier::meta_train_classifier(init, train_eps, val_eps, provider, cfg, seed);
      scores.push_back(
          classifier::evaluate_typed_f1_on_gold_spans(result.params, test_eps, provider, cfg));
    }
    metrics::Aggregate agg = metrics::aggregate(scores);
    rows[name] = {{"mean", agg.mean},
                  {"std", agg.stddev},
                  {"cell", metrics::format_mean_std(agg)},
                  {"values", scores}};
    char line[128];
    std::snprintf(line, sizeof(line), "%-12s  %s\n", name.c_str(),
                  metrics::format_mean_std(agg).c_str());
    text += line;
  }
  nlohmann::json report{{"rows", rows}, {"seeds", o.seeds}, {"metric", "typed_f1_gold_spans"}};
  if (!o.out.empty()) {
    write_json_file(o.out, report);
    const std::string txt_path = o.out + ".txt";
    std::ofstream f(txt_path);
    f << text;
  }
  std::cout << text;
}

void run_baseline(const BaselineOpts& o, const referents::ClientConfig& client) {
  auto eps = episodes::load_episodes(o.episodes);
  std::map<int, std::string> responses;
  if (o.live) {
    std::vector<std::string> raw = llm::generate_live_responses(eps, client);
    std::ofstream f(o.responses);
    if (!f) throw std::runtime_error("cannot write " + o.responses);
    for (std::size_t i = 0; i < raw.size(); ++i) {
      nlohmann::json rec{{"episode_index", static_cast<int>(i)}, {"response", raw[i]}};
      f << rec.dump() << "\n";
      responses[static_cast<int>(i)] = raw[i];
    }
  } else {
    responses = llm::load_response_fixtures(o.responses);
  }
  llm::BaselineResult result = llm::evaluate_llm_baseline(eps, responses);
  nlohmann::json report{{"report", metrics::report_to_json(result.report)},
                        {"flagged_sentences", result.flagged_sentences}};
  if (!o.out.empty()) write_json_file(o.out, report);
  std::cout << "in-context baseline over " << eps.size() << " episodes: typed F1 "
            << result.report.f1 << " (precision " << result.report.precision << ", recall "
            << result.report.recall << "), " << result.flagged_sentences
            << " sentences fell back to all-O\n";
}

void run_gradcheck(const GradcheckOpts& o) {
  const neural::EncoderDims dims{64, 8, 1};
  corpus::Dataset data = corpus::generate_synthetic_corpus(4, 3, o.seed);
  const std::span<const corpus::LabeledSentence> batch(data.sentences.data(),
                                                       std::min<std::size_t>(4, data.sentences.size()));

  bool all_ok = true;
  auto run_one = [&](const std::string& name, const neural::GradCheckReport& report) {
    const bool ok = report.pass(o.tolerance);
    all_ok = all_ok && ok;
    std::printf("%-16s max relative error %.3e at %s[%zu] over %zu coordinates: %s\n",
                name.c_str(), report.max_rel_error, report.worst_array.c_str(),
                report.worst_index, report.checked_coordinates, ok ? "ok" : "FAIL");
  };

  {
    detector::SpanDetectorParams params = detector::init_detector(dims, o.seed);
    auto loss = [&](const neural::ParamVector& pv,
                    const std::span<const corpus::LabeledSentence>& b) {
      return detector::detector_batch_loss(pv, dims, b, 2.0);
    };
    run_one("detector_loss",
            neural::finite_diff_check(loss, params.values, batch, o.step, o.points, o.seed));
  }
  {
    classifier::ClassifierParams params = classifier::init_classifier(dims, o.seed);
    std::vector<classifier::ReferentInput> refs;
    for (const std::string& type : data.class_inventory) {
      refs.push_back({type, {type, "entity", "definition"}, std::nullopt});
    }
    auto loss = [&](const neural::ParamVector& pv,
                    const std::span<const corpus::LabeledSentence>& b) {
      return classifier::classifier_batch_loss(pv, dims, b, refs, 2.0);
    };
    run_one("classifier_loss",
            neural::finite_diff_check(loss, params.values, batch, o.step, o.points, o.seed + 1));
  }
  {
    std::mt19937_64 rng(o.seed);
    neural::ParamVector pv;
    neural::append_encoder_arrays(pv, dims, "", rng);
    const std::vector<std::string>& tokens = data.sentences.front().tokens;
    auto loss = [&](const neural::ParamVector& p, const std::vector<std::string>& toks) {
      std::vector<double> H = neural::encode_tokens(p, dims, "", toks);
      double value = 0.0;
      for (double h : H) value += 0.5 * h * h;
      neural::LossValue out{value, neural::zeros_like(p)};
      neural::encode_tokens_backward(p, dims, "", toks, H, H, out.grad);
      return out;
    };
    run_one("encode_tokens",
            neural::finite_diff_check(loss, pv, tokens, o.step, o.points, o.seed + 2));
  }
  if (!all_ok) throw std::runtime_error("gradient check exceeded tolerance");
  std::cout << "all gradient checks passed (tolerance " << o.tolerance << ")\n";
}

void run_experiment_cmd(const ExperimentOpts& o, bool init_mode_set, bool variant_set,
                        bool seeds_set, bool definitions_set, bool examples_set) {
  nlohmann::json overrides = nlohmann::json::object();
  if (!o.config_path.empty()) {
    std::ifstream f(o.config_path);
    if (!f) throw std::runtime_error("cannot read " + o.config_path);
    overrides = nlohmann::json::parse(f);
  }
  experiment::ExperimentConfig cfg = experiment::config_from_json(overrides);
  if (o.no_steppingstone) cfg.init_mode = "random";
  if (init_mode_set) cfg.init_mode = o.init_mode;
  if (variant_set) cfg.referent_variant = o.referent_variant;
  if (seeds_set) cfg.seeds = o.seeds;
  if (definitions_set) cfg.definitions_path = o.definitions;
  if (examples_set) cfg.examples_path = o.examples;
  experiment::ExperimentResult result = experiment::run_full_experiment(cfg, o.out);
  std::cout << result.report_text << "artifacts in " << o.out << "\n";
}

}  // namespace

int dispatch(std::vector<std::string> args) {
  CLI::App app{"few-shot NER pipeline: span detection + referent-grounded entity typing"};
  app.require_subcommand(1);
  bool offline = false;
  app.add_flag("--offline", offline, "forbid all network access");

  referents::ClientConfig client;  // live=false unless a subcommand enables it

  IngestOpts ingest;
  {
    auto* cmd = app.add_subcommand("ingest", "hyperlink-annotated text -> JSON-lines dataset");
    cmd->add_option("--in", ingest.in, "marked-up text file")->required()->check(CLI::ExistingFile);
    cmd->add_option("--out", ingest.out, "output dataset path")->required();
    cmd->add_option("--doc-id", ingest.doc_id, "document id for error messages");
    cmd->callback([&] { run_ingest(ingest); });
  }

  SynthOpts synth;
  {
    auto* cmd = app.add_subcommand("synth", "generate the separable synthetic corpus");
    cmd->add_option("--n-types", synth.n_types, "entity classes");
    cmd->add_option("--sentences-per-type", synth.sentences_per_type, "sentences per class");
    cmd->add_option("--seed", synth.seed, "generator seed");
    cmd->add_option("--out", synth.out, "output dataset path")->required();
    cmd->add_option("--definitions", synth.definitions,
                    "also write span-vocabulary definitions (JSON lines)");
    cmd->add_option("--examples", synth.examples,
                    "also write span example mentions (JSON lines)");
    cmd->callback([&] { run_synth(synth); });
  }

  PretrainOpts pretrain;
  {
    auto* cmd = app.add_subcommand("pretrain-ssd", "supervised span-detector pretraining");
    cmd->add_option("--data", pretrain.data, "training dataset")->required()->check(CLI::ExistingFile);
    cmd->add_option("--out", pretrain.out, "output checkpoint path")->required();
    cmd->add_option("--log", pretrain.log, "optional loss-log JSON path");
    attach_encoder_flags(cmd, pretrain.dims);
    cmd->add_option("--steps", pretrain.steps, "optimizer steps");
    cmd->add_option("--batch", pretrain.batch, "sentences per step");
    cmd->add_option("--lr", pretrain.lr, "AdamW learning rate");
    cmd->add_option("--warmup", pretrain.warmup, "linear warm-up fraction");
    cmd->add_option("--seed", pretrain.seed, "init + batch-order seed");
    cmd->callback([&] { run_pretrain(pretrain); });
  }

  SampleOpts sample;
  {
    auto* cmd = app.add_subcommand("sample-episodes", "N-way K-shot episode sampling");
    cmd->add_option("--data", sample.data, "source dataset")->required()->check(CLI::ExistingFile);
    cmd->add_option("--out", sample.out, "output episodes path")->required();
    cmd->add_option("--classes", sample.classes_csv, "class pool (comma list; default: all)");
    cmd->add_option("--n-way", sample.n_way, "classes per episode");
    cmd->add_option("--k-shot", sample.k_shot, "support instances per class");
    cmd->add_option("--query-shots", sample.query_shots, "query instances per class");
    cmd->add_option("--count", sample.count, "episodes to sample");
    cmd->add_option("--seed", sample.seed, "sampling seed");
    cmd->callback([&] { run_sample(sample); });
  }

  TrainDetectorOpts tdet;
  {
    auto* cmd = app.add_subcommand("meta-train-detector", "first-order MAML span detector");
    cmd->add_option("--train", tdet.train, "training episodes")->required()->check(CLI::ExistingFile);
    cmd->add_option("--val", tdet.val, "validation episodes")->required()->check(CLI::ExistingFile);
    cmd->add_option("--init", tdet.init, "initial checkpoint (default: random init)")
        ->check(CLI::ExistingFile);
    cmd->add_option("--out", tdet.out, "output checkpoint path")->required();
    cmd->add_option("--curve", tdet.curve, "optional validation-curve JSON path");
    cmd->add_option("--grid", tdet.grid,
                    "hyperparameter grid \"alpha=0.01,0.05;inner_steps=1,3\" scored on --val");
    attach_encoder_flags(cmd, tdet.dims);
    attach_meta_flags(cmd, tdet.cfg);
    cmd->add_option("--seed", tdet.seed, "init + episode-order seed");
    cmd->callback([&] { run_train_detector(tdet); });
  }

  TrainClassifierOpts tcls;
  {
    auto* cmd = app.add_subcommand("meta-train-classifier", "first-order MAML entity classifier");
    cmd->add_option("--train", tcls.train, "training episodes")->required()->check(CLI::ExistingFile);
    cmd->add_option("--val", tcls.val, "validation episodes")->required()->check(CLI::ExistingFile);
    cmd->add_option("--init", tcls.init, "initial checkpoint (default: random init)")
        ->check(CLI::ExistingFile);
    cmd->add_option("--out", tcls.out, "output checkpoint path")->required();
    cmd->add_option("--curve", tcls.curve, "optional validation-curve JSON path");
    cmd->add_option("--grid", tcls.grid, "hyperparameter grid scored on --val");
    cmd->add_option("--definitions", tcls.definitions, "definition cache (JSON lines)");
    cmd->add_option("--examples", tcls.examples, "example-mention fixtures (JSON lines)");
    cmd->add_option("--variant", tcls.variant, "referent variant: mcs|random|name|example");
    attach_encoder_flags(cmd, tcls.dims);
    attach_meta_flags(cmd, tcls.cfg);
    cmd->add_flag("--softmax", tcls.cfg.softmax_over_types,
                  "softmax over episode types instead of one-vs-rest sigmoid");
    cmd->add_option("--seed", tcls.seed, "init + episode-order seed");
    cmd->callback([&] { run_train_classifier(tcls, client); });
  }

  EvaluateOpts ev;
  {
    auto* cmd = app.add_subcommand("evaluate", "two-stage pipeline evaluation on episodes");
    cmd->add_option("--detector", ev.detector_ckpt, "span-detector checkpoint")
        ->required()
        ->check(CLI::ExistingFile);
    cmd->add_option("--classifier", ev.classifier_ckpt, "entity-classifier checkpoint")
        ->required()
        ->check(CLI::ExistingFile);
    cmd->add_option("--episodes", ev.episodes, "test episodes")->required()->check(CLI::ExistingFile);
    cmd->add_option("--out", ev.out, "optional report JSON path");
    cmd->add_option("--definitions", ev.definitions, "definition cache (JSON lines)");
    cmd->add_option("--examples", ev.examples, "example-mention fixtures (JSON lines)");
    cmd->add_option("--variant", ev.variant, "referent variant: mcs|random|name|example");
    attach_encoder_flags(cmd, ev.dims);
    cmd->add_option("--alpha", ev.alpha, "fine-tune learning rate");
    cmd->add_option("--adapt-steps", ev.adapt_steps, "fine-tune steps on each support set");
    cmd->add_option("--zeta-support", ev.zeta_support, "max-loss weight during fine-tuning");
    cmd->callback([&] { run_evaluate(ev, client); });
  }

  AblateOpts ablate;
  {
    auto* cmd = app.add_subcommand("ablate-referents",
                                   "train + score the classifier under each referent variant");
    cmd->add_option("--train", ablate.train, "training episodes")->required()->check(CLI::ExistingFile);
    cmd->add_option("--val", ablate.val, "validation episodes")->required()->check(CLI::ExistingFile);
    cmd->add_option("--episodes", ablate.episodes, "test episodes")
        ->required()
        ->check(CLI::ExistingFile);
    cmd->add_option("--out", ablate.out, "optional report JSON path (text table at .txt)");
    cmd->add_option("--definitions", ablate.definitions, "definition cache (JSON lines)");
    cmd->add_option("--examples", ablate.examples, "example-mention fixtures (JSON lines)");
    cmd->add_option("--variants", ablate.variants, "referent variants to run")->delimiter(',');
    cmd->add_option("--seeds", ablate.seeds, "comma-separated seed list")->delimiter(',');
    attach_encoder_flags(cmd, ablate.dims);
    attach_meta_flags(cmd, ablate.cfg);
    cmd->callback([&] { run_ablate(ablate, client); });
  }

  BaselineOpts baseline;
  {
    auto* cmd = app.add_subcommand("llm-baseline", "in-context tagging baseline on episodes");
    cmd->add_option("--episodes", baseline.episodes, "test episodes")
        ->required()
        ->check(CLI::ExistingFile);
    cmd->add_option("--responses", baseline.responses,
                    "canned responses (JSON lines); written when --live")
        ->required();
    cmd->add_flag("--live", baseline.live, "query the completion API (needs LLM_API_KEY)");
    cmd->add_option("--out", baseline.out, "optional report JSON path");
    cmd->callback([&] {
      if (baseline.live && offline) {
        throw CLI::ValidationError("--live", "conflicts with --offline");
      }
      referents::ClientConfig live_client = client;
      live_client.live = baseline.live;
      run_baseline(baseline, live_client);
    });
  }

  GradcheckOpts gc;
  {
    auto* cmd = app.add_subcommand("gradcheck", "finite-difference checks of all loss gradients");
    cmd->add_option("--seed", gc.seed, "sampling seed");
    cmd->add_option("--points", gc.points, "coordinates checked per loss");
    cmd->add_option("--tolerance", gc.tolerance, "max relative error allowed");
    cmd->add_option("--step", gc.step, "central-difference step");
    cmd->callback([&] { run_gradcheck(gc); });
  }

  ExperimentOpts exp;
  {
    auto* cmd = app.add_subcommand("experiment",
                                   "full resumable pipeline: data -> pretrain -> meta-train -> "
                                   "evaluate -> aggregate");
    cmd->add_option("--out", exp.out, "experiment directory")->required();
    cmd->add_option("--config", exp.config_path, "JSON config overriding built-in defaults")
        ->check(CLI::ExistingFile);
    auto* init_opt =
        cmd->add_option("--init-mode", exp.init_mode, "steppingstone|random|both detector arms");
    auto* no_ss = cmd->add_flag("--no-steppingstone", exp.no_steppingstone,
                                "shorthand for --init-mode random");
    init_opt->excludes(no_ss);
    auto* seeds_opt = cmd->add_option("--seeds", exp.seeds, "comma-separated seed list");
    seeds_opt->delimiter(',');
    auto* variant_opt =
        cmd->add_option("--referent-variant", exp.referent_variant, "mcs|random|name|example");
    auto* defs_opt = cmd->add_option("--definitions", exp.definitions, "definition cache path");
    auto* ex_opt = cmd->add_option("--examples", exp.examples, "example fixtures path");
    cmd->callback([&, init_opt, seeds_opt, variant_opt, defs_opt, ex_opt] {
      run_experiment_cmd(exp, init_opt->count() > 0, variant_opt->count() > 0,
                         seeds_opt->count() > 0, defs_opt->count() > 0, ex_opt->count() > 0);
    });
  }

  std::reverse(args.begin(), args.end());
  try {
    app.parse(std::move(args));
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

}  // namespace fewner::cli
