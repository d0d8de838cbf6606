#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fewner/classifier.hpp"
#include "fewner/detector.hpp"
#include "fewner/neural.hpp"

namespace fewner::experiment {

struct DataConfig {
  int n_types = 30;
  int sentences_per_type = 30;
  std::uint64_t seed = 7;
};

struct PretrainStageConfig {
  bool enabled = true;
  int n_types = 100;  // broad coverage of the shared entity pool
  int sentences_per_type = 12;
  std::uint64_t seed = 11;
  int steps = 150;
  int batch = 16;
  double learning_rate = 0.01;
};

struct SplitStageConfig {
  std::array<double, 3> fractions{0.6, 0.2, 0.2};
  std::uint64_t seed = 13;
};

struct EpisodeStageConfig {
  int n_way = 5;
  int k_shot = 1;
  int query_shots = 2;
  int train = 40;
  int val = 8;
  int test = 10;
  std::uint64_t seed = 17;
};

struct ExperimentConfig {
  DataConfig data;
  PretrainStageConfig pretrain;
  SplitStageConfig split;
  EpisodeStageConfig episodes;
  neural::EncoderDims encoder{2048, 24, 1};
  // Context radius for the typing encoder only. Synthetic class membership is
  // purely lexical, and a context window makes the same token encode
  // differently in support and query sentences, which breaks the one-shot
  // binding learned at test time — so the classifier reads tokens
  // identity-only by default while the detector keeps `encoder.radius` for
  // boundary decisions.
  std::size_t classifier_radius = 0;
  detector::DetectorConfig detector;  // .encoder overwritten by `encoder`
  // .encoder likewise; the classifier needs a longer test-time fine-tune than
  // its meta inner loop, and sparser validation keeps the runs quick.
  classifier::ClassifierConfig classifier{.adapt_steps = 30, .eval_interval = 25};
  std::string referent_variant = "mcs";
  std::string definitions_path = "data/fixtures/definitions.jsonl";
  std::string examples_path = "data/fixtures/examples.jsonl";
  std::vector<std::uint64_t> seeds{171, 354, 550, 667, 985};
  // Detector initialization arms: "steppingstone", "random", or "both" (both
  // arms trained on the same seeds for the convergence comparison).
  std::string init_mode = "steppingstone";
  double convergence_epsilon = 0.01;
  int convergence_patience = 50;
};

// Partial JSON overrides on top of the built-in defaults.
ExperimentConfig config_from_json(const nlohmann::json& overrides);
nlohmann::json config_to_json(const ExperimentConfig& config);  // fully resolved

struct SeedOutcome {
  std::uint64_t seed = 0;
  double typed_f1 = 0.0;
  double typed_precision = 0.0;
  double typed_recall = 0.0;
  double span_f1 = 0.0;
  int convergence_steppingstone = -1;  // -1 when the arm did not run
  int convergence_random = -1;
};

struct ExperimentResult {
  nlohmann::json report;
  std::string report_text;
  std::vector<SeedOutcome> per_seed;
};

// Stage pipeline with marker-file resume:
//   data -> episodes -> pretrain -> per seed (detector arms -> classifier ->
//   evaluate) -> aggregate
// Every stage writes its artifacts plus "<stage>.done" under out_dir; a rerun
// with the same config skips completed stages. A config snapshot is written
// on first run and must match on resume.
ExperimentResult run_full_experiment(const ExperimentConfig& config, const std::string& out_dir);

}  // namespace fewner::experiment
