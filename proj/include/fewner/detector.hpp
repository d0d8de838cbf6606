#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fewner/corpus.hpp"
#include "fewner/episodes.hpp"
#include "fewner/neural.hpp"
#include "fewner/tagging.hpp"

namespace fewner::detector {

struct DetectorConfig {
  neural::EncoderDims encoder;

  // Loss sharpening weight by phase: query/meta losses vs. support/fine-tune
  // losses. Pretraining always runs with zeta = 0.
  double zeta_query = 2.0;
  double zeta_support = 5.0;

  double alpha = 0.05;  // inner-loop learning rate
  double beta = 0.01;   // meta-update learning rate
  int inner_steps = 3;
  int adapt_steps = -1;  // test-time fine-tune steps; -1 means inner_steps

  int batch_episodes = 4;
  int total_meta_steps = 300;
  int eval_interval = 10;
  bool meta_adamw = false;  // AdamW instead of plain SGD for the meta update

  neural::AdamWConfig pretrain_opt{.learning_rate = 1e-2,
                                   .weight_decay = 0.0,
                                   .warmup_fraction = 0.1};
  int pretrain_steps = 200;
  int pretrain_batch = 16;
};

// Encoder arrays plus a linear tag head: "proj" [width x 5], "proj_bias" [5].
struct SpanDetectorParams {
  neural::EncoderDims dims;
  neural::ParamVector values;

  bool operator==(const SpanDetectorParams&) const = default;
};

SpanDetectorParams init_detector(const neural::EncoderDims& dims, std::uint64_t seed);

// Per-token log-probabilities over the 5 tags (log-softmax of the linear head).
std::vector<tagging::EmissionRow> emission_log_probs(const SpanDetectorParams& params,
                                                     const std::vector<std::string>& tokens);

// Mean token cross-entropy plus zeta times the max token cross-entropy,
// against the sentence's BIOES tags. Gradient matches the params layout.
neural::LossValue detector_loss(const neural::ParamVector& values, const neural::EncoderDims& dims,
                                const corpus::LabeledSentence& sentence, double zeta);

// Mean of detector_loss over the batch.
neural::LossValue detector_batch_loss(const neural::ParamVector& values,
                                      const neural::EncoderDims& dims,
                                      std::span<const corpus::LabeledSentence> batch, double zeta);

struct TrainLogEntry {
  int step = 0;
  double loss = 0.0;
  double val_f1 = -1.0;  // negative when not evaluated at this step
};

struct PretrainResult {
  SpanDetectorParams params;
  std::vector<TrainLogEntry> log;
};

// Steppingstone pretraining: plain supervised AdamW training (zeta = 0) on a
// span-only corpus, seeded batch order.
PretrainResult pretrain_steppingstone(const corpus::Dataset& dataset, const DetectorConfig& config,
                                      std::uint64_t seed);

struct MetaTrainResult {
  SpanDetectorParams params;
  std::vector<TrainLogEntry> log;  // val_f1 filled every eval_interval steps
};

// First-order meta-training over episodes: inner updates on support sets with
// zeta_support, meta gradients from query sets with zeta_query. Episode
// batches cycle through train_episodes in seeded shuffled order. When
// val_episodes is nonempty the span F1 of the adapted model is logged every
// eval_interval steps (and at step 0).
MetaTrainResult meta_train_detector(const SpanDetectorParams& init,
                                    const std::vector<episodes::Episode>& train_episodes,
                                    const std::vector<episodes::Episode>& val_episodes,
                                    const DetectorConfig& config, std::uint64_t seed);

// Fine-tunes a copy of params on the episode support set (zeta_support), then
// constrained-Viterbi-decodes each query sentence. Untyped spans.
std::vector<std::vector<tagging::Span>> adapt_and_detect(const SpanDetectorParams& params,
                                                         const episodes::Episode& episode,
                                                         const DetectorConfig& config);

// Pooled exact-match span micro-F1 of adapt_and_detect over the episodes.
double evaluate_span_f1(const SpanDetectorParams& params,
                        const std::vector<episodes::Episode>& episodes,
                        const DetectorConfig& config);

}  // namespace fewner::detector
