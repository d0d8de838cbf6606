#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fewner/corpus.hpp"
#include "fewner/episodes.hpp"
#include "fewner/neural.hpp"
#include "fewner/tagging.hpp"

namespace fewner::classifier {

struct ClassifierConfig {
  neural::EncoderDims encoder;  // shared dims for the span and sentence encoders

  double zeta_query = 2.0;
  double zeta_support = 5.0;

  double alpha = 0.05;
  double beta = 0.01;
  int inner_steps = 3;
  int adapt_steps = -1;  // -1 means inner_steps

  int batch_episodes = 4;
  int total_meta_steps = 300;
  int eval_interval = 10;
  bool meta_adamw = false;

  // One independent sigmoid per type (one-vs-rest) is the default; this flag
  // switches the training loss to a softmax over the episode's type logits.
  bool softmax_over_types = false;
};

// Two disjoint encoders plus the scoring head:
//   "span_encoder.*"  — contextual encoder for sentence tokens
//   "sent_encoder.*"  — contextual encoder for definition text
//   "scorer_w" [3*width], "scorer_b" [1]
struct ClassifierParams {
  neural::EncoderDims dims;
  neural::ParamVector values;

  bool operator==(const ClassifierParams&) const = default;
};

inline constexpr const char* kSpanEncoderPrefix = "span_encoder.";
inline constexpr const char* kSentEncoderPrefix = "sent_encoder.";

ClassifierParams init_classifier(const neural::EncoderDims& dims, std::uint64_t seed);

// What the loss needs to know about one entity type: either definition tokens
// (the referent vector is recomputed through the sentence encoder whenever its
// parameters change) or a fixed vector that bypasses the encoder.
struct ReferentInput {
  std::string type_name;
  std::vector<std::string> tokens;            // empty iff fixed is set
  std::optional<std::vector<double>> fixed;

  bool operator==(const ReferentInput&) const = default;
};

// Builds the per-type ReferentInputs for an episode's class list.
using ReferentProvider =
    std::function<std::vector<ReferentInput>(const std::vector<std::string>& classes)>;

// Mean of token representation rows start..end of the row-major L x width
// matrix H. Throws on out-of-range indices.
std::vector<double> span_representation(const std::vector<double>& H, std::size_t width,
                                        int start, int end);

// logit = w . concat(s, V, |s - V|) + bias
double type_score_logit(std::span<const double> scorer_w, double scorer_b,
                        std::span<const double> s, std::span<const double> referent);
double type_score(std::span<const double> scorer_w, double scorer_b, std::span<const double> s,
                  std::span<const double> referent);  // sigmoid of the logit

// Per gold span: one-vs-rest binary cross-entropy over all episode types
// (or softmax CE under softmax_over_types); total = mean over the sentence's
// spans + zeta * max. Throws when a span's type has no referent or the
// sentence has no spans.
neural::LossValue classifier_loss(const neural::ParamVector& values,
                                  const neural::EncoderDims& dims,
                                  const corpus::LabeledSentence& sentence,
                                  std::span<const ReferentInput> referents, double zeta,
                                  bool softmax_over_types = false);

neural::LossValue classifier_batch_loss(const neural::ParamVector& values,
                                        const neural::EncoderDims& dims,
                                        std::span<const corpus::LabeledSentence> batch,
                                        std::span<const ReferentInput> referents, double zeta,
                                        bool softmax_over_types = false);

struct ClassifierTrainResult {
  ClassifierParams params;
  std::vector<std::pair<int, double>> val_curve;  // (meta step, typed F1 on gold spans)
  std::vector<std::pair<int, double>> loss_log;   // (meta step, mean query loss)
};

// First-order meta-training mirroring the detector: inner updates on support
// sets (zeta_support), meta gradients from query sets (zeta_query), referents
// rebuilt per episode from its class list via the provider.
ClassifierTrainResult meta_train_classifier(const ClassifierParams& init,
                                            const std::vector<episodes::Episode>& train_episodes,
                                            const std::vector<episodes::Episode>& val_episodes,
                                            const ReferentProvider& provider,
                                            const ClassifierConfig& config, std::uint64_t seed);

// Fine-tunes a copy of params on the episode support set, then assigns each
// detected span the argmax-probability episode type (ties broken by episode
// class order). detected[i] pairs with episode.query[i].
std::vector<std::vector<tagging::Span>> adapt_and_classify(
    const ClassifierParams& params, const episodes::Episode& episode,
    const std::vector<ReferentInput>& referents,
    const std::vector<std::vector<tagging::Span>>& detected, const ClassifierConfig& config);

// Typed micro-F1 over episodes when classifying gold query spans (isolates
// classification quality from detection).
double evaluate_typed_f1_on_gold_spans(const ClassifierParams& params,
                                       const std::vector<episodes::Episode>& episodes,
                                       const ReferentProvider& provider,
                                       const ClassifierConfig& config);

}  // namespace fewner::classifier
