#include "fewner/detector.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "fewner/metrics.hpp"

namespace fewner::detector {

namespace {

constexpr std::size_t kTags = tagging::kNumTags;

// Seeded endless stream of indices, reshuffled each full pass.
class ShuffledCycle {
 public:
  ShuffledCycle(std::size_t n, std::uint64_t seed) : rng_(seed), order_(n) {
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    std::shuffle(order_.begin(), order_.end(), rng_);
  }

  std::size_t next() {
    if (cursor_ == order_.size()) {
      std::shuffle(order_.begin(), order_.end(), rng_);
      cursor_ = 0;
    }
    return order_[cursor_++];
  }

 private:
  std::mt19937_64 rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

struct Forward {
  std::vector<double> H;                       // L x width
  std::vector<std::array<double, kTags>> lp;   // log-softmax rows
  std::vector<std::array<double, kTags>> sm;   // softmax rows
};

Forward forward_sentence(const neural::ParamVector& values, const neural::EncoderDims& dims,
                         const std::vector<std::string>& tokens) {
  Forward fwd;
  fwd.H = neural::encode_tokens(values, dims, "", tokens);
  const std::size_t L = tokens.size();
  const std::size_t w = dims.width;
  const auto& proj = values.at("proj").data;      // [w x kTags]
  const auto& bias = values.at("proj_bias").data;  // [kTags]

  fwd.lp.resize(L);
  fwd.sm.resize(L);
  for (std::size_t i = 0; i < L; ++i) {
    std::array<double, kTags> logits;
    for (std::size_t t = 0; t < kTags; ++t) {
      double z = bias[t];
      for (std::size_t o = 0; o < w; ++o) z += fwd.H[i * w + o] * proj[o * kTags + t];
      logits[t] = z;
    }
    const double mx = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double z : logits) sum += std::exp(z - mx);
    const double lse = mx + std::log(sum);
    for (std::size_t t = 0; t < kTags; ++t) {
      fwd.lp[i][t] = logits[t] - lse;
      fwd.sm[i][t] = std::exp(fwd.lp[i][t]);
    }
  }
  return fwd;
}

// Backprop per-token logit gradients through the tag head and the encoder.
void backward_sentence(const neural::ParamVector& values, const neural::EncoderDims& dims,
                       const std::vector<std::string>& tokens, const Forward& fwd,
                       const std::vector<std::array<double, kTags>>& dlogits,
                       neural::ParamVector& grad) {
  const std::size_t L = tokens.size();
  const std::size_t w = dims.width;
  const auto& proj = values.at("proj").data;
  auto& g_proj = grad.at("proj").data;
  auto& g_bias = grad.at("proj_bias").data;

  std::vector<double> dH(L * w, 0.0);
  for (std::size_t i = 0; i < L; ++i) {
    for (std::size_t t = 0; t < kTags; ++t) {
      const double d = dlogits[i][t];
      if (d == 0.0) continue;
      g_bias[t] += d;
      for (std::size_t o = 0; o < w; ++o) {
        g_proj[o * kTags + t] += fwd.H[i * w + o] * d;
        dH[i * w + o] += proj[o * kTags + t] * d;
      }
    }
  }
  neural::encode_tokens_backward(values, dims, "", tokens, fwd.H, dH, grad);
}

}  // namespace

SpanDetectorParams init_detector(const neural::EncoderDims& dims, std::uint64_t seed) {
  SpanDetectorParams params;
  params.dims = dims;
  std::mt19937_64 rng(seed);
  neural::append_encoder_arrays(params.values, dims, "", rng);
  std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(dims.width)));
  neural::NamedArray proj{"proj", {dims.width, kTags}, std::vector<double>(dims.width * kTags)};
  for (double& v : proj.data) v = dist(rng);
  params.values.arrays.push_back(std::move(proj));
  params.values.arrays.push_back(
      {"proj_bias", {kTags}, std::vector<double>(kTags, 0.0)});
  return params;
}

std::vector<tagging::EmissionRow> emission_log_probs(const SpanDetectorParams& params,
                                                     const std::vector<std::string>& tokens) {
  Forward fwd = forward_sentence(params.values, params.dims, tokens);
  std::vector<tagging::EmissionRow> rows(tokens.size());
  for (std::size_t i = 0; i < tokens.size(); ++i) rows[i] = fwd.lp[i];
  return rows;
}

neural::LossValue detector_loss(const neural::ParamVector& values, const neural::EncoderDims& dims,
                                const corpus::LabeledSentence& sentence, double zeta) {
  const std::vector<std::string>& tokens = sentence.tokens;
  if (tokens.empty()) {
    throw std::invalid_argument("detector_loss: empty sentence");
  }
  const std::vector<tagging::Tag> tags = corpus::bioes_tags(sentence);
  if (tags.size() != tokens.size()) {
    throw std::invalid_argument("detector_loss: tag/token length mismatch");
  }

  Forward fwd = forward_sentence(values, dims, tokens);
  const std::size_t L = tokens.size();

  std::vector<double> ce(L);
  std::size_t worst = 0;
  for (std::size_t i = 0; i < L; ++i) {
    ce[i] = -fwd.lp[i][static_cast<std::size_t>(tags[i])];
    if (ce[i] > ce[worst]) worst = i;  // first max wins ties
  }
  const double mean_ce = std::accumulate(ce.begin(), ce.end(), 0.0) / static_cast<double>(L);

  neural::LossValue out;
  out.loss = mean_ce + zeta * ce[worst];
  out.grad = neural::zeros_like(values);

  std::vector<std::array<double, kTags>> dlogits(L);
  for (std::size_t i = 0; i < L; ++i) {
    double weight = 1.0 / static_cast<double>(L);
    if (zeta != 0.0 && i == worst) weight += zeta;
    const auto gold = static_cast<std::size_t>(tags[i]);
    for (std::size_t t = 0; t < kTags; ++t) {
      dlogits[i][t] = weight * (fwd.sm[i][t] - (t == gold ? 1.0 : 0.0));
    }
  }
  backward_sentence(values, dims, tokens, fwd, dlogits, out.grad);
  return out;
}

neural::LossValue detector_batch_loss(const neural::ParamVector& values,
                                      const neural::EncoderDims& dims,
                                      std::span<const corpus::LabeledSentence> batch, double zeta) {
  if (batch.empty()) {
    throw std::invalid_argument("detector_batch_loss: empty batch");
  }
  neural::LossValue total;
  total.grad = neural::zeros_like(values);
  for (const corpus::LabeledSentence& s : batch) {
    neural::LossValue lv = detector_loss(values, dims, s, zeta);
    total.loss += lv.loss;
    neural::axpy(1.0, lv.grad, total.grad);
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  total.loss *= inv;
  neural::scale(total.grad, inv);
  return total;
}

PretrainResult pretrain_steppingstone(const corpus::Dataset& dataset, const DetectorConfig& config,
                                      std::uint64_t seed) {
  if (dataset.sentences.empty()) {
    throw std::invalid_argument("pretrain_steppingstone: empty dataset");
  }
  PretrainResult result;
  result.params = init_detector(config.encoder, seed);

  neural::AdamWConfig opt_config = config.pretrain_opt;
  opt_config.total_steps = static_cast<std::size_t>(config.pretrain_steps);
  neural::OptimizerState opt = neural::make_optimizer_state(opt_config, result.params.values);

  ShuffledCycle order(dataset.sentences.size(), seed ^ 0x9e3779b97f4a7c15ull);
  std::vector<corpus::LabeledSentence> batch;
  for (int step = 1; step <= config.pretrain_steps; ++step) {
    batch.clear();
    for (int b = 0; b < config.pretrain_batch; ++b) {
      batch.push_back(dataset.sentences[order.next()]);
    }
    neural::LossValue lv =
        detector_batch_loss(result.params.values, config.encoder, batch, /*zeta=*/0.0);
    if (!std::isfinite(lv.loss)) {
      throw std::runtime_error("pretrain_steppingstone: non-finite loss at step " +
                               std::to_string(step));
    }
    neural::adamw_step(opt, result.params.values, lv.grad);
    result.log.push_back({step, lv.loss, -1.0});
  }
  return result;
}

namespace {

using SentenceSpan = std::span<const corpus::LabeledSentence>;

std::vector<std::vector<tagging::Span>> decode_queries(const SpanDetectorParams& params,
                                                       SentenceSpan queries) {
  static const tagging::TransitionMask kMask = tagging::build_transition_mask();
  std::vector<std::vector<tagging::Span>> out;
  out.reserve(queries.size());
  for (const corpus::LabeledSentence& q : queries) {
    std::vector<tagging::Tag> path =
        tagging::viterbi_decode(emission_log_probs(params, q.tokens), kMask);
    out.push_back(tagging::decode_bioes_to_spans(path).spans);
  }
  return out;
}

}  // namespace

std::vector<std::vector<tagging::Span>> adapt_and_detect(const SpanDetectorParams& params,
                                                         const episodes::Episode& episode,
                                                         const DetectorConfig& config) {
  const int steps = config.adapt_steps < 0 ? config.inner_steps : config.adapt_steps;
  auto support_loss = [&](const neural::ParamVector& values, SentenceSpan batch) {
    return detector_batch_loss(values, config.encoder, batch, config.zeta_support);
  };
  SpanDetectorParams adapted{config.encoder,
                             neural::maml_inner_update(params.values, support_loss,
                                                       SentenceSpan(episode.support),
                                                       config.alpha, steps)};
  return decode_queries(adapted, SentenceSpan(episode.query));
}

double evaluate_span_f1(const SpanDetectorParams& params,
                        const std::vector<episodes::Episode>& episodes,
                        const DetectorConfig& config) {
  std::vector<std::vector<tagging::Span>> predicted;
  std::vector<std::vector<tagging::Span>> gold;
  for (const episodes::Episode& ep : episodes) {
    auto pred = adapt_and_detect(params, ep, config);
    for (std::size_t i = 0; i < ep.query.size(); ++i) {
      predicted.push_back(std::move(pred[i]));
      std::vector<tagging::Span> g;
      if (ep.query[i].spans) g = *ep.query[i].spans;
      gold.push_back(std::move(g));
    }
  }
  return metrics::micro_f1(predicted, gold, /*ignore_types=*/true).f1;
}

MetaTrainResult meta_train_detector(const SpanDetectorParams& init,
                                    const std::vector<episodes::Episode>& train_episodes,
                                    const std::vector<episodes::Episode>& val_episodes,
                                    const DetectorConfig& config, std::uint64_t seed) {
  if (train_episodes.empty()) {
    throw std::invalid_argument("meta_train_detector: no training episodes");
  }
  MetaTrainResult result;
  result.params = init;

  neural::OptimizerState meta_opt;
  if (config.meta_adamw) {
    neural::AdamWConfig mc;
    mc.learning_rate = config.beta;
    mc.total_steps = static_cast<std::size_t>(config.total_meta_steps);
    meta_opt = neural::make_optimizer_state(mc, result.params.values);
  }

  auto inner_loss = [&](const neural::ParamVector& values, SentenceSpan batch) {
    return detector_batch_loss(values, config.encoder, batch, config.zeta_support);
  };
  auto query_loss = [&](const neural::ParamVector& values, SentenceSpan batch) {
    return detector_batch_loss(values, config.encoder, batch, config.zeta_query);
  };

  if (!val_episodes.empty()) {
    result.log.push_back({0, 0.0, evaluate_span_f1(result.params, val_episodes, config)});
  }

  ShuffledCycle order(train_episodes.size(), seed);
  std::vector<std::pair<SentenceSpan, SentenceSpan>> batch;
  for (int step = 1; step <= config.total_meta_steps; ++step) {
    batch.clear();
    for (int b = 0; b < config.batch_episodes; ++b) {
      const episodes::Episode& ep = train_episodes[order.next()];
      batch.emplace_back(SentenceSpan(ep.support), SentenceSpan(ep.query));
    }
    neural::MetaStepOutcome outcome = neural::maml_meta_step<SentenceSpan>(
        result.params.values, std::span<const std::pair<SentenceSpan, SentenceSpan>>(batch),
        inner_loss, query_loss, config.alpha, config.beta, config.inner_steps,
        config.meta_adamw ? &meta_opt : nullptr);

    TrainLogEntry entry{step, outcome.mean_query_loss, -1.0};
    if (!val_episodes.empty() && step % config.eval_interval == 0) {
      entry.val_f1 = evaluate_span_f1(result.params, val_episodes, config);
    }
    result.log.push_back(entry);
  }
  return result;
}

}  // namespace fewner::detector
