#include "fewner/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

#include "fewner/metrics.hpp"

namespace fewner::classifier {

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

// Numerically safe -log(sigmoid(z)) and -log(1 - sigmoid(z)).
double nlog_sigmoid(double z) { return z >= 0.0 ? std::log1p(std::exp(-z)) : -z + std::log1p(std::exp(z)); }
double nlog_one_minus_sigmoid(double z) { return nlog_sigmoid(-z); }

}  // namespace

ClassifierParams init_classifier(const neural::EncoderDims& dims, std::uint64_t seed) {
  ClassifierParams params;
  params.dims = dims;
  std::mt19937_64 rng(seed);
  neural::append_encoder_arrays(params.values, dims, kSpanEncoderPrefix, rng);
  neural::append_encoder_arrays(params.values, dims, kSentEncoderPrefix, rng);
  const std::size_t d3 = 3 * dims.width;
  std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(d3)));
  neural::NamedArray w{"scorer_w", {d3}, std::vector<double>(d3)};
  for (double& v : w.data) v = dist(rng);
  params.values.arrays.push_back(std::move(w));
  params.values.arrays.push_back({"scorer_b", {1}, {0.0}});
  return params;
}

std::vector<double> span_representation(const std::vector<double>& H, std::size_t width,
                                        int start, int end) {
  const long L = width == 0 ? 0 : static_cast<long>(H.size() / width);
  if (start < 0 || end < start || end >= L) {
    throw std::invalid_argument("span_representation: span (" + std::to_string(start) + "," +
                                std::to_string(end) + ") out of range for " + std::to_string(L) +
                                " rows");
  }
  std::vector<double> s(width, 0.0);
  for (int k = start; k <= end; ++k) {
    for (std::size_t o = 0; o < width; ++o) s[o] += H[static_cast<std::size_t>(k) * width + o];
  }
  const double inv = 1.0 / static_cast<double>(end - start + 1);
  for (double& v : s) v *= inv;
  return s;
}

double type_score_logit(std::span<const double> scorer_w, double scorer_b,
                        std::span<const double> s, std::span<const double> referent) {
  const std::size_t d = s.size();
  if (referent.size() != d || scorer_w.size() != 3 * d) {
    throw std::invalid_argument("type_score_logit: dimension mismatch");
  }
  double z = scorer_b;
  for (std::size_t o = 0; o < d; ++o) {
    z += scorer_w[o] * s[o];
    z += scorer_w[d + o] * referent[o];
    z += scorer_w[2 * d + o] * std::abs(s[o] - referent[o]);
  }
  return z;
}

double type_score(std::span<const double> scorer_w, double scorer_b, std::span<const double> s,
                  std::span<const double> referent) {
  return sigmoid(type_score_logit(scorer_w, scorer_b, s, referent));
}

namespace {

// Referent vectors under the current sentence-encoder parameters, plus the
// cached forward pass needed to backpropagate into them.
struct ReferentState {
  std::vector<std::vector<double>> vectors;   // one d-vector per referent
  std::vector<std::vector<double>> H;         // tau forward output per text referent
  std::vector<std::vector<double>> dV;        // accumulated upstream gradient
};

ReferentState referent_forward(const neural::ParamVector& values, const neural::EncoderDims& dims,
                               std::span<const ReferentInput> referents) {
  ReferentState state;
  const std::size_t w = dims.width;
  state.vectors.resize(referents.size());
  state.H.resize(referents.size());
  state.dV.assign(referents.size(), std::vector<double>(w, 0.0));
  for (std::size_t n = 0; n < referents.size(); ++n) {
    const ReferentInput& ref = referents[n];
    if (ref.fixed) {
      if (ref.fixed->size() != w) {
        throw std::invalid_argument("referent \"" + ref.type_name + "\" has dimension " +
                                    std::to_string(ref.fixed->size()) + ", expected " +
                                    std::to_string(w));
      }
      state.vectors[n] = *ref.fixed;
      continue;
    }
    if (ref.tokens.empty()) {
      throw std::invalid_argument("referent \"" + ref.type_name + "\" has no tokens");
    }
    state.H[n] = neural::encode_tokens(values, dims, kSentEncoderPrefix, ref.tokens);
    state.vectors[n] =
        span_representation(state.H[n], w, 0, static_cast<int>(ref.tokens.size()) - 1);
  }
  return state;
}

void referent_backward(const neural::ParamVector& values, const neural::EncoderDims& dims,
                       std::span<const ReferentInput> referents, const ReferentState& state,
                       neural::ParamVector& grad) {
  const std::size_t w = dims.width;
  for (std::size_t n = 0; n < referents.size(); ++n) {
    if (referents[n].fixed) continue;
    const std::size_t J = referents[n].tokens.size();
    bool nonzero = std::any_of(state.dV[n].begin(), state.dV[n].end(),
                               [](double v) { return v != 0.0; });
    if (!nonzero) continue;
    std::vector<double> dH(J * w, 0.0);
    const double inv = 1.0 / static_cast<double>(J);
    for (std::size_t j = 0; j < J; ++j) {
      for (std::size_t o = 0; o < w; ++o) dH[j * w + o] = state.dV[n][o] * inv;
    }
    neural::encode_tokens_backward(values, dims, kSentEncoderPrefix, referents[n].tokens,
                                   state.H[n], dH, grad);
  }
}

}  // namespace

neural::LossValue classifier_loss(const neural::ParamVector& values,
                                  const neural::EncoderDims& dims,
                                  const corpus::LabeledSentence& sentence,
                                  std::span<const ReferentInput> referents, double zeta,
                                  bool softmax_over_types) {
  if (!sentence.spans || sentence.spans->empty()) {
    throw std::invalid_argument("classifier_loss: sentence has no gold spans");
  }
  if (referents.empty()) {
    throw std::invalid_argument("classifier_loss: no referents");
  }
  const std::size_t w = dims.width;
  const std::size_t n_types = referents.size();
  const auto& spans = *sentence.spans;
  const std::size_t n_spans = spans.size();

  std::map<std::string, std::size_t> type_index;
  for (std::size_t n = 0; n < n_types; ++n) type_index[referents[n].type_name] = n;

  std::vector<std::size_t> gold(n_spans);
  for (std::size_t k = 0; k < n_spans; ++k) {
    auto it = type_index.find(spans[k].type);
    if (it == type_index.end()) {
      throw std::invalid_argument("classifier_loss: no referent for label \"" + spans[k].type +
                                  "\"");
    }
    gold[k] = it->second;
  }

  // Forward.
  std::vector<double> Hx = neural::encode_tokens(values, dims, kSpanEncoderPrefix, sentence.tokens);
  ReferentState refs = referent_forward(values, dims, referents);

  std::vector<std::vector<double>> reps(n_spans);
  for (std::size_t k = 0; k < n_spans; ++k) {
    reps[k] = span_representation(Hx, w, spans[k].start, spans[k].end);
  }

  const auto& scorer_w = values.at("scorer_w").data;
  const double scorer_b = values.at("scorer_b").data[0];

  std::vector<std::vector<double>> logits(n_spans, std::vector<double>(n_types));
  for (std::size_t k = 0; k < n_spans; ++k) {
    for (std::size_t n = 0; n < n_types; ++n) {
      logits[k][n] = type_score_logit(scorer_w, scorer_b, reps[k], refs.vectors[n]);
    }
  }

  std::vector<double> span_loss(n_spans, 0.0);
  for (std::size_t k = 0; k < n_spans; ++k) {
    if (softmax_over_types) {
      const double mx = *std::max_element(logits[k].begin(), logits[k].end());
      double sum = 0.0;
      for (double z : logits[k]) sum += std::exp(z - mx);
      span_loss[k] = -(logits[k][gold[k]] - mx - std::log(sum));
    } else {
      for (std::size_t n = 0; n < n_types; ++n) {
        span_loss[k] += n == gold[k] ? nlog_sigmoid(logits[k][n])
                                     : nlog_one_minus_sigmoid(logits[k][n]);
      }
    }
  }

  std::size_t worst = 0;
  for (std::size_t k = 1; k < n_spans; ++k) {
    if (span_loss[k] > span_loss[worst]) worst = k;  // first max wins ties
  }
  const double mean_loss =
      std::accumulate(span_loss.begin(), span_loss.end(), 0.0) / static_cast<double>(n_spans);

  neural::LossValue out;
  out.loss = mean_loss + zeta * span_loss[worst];
  out.grad = neural::zeros_like(values);

  // Backward.
  auto& g_w = out.grad.at("scorer_w").data;
  auto& g_b = out.grad.at("scorer_b").data;
  std::vector<std::vector<double>> d_reps(n_spans, std::vector<double>(w, 0.0));

  for (std::size_t k = 0; k < n_spans; ++k) {
    double weight = 1.0 / static_cast<double>(n_spans);
    if (zeta != 0.0 && k == worst) weight += zeta;

    std::vector<double> dlogit(n_types);
    if (softmax_over_types) {
      const double mx = *std::max_element(logits[k].begin(), logits[k].end());
      double sum = 0.0;
      for (double z : logits[k]) sum += std::exp(z - mx);
      for (std::size_t n = 0; n < n_types; ++n) {
        const double sm = std::exp(logits[k][n] - mx) / sum;
        dlogit[n] = weight * (sm - (n == gold[k] ? 1.0 : 0.0));
      }
    } else {
      for (std::size_t n = 0; n < n_types; ++n) {
        const double p = sigmoid(logits[k][n]);
        dlogit[n] = weight * (p - (n == gold[k] ? 1.0 : 0.0));
      }
    }

    for (std::size_t n = 0; n < n_types; ++n) {
      const double d = dlogit[n];
      if (d == 0.0) continue;
      const auto& s = reps[k];
      const auto& V = refs.vectors[n];
      g_b[0] += d;
      for (std::size_t o = 0; o < w; ++o) {
        const double sg = sign(s[o] - V[o]);
        g_w[o] += d * s[o];
        g_w[w + o] += d * V[o];
        g_w[2 * w + o] += d * std::abs(s[o] - V[o]);
        d_reps[k][o] += d * (scorer_w[o] + scorer_w[2 * w + o] * sg);
        refs.dV[n][o] += d * (scorer_w[w + o] - scorer_w[2 * w + o] * sg);
      }
    }
  }

  // Span reps -> span-encoder rows.
  std::vector<double> dHx(Hx.size(), 0.0);
  for (std::size_t k = 0; k < n_spans; ++k) {
    const double inv = 1.0 / static_cast<double>(spans[k].end - spans[k].start + 1);
    for (int t = spans[k].start; t <= spans[k].end; ++t) {
      for (std::size_t o = 0; o < w; ++o) {
        dHx[static_cast<std::size_t>(t) * w + o] += d_reps[k][o] * inv;
      }
    }
  }
  neural::encode_tokens_backward(values, dims, kSpanEncoderPrefix, sentence.tokens, Hx, dHx,
                                 out.grad);
  referent_backward(values, dims, referents, refs, out.grad);
  return out;
}

neural::LossValue classifier_batch_loss(const neural::ParamVector& values,
                                        const neural::EncoderDims& dims,
                                        std::span<const corpus::LabeledSentence> batch,
                                        std::span<const ReferentInput> referents, double zeta,
                                        bool softmax_over_types) {
  if (batch.empty()) {
    throw std::invalid_argument("classifier_batch_loss: empty batch");
  }
  neural::LossValue total;
  total.grad = neural::zeros_like(values);
  for (const corpus::LabeledSentence& s : batch) {
    neural::LossValue lv = classifier_loss(values, dims, s, referents, zeta, softmax_over_types);
    total.loss += lv.loss;
    neural::axpy(1.0, lv.grad, total.grad);
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  total.loss *= inv;
  neural::scale(total.grad, inv);
  return total;
}

namespace {

using SentenceSpan = std::span<const corpus::LabeledSentence>;

struct EpisodeBatchRef {
  SentenceSpan sentences;
  const std::vector<ReferentInput>* referents;
};

}  // namespace

std::vector<std::vector<tagging::Span>> adapt_and_classify(
    const ClassifierParams& params, const episodes::Episode& episode,
    const std::vector<ReferentInput>& referents,
    const std::vector<std::vector<tagging::Span>>& detected, const ClassifierConfig& config) {
  if (detected.size() != episode.query.size()) {
    throw std::invalid_argument("adapt_and_classify: detected spans misaligned with query");
  }
  const int steps = config.adapt_steps < 0 ? config.inner_steps : config.adapt_steps;
  auto support_loss = [&](const neural::ParamVector& values, const EpisodeBatchRef& b) {
    return classifier_batch_loss(values, config.encoder, b.sentences, *b.referents,
                                 config.zeta_support, config.softmax_over_types);
  };
  EpisodeBatchRef support{SentenceSpan(episode.support), &referents};
  neural::ParamVector adapted =
      neural::maml_inner_update(params.values, support_loss, support, config.alpha, steps);

  ReferentState refs = referent_forward(adapted, config.encoder, referents);
  const auto& scorer_w = adapted.at("scorer_w").data;
  const double scorer_b = adapted.at("scorer_b").data[0];
  const std::size_t w = config.encoder.width;

  std::vector<std::vector<tagging::Span>> typed(detected.size());
  for (std::size_t i = 0; i < detected.size(); ++i) {
    if (detected[i].empty()) continue;
    std::vector<double> H =
        neural::encode_tokens(adapted, config.encoder, kSpanEncoderPrefix, episode.query[i].tokens);
    for (const tagging::Span& sp : detected[i]) {
      std::vector<double> rep = span_representation(H, w, sp.start, sp.end);
      std::size_t best = 0;
      double best_logit = type_score_logit(scorer_w, scorer_b, rep, refs.vectors[0]);
      for (std::size_t n = 1; n < refs.vectors.size(); ++n) {
        const double z = type_score_logit(scorer_w, scorer_b, rep, refs.vectors[n]);
        if (z > best_logit) {  // ties keep the earlier episode class
          best_logit = z;
          best = n;
        }
      }
      typed[i].push_back({sp.start, sp.end, referents[best].type_name});
    }
  }
  return typed;
}

double evaluate_typed_f1_on_gold_spans(const ClassifierParams& params,
                                       const std::vector<episodes::Episode>& episodes,
                                       const ReferentProvider& provider,
                                       const ClassifierConfig& config) {
  std::vector<std::vector<tagging::Span>> predicted;
  std::vector<std::vector<tagging::Span>> gold;
  for (const episodes::Episode& ep : episodes) {
    std::vector<ReferentInput> referents = provider(ep.classes);
    std::vector<std::vector<tagging::Span>> detected;
    detected.reserve(ep.query.size());
    for (const corpus::LabeledSentence& q : ep.query) {
      std::vector<tagging::Span> untyped;
      if (q.spans) {
        for (const tagging::Span& sp : *q.spans) untyped.push_back({sp.start, sp.end, ""});
      }
      detected.push_back(std::move(untyped));
    }
    auto typed = adapt_and_classify(params, ep, referents, detected, config);
    for (std::size_t i = 0; i < ep.query.size(); ++i) {
      predicted.push_back(std::move(typed[i]));
      gold.push_back(ep.query[i].spans ? *ep.query[i].spans : std::vector<tagging::Span>{});
    }
  }
  return metrics::micro_f1(predicted, gold, /*ignore_types=*/false).f1;
}

ClassifierTrainResult meta_train_classifier(const ClassifierParams& init,
                                            const std::vector<episodes::Episode>& train_episodes,
                                            const std::vector<episodes::Episode>& val_episodes,
                                            const ReferentProvider& provider,
                                            const ClassifierConfig& config, std::uint64_t seed) {
  if (train_episodes.empty()) {
    throw std::invalid_argument("meta_train_classifier: no training episodes");
  }
  ClassifierTrainResult result;
  result.params = init;

  // Referent inputs per training episode, built once up front (they depend
  // only on the class list, not on parameters).
  std::vector<std::vector<ReferentInput>> train_refs;
  train_refs.reserve(train_episodes.size());
  for (const episodes::Episode& ep : train_episodes) train_refs.push_back(provider(ep.classes));

  neural::OptimizerState meta_opt;
  if (config.meta_adamw) {
    neural::AdamWConfig mc;
    mc.learning_rate = config.beta;
    mc.total_steps = static_cast<std::size_t>(config.total_meta_steps);
    meta_opt = neural::make_optimizer_state(mc, result.params.values);
  }

  auto inner_loss = [&](const neural::ParamVector& values, const EpisodeBatchRef& b) {
    return classifier_batch_loss(values, config.encoder, b.sentences, *b.referents,
                                 config.zeta_support, config.softmax_over_types);
  };
  auto query_loss = [&](const neural::ParamVector& values, const EpisodeBatchRef& b) {
    return classifier_batch_loss(values, config.encoder, b.sentences, *b.referents,
                                 config.zeta_query, config.softmax_over_types);
  };

  if (!val_episodes.empty()) {
    result.val_curve.emplace_back(
        0, evaluate_typed_f1_on_gold_spans(result.params, val_episodes, provider, config));
  }

  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order(train_episodes.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t cursor = 0;

  std::vector<std::pair<EpisodeBatchRef, EpisodeBatchRef>> batch;
  for (int step = 1; step <= config.total_meta_steps; ++step) {
    batch.clear();
    for (int b = 0; b < config.batch_episodes; ++b) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      const std::size_t idx = order[cursor++];
      const episodes::Episode& ep = train_episodes[idx];
      batch.emplace_back(EpisodeBatchRef{SentenceSpan(ep.support), &train_refs[idx]},
                         EpisodeBatchRef{SentenceSpan(ep.query), &train_refs[idx]});
    }
    neural::MetaStepOutcome outcome = neural::maml_meta_step<EpisodeBatchRef>(
        result.params.values, std::span<const std::pair<EpisodeBatchRef, EpisodeBatchRef>>(batch),
        inner_loss, query_loss, config.alpha, config.beta, config.inner_steps,
        config.meta_adamw ? &meta_opt : nullptr);
    result.loss_log.emplace_back(step, outcome.mean_query_loss);
    if (!val_episodes.empty() && step % config.eval_interval == 0) {
      result.val_curve.emplace_back(
          step, evaluate_typed_f1_on_gold_spans(result.params, val_episodes, provider, config));
    }
  }
  return result;
}

}  // namespace fewner::classifier
