#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace fewner::neural {

// ---------------------------------------------------------------------------
// Flat parameter collections.
// ---------------------------------------------------------------------------

struct NamedArray {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<double> data;  // row-major

  bool operator==(const NamedArray&) const = default;
};

struct ParamVector {
  std::vector<NamedArray> arrays;

  NamedArray& at(std::string_view name);
  const NamedArray& at(std::string_view name) const;
  std::size_t total_size() const;
  bool same_layout(const ParamVector& other) const;

  bool operator==(const ParamVector&) const = default;
};

ParamVector zeros_like(const ParamVector& p);
// y += a * x; layouts must match.
void axpy(double a, const ParamVector& x, ParamVector& y);
void scale(ParamVector& p, double a);
double dot(const ParamVector& a, const ParamVector& b);
bool all_finite(const ParamVector& p);

std::uint64_t fnv1a64(std::string_view s);

// ---------------------------------------------------------------------------
// Toy contextual token encoder: hashed embeddings -> windowed tanh projection.
//   h_i = tanh(Wp . concat(e_{i-r}, ..., e_{i+r}) + bp)
// Out-of-range positions contribute a learned pad vector.
// ---------------------------------------------------------------------------

struct EncoderDims {
  std::size_t hash_vocab = 16384;
  std::size_t width = 32;
  std::size_t radius = 1;

  std::size_t window() const { return 2 * radius + 1; }
  bool operator==(const EncoderDims&) const = default;
};

// Appends "<prefix>embedding" [hash_vocab, width], "<prefix>ctx_proj"
// [window*width, width], "<prefix>ctx_bias" [width], "<prefix>pad" [width].
void append_encoder_arrays(ParamVector& pv, const EncoderDims& dims, const std::string& prefix,
                           std::mt19937_64& rng);

struct EncoderParams {
  EncoderDims dims;
  ParamVector values;  // encoder arrays with empty prefix
};

EncoderParams make_encoder(const EncoderDims& dims, std::uint64_t seed);

// Row-major [tokens.size() x width] matrix of contextual representations.
std::vector<double> encode_tokens(const ParamVector& pv, const EncoderDims& dims,
                                  const std::string& prefix,
                                  const std::vector<std::string>& tokens);
std::vector<double> encode_tokens(const EncoderParams& params,
                                  const std::vector<std::string>& tokens);

// Accumulates d(loss)/d(params) into grad given the forward output H and the
// upstream gradient dH (both [tokens.size() x width]).
void encode_tokens_backward(const ParamVector& pv, const EncoderDims& dims,
                            const std::string& prefix, const std::vector<std::string>& tokens,
                            const std::vector<double>& H, const std::vector<double>& dH,
                            ParamVector& grad);

// ---------------------------------------------------------------------------
// AdamW with decoupled weight decay and linear warm-up.
// ---------------------------------------------------------------------------

struct AdamWConfig {
  double learning_rate = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  double warmup_fraction = 0.1;
  std::size_t total_steps = 0;  // 0 disables the warm-up schedule

  bool operator==(const AdamWConfig&) const = default;
};

struct OptimizerState {
  AdamWConfig config;
  ParamVector first_moment;
  ParamVector second_moment;
  std::size_t step = 0;  // completed steps
};

OptimizerState make_optimizer_state(const AdamWConfig& config, const ParamVector& params);

// One update, in place. The warm-up factor min(1, step/(warmup_fraction *
// total_steps)) is evaluated at the pre-increment step count, so the first
// call of a scheduled run applies learning rate 0.
void adamw_step(OptimizerState& state, ParamVector& params, const ParamVector& grads);

// ---------------------------------------------------------------------------
// First-order MAML. A loss functional maps (params, batch) to loss + gradient.
// ---------------------------------------------------------------------------

struct LossValue {
  double loss = 0.0;
  ParamVector grad;
};

// n_steps of SGD from params on the support batch; the input is untouched.
template <typename Batch, typename LossFn>
ParamVector maml_inner_update(const ParamVector& params, LossFn&& loss, const Batch& support,
                              double alpha, int n_steps) {
  if (n_steps < 0) throw std::invalid_argument("maml_inner_update: n_steps must be >= 0");
  ParamVector theta = params;
  for (int step = 0; step < n_steps; ++step) {
    LossValue lv = loss(theta, support);
    if (!std::isfinite(lv.loss)) {
      throw std::runtime_error("maml_inner_update: non-finite loss at inner step " +
                               std::to_string(step));
    }
    axpy(-alpha, lv.grad, theta);
  }
  return theta;
}

struct MetaStepOutcome {
  double mean_query_loss = 0.0;
};

// First-order meta update over a batch of (support, query) episodes: adapt on
// each support set, take the query gradient at the adapted parameters, sum
// those gradients in episode order, and apply them to params — plain SGD with
// rate beta, or one AdamW step when meta_opt is given.
template <typename Batch, typename InnerLossFn, typename QueryLossFn>
MetaStepOutcome maml_meta_step(ParamVector& params,
                               std::span<const std::pair<Batch, Batch>> episodes,
                               InnerLossFn&& inner_loss, QueryLossFn&& query_loss, double alpha,
                               double beta, int n_steps, OptimizerState* meta_opt = nullptr) {
  if (episodes.empty()) throw std::invalid_argument("maml_meta_step: empty episode batch");
  ParamVector total = zeros_like(params);
  double loss_sum = 0.0;
  for (std::size_t m = 0; m < episodes.size(); ++m) {
    ParamVector adapted = maml_inner_update(params, inner_loss, episodes[m].first, alpha, n_steps);
    LossValue lv = query_loss(adapted, episodes[m].second);
    if (!std::isfinite(lv.loss)) {
      throw std::runtime_error("maml_meta_step: non-finite query loss in episode " +
                               std::to_string(m));
    }
    axpy(1.0, lv.grad, total);
    loss_sum += lv.loss;
  }
  if (meta_opt != nullptr) {
    adamw_step(*meta_opt, params, total);
  } else {
    axpy(-beta, total, params);
  }
  return {loss_sum / static_cast<double>(episodes.size())};
}

// ---------------------------------------------------------------------------
// Finite-difference gradient checking (central differences).
// ---------------------------------------------------------------------------

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_array;
  std::size_t worst_index = 0;
  std::size_t checked_coordinates = 0;

  bool pass(double tolerance) const { return max_rel_error <= tolerance; }
};

// Relative error |fd - an| / max(|fd|, |an|, 1e-6) per coordinate. Above
// max_coordinates parameters, a seeded random subset of that size is checked.
template <typename Batch, typename LossFn>
GradCheckReport finite_diff_check(LossFn&& loss, const ParamVector& params, const Batch& data,
                                  double step = 1e-4, std::size_t max_coordinates = 10000,
                                  std::uint64_t subset_seed = 0) {
  LossValue analytic = loss(params, data);
  GradCheckReport report;

  std::vector<std::pair<std::size_t, std::size_t>> coords;  // (array, index)
  for (std::size_t a = 0; a < params.arrays.size(); ++a) {
    for (std::size_t i = 0; i < params.arrays[a].data.size(); ++i) coords.emplace_back(a, i);
  }
  if (coords.size() > max_coordinates) {
    std::mt19937_64 rng(subset_seed);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(max_coordinates);
  }

  ParamVector probe = params;
  for (const auto& [a, i] : coords) {
    const double saved = probe.arrays[a].data[i];
    probe.arrays[a].data[i] = saved + step;
    const double up = loss(probe, data).loss;
    probe.arrays[a].data[i] = saved - step;
    const double down = loss(probe, data).loss;
    probe.arrays[a].data[i] = saved;

    const double fd = (up - down) / (2.0 * step);
    const double an = analytic.grad.arrays[a].data[i];
    const double rel = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-6});
    ++report.checked_coordinates;
    if (rel > report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst_array = params.arrays[a].name;
      report.worst_index = i;
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// Checkpoints: JSON with a format version, a kind tag, free-form metadata,
// and the named arrays. Doubles survive the round trip bit-exactly.
// ---------------------------------------------------------------------------

struct Checkpoint {
  std::string kind;
  nlohmann::json meta;
  ParamVector params;
};

void save_checkpoint(const ParamVector& params, const std::string& kind,
                     const nlohmann::json& meta, const std::string& path);

Checkpoint load_checkpoint(const std::string& path);

}  // namespace fewner::neural
