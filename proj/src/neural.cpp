#include "fewner/neural.hpp"

#include <fstream>

namespace fewner::neural {

NamedArray& ParamVector::at(std::string_view name) {
  for (NamedArray& a : arrays) {
    if (a.name == name) return a;
  }
  throw std::out_of_range("ParamVector: no array named \"" + std::string(name) + "\"");
}

const NamedArray& ParamVector::at(std::string_view name) const {
  for (const NamedArray& a : arrays) {
    if (a.name == name) return a;
  }
  throw std::out_of_range("ParamVector: no array named \"" + std::string(name) + "\"");
}

std::size_t ParamVector::total_size() const {
  std::size_t n = 0;
  for (const NamedArray& a : arrays) n += a.data.size();
  return n;
}

bool ParamVector::same_layout(const ParamVector& other) const {
  if (arrays.size() != other.arrays.size()) return false;
  for (std::size_t i = 0; i < arrays.size(); ++i) {
    if (arrays[i].name != other.arrays[i].name || arrays[i].shape != other.arrays[i].shape) {
      return false;
    }
  }
  return true;
}

ParamVector zeros_like(const ParamVector& p) {
  ParamVector out;
  out.arrays.reserve(p.arrays.size());
  for (const NamedArray& a : p.arrays) {
    out.arrays.push_back({a.name, a.shape, std::vector<double>(a.data.size(), 0.0)});
  }
  return out;
}

namespace {

void require_same_layout(const ParamVector& a, const ParamVector& b, const char* op) {
  if (!a.same_layout(b)) {
    throw std::invalid_argument(std::string(op) + ": parameter layouts differ");
  }
}

}  // namespace

void axpy(double a, const ParamVector& x, ParamVector& y) {
  require_same_layout(x, y, "axpy");
  for (std::size_t i = 0; i < x.arrays.size(); ++i) {
    const auto& xs = x.arrays[i].data;
    auto& ys = y.arrays[i].data;
    for (std::size_t j = 0; j < xs.size(); ++j) ys[j] += a * xs[j];
  }
}

void scale(ParamVector& p, double a) {
  for (NamedArray& arr : p.arrays) {
    for (double& v : arr.data) v *= a;
  }
}

double dot(const ParamVector& a, const ParamVector& b) {
  require_same_layout(a, b, "dot");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.arrays.size(); ++i) {
    const auto& as = a.arrays[i].data;
    const auto& bs = b.arrays[i].data;
    for (std::size_t j = 0; j < as.size(); ++j) sum += as[j] * bs[j];
  }
  return sum;
}

bool all_finite(const ParamVector& p) {
  for (const NamedArray& a : p.arrays) {
    for (double v : a.data) {
      if (!std::isfinite(v)) return false;
    }
  }
  return true;
}

std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

namespace {

NamedArray random_array(const std::string& name, std::vector<std::size_t> shape,
                        std::mt19937_64& rng, double stddev) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  std::normal_distribution<double> dist(0.0, stddev);
  NamedArray arr{name, std::move(shape), std::vector<double>(n)};
  for (double& v : arr.data) v = dist(rng);
  return arr;
}

}  // namespace

void append_encoder_arrays(ParamVector& pv, const EncoderDims& dims, const std::string& prefix,
                           std::mt19937_64& rng) {
  const std::size_t w = dims.width;
  const std::size_t in = dims.window() * w;
  // Unit-scale embeddings with 1/sqrt(fan-in) mixing keep tanh pre-activations
  // near unit variance, so token representations stay O(1) and a handful of
  // SGD steps can move the downstream scorer logits by whole units.
  pv.arrays.push_back(random_array(prefix + "embedding", {dims.hash_vocab, w}, rng, 1.0));
  pv.arrays.push_back(
      random_array(prefix + "ctx_proj", {in, w}, rng, 1.0 / std::sqrt(static_cast<double>(in))));
  pv.arrays.push_back({prefix + "ctx_bias", {w}, std::vector<double>(w, 0.0)});
  pv.arrays.push_back(random_array(prefix + "pad", {w}, rng, 1.0));
}

EncoderParams make_encoder(const EncoderDims& dims, std::uint64_t seed) {
  EncoderParams params;
  params.dims = dims;
  std::mt19937_64 rng(seed);
  append_encoder_arrays(params.values, dims, "", rng);
  return params;
}

std::vector<double> encode_tokens(const ParamVector& pv, const EncoderDims& dims,
                                  const std::string& prefix,
                                  const std::vector<std::string>& tokens) {
  const std::size_t L = tokens.size();
  const std::size_t w = dims.width;
  const std::size_t win = dims.window();
  const long r = static_cast<long>(dims.radius);

  const NamedArray& emb = pv.at(prefix + "embedding");
  const NamedArray& proj = pv.at(prefix + "ctx_proj");
  const NamedArray& bias = pv.at(prefix + "ctx_bias");
  const NamedArray& pad = pv.at(prefix + "pad");

  std::vector<std::size_t> slots(L);
  for (std::size_t i = 0; i < L; ++i) slots[i] = fnv1a64(tokens[i]) % dims.hash_vocab;

  std::vector<double> H(L * w, 0.0);
  std::vector<double> window(win * w);
  for (std::size_t i = 0; i < L; ++i) {
    for (long k = -r; k <= r; ++k) {
      const long j = static_cast<long>(i) + k;
      const double* src = (j < 0 || j >= static_cast<long>(L))
                              ? pad.data.data()
                              : emb.data.data() + slots[static_cast<std::size_t>(j)] * w;
      std::copy(src, src + w, window.begin() + (k + r) * w);
    }
    for (std::size_t o = 0; o < w; ++o) {
      double z = bias.data[o];
      for (std::size_t q = 0; q < win * w; ++q) {
        z += window[q] * proj.data[q * w + o];
      }
      H[i * w + o] = std::tanh(z);
    }
  }
  return H;
}

std::vector<double> encode_tokens(const EncoderParams& params,
                                  const std::vector<std::string>& tokens) {
  return encode_tokens(params.values, params.dims, "", tokens);
}

void encode_tokens_backward(const ParamVector& pv, const EncoderDims& dims,
                            const std::string& prefix, const std::vector<std::string>& tokens,
                            const std::vector<double>& H, const std::vector<double>& dH,
                            ParamVector& grad) {
  const std::size_t L = tokens.size();
  const std::size_t w = dims.width;
  const std::size_t win = dims.window();
  const long r = static_cast<long>(dims.radius);
  if (H.size() != L * w || dH.size() != L * w) {
    throw std::invalid_argument("encode_tokens_backward: H/dH size mismatch");
  }

  const NamedArray& emb = pv.at(prefix + "embedding");
  const NamedArray& proj = pv.at(prefix + "ctx_proj");
  NamedArray& g_emb = grad.at(prefix + "embedding");
  NamedArray& g_proj = grad.at(prefix + "ctx_proj");
  NamedArray& g_bias = grad.at(prefix + "ctx_bias");
  NamedArray& g_pad = grad.at(prefix + "pad");

  std::vector<std::size_t> slots(L);
  for (std::size_t i = 0; i < L; ++i) slots[i] = fnv1a64(tokens[i]) % dims.hash_vocab;

  std::vector<double> window(win * w);
  std::vector<double> dwindow(win * w);
  for (std::size_t i = 0; i < L; ++i) {
    for (long k = -r; k <= r; ++k) {
      const long j = static_cast<long>(i) + k;
      const double* src = (j < 0 || j >= static_cast<long>(L))
                              ? pv.at(prefix + "pad").data.data()
                              : emb.data.data() + slots[static_cast<std::size_t>(j)] * w;
      std::copy(src, src + w, window.begin() + (k + r) * w);
    }
    std::fill(dwindow.begin(), dwindow.end(), 0.0);
    for (std::size_t o = 0; o < w; ++o) {
      const double h = H[i * w + o];
      const double dz = dH[i * w + o] * (1.0 - h * h);  // tanh'
      if (dz == 0.0) continue;
      g_bias.data[o] += dz;
      for (std::size_t q = 0; q < win * w; ++q) {
        g_proj.data[q * w + o] += window[q] * dz;
        dwindow[q] += proj.data[q * w + o] * dz;
      }
    }
    for (long k = -r; k <= r; ++k) {
      const long j = static_cast<long>(i) + k;
      double* dst = (j < 0 || j >= static_cast<long>(L))
                        ? g_pad.data.data()
                        : g_emb.data.data() + slots[static_cast<std::size_t>(j)] * w;
      const double* src = dwindow.data() + (k + r) * w;
      for (std::size_t o = 0; o < w; ++o) dst[o] += src[o];
    }
  }
}

OptimizerState make_optimizer_state(const AdamWConfig& config, const ParamVector& params) {
  OptimizerState state;
  state.config = config;
  state.first_moment = zeros_like(params);
  state.second_moment = zeros_like(params);
  return state;
}

void adamw_step(OptimizerState& state, ParamVector& params, const ParamVector& grads) {
  require_same_layout(params, grads, "adamw_step");
  require_same_layout(params, state.first_moment, "adamw_step");
  const AdamWConfig& c = state.config;

  // Warm-up scale from the pre-increment step count: the first scheduled step
  // runs at learning rate 0.
  double lr = c.learning_rate;
  const double horizon = c.warmup_fraction * static_cast<double>(c.total_steps);
  if (horizon > 0.0) {
    lr *= std::min(1.0, static_cast<double>(state.step) / horizon);
  }
  ++state.step;
  const auto t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);

  for (std::size_t a = 0; a < params.arrays.size(); ++a) {
    auto& theta = params.arrays[a].data;
    const auto& g = grads.arrays[a].data;
    auto& m = state.first_moment.arrays[a].data;
    auto& v = state.second_moment.arrays[a].data;
    for (std::size_t i = 0; i < theta.size(); ++i) {
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      const double denom = std::sqrt(v_hat) + c.eps;
      const double adam_term = denom == 0.0 ? 0.0 : m_hat / denom;
      theta[i] -= lr * (adam_term + c.weight_decay * theta[i]);
    }
  }
}

namespace {
constexpr int kCheckpointFormatVersion = 1;
}

void save_checkpoint(const ParamVector& params, const std::string& kind,
                     const nlohmann::json& meta, const std::string& path) {
  nlohmann::json doc;
  doc["format_version"] = kCheckpointFormatVersion;
  doc["kind"] = kind;
  doc["meta"] = meta.is_null() ? nlohmann::json::object() : meta;
  nlohmann::json arrays = nlohmann::json::array();
  for (const NamedArray& a : params.arrays) {
    arrays.push_back({{"name", a.name}, {"shape", a.shape}, {"data", a.data}});
  }
  doc["arrays"] = std::move(arrays);
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot write checkpoint: " + path);
  }
  out << doc.dump() << "\n";
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open checkpoint: " + path);
  }
  nlohmann::json doc = nlohmann::json::parse(in);
  if (doc.at("format_version").get<int>() != kCheckpointFormatVersion) {
    throw std::runtime_error("checkpoint " + path + " has unsupported format_version");
  }
  Checkpoint ckpt;
  ckpt.kind = doc.at("kind").get<std::string>();
  ckpt.meta = doc.value("meta", nlohmann::json::object());
  for (const auto& rec : doc.at("arrays")) {
    NamedArray a;
    a.name = rec.at("name").get<std::string>();
    a.shape = rec.at("shape").get<std::vector<std::size_t>>();
    a.data = rec.at("data").get<std::vector<double>>();
    std::size_t n = 1;
    for (std::size_t d : a.shape) n *= d;
    if (n != a.data.size()) {
      throw std::runtime_error("checkpoint array \"" + a.name + "\" shape/data mismatch");
    }
    ckpt.params.arrays.push_back(std::move(a));
  }
  return ckpt;
}

}  // namespace fewner::neural
