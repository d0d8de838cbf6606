#include "fewner/referents.hpp"

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <random>
#include <stdexcept>
#include <thread>

#include <nlohmann/json.hpp>

#include "fewner/corpus.hpp"

// httplib is pulled in only here; live mode is opt-in and never exercised by
// tests.
#include "httplib.h"

namespace fewner::referents {

DefinitionCache DefinitionCache::load(const std::string& path) {
  DefinitionCache cache;
  std::ifstream in(path);
  if (!in) return cache;  // missing cache file is just an empty cache
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      nlohmann::json rec = nlohmann::json::parse(line);
      TypeDefinition def;
      def.type_name = rec.at("type").get<std::string>();
      def.definition_text = rec.at("definition").get<std::string>();
      def.source = rec.at("source").get<std::string>();
      if (rec.contains("config")) {
        GenerationConfig gc;
        gc.temperature = rec["config"].value("temperature", 0.7);
        gc.max_length = rec["config"].value("max_length", 80);
        gc.model = rec["config"].value("model", std::string("text-davinci-003"));
        def.config = gc;
      }
      cache.entries_[def.type_name] = std::move(def);
    } catch (const std::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return cache;
}

void DefinitionCache::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot write definition cache: " + path);
  }
  for (const auto& [name, def] : entries_) {
    nlohmann::json rec;
    rec["type"] = def.type_name;
    rec["definition"] = def.definition_text;
    rec["source"] = def.source;
    if (def.config) {
      rec["config"] = {{"temperature", def.config->temperature},
                       {"max_length", def.config->max_length},
                       {"model", def.config->model}};
    }
    out << rec.dump() << "\n";
  }
}

std::optional<TypeDefinition> DefinitionCache::find(const std::string& type_name) const {
  auto it = entries_.find(type_name);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void DefinitionCache::put(const TypeDefinition& def) { entries_[def.type_name] = def; }

namespace {

// Minimum spacing between live requests; shared across calls in-process.
void rate_limit(double requests_per_minute) {
  static std::chrono::steady_clock::time_point last{};
  if (requests_per_minute <= 0.0) return;
  const auto min_gap = std::chrono::duration<double>(60.0 / requests_per_minute);
  const auto now = std::chrono::steady_clock::now();
  if (last.time_since_epoch().count() != 0 && now - last < min_gap) {
    std::this_thread::sleep_for(min_gap - (now - last));
  }
  last = std::chrono::steady_clock::now();
}

}  // namespace

std::string llm_complete(const std::string& prompt, const ClientConfig& config) {
  std::string api_key = config.api_key;
  if (api_key.empty()) {
    if (const char* env = std::getenv("LLM_API_KEY")) api_key = env;
  }
  if (api_key.empty()) {
    throw std::runtime_error("live LLM requests need an API key (LLM_API_KEY)");
  }

  nlohmann::json body;
  body["model"] = config.generation.model;
  body["prompt"] = prompt;
  body["temperature"] = config.generation.temperature;
  body["max_tokens"] = config.generation.max_length;

  double backoff = config.backoff_seconds;
  std::string last_error = "no attempts made";
  for (int attempt = 0; attempt <= config.max_retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(std::chrono::duration<double>(backoff));
      backoff *= 2.0;
    }
    rate_limit(config.requests_per_minute);

#ifdef CPPHTTPLIB_OPENSSL_SUPPORT
    httplib::SSLClient client(config.endpoint_host, config.endpoint_port);
#else
    if (config.endpoint_port == 443) {
      throw std::runtime_error("live definition fetch over TLS requires an OpenSSL-enabled build");
    }
    httplib::Client client(config.endpoint_host, config.endpoint_port);
#endif
    httplib::Headers headers = {{"Authorization", "Bearer " + api_key}};
    auto res = client.Post(config.endpoint_path, headers, body.dump(), "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status == 429 || res->status >= 500) {
      last_error = "server status " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200) {
      throw std::runtime_error("LLM request failed with status " + std::to_string(res->status));
    }
    nlohmann::json reply = nlohmann::json::parse(res->body);
    const auto& choice = reply.at("choices").at(0);
    std::string text = choice.contains("text")
                           ? choice["text"].get<std::string>()
                           : choice.at("message").at("content").get<std::string>();
    while (!text.empty() && (text.front() == '\n' || text.front() == ' ')) text.erase(0, 1);
    if (text.empty()) {
      last_error = "empty completion";
      continue;
    }
    return text;
  }
  throw std::runtime_error("LLM request failed after " + std::to_string(config.max_retries + 1) +
                           " attempts: " + last_error);
}

TypeDefinition fetch_definition(const std::string& type_name, const ClientConfig& config,
                                DefinitionCache& cache) {
  if (auto hit = cache.find(type_name)) {
    return *hit;
  }
  if (!config.live) {
    throw std::runtime_error("no cached definition for type \"" + type_name +
                             "\" and live mode is disabled");
  }
  TypeDefinition def;
  def.type_name = type_name;
  def.definition_text = llm_complete(
      "Generate an automatic definition for the '" + type_name + "' entity type.", config);
  def.source = "llm";
  def.config = config.generation;
  cache.put(def);
  if (!config.cache_path.empty()) {
    cache.save(config.cache_path);
  }
  return def;
}

TypeReferent embed_referent(const neural::ParamVector& values, const neural::EncoderDims& dims,
                            const std::string& prefix, const TypeDefinition& def) {
  if (def.definition_text.empty()) {
    throw std::invalid_argument("embed_referent: empty definition text for type \"" +
                                def.type_name + "\"");
  }
  std::vector<corpus::Token> toks = corpus::tokenize(def.definition_text);
  if (toks.empty()) {
    throw std::invalid_argument("embed_referent: definition for \"" + def.type_name +
                                "\" tokenizes to nothing");
  }
  std::vector<std::string> tokens;
  tokens.reserve(toks.size());
  for (const corpus::Token& t : toks) tokens.push_back(t.text);

  std::vector<double> H = neural::encode_tokens(values, dims, prefix, tokens);
  TypeReferent ref;
  ref.type_name = def.type_name;
  ref.vector = classifier::span_representation(H, dims.width, 0, static_cast<int>(tokens.size()) - 1);
  ref.provenance = def.source + ": " + def.definition_text;
  return ref;
}

TypeReferent embed_referent(const neural::EncoderParams& sentence_encoder,
                            const TypeDefinition& def) {
  return embed_referent(sentence_encoder.values, sentence_encoder.dims, "", def);
}

ReferentVariant variant_from_string(const std::string& name) {
  if (name == "mcs") return ReferentVariant::Mcs;
  if (name == "random") return ReferentVariant::Random;
  if (name == "name") return ReferentVariant::Name;
  if (name == "example") return ReferentVariant::Example;
  throw std::invalid_argument("unknown referent variant \"" + name +
                              "\" (expected mcs|random|name|example)");
}

std::string variant_to_string(ReferentVariant v) {
  switch (v) {
    case ReferentVariant::Mcs: return "mcs";
    case ReferentVariant::Random: return "random";
    case ReferentVariant::Name: return "name";
    case ReferentVariant::Example: return "example";
  }
  throw std::logic_error("unreachable");
}

std::map<std::string, std::vector<std::string>> load_example_fixtures(const std::string& path) {
  std::map<std::string, std::vector<std::string>> out;
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open example fixture file: " + path);
  }
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      nlohmann::json rec = nlohmann::json::parse(line);
      out[rec.at("type").get<std::string>()] =
          rec.at("examples").get<std::vector<std::string>>();
    } catch (const std::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

namespace {

std::vector<double> random_referent_vector(const std::string& type_name, std::uint64_t seed,
                                           std::size_t width) {
  // Stable per (seed, type): every episode mentioning the type sees the same
  // vector.
  std::mt19937_64 rng(seed ^ neural::fnv1a64(type_name));
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<double> v(width);
  for (double& x : v) x = dist(rng);
  return v;
}

// The definition whose text gets embedded for a non-random variant.
TypeDefinition variant_definition(ReferentVariant variant, const std::string& type,
                                  const ClientConfig& config, DefinitionCache& cache,
                                  const std::map<std::string, std::vector<std::string>>& examples) {
  switch (variant) {
    case ReferentVariant::Mcs:
      return fetch_definition(type, config, cache);
    case ReferentVariant::Name:
      return {type, type, "name", std::nullopt};
    case ReferentVariant::Example: {
      TypeDefinition def = fetch_definition(type, config, cache);
      auto it = examples.find(type);
      if (it == examples.end()) {
        throw std::runtime_error("no example fixtures for type \"" + type + "\"");
      }
      std::string text = def.definition_text;
      for (const std::string& mention : it->second) {
        text += " " + mention;
      }
      return {type, text, "example", def.config};
    }
    case ReferentVariant::Random:
      break;
  }
  throw std::logic_error("variant_definition: random variant has no definition");
}

}  // namespace

std::vector<TypeReferent> build_referents(ReferentVariant variant,
                                          const std::vector<std::string>& types,
                                          const neural::EncoderParams& sentence_encoder,
                                          const ClientConfig& config, DefinitionCache& cache,
                                          const std::map<std::string, std::vector<std::string>>& examples,
                                          std::uint64_t seed) {
  if (types.empty()) {
    throw std::invalid_argument("build_referents: no types requested");
  }
  std::vector<TypeReferent> out;
  out.reserve(types.size());
  for (const std::string& type : types) {
    if (variant == ReferentVariant::Random) {
      TypeReferent ref;
      ref.type_name = type;
      ref.vector = random_referent_vector(type, seed, sentence_encoder.dims.width);
      ref.provenance = "random(" + std::to_string(seed) + ")";
      out.push_back(std::move(ref));
    } else {
      out.push_back(embed_referent(sentence_encoder,
                                   variant_definition(variant, type, config, cache, examples)));
    }
  }
  return out;
}

std::vector<classifier::ReferentInput> build_referent_inputs(
    ReferentVariant variant, const std::vector<std::string>& types, const ClientConfig& config,
    DefinitionCache& cache, const std::map<std::string, std::vector<std::string>>& examples,
    std::uint64_t seed, std::size_t width) {
  if (types.empty()) {
    throw std::invalid_argument("build_referent_inputs: no types requested");
  }
  std::vector<classifier::ReferentInput> out;
  out.reserve(types.size());
  for (const std::string& type : types) {
    classifier::ReferentInput input;
    input.type_name = type;
    if (variant == ReferentVariant::Random) {
      input.fixed = random_referent_vector(type, seed, width);
    } else {
      TypeDefinition def = variant_definition(variant, type, config, cache, examples);
      for (const corpus::Token& t : corpus::tokenize(def.definition_text)) {
        input.tokens.push_back(t.text);
      }
      if (input.tokens.empty()) {
        throw std::runtime_error("definition for type \"" + type + "\" tokenizes to nothing");
      }
    }
    out.push_back(std::move(input));
  }
  return out;
}

classifier::ReferentProvider make_referent_provider(
    ReferentVariant variant, const ClientConfig& config, DefinitionCache& cache,
    std::map<std::string, std::vector<std::string>> examples, std::uint64_t seed,
    std::size_t width) {
  // The cache is captured by reference: live fetches seen by one episode are
  // visible to the next.
  return [variant, config, &cache, examples = std::move(examples), seed,
          width](const std::vector<std::string>& classes) {
    return build_referent_inputs(variant, classes, config, cache, examples, seed, width);
  };
}

}  // namespace fewner::referents
