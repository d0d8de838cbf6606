#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "fewner/corpus.hpp"
#include "fewner/detector.hpp"
#include "fewner/episodes.hpp"
#include "fewner/neural.hpp"
#include "fewner/tagging.hpp"

using namespace fewner;
using detector::DetectorConfig;
using detector::SpanDetectorParams;

namespace {

corpus::LabeledSentence tagged_sentence() {
  corpus::LabeledSentence s;
  s.tokens = {"the", "golden", "gate", "bridge", "opened"};
  s.tags = std::vector<tagging::Tag>{tagging::Tag::O, tagging::Tag::B, tagging::Tag::I,
                                     tagging::Tag::E, tagging::Tag::O};
  return s;
}

std::vector<double> token_cross_entropies(const SpanDetectorParams& params,
                                          const corpus::LabeledSentence& s) {
  auto emissions = detector::emission_log_probs(params, s.tokens);
  std::vector<double> ce;
  for (std::size_t i = 0; i < s.tokens.size(); ++i) {
    ce.push_back(-emissions[i][static_cast<std::size_t>((*s.tags)[i])]);
  }
  return ce;
}

DetectorConfig small_config() {
  DetectorConfig c;
  c.encoder = {256, 8, 1};
  c.inner_steps = 1;
  c.batch_episodes = 2;
  c.total_meta_steps = 10;
  c.eval_interval = 5;
  c.pretrain_steps = 40;
  c.pretrain_batch = 8;
  return c;
}

}  // namespace

TEST_SUITE("detector") {

TEST_CASE("zero parameters emit the uniform distribution") {
  SpanDetectorParams params = detector::init_detector({64, 4, 1}, 3);
  params.values = neural::zeros_like(params.values);
  auto emissions = detector::emission_log_probs(params, {"a", "b", "c"});
  CHECK(emissions.size() == 3);
  for (const auto& row : emissions) {
    for (double lp : row) CHECK(lp == doctest::Approx(std::log(0.2)).epsilon(1e-12));
  }
}

TEST_CASE("emission rows are normalized log-probabilities") {
  SpanDetectorParams params = detector::init_detector({128, 6, 1}, 5);
  auto emissions =
      detector::emission_log_probs(params, {"one", "two", "three", "four", "five", "six", "seven"});
  CHECK(emissions.size() == 7);
  for (const auto& row : emissions) {
    double mass = 0.0;
    for (double lp : row) mass += std::exp(lp);
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("zero-parameter losses reduce to ln 5 closed forms") {
  SpanDetectorParams params = detector::init_detector({64, 4, 1}, 3);
  params.values = neural::zeros_like(params.values);
  const corpus::LabeledSentence s = tagged_sentence();

  const double ln5 = std::log(5.0);
  CHECK(detector::detector_loss(params.values, params.dims, s, 0.0).loss ==
        doctest::Approx(ln5).epsilon(1e-12));
  // Every token has the same cross entropy, so mean + 2 * max = 3 * ln 5.
  CHECK(detector::detector_loss(params.values, params.dims, s, 2.0).loss ==
        doctest::Approx(3.0 * ln5).epsilon(1e-12));
}

TEST_CASE("loss decomposes into mean plus zeta times max cross entropy") {
  SpanDetectorParams params = detector::init_detector({128, 6, 1}, 5);
  const corpus::LabeledSentence s = tagged_sentence();
  std::vector<double> ce = token_cross_entropies(params, s);
  const double mean = std::accumulate(ce.begin(), ce.end(), 0.0) / ce.size();
  const double peak = *std::max_element(ce.begin(), ce.end());

  CHECK(detector::detector_loss(params.values, params.dims, s, 0.0).loss ==
        doctest::Approx(mean).epsilon(1e-12));
  CHECK(detector::detector_loss(params.values, params.dims, s, 5.0).loss ==
        doctest::Approx(mean + 5.0 * peak).epsilon(1e-12));
}

TEST_CASE("loss input validation") {
  SpanDetectorParams params = detector::init_detector({64, 4, 1}, 3);
  corpus::LabeledSentence untagged;
  untagged.tokens = {"just", "tokens"};
  CHECK_THROWS_AS(detector::detector_loss(params.values, params.dims, untagged, 0.0),
                  std::invalid_argument);
  corpus::LabeledSentence empty;
  empty.tags = std::vector<tagging::Tag>{};
  CHECK_THROWS_AS(detector::detector_loss(params.values, params.dims, empty, 0.0),
                  std::invalid_argument);
  CHECK_THROWS_AS(detector::detector_batch_loss(params.values, params.dims, {}, 0.0),
                  std::invalid_argument);
}

TEST_CASE("batch loss is the mean of sentence losses") {
  SpanDetectorParams params = detector::init_detector({128, 6, 1}, 5);
  corpus::LabeledSentence a = tagged_sentence();
  corpus::LabeledSentence b;
  b.tokens = {"visit", "paris"};
  b.tags = std::vector<tagging::Tag>{tagging::Tag::O, tagging::Tag::S};

  std::vector<corpus::LabeledSentence> batch{a, b};
  const double la = detector::detector_loss(params.values, params.dims, a, 2.0).loss;
  const double lb = detector::detector_loss(params.values, params.dims, b, 2.0).loss;
  CHECK(detector::detector_batch_loss(params.values, params.dims, batch, 2.0).loss ==
        doctest::Approx(0.5 * (la + lb)).epsilon(1e-12));
}

TEST_CASE("detector gradient agrees with finite differences") {
  SpanDetectorParams params = detector::init_detector({32, 4, 1}, 7);
  const corpus::LabeledSentence s = tagged_sentence();
  auto loss = [&](const neural::ParamVector& values, const corpus::LabeledSentence& sent) {
    return detector::detector_loss(values, params.dims, sent, 2.0);
  };
  neural::GradCheckReport report = neural::finite_diff_check(loss, params.values, s);
  CHECK(report.checked_coordinates == params.values.total_size());
  CHECK(report.max_rel_error < 1e-5);
}

TEST_CASE("steppingstone pretraining descends and is deterministic") {
  corpus::Dataset data = corpus::generate_synthetic_corpus(4, 24, 11);
  DetectorConfig config = small_config();

  detector::PretrainResult run = detector::pretrain_steppingstone(data, config, 21);
  REQUIRE(!run.log.empty());
  CHECK(run.log.back().loss < run.log.front().loss);
  CHECK(neural::all_finite(run.params.values));

  detector::PretrainResult again = detector::pretrain_steppingstone(data, config, 21);
  CHECK(again.params == run.params);

  const auto path = std::filesystem::temp_directory_path() / "fewner_det_ckpt.json";
  neural::save_checkpoint(run.params.values, "span_detector", {{"width", config.encoder.width}},
                          path.string());
  CHECK(neural::load_checkpoint(path.string()).params == run.params.values);
  std::filesystem::remove(path);
}

TEST_CASE("meta training with zero inner steps and zero beta is the identity") {
  corpus::Dataset data = corpus::generate_synthetic_corpus(4, 24, 13);
  auto eps = episodes::sample_episodes(data, data.class_inventory, 2, 1, 1, 4, 50);

  DetectorConfig config = small_config();
  config.inner_steps = 0;
  config.beta = 0.0;
  config.total_meta_steps = 3;

  SpanDetectorParams init = detector::init_detector(config.encoder, 9);
  detector::MetaTrainResult out = detector::meta_train_detector(init, eps, {}, config, 33);
  CHECK(out.params == init);
}

TEST_CASE("meta training logs validation F1 and is deterministic") {
  corpus::Dataset data = corpus::generate_synthetic_corpus(5, 24, 17);
  auto train = episodes::sample_episodes(data, data.class_inventory, 2, 1, 1, 6, 60);
  auto val = episodes::sample_episodes(data, data.class_inventory, 2, 1, 1, 2, 70);

  DetectorConfig config = small_config();
  SpanDetectorParams init = detector::init_detector(config.encoder, 9);
  detector::MetaTrainResult out = detector::meta_train_detector(init, train, val, config, 33);

  bool has_eval = false;
  for (const auto& entry : out.log) {
    if (entry.val_f1 >= 0.0) {
      has_eval = true;
      CHECK(entry.val_f1 <= 1.0);
      CHECK(entry.step % config.eval_interval == 0);
    }
  }
  CHECK(has_eval);
  CHECK(detector::meta_train_detector(init, train, val, config, 33).params == out.params);
}

TEST_CASE("zero adapt steps reduce to plain decoding, and outputs stay well-formed") {
  corpus::Dataset data = corpus::generate_synthetic_corpus(4, 24, 19);
  episodes::Episode ep = episodes::sample_episode(data, data.class_inventory, 2, 1, 2, 44);

  DetectorConfig config = small_config();
  config.adapt_steps = 0;
  SpanDetectorParams params = detector::init_detector(config.encoder, 9);

  auto detected = detector::adapt_and_detect(params, ep, config);
  REQUIRE(detected.size() == ep.query.size());

  const tagging::TransitionMask mask = tagging::build_transition_mask();
  for (std::size_t q = 0; q < ep.query.size(); ++q) {
    // Same params, so the direct Viterbi decode must match span for span.
    auto emissions = detector::emission_log_probs(params, ep.query[q].tokens);
    auto tags = tagging::viterbi_decode(emissions, mask);
    auto direct = tagging::decode_bioes_to_spans(tags).spans;
    REQUIRE(detected[q].size() == direct.size());
    for (std::size_t i = 0; i < direct.size(); ++i) {
      CHECK(detected[q][i].start == direct[i].start);
      CHECK(detected[q][i].end == direct[i].end);
    }
    // Well-formed: encoding the predicted spans back to BIOES must not throw.
    auto sorted = detected[q];
    std::sort(sorted.begin(), sorted.end(),
              [](const tagging::Span& a, const tagging::Span& b) { return a.start < b.start; });
    CHECK_NOTHROW(
        tagging::encode_spans_to_bioes(static_cast<int>(ep.query[q].tokens.size()), sorted));
  }

  const double f1 = detector::evaluate_span_f1(params, {ep}, config);
  CHECK(f1 >= 0.0);
  CHECK(f1 <= 1.0);
}

}  // TEST_SUITE
