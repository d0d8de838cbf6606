#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <nlohmann/json.hpp>

#include "fewner/cli.hpp"
#include "fewner/corpus.hpp"
#include "fewner/experiment.hpp"
#include "fewner/llm_baseline.hpp"
#include "fewner/metrics.hpp"
#include "fewner/tagging.hpp"

namespace py = pybind11;
using namespace fewner;

namespace {

using SpanTuple = std::tuple<int, int, std::string>;

std::vector<tagging::Span> to_spans(const std::vector<SpanTuple>& tuples) {
  std::vector<tagging::Span> spans;
  spans.reserve(tuples.size());
  for (const auto& [start, end, type] : tuples) spans.push_back({start, end, type});
  return spans;
}

std::vector<SpanTuple> from_spans(const std::vector<tagging::Span>& spans) {
  std::vector<SpanTuple> tuples;
  tuples.reserve(spans.size());
  for (const auto& s : spans) tuples.emplace_back(s.start, s.end, s.type);
  return tuples;
}

std::vector<tagging::Tag> to_tags(const std::vector<std::string>& symbols) {
  std::vector<tagging::Tag> tags;
  tags.reserve(symbols.size());
  for (const std::string& s : symbols) {
    if (s.size() != 1) throw std::invalid_argument("tag symbol must be one of B I O E S: " + s);
    auto tag = tagging::tag_from_char(s[0]);
    if (!tag) throw std::invalid_argument("tag symbol must be one of B I O E S: " + s);
    tags.push_back(*tag);
  }
  return tags;
}

std::vector<std::string> from_tags(const std::vector<tagging::Tag>& tags) {
  std::vector<std::string> symbols;
  symbols.reserve(tags.size());
  for (tagging::Tag t : tags) symbols.emplace_back(1, tagging::tag_to_char(t));
  return symbols;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "few-shot NER core: BIOES tagging, span pipeline, metrics, prompt baseline";

  m.def(
      "encode_bioes",
      [](int n_tokens, const std::vector<SpanTuple>& spans) {
        return from_tags(tagging::encode_spans_to_bioes(n_tokens, to_spans(spans)));
      },
      py::arg("n_tokens"), py::arg("spans"),
      "Non-overlapping (start, end, type) spans -> BIOES tag symbols.");

  m.def(
      "decode_bioes",
      [](const std::vector<std::string>& symbols) {
        tagging::DecodeResult r = tagging::decode_bioes_to_spans(to_tags(symbols));
        return py::make_tuple(from_spans(r.spans), r.dropped_fragments, r.dropped_tokens);
      },
      py::arg("tags"),
      "BIOES tag symbols -> ((start, end, type) spans, dropped_fragments, dropped_tokens).");

  m.def(
      "viterbi_decode",
      [](const std::vector<tagging::EmissionRow>& emissions) {
        static const tagging::TransitionMask mask = tagging::build_transition_mask();
        return from_tags(tagging::viterbi_decode(emissions, mask));
      },
      py::arg("emissions"),
      "Per-token scores over (B, I, O, E, S) -> best grammar-accepted tag sequence.");

  m.def(
      "tokenize",
      [](const std::string& text) {
        std::vector<std::string> out;
        for (const auto& token : corpus::tokenize(text)) out.push_back(token.text);
        return out;
      },
      py::arg("text"), "Lowercased word/punctuation tokens.");

  m.def(
      "micro_f1",
      [](const std::vector<std::vector<SpanTuple>>& predicted,
         const std::vector<std::vector<SpanTuple>>& gold, bool ignore_types) {
        std::vector<std::vector<tagging::Span>> p, g;
        for (const auto& s : predicted) p.push_back(to_spans(s));
        for (const auto& s : gold) g.push_back(to_spans(s));
        metrics::EvalReport r = metrics::micro_f1(p, g, ignore_types);
        py::dict out;
        out["precision"] = r.precision;
        out["recall"] = r.recall;
        out["f1"] = r.f1;
        out["tp"] = r.totals.tp;
        out["fp"] = r.totals.fp;
        out["fn"] = r.totals.fn;
        return out;
      },
      py::arg("predicted"), py::arg("gold"), py::arg("ignore_types") = false,
      "Exact-match span micro-F1 over per-sentence (start, end, type) lists.");

  m.def(
      "convergence_steps",
      [](const std::vector<std::pair<int, double>>& points, double epsilon, int patience) {
        return metrics::convergence_steps({points}, epsilon, patience);
      },
      py::arg("points"), py::arg("epsilon"), py::arg("patience"),
      "First recorded step whose following patience window stays within epsilon of the "
      "curve's maximum; the final step when none does.");

  m.def(
      "build_ner_prompt",
      [](const std::vector<std::string>& entity_list,
         const std::vector<std::pair<std::vector<std::string>, std::vector<std::string>>>& support,
         const std::vector<std::vector<std::string>>& query_tokens) {
        std::vector<corpus::LabeledSentence> sentences;
        for (const auto& [tokens, labels] : support) {
          if (tokens.size() != labels.size()) {
            throw std::invalid_argument("support tokens and labels must align");
          }
          corpus::LabeledSentence s;
          s.tokens = tokens;
          s.spans = llm::group_token_labels(labels);
          sentences.push_back(std::move(s));
        }
        return llm::build_ner_prompt(entity_list, sentences, query_tokens).full_text();
      },
      py::arg("entity_list"), py::arg("support"), py::arg("query_tokens"),
      "Three-section tagging prompt. support: [(tokens, token_labels), ...].");

  m.def(
      "parse_ner_response",
      [](const std::string& text, const std::vector<std::vector<std::string>>& query_tokens,
         const std::vector<std::string>& valid_labels) {
        llm::ParsedResponse r = llm::parse_ner_response(text, query_tokens, valid_labels);
        std::vector<bool> flags(r.parsed_ok.begin(), r.parsed_ok.end());
        return py::make_tuple(r.labels, flags);
      },
      py::arg("text"), py::arg("query_tokens"), py::arg("valid_labels"),
      "Completion text -> (per-token labels, per-sentence parsed_ok flags).");

  m.def(
      "run_experiment",
      [](const std::string& config_json, const std::string& out_dir) {
        experiment::ExperimentConfig cfg =
            experiment::config_from_json(nlohmann::json::parse(config_json));
        experiment::ExperimentResult result = experiment::run_full_experiment(cfg, out_dir);
        return result.report.dump(2);
      },
      py::arg("config_json"), py::arg("out_dir"),
      "Resumable end-to-end pipeline; returns the aggregate report as a JSON string.");

  m.def(
      "cli",
      [](const std::vector<std::string>& args) { return cli::dispatch(args); },
      py::arg("args"), "Run a command-line invocation; returns the exit status.");
}
