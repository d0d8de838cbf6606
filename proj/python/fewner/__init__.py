"""Few-shot NER toolkit: BIOES span detection plus referent-grounded typing."""

from ._core import (
    build_ner_prompt,
    cli,
    convergence_steps,
    decode_bioes,
    encode_bioes,
    micro_f1,
    parse_ner_response,
    run_experiment,
    tokenize,
    viterbi_decode,
)

__all__ = [
    "build_ner_prompt",
    "cli",
    "convergence_steps",
    "decode_bioes",
    "encode_bioes",
    "micro_f1",
    "parse_ner_response",
    "run_experiment",
    "tokenize",
    "viterbi_decode",
]
