"""Structured evidence extraction from randomized-trial abstracts.

The package turns a tokenized abstract into grouped intervention and outcome
entities plus directed comparative findings, via four trainable stages:
mention tagging, evidence sentence detection, role linking, and direction
inference.
"""

from .config import RunConfig, default_config, load_config, write_config
from .corpus import (
    AnnotatedDocument,
    Direction,
    Document,
    Entity,
    EType,
    EvidenceSentence,
    Mention,
    RelationTuple,
    Token,
    corpus_stats,
    document_from_sentences,
    load_corpus,
    load_predictions,
    write_corpus,
    write_predictions,
)
from .encoders import HashedEncoder, PretrainedEncoder, build_encoder
from .errors import (
    ClintrexError,
    ConfigError,
    EncoderLimitError,
    InputError,
    ParseError,
    ValidationError,
)
from .extraction import EvidenceSentenceClassifier, MentionTagger
from .inference import DirectionClassifier
from .linking import InterventionLinker
from .metrics import EvalReport, evaluate_documents
from .pipeline import EvidencePipeline, RunReport, group_mentions
from .samples import EvidenceSample, InferenceSample, LinkSample
from .supervision import (
    Prompt,
    build_samples_from_annotations,
    build_training_corpus,
    load_prompts,
    tune_threshold,
    write_prompts,
)
from .synth import SynthOptions, generate_corpus, make_worked_example

__version__ = "0.1.0"

__all__ = [
    "AnnotatedDocument",
    "ClintrexError",
    "ConfigError",
    "Direction",
    "DirectionClassifier",
    "Document",
    "EncoderLimitError",
    "Entity",
    "EType",
    "EvalReport",
    "EvidencePipeline",
    "EvidenceSample",
    "EvidenceSentence",
    "EvidenceSentenceClassifier",
    "HashedEncoder",
    "InferenceSample",
    "InputError",
    "InterventionLinker",
    "LinkSample",
    "Mention",
    "MentionTagger",
    "ParseError",
    "PretrainedEncoder",
    "Prompt",
    "RelationTuple",
    "RunConfig",
    "RunReport",
    "SynthOptions",
    "Token",
    "ValidationError",
    "build_encoder",
    "build_samples_from_annotations",
    "build_training_corpus",
    "corpus_stats",
    "default_config",
    "document_from_sentences",
    "evaluate_documents",
    "generate_corpus",
    "group_mentions",
    "load_config",
    "load_corpus",
    "load_predictions",
    "load_prompts",
    "make_worked_example",
    "tune_threshold",
    "write_config",
    "write_corpus",
    "write_predictions",
    "write_prompts",
]
