"""Training sample records for the three sentence-level classifiers.

Samples are self-contained (token strings, no document back-references) so a
samples file plus an encoder is everything a head needs to train. They are
serialized one JSON object per line with a ``task`` tag, all three kinds in
one file.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from .corpus import Direction, _open_for_read
from .errors import ParseError

LINK_LABELS = ("primary", "comparator", "unrelated")


@dataclass(frozen=True)
class EvidenceSample:
    """One sentence, labeled 1 if it reports a comparative finding."""

    doc_id: str
    sentence_index: int
    tokens: tuple[str, ...]
    label: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "tokens", tuple(self.tokens))
        if self.label not in (0, 1):
            raise ValueError(f"evidence label must be 0 or 1, got {self.label!r}")
        if not self.tokens:
            raise ValueError("evidence sample has no tokens")


@dataclass(frozen=True)
class LinkSample:
    """A candidate intervention span paired with an evidence sentence."""

    doc_id: str
    sentence_index: int
    span_tokens: tuple[str, ...]
    sentence_tokens: tuple[str, ...]
    label: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "span_tokens", tuple(self.span_tokens))
        object.__setattr__(self, "sentence_tokens", tuple(self.sentence_tokens))
        if self.label not in LINK_LABELS:
            raise ValueError(f"link label must be one of {LINK_LABELS}, got {self.label!r}")
        if not self.span_tokens or not self.sentence_tokens:
            raise ValueError("link sample has an empty token sequence")


@dataclass(frozen=True)
class InferenceSample:
    """An (intervention, outcome, evidence sentence) triple with a direction."""

    doc_id: str
    sentence_index: int
    intervention_tokens: tuple[str, ...]
    outcome_tokens: tuple[str, ...]
    evidence_tokens: tuple[str, ...]
    label: Direction
    comparator_tokens: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "intervention_tokens", tuple(self.intervention_tokens))
        object.__setattr__(self, "outcome_tokens", tuple(self.outcome_tokens))
        object.__setattr__(self, "evidence_tokens", tuple(self.evidence_tokens))
        if self.comparator_tokens is not None:
            object.__setattr__(self, "comparator_tokens", tuple(self.comparator_tokens))
        object.__setattr__(self, "label", Direction(self.label))
        if not (self.intervention_tokens and self.outcome_tokens and self.evidence_tokens):
            raise ValueError("inference sample has an empty token sequence")


def write_samples(
    samples: Iterable[EvidenceSample | LinkSample | InferenceSample],
    path: str | Path,
) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for s in samples:
            if isinstance(s, EvidenceSample):
                rec = {
                    "task": "evidence",
                    "doc_id": s.doc_id,
                    "sentence": s.sentence_index,
                    "tokens": list(s.tokens),
                    "label": s.label,
                }
            elif isinstance(s, LinkSample):
                rec = {
                    "task": "link",
                    "doc_id": s.doc_id,
                    "sentence": s.sentence_index,
                    "span": list(s.span_tokens),
                    "tokens": list(s.sentence_tokens),
                    "label": s.label,
                }
            elif isinstance(s, InferenceSample):
                rec = {
                    "task": "infer",
                    "doc_id": s.doc_id,
                    "sentence": s.sentence_index,
                    "i": list(s.intervention_tokens),
                    "o": list(s.outcome_tokens),
                    "tokens": list(s.evidence_tokens),
                    "c": None if s.comparator_tokens is None else list(s.comparator_tokens),
                    "label": s.label.value,
                }
            else:
                raise TypeError(f"unknown sample type {type(s).__name__}")
            fh.write(json.dumps(rec, ensure_ascii=False))
            fh.write("\n")


def load_samples(
    path: str | Path,
) -> dict[str, list]:
    """Read a samples file into {"evidence": [...], "link": [...], "infer": [...]}."""
    out: dict[str, list] = {"evidence": [], "link": [], "infer": []}
    with _open_for_read(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                raise ParseError(path, lineno, "blank line")
            try:
                rec = json.loads(line)
                task = rec["task"]
                if task == "evidence":
                    out["evidence"].append(
                        EvidenceSample(
                            rec["doc_id"], int(rec["sentence"]), tuple(rec["tokens"]), int(rec["label"])
                        )
                    )
                elif task == "link":
                    out["link"].append(
                        LinkSample(
                            rec["doc_id"],
                            int(rec["sentence"]),
                            tuple(rec["span"]),
                            tuple(rec["tokens"]),
                            rec["label"],
                        )
                    )
                elif task == "infer":
                    comp = rec.get("c")
                    out["infer"].append(
                        InferenceSample(
                            rec["doc_id"],
                            int(rec["sentence"]),
                            tuple(rec["i"]),
                            tuple(rec["o"]),
                            tuple(rec["tokens"]),
                            Direction(rec["label"]),
                            None if comp is None else tuple(comp),
                        )
                    )
                else:
                    raise ValueError(f"unknown task {task!r}")
            except (KeyError, TypeError, ValueError) as exc:
                raise ParseError(path, lineno, f"malformed sample: {exc!r}") from exc
    return out
