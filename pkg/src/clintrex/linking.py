"""Attach intervention and comparator entities to evidence sentences.

For each evidence sentence, every intervention-type entity in the document
is a candidate; a three-way head scores it as the sentence's primary
intervention, its comparator, or unrelated. The best primary is always
taken; a comparator is only emitted when its comparator probability beats
its unrelated probability, since many findings name no comparator.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator

from .corpus import Document, Entity, EType, Mention
from .encoders import EncoderBackend, HashedEncoder, pair_match_features
from .heads import SoftmaxHead
from .samples import LINK_LABELS, LinkSample


@dataclass(frozen=True)
class EvidenceLink:
    """Linker decision for one evidence sentence."""

    doc_id: str
    sentence_index: int
    intervention: str
    intervention_prob: float
    comparator: str | None
    comparator_prob: float


class InterventionLinker(BaseEstimator):
    """Sentence-pair classifier over (candidate span, evidence sentence)."""

    def __init__(
        self,
        encoder: EncoderBackend | None = None,
        learning_rate: float = 5e-2,
        max_epochs: int = 2000,
        patience: int = 200,
        l2: float = 1e-4,
    ):
        self.encoder = encoder
        self.learning_rate = learning_rate
        self.max_epochs = max_epochs
        self.patience = patience
        self.l2 = l2

    def _backend(self) -> EncoderBackend:
        backend = getattr(self, "backend_", None)
        if backend is None:
            backend = self.encoder if self.encoder is not None else HashedEncoder()
            self.backend_ = backend
        return backend

    def _features(
        self, span_tokens: Sequence[str], sentence_tokens: Sequence[str]
    ) -> np.ndarray:
        return pair_match_features(self._backend(), span_tokens, sentence_tokens)

    def fit(
        self,
        samples: Sequence[LinkSample],
        dev_samples: Sequence[LinkSample] | None = None,
    ) -> "InterventionLinker":
        if not samples:
            raise ValueError("cannot train the linker on no samples")
        present = {s.label for s in samples}
        missing = [lab for lab in LINK_LABELS if lab not in present]
        if missing:
            raise ValueError(f"linker training data is missing label(s): {missing}")
        label_index = {lab: i for i, lab in enumerate(LINK_LABELS)}
        X = np.stack([self._features(s.span_tokens, s.sentence_tokens) for s in samples])
        y = np.array([label_index[s.label] for s in samples])
        dev = None
        if dev_samples:
            dev = (
                np.stack(
                    [self._features(s.span_tokens, s.sentence_tokens) for s in dev_samples]
                ),
                np.array([label_index[s.label] for s in dev_samples]),
            )
        self.head_ = SoftmaxHead(
            len(LINK_LABELS),
            lr=self.learning_rate,
            max_epochs=self.max_epochs,
            patience=self.patience,
            l2=self.l2,
        ).fit(X, y, dev)
        return self

    def score_candidates(
        self,
        sentence_tokens: Sequence[str],
        candidate_spans: Sequence[Sequence[str]],
    ) -> np.ndarray:
        """Probabilities (n_candidates, 3) with columns (primary, comparator,
        unrelated); each row sums to 1."""
        if not hasattr(self, "head_"):
            raise RuntimeError("linker is not fitted")
        if not candidate_spans:
            raise ValueError("no candidate spans to score")
        X = np.stack([self._features(span, sentence_tokens) for span in candidate_spans])
        return self.head_.predict_proba(X)

    def link_evidence(
        self,
        doc: Document,
        entities: Sequence[Entity],
        mentions: Sequence[Mention],
        evidence: Sequence[int],
    ) -> list[EvidenceLink]:
        """One EvidenceLink per evidence sentence that has any intervention
        candidate. Candidates are ordered by first mention position, so the
        result does not depend on the order entities are passed in."""
        by_id = {m.mention_id: m for m in mentions}

        def first_pos(e: Entity) -> tuple[int, int, str]:
            starts = sorted(
                (by_id[mid].token_start, by_id[mid].token_end) for mid in e.mentions
            )
            return (*starts[0], e.entity_id)

        candidates = sorted(
            (e for e in entities if e.etype is EType.INTERVENTION), key=first_pos
        )
        links: list[EvidenceLink] = []
        for s in sorted(evidence):
            if not candidates:
                break
            spans = []
            for e in candidates:
                span = self._sentence_span(doc, e, by_id, s)
                spans.append(span)
            probs = self.score_candidates(doc.sentence_surfaces(s), spans)
            primary = int(np.argmax(probs[:, 0]))
            comp: str | None = None
            comp_prob = 0.0
            best = -1.0
            for idx, e in enumerate(candidates):
                if idx == primary:
                    continue
                if probs[idx, 1] > best:
                    best = probs[idx, 1]
                    if probs[idx, 1] > probs[idx, 2]:
                        comp = e.entity_id
                        comp_prob = float(probs[idx, 1])
                    else:
                        comp = None
                        comp_prob = 0.0
            links.append(
                EvidenceLink(
                    doc.doc_id,
                    s,
                    candidates[primary].entity_id,
                    float(probs[primary, 0]),
                    comp,
                    comp_prob,
                )
            )
        return links

    @staticmethod
    def _sentence_span(
        doc: Document,
        entity: Entity,
        mentions_by_id: dict[str, Mention],
        sentence: int,
    ) -> tuple[str, ...]:
        ts, te = doc.sentences[sentence]
        members = sorted(
            (mentions_by_id[mid] for mid in entity.mentions),
            key=lambda m: (m.token_start, m.token_end),
        )
        for m in members:
            if ts <= m.token_start and m.token_end <= te:
                return tuple(doc.token_surfaces(m.token_start, m.token_end))
        first = members[0]
        return tuple(doc.token_surfaces(first.token_start, first.token_end))

    def save(self, path) -> None:
        from .checkpoints import save_checkpoint
        from .encoders import encoder_config

        save_checkpoint(
            path,
            kind="linker",
            config={
                "learning_rate": self.learning_rate,
                "max_epochs": self.max_epochs,
                "patience": self.patience,
                "l2": self.l2,
                "encoder": encoder_config(self._backend()),
            },
            arrays={"W": self.head_.W, "b": self.head_.b},
        )

    @classmethod
    def load(cls, path) -> "InterventionLinker":
        from .checkpoints import load_checkpoint
        from .encoders import build_encoder

        ck = load_checkpoint(path, expected_kind="linker")
        cfg = ck.config
        model = cls(
            encoder=build_encoder(**cfg["encoder"]),
            learning_rate=cfg["learning_rate"],
            max_epochs=cfg["max_epochs"],
            patience=cfg["patience"],
            l2=cfg["l2"],
        )
        model.head_ = SoftmaxHead(
            len(LINK_LABELS),
            lr=cfg["learning_rate"],
            max_epochs=cfg["max_epochs"],
            patience=cfg["patience"],
            l2=cfg["l2"],
        )
        model.head_.W = ck.arrays["W"]
        model.head_.b = ck.arrays["b"]
        return model
