"""Direction classification: did the intervention increase, decrease, or
not significantly change the outcome, according to the evidence sentence?

The head reads the outcome-vs-sentence match features (which include the
words around wherever the outcome is discussed) plus the intervention
vector and two elementwise interaction blocks. Interactions matter because
the same verb flips meaning with the outcome: "pain decreased" and
"mobility decreased" are opposite findings about the treatment effect on
the measured quantity only in the reader's head; here the label always
tracks the measured quantity, and the features let a linear model couple
outcome identity with the surrounding cue words.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator

from .corpus import Direction
from .encoders import EncoderBackend, HashedEncoder, pair_match_features
from .heads import SoftmaxHead
from .samples import InferenceSample

DIRECTION_ORDER = (Direction.INCREASED, Direction.DECREASED, Direction.NO_DIFFERENCE)


class DirectionClassifier(BaseEstimator):
    """Three-way classifier over (intervention, outcome, evidence sentence)."""

    def __init__(
        self,
        encoder: EncoderBackend | None = None,
        learning_rate: float = 5e-2,
        max_epochs: int = 2000,
        patience: int = 200,
        l2: float = 1e-4,
        use_comparator: bool = False,
    ):
        self.encoder = encoder
        self.learning_rate = learning_rate
        self.max_epochs = max_epochs
        self.patience = patience
        self.l2 = l2
        self.use_comparator = use_comparator

    def _backend(self) -> EncoderBackend:
        backend = getattr(self, "backend_", None)
        if backend is None:
            backend = self.encoder if self.encoder is not None else HashedEncoder()
            self.backend_ = backend
        return backend

    def _features(
        self,
        intervention_tokens: Sequence[str],
        outcome_tokens: Sequence[str],
        evidence_tokens: Sequence[str],
        comparator_tokens: Sequence[str] | None,
    ) -> np.ndarray:
        if not evidence_tokens:
            raise ValueError("cannot infer a direction from an empty evidence sentence")
        backend = self._backend()
        d = backend.dim
        pmf = pair_match_features(backend, outcome_tokens, evidence_tokens)
        o_mean = pmf[:d]
        e_mean = pmf[d : 2 * d]
        i_mean = backend.token_vectors(tuple(intervention_tokens)).mean(axis=0)
        c_block = np.zeros(d)
        if self.use_comparator and comparator_tokens:
            c_block = backend.token_vectors(tuple(comparator_tokens)).mean(axis=0)
        scale = np.sqrt(d)
        return np.concatenate(
            [pmf, i_mean, c_block, o_mean * e_mean * scale, i_mean * e_mean * scale]
        )

    def _sample_features(self, s: InferenceSample) -> np.ndarray:
        return self._features(
            s.intervention_tokens, s.outcome_tokens, s.evidence_tokens, s.comparator_tokens
        )

    def fit(
        self,
        samples: Sequence[InferenceSample],
        dev_samples: Sequence[InferenceSample] | None = None,
    ) -> "DirectionClassifier":
        if not samples:
            raise ValueError("cannot train the direction classifier on no samples")
        present = {s.label for s in samples}
        missing = [d.value for d in DIRECTION_ORDER if d not in present]
        if missing:
            raise ValueError(
                f"direction training data is missing class(es): {missing}"
            )
        index = {d: i for i, d in enumerate(DIRECTION_ORDER)}
        X = np.stack([self._sample_features(s) for s in samples])
        y = np.array([index[s.label] for s in samples])
        dev = None
        if dev_samples:
            dev = (
                np.stack([self._sample_features(s) for s in dev_samples]),
                np.array([index[s.label] for s in dev_samples]),
            )
        self.head_ = SoftmaxHead(
            len(DIRECTION_ORDER),
            lr=self.learning_rate,
            max_epochs=self.max_epochs,
            patience=self.patience,
            l2=self.l2,
        ).fit(X, y, dev, metric="macro_f1")
        return self

    def predict_proba(
        self,
        intervention_tokens: Sequence[str],
        outcome_tokens: Sequence[str],
        evidence_tokens: Sequence[str],
        comparator_tokens: Sequence[str] | None = None,
    ) -> np.ndarray:
        """Probabilities in DIRECTION_ORDER."""
        if not hasattr(self, "head_"):
            raise RuntimeError("direction classifier is not fitted")
        X = self._features(
            intervention_tokens, outcome_tokens, evidence_tokens, comparator_tokens
        )[None, :]
        return self.head_.predict_proba(X)[0]

    def predict(
        self,
        intervention_tokens: Sequence[str],
        outcome_tokens: Sequence[str],
        evidence_tokens: Sequence[str],
        comparator_tokens: Sequence[str] | None = None,
    ) -> tuple[Direction, float]:
        probs = self.predict_proba(
            intervention_tokens, outcome_tokens, evidence_tokens, comparator_tokens
        )
        best = int(np.argmax(probs))
        return DIRECTION_ORDER[best], float(probs[best])

    def save(self, path) -> None:
        from .checkpoints import save_checkpoint
        from .encoders import encoder_config

        save_checkpoint(
            path,
            kind="inference",
            config={
                "learning_rate": self.learning_rate,
                "max_epochs": self.max_epochs,
                "patience": self.patience,
                "l2": self.l2,
                "use_comparator": self.use_comparator,
                "encoder": encoder_config(self._backend()),
            },
            arrays={"W": self.head_.W, "b": self.head_.b},
        )

    @classmethod
    def load(cls, path) -> "DirectionClassifier":
        from .checkpoints import load_checkpoint
        from .encoders import build_encoder

        ck = load_checkpoint(path, expected_kind="inference")
        cfg = ck.config
        model = cls(
            encoder=build_encoder(**cfg["encoder"]),
            learning_rate=cfg["learning_rate"],
            max_epochs=cfg["max_epochs"],
            patience=cfg["patience"],
            l2=cfg["l2"],
            use_comparator=cfg["use_comparator"],
        )
        model.head_ = SoftmaxHead(
            len(DIRECTION_ORDER),
            lr=cfg["learning_rate"],
            max_epochs=cfg["max_epochs"],
            patience=cfg["patience"],
            l2=cfg["l2"],
        )
        model.head_.W = ck.arrays["W"]
        model.head_.b = ck.arrays["b"]
        return model
