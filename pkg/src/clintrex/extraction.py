"""Mention extraction and evidence sentence classification.

MentionTagger runs a small bidirectional recurrent network over frozen token
vectors, projects the hidden states to per-label emission scores, and trains
a linear-chain CRF on top with Adam. Everything is explicit numpy so two
runs with the same seed produce bit-identical parameters.

EvidenceSentenceClassifier is a logistic head over the sentence mean vector
plus a length feature, thresholded to pick the sentences that state results.
"""

from __future__ import annotations

import logging
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator

from . import metrics
from .corpus import AnnotatedDocument, Document, EType, EvidenceSentence, Mention
from .crf import TagSet, crf_nll_and_grad, decode_spans, spans_to_labels, viterbi_decode
from .encoders import EncoderBackend, HashedEncoder
from .heads import BinaryHead
from .optim import Adam
from .samples import EvidenceSample

logger = logging.getLogger(__name__)

TYPE_CODES = {EType.INTERVENTION: "INT", EType.OUTCOME: "OUT"}
CODE_TYPES = {v: k for k, v in TYPE_CODES.items()}


def _gold_sentence_labels(
    ad: AnnotatedDocument, sentence: int, tagset: TagSet
) -> np.ndarray:
    ts, te = ad.document.sentences[sentence]
    spans = [
        (TYPE_CODES[m.etype], m.token_start - ts, m.token_end - ts)
        for m in ad.mentions
        if ts <= m.token_start and m.token_end <= te
    ]
    return spans_to_labels(spans, te - ts, tagset)


class MentionTagger(BaseEstimator):
    """BIO tagger for intervention and outcome mentions."""

    def __init__(
        self,
        encoder: EncoderBackend | None = None,
        hidden_size: int = 32,
        learning_rate: float = 1e-3,
        max_epochs: int = 20,
        patience: int = 5,
        seed: int = 0,
    ):
        self.encoder = encoder
        self.hidden_size = hidden_size
        self.learning_rate = learning_rate
        self.max_epochs = max_epochs
        self.patience = patience
        self.seed = seed

    # -------------------------------------------------------------- setup

    def _backend(self) -> EncoderBackend:
        backend = getattr(self, "backend_", None)
        if backend is None:
            backend = self.encoder if self.encoder is not None else HashedEncoder()
            self.backend_ = backend
        return backend

    def _init_params(self, dim: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
        h = self.hidden_size
        L = self.tagset_.num_labels
        u = lambda *shape: rng.uniform(-0.1, 0.1, size=shape)
        return {
            "Wf": u(dim, h),
            "Uf": u(h, h),
            "bf": np.zeros(h),
            "Wb": u(dim, h),
            "Ub": u(h, h),
            "bb": np.zeros(h),
            "Wo": u(2 * h, L),
            "bo": np.zeros(L),
            "T": np.zeros((self.tagset_.size, self.tagset_.size)),
        }

    # ------------------------------------------------------------ network

    def _sentence_forward(self, X: np.ndarray) -> tuple[np.ndarray, dict]:
        p = self.params_
        n = X.shape[0]
        h = self.hidden_size
        hf = np.zeros((n + 1, h))
        for t in range(n):
            hf[t + 1] = np.tanh(X[t] @ p["Wf"] + hf[t] @ p["Uf"] + p["bf"])
        hb = np.zeros((n + 1, h))
        for t in range(n - 1, -1, -1):
            hb[t] = np.tanh(X[t] @ p["Wb"] + hb[t + 1] @ p["Ub"] + p["bb"])
        H = np.hstack([hf[1:], hb[:n]])
        emissions = H @ p["Wo"] + p["bo"]
        return emissions, {"X": X, "hf": hf, "hb": hb, "H": H}

    def _sentence_backward(self, cache: dict, d_em: np.ndarray) -> dict[str, np.ndarray]:
        p = self.params_
        X, hf, hb, H = cache["X"], cache["hf"], cache["hb"], cache["H"]
        n = X.shape[0]
        h = self.hidden_size
        grads = {
            "Wo": H.T @ d_em,
            "bo": d_em.sum(axis=0),
            "Wf": np.zeros_like(p["Wf"]),
            "Uf": np.zeros_like(p["Uf"]),
            "bf": np.zeros_like(p["bf"]),
            "Wb": np.zeros_like(p["Wb"]),
            "Ub": np.zeros_like(p["Ub"]),
            "bb": np.zeros_like(p["bb"]),
        }
        dH = d_em @ p["Wo"].T
        d_forward = dH[:, :h]
        d_backward = dH[:, h:]
        # forward cells: hf[t+1] feeds hf[t+2], so walk time backwards
        carry = np.zeros(h)
        for t in range(n - 1, -1, -1):
            g = (d_forward[t] + carry) * (1.0 - hf[t + 1] ** 2)
            grads["Wf"] += np.outer(X[t], g)
            grads["Uf"] += np.outer(hf[t], g)
            grads["bf"] += g
            carry = g @ p["Uf"].T
        # backward cells: hb[t] feeds hb[t-1], so walk time forwards
        carry = np.zeros(h)
        for t in range(n):
            g = (d_backward[t] + carry) * (1.0 - hb[t] ** 2)
            grads["Wb"] += np.outer(X[t], g)
            grads["Ub"] += np.outer(hb[t + 1], g)
            grads["bb"] += g
            carry = g @ p["Ub"].T
        return grads

    def _sentence_loss_grads(
        self, X: np.ndarray, gold: np.ndarray
    ) -> tuple[float, dict[str, np.ndarray]]:
        emissions, cache = self._sentence_forward(X)
        nll, d_em, d_tr = crf_nll_and_grad(emissions, self.params_["T"], gold, self.tagset_)
        grads = self._sentence_backward(cache, d_em)
        grads["T"] = d_tr
        return nll, grads

    # ----------------------------------------------------------- training

    def fit(
        self,
        documents: Sequence[AnnotatedDocument],
        dev_documents: Sequence[AnnotatedDocument] | None = None,
    ) -> "MentionTagger":
        if not documents:
            raise ValueError("cannot train the tagger on an empty document list")
        for etype in EType:
            if not any(m.etype is etype for d in documents for m in d.mentions):
                logger.warning(
                    "training data contains no %s mentions; the tagger will "
                    "never predict that type",
                    etype.value,
                )
        backend = self._backend()
        self.tagset_ = TagSet(tuple(TYPE_CODES[t] for t in EType))
        rng = np.random.default_rng(self.seed)
        self.params_ = self._init_params(backend.dim, rng)
        opt = Adam(self.params_, lr=self.learning_rate)

        units: list[tuple[np.ndarray, np.ndarray]] = []
        for ad in documents:
            for s in range(ad.document.num_sentences):
                X = backend.encode_tokens(ad.document, sentence=s)
                units.append((X, _gold_sentence_labels(ad, s, self.tagset_)))

        best_f1 = -np.inf
        best_params = None
        stale = 0
        self.history_: list[float] = []
        self.epochs_run_ = 0
        for epoch in range(self.max_epochs):
            for idx in rng.permutation(len(units)):
                X, gold = units[idx]
                _, grads = self._sentence_loss_grads(X, gold)
                opt.step(grads)
            self.epochs_run_ = epoch + 1
            if dev_documents is None:
                continue
            f1 = self._dev_f1(dev_documents)
            self.history_.append(f1)
            logger.info("tagger epoch %d: dev token F1 %.4f", epoch + 1, f1)
            if f1 > best_f1 + 1e-12:
                best_f1 = f1
                best_params = {k: v.copy() for k, v in self.params_.items()}
                stale = 0
            else:
                stale += 1
                if stale >= self.patience:
                    break
        if best_params is not None:
            self.params_ = best_params
        self.dev_f1_ = best_f1 if dev_documents is not None else None
        return self

    def _dev_f1(self, dev_documents: Sequence[AnnotatedDocument]) -> float:
        gold = [m for d in dev_documents for m in d.mentions]
        pred = [
            m for d in dev_documents for m in self.predict_document(d.document)
        ]
        return metrics.token_prf(gold, pred)["overall"].f1

    # ---------------------------------------------------------- inference

    def predict_document(self, doc: Document) -> list[Mention]:
        """Non-overlapping typed mentions, in document order, ids m0, m1, ..."""
        if not hasattr(self, "params_"):
            raise RuntimeError("tagger is not fitted")
        backend = self._backend()
        mentions: list[Mention] = []
        for s in range(doc.num_sentences):
            ts, _ = doc.sentences[s]
            X = backend.encode_tokens(doc, sentence=s)
            if X.shape[0] == 0:
                continue
            emissions, _ = self._sentence_forward(X)
            path = viterbi_decode(emissions, self.params_["T"], self.tagset_)
            for code, start, end in decode_spans(path, self.tagset_):
                mentions.append(
                    Mention(
                        f"m{len(mentions)}",
                        doc.doc_id,
                        ts + start,
                        ts + end,
                        CODE_TYPES[code],
                    )
                )
        return mentions

    def predict(self, documents: Sequence[Document]) -> list[list[Mention]]:
        return [self.predict_document(d) for d in documents]

    # --------------------------------------------------------- checkpoint

    def save(self, path) -> None:
        from .checkpoints import save_checkpoint
        from .encoders import encoder_config

        save_checkpoint(
            path,
            kind="tagger",
            config={
                "hidden_size": self.hidden_size,
                "learning_rate": self.learning_rate,
                "max_epochs": self.max_epochs,
                "patience": self.patience,
                "seed": self.seed,
                "encoder": encoder_config(self._backend()),
                "types": list(self.tagset_.types),
                "labels": list(self.tagset_.labels),
            },
            arrays=self.params_,
        )

    @classmethod
    def load(cls, path) -> "MentionTagger":
        from .checkpoints import load_checkpoint
        from .encoders import build_encoder

        ck = load_checkpoint(path, expected_kind="tagger")
        cfg = ck.config
        model = cls(
            encoder=build_encoder(**cfg["encoder"]),
            hidden_size=cfg["hidden_size"],
            learning_rate=cfg["learning_rate"],
            max_epochs=cfg["max_epochs"],
            patience=cfg["patience"],
            seed=cfg["seed"],
        )
        model.tagset_ = TagSet(tuple(cfg["types"]))
        model.params_ = dict(ck.arrays)
        return model


class EvidenceSentenceClassifier(BaseEstimator):
    """Binary classifier scoring each sentence's chance of stating a result."""

    def __init__(
        self,
        encoder: EncoderBackend | None = None,
        learning_rate: float = 5e-2,
        max_epochs: int = 2000,
        patience: int = 200,
        l2: float = 1e-4,
        threshold: float = 0.5,
    ):
        self.encoder = encoder
        self.learning_rate = learning_rate
        self.max_epochs = max_epochs
        self.patience = patience
        self.l2 = l2
        self.threshold = threshold

    def _backend(self) -> EncoderBackend:
        backend = getattr(self, "backend_", None)
        if backend is None:
            backend = self.encoder if self.encoder is not None else HashedEncoder()
            self.backend_ = backend
        return backend

    def _features(self, tokens: Sequence[str]) -> np.ndarray:
        vecs = self._backend().token_vectors(tuple(tokens))
        return np.concatenate([vecs.mean(axis=0), [len(tokens) / 20.0]])

    def fit(
        self,
        samples: Sequence[EvidenceSample],
        dev_samples: Sequence[EvidenceSample] | None = None,
    ) -> "EvidenceSentenceClassifier":
        if not samples:
            raise ValueError("cannot train the evidence classifier on no samples")
        labels = {s.label for s in samples}
        if len(labels) < 2:
            raise ValueError(
                f"evidence training data contains only label {labels.pop()}; "
                "both classes are required"
            )
        X = np.stack([self._features(s.tokens) for s in samples])
        y = np.array([s.label for s in samples], dtype=float)
        dev = None
        if dev_samples:
            dev = (
                np.stack([self._features(s.tokens) for s in dev_samples]),
                np.array([s.label for s in dev_samples], dtype=float),
            )
        self.head_ = BinaryHead(
            lr=self.learning_rate,
            max_epochs=self.max_epochs,
            patience=self.patience,
            l2=self.l2,
        ).fit(X, y, dev)
        return self

    def score_sentences(self, doc: Document) -> np.ndarray:
        """Probability per sentence, shape (num_sentences,)."""
        if not hasattr(self, "head_"):
            raise RuntimeError("evidence classifier is not fitted")
        if doc.num_sentences == 0:
            return np.zeros(0)
        X = np.stack(
            [self._features(doc.sentence_surfaces(i)) for i in range(doc.num_sentences)]
        )
        return self.head_.predict_proba(X)

    def classify(self, doc: Document) -> list[EvidenceSentence]:
        """Sentences scoring at or above the decision threshold."""
        return [
            EvidenceSentence(doc.doc_id, i, float(score))
            for i, score in enumerate(self.score_sentences(doc))
            if score >= self.threshold
        ]

    def save(self, path) -> None:
        from .checkpoints import save_checkpoint
        from .encoders import encoder_config

        save_checkpoint(
            path,
            kind="evidence",
            config={
                "learning_rate": self.learning_rate,
                "max_epochs": self.max_epochs,
                "patience": self.patience,
                "l2": self.l2,
                "threshold": self.threshold,
                "encoder": encoder_config(self._backend()),
            },
            arrays={"w": self.head_.w, "b": np.array([self.head_.b])},
        )

    @classmethod
    def load(cls, path) -> "EvidenceSentenceClassifier":
        from .checkpoints import load_checkpoint
        from .encoders import build_encoder

        ck = load_checkpoint(path, expected_kind="evidence")
        cfg = ck.config
        model = cls(
            encoder=build_encoder(**cfg["encoder"]),
            learning_rate=cfg["learning_rate"],
            max_epochs=cfg["max_epochs"],
            patience=cfg["patience"],
            l2=cfg["l2"],
            threshold=cfg["threshold"],
        )
        model.head_ = BinaryHead(
            lr=cfg["learning_rate"],
            max_epochs=cfg["max_epochs"],
            patience=cfg["patience"],
            l2=cfg["l2"],
        )
        model.head_.w = ck.arrays["w"]
        model.head_.b = float(ck.arrays["b"][0])
        return model
