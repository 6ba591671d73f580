"""Linear-chain CRF over BIO tag sequences, in plain numpy.

A labeling y of a length-T sequence scores
    trans[START, y_0] + sum_t emissions[t, y_t]
    + sum_t trans[y_t, y_{t+1}] + trans[y_{T-1}, STOP]
with virtual START/STOP states occupying the last two rows/columns of the
transition matrix. Structural BIO constraints (I-X only ever follows B-X or
I-X, sequences never start with I-X) live in a boolean mask; masked entries
behave as score -inf in every computation, so no amount of training can make
a structurally invalid path decodable.

All functions are pure and operate in float64. Gradients come from the
forward-backward recursions in log space, not from numeric differentiation.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
from scipy.special import logsumexp


class TagSet:
    """BIO label inventory for a fixed tuple of span type codes.

    Labels are ordered O first, then B-X, I-X per type in the given order.
    Indices num_labels and num_labels+1 are the virtual START and STOP.
    """

    def __init__(self, types: Sequence[str] = ("INT", "OUT")):
        if not types or len(set(types)) != len(types):
            raise ValueError("tag set needs a non-empty list of distinct type codes")
        self.types = tuple(types)
        labels = ["O"]
        for t in self.types:
            labels.append(f"B-{t}")
            labels.append(f"I-{t}")
        self.labels: tuple[str, ...] = tuple(labels)
        self.num_labels = len(labels)
        self.start = self.num_labels
        self.stop = self.num_labels + 1
        self.size = self.num_labels + 2
        self._index = {lab: i for i, lab in enumerate(labels)}
        self.mask = self._build_mask()
        self.mask.setflags(write=False)

    def index(self, label: str) -> int:
        return self._index[label]

    def label(self, i: int) -> str:
        return self.labels[i]

    def type_of(self, i: int) -> str | None:
        """Span type code of a label index, None for O."""
        lab = self.labels[i]
        return None if lab == "O" else lab[2:]

    def _build_mask(self) -> np.ndarray:
        m = np.zeros((self.size, self.size), dtype=bool)
        sources = list(range(self.num_labels)) + [self.start]
        for i in sources:
            for j in range(self.num_labels):
                lab = self.labels[j]
                if lab.startswith("I-"):
                    t = lab[2:]
                    ok = i < self.num_labels and self.labels[i] in (f"B-{t}", f"I-{t}")
                else:
                    ok = True
                m[i, j] = ok
            if i != self.start:
                m[i, self.stop] = True
        return m

    def __eq__(self, other: object) -> bool:
        return isinstance(other, TagSet) and self.types == other.types

    def __hash__(self) -> int:
        return hash(self.types)

    def __repr__(self) -> str:
        return f"TagSet(types={self.types!r})"


def _checked(
    emissions: np.ndarray, transitions: np.ndarray, tagset: TagSet
) -> tuple[np.ndarray, np.ndarray]:
    emissions = np.asarray(emissions, dtype=float)
    transitions = np.asarray(transitions, dtype=float)
    if emissions.ndim != 2 or emissions.shape[1] != tagset.num_labels:
        raise ValueError(
            f"emissions must be (T, {tagset.num_labels}), got {emissions.shape}"
        )
    if emissions.shape[0] == 0:
        raise ValueError("empty sequence")
    if transitions.shape != (tagset.size, tagset.size):
        raise ValueError(
            f"transitions must be {(tagset.size, tagset.size)}, got {transitions.shape}"
        )
    masked = np.where(tagset.mask, transitions, -np.inf)
    return emissions, masked


def _check_path(labels: Sequence[int], tagset: TagSet, length: int) -> np.ndarray:
    y = np.asarray(labels, dtype=int)
    if y.shape != (length,):
        raise ValueError(f"labels must have length {length}, got {y.shape}")
    if y.min() < 0 or y.max() >= tagset.num_labels:
        raise ValueError("label index out of range")
    if not tagset.mask[tagset.start, y[0]]:
        raise ValueError(
            f"gold labeling starts with {tagset.label(y[0])}, which the "
            "transition mask forbids"
        )
    for t in range(len(y) - 1):
        if not tagset.mask[y[t], y[t + 1]]:
            raise ValueError(
                f"gold transition {tagset.label(y[t])} -> {tagset.label(y[t + 1])} "
                "violates the transition mask"
            )
    return y


def _path_score(
    emissions: np.ndarray, W: np.ndarray, y: np.ndarray, tagset: TagSet
) -> float:
    score = W[tagset.start, y[0]] + emissions[np.arange(len(y)), y].sum()
    score += W[y[:-1], y[1:]].sum()
    score += W[y[-1], tagset.stop]
    return float(score)


def _forward(
    emissions: np.ndarray, W: np.ndarray, tagset: TagSet
) -> tuple[np.ndarray, float]:
    T = emissions.shape[0]
    L = tagset.num_labels
    alpha = np.empty((T, L))
    alpha[0] = W[tagset.start, :L] + emissions[0]
    inner = W[:L, :L]
    for t in range(1, T):
        alpha[t] = logsumexp(alpha[t - 1][:, None] + inner, axis=0) + emissions[t]
    log_z = float(logsumexp(alpha[T - 1] + W[:L, tagset.stop]))
    return alpha, log_z


def _backward(emissions: np.ndarray, W: np.ndarray, tagset: TagSet) -> np.ndarray:
    T = emissions.shape[0]
    L = tagset.num_labels
    beta = np.empty((T, L))
    beta[T - 1] = W[:L, tagset.stop]
    inner = W[:L, :L]
    for t in range(T - 2, -1, -1):
        beta[t] = logsumexp(inner + (emissions[t + 1] + beta[t + 1])[None, :], axis=1)
    return beta


def crf_log_likelihood(
    emissions: np.ndarray,
    transitions: np.ndarray,
    labels: Sequence[int],
    tagset: TagSet,
) -> float:
    """log P(labels | emissions) = path score minus the log partition."""
    emissions, W = _checked(emissions, transitions, tagset)
    y = _check_path(labels, tagset, emissions.shape[0])
    _, log_z = _forward(emissions, W, tagset)
    return _path_score(emissions, W, y, tagset) - log_z


def crf_nll_and_grad(
    emissions: np.ndarray,
    transitions: np.ndarray,
    labels: Sequence[int],
    tagset: TagSet,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Negative log likelihood and its analytic gradients.

    Returns (nll, d_emissions, d_transitions). Emission gradients are the
    marginal label posteriors minus the gold one-hots; transition gradients
    are expected pairwise transition counts minus the gold counts, including
    the START row and STOP column. Masked entries always get gradient zero.
    """
    emissions, W = _checked(emissions, transitions, tagset)
    y = _check_path(labels, tagset, emissions.shape[0])
    T = emissions.shape[0]
    L = tagset.num_labels

    alpha, log_z = _forward(emissions, W, tagset)
    beta = _backward(emissions, W, tagset)
    nll = log_z - _path_score(emissions, W, y, tagset)

    unary = np.exp(alpha + beta - log_z)
    d_em = unary.copy()
    d_em[np.arange(T), y] -= 1.0

    d_tr = np.zeros((tagset.size, tagset.size))
    inner = W[:L, :L]
    for t in range(T - 1):
        pair = np.exp(
            alpha[t][:, None]
            + inner
            + (emissions[t + 1] + beta[t + 1])[None, :]
            - log_z
        )
        d_tr[:L, :L] += pair
        d_tr[y[t], y[t + 1]] -= 1.0
    d_tr[tagset.start, :L] += unary[0]
    d_tr[tagset.start, y[0]] -= 1.0
    d_tr[:L, tagset.stop] += unary[T - 1]
    d_tr[y[T - 1], tagset.stop] -= 1.0
    return float(nll), d_em, d_tr


def viterbi_decode(
    emissions: np.ndarray, transitions: np.ndarray, tagset: TagSet
) -> np.ndarray:
    """Highest-scoring label sequence; score ties pick the smaller index."""
    emissions, W = _checked(emissions, transitions, tagset)
    T = emissions.shape[0]
    L = tagset.num_labels
    inner = W[:L, :L]
    delta = W[tagset.start, :L] + emissions[0]
    back = np.zeros((T, L), dtype=int)
    for t in range(1, T):
        cand = delta[:, None] + inner
        back[t] = np.argmax(cand, axis=0)
        delta = cand[back[t], np.arange(L)] + emissions[t]
    final = delta + W[:L, tagset.stop]
    best = int(np.argmax(final))
    path = np.empty(T, dtype=int)
    path[T - 1] = best
    for t in range(T - 1, 0, -1):
        path[t - 1] = back[t, path[t]]
    return path


def decode_spans(
    labels: Sequence[int], tagset: TagSet
) -> list[tuple[str, int, int]]:
    """BIO label indices -> (type code, start, end) spans.

    A stray I-X with no open X span is repaired by treating it as B-X, so
    any index sequence decodes to a valid non-overlapping span list.
    """
    spans: list[tuple[str, int, int]] = []
    open_type: str | None = None
    open_start = 0
    for pos, idx in enumerate(labels):
        lab = tagset.label(int(idx))
        if lab == "O":
            if open_type is not None:
                spans.append((open_type, open_start, pos))
                open_type = None
            continue
        prefix, t = lab.split("-", 1)
        if prefix == "I" and open_type == t:
            continue
        if open_type is not None:
            spans.append((open_type, open_start, pos))
        open_type = t
        open_start = pos
    if open_type is not None:
        spans.append((open_type, open_start, len(labels)))
    return spans


def spans_to_labels(
    spans: Sequence[tuple[str, int, int]], length: int, tagset: TagSet
) -> np.ndarray:
    """(type code, start, end) spans -> BIO label indices of given length."""
    out = np.zeros(length, dtype=int)
    for t, start, end in spans:
        if not 0 <= start < end <= length:
            raise ValueError(f"span [{start},{end}) out of range for length {length}")
        if t not in tagset.types:
            raise ValueError(f"unknown span type {t!r}")
        if np.any(out[start:end] != 0):
            raise ValueError(f"span [{start},{end}) overlaps another span")
        out[start] = tagset.index(f"B-{t}")
        out[start + 1 : end] = tagset.index(f"I-{t}")
    return out
