"""Token, span, and text encoders shared by all learned components.

Two backends expose one contract: a (surfaces, segment) -> vectors primitive
plus convenience methods over documents. The hashed backend is the default
and needs no model files: each lowercased surface is expanded into character
trigrams plus a whole-word feature, and every feature is hashed into a signed
slot with a keyed blake2b digest. blake2b (unlike Python's per-process salted
``hash``) makes the vectors identical across processes and platforms, which
the reproducibility guarantees rely on. The optional pretrained backend wraps
a local transformer checkpoint and is imported lazily.
"""

from __future__ import annotations

from hashlib import blake2b
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .errors import EncoderLimitError, InputError

if TYPE_CHECKING:
    from .corpus import Document

MATCH_TEMPERATURE = 0.1
CONTEXT_OFFSETS = (-3, -2, -1, 1, 2, 3)


class EncoderBackend:
    """Shared interface: token_vectors is the backend primitive; everything
    else is derived from it and may be overridden by contextual backends."""

    name = "base"

    def __init__(self, dim: int, max_tokens: int | None = None):
        self.dim = int(dim)
        self.max_tokens = max_tokens

    def token_vectors(self, surfaces: Sequence[str], segment: int = 0) -> np.ndarray:
        """One row per surface, shape (len(surfaces), dim)."""
        raise NotImplementedError

    def _check_length(self, n: int) -> None:
        if self.max_tokens is not None and n > self.max_tokens:
            raise EncoderLimitError(
                f"{self.name} backend accepts at most {self.max_tokens} tokens, got {n}"
            )

    def encode_tokens(self, doc: "Document", sentence: int | None = None) -> np.ndarray:
        """Vectors for every token of the document (or one sentence of it).

        Sentences are encoded one at a time so contextual backends see one
        sentence per window and per-window length limits apply per sentence.
        """
        indices = range(doc.num_sentences) if sentence is None else [sentence]
        parts = [self.token_vectors(doc.sentence_surfaces(i)) for i in indices]
        if not parts:
            return np.zeros((0, self.dim))
        return np.vstack(parts)

    def encode_span(self, doc: "Document", start: int, end: int) -> np.ndarray:
        """Mean of the token vectors in [start, end)."""
        if not 0 <= start < end <= doc.num_tokens:
            raise ValueError(f"span [{start},{end}) out of range for {doc.doc_id}")
        return self.token_vectors(doc.token_surfaces(start, end)).mean(axis=0)

    def encode_text(self, text: str) -> np.ndarray:
        """Mean vector of a whitespace-tokenized string (for prompt texts)."""
        surfaces = text.split()
        if not surfaces:
            raise InputError("cannot encode empty text")
        return self.token_vectors(surfaces).mean(axis=0)

    def encode_pair(self, left: Sequence[str], right: Sequence[str]) -> np.ndarray:
        """Joint vector of two token sequences with distinct segment roles."""
        if not left or not right:
            raise ValueError("encode_pair requires two non-empty token sequences")
        va = self.token_vectors(left, segment=0)
        vb = self.token_vectors(right, segment=1)
        return np.vstack([va, vb]).mean(axis=0)


class HashedEncoder(EncoderBackend):
    """Deterministic context-free encoder from keyed feature hashing.

    A vector depends only on (surface, segment, dim, seed); repeated lookups
    are served from a per-instance cache. All vectors have unit norm.
    """

    name = "hashed"

    def __init__(self, dim: int = 64, seed: int = 0, max_tokens: int | None = None):
        if dim < 2:
            raise ValueError("hashed encoder needs dim >= 2")
        super().__init__(dim, max_tokens)
        self.seed = int(seed)
        self._cache: dict[tuple[str, int], np.ndarray] = {}

    def token_vectors(self, surfaces: Sequence[str], segment: int = 0) -> np.ndarray:
        self._check_length(len(surfaces))
        if not surfaces:
            return np.zeros((0, self.dim))
        return np.stack([self._vector(s, segment) for s in surfaces])

    def _features(self, word: str) -> list[str]:
        padded = f"^{word}$"
        grams = [padded[i : i + 3] for i in range(max(len(padded) - 2, 0))]
        return [f"w={word}"] + grams

    def _slot(self, feature: str, key: bytes) -> tuple[int, float]:
        digest = blake2b(feature.encode("utf-8"), digest_size=8, key=key).digest()
        n = int.from_bytes(digest, "little")
        # index and sign come from disjoint digest bits
        return n % self.dim, 1.0 if (n >> 33) & 1 else -1.0

    def _vector(self, surface: str, segment: int) -> np.ndarray:
        cached = self._cache.get((surface, segment))
        if cached is not None:
            return cached
        key = f"{self.seed}:{segment}".encode("utf-8")
        v = np.zeros(self.dim)
        word = surface.lower()
        for feature in self._features(word):
            idx, sign = self._slot(feature, key)
            v[idx] += sign
        norm = float(np.linalg.norm(v))
        if norm == 0.0:
            # trigram signs cancelled; fall back to the whole-word slot alone
            idx, sign = self._slot(f"w={word}", key)
            v[idx] = sign
            norm = 1.0
        v /= norm
        v.setflags(write=False)
        self._cache[(surface, segment)] = v
        return v


class PretrainedEncoder(EncoderBackend):
    """Contextual backend over a local transformer checkpoint.

    torch and transformers are imported only when this class is instantiated;
    the rest of the package runs without them. Word vectors are means of the
    word's sub-token states from the last layer; pairs use the model's native
    two-segment encoding pooled at the first position.
    """

    name = "pretrained"

    def __init__(self, model_path: str, max_tokens: int | None = None, device: str = "cpu"):
        try:
            import torch
            from transformers import AutoModel, AutoTokenizer
        except ImportError as exc:
            raise InputError(
                "the pretrained encoder backend needs the optional dependencies: "
                "pip install 'clintrex[pretrained]'"
            ) from exc
        self._torch = torch
        self.model_path = model_path
        self._tokenizer = AutoTokenizer.from_pretrained(model_path)
        self._model = AutoModel.from_pretrained(model_path).to(device).eval()
        self._device = device
        limit = getattr(self._tokenizer, "model_max_length", None)
        if limit is None or limit > 100000:
            limit = 512
        self._subword_limit = int(limit)
        super().__init__(int(self._model.config.hidden_size), max_tokens)

    def token_vectors(self, surfaces: Sequence[str], segment: int = 0) -> np.ndarray:
        self._check_length(len(surfaces))
        if not surfaces:
            return np.zeros((0, self.dim))
        enc = self._tokenizer(
            list(surfaces), is_split_into_words=True, return_tensors="pt"
        )
        if enc["input_ids"].shape[1] > self._subword_limit:
            raise EncoderLimitError(
                f"input expands to {enc['input_ids'].shape[1]} sub-tokens, "
                f"model limit is {self._subword_limit}"
            )
        enc = {k: v.to(self._device) for k, v in enc.items()}
        with self._torch.no_grad():
            hidden = self._model(**enc).last_hidden_state[0].cpu().double().numpy()
        word_ids = self._tokenizer(
            list(surfaces), is_split_into_words=True
        ).word_ids(0)
        out = np.zeros((len(surfaces), self.dim))
        counts = np.zeros(len(surfaces))
        for pos, wid in enumerate(word_ids):
            if wid is not None:
                out[wid] += hidden[pos]
                counts[wid] += 1
        counts[counts == 0] = 1.0
        return out / counts[:, None]

    def encode_pair(self, left: Sequence[str], right: Sequence[str]) -> np.ndarray:
        if not left or not right:
            raise ValueError("encode_pair requires two non-empty token sequences")
        enc = self._tokenizer(" ".join(left), " ".join(right), return_tensors="pt")
        if enc["input_ids"].shape[1] > self._subword_limit:
            raise EncoderLimitError(
                f"pair expands to {enc['input_ids'].shape[1]} sub-tokens, "
                f"model limit is {self._subword_limit}"
            )
        enc = {k: v.to(self._device) for k, v in enc.items()}
        with self._torch.no_grad():
            hidden = self._model(**enc).last_hidden_state[0].cpu().double().numpy()
        return hidden[0]


def build_encoder(
    name: str,
    dim: int = 64,
    seed: int = 0,
    model_path: str | None = None,
    max_tokens: int | None = None,
) -> EncoderBackend:
    """Factory used by configuration loading and checkpoint restore."""
    if name == "hashed":
        return HashedEncoder(dim=dim, seed=seed, max_tokens=max_tokens)
    if name == "pretrained":
        if not model_path:
            raise InputError("pretrained encoder requires encoder.model_path")
        return PretrainedEncoder(model_path, max_tokens=max_tokens)
    raise InputError(f"unknown encoder backend {name!r}")


def encoder_config(backend: EncoderBackend) -> dict:
    """Constructor arguments that rebuild this backend via build_encoder."""
    return {
        "name": backend.name,
        "dim": backend.dim,
        "seed": getattr(backend, "seed", 0),
        "model_path": getattr(backend, "model_path", None),
        "max_tokens": backend.max_tokens,
    }


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine of the angle between two vectors, clipped into [-1, 1]."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine similarity is undefined for zero-norm vectors")
    return float(np.clip(float(np.dot(a, b)) / (na * nb), -1.0, 1.0))


def pair_feature_width(dim: int) -> int:
    """Width of pair_match_features output for a backend of this dim."""
    return (4 + len(CONTEXT_OFFSETS)) * dim + 3


def pair_match_features(
    backend: EncoderBackend,
    query_tokens: Sequence[str],
    context_tokens: Sequence[str],
) -> np.ndarray:
    """Describe how a query span relates to a token sequence.

    Blocks: query mean, context mean, joint pair vector, soft-attention
    matched vector (attention = softmax of cosine(query, token) at a fixed
    temperature), the attention-weighted neighbors at each CONTEXT_OFFSETS
    position, and three scalars (max similarity, mean similarity, soft match
    position in [0, 1]). The neighbor blocks let linear heads read the words
    around wherever the query matched, which carries the comparative cues.
    """
    if not query_tokens or not context_tokens:
        raise ValueError("pair_match_features requires non-empty token sequences")
    eps = 1e-12
    Q = backend.token_vectors(tuple(query_tokens))
    C = backend.token_vectors(tuple(context_tokens))
    q = Q.mean(axis=0)
    c = C.mean(axis=0)
    pair = backend.encode_pair(query_tokens, context_tokens)

    qn = q / max(float(np.linalg.norm(q)), eps)
    Cn = C / np.maximum(np.linalg.norm(C, axis=1, keepdims=True), eps)
    sims = Cn @ qn
    z = sims / MATCH_TEMPERATURE
    z = z - z.max()
    att = np.exp(z)
    att = att / att.sum()
    matched = att @ C

    T = C.shape[0]
    blocks = [q, c, pair, matched]
    for off in CONTEXT_OFFSETS:
        shifted = np.zeros_like(C)
        lo, hi = max(0, -off), min(T, T - off)
        if lo < hi:
            shifted[lo:hi] = C[lo + off : hi + off]
        blocks.append(att @ shifted)
    soft_pos = float(att @ (np.arange(T) / max(T - 1, 1)))
    blocks.append(np.array([float(sims.max()), float(sims.mean()), soft_pos]))
    return np.concatenate(blocks)
