"""Hashed encoder determinism and geometry, pair matching features."""

from __future__ import annotations

import numpy as np
import pytest

from clintrex.encoders import (
    CONTEXT_OFFSETS,
    HashedEncoder,
    build_encoder,
    cosine_similarity,
    encoder_config,
    pair_feature_width,
    pair_match_features,
)
from clintrex.errors import EncoderLimitError, InputError
from clintrex.corpus import document_from_sentences


def test_cosine_known_value():
    assert cosine_similarity(np.array([1.0, 1.0]), np.array([1.0, 0.0])) == pytest.approx(
        0.7071067811865475, abs=1e-9
    )
    assert cosine_similarity(np.array([2.0, 0.0]), np.array([1.0, 0.0])) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        cosine_similarity(np.zeros(2), np.ones(2))


def test_hashed_vectors_are_unit_and_deterministic():
    a = HashedEncoder(dim=64, seed=0)
    b = HashedEncoder(dim=64, seed=0)
    va = a.token_vectors(("Metformin", "reduced", "pain"))
    vb = b.token_vectors(("metformin", "reduced", "pain"))
    # case-insensitive and instance-independent
    assert np.allclose(va, vb)
    assert va.shape == (3, 64)
    assert np.allclose(np.linalg.norm(va, axis=1), 1.0)
    c = HashedEncoder(dim=64, seed=1)
    assert not np.allclose(va, c.token_vectors(("metformin", "reduced", "pain")))


def test_hashed_related_words_are_similar():
    enc = HashedEncoder()
    sim = cosine_similarity(enc.encode_text("aspirin"), enc.encode_text("aspirins"))
    dif = cosine_similarity(enc.encode_text("aspirin"), enc.encode_text("placebo"))
    assert sim > dif
    assert sim > 0.5


def test_variant_phrase_geometry():
    enc = HashedEncoder()
    base = enc.encode_text("erythromycin")
    variant = enc.encode_text("oral erythromycin")
    other = enc.encode_text("usual care")
    assert cosine_similarity(base, variant) > 0.6
    assert cosine_similarity(base, other) < 0.4


def test_encode_span_is_token_mean():
    enc = HashedEncoder()
    doc = document_from_sentences("d", [["alpha", "beta", "gamma"]])
    vecs = enc.encode_tokens(doc)
    span = enc.encode_span(doc, 0, 2)
    assert np.allclose(span, vecs[:2].mean(axis=0))


def test_empty_text_rejected():
    enc = HashedEncoder()
    with pytest.raises(InputError):
        enc.encode_text("   ")


def test_token_limit_enforced():
    enc = HashedEncoder(max_tokens=3)
    enc.token_vectors(("a", "b", "c"))
    with pytest.raises(EncoderLimitError):
        enc.token_vectors(("a", "b", "c", "d"))


def test_dim_too_small_rejected():
    with pytest.raises(ValueError):
        HashedEncoder(dim=1)


def test_build_encoder_factory():
    enc = build_encoder("hashed", dim=32, seed=9)
    assert enc.dim == 32
    cfg = encoder_config(enc)
    assert cfg["name"] == "hashed"
    assert cfg["dim"] == 32
    assert cfg["seed"] == 9
    with pytest.raises(InputError):
        build_encoder("nonsense")


def test_pair_feature_width_formula():
    assert pair_feature_width(64) == (4 + len(CONTEXT_OFFSETS)) * 64 + 3
    assert pair_feature_width(8) == (4 + len(CONTEXT_OFFSETS)) * 8 + 3


def test_pair_match_features_shape_and_scalars():
    enc = HashedEncoder(dim=16)
    ctx = ("the", "drug", "aspirin", "reduced", "pain", "overall")
    feats = pair_match_features(enc, ("aspirin",), ctx)
    assert feats.shape == (pair_feature_width(16),)
    maxsim, meansim, softpos = feats[-3:]
    # the query token occurs verbatim in the context
    assert maxsim == pytest.approx(1.0, abs=1e-9)
    assert -1.0 <= meansim <= 1.0
    assert 0.0 <= softpos <= 1.0


def test_pair_match_features_distinguish_position():
    """Identical immediate neighbors, different wider context: the two
    group phrases in a compare sentence must produce different features."""
    enc = HashedEncoder()
    ctx = (
        "the", "mean", "pain", "was", "higher", "in", "the", "aspirin",
        "group", "than", "in", "the", "placebo", "group", ".",
    )
    fa = pair_match_features(enc, ("aspirin",), ctx)
    fb = pair_match_features(enc, ("placebo",), ctx)
    assert not np.allclose(fa, fb)
    # swap the query spans: features must track the span, not the sentence
    fa2 = pair_match_features(enc, ("aspirin",), ctx)
    assert np.allclose(fa, fa2)


def test_pair_match_features_empty_rejected():
    enc = HashedEncoder(dim=16)
    with pytest.raises(ValueError):
        pair_match_features(enc, (), ("a",))
    with pytest.raises(ValueError):
        pair_match_features(enc, ("a",), ())
