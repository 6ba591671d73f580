"""Distant supervision: prompt projection, grouping, and sample builders."""

from __future__ import annotations

import numpy as np
import pytest

from clintrex.corpus import Direction, EType, Mention
from clintrex.errors import InputError, ParseError
from clintrex.samples import EvidenceSample, InferenceSample, LinkSample
from clintrex.supervision import (
    DEFAULT_THRESHOLD_GRID,
    Prompt,
    assign_mentions,
    build_inference_samples,
    build_link_samples,
    build_samples_from_annotations,
    build_training_corpus,
    doc_rng,
    group_mentions_by_seeds,
    load_prompts,
    sample_evidence,
    tune_threshold,
    write_prompts,
)

from conftest import build_annotated

I, O = EType.INTERVENTION, EType.OUTCOME
INC, DEC, NOD = Direction.INCREASED, Direction.DECREASED, Direction.NO_DIFFERENCE


# ------------------------------------------------------------------ prompts


def test_prompt_validation():
    p = Prompt("d", "aspirin", None, "pain", "decreased", 10, 20)
    assert p.label is DEC
    with pytest.raises(ValueError):
        Prompt("d", " ", None, "pain", DEC, 0, 5)
    with pytest.raises(ValueError):
        Prompt("d", "aspirin", "", "pain", DEC, 0, 5)
    with pytest.raises(ValueError):
        Prompt("d", "aspirin", None, "pain", DEC, 5, 5)
    with pytest.raises(ValueError):
        Prompt("d", "aspirin", None, "pain", "sideways", 0, 5)


def test_prompt_round_trip(tmp_path):
    prompts = [
        Prompt("d1", "aspirin", "placebo", "pain", INC, 0, 12),
        Prompt("d2", "heparin", None, "bleeding", NOD, 30, 55),
    ]
    path = tmp_path / "prompts.jsonl"
    write_prompts(prompts, path)
    assert load_prompts(path) == prompts


def test_prompt_file_errors(tmp_path):
    with pytest.raises(InputError):
        load_prompts(tmp_path / "absent.jsonl")
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"doc_id": "d", "i": "a", "o": "b", "label": "increased"}\n')
    with pytest.raises(ParseError) as err:
        load_prompts(bad)
    assert err.value.line == 1
    blank = tmp_path / "blank.jsonl"
    blank.write_text(
        '{"doc_id":"d","i":"a","o":"b","label":"increased","evidence":[0,4]}\n\n'
    )
    with pytest.raises(ParseError) as err:
        load_prompts(blank)
    assert err.value.line == 2


def test_doc_rng_is_keyed_and_stable():
    a = doc_rng(7, "doc-1").integers(0, 1_000_000, size=4)
    b = doc_rng(7, "doc-1").integers(0, 1_000_000, size=4)
    c = doc_rng(7, "doc-2").integers(0, 1_000_000, size=4)
    d = doc_rng(8, "doc-1").integers(0, 1_000_000, size=4)
    assert (a == b).all()
    assert not (a == c).all()
    assert not (a == d).all()


# ------------------------------------------------------------------ grouping


def test_assign_mentions_threshold_and_ties():
    seeds = np.array([[1.0, 0.0], [0.0, 1.0]])
    mentions = np.array([[0.9, 0.1], [0.05, 0.2], [1.0, 1.0]])
    out = assign_mentions(mentions, seeds, 0.5)
    assert out == [0, 1, 0]  # the equidistant vector picks the smaller index
    assert assign_mentions(mentions, seeds, 0.999) == [None, None, None]
    assert assign_mentions(mentions, np.zeros((0, 2)), 0.1) == [None, None, None]


def test_group_mentions_respects_types(hashed):
    ad = build_annotated(
        "d",
        [["oral", "aspirin", "reduced", "pain"]],
        [(0, 2, I), (3, 4, O)],
        [("e0", [0]), ("e1", [1])],
    )
    seeds = [("aspirin", I), ("pain", O)]
    assignments, assigned = group_mentions_by_seeds(
        ad.document, ad.mentions, seeds, hashed, 0.5
    )
    assert assignments == [0, 1]
    assert assigned == 2
    # without a same-type seed the intervention mention stays unassigned
    assignments, assigned = group_mentions_by_seeds(
        ad.document, ad.mentions, [("pain", O)], hashed, 0.5
    )
    assert assignments == [None, 0]
    assert assigned == 1


def test_assigned_count_monotone_in_threshold(hashed):
    ad = build_annotated(
        "d",
        [
            ["oral", "aspirin", "reduced", "pain"],
            ["aspirin", "tablets", "helped"],
            ["placebo", "was", "inert"],
        ],
        [(0, 2, I), (4, 6, I), (7, 8, I), (3, 4, O)],
        [("e0", [0, 1]), ("e1", [2]), ("e2", [3])],
    )
    seeds = [("aspirin", I), ("placebo", I), ("pain", O)]
    counts = []
    for t in np.linspace(0.0, 1.0, 21):
        _, assigned = group_mentions_by_seeds(
            ad.document, ad.mentions, seeds, hashed, float(t)
        )
        counts.append(assigned)
    assert all(a >= b for a, b in zip(counts, counts[1:]))
    assert counts[0] == 4 and counts[-1] < 4


def _variant_doc():
    return build_annotated(
        "d",
        [
            ["oral", "aspirin", "reduced", "pain"],
            ["oral", "aspirin", "was", "given"],
            ["aspirin", "helped"],
        ],
        [(0, 2, I), (4, 6, I), (8, 9, I), (3, 4, O)],
        [("e0", [0, 1, 2]), ("e1", [3])],
    )


def test_tune_threshold_prefers_variant_preserving_value(hashed):
    best, scores = tune_threshold([_variant_doc()], hashed)
    assert set(scores) == set(DEFAULT_THRESHOLD_GRID)
    assert scores[0.50] == pytest.approx(1.0)
    assert scores[0.95] < 1.0
    assert best == 0.50


def test_tune_threshold_tie_picks_smallest(hashed):
    ad = build_annotated(
        "d", [["aspirin", "helped"]], [(0, 1, I)], [("e0", [0])]
    )
    best, scores = tune_threshold([ad], hashed, grid=(0.6, 0.7, 0.8))
    assert all(s == pytest.approx(1.0) for s in scores.values())
    assert best == 0.6


def test_tune_threshold_validation(hashed):
    with pytest.raises(ValueError):
        tune_threshold([_variant_doc()], hashed, grid=())
    with pytest.raises(ValueError):
        tune_threshold([build_annotated("d", [["x"]])], hashed)


# ------------------------------------------------------------------ samples


def test_sample_evidence_picks_length_matched_negatives():
    ad = build_annotated(
        "d",
        [
            ["a", "b", "c", "d", "e"],
            ["the", "drug", "reduced", "pain"],
            ["w", "x", "y", "z"],
            ["short", "one"],
        ],
        evidence=(1,),
    )
    out = sample_evidence(ad, negatives_per_positive=2)
    assert [(s.sentence_index, s.label) for s in out] == [(1, 1), (2, 0), (0, 0)]
    assert out[0].tokens == ("the", "drug", "reduced", "pain")
    # requesting more negatives than exist caps at the pool size
    capped = sample_evidence(ad, negatives_per_positive=9)
    assert sum(1 for s in capped if s.label == 0) == 3
    assert sample_evidence(ad, 2) == out  # no hidden randomness


def _linked_doc():
    return build_annotated(
        "d",
        [
            ["We", "compared", "aspirin", "with", "placebo", "."],
            ["Aspirin", "reduced", "pain", "versus", "placebo", "."],
        ],
        [(2, 3, I), (4, 5, I), (6, 7, I), (10, 11, I), (8, 9, O)],
        [("e0", [0, 2]), ("e1", [1, 3]), ("e2", [4])],
        (1,),
        [("e0", "e1", "e2", DEC, 1)],
    )


def test_build_link_samples_roles_and_negatives():
    ad = _linked_doc()
    out = build_link_samples(ad, doc_rng(0, ad.doc_id), negatives_per_positive=3)
    by_label: dict[str, list[LinkSample]] = {"primary": [], "comparator": [], "unrelated": []}
    for s in out:
        by_label[s.label].append(s)
    assert len(by_label["primary"]) == 1
    assert by_label["primary"][0].span_tokens == ("Aspirin",)
    assert by_label["primary"][0].sentence_index == 1
    assert len(by_label["comparator"]) == 1
    assert by_label["comparator"][0].span_tokens == ("placebo",)
    assert by_label["unrelated"]
    assert ("Aspirin", "and", "placebo") in {
        s.span_tokens for s in by_label["unrelated"]
    }
    # negative spans never duplicate the positive spans of the relation
    for s in by_label["unrelated"]:
        assert s.span_tokens not in {("Aspirin",), ("placebo",)}
    assert len(out) == len({(s.sentence_index, s.span_tokens, s.label) for s in out})


def test_build_link_samples_deterministic():
    ad = _linked_doc()
    first = build_link_samples(ad, doc_rng(3, ad.doc_id))
    second = build_link_samples(ad, doc_rng(3, ad.doc_id))
    assert first == second


def test_build_inference_samples_surfaces_and_fallback():
    ad = _linked_doc()
    (sample,) = build_inference_samples(ad)
    assert sample.label is DEC
    assert sample.sentence_index == 1
    assert sample.intervention_tokens == ("Aspirin",)
    assert sample.comparator_tokens == ("placebo",)
    assert sample.outcome_tokens == ("pain",)
    assert sample.evidence_tokens == ("Aspirin", "reduced", "pain", "versus", "placebo", ".")

    # an entity with no mention inside the evidence sentence falls back to
    # its canonical text
    away = build_annotated(
        "d",
        [["aspirin", "was", "studied"], ["pain", "dropped", "sharply"]],
        [(0, 1, I), (3, 4, O)],
        [("e0", [0]), ("e1", [1])],
        (1,),
        [("e0", None, "e1", DEC, 1)],
    )
    (sample,) = build_inference_samples(away)
    assert sample.intervention_tokens == ("aspirin",)
    assert sample.comparator_tokens is None


def test_build_samples_from_annotations_mixes_tasks():
    ad = _linked_doc()
    out = build_samples_from_annotations([ad], seed=0)
    kinds = {type(s) for s in out}
    assert kinds == {EvidenceSample, LinkSample, InferenceSample}
    assert out == build_samples_from_annotations([ad], seed=0)


# ------------------------------------------------------- distant projection


def _raw_doc():
    ad = build_annotated(
        "t1",
        [
            ["We", "studied", "aspirin", "versus", "placebo", "."],
            ["Aspirin", "reduced", "pain", "significantly", "."],
        ],
    )
    return ad.document


def _tagged_mentions():
    return [
        Mention("m0", "t1", 2, 3, I),
        Mention("m1", "t1", 4, 5, I),
        Mention("m2", "t1", 6, 7, I),
        Mention("m3", "t1", 8, 9, O),
    ]


def test_build_training_corpus_projects_prompts(hashed):
    doc = _raw_doc()
    start, end = doc.sentence_char_span(1)
    prompts = [Prompt("t1", "aspirin", "placebo", "pain", DEC, start, end)]
    built, samples, report = build_training_corpus(
        [doc], prompts, {"t1": _tagged_mentions()}, hashed, threshold=0.5
    )
    assert report.to_dict() == {
        "documents_in": 1,
        "documents_without_prompts": 0,
        "documents_built": 1,
        "mentions_total": 4,
        "mentions_assigned": 4,
        "relations_built": 1,
        "relations_dropped": 0,
    }
    (ad,) = built
    assert ad.evidence == (1,)
    (rel,) = ad.relations
    assert rel.direction is DEC
    assert rel.evidence_sentence == 1
    i_ent = ad.entity_by_id(rel.intervention)
    assert set(i_ent.mentions) == {"m0", "m2"}  # both aspirin surfaces merged
    c_ent = ad.entity_by_id(rel.comparator)
    assert set(c_ent.mentions) == {"m1"}
    assert {type(s) for s in samples} == {EvidenceSample, LinkSample, InferenceSample}


def test_build_training_corpus_drops_unmatchable_relations(hashed):
    doc = _raw_doc()
    start, end = doc.sentence_char_span(1)
    prompts = [Prompt("t1", "aspirin", "placebo", "mortality", DEC, start, end)]
    built, _, report = build_training_corpus(
        [doc], prompts, {"t1": _tagged_mentions()}, hashed, threshold=0.5
    )
    assert report.relations_dropped == 1
    assert report.relations_built == 0
    assert report.dropped == ["t1"]
    (ad,) = built
    assert ad.relations == ()
    assert ad.evidence == ()
    # the pain mention did not match any seed, so it stays a singleton
    assert any(set(e.mentions) == {"m3"} for e in ad.entities)


def test_build_training_corpus_rejects_self_comparison(hashed):
    doc = _raw_doc()
    start, end = doc.sentence_char_span(1)
    prompts = [Prompt("t1", "aspirin", "aspirin", "pain", DEC, start, end)]
    _, _, report = build_training_corpus(
        [doc], prompts, {"t1": _tagged_mentions()}, hashed, threshold=0.5
    )
    assert report.relations_dropped == 1
    assert report.relations_built == 0


def test_build_training_corpus_skips_promptless_documents(hashed):
    docs = [_raw_doc(), build_annotated("t2", [["nothing", "here"]]).document]
    start, end = docs[0].sentence_char_span(1)
    prompts = [Prompt("t1", "aspirin", None, "pain", DEC, start, end)]
    built, _, report = build_training_corpus(
        docs, prompts, {"t1": _tagged_mentions()}, hashed, threshold=0.5
    )
    assert report.documents_without_prompts == 1
    assert report.documents_built == 1
    assert [ad.doc_id for ad in built] == ["t1"]
