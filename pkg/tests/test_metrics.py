"""Hand-computed fixtures for every evaluation metric."""

from __future__ import annotations

import numpy as np
import pytest

from clintrex.corpus import Direction, EType, Mention
from clintrex.metrics import (
    PRF,
    b_cubed,
    ceaf_e,
    clustering_report,
    direction_prf,
    direction_scores,
    entity_prf,
    evaluate_documents,
    evidence_prf,
    linking_accuracy,
    muc,
    relation_prf,
    token_prf,
)

from conftest import build_annotated

I = EType.INTERVENTION
O = EType.OUTCOME
INC, DEC, NOD = Direction.INCREASED, Direction.DECREASED, Direction.NO_DIFFERENCE


# ------------------------------------------------------------------ PRF


def test_prf_identities_enforced():
    with pytest.raises(ValueError):
        PRF(0.5, 0.5, 0.9)
    with pytest.raises(ValueError):
        PRF(1.0, 1.0, 1.0, tp=1.0, fp=1.0, fn=0.0)
    with pytest.raises(ValueError):
        PRF(1.0, 1.0, 1.0, tp=1.0, fp=None, fn=0.0)
    p = PRF.from_counts(2, 1, 1)
    assert (p.precision, p.recall) == (2 / 3, 2 / 3)
    z = PRF.from_counts(0, 0, 0)
    assert (z.precision, z.recall, z.f1) == (0.0, 0.0, 0.0)


# ------------------------------------------------------------------ tokens


def test_token_prf_hand_computed():
    gold = [Mention("g0", "d", 0, 2, I), Mention("g1", "d", 3, 4, O)]
    pred = [Mention("p0", "d", 1, 3, I), Mention("p1", "d", 3, 4, O)]
    out = token_prf(gold, pred)
    assert out["intervention"] == PRF.from_counts(1, 1, 1)
    assert out["outcome"] == PRF.from_counts(1, 0, 0)
    assert out["overall"] == PRF.from_counts(2, 1, 1)


# ------------------------------------------------------------------ entities


def _entity_fixture():
    return build_annotated(
        "d",
        [["aspirin", "reduced", "severe", "pain", "overall", "today"]],
        [(0, 1, I), (2, 4, O)],
        [("e0", [0]), ("e1", [1])],
    )


def test_entity_prf_is_pessimistic_about_precision():
    """An overlapping-but-not-exact prediction is a miss AND a false
    positive, understating the precision a lenient matcher would report."""
    gold = [_entity_fixture()]
    pred = [Mention("p0", "d", 0, 1, I), Mention("p1", "d", 3, 4, O)]
    strict = entity_prf(gold, pred)
    assert strict == PRF.from_counts(1, 1, 1)
    relaxed = entity_prf(gold, pred, partial=True)
    assert relaxed == PRF.from_counts(2, 0, 0)


def test_entity_prf_counts_spurious_with_multiplicity():
    gold = [_entity_fixture()]
    pred = [
        Mention("p0", "d", 4, 5, O),
        Mention("p1", "d", 4, 5, O),
        Mention("p2", "d", 5, 6, I),
    ]
    assert entity_prf(gold, pred) == PRF.from_counts(0, 3, 2)


def test_entity_prf_rejects_unknown_documents():
    with pytest.raises(ValueError):
        entity_prf([_entity_fixture()], [Mention("p0", "other", 0, 1, I)])


# ------------------------------------------------------------------ relations


def _relation_gold():
    return build_annotated(
        "d",
        [["a", "b", "c", "d", "e", "f"]],
        [(0, 1, I), (1, 2, I), (2, 3, I), (3, 4, O), (4, 5, O)],
        [("e0", [0, 1]), ("e1", [2]), ("e2", [3]), ("e3", [4])],
        (0,),
        [("e0", "e1", "e2", INC, 0), ("e0", None, "e3", DEC, 0)],
    )


def _relation_pred(relations, mention_spans=None, entity_groups=None):
    if mention_spans is None:
        mention_spans = [(0, 1, I), (1, 2, I), (2, 3, I), (3, 4, O), (4, 5, O)]
        entity_groups = [("q0", [0, 1]), ("q1", [2]), ("q2", [3]), ("q3", [4])]
    return build_annotated(
        "d", [["a", "b", "c", "d", "e", "f"]], mention_spans, entity_groups,
        (0,), relations,
    )


def test_relation_prf_exact_match():
    gold = [_relation_gold()]
    pred = [_relation_pred([("q0", "q1", "q2", INC, 0), ("q0", None, "q3", DEC, 0)])]
    assert relation_prf(gold, pred) == PRF.from_counts(2, 0, 0)
    assert relation_prf(gold, pred, mode="binary") == PRF.from_counts(2, 0, 0)


def test_relation_prf_requires_pure_entity_clusters():
    """A predicted entity mixing mentions of two gold entities maps to
    nothing, so its relations cannot score even with correct spans."""
    gold = [_relation_gold()]
    pred = [
        _relation_pred(
            [("q0", "q1", "q2", INC, 0)],
            mention_spans=[(0, 1, I), (2, 3, I), (1, 2, I), (3, 4, O)],
            # q0 merges a mention of gold e0 with the gold e1 mention
            entity_groups=[("q0", [0, 1]), ("q1", [2]), ("q2", [3])],
        )
    ]
    assert relation_prf(gold, pred) == PRF.from_counts(0, 1, 2)


def test_relation_prf_subset_cluster_still_maps():
    gold = [_relation_gold()]
    pred = [
        _relation_pred(
            [("q0", "q1", "q2", INC, 0)],
            mention_spans=[(1, 2, I), (2, 3, I), (3, 4, O)],
            entity_groups=[("q0", [0]), ("q1", [1]), ("q2", [2])],
        )
    ]
    # q0 holds only the second mention of gold e0: still a pure subset
    assert relation_prf(gold, pred) == PRF.from_counts(1, 0, 1)


def test_relation_prf_absent_comparator_matches_only_absent():
    gold = [_relation_gold()]
    pred = [_relation_pred([("q0", None, "q2", INC, 0), ("q0", "q1", "q3", DEC, 0)])]
    # both predictions carry the wrong comparator state
    assert relation_prf(gold, pred) == PRF.from_counts(0, 2, 2)
    # binary projection ignores the comparator entirely
    assert relation_prf(gold, pred, mode="binary") == PRF.from_counts(2, 0, 0)


def test_relation_prf_binary_collapses_duplicates():
    gold = [_relation_gold()]
    pred = [_relation_pred([("q0", "q1", "q2", INC, 0), ("q0", None, "q2", INC, 0)])]
    assert relation_prf(gold, pred, mode="binary") == PRF.from_counts(1, 0, 1)
    # triplet mode scores them separately: one hit, one comparator mismatch
    assert relation_prf(gold, pred) == PRF.from_counts(1, 1, 1)


def test_relation_prf_missing_pred_doc_counts_as_misses():
    gold = [_relation_gold()]
    assert relation_prf(gold, []) == PRF.from_counts(0, 0, 2)
    with pytest.raises(ValueError):
        relation_prf(gold, [build_annotated("other", [["x"]])])
    with pytest.raises(ValueError):
        relation_prf(gold, [_relation_pred([]), _relation_pred([])])


def test_relation_prf_unknown_mode():
    with pytest.raises(ValueError):
        relation_prf([_relation_gold()], [], mode="pairs")


# ------------------------------------------------------------------ linking


def test_linking_accuracy_per_role():
    gold = [_relation_gold()]
    pred = [_relation_pred([("q0", "q1", "q3", INC, 0)])]
    acc = linking_accuracy(gold, pred)
    # both gold relations share the evidence sentence; the single prediction
    # fills intervention correctly for both, comparator for the first only,
    # outcome for the second only
    assert acc["intervention"] == 1.0
    assert acc["comparator"] == 0.5
    assert acc["outcome"] == 0.5


def test_linking_accuracy_needs_relations():
    gold = [build_annotated("d", [["x"]])]
    with pytest.raises(ValueError):
        linking_accuracy(gold, [build_annotated("d", [["x"]])])


# ------------------------------------------------------------------ direction


def test_direction_prf_paired_labels():
    gold = [INC, INC, DEC, NOD]
    pred = [INC, DEC, DEC, DEC]
    out = direction_prf(gold, pred)
    assert out["increased"] == PRF.from_counts(1, 0, 1)
    assert out["decreased"] == PRF.from_counts(1, 2, 0)
    assert out["no_diff"] == PRF.from_counts(0, 0, 1)
    with pytest.raises(ValueError):
        direction_prf([INC], [])
    with pytest.raises(ValueError):
        direction_prf([], [])


def test_direction_scores_confusions_and_misses():
    gold = [_relation_gold()]
    pred = [
        _relation_pred(
            [("q0", "q1", "q2", DEC, 0)]  # right roles, wrong direction
        )
    ]
    out = direction_scores(gold, pred)
    assert out["increased"] == PRF.from_counts(0, 0, 1)  # miss via confusion
    assert out["decreased"] == PRF.from_counts(0, 1, 1)  # false alarm + miss
    assert out["no_diff"] == PRF.from_counts(0, 0, 0)


def test_direction_scores_spurious_prediction():
    gold = [_relation_gold()]
    pred = [
        _relation_pred(
            [
                ("q0", "q1", "q2", INC, 0),
                ("q0", None, "q3", DEC, 0),
                ("q1", None, "q3", NOD, 0),  # no gold relation has these roles
            ]
        )
    ]
    out = direction_scores(gold, pred)
    assert out["increased"] == PRF.from_counts(1, 0, 0)
    assert out["decreased"] == PRF.from_counts(1, 0, 0)
    assert out["no_diff"] == PRF.from_counts(0, 1, 0)


# ------------------------------------------------------------------ evidence


def test_evidence_prf():
    gold = [
        build_annotated("d1", [["a"], ["b"]], evidence=(0, 1)),
        build_annotated("d2", [["c"]], evidence=(0,)),
    ]
    pred = [
        build_annotated("d1", [["a"], ["b"]], evidence=(1,)),
        build_annotated("d2", [["c"]], evidence=()),
    ]
    assert evidence_prf(gold, pred) == PRF.from_counts(1, 0, 2)


# ------------------------------------------------------------------ clustering


def test_b_cubed_split_cluster():
    assert b_cubed([{"a", "b"}], [{"a"}, {"b"}]) == PRF.from_fractions(1.0, 0.5)


def test_b_cubed_universe_extension():
    # an item missing from one side becomes a singleton there
    assert b_cubed([{"a", "b"}], [{"a"}]) == PRF.from_fractions(1.0, 0.5)


def test_b_cubed_perfect_and_merged():
    assert b_cubed([{"a", "b"}], [{"a", "b"}]) == PRF.from_fractions(1.0, 1.0)
    out = b_cubed([{"a"}, {"b"}], [{"a", "b"}])
    assert out.precision == pytest.approx(0.5)
    assert out.recall == pytest.approx(1.0)


def test_muc_hand_computed():
    # all singletons: no links on either side, 0/0 counts as 0
    out = muc([{"a"}, {"b"}], [{"a"}, {"b"}])
    assert (out.precision, out.recall, out.f1) == (0.0, 0.0, 0.0)
    out = muc([{"a", "b", "c"}], [{"a", "b"}, {"c"}])
    assert out.recall == pytest.approx(0.5)
    assert out.precision == pytest.approx(1.0)
    assert out.f1 == pytest.approx(2 / 3)


def test_ceaf_e_hand_computed():
    out = ceaf_e([{"a", "b"}, {"c"}], [{"a", "b", "c"}])
    # best alignment pairs the merged cluster with {a,b}: Dice 4/5
    assert out.precision == pytest.approx(0.8)
    assert out.recall == pytest.approx(0.4)


def test_cluster_input_validation():
    with pytest.raises(ValueError):
        b_cubed([{"a"}, {"a"}], [{"a"}])
    with pytest.raises(ValueError):
        muc([set()], [{"a"}])


def test_clustering_report_matches_direct_computation():
    gold = [
        build_annotated(
            "d",
            [["a", "b", "c", "d"]],
            [(0, 1, I), (1, 2, I), (2, 3, I), (3, 4, O)],
            [("e0", [0, 1]), ("e1", [2]), ("e2", [3])],
        )
    ]
    pred = [
        build_annotated(
            "d",
            [["a", "b", "c", "d"]],
            [(0, 1, I), (1, 2, I), (2, 3, I), (3, 4, O)],
            [("q0", [0]), ("q1", [1, 2]), ("q2", [3])],
        )
    ]
    report = clustering_report(gold, pred)
    direct = b_cubed(
        [{("d", 0, 1), ("d", 1, 2)}, {("d", 2, 3)}],
        [{("d", 0, 1)}, {("d", 1, 2), ("d", 2, 3)}],
    )
    assert report["intervention"]["b_cubed"] == direct
    assert report["outcome"]["b_cubed"] == PRF.from_fractions(1.0, 1.0)


# ------------------------------------------------------------------ report


def test_evaluate_documents_end_to_end():
    gold = [_relation_gold()]
    pred = [_relation_pred([("q0", "q1", "q2", INC, 0)])]
    report = evaluate_documents(gold, pred)
    assert report.relation_triplet == PRF.from_counts(1, 0, 1)
    assert report.token["overall"].f1 == 1.0
    assert report.linking is not None
    flat = report.to_flat_dict()
    assert flat["relation.triplet.f1"] == pytest.approx(2 / 3)
    assert flat["counts.documents"] == 1
    assert 0.0 <= report.direction_macro_f1 <= 1.0
    text = report.to_text()
    assert "relation.triplet.f1" in text


def test_evaluate_documents_without_relations_drops_linking():
    gold = [build_annotated("d", [["x", "y"]], [(0, 1, I)], [("e0", [0])])]
    pred = [build_annotated("d", [["x", "y"]], [(0, 1, I)], [("q0", [0])])]
    report = evaluate_documents(gold, pred)
    assert report.linking is None
    assert not [k for k in report.to_flat_dict() if k.startswith("linking")]
