"""Scoring: token/entity/relation PRF, linking accuracy, direction quality,
and the three coreference-style clustering metrics used to grade mention
grouping.

Conventions shared by everything here:
- 0/0 ratios are 0, so empty predictions score zero instead of crashing.
- Matching is exact on token spans and types unless a partial flag says
  otherwise, and a gold item can be claimed by at most one prediction.
- Predicted relation tuples are consumed greedily in order of descending
  confidence, with deterministic tie-breaks.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Hashable, Iterable, Mapping, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .corpus import AnnotatedDocument, Direction, EType, Mention


def _safe_div(num: float, den: float) -> float:
    return num / den if den > 0 else 0.0


@dataclass(frozen=True)
class PRF:
    """Precision/recall/F1, optionally backed by tp/fp/fn counts.

    Count-based metrics carry float counts and the identities
    P = tp/(tp+fp), R = tp/(tp+fn) are verified at construction. Clustering
    metrics have different precision and recall denominators, so they carry
    no counts; the F1 identity is verified for every instance.
    """

    precision: float
    recall: float
    f1: float
    tp: float | None = None
    fp: float | None = None
    fn: float | None = None

    def __post_init__(self) -> None:
        expected_f1 = _safe_div(
            2.0 * self.precision * self.recall, self.precision + self.recall
        )
        if abs(self.f1 - expected_f1) > 1e-9:
            raise ValueError(f"inconsistent F1: {self.f1} vs {expected_f1}")
        if self.tp is not None:
            if self.fp is None or self.fn is None:
                raise ValueError("counts must be given together")
            if abs(self.precision - _safe_div(self.tp, self.tp + self.fp)) > 1e-9:
                raise ValueError("precision does not match counts")
            if abs(self.recall - _safe_div(self.tp, self.tp + self.fn)) > 1e-9:
                raise ValueError("recall does not match counts")

    @classmethod
    def from_counts(cls, tp: float, fp: float, fn: float) -> "PRF":
        p = _safe_div(tp, tp + fp)
        r = _safe_div(tp, tp + fn)
        return cls(p, r, _safe_div(2 * p * r, p + r), float(tp), float(fp), float(fn))

    @classmethod
    def from_fractions(cls, precision: float, recall: float) -> "PRF":
        return cls(
            precision, recall, _safe_div(2 * precision * recall, precision + recall)
        )


ZERO_PRF = PRF.from_counts(0.0, 0.0, 0.0)


# ---------------------------------------------------------------- mentions


def _token_items(mentions: Iterable[Mention]) -> set[tuple[str, int, EType]]:
    return {
        (m.doc_id, t, m.etype)
        for m in mentions
        for t in range(m.token_start, m.token_end)
    }


def token_prf(
    gold_mentions: Iterable[Mention], pred_mentions: Iterable[Mention]
) -> dict[str, PRF]:
    """Token-level detection quality, per type plus 'overall'."""
    gold = _token_items(gold_mentions)
    pred = _token_items(pred_mentions)
    out: dict[str, PRF] = {}
    for name, etype in (("intervention", EType.INTERVENTION), ("outcome", EType.OUTCOME)):
        g = {x for x in gold if x[2] is etype}
        p = {x for x in pred if x[2] is etype}
        out[name] = PRF.from_counts(len(g & p), len(p - g), len(g - p))
    out["overall"] = PRF.from_counts(
        len(gold & pred), len(pred - gold), len(gold - pred)
    )
    return out


def _spans_overlap(a: Mention, b: Mention) -> bool:
    return (
        a.etype is b.etype
        and a.token_start < b.token_end
        and b.token_start < a.token_end
    )


def entity_prf(
    gold_docs: Sequence[AnnotatedDocument],
    pred_mentions: Iterable[Mention],
    partial: bool = False,
) -> PRF:
    """Entity-level detection with a deliberately pessimistic precision.

    A gold entity is recalled if at least one predicted mention matches one
    of its mentions exactly (span and type). Every predicted mention that
    matches no gold mention at all counts as a false positive, with
    multiplicity. ``partial=True`` relaxes matching to same-type overlap and
    is a diagnostic, never a headline number.
    """
    pred_by_doc: dict[str, list[Mention]] = {}
    for m in pred_mentions:
        pred_by_doc.setdefault(m.doc_id, []).append(m)

    def matches(a: Mention, b: Mention) -> bool:
        if partial:
            return _spans_overlap(a, b)
        return (
            a.etype is b.etype
            and a.token_start == b.token_start
            and a.token_end == b.token_end
        )

    tp = fn = fp = 0
    seen_docs = set()
    for gd in gold_docs:
        seen_docs.add(gd.doc_id)
        preds = pred_by_doc.get(gd.doc_id, [])
        gold_mentions = {m.mention_id: m for m in gd.mentions}
        for entity in gd.entities:
            members = [gold_mentions[mid] for mid in entity.mentions]
            if any(matches(p, gm) for p in preds for gm in members):
                tp += 1
            else:
                fn += 1
        for p in preds:
            if not any(matches(p, gm) for gm in gd.mentions):
                fp += 1
    unknown = set(pred_by_doc) - seen_docs
    if unknown:
        raise ValueError(f"predicted mentions for unknown documents: {sorted(unknown)}")
    return PRF.from_counts(tp, fp, fn)


# ---------------------------------------------------------------- relations


_ABSENT = "<absent>"


def _entity_mapping(
    gold: AnnotatedDocument, pred: AnnotatedDocument
) -> dict[str, str | None]:
    """Predicted entity id -> gold entity id, or None.

    A predicted entity maps to a gold entity only when every one of its
    mentions is span-and-type identical to a mention of that same gold
    entity. Over-merged or partly spurious clusters map to None and can
    never earn relation credit.
    """
    owner: dict[tuple[EType, int, int], str] = {}
    gold_mentions = {m.mention_id: m for m in gold.mentions}
    for e in gold.entities:
        for mid in e.mentions:
            m = gold_mentions[mid]
            owner[(m.etype, m.token_start, m.token_end)] = e.entity_id
    pred_mentions = {m.mention_id: m for m in pred.mentions}
    mapping: dict[str, str | None] = {}
    for e in pred.entities:
        owners = {
            owner.get(
                (
                    pred_mentions[mid].etype,
                    pred_mentions[mid].token_start,
                    pred_mentions[mid].token_end,
                )
            )
            for mid in e.mentions
        }
        mapping[e.entity_id] = (
            next(iter(owners)) if len(owners) == 1 and None not in owners else None
        )
    return mapping


def _pred_order(doc: AnnotatedDocument):
    return sorted(
        doc.relations,
        key=lambda r: (
            -r.confidence,
            r.intervention,
            r.comparator or "",
            r.outcome,
            r.evidence_sentence,
        ),
    )


def _pair_docs(
    gold_docs: Sequence[AnnotatedDocument], pred_docs: Sequence[AnnotatedDocument]
) -> list[tuple[AnnotatedDocument, AnnotatedDocument | None]]:
    gold_by_id = {d.doc_id: d for d in gold_docs}
    pred_by_id: dict[str, AnnotatedDocument] = {}
    for d in pred_docs:
        if d.doc_id not in gold_by_id:
            raise ValueError(f"prediction for unknown document {d.doc_id!r}")
        if d.doc_id in pred_by_id:
            raise ValueError(f"duplicate prediction for document {d.doc_id!r}")
        pred_by_id[d.doc_id] = d
    return [(g, pred_by_id.get(g.doc_id)) for g in gold_by_id.values()]


def relation_prf(
    gold_docs: Sequence[AnnotatedDocument],
    pred_docs: Sequence[AnnotatedDocument],
    mode: str = "triplet",
) -> PRF:
    """Relation extraction quality.

    ``triplet`` matches (intervention, comparator, outcome, direction) with
    an absent comparator only matching an absent comparator; ``binary``
    projects both sides to (intervention, outcome, direction) and collapses
    duplicates (a prediction differing only in comparator is one claim).
    Entity roles are resolved through the pessimistic cluster mapping.
    """
    if mode not in ("triplet", "binary"):
        raise ValueError(f"unknown relation mode {mode!r}")
    tp = fp = 0
    total_gold = 0
    for gold, pred in _pair_docs(gold_docs, pred_docs):
        if mode == "triplet":
            gold_keys = [
                (r.intervention, r.comparator or _ABSENT, r.outcome, r.direction)
                for r in gold.relations
            ]
        else:
            gold_keys = list(
                dict.fromkeys(
                    (r.intervention, r.outcome, r.direction) for r in gold.relations
                )
            )
        total_gold += len(gold_keys)
        if pred is None:
            continue
        mapping = _entity_mapping(gold, pred)
        ordered = _pred_order(pred)
        if mode == "binary":
            deduped = []
            seen: set[tuple] = set()
            for r in ordered:
                key = (r.intervention, r.outcome, r.direction)
                if key not in seen:
                    seen.add(key)
                    deduped.append(r)
            ordered = deduped
        unmatched = list(gold_keys)
        for r in ordered:
            i = mapping.get(r.intervention)
            o = mapping.get(r.outcome)
            if mode == "triplet":
                c = _ABSENT if r.comparator is None else mapping.get(r.comparator)
                key = (i, c, o, r.direction)
            else:
                key = (i, o, r.direction)
            if i is not None and o is not None and key in unmatched:
                unmatched.remove(key)
                tp += 1
            else:
                fp += 1
    return PRF.from_counts(tp, fp, total_gold - tp)


def linking_accuracy(
    gold_docs: Sequence[AnnotatedDocument], pred_docs: Sequence[AnnotatedDocument]
) -> dict[str, float]:
    """Per-role accuracy over gold relations.

    For each gold relation, the predictions at the same evidence sentence
    are inspected: a role is correct if any of them fills it with the gold
    entity (through the pessimistic cluster mapping). Raises on gold corpora
    with no relations, since accuracy would be undefined.
    """
    total = 0
    correct = {"intervention": 0, "comparator": 0, "outcome": 0}
    for gold, pred in _pair_docs(gold_docs, pred_docs):
        mapping = _entity_mapping(gold, pred) if pred is not None else {}
        for rel in gold.relations:
            total += 1
            if pred is None:
                continue
            at_evidence = [
                r for r in pred.relations if r.evidence_sentence == rel.evidence_sentence
            ]
            gold_comp = rel.comparator or _ABSENT
            for r in at_evidence:
                if mapping.get(r.intervention) == rel.intervention:
                    correct["intervention"] += 1
                    break
            for r in at_evidence:
                pred_comp = _ABSENT if r.comparator is None else mapping.get(r.comparator)
                if pred_comp == gold_comp:
                    correct["comparator"] += 1
                    break
            for r in at_evidence:
                if mapping.get(r.outcome) == rel.outcome:
                    correct["outcome"] += 1
                    break
    if total == 0:
        raise ValueError("linking accuracy is undefined without gold relations")
    return {role: correct[role] / total for role in correct}


def direction_prf(
    gold: Sequence[Direction], pred: Sequence[Direction]
) -> dict[str, PRF]:
    """Per-class PRF for paired direction labels (classifier evaluation)."""
    if len(gold) != len(pred):
        raise ValueError("gold and predicted label sequences differ in length")
    if not gold:
        raise ValueError("no label pairs to score")
    out = {}
    for d in Direction:
        tp = sum(1 for g, p in zip(gold, pred) if g is d and p is d)
        fp = sum(1 for g, p in zip(gold, pred) if g is not d and p is d)
        fn = sum(1 for g, p in zip(gold, pred) if g is d and p is not d)
        out[d.value] = PRF.from_counts(tp, fp, fn)
    return out


def direction_scores(
    gold_docs: Sequence[AnnotatedDocument], pred_docs: Sequence[AnnotatedDocument]
) -> dict[str, PRF]:
    """End-to-end direction quality.

    Predicted tuples are matched to gold relations on entity roles alone
    (direction ignored, greedy by confidence); a matched pair with the wrong
    direction is a confusion, an unmatched gold relation is a miss for its
    class, an unmatched prediction is a false alarm for its class.
    """
    tp = {d: 0 for d in Direction}
    fp = {d: 0 for d in Direction}
    fn = {d: 0 for d in Direction}
    for gold, pred in _pair_docs(gold_docs, pred_docs):
        remaining = [
            ((r.intervention, r.comparator or _ABSENT, r.outcome), r.direction)
            for r in gold.relations
        ]
        if pred is not None:
            mapping = _entity_mapping(gold, pred)
            for r in _pred_order(pred):
                c = _ABSENT if r.comparator is None else mapping.get(r.comparator)
                key = (mapping.get(r.intervention), c, mapping.get(r.outcome))
                hit = next((x for x in remaining if x[0] == key), None)
                if key[0] is not None and key[2] is not None and hit is not None:
                    remaining.remove(hit)
                    if hit[1] is r.direction:
                        tp[r.direction] += 1
                    else:
                        fp[r.direction] += 1
                        fn[hit[1]] += 1
                else:
                    fp[r.direction] += 1
        for _, d in remaining:
            fn[d] += 1
    return {d.value: PRF.from_counts(tp[d], fp[d], fn[d]) for d in Direction}


def evidence_prf(
    gold_docs: Sequence[AnnotatedDocument], pred_docs: Sequence[AnnotatedDocument]
) -> PRF:
    """Sentence-level PRF of evidence sentence selection."""
    gold_set = {(d.doc_id, i) for d in gold_docs for i in d.evidence}
    _pair_docs(gold_docs, pred_docs)
    pred_set = {(d.doc_id, i) for d in pred_docs for i in d.evidence}
    return PRF.from_counts(
        len(gold_set & pred_set), len(pred_set - gold_set), len(gold_set - pred_set)
    )


# ---------------------------------------------------------------- clustering


def _as_clusters(clusters: Iterable[Iterable[Hashable]]) -> list[frozenset]:
    out = [frozenset(c) for c in clusters]
    if any(not c for c in out):
        raise ValueError("clusters must be non-empty")
    seen: set = set()
    for c in out:
        if c & seen:
            raise ValueError("an item appears in more than one cluster")
        seen |= c
    return out


def _shared_universe(
    gold: list[frozenset], pred: list[frozenset]
) -> tuple[list[frozenset], list[frozenset]]:
    """Items present on only one side become singletons on the other."""
    gold_items = frozenset().union(*gold) if gold else frozenset()
    pred_items = frozenset().union(*pred) if pred else frozenset()
    gold = gold + [frozenset([x]) for x in sorted(pred_items - gold_items, key=repr)]
    pred = pred + [frozenset([x]) for x in sorted(gold_items - pred_items, key=repr)]
    return gold, pred


def b_cubed(
    gold_clusters: Iterable[Iterable[Hashable]],
    pred_clusters: Iterable[Iterable[Hashable]],
) -> PRF:
    """Per-item averaged cluster overlap.

    Each item's precision is |its gold cluster ∩ its predicted cluster| over
    its predicted cluster size; recall swaps the denominator; scores are the
    plain means over all items.
    """
    gold, pred = _shared_universe(_as_clusters(gold_clusters), _as_clusters(pred_clusters))
    n = sum(len(c) for c in gold)
    if n == 0:
        raise ValueError("cannot score empty clusterings")
    p_num = r_num = 0.0
    for s in pred:
        for r in gold:
            inter = len(r & s)
            if inter:
                p_num += inter * inter / len(s)
                r_num += inter * inter / len(r)
    return PRF.from_fractions(p_num / n, r_num / n)


def muc(
    gold_clusters: Iterable[Iterable[Hashable]],
    pred_clusters: Iterable[Iterable[Hashable]],
) -> PRF:
    """Link-based score: how many cluster-internal links survive on the
    other side. A side with no links (all singletons) scores 0 on the
    corresponding axis by the usual 0/0 convention."""
    gold, pred = _shared_universe(_as_clusters(gold_clusters), _as_clusters(pred_clusters))

    def halves(a: list[frozenset], b: list[frozenset]) -> tuple[float, float]:
        num = 0.0
        den = 0.0
        for c in a:
            parts = sum(1 for d in b if c & d)
            num += len(c) - parts
            den += len(c) - 1
        return num, den

    r_num, r_den = halves(gold, pred)
    p_num, p_den = halves(pred, gold)
    return PRF.from_fractions(_safe_div(p_num, p_den), _safe_div(r_num, r_den))


def ceaf_e(
    gold_clusters: Iterable[Iterable[Hashable]],
    pred_clusters: Iterable[Iterable[Hashable]],
) -> PRF:
    """Entity-based CEAF: one-to-one cluster alignment maximizing the summed
    Dice overlap 2|R∩S|/(|R|+|S|), normalized by cluster counts."""
    gold, pred = _shared_universe(_as_clusters(gold_clusters), _as_clusters(pred_clusters))
    if not gold or not pred:
        raise ValueError("cannot score empty clusterings")
    phi = np.zeros((len(gold), len(pred)))
    for i, r in enumerate(gold):
        for j, s in enumerate(pred):
            inter = len(r & s)
            if inter:
                phi[i, j] = 2.0 * inter / (len(r) + len(s))
    rows, cols = linear_sum_assignment(phi, maximize=True)
    total = float(phi[rows, cols].sum())
    return PRF.from_fractions(total / len(pred), total / len(gold))


def clustering_report(
    gold_docs: Sequence[AnnotatedDocument], pred_docs: Sequence[AnnotatedDocument]
) -> dict[str, dict[str, PRF]]:
    """B3/MUC/CEAF_e of predicted entity grouping per type, pooled over
    documents. Cluster items are (doc, span) pairs so the two sides share a
    universe exactly where their mention spans agree."""
    out: dict[str, dict[str, PRF]] = {}
    pred_by_id = {d.doc_id: d for d in pred_docs}
    for name, etype in (("intervention", EType.INTERVENTION), ("outcome", EType.OUTCOME)):
        gold_clusters = []
        pred_clusters = []
        for gd in gold_docs:
            mentions = {m.mention_id: m for m in gd.mentions}
            for e in gd.entities:
                if e.etype is etype:
                    gold_clusters.append(
                        {
                            (gd.doc_id, mentions[mid].token_start, mentions[mid].token_end)
                            for mid in e.mentions
                        }
                    )
            pd = pred_by_id.get(gd.doc_id)
            if pd is None:
                continue
            mentions = {m.mention_id: m for m in pd.mentions}
            for e in pd.entities:
                if e.etype is etype:
                    pred_clusters.append(
                        {
                            (pd.doc_id, mentions[mid].token_start, mentions[mid].token_end)
                            for mid in e.mentions
                        }
                    )
        if not gold_clusters and not pred_clusters:
            continue
        out[name] = {
            "b_cubed": b_cubed(gold_clusters, pred_clusters),
            "muc": muc(gold_clusters, pred_clusters),
            "ceaf_e": ceaf_e(gold_clusters, pred_clusters),
        }
    return out


# ---------------------------------------------------------------- reporting


@dataclass
class EvalReport:
    """Every score the evaluator produces for one (gold, predicted) pair."""

    token: dict[str, PRF]
    entity: PRF
    entity_partial: PRF
    evidence: PRF
    relation_triplet: PRF
    relation_binary: PRF
    direction: dict[str, PRF]
    linking: dict[str, float] | None
    clustering: dict[str, dict[str, PRF]]
    counts: dict[str, int] = field(default_factory=dict)

    @property
    def direction_macro_f1(self) -> float:
        return float(np.mean([p.f1 for p in self.direction.values()]))

    def to_flat_dict(self) -> dict[str, float]:
        flat: dict[str, float] = {}

        def put(prefix: str, prf: PRF) -> None:
            flat[f"{prefix}.precision"] = prf.precision
            flat[f"{prefix}.recall"] = prf.recall
            flat[f"{prefix}.f1"] = prf.f1

        for name, prf in self.token.items():
            put(f"token.{name}", prf)
        put("entity", self.entity)
        put("entity_partial", self.entity_partial)
        put("evidence", self.evidence)
        put("relation.triplet", self.relation_triplet)
        put("relation.binary", self.relation_binary)
        for name, prf in self.direction.items():
            put(f"direction.{name}", prf)
        flat["direction.macro_f1"] = self.direction_macro_f1
        if self.linking is not None:
            for role, acc in self.linking.items():
                flat[f"linking.{role}.accuracy"] = acc
        for etype, metrics in self.clustering.items():
            for mname, prf in metrics.items():
                put(f"clustering.{etype}.{mname}", prf)
        for k, v in self.counts.items():
            flat[f"counts.{k}"] = v
        return flat

    def to_text(self) -> str:
        flat = self.to_flat_dict()
        width = max(len(k) for k in flat)
        lines = [f"{k.ljust(width)}  {flat[k]:.4f}" for k in sorted(flat)]
        return "\n".join(lines)


def evaluate_documents(
    gold_docs: Sequence[AnnotatedDocument], pred_docs: Sequence[AnnotatedDocument]
) -> EvalReport:
    """Score predicted annotated documents against gold ones."""
    gold_mentions = [m for d in gold_docs for m in d.mentions]
    pred_mentions = [m for d in pred_docs for m in d.mentions]
    try:
        linking = linking_accuracy(gold_docs, pred_docs)
    except ValueError:
        linking = None
    return EvalReport(
        token=token_prf(gold_mentions, pred_mentions),
        entity=entity_prf(gold_docs, pred_mentions),
        entity_partial=entity_prf(gold_docs, pred_mentions, partial=True),
        evidence=evidence_prf(gold_docs, pred_docs),
        relation_triplet=relation_prf(gold_docs, pred_docs, "triplet"),
        relation_binary=relation_prf(gold_docs, pred_docs, "binary"),
        direction=direction_scores(gold_docs, pred_docs),
        linking=linking,
        clustering=clustering_report(gold_docs, pred_docs),
        counts={
            "documents": len(gold_docs),
            "gold_relations": sum(len(d.relations) for d in gold_docs),
            "predicted_relations": sum(len(d.relations) for d in pred_docs),
            "gold_mentions": len(gold_mentions),
            "predicted_mentions": len(pred_mentions),
        },
    )
