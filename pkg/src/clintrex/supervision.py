"""Distant supervision: turn (document, prompt) pairs into training data.

A prompt names the intervention, comparator, and outcome of one relation by
their texts, gives the direction label, and points at the evidence span in
characters. Mentions found by the tagger are projected onto prompt entities
by cosine similarity with a tunable threshold; the result is a fully
annotated document plus classifier samples for the evidence, linking, and
direction heads.

The same sample builders also run directly over gold-annotated documents,
which is how the bundled synthetic corpus trains the heads.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from hashlib import blake2b
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .corpus import (
    _open_for_read,
    AnnotatedDocument,
    Direction,
    Document,
    Entity,
    EType,
    Mention,
    RelationTuple,
)
from .encoders import EncoderBackend, cosine_similarity
from .errors import ParseError
from .metrics import b_cubed
from .samples import EvidenceSample, InferenceSample, LinkSample

logger = logging.getLogger(__name__)

DEFAULT_THRESHOLD_GRID = tuple(round(0.50 + 0.05 * i, 2) for i in range(10))


@dataclass(frozen=True)
class Prompt:
    """One relation described by entity texts and an evidence char span."""

    doc_id: str
    intervention: str
    comparator: str | None
    outcome: str
    label: Direction
    evidence_start: int
    evidence_end: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "label", Direction(self.label))
        if not self.intervention.strip() or not self.outcome.strip():
            raise ValueError(f"{self.doc_id}: prompt entity texts must be non-empty")
        if self.comparator is not None and not self.comparator.strip():
            raise ValueError(f"{self.doc_id}: comparator text must be non-empty or null")
        if not 0 <= self.evidence_start < self.evidence_end:
            raise ValueError(
                f"{self.doc_id}: bad evidence span "
                f"[{self.evidence_start},{self.evidence_end})"
            )


def load_prompts(path: str | Path) -> list[Prompt]:
    out: list[Prompt] = []
    with _open_for_read(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                raise ParseError(path, lineno, "blank line")
            try:
                rec = json.loads(line)
                start, end = rec["evidence"]
                out.append(
                    Prompt(
                        rec["doc_id"],
                        rec["i"],
                        rec.get("c"),
                        rec["o"],
                        Direction(rec["label"]),
                        int(start),
                        int(end),
                    )
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise ParseError(path, lineno, f"malformed prompt: {exc!r}") from exc
    return out


def write_prompts(prompts: Iterable[Prompt], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for p in prompts:
            rec = {
                "doc_id": p.doc_id,
                "i": p.intervention,
                "c": p.comparator,
                "o": p.outcome,
                "label": p.label.value,
                "evidence": [p.evidence_start, p.evidence_end],
            }
            fh.write(json.dumps(rec, ensure_ascii=False))
            fh.write("\n")


def doc_rng(seed: int, doc_id: str) -> np.random.Generator:
    """Independent per-document random stream, stable across runs."""
    digest = blake2b(f"{seed}:{doc_id}".encode("utf-8"), digest_size=8).digest()
    return np.random.default_rng(int.from_bytes(digest, "little"))


def assign_mentions(
    mention_vectors: np.ndarray,
    seed_vectors: np.ndarray,
    threshold: float,
) -> list[int | None]:
    """Assign each mention vector to its most similar seed vector.

    A mention whose best cosine similarity falls below the threshold stays
    unassigned (None). Ties pick the smallest seed index. With no seeds,
    everything is unassigned.
    """
    mention_vectors = np.asarray(mention_vectors, dtype=float)
    seed_vectors = np.asarray(seed_vectors, dtype=float)
    out: list[int | None] = []
    for mv in mention_vectors:
        if seed_vectors.size == 0:
            out.append(None)
            continue
        sims = np.array([cosine_similarity(mv, sv) for sv in seed_vectors])
        best = int(np.argmax(sims))
        out.append(best if sims[best] >= threshold else None)
    return out


def group_mentions_by_seeds(
    doc: Document,
    mentions: Sequence[Mention],
    seeds: Sequence[tuple[str, EType]],
    backend: EncoderBackend,
    threshold: float,
) -> tuple[list[int | None], int]:
    """Assign mentions to (text, type) seeds of their own type.

    Returns per-mention seed indices (None = unassigned) and the count of
    mentions that were assigned to a pre-existing seed.
    """
    seed_vecs = [backend.encode_text(text) for text, _ in seeds]
    assignments: list[int | None] = []
    assigned = 0
    for m in mentions:
        mv = backend.encode_span(doc, m.token_start, m.token_end)
        candidates = [i for i, (_, et) in enumerate(seeds) if et is m.etype]
        if not candidates:
            assignments.append(None)
            continue
        sims = np.array([cosine_similarity(mv, seed_vecs[i]) for i in candidates])
        best = int(np.argmax(sims))
        if sims[best] >= threshold:
            assignments.append(candidates[best])
            assigned += 1
        else:
            assignments.append(None)
    return assignments, assigned


def tune_threshold(
    docs: Sequence[AnnotatedDocument],
    backend: EncoderBackend,
    grid: Sequence[float] = DEFAULT_THRESHOLD_GRID,
) -> tuple[float, dict[float, float]]:
    """Pick the similarity threshold for mention assignment.

    For every grid value, gold mentions of each document are assigned to
    seeds built from the document's gold entity texts; the produced
    clustering is scored against the gold clustering with B3 F1 and averaged
    over documents. Returns (best threshold, per-threshold mean F1); ties
    pick the smallest threshold.
    """
    if not grid:
        raise ValueError("threshold grid is empty")
    scored_docs = [d for d in docs if d.mentions and d.entities]
    if not scored_docs:
        raise ValueError("no documents with mentions and entities to tune on")
    scores: dict[float, float] = {}
    for t in grid:
        f1s = []
        for ad in scored_docs:
            seeds = [(e.canonical_text, e.etype) for e in ad.entities]
            assignments, _ = group_mentions_by_seeds(
                ad.document, ad.mentions, seeds, backend, t
            )
            clusters: dict[object, set[str]] = {}
            for m, a in zip(ad.mentions, assignments):
                key = a if a is not None else ("solo", m.mention_id)
                clusters.setdefault(key, set()).add(m.mention_id)
            gold = [set(e.mentions) for e in ad.entities]
            f1s.append(b_cubed(gold, list(clusters.values())).f1)
        scores[float(t)] = float(np.mean(f1s))
    best = max(sorted(scores), key=lambda t: scores[t])
    # max over sorted keys returns the smallest threshold on ties
    return best, scores


def sample_evidence(
    ad: AnnotatedDocument, negatives_per_positive: int = 1
) -> list[EvidenceSample]:
    """Positive samples from evidence sentences, negatives from same-document
    sentences of the closest token length (deterministic, no replacement)."""
    doc = ad.document
    positives = sorted(ad.evidence)
    pool = [i for i in range(doc.num_sentences) if i not in set(positives)]
    out = [
        EvidenceSample(doc.doc_id, i, tuple(doc.sentence_surfaces(i)), 1)
        for i in positives
    ]
    for p in positives:
        p_len = len(doc.sentence_surfaces(p))
        for _ in range(negatives_per_positive):
            if not pool:
                break
            best = min(pool, key=lambda i: (abs(len(doc.sentence_surfaces(i)) - p_len), i))
            pool.remove(best)
            out.append(EvidenceSample(doc.doc_id, best, tuple(doc.sentence_surfaces(best)), 0))
    return out


def _entity_tokens(entity: Entity) -> tuple[str, ...]:
    return tuple(entity.canonical_text.split())


def _entity_sentence_surface(
    ad: AnnotatedDocument, entity: Entity, sentence: int
) -> tuple[str, ...] | None:
    """Surface tokens of the entity's first mention inside the sentence."""
    ts, te = ad.document.sentences[sentence]
    members = sorted(
        (ad.mention_by_id(mid) for mid in entity.mentions),
        key=lambda m: (m.token_start, m.token_end),
    )
    for m in members:
        if ts <= m.token_start and m.token_end <= te:
            return tuple(ad.document.token_surfaces(m.token_start, m.token_end))
    return None


def _entity_span_tokens(ad: AnnotatedDocument, entity: Entity, sentence: int) -> tuple[str, ...]:
    return _entity_sentence_surface(ad, entity, sentence) or _entity_tokens(entity)


def build_link_samples(
    ad: AnnotatedDocument,
    rng: np.random.Generator,
    negatives_per_positive: int = 3,
) -> list[LinkSample]:
    """Linker training pairs from one annotated document.

    Positives per relation: the intervention span (label primary) and the
    comparator span (label comparator). Negatives cycle through three
    sources: other intervention entities of the same document, a compound
    phrase joining intervention and comparator, and random sentence
    sub-spans.
    """
    doc = ad.document
    samples: dict[tuple, LinkSample] = {}

    def add(sentence: int, span: tuple[str, ...], label: str) -> None:
        key = (sentence, span, label)
        if span and key not in samples:
            samples[key] = LinkSample(
                doc.doc_id, sentence, span, tuple(doc.sentence_surfaces(sentence)), label
            )

    for rel in ad.relations:
        s = rel.evidence_sentence
        sent_tokens = tuple(doc.sentence_surfaces(s))
        i_ent = ad.entity_by_id(rel.intervention)
        i_span = _entity_span_tokens(ad, i_ent, s)
        add(s, i_span, "primary")
        c_span: tuple[str, ...] | None = None
        if rel.comparator is not None:
            c_ent = ad.entity_by_id(rel.comparator)
            c_span = _entity_span_tokens(ad, c_ent, s)
            add(s, c_span, "comparator")

        extraneous = [
            e
            for e in ad.entities
            if e.etype is EType.INTERVENTION
            and e.entity_id not in (rel.intervention, rel.comparator)
        ]
        produced = 0
        source = 0
        attempts = 0
        while produced < negatives_per_positive and attempts < 4 * negatives_per_positive:
            attempts += 1
            kind = source % 3
            source += 1
            if kind == 0 and extraneous:
                ent = extraneous[produced % len(extraneous)]
                span = _entity_span_tokens(ad, ent, s)
            elif kind == 1 and c_span is not None:
                span = i_span + ("and",) + c_span
            elif kind == 2 and len(sent_tokens) >= 1:
                length = int(rng.integers(1, min(3, len(sent_tokens)) + 1))
                start = int(rng.integers(0, len(sent_tokens) - length + 1))
                span = sent_tokens[start : start + length]
            else:
                continue
            if span == i_span or (c_span is not None and span == c_span):
                continue
            before = len(samples)
            add(s, span, "unrelated")
            if len(samples) > before:
                produced += 1
    return list(samples.values())


def build_inference_samples(ad: AnnotatedDocument) -> list[InferenceSample]:
    """Direction training samples, one per relation of the document."""
    doc = ad.document
    out = []
    for rel in ad.relations:
        s = rel.evidence_sentence
        i_ent = ad.entity_by_id(rel.intervention)
        o_ent = ad.entity_by_id(rel.outcome)
        comparator = None
        if rel.comparator is not None:
            comparator = _entity_tokens(ad.entity_by_id(rel.comparator))
        out.append(
            InferenceSample(
                doc.doc_id,
                s,
                _entity_span_tokens(ad, i_ent, s),
                _entity_span_tokens(ad, o_ent, s),
                tuple(doc.sentence_surfaces(s)),
                rel.direction,
                comparator,
            )
        )
    return out


def build_samples_from_annotations(
    docs: Sequence[AnnotatedDocument],
    seed: int = 0,
    evidence_negatives_per_positive: int = 1,
    link_negatives_per_positive: int = 3,
) -> list:
    """All classifier samples for a gold-annotated corpus."""
    samples: list = []
    for ad in docs:
        rng = doc_rng(seed, ad.doc_id)
        samples.extend(sample_evidence(ad, evidence_negatives_per_positive))
        samples.extend(build_link_samples(ad, rng, link_negatives_per_positive))
        samples.extend(build_inference_samples(ad))
    return samples


@dataclass
class BuildReport:
    """What happened while projecting prompts onto tagger output."""

    documents_in: int = 0
    documents_without_prompts: int = 0
    documents_built: int = 0
    mentions_total: int = 0
    mentions_assigned: int = 0
    relations_built: int = 0
    relations_dropped: int = 0
    dropped: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "documents_in": self.documents_in,
            "documents_without_prompts": self.documents_without_prompts,
            "documents_built": self.documents_built,
            "mentions_total": self.mentions_total,
            "mentions_assigned": self.mentions_assigned,
            "relations_built": self.relations_built,
            "relations_dropped": self.relations_dropped,
        }


def _overlapping_sentences(doc: Document, start: int, end: int) -> list[int]:
    hits = []
    for i in range(doc.num_sentences):
        cs, ce = doc.sentence_char_span(i)
        if cs < end and start < ce:
            hits.append(i)
    return hits


def build_training_corpus(
    docs: Sequence[Document],
    prompts: Sequence[Prompt],
    mentions_by_doc: Mapping[str, Sequence[Mention]],
    backend: EncoderBackend,
    threshold: float,
    seed: int = 0,
    evidence_negatives_per_positive: int = 1,
    link_negatives_per_positive: int = 3,
) -> tuple[list[AnnotatedDocument], list, BuildReport]:
    """Project prompts onto extracted mentions, producing a training corpus.

    Each unique prompt entity text seeds an entity; extracted mentions join
    the most similar same-type seed above the threshold, and leftovers become
    singleton entities. A relation whose seed entity attracted no mentions
    cannot exist in the corpus schema and is dropped with a warning count.
    """
    report = BuildReport(documents_in=len(docs))
    by_doc: dict[str, list[Prompt]] = {}
    for p in prompts:
        by_doc.setdefault(p.doc_id, []).append(p)

    built: list[AnnotatedDocument] = []
    samples: list = []
    for doc in docs:
        doc_prompts = by_doc.get(doc.doc_id, [])
        if not doc_prompts:
            report.documents_without_prompts += 1
            continue
        mentions = list(mentions_by_doc.get(doc.doc_id, []))
        report.mentions_total += len(mentions)

        seeds: list[tuple[str, EType]] = []
        seed_index: dict[tuple[str, EType], int] = {}
        for p in doc_prompts:
            for text, etype in (
                (p.intervention, EType.INTERVENTION),
                (p.comparator, EType.INTERVENTION),
                (p.outcome, EType.OUTCOME),
            ):
                if text is not None and (text, etype) not in seed_index:
                    seed_index[(text, etype)] = len(seeds)
                    seeds.append((text, etype))

        assignments, assigned = group_mentions_by_seeds(
            doc, mentions, seeds, backend, threshold
        )
        report.mentions_assigned += assigned

        members: dict[int, set[str]] = {}
        for m, a in zip(mentions, assignments):
            if a is not None:
                members.setdefault(a, set()).add(m.mention_id)
        entities: list[Entity] = []
        seed_entity_id: dict[int, str] = {}
        for idx, (_, etype) in enumerate(seeds):
            if idx in members:
                eid = f"e{len(entities)}"
                seed_entity_id[idx] = eid
                entities.append(Entity(eid, doc.doc_id, etype, frozenset(members[idx])))
        for m, a in zip(mentions, assignments):
            if a is None:
                entities.append(
                    Entity(f"e{len(entities)}", doc.doc_id, m.etype, frozenset([m.mention_id]))
                )

        evidence: set[int] = set()
        relations: list[RelationTuple] = []
        for p in doc_prompts:
            sentence_hits = _overlapping_sentences(doc, p.evidence_start, p.evidence_end)
            i_idx = seed_index[(p.intervention, EType.INTERVENTION)]
            o_idx = seed_index[(p.outcome, EType.OUTCOME)]
            c_idx = (
                seed_index[(p.comparator, EType.INTERVENTION)]
                if p.comparator is not None
                else None
            )
            missing = i_idx not in seed_entity_id or o_idx not in seed_entity_id
            if c_idx is not None and c_idx not in seed_entity_id:
                missing = True
            if missing or not sentence_hits:
                report.relations_dropped += 1
                report.dropped.append(doc.doc_id)
                continue
            evidence.update(sentence_hits)
            comparator = seed_entity_id[c_idx] if c_idx is not None else None
            intervention = seed_entity_id[i_idx]
            if comparator == intervention:
                report.relations_dropped += 1
                report.dropped.append(doc.doc_id)
                continue
            relations.append(
                RelationTuple(
                    doc.doc_id,
                    intervention,
                    comparator,
                    seed_entity_id[o_idx],
                    p.label,
                    sentence_hits[0],
                )
            )

        ad = AnnotatedDocument(
            doc,
            tuple(mentions),
            tuple(entities),
            tuple(sorted(evidence)),
            tuple(relations),
        )
        built.append(ad)
        report.documents_built += 1
        report.relations_built += len(relations)

        rng = doc_rng(seed, doc.doc_id)
        samples.extend(sample_evidence(ad, evidence_negatives_per_positive))
        samples.extend(build_link_samples(ad, rng, link_negatives_per_positive))
        samples.extend(build_inference_samples(ad))

    if report.relations_dropped:
        logger.warning(
            "dropped %d relation(s) whose prompt entities attracted no mentions "
            "or whose evidence span matched no sentence",
            report.relations_dropped,
        )
    return built, samples, report
