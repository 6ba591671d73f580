"""End-to-end extraction: documents in, annotated documents and tuples out.

Stages: tag mentions, group them into entities by greedy similarity to each
group's first mention, pick evidence sentences, link each one to its primary
intervention and optional comparator, pair it with the outcome entities
mentioned inside it, classify the direction, and deduplicate. Each stage can
be swapped for gold annotations to isolate the others' errors.

A tuple's confidence is the product of its stage confidences: evidence score
times linker primary probability times direction probability (stages running
on gold inputs contribute 1.0).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .config import RunConfig
from .corpus import (
    AnnotatedDocument,
    Document,
    Entity,
    EType,
    Mention,
    RelationTuple,
)
from .encoders import EncoderBackend, cosine_similarity
from .errors import ClintrexError, ConfigError, InputError
from .extraction import EvidenceSentenceClassifier, MentionTagger
from .inference import DirectionClassifier
from .linking import InterventionLinker

logger = logging.getLogger(__name__)


def group_mentions(
    doc: Document,
    mentions: Sequence[Mention],
    backend: EncoderBackend,
    threshold: float,
) -> list[Entity]:
    """Greedy within-document grouping seeded by first mentions.

    Scanning mentions in document order, each one joins the existing
    same-type group whose first mention is most similar, if that similarity
    reaches the threshold; otherwise it starts a new group. Every mention
    ends up in exactly one entity.
    """
    groups: list[dict] = []
    ordered = sorted(mentions, key=lambda m: (m.token_start, m.token_end))
    for m in ordered:
        vec = backend.encode_span(doc, m.token_start, m.token_end)
        best = None
        best_sim = -2.0
        for g in groups:
            if g["etype"] is not m.etype:
                continue
            sim = cosine_similarity(vec, g["seed"])
            if sim > best_sim:
                best_sim = sim
                best = g
        if best is not None and best_sim >= threshold:
            best["members"].append(m.mention_id)
        else:
            groups.append({"etype": m.etype, "seed": vec, "members": [m.mention_id]})
    return [
        Entity(f"e{k}", doc.doc_id, g["etype"], frozenset(g["members"]))
        for k, g in enumerate(groups)
    ]


def dedupe_relations(
    tuples: Sequence[RelationTuple],
) -> tuple[list[RelationTuple], int]:
    """Keep one tuple per (intervention, comparator, outcome) triple.

    The highest-confidence tuple wins (ties: first in input order). Returns
    the survivors in input order plus how many groups had members that
    disagreed on direction.
    """
    best: dict[tuple, RelationTuple] = {}
    directions: dict[tuple, set] = {}
    order: list[tuple] = []
    for r in tuples:
        key = (r.doc_id, r.intervention, r.comparator, r.outcome)
        directions.setdefault(key, set()).add(r.direction)
        if key not in best:
            best[key] = r
            order.append(key)
        elif r.confidence > best[key].confidence:
            best[key] = r
    conflicts = sum(1 for key in order if len(directions[key]) > 1)
    return [best[key] for key in order], conflicts


@dataclass
class RunReport:
    """Counts of what the pipeline did across a batch of documents."""

    documents: int = 0
    failed: list[tuple[str, str]] = field(default_factory=list)
    evidence_sentences: int = 0
    links: int = 0
    sentences_without_candidates: int = 0
    tuples_before_dedupe: int = 0
    tuples: int = 0
    direction_conflicts: int = 0

    def to_dict(self) -> dict:
        return {
            "documents": self.documents,
            "failed": list(self.failed),
            "evidence_sentences": self.evidence_sentences,
            "links": self.links,
            "sentences_without_candidates": self.sentences_without_candidates,
            "tuples_before_dedupe": self.tuples_before_dedupe,
            "tuples": self.tuples,
            "direction_conflicts": self.direction_conflicts,
        }


class EvidencePipeline:
    """The four trained models plus the grouping threshold, run in order."""

    def __init__(
        self,
        tagger: MentionTagger,
        evidence: EvidenceSentenceClassifier,
        linker: InterventionLinker,
        direction: DirectionClassifier,
        grouping_threshold: float = 0.5,
    ):
        self.tagger = tagger
        self.evidence = evidence
        self.linker = linker
        self.direction = direction
        self.grouping_threshold = float(grouping_threshold)

    @classmethod
    def from_config(cls, cfg: RunConfig) -> "EvidencePipeline":
        """Load all four checkpoints named by the config and sanity-check
        that they embed with compatible encoders."""
        tagger = MentionTagger.load(cfg.checkpoints.tagger)
        evidence = EvidenceSentenceClassifier.load(cfg.checkpoints.evidence)
        linker = InterventionLinker.load(cfg.checkpoints.linker)
        direction = DirectionClassifier.load(cfg.checkpoints.inference)
        from .encoders import encoder_config

        expected = encoder_config(tagger._backend())
        for name, model in (
            ("evidence", evidence),
            ("linker", linker),
            ("inference", direction),
        ):
            found = encoder_config(model._backend())
            if found != expected:
                raise ConfigError(
                    f"checkpoint encoder mismatch: tagger uses {expected}, "
                    f"{name} uses {found}"
                )
        if expected["name"] != cfg.encoder.name or expected["dim"] != cfg.encoder.dim:
            raise ConfigError(
                f"config asks for encoder {cfg.encoder.name}/dim={cfg.encoder.dim} "
                f"but checkpoints were trained with {expected['name']}/dim={expected['dim']}"
            )
        return cls(tagger, evidence, linker, direction, cfg.grouping.threshold)

    # ------------------------------------------------------------ running

    def run_document(
        self,
        doc: Document,
        gold: AnnotatedDocument | None = None,
        gold_mentions: bool = False,
        gold_evidence: bool = False,
        gold_links: bool = False,
        report: RunReport | None = None,
    ) -> AnnotatedDocument:
        report = report if report is not None else RunReport()
        for switch, name in (
            (gold_mentions, "gold_mentions"),
            (gold_evidence, "gold_evidence"),
            (gold_links, "gold_links"),
        ):
            if switch and gold is None:
                raise InputError(f"{name} requires gold annotations for {doc.doc_id}")

        backend = self.tagger._backend()
        if gold_mentions:
            mentions = list(gold.mentions)
            entities = list(gold.entities)
        else:
            mentions = self.tagger.predict_document(doc)
            entities = group_mentions(doc, mentions, backend, self.grouping_threshold)

        if gold_evidence:
            evidence_scores = {i: 1.0 for i in gold.evidence}
        else:
            evidence_scores = {
                ev.sentence_index: ev.score for ev in self.evidence.classify(doc)
            }
        evidence_indices = sorted(evidence_scores)
        report.evidence_sentences += len(evidence_indices)

        raw: list[RelationTuple] = []
        if gold_links:
            if not gold_mentions:
                raise InputError(
                    f"{doc.doc_id}: gold_links reuses gold entity ids and only "
                    "combines with gold_mentions"
                )
            mention_lookup = {m.mention_id: m for m in mentions}
            entity_lookup = {e.entity_id: e for e in entities}
            for rel in gold.relations:
                s = rel.evidence_sentence
                ev_score = 1.0
                i_tokens = _entity_span(doc, entity_lookup[rel.intervention], mention_lookup, s)
                o_tokens = _entity_span(doc, entity_lookup[rel.outcome], mention_lookup, s)
                c_tokens = (
                    _entity_span(doc, entity_lookup[rel.comparator], mention_lookup, s)
                    if rel.comparator
                    else None
                )
                direction, prob = self.direction.predict(
                    i_tokens, o_tokens, doc.sentence_surfaces(s), c_tokens
                )
                raw.append(
                    RelationTuple(
                        doc.doc_id,
                        rel.intervention,
                        rel.comparator,
                        rel.outcome,
                        direction,
                        s,
                        ev_score * prob,
                    )
                )
                report.links += 1
        else:
            links = self.linker.link_evidence(doc, entities, mentions, evidence_indices)
            report.links += len(links)
            report.sentences_without_candidates += len(evidence_indices) - len(links)
            mention_lookup = {m.mention_id: m for m in mentions}
            entity_lookup = {e.entity_id: e for e in entities}
            for link in links:
                s = link.sentence_index
                i_ent = entity_lookup[link.intervention]
                i_tokens = _entity_span(doc, i_ent, mention_lookup, s)
                c_tokens = None
                if link.comparator is not None and link.comparator != link.intervention:
                    c_tokens = _entity_span(
                        doc, entity_lookup[link.comparator], mention_lookup, s
                    )
                for o_ent in _outcomes_in_sentence(doc, entities, mention_lookup, s):
                    o_tokens = _entity_span(doc, o_ent, mention_lookup, s)
                    direction, prob = self.direction.predict(
                        i_tokens, o_tokens, doc.sentence_surfaces(s), c_tokens
                    )
                    comparator = (
                        link.comparator if link.comparator != link.intervention else None
                    )
                    raw.append(
                        RelationTuple(
                            doc.doc_id,
                            link.intervention,
                            comparator,
                            o_ent.entity_id,
                            direction,
                            s,
                            evidence_scores[s] * link.intervention_prob * prob,
                        )
                    )

        report.tuples_before_dedupe += len(raw)
        kept, conflicts = dedupe_relations(raw)
        report.direction_conflicts += conflicts
        report.tuples += len(kept)
        return AnnotatedDocument(
            doc,
            tuple(mentions),
            tuple(entities),
            tuple(evidence_indices),
            tuple(kept),
        )

    def run(
        self,
        docs: Sequence[Document],
        gold_by_id: Mapping[str, AnnotatedDocument] | None = None,
        gold_mentions: bool = False,
        gold_evidence: bool = False,
        gold_links: bool = False,
    ) -> tuple[list[AnnotatedDocument], RunReport]:
        """Process a batch. A document that fails is recorded in the report
        and contributes an empty annotation layer instead of aborting the
        whole run."""
        report = RunReport()
        out: list[AnnotatedDocument] = []
        for doc in docs:
            report.documents += 1
            gold = (gold_by_id or {}).get(doc.doc_id)
            try:
                out.append(
                    self.run_document(
                        doc,
                        gold,
                        gold_mentions=gold_mentions,
                        gold_evidence=gold_evidence,
                        gold_links=gold_links,
                        report=report,
                    )
                )
            except InputError:
                raise
            except (ClintrexError, ValueError, RuntimeError) as exc:
                logger.warning("document %s failed: %s", doc.doc_id, exc)
                report.failed.append((doc.doc_id, str(exc)))
                out.append(AnnotatedDocument(doc))
        return out, report


def _entity_span(
    doc: Document,
    entity: Entity,
    mentions_by_id: Mapping[str, Mention],
    sentence: int,
) -> tuple[str, ...]:
    """Entity surface for classifier input: its first mention inside the
    sentence when there is one, else its document-level first mention."""
    members = sorted(
        (mentions_by_id[mid] for mid in entity.mentions),
        key=lambda m: (m.token_start, m.token_end),
    )
    ts, te = doc.sentences[sentence]
    for m in members:
        if ts <= m.token_start and m.token_end <= te:
            return tuple(doc.token_surfaces(m.token_start, m.token_end))
    first = members[0]
    return tuple(doc.token_surfaces(first.token_start, first.token_end))


def _outcomes_in_sentence(
    doc: Document,
    entities: Sequence[Entity],
    mentions_by_id: Mapping[str, Mention],
    sentence: int,
) -> list[Entity]:
    """Outcome entities with at least one mention inside the sentence,
    ordered by their first in-sentence mention."""
    ts, te = doc.sentences[sentence]
    found: list[tuple[int, Entity]] = []
    for e in entities:
        if e.etype is not EType.OUTCOME:
            continue
        starts = [
            mentions_by_id[mid].token_start
            for mid in e.mentions
            if ts <= mentions_by_id[mid].token_start
            and mentions_by_id[mid].token_end <= te
        ]
        if starts:
            found.append((min(starts), e))
    return [e for _, e in sorted(found, key=lambda x: (x[0], x[1].entity_id))]
