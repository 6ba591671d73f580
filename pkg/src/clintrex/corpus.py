"""Data model and JSON-Lines serialization for annotated trial abstracts.

A document is plain text plus token and sentence offsets. Annotations layer
mentions (token spans typed as intervention or outcome), entities (groups of
coreferent mentions), evidence sentence indices, and relation tuples
(intervention, optional comparator, outcome, direction) on top of it.

Every object validates its invariants at construction time; a successfully
built AnnotatedDocument is internally consistent by definition. Violations
raise ValidationError naming the document and the broken rule.
"""

from __future__ import annotations

import json
from bisect import bisect_right
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

from .errors import InputError, ParseError, ValidationError


def _open_for_read(path: str | Path):
    try:
        return open(path, encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror or exc}") from exc


class EType(str, Enum):
    """Entity/mention type."""

    INTERVENTION = "intervention"
    OUTCOME = "outcome"


class Direction(str, Enum):
    """Reported effect of the intervention on the outcome, relative to the
    comparator. NO_DIFFERENCE covers explicit no-significant-change findings."""

    INCREASED = "increased"
    DECREASED = "decreased"
    NO_DIFFERENCE = "no_diff"


class Token(NamedTuple):
    text: str
    start: int
    end: int


@dataclass(frozen=True)
class Document:
    """Raw abstract text with token and sentence segmentation.

    Invariants: token character spans are non-empty, strictly increasing and
    non-overlapping, each matching its surface in ``text``; sentence spans
    partition the token range [0, len(tokens)) with no gaps or overlaps.
    """

    doc_id: str
    text: str
    tokens: tuple[Token, ...]
    sentences: tuple[tuple[int, int], ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "tokens", tuple(Token(*t) for t in self.tokens))
        object.__setattr__(
            self, "sentences", tuple((int(a), int(b)) for a, b in self.sentences)
        )
        if not self.doc_id:
            raise ValidationError("<document>", "doc_id must be non-empty")
        prev_end = 0
        for i, tok in enumerate(self.tokens):
            if not (0 <= tok.start < tok.end <= len(self.text)):
                raise ValidationError(
                    self.doc_id, f"token {i} span [{tok.start},{tok.end}) out of range"
                )
            if tok.start < prev_end:
                raise ValidationError(self.doc_id, f"token {i} overlaps previous token")
            if self.text[tok.start : tok.end] != tok.text:
                raise ValidationError(
                    self.doc_id, f"token {i} surface does not match text slice"
                )
            prev_end = tok.end
        cursor = 0
        for k, (ts, te) in enumerate(self.sentences):
            if ts != cursor or te <= ts or te > len(self.tokens):
                raise ValidationError(
                    self.doc_id,
                    f"sentence {k} [{ts},{te}) does not partition the token range",
                )
            cursor = te
        if cursor != len(self.tokens):
            raise ValidationError(self.doc_id, "sentences do not cover all tokens")

    @property
    def num_tokens(self) -> int:
        return len(self.tokens)

    @property
    def num_sentences(self) -> int:
        return len(self.sentences)

    def token_surfaces(self, start: int, end: int) -> list[str]:
        return [t.text for t in self.tokens[start:end]]

    def sentence_surfaces(self, index: int) -> list[str]:
        ts, te = self.sentences[index]
        return self.token_surfaces(ts, te)

    def span_surface(self, start: int, end: int) -> str:
        """Original text covered by tokens [start, end), whitespace intact."""
        if not 0 <= start < end <= len(self.tokens):
            raise ValidationError(self.doc_id, f"span [{start},{end}) out of range")
        return self.text[self.tokens[start].start : self.tokens[end - 1].end]

    def sentence_char_span(self, index: int) -> tuple[int, int]:
        ts, te = self.sentences[index]
        return self.tokens[ts].start, self.tokens[te - 1].end

    def sentence_of_token(self, token_index: int) -> int:
        """Index of the sentence containing the given token."""
        if not 0 <= token_index < len(self.tokens):
            raise ValidationError(self.doc_id, f"token index {token_index} out of range")
        starts = [ts for ts, _ in self.sentences]
        return bisect_right(starts, token_index) - 1


def document_from_sentences(doc_id: str, sentences: Sequence[Sequence[str]]) -> Document:
    """Build a Document from per-sentence token lists, joining with spaces."""
    tokens: list[Token] = []
    spans: list[tuple[int, int]] = []
    pieces: list[str] = []
    cursor = 0
    for sent in sentences:
        start = len(tokens)
        for surface in sent:
            if pieces:
                pieces.append(" ")
                cursor += 1
            tokens.append(Token(surface, cursor, cursor + len(surface)))
            pieces.append(surface)
            cursor += len(surface)
        spans.append((start, len(tokens)))
    return Document(doc_id, "".join(pieces), tuple(tokens), tuple(spans))


@dataclass(frozen=True)
class Mention:
    """A typed token span [token_start, token_end) in one document."""

    mention_id: str
    doc_id: str
    token_start: int
    token_end: int
    etype: EType

    def __post_init__(self) -> None:
        object.__setattr__(self, "etype", EType(self.etype))
        if not (0 <= self.token_start < self.token_end):
            raise ValidationError(
                self.doc_id,
                f"mention {self.mention_id} has empty or negative span "
                f"[{self.token_start},{self.token_end})",
            )


@dataclass(frozen=True)
class Entity:
    """A group of coreferent mentions of one intervention or outcome.

    ``canonical_text`` is derived (surface of the document-order first
    mention) and is filled in when the entity is attached to a document.
    """

    entity_id: str
    doc_id: str
    etype: EType
    mentions: frozenset[str]
    canonical_text: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "etype", EType(self.etype))
        object.__setattr__(self, "mentions", frozenset(self.mentions))
        if not self.mentions:
            raise ValidationError(
                self.doc_id, f"entity {self.entity_id} has an empty mention set"
            )


@dataclass(frozen=True)
class EvidenceSentence:
    """A sentence judged to report a comparative finding, with a score."""

    doc_id: str
    sentence_index: int
    score: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.score <= 1.0:
            raise ValidationError(
                self.doc_id,
                f"evidence sentence {self.sentence_index} score {self.score} "
                "outside [0, 1]",
            )


@dataclass(frozen=True)
class RelationTuple:
    """One comparative finding: intervention vs comparator on an outcome.

    ``intervention``, ``comparator`` and ``outcome`` are entity ids;
    ``comparator`` may be None when the text names none.
    """

    doc_id: str
    intervention: str
    comparator: str | None
    outcome: str
    direction: Direction
    evidence_sentence: int
    confidence: float = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "direction", Direction(self.direction))
        if self.comparator is not None and self.comparator == self.intervention:
            raise ValidationError(
                self.doc_id,
                f"relation has identical intervention and comparator "
                f"{self.intervention!r}",
            )
        if not 0.0 <= self.confidence <= 1.0:
            raise ValidationError(
                self.doc_id, f"relation confidence {self.confidence} outside [0, 1]"
            )


@dataclass(frozen=True)
class AnnotatedDocument:
    """A document plus its full annotation layer, validated as a whole.

    Checks: mention ids unique and spans in range; same-type mentions do not
    overlap; entity members resolve, share the entity's type, and no mention
    belongs to two entities; evidence indices are valid and unique; relation
    roles resolve to entities of the right type and their evidence sentence
    exists. Entity canonical texts are recomputed from the document.
    """

    document: Document
    mentions: tuple[Mention, ...] = ()
    entities: tuple[Entity, ...] = ()
    evidence: tuple[int, ...] = ()
    relations: tuple[RelationTuple, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "mentions", tuple(self.mentions))
        object.__setattr__(self, "evidence", tuple(int(i) for i in self.evidence))
        object.__setattr__(self, "relations", tuple(self.relations))
        doc = self.document
        did = doc.doc_id

        by_id: dict[str, Mention] = {}
        for m in self.mentions:
            if m.doc_id != did:
                raise ValidationError(did, f"mention {m.mention_id} belongs to {m.doc_id}")
            if m.mention_id in by_id:
                raise ValidationError(did, f"duplicate mention id {m.mention_id}")
            if m.token_end > doc.num_tokens:
                raise ValidationError(
                    did, f"mention {m.mention_id} ends past the last token"
                )
            by_id[m.mention_id] = m
        for etype in EType:
            ordered = sorted(
                (m for m in self.mentions if m.etype is etype),
                key=lambda m: (m.token_start, m.token_end),
            )
            for a, b in zip(ordered, ordered[1:]):
                if b.token_start < a.token_end:
                    raise ValidationError(
                        did,
                        f"same-type mentions {a.mention_id} and {b.mention_id} overlap",
                    )

        seen_members: set[str] = set()
        filled: list[Entity] = []
        entity_ids: set[str] = set()
        for e in self.entities:
            if e.doc_id != did:
                raise ValidationError(did, f"entity {e.entity_id} belongs to {e.doc_id}")
            if e.entity_id in entity_ids:
                raise ValidationError(did, f"duplicate entity id {e.entity_id}")
            entity_ids.add(e.entity_id)
            for mid in e.mentions:
                if mid not in by_id:
                    raise ValidationError(
                        did, f"entity {e.entity_id} references unknown mention {mid}"
                    )
                if by_id[mid].etype is not e.etype:
                    raise ValidationError(
                        did,
                        f"entity {e.entity_id} ({e.etype.value}) contains "
                        f"{by_id[mid].etype.value} mention {mid}",
                    )
                if mid in seen_members:
                    raise ValidationError(
                        did, f"mention {mid} belongs to more than one entity"
                    )
                seen_members.add(mid)
            first = min(
                (by_id[mid] for mid in e.mentions),
                key=lambda m: (m.token_start, m.token_end),
            )
            filled.append(
                replace(e, canonical_text=doc.span_surface(first.token_start, first.token_end))
            )
        object.__setattr__(self, "entities", tuple(filled))

        if len(set(self.evidence)) != len(self.evidence):
            raise ValidationError(did, "duplicate evidence sentence index")
        for i in self.evidence:
            if not 0 <= i < doc.num_sentences:
                raise ValidationError(did, f"evidence sentence index {i} out of range")

        for r in self.relations:
            if r.doc_id != did:
                raise ValidationError(did, f"relation belongs to {r.doc_id}")
            for role, eid, etype in (
                ("intervention", r.intervention, EType.INTERVENTION),
                ("comparator", r.comparator, EType.INTERVENTION),
                ("outcome", r.outcome, EType.OUTCOME),
            ):
                if eid is None:
                    continue
                ent = next((e for e in self.entities if e.entity_id == eid), None)
                if ent is None:
                    raise ValidationError(
                        did, f"relation {role} references unknown entity {eid}"
                    )
                if ent.etype is not etype:
                    raise ValidationError(
                        did, f"relation {role} entity {eid} has type {ent.etype.value}"
                    )
            if not 0 <= r.evidence_sentence < doc.num_sentences:
                raise ValidationError(
                    did, f"relation evidence sentence {r.evidence_sentence} out of range"
                )

    @property
    def doc_id(self) -> str:
        return self.document.doc_id

    def mention_by_id(self, mention_id: str) -> Mention:
        for m in self.mentions:
            if m.mention_id == mention_id:
                return m
        raise KeyError(mention_id)

    def entity_by_id(self, entity_id: str) -> Entity:
        for e in self.entities:
            if e.entity_id == entity_id:
                return e
        raise KeyError(entity_id)

    def entity_of_mention(self, mention_id: str) -> Entity | None:
        for e in self.entities:
            if mention_id in e.mentions:
                return e
        return None


def doc_to_record(ad: AnnotatedDocument) -> dict:
    """Serialize to the JSON record layout used by the corpus files."""
    doc = ad.document
    by_id = {m.mention_id: m for m in ad.mentions}

    def mention_order(mid: str) -> tuple[int, int]:
        m = by_id[mid]
        return (m.token_start, m.token_end)

    return {
        "doc_id": doc.doc_id,
        "text": doc.text,
        "tokens": [[t.start, t.end] for t in doc.tokens],
        "sentences": [[a, b] for a, b in doc.sentences],
        "mentions": [
            {
                "id": m.mention_id,
                "type": m.etype.value,
                "start": m.token_start,
                "end": m.token_end,
            }
            for m in ad.mentions
        ],
        "entities": [
            {
                "id": e.entity_id,
                "type": e.etype.value,
                "mentions": sorted(e.mentions, key=mention_order),
            }
            for e in ad.entities
        ],
        "evidence": list(ad.evidence),
        "relations": [
            {
                "i": r.intervention,
                "c": r.comparator,
                "o": r.outcome,
                "direction": r.direction.value,
                "evidence": r.evidence_sentence,
            }
            for r in ad.relations
        ],
    }


def doc_from_record(rec: dict) -> AnnotatedDocument:
    """Inverse of doc_to_record. Raises KeyError/TypeError on missing or
    ill-typed fields; the loader turns those into ParseError."""
    doc_id = rec["doc_id"]
    text = rec["text"]
    tokens = tuple(
        Token(text[int(s) : int(e)], int(s), int(e)) for s, e in rec["tokens"]
    )
    doc = Document(doc_id, text, tokens, tuple((a, b) for a, b in rec["sentences"]))
    mentions = tuple(
        Mention(m["id"], doc_id, int(m["start"]), int(m["end"]), EType(m["type"]))
        for m in rec.get("mentions", [])
    )
    entities = tuple(
        Entity(e["id"], doc_id, EType(e["type"]), frozenset(e["mentions"]))
        for e in rec.get("entities", [])
    )
    relations = tuple(
        RelationTuple(
            doc_id,
            r["i"],
            r.get("c"),
            r["o"],
            Direction(r["direction"]),
            int(r["evidence"]),
        )
        for r in rec.get("relations", [])
    )
    return AnnotatedDocument(
        doc, mentions, entities, tuple(rec.get("evidence", [])), relations
    )


def load_corpus(path: str | Path) -> list[AnnotatedDocument]:
    """Read one JSON document record per line. Blank lines are rejected."""
    docs: list[AnnotatedDocument] = []
    seen_ids: set[str] = set()
    with _open_for_read(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                raise ParseError(path, lineno, "blank line")
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(path, lineno, f"invalid JSON: {exc.msg}") from exc
            try:
                ad = doc_from_record(rec)
            except ValidationError:
                raise
            except (KeyError, TypeError, ValueError) as exc:
                raise ParseError(path, lineno, f"malformed record: {exc!r}") from exc
            if ad.doc_id in seen_ids:
                raise ParseError(path, lineno, f"duplicate doc_id {ad.doc_id!r}")
            seen_ids.add(ad.doc_id)
            docs.append(ad)
    return docs


def write_corpus(docs: Iterable[AnnotatedDocument], path: str | Path) -> None:
    """Write documents as UTF-8 JSON lines with LF endings."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for ad in docs:
            fh.write(json.dumps(doc_to_record(ad), ensure_ascii=False))
            fh.write("\n")


def write_predictions(tuples: Iterable[RelationTuple], path: str | Path) -> None:
    """Write extracted relation tuples, one JSON object per line."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for r in tuples:
            rec = {
                "doc_id": r.doc_id,
                "i": r.intervention,
                "c": r.comparator,
                "o": r.outcome,
                "direction": r.direction.value,
                "evidence": r.evidence_sentence,
                "confidence": r.confidence,
            }
            fh.write(json.dumps(rec, ensure_ascii=False))
            fh.write("\n")


def load_predictions(path: str | Path) -> list[RelationTuple]:
    """Inverse of write_predictions."""
    out: list[RelationTuple] = []
    with _open_for_read(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                raise ParseError(path, lineno, "blank line")
            try:
                rec = json.loads(line)
                out.append(
                    RelationTuple(
                        rec["doc_id"],
                        rec["i"],
                        rec.get("c"),
                        rec["o"],
                        Direction(rec["direction"]),
                        int(rec["evidence"]),
                        float(rec.get("confidence", 1.0)),
                    )
                )
            except ValidationError:
                raise
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ParseError(path, lineno, f"malformed record: {exc!r}") from exc
    return out


@dataclass(frozen=True)
class CorpusStats:
    """Corpus-level annotation counts with per-document averages."""

    num_documents: int
    num_relations: int
    num_entities: int
    num_mentions: int

    @property
    def relations_per_document(self) -> float:
        return self.num_relations / self.num_documents

    @property
    def entities_per_document(self) -> float:
        return self.num_entities / self.num_documents

    @property
    def mentions_per_document(self) -> float:
        return self.num_mentions / self.num_documents


def corpus_stats(docs: Sequence[AnnotatedDocument]) -> CorpusStats:
    if not docs:
        raise ValidationError("<corpus>", "cannot compute statistics of an empty corpus")
    return CorpusStats(
        num_documents=len(docs),
        num_relations=sum(len(d.relations) for d in docs),
        num_entities=sum(len(d.entities) for d in docs),
        num_mentions=sum(len(d.mentions) for d in docs),
    )
