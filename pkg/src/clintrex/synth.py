"""Synthetic randomized-trial abstracts with complete gold annotations.

Documents follow the usual abstract arc (background, objective, methods,
optional endpoints sentence, findings, conclusion). Every planted entity
mention is annotated, so the corpus is internally consistent: a surface form
is never a mention in one sentence and plain text in another.

Hard cases are generated on purpose and tagged in the metadata:
- findings whose verb polarity must be inverted against the measured
  quantity ("nausea improved" means the quantity went down),
- multi-outcome findings joined by "or"/"but" inside one sentence,
- findings that name no intervention in the sentence ("similar between the
  two groups"), forcing document-level linking,
- a held-out vocabulary mode so test splits contain drugs and outcomes never
  seen in training.

Vocabularies are chosen so that, within a document, different entities never
share surface tokens while name variants of the same entity share most of
theirs; similarity-based grouping is therefore solvable but not trivial.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .corpus import (
    AnnotatedDocument,
    Direction,
    Entity,
    EType,
    Mention,
    RelationTuple,
    document_from_sentences,
)
from .supervision import Prompt, doc_rng

DRUGS = (
    "ibuprofen", "naproxen", "ketorolac", "celecoxib", "metformin", "insulin",
    "liraglutide", "atorvastatin", "simvastatin", "lisinopril", "amlodipine",
    "losartan", "metoprolol", "warfarin", "apixaban", "sertraline",
    "fluoxetine", "duloxetine", "gabapentin", "pregabalin", "ondansetron",
    "omeprazole", "pantoprazole", "amoxicillin", "azithromycin", "ceftriaxone",
    "doxycycline", "prednisone", "dexamethasone", "montelukast", "salbutamol",
    "erythromycin", "propofol", "ketamine", "melatonin", "zolpidem",
)

HELDOUT_DRUGS = (
    "tirzepatide", "empagliflozin", "rivaroxaban", "mirtazapine",
    "levofloxacin", "budesonide",
)

# (text, True if a larger measured quantity is good for the patient)
OUTCOMES = (
    ("sleep quality", True), ("quality of life", True), ("mobility", True),
    ("remission rate", True), ("treatment response", True),
    ("overall survival", True), ("appetite", True), ("grip strength", True),
    ("walking distance", True), ("bone density", True), ("wound healing", True),
    ("medication adherence", True),
    ("pain intensity", False), ("nausea", False), ("headache frequency", False),
    ("adverse events", False), ("mortality", False), ("anxiety symptoms", False),
    ("fatigue severity", False), ("infection rate", False),
    ("hospital stay", False), ("vomiting episodes", False),
    ("relapse rate", False), ("tumor size", False), ("seizure frequency", False),
    ("joint swelling", False), ("low birth weight", False),
    ("preterm delivery", False),
)

HELDOUT_OUTCOMES = (
    ("dizziness", False), ("tremor severity", False),
    ("recovery speed", True), ("stamina", True),
)

COMPARATORS = ("placebo", "usual care", "standard care")

CONDITIONS = (
    "chronic migraine", "type 2 diabetes", "postoperative pain",
    "rheumatoid arthritis", "major depression", "asthma", "hypertension",
    "chronic insomnia", "gastric ulcers", "community acquired pneumonia",
    "chronic heart failure", "atrial fibrillation",
)

VARIANT_PATTERNS = (
    "oral {d}", "intravenous {d}", "daily {d}", "low dose {d}",
    "high dose {d}", "topical {d}", "{d} therapy", "{d} tablets",
)

SIG_P = ("0.01", "0.02", "0.03", "0.004", "0.001")
NS_P = ("0.21", "0.34", "0.42", "0.57", "0.68", "0.73")

_INT = EType.INTERVENTION
_OUT = EType.OUTCOME


@dataclass
class SynthOptions:
    n_docs: int
    seed: int = 0
    heldout_fraction: float = 0.0
    doc_prefix: str = "synth"


def _choice(rng: np.random.Generator, items: Sequence, p=None):
    return items[int(rng.choice(len(items), p=p))]


def _compose(*parts):
    """Assemble tokens plus (key, type, lo, hi) mention offsets.

    Parts are strings (split on spaces), token lists, or mention markers
    produced by _m().
    """
    tokens: list[str] = []
    mentions: list[tuple[str, EType, int, int]] = []
    for part in parts:
        if isinstance(part, str):
            tokens.extend(part.split())
        elif isinstance(part, tuple) and part and part[0] == "M":
            _, key, etype, toks = part
            lo = len(tokens)
            tokens.extend(toks)
            mentions.append((key, etype, lo, len(tokens)))
        else:
            tokens.extend(part)
    return tokens, mentions


def _m(key: str, etype: EType, toks: Sequence[str]):
    return ("M", key, etype, tuple(toks))


def _cap(tokens: list[str]) -> list[str]:
    if tokens and tokens[0]:
        tokens[0] = tokens[0][0].upper() + tokens[0][1:]
    return tokens


class _Builder:
    """Accumulates sentences and annotation records for one document."""

    def __init__(self, doc_id: str):
        self.doc_id = doc_id
        self.sentences: list[list[str]] = []
        self.mentions: list[tuple[str, EType, int, int, int]] = []  # key,t,sent,lo,hi
        self.evidence: set[int] = set()
        self.relations: list[tuple[str, str | None, str, Direction, int]] = []
        self.tags: set[str] = set()

    def add(self, tokens: list[str], mentions, evidence: bool = False) -> int:
        idx = len(self.sentences)
        self.sentences.append(_cap(list(tokens)))
        for key, etype, lo, hi in mentions:
            self.mentions.append((key, etype, idx, lo, hi))
        if evidence:
            self.evidence.add(idx)
        return idx

    def relation(self, i: str, c: str | None, o: str, d: Direction, sent: int) -> None:
        self.relations.append((i, c, o, d, sent))

    def build(self) -> AnnotatedDocument:
        doc = document_from_sentences(self.doc_id, self.sentences)
        starts = [ts for ts, _ in doc.sentences]
        records = sorted(
            self.mentions, key=lambda r: (r[2], r[3], r[4])
        )
        mentions: list[Mention] = []
        by_key: dict[str, list[str]] = {}
        key_type: dict[str, EType] = {}
        for key, etype, sent, lo, hi in records:
            mid = f"m{len(mentions)}"
            mentions.append(
                Mention(mid, self.doc_id, starts[sent] + lo, starts[sent] + hi, etype)
            )
            by_key.setdefault(key, []).append(mid)
            key_type[key] = etype
        entity_ids: dict[str, str] = {}
        entities: list[Entity] = []
        for key in by_key:  # first-mention order, since dicts keep insertion order
            eid = f"e{len(entities)}"
            entity_ids[key] = eid
            entities.append(
                Entity(eid, self.doc_id, key_type[key], frozenset(by_key[key]))
            )
        relations = tuple(
            RelationTuple(
                self.doc_id,
                entity_ids[i],
                entity_ids[c] if c is not None else None,
                entity_ids[o],
                d,
                sent,
            )
            for i, c, o, d, sent in self.relations
        )
        return AnnotatedDocument(
            doc,
            tuple(mentions),
            tuple(entities),
            tuple(sorted(self.evidence)),
            relations,
        )


def _sample_outcomes(
    rng: np.random.Generator, count: int, heldout: bool
) -> list[tuple[tuple[str, ...], bool]]:
    """Up to ``count`` outcomes with pairwise disjoint token sets."""
    pool = list(OUTCOMES)
    if heldout:
        pool = list(HELDOUT_OUTCOMES) + pool
    order = rng.permutation(len(pool))
    chosen: list[tuple[tuple[str, ...], bool]] = []
    used: set[str] = set()
    for idx in order:
        text, desirable = pool[int(idx)]
        toks = tuple(text.split())
        if used & set(toks):
            continue
        chosen.append((toks, desirable))
        used |= set(toks)
        if len(chosen) == count:
            break
    return chosen


def _evidence_sentence(
    rng: np.random.Generator,
    builder: _Builder,
    template: str,
    i_key: str,
    i_tokens: tuple[str, ...],
    c_key: str,
    c_tokens: tuple[str, ...],
    outcomes: list[tuple[str, tuple[str, ...], bool]],
) -> None:
    """Append one findings sentence and its relation(s) to the builder."""
    sig = _choice(rng, SIG_P)
    ns = _choice(rng, NS_P)
    if template == "group_compare":
        cue = _choice(rng, ("higher", "greater", "lower", "smaller"))
        direction = Direction.INCREASED if cue in ("higher", "greater") else Direction.DECREASED
        o_key, o_toks, _ = outcomes[0]
        tokens, ments = _compose(
            "the mean", _m(o_key, _OUT, o_toks),
            f"was significantly {cue} in the", _m(i_key, _INT, i_tokens),
            "group than in the", _m(c_key, _INT, c_tokens),
            "group ( p =", [sig], ") .",
        )
        s = builder.add(tokens, ments, evidence=True)
        builder.relation(i_key, c_key, o_key, direction, s)
    elif template == "verb_effect":
        verb = _choice(rng, ("increased", "raised", "reduced", "decreased", "lowered"))
        direction = Direction.INCREASED if verb in ("increased", "raised") else Direction.DECREASED
        o_key, o_toks, _ = outcomes[0]
        tokens, ments = _compose(
            _m(i_key, _INT, i_tokens), f"significantly {verb}",
            _m(o_key, _OUT, o_toks), "compared with", _m(c_key, _INT, c_tokens),
            "( p =", [sig], ") .",
        )
        s = builder.add(tokens, ments, evidence=True)
        builder.relation(i_key, c_key, o_key, direction, s)
    elif template == "no_difference":
        o_key, o_toks, _ = outcomes[0]
        tokens, ments = _compose(
            "there was no significant difference in", _m(o_key, _OUT, o_toks),
            "between the", _m(i_key, _INT, i_tokens), "group and the",
            _m(c_key, _INT, c_tokens), "group ( p =", [ns], ") .",
        )
        s = builder.add(tokens, ments, evidence=True)
        builder.relation(i_key, c_key, o_key, Direction.NO_DIFFERENCE, s)
    elif template == "little_impact":
        (k1, t1, _), (k2, t2, _) = outcomes[0], outcomes[1]
        a, b = int(rng.integers(5, 15)), int(rng.integers(5, 15))
        c2, d2 = int(rng.integers(5, 20)), int(rng.integers(5, 20))
        tokens, ments = _compose(
            _m(i_key, _INT, i_tokens), "had little impact on reducing",
            _m(k1, _OUT, t1), "(", [str(a)], "% vs", [str(b)], "% , p =", [ns], ") or",
            _m(k2, _OUT, t2), "(", [str(c2)], "% vs", [str(d2)], "% , p =",
            [_choice(rng, NS_P)], ") .",
        )
        s = builder.add(tokens, ments, evidence=True)
        builder.relation(i_key, c_key, k1, Direction.NO_DIFFERENCE, s)
        builder.relation(i_key, c_key, k2, Direction.NO_DIFFERENCE, s)
        builder.tags.add("multi_outcome")
    elif template == "quality_verb":
        verb = _choice(rng, ("improved", "worsened"))
        o_key, o_toks, desirable = outcomes[0]
        if verb == "improved":
            direction = Direction.INCREASED if desirable else Direction.DECREASED
        else:
            direction = Direction.DECREASED if desirable else Direction.INCREASED
        if not desirable:
            builder.tags.add("inversion")
        tokens, ments = _compose(
            _m(o_key, _OUT, o_toks), f"{verb} significantly in the",
            _m(i_key, _INT, i_tokens), "group compared with the",
            _m(c_key, _INT, c_tokens), "group ( p =", [sig], ") .",
        )
        s = builder.add(tokens, ments, evidence=True)
        builder.relation(i_key, c_key, o_key, direction, s)
    elif template == "implicit_groups":
        o_key, o_toks, _ = outcomes[0]
        tokens, ments = _compose(
            "overall", _m(o_key, _OUT, o_toks),
            "was similar between the two groups ( p =", [ns], ") .",
        )
        s = builder.add(tokens, ments, evidence=True)
        builder.relation(i_key, c_key, o_key, Direction.NO_DIFFERENCE, s)
        builder.tags.add("implicit_groups")
    elif template == "mixed_pair":
        (k1, t1, _), (k2, t2, _) = outcomes[0], outcomes[1]
        first_reduces = bool(rng.integers(0, 2))
        v1, v2 = ("reduced", "increased") if first_reduces else ("increased", "reduced")
        d1 = Direction.DECREASED if first_reduces else Direction.INCREASED
        d2 = Direction.INCREASED if first_reduces else Direction.DECREASED
        tokens, ments = _compose(
            _m(i_key, _INT, i_tokens), f"treatment {v1}", _m(k1, _OUT, t1),
            f"but {v2}", _m(k2, _OUT, t2), "relative to",
            _m(c_key, _INT, c_tokens), "( p < 0.05 ) .",
        )
        s = builder.add(tokens, ments, evidence=True)
        builder.relation(i_key, c_key, k1, d1, s)
        builder.relation(i_key, c_key, k2, d2, s)
        builder.tags.add("multi_outcome")
    else:
        raise ValueError(f"unknown template {template!r}")


_TEMPLATES = (
    "group_compare", "verb_effect", "no_difference", "little_impact",
    "quality_verb", "implicit_groups", "mixed_pair",
)
_WEIGHTS = (0.26, 0.20, 0.16, 0.10, 0.16, 0.06, 0.06)


def _pick_template(rng, allow_double: bool, allow_implicit: bool) -> str:
    names = list(_TEMPLATES)
    weights = list(_WEIGHTS)
    if not allow_double:
        for t in ("little_impact", "mixed_pair"):
            weights[names.index(t)] = 0.0
    if not allow_implicit:
        weights[names.index("implicit_groups")] = 0.0
    w = np.array(weights)
    return _choice(rng, names, p=w / w.sum())


def generate_document(
    doc_id: str, seed: int, heldout: bool = False
) -> tuple[AnnotatedDocument, list[Prompt], list[str]]:
    """One abstract with gold annotations, its prompts, and its tags."""
    rng = doc_rng(seed, doc_id)
    builder = _Builder(doc_id)

    drug_pool = HELDOUT_DRUGS if heldout else DRUGS
    multi_arm = (not heldout) and rng.random() < 0.15
    n_arms = 2 if multi_arm else 1
    arm_idx = rng.choice(len(drug_pool), size=n_arms, replace=False)
    arms = [drug_pool[int(i)] for i in arm_idx]
    comparator = _choice(rng, COMPARATORS, p=(0.7, 0.15, 0.15))
    c_tokens = tuple(comparator.split())
    condition = _choice(rng, CONDITIONS)
    if heldout:
        builder.tags.add("heldout")
    if multi_arm:
        builder.tags.add("multi_arm")

    # one arm may introduce itself with a modified form; later mentions are bare
    variant: tuple[str, ...] | None = None
    if rng.random() < 0.5:
        pattern = _choice(rng, VARIANT_PATTERNS)
        variant = tuple(pattern.format(d=arms[0]).split())
    arm_keys = [f"I{k}" for k in range(n_arms)]
    arm_tokens = [(d,) for d in arms]
    i0_first = variant if variant is not None else arm_tokens[0]

    outcomes_pool = _sample_outcomes(rng, 5, heldout)
    outcome_keys: dict[int, str] = {}

    def take(n: int) -> list[tuple[str, tuple[str, ...], bool]]:
        got = []
        for _ in range(n):
            if not outcomes_pool:
                break
            toks, desirable = outcomes_pool.pop(0)
            idx = len(outcome_keys)
            key = f"O{idx}"
            outcome_keys[idx] = key
            got.append((key, toks, desirable))
        return got

    # background
    bg = _choice(
        rng,
        (
            f"management of {condition} remains a major clinical challenge .",
            f"{condition} affects a large share of adults worldwide .",
            f"current treatment options for {condition} are limited .",
        ),
    )
    builder.add(bg.split(), [])

    # objective
    if multi_arm:
        tokens, ments = _compose(
            "we compared", _m(arm_keys[0], _INT, i0_first), "and",
            _m(arm_keys[1], _INT, arm_tokens[1]), "with",
            _m("C", _INT, c_tokens), f"in patients with {condition} .",
        )
    elif rng.random() < 0.5:
        tokens, ments = _compose(
            "we investigated whether", _m(arm_keys[0], _INT, i0_first),
            f"improves outcomes in adults with {condition} .",
        )
    else:
        tokens, ments = _compose(
            "this randomized trial evaluated", _m(arm_keys[0], _INT, i0_first),
            f"in patients with {condition} .",
        )
    builder.add(tokens, ments)

    # methods
    n_participants = str(int(rng.integers(40, 400)))
    if multi_arm:
        tokens, ments = _compose(
            f"a total of {n_participants} adults with {condition} were randomly assigned to",
            _m(arm_keys[0], _INT, arm_tokens[0]), ",",
            _m(arm_keys[1], _INT, arm_tokens[1]), ", or", _m("C", _INT, c_tokens), ".",
        )
    else:
        tokens, ments = _compose(
            f"a total of {n_participants} adults with {condition} were randomly assigned to",
            _m(arm_keys[0], _INT, arm_tokens[0]), "or", _m("C", _INT, c_tokens), ".",
        )
    builder.add(tokens, ments)

    # findings, one or two sentences for the first arm, one for a second arm
    plans = [(arm_keys[0], arm_tokens[0], 1 + int(rng.random() < 0.45))]
    if multi_arm:
        plans.append((arm_keys[1], arm_tokens[1], 1))
    planned: list[tuple[str, tuple[str, ...], str, list]] = []
    for key, toks, n_sent in plans:
        for _ in range(n_sent):
            template = _pick_template(
                rng,
                allow_double=len(outcomes_pool) >= 2,
                allow_implicit=not multi_arm and comparator == "placebo",
            )
            need = 2 if template in ("little_impact", "mixed_pair") else 1
            outs = take(need)
            if len(outs) < need:
                break
            planned.append((key, toks, template, outs))

    # endpoints sentence, referencing outcomes the findings will use
    mentioned = [o for _, _, _, outs in planned for o in outs]
    if mentioned and rng.random() < 0.5:
        if len(mentioned) >= 2:
            tokens, ments = _compose(
                "the primary endpoints were", _m(mentioned[0][0], _OUT, mentioned[0][1]),
                "and", _m(mentioned[1][0], _OUT, mentioned[1][1]), ".",
            )
        else:
            tokens, ments = _compose(
                "the primary endpoint was", _m(mentioned[0][0], _OUT, mentioned[0][1]), ".",
            )
        builder.add(tokens, ments)

    for key, toks, template, outs in planned:
        _evidence_sentence(rng, builder, template, key, toks, "C", c_tokens, outs)

    # conclusion
    if rng.random() < 0.5:
        tokens, ments = _compose(
            "in conclusion ,", _m(arm_keys[0], _INT, arm_tokens[0]),
            "was well tolerated in this population .",
        )
    else:
        tokens, ments = _compose(
            "these findings support further evaluation of",
            _m(arm_keys[0], _INT, arm_tokens[0]), f"in {condition} .",
        )
    builder.add(tokens, ments)

    ad = builder.build()
    key_to_text = {arm_keys[k]: arms[k] for k in range(n_arms)}
    key_to_text["C"] = comparator
    prompts = []
    outcome_texts = {
        key: " ".join(toks)
        for _, _, _, outs in planned
        for key, toks, _ in outs
    }
    for i, c, o, d, sent in builder.relations:
        start, end = ad.document.sentence_char_span(sent)
        prompts.append(
            Prompt(
                doc_id,
                key_to_text[i],
                key_to_text[c] if c is not None else None,
                outcome_texts[o],
                d,
                start,
                end,
            )
        )
    return ad, prompts, sorted(builder.tags)


def generate_corpus(
    options: SynthOptions,
) -> tuple[list[AnnotatedDocument], list[Prompt], dict[str, dict]]:
    """Generate n_docs abstracts. Returns (documents, prompts, metadata)."""
    rng = np.random.default_rng(options.seed)
    docs: list[AnnotatedDocument] = []
    prompts: list[Prompt] = []
    meta: dict[str, dict] = {}
    for k in range(options.n_docs):
        doc_id = f"{options.doc_prefix}-{k:04d}"
        heldout = bool(rng.random() < options.heldout_fraction)
        ad, doc_prompts, tags = generate_document(doc_id, options.seed, heldout)
        docs.append(ad)
        prompts.extend(doc_prompts)
        meta[doc_id] = {"tags": tags, "relations": len(ad.relations)}
    return docs, prompts, meta


def make_worked_example(doc_id: str = "worked-example") -> AnnotatedDocument:
    """A fixed abstract exercising the multi-outcome no-difference pattern:
    an antibiotic vs placebo with two negative findings in one sentence."""
    builder = _Builder(doc_id)
    builder.add("antibiotic treatment in pregnancy remains under active investigation .".split(), [])
    tokens, ments = _compose(
        "we investigated whether", _m("I0", _INT, ("oral", "erythromycin")),
        "improves neonatal outcomes .",
    )
    builder.add(tokens, ments)
    tokens, ments = _compose(
        "a total of 4148 women were randomly assigned to",
        _m("I0", _INT, ("oral", "erythromycin")), "or", _m("C", _INT, ("placebo",)), ".",
    )
    builder.add(tokens, ments)
    tokens, ments = _compose(
        _m("I0", _INT, ("erythromycin",)), "had little impact on reducing",
        _m("O0", _OUT, ("low", "birth", "weight")),
        "( 8 % vs 11 % , p = 0.42 ) or",
        _m("O1", _OUT, ("preterm", "delivery")),
        "( 13 % vs 15 % , p = 0.51 ) .",
    )
    s = builder.add(tokens, ments, evidence=True)
    builder.relation("I0", "C", "O0", Direction.NO_DIFFERENCE, s)
    builder.relation("I0", "C", "O1", Direction.NO_DIFFERENCE, s)
    tokens, ments = _compose(
        "in conclusion ,", _m("I0", _INT, ("erythromycin",)),
        "was well tolerated in this population .",
    )
    builder.add(tokens, ments)
    return builder.build()
