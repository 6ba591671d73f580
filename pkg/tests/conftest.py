"""Shared fixtures: a hashed encoder and a small trained workspace.

The workspace is built once per session through the CLI itself, so every
test that uses it also exercises the train subcommands.
"""

from __future__ import annotations

from pathlib import Path

import pytest
import yaml

from clintrex.cli import main
from clintrex.corpus import (
    AnnotatedDocument,
    Direction,
    Entity,
    EType,
    Mention,
    RelationTuple,
    document_from_sentences,
)
from clintrex.encoders import HashedEncoder


@pytest.fixture(scope="session")
def hashed() -> HashedEncoder:
    return HashedEncoder()


def build_annotated(
    doc_id: str,
    sentences,
    mention_spans=(),
    entity_groups=(),
    evidence=(),
    relations=(),
) -> AnnotatedDocument:
    """Compact AnnotatedDocument builder for fixtures.

    mention_spans: [(token_start, token_end, EType)], ids m0, m1, ...
    entity_groups: [(entity_id, [mention indices])], type from first member
    relations: [(i_eid, c_eid or None, o_eid, Direction, sentence_index)]
    """
    doc = document_from_sentences(doc_id, sentences)
    mentions = tuple(
        Mention(f"m{k}", doc_id, s, e, t)
        for k, (s, e, t) in enumerate(mention_spans)
    )
    entities = tuple(
        Entity(
            eid,
            doc_id,
            mentions[members[0]].etype,
            frozenset(f"m{k}" for k in members),
        )
        for eid, members in entity_groups
    )
    rels = tuple(
        RelationTuple(doc_id, i, c, o, d, s) for (i, c, o, d, s) in relations
    )
    return AnnotatedDocument(doc, mentions, entities, tuple(evidence), rels)


@pytest.fixture(scope="session")
def workspace(tmp_path_factory) -> dict:
    """Synthetic corpus plus all four trained checkpoints and a config."""
    root = tmp_path_factory.mktemp("workspace")
    data = root / "data"
    models = root / "models"
    assert main(
        ["synth", "--out", str(data), "--train", "60", "--dev", "12",
         "--test", "20", "--seed", "5"]
    ) == 0
    assert main(
        ["train", "tagger", "--train", str(data / "train.jsonl"),
         "--dev", str(data / "dev.jsonl"), "--out", str(models / "tagger.npz")]
    ) == 0
    for model in ("evidence", "linker", "inference"):
        assert main(
            ["train", model, "--samples", str(data / "train.samples.jsonl"),
             "--dev-samples", str(data / "dev.samples.jsonl"),
             "--out", str(models / f"{model}.npz")]
        ) == 0
    config = root / "config.yaml"
    config.write_text(
        yaml.safe_dump(
            {
                "seed": 5,
                "checkpoints": {
                    name: str(models / f"{name}.npz")
                    for name in ("tagger", "evidence", "linker", "inference")
                },
            }
        ),
        encoding="utf-8",
    )
    return {
        "root": root,
        "data": data,
        "models": models,
        "config": config,
        "train": data / "train.jsonl",
        "dev": data / "dev.jsonl",
        "test": data / "test.jsonl",
        "samples": data / "train.samples.jsonl",
        "dev_samples": data / "dev.samples.jsonl",
    }
