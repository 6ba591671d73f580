"""Single-file model checkpoints.

A checkpoint is one .npz archive holding the parameter arrays plus a JSON
header with a format version, the model kind, and an echo of the training
configuration (including the encoder settings needed to rebuild it).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InputError

FORMAT_VERSION = 1
_HEADER_KEY = "__header__"
_PARAM_PREFIX = "param::"


@dataclass(frozen=True)
class Checkpoint:
    kind: str
    config: dict
    arrays: dict[str, np.ndarray]


def save_checkpoint(
    path: str | Path, kind: str, config: dict, arrays: dict[str, np.ndarray]
) -> None:
    header = json.dumps(
        {"format": FORMAT_VERSION, "kind": kind, "config": config}, sort_keys=True
    )
    payload = {_HEADER_KEY: np.frombuffer(header.encode("utf-8"), dtype=np.uint8)}
    for name, value in arrays.items():
        payload[_PARAM_PREFIX + name] = np.asarray(value, dtype=float)
    # np.savez appends .npz to bare paths; writing to a handle keeps the
    # exact path the caller asked for
    with open(path, "wb") as fh:
        np.savez(fh, **payload)


def load_checkpoint(path: str | Path, expected_kind: str | None = None) -> Checkpoint:
    try:
        with np.load(path) as npz:
            if _HEADER_KEY not in npz:
                raise InputError(f"{path}: not a model checkpoint (no header)")
            header = json.loads(bytes(npz[_HEADER_KEY]).decode("utf-8"))
            arrays = {
                name[len(_PARAM_PREFIX) :]: npz[name]
                for name in npz.files
                if name.startswith(_PARAM_PREFIX)
            }
    except FileNotFoundError:
        raise InputError(f"checkpoint not found: {path}") from None
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        raise InputError(f"{path}: cannot read checkpoint: {exc}") from exc
    fmt = header.get("format")
    if fmt != FORMAT_VERSION:
        raise InputError(
            f"{path}: unsupported checkpoint format {fmt!r} "
            f"(this build reads format {FORMAT_VERSION})"
        )
    kind = header.get("kind")
    if expected_kind is not None and kind != expected_kind:
        raise InputError(f"{path}: expected a {expected_kind} checkpoint, found {kind!r}")
    return Checkpoint(kind=kind, config=header.get("config", {}), arrays=arrays)
