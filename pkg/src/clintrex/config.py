"""Run configuration: YAML files validated into typed settings objects.

Every section and key is optional; omitted values take the defaults below.
Unknown keys are rejected so typos fail loudly instead of silently running
with defaults. ``clintrex.config.default_config()`` is the single source of
truth for defaults; docs/config.md documents the schema.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import yaml

from .errors import ConfigError
from .supervision import DEFAULT_THRESHOLD_GRID


@dataclass
class EncoderSettings:
    name: str = "hashed"
    dim: int = 64
    seed: int = 0
    model_path: str | None = None
    max_tokens: int | None = None
    trainable: bool = False


@dataclass
class TaggerSettings:
    hidden_size: int = 32
    learning_rate: float = 1e-3
    max_epochs: int = 18
    patience: int = 4


@dataclass
class EvidenceSettings:
    learning_rate: float = 5e-2
    max_epochs: int = 2000
    patience: int = 200
    l2: float = 1e-4
    threshold: float = 0.5


@dataclass
class LinkerSettings:
    learning_rate: float = 5e-2
    max_epochs: int = 2000
    patience: int = 200
    l2: float = 1e-4


@dataclass
class InferenceSettings:
    learning_rate: float = 5e-2
    max_epochs: int = 2000
    patience: int = 200
    l2: float = 1e-4
    use_comparator: bool = False


@dataclass
class GroupingSettings:
    threshold: float = 0.5
    grid: list[float] = field(default_factory=lambda: list(DEFAULT_THRESHOLD_GRID))


@dataclass
class SupervisionSettings:
    evidence_negatives_per_positive: int = 2
    link_negatives_per_positive: int = 3


@dataclass
class CheckpointPaths:
    tagger: str = "models/tagger.npz"
    evidence: str = "models/evidence.npz"
    linker: str = "models/linker.npz"
    inference: str = "models/inference.npz"


@dataclass
class RunConfig:
    seed: int = 0
    encoder: EncoderSettings = field(default_factory=EncoderSettings)
    tagger: TaggerSettings = field(default_factory=TaggerSettings)
    evidence: EvidenceSettings = field(default_factory=EvidenceSettings)
    linker: LinkerSettings = field(default_factory=LinkerSettings)
    inference: InferenceSettings = field(default_factory=InferenceSettings)
    grouping: GroupingSettings = field(default_factory=GroupingSettings)
    supervision: SupervisionSettings = field(default_factory=SupervisionSettings)
    checkpoints: CheckpointPaths = field(default_factory=CheckpointPaths)

    def to_dict(self) -> dict:
        return asdict(self)


_SECTIONS = {
    "encoder": EncoderSettings,
    "tagger": TaggerSettings,
    "evidence": EvidenceSettings,
    "linker": LinkerSettings,
    "inference": InferenceSettings,
    "grouping": GroupingSettings,
    "supervision": SupervisionSettings,
    "checkpoints": CheckpointPaths,
}


def _build_section(name: str, cls, data: dict):
    if not isinstance(data, dict):
        raise ConfigError(f"config section {name!r} must be a mapping")
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(
            f"unknown key(s) in config section {name!r}: {sorted(unknown)}"
        )
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigError(f"bad value in config section {name!r}: {exc}") from exc


def _validate(cfg: RunConfig) -> RunConfig:
    try:
        return _validate_values(cfg)
    except (TypeError, ValueError) as exc:
        # e.g. a YAML string where a number belongs
        raise ConfigError(f"bad config value: {exc}") from exc


def _validate_values(cfg: RunConfig) -> RunConfig:
    if cfg.encoder.name not in ("hashed", "pretrained"):
        raise ConfigError(f"encoder.name must be hashed or pretrained, got {cfg.encoder.name!r}")
    if cfg.encoder.name == "pretrained" and not cfg.encoder.model_path:
        raise ConfigError("encoder.name=pretrained requires encoder.model_path")
    if cfg.encoder.trainable:
        raise ConfigError(
            "encoder.trainable=true is not supported; encoders are frozen and "
            "only the downstream heads train"
        )
    if int(cfg.encoder.dim) < 2:
        raise ConfigError("encoder.dim must be at least 2")
    if not -1.0 <= float(cfg.grouping.threshold) <= 1.0:
        raise ConfigError("grouping.threshold must lie in [-1, 1]")
    for t in cfg.grouping.grid:
        if not -1.0 <= float(t) <= 1.0:
            raise ConfigError("grouping.grid values must lie in [-1, 1]")
    if not cfg.grouping.grid:
        raise ConfigError("grouping.grid must be non-empty")
    if not 0.0 <= float(cfg.evidence.threshold) <= 1.0:
        raise ConfigError("evidence.threshold must lie in [0, 1]")
    for section in ("tagger", "evidence", "linker", "inference"):
        s = getattr(cfg, section)
        if float(s.learning_rate) <= 0 or int(s.max_epochs) < 1 or int(s.patience) < 1:
            raise ConfigError(
                f"{section}: learning_rate must be positive and "
                "max_epochs/patience at least 1"
            )
    if cfg.supervision.link_negatives_per_positive < 0:
        raise ConfigError("supervision.link_negatives_per_positive must be >= 0")
    if cfg.supervision.evidence_negatives_per_positive < 0:
        raise ConfigError("supervision.evidence_negatives_per_positive must be >= 0")
    return cfg


def default_config() -> RunConfig:
    return _validate(RunConfig())


def load_config(path: str | Path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    unknown = set(data) - set(_SECTIONS) - {"seed"}
    if unknown:
        raise ConfigError(f"{path}: unknown top-level key(s): {sorted(unknown)}")
    kwargs = {}
    if "seed" in data:
        if not isinstance(data["seed"], int):
            raise ConfigError("seed must be an integer")
        kwargs["seed"] = data["seed"]
    for name, cls in _SECTIONS.items():
        if name in data:
            kwargs[name] = _build_section(name, cls, data[name])
    return _validate(RunConfig(**kwargs))


def write_config(cfg: RunConfig, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        yaml.safe_dump(cfg.to_dict(), fh, sort_keys=True)
