"""Pipeline configuration loaded from a single JSON document."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from gbdtkg.errors import ConfigError


@dataclass
class DataConfig:
    records_path: Optional[str] = None  # None -> synthetic data
    n_per_class: int = 131
    separation: float = 1.5
    n_test_per_class: int = 10


@dataclass
class TripleConfig:
    n_similar: int = 3000
    n_nonsimilar: int = 3000
    train_fraction: float = 0.7
    entity_disjoint: bool = False


@dataclass
class GbdtConfig:
    n_trees: int = 30
    max_depth: int = 3
    shrinkage: float = 0.1
    min_samples_leaf: int = 2


@dataclass
class KgConfig:
    learning_rate: float = 0.001
    epochs: int = 200
    batch_size: int = 64
    norm: int = 1
    margin: float = 0.0


@dataclass
class BaselineConfig:
    learning_rate: float = 0.1
    epochs: int = 500
    hidden: int = 16
    slope: float = 0.01


@dataclass
class FewshotConfig:
    dim: int = 32
    hidden: Optional[list] = None
    slope: float = 0.01
    beta: float = 1.0
    gamma: float = 1.0
    learning_rate: float = 0.001
    epochs: int = 100
    support_size: int = 5
    n_similar: int = 200
    n_nonsimilar: int = 200


@dataclass
class TfrConfig:
    threshold: float = 0.5


@dataclass
class PipelineConfig:
    seed: int = 7
    output_dir: str = "out"
    data: DataConfig = field(default_factory=DataConfig)
    triples: TripleConfig = field(default_factory=TripleConfig)
    gbdt: GbdtConfig = field(default_factory=GbdtConfig)
    kg: KgConfig = field(default_factory=KgConfig)
    baselines: BaselineConfig = field(default_factory=BaselineConfig)
    fewshot: FewshotConfig = field(default_factory=FewshotConfig)
    tfr: TfrConfig = field(default_factory=TfrConfig)

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    def validate(self) -> "PipelineConfig":
        d, t, g, k, b, f = self.data, self.triples, self.gbdt, self.kg, self.baselines, self.fewshot
        checks = [
            (d.n_per_class >= 1, "data.n_per_class must be >= 1"),
            (d.separation >= 0, "data.separation must be >= 0"),
            (d.n_test_per_class >= 0, "data.n_test_per_class must be >= 0"),
            (t.n_similar >= 1 and t.n_nonsimilar >= 1, "triple counts must be positive"),
            (0 < t.train_fraction < 1, "triples.train_fraction must lie in (0, 1)"),
            (g.n_trees >= 1, "gbdt.n_trees must be >= 1"),
            (g.max_depth >= 0, "gbdt.max_depth must be >= 0"),
            (0 < g.shrinkage <= 1, "gbdt.shrinkage must lie in (0, 1]"),
            (g.min_samples_leaf >= 1, "gbdt.min_samples_leaf must be >= 1"),
            (k.learning_rate > 0, "kg.learning_rate must be > 0"),
            (k.epochs >= 1 and k.batch_size >= 1, "kg.epochs and kg.batch_size must be >= 1"),
            (k.norm in (1, 2), "kg.norm must be 1 or 2"),
            (k.margin >= 0, "kg.margin must be >= 0"),
            (b.learning_rate > 0 and b.epochs >= 1 and b.hidden >= 1, "baselines settings must be positive"),
            (f.dim >= 1 and f.epochs >= 1 and f.learning_rate > 0, "fewshot dim/epochs/learning_rate must be positive"),
            (f.beta >= 0 and f.gamma >= 0, "fewshot beta and gamma must be >= 0"),
            (f.support_size >= 1, "fewshot.support_size must be >= 1"),
            (
                f.hidden is None
                or (isinstance(f.hidden, list) and all(isinstance(h, int) and h >= 1 for h in f.hidden)),
                "fewshot.hidden must be null or a list of positive integers",
            ),
            (f.n_similar >= 1 and f.n_nonsimilar >= 1, "fewshot triple counts must be positive"),
            (0 <= self.tfr.threshold <= 1, "tfr.threshold must lie in [0, 1]"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)
        return self


def _build(cls, doc, where: str):
    if not isinstance(doc, dict):
        raise ConfigError(f"{where or 'config'} must be a JSON object")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(doc) - set(fields))
    if unknown:
        raise ConfigError(f"unknown key(s) in {where or 'config'}: {', '.join(unknown)}")
    kwargs = {}
    for name, value in doc.items():
        f = fields[name]
        default = f.default_factory() if f.default_factory is not dataclasses.MISSING else f.default
        if dataclasses.is_dataclass(default):
            kwargs[name] = _build(type(default), value, f"{where}.{name}".lstrip("."))
        else:
            kwargs[name] = _coerce(value, default, f"{where}.{name}".lstrip("."))
    return cls(**kwargs)


def _coerce(value, default, where):
    if default is None or value is None:
        return value
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{where} must be true or false")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where} must be an integer")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where} must be a number")
        return float(value)
    if isinstance(default, str) and not isinstance(value, str):
        raise ConfigError(f"{where} must be a string")
    return value


def config_from_dict(doc: dict) -> PipelineConfig:
    return _build(PipelineConfig, doc, "").validate()


def load_config(path: str | Path | None) -> PipelineConfig:
    if path is None:
        return PipelineConfig().validate()
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    return config_from_dict(doc)
