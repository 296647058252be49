"""Experiment configuration read from TOML.

Every section maps onto a dataclass; keys that are not fields of the
dataclass are rejected so that typos fail loudly.
"""

from __future__ import annotations

import dataclasses
import sys
from dataclasses import dataclass, field as dc_field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

EXPERIMENTS = ("cn_table", "ponce_sweep", "gconv", "vitali_check", "simple_check", "measurable_check")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DomainSection:
    lower: tuple[float, ...] = (0.0,)
    upper: tuple[float, ...] = (1.0,)


@dataclass(frozen=True)
class GridSection:
    # minimum node count per axis, or a fixed number of spacings per horizon
    n: tuple[int, ...] = (400,)
    horizon_nodes: int | None = None


@dataclass(frozen=True)
class KernelSection:
    family: str = "constant"
    p: float = 2.0
    normalization: str = "cn"
    rule: str = "node_midpoint"


@dataclass(frozen=True)
class CoefficientSection:
    spec: str = "const:1"
    mollify: float | None = None


@dataclass(frozen=True)
class LoadSection:
    f: str = "one"


@dataclass(frozen=True)
class FieldSection:
    u: str = "x"


@dataclass(frozen=True)
class SweepSection:
    deltas: tuple[float, ...] = (0.2, 0.1, 0.05)
    tol_ineq: float | None = None
    min_order: float | None = None
    max_order: float | None = None
    max_error: float | None = None
    instances: int = 20
    seed: int = 0
    # vitali_check and cn_table inputs
    k: tuple[int, ...] = (5, 10, 20)
    f_specs: tuple[str, ...] = ("const:1", "affine:0,1", "quadratic:0,0,1")
    xi: tuple[str, ...] = ("one", "sin", "indicator")
    residual_tol: float = 1e-3
    dims: tuple[int, ...] = (1, 2, 3)
    p_values: tuple[float, ...] = (1.5, 2.0, 3.0)


@dataclass(frozen=True)
class OutputSection:
    dir: str | None = None
    stem: str | None = None
    formats: tuple[str, ...] = ("csv", "json")
    plot: bool = True


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    name: str = "experiment"
    domain: DomainSection = dc_field(default_factory=DomainSection)
    grid: GridSection = dc_field(default_factory=GridSection)
    kernel: KernelSection = dc_field(default_factory=KernelSection)
    coefficient: CoefficientSection = dc_field(default_factory=CoefficientSection)
    load: LoadSection = dc_field(default_factory=LoadSection)
    field: FieldSection = dc_field(default_factory=FieldSection)
    sweep: SweepSection = dc_field(default_factory=SweepSection)
    output: OutputSection = dc_field(default_factory=OutputSection)

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; choose from {', '.join(EXPERIMENTS)}")
        deltas = self.sweep.deltas
        if any(d <= 0 for d in deltas):
            raise ConfigError("deltas must be positive")
        if any(b >= a for a, b in zip(deltas, deltas[1:])):
            raise ConfigError("deltas must be strictly decreasing")
        if len(self.domain.lower) != len(self.domain.upper):
            raise ConfigError("domain lower and upper differ in length")
        if not set(self.output.formats) <= {"csv", "json"}:
            raise ConfigError("output formats must be csv and/or json")

    def replace(self, **sections) -> "ExperimentConfig":
        """Copy with some fields of some sections replaced.

        ``cfg.replace(kernel={"p": 3.0}, experiment="gconv")``
        """
        changes = {}
        for key, value in sections.items():
            current = getattr(self, key)
            changes[key] = dataclasses.replace(current, **value) if dataclasses.is_dataclass(current) else value
        return dataclasses.replace(self, **changes)


_SECTIONS = {f.name: f.type for f in dataclasses.fields(ExperimentConfig)}
_SECTION_TYPES = {
    "domain": DomainSection, "grid": GridSection, "kernel": KernelSection,
    "coefficient": CoefficientSection, "load": LoadSection, "field": FieldSection,
    "sweep": SweepSection, "output": OutputSection,
}


def _coerce(value):
    return tuple(value) if isinstance(value, list) else value


def _section(cls, table: dict, name: str):
    if not isinstance(table, dict):
        raise ConfigError(f"[{name}] must be a table")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(table) - known
    if unknown:
        raise ConfigError(f"unknown keys in [{name}]: {', '.join(sorted(unknown))}")
    values = {k: _coerce(v) for k, v in table.items()}
    if name == "grid" and isinstance(values.get("n"), int):
        values["n"] = (values["n"],)
    return cls(**values)


def from_dict(data: dict) -> ExperimentConfig:
    unknown = set(data) - set(_SECTIONS)
    if unknown:
        raise ConfigError(f"unknown top-level keys: {', '.join(sorted(unknown))}")
    if "experiment" not in data:
        raise ConfigError("missing top-level key 'experiment'")
    kwargs = {}
    for key, value in data.items():
        if key in _SECTION_TYPES:
            kwargs[key] = _section(_SECTION_TYPES[key], value, key)
        else:
            kwargs[key] = value
    try:
        return ExperimentConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        with path.open("rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return from_dict(data)
