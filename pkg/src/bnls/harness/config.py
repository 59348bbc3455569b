"""Run configuration: a YAML document mapped onto validated dataclasses."""

from __future__ import annotations

import dataclasses
import enum
import os
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from ..cutoffs import CutoffKind
from ..evolution import StepControl

OUTPUT_ROOT_ENV = "BNLS_OUTPUT_ROOT"


class ConfigError(ValueError):
    """Malformed configuration; the message starts with the offending field path."""


class InitialKind(str, enum.Enum):
    SCALED_GROUND_STATE = "scaled_ground_state"
    GAUSSIAN = "gaussian"
    FROM_FILE = "from_file"


@dataclass(frozen=True)
class ParamsSpec:
    d: int
    sigma: float
    mu: float = 0.0


@dataclass(frozen=True)
class GridSpec:
    rmax: float = 40.0
    n: int = 1024


@dataclass(frozen=True)
class InitialSpec:
    """Initial datum.

    scaled_ground_state uses `lam`; gaussian uses amplitude·e^{−r²/width²}·e^{i·chirp·r²};
    from_file reads a CSV with columns r and value (or r, real, imag).
    """

    kind: InitialKind = InitialKind.GAUSSIAN
    lam: float = 1.0
    amplitude: float = 1.0
    width: float = 1.0
    chirp: float = 0.0
    path: str = ""


@dataclass(frozen=True)
class CutoffSpec:
    R: float = 4.0
    kind: CutoffKind = CutoffKind.GENERIC


@dataclass(frozen=True)
class RunConfig:
    """Everything a single run depends on."""

    params: ParamsSpec
    grid: GridSpec = GridSpec()
    initial: InitialSpec = InitialSpec()
    cutoff: CutoffSpec = CutoffSpec()
    horizon: float = 1.0
    record_every: float = 0.05
    dt0: float = 1e-3
    output_dir: str = "runs"
    name: str = "run"
    kappa: float | None = None
    seed: int = 0
    fit_rate: bool = True
    control: StepControl = field(default_factory=StepControl)

    def output_root(self) -> Path:
        """Output directory, overridden by the BNLS_OUTPUT_ROOT environment variable."""
        return Path(os.environ.get(OUTPUT_ROOT_ENV, self.output_dir))


_SECTIONS = {
    "params": ParamsSpec,
    "grid": GridSpec,
    "initial": InitialSpec,
    "cutoff": CutoffSpec,
    "control": StepControl,
}


def _coerce(value, annotation: str, path: str):
    """Convert a YAML scalar to the annotated type, failing with the field path."""
    optional = annotation.endswith("| None")
    base = annotation.replace("| None", "").strip()
    if value is None:
        if optional:
            return None
        raise ConfigError(f"{path}: value required")
    try:
        if base == "int":
            if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
                raise TypeError
            return int(value)
        if base == "float":
            if isinstance(value, bool):
                raise TypeError
            return float(value)
        if base == "bool":
            if not isinstance(value, bool):
                raise TypeError
            return value
        if base == "str":
            if not isinstance(value, str):
                raise TypeError
            return value
        if base == "InitialKind":
            return InitialKind(value)
        if base == "CutoffKind":
            return CutoffKind(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{path}: cannot interpret {value!r} as {base}") from None
    raise ConfigError(f"{path}: unsupported field type {annotation}")


def _join(path: str, name: str) -> str:
    return f"{path}.{name}" if path else name


def _build(cls, data, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{path or '<root>'}: expected a mapping")
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"{_join(path, unknown[0])}: unknown field")
    kwargs = {}
    for name, f in known.items():
        sub = _join(path, name)
        if name not in data:
            if f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING:
                raise ConfigError(f"{sub}: missing required field")
            continue
        if name in _SECTIONS and cls is RunConfig:
            kwargs[name] = _build(_SECTIONS[name], data[name], sub)
        else:
            kwargs[name] = _coerce(data[name], f.type, sub)
    return cls(**kwargs)


def config_from_dict(data: dict) -> RunConfig:
    config = _build(RunConfig, data, "")
    _validate(config)
    return config


def _validate(config: RunConfig) -> None:
    checks = [
        (config.params.d >= 2, "params.d: must be >= 2"),
        (config.params.sigma > 0, "params.sigma: must be positive"),
        (config.grid.rmax > 0, "grid.rmax: must be positive"),
        (config.grid.n >= 16, "grid.n: must be >= 16"),
        (config.cutoff.R > 0, "cutoff.R: must be positive"),
        (config.horizon > 0, "horizon: must be positive"),
        (config.record_every > 0, "record_every: must be positive"),
        (config.dt0 > 0, "dt0: must be positive"),
        (config.initial.kind is not InitialKind.FROM_FILE or config.initial.path, "initial.path: required for from_file"),
    ]
    for ok, message in checks:
        if not ok:
            raise ConfigError(message)


def config_to_dict(config: RunConfig) -> dict:
    """Plain dict with every default written out explicitly."""

    def plain(obj):
        if dataclasses.is_dataclass(obj):
            return {f.name: plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
        if isinstance(obj, enum.Enum):
            return obj.value
        return obj

    return plain(config)


def load_config(path: str | Path) -> RunConfig:
    with open(path) as fh:
        data = yaml.safe_load(fh)
    return config_from_dict(data)


def load_configs(path: str | Path) -> list[RunConfig]:
    """A sweep file: a list of run mappings, or a mapping with a `runs` list."""
    with open(path) as fh:
        data = yaml.safe_load(fh)
    if isinstance(data, dict) and "runs" in data:
        data = data["runs"]
    if data is None:
        return []
    if not isinstance(data, list):
        raise ConfigError("runs: expected a list of run configurations")
    out = []
    for i, item in enumerate(data):
        try:
            out.append(config_from_dict(item))
        except ConfigError as exc:
            raise ConfigError(f"runs[{i}].{exc}") from None
    return out


def dump_config(config: RunConfig) -> str:
    return yaml.safe_dump(config_to_dict(config), sort_keys=True)
