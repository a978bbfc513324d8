"""Run configuration loaded from .yml/.yaml/.json files."""

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, Optional, Union, get_type_hints

import yaml

from .corrector import BackgroundPair, PathNormParams
from .errors import ConfigError
from .ladder import MODES, LadderParams

CONFIG_SUFFIXES = (".yml", ".yaml", ".json")


@dataclass
class LadderSection:
    A: float = 2.0
    b: float = 2.0
    gamma: float = 0.5
    K: int = 1
    delta0: Optional[float] = None
    field_delta0: Optional[float] = None


@dataclass
class GeometrySection:
    c: Optional[float] = None
    samples: int = 1000


@dataclass
class CorrectorSection:
    grid: int = 32
    alpha: float = 0.05
    kappa: float = 0.02
    epsilon: float = 0.025
    tbar: float = 1.0
    t_min_ratio: float = 1e-6
    nodes_per_octave: int = 4
    delta: Optional[float] = None
    n0: int = 1
    amplitude: float = 0.2
    wavenumber: int = 1
    calibrate: bool = True


@dataclass
class ProbesSection:
    """Which optional probes a run evaluates."""

    volumes: bool = True
    volume_samples: int = 200_000
    cube: bool = True
    rates: bool = True
    rate_A: float = 1e5
    rate_b: float = 131072.0
    rate_levels: int = 6
    critical_norms: bool = True
    lp: bool = True
    commutator: bool = True
    corrector: bool = False
    plots: bool = True


SECTIONS = {
    "ladder": LadderSection,
    "geometry": GeometrySection,
    "corrector": CorrectorSection,
    "probes": ProbesSection,
}


def _coerce_floats(cls, name: str, data: Dict[str, Any]) -> Dict[str, Any]:
    """YAML reads 1e5 as a string; accept it for float fields."""
    hints = get_type_hints(cls)
    out = dict(data)
    for key, value in data.items():
        if isinstance(value, str) and hints[key] in (float, Optional[float]):
            try:
                out[key] = float(value)
            except ValueError as e:
                raise ConfigError(f"{name}.{key} must be a number, got {value!r}") from e
    return out


def _build_section(cls, name: str, data: Any):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"section '{name}' must be a mapping, got {type(data).__name__}")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown keys in section '{name}': {', '.join(unknown)}")
    return cls(**_coerce_floats(cls, name, data))


@dataclass
class RunConfig:
    """Resolved configuration of one run; CLI flags are applied with ``with_overrides``."""

    grid: int = 512
    mode: str = "field"
    seed: int = 0
    out: str = "icb_out"
    t_star: float = 0.0
    levels: Optional[int] = None
    ladder: LadderSection = field(default_factory=LadderSection)
    geometry: GeometrySection = field(default_factory=GeometrySection)
    corrector: CorrectorSection = field(default_factory=CorrectorSection)
    probes: ProbesSection = field(default_factory=ProbesSection)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        for name, size in (("grid", self.grid), ("corrector.grid", self.corrector.grid)):
            if not isinstance(size, int) or size < 4 or size & (size - 1):
                raise ConfigError(f"{name} must be a power of two >= 4, got {size}")
        if self.levels is not None and not 0 <= self.levels <= self.ladder.K:
            raise ConfigError(f"levels must lie in [0, {self.ladder.K}], got {self.levels}")

    @classmethod
    def from_dict(cls, data: Optional[Dict[str, Any]]) -> "RunConfig":
        data = dict(data or {})
        top = {f.name for f in fields(cls)} - set(SECTIONS)
        unknown = sorted(set(data) - top - set(SECTIONS))
        if unknown:
            raise ConfigError(f"unknown configuration keys: {', '.join(unknown)}")
        sections = {name: _build_section(section, name, data.pop(name, None)) for name, section in SECTIONS.items()}
        try:
            return cls(**data, **sections)
        except TypeError as e:
            raise ConfigError(str(e)) from e

    @classmethod
    def load(cls, path: Union[str, Path]) -> "RunConfig":
        path = Path(path)
        if path.suffix not in CONFIG_SUFFIXES:
            raise ConfigError(f"config must be one of {CONFIG_SUFFIXES}, got {path.name}")
        try:
            with open(path, "r", encoding="utf-8") as f:
                if path.suffix == ".json":
                    data = json.load(f)
                else:
                    data = yaml.safe_load(f)
        except (OSError, yaml.YAMLError, json.JSONDecodeError) as e:
            raise ConfigError(f"failed to load {path}: {e}") from e
        if data is not None and not isinstance(data, dict):
            raise ConfigError(f"{path} must hold a mapping of keys")
        logging.info(f"configuration loaded from {path}")
        return cls.from_dict(data)

    def with_overrides(self, **overrides) -> "RunConfig":
        """Copy with every non-None override applied; ``levels`` above K raises the ladder K."""
        changes = {key: value for key, value in overrides.items() if value is not None}
        levels = changes.get("levels")
        if levels is not None and levels > self.ladder.K:
            changes["ladder"] = replace(self.ladder, K=levels)
        return replace(self, **changes) if changes else self

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def content_hash(self) -> str:
        """SHA-256 of the canonical JSON form, output directory excluded."""
        data = self.to_dict()
        data.pop("out")
        content = json.dumps(data, sort_keys=True)
        return hashlib.sha256(content.encode()).hexdigest()[:12]

    @property
    def top_level(self) -> int:
        return self.ladder.K if self.levels is None else self.levels

    def ladder_params(self) -> LadderParams:
        section = self.ladder
        try:
            return LadderParams(
                A=section.A,
                b=section.b,
                gamma=section.gamma,
                K=section.K,
                delta0=section.delta0,
                field_delta0=section.field_delta0,
                mode=self.mode,
            )
        except ValueError as e:
            raise ConfigError(f"ladder: {e}") from e

    def rate_params(self) -> LadderParams:
        probes = self.probes
        return LadderParams(A=probes.rate_A, b=probes.rate_b, gamma=self.ladder.gamma, K=probes.rate_levels, mode="asymptotic")

    def path_params(self) -> PathNormParams:
        section = self.corrector
        try:
            return PathNormParams(
                alpha=section.alpha,
                kappa=section.kappa,
                epsilon=section.epsilon,
                tbar=section.tbar,
                t_min_ratio=section.t_min_ratio,
                nodes_per_octave=section.nodes_per_octave,
            )
        except ValueError as e:
            raise ConfigError(f"corrector: {e}") from e

    def background(self) -> BackgroundPair:
        section = self.corrector
        if section.n0 < 1 or section.wavenumber % section.n0:
            raise ConfigError(f"corrector: wavenumber {section.wavenumber} is not a multiple of n0 {section.n0}")
        return BackgroundPair(amplitude=section.amplitude, wavenumber=section.wavenumber, n0=section.n0)

    def manifest(self) -> str:
        """Defaults-style YAML listing of the resolved configuration."""
        return yaml.safe_dump(self.to_dict(), sort_keys=False)
