"""Run configuration: a nested YAML document mapped onto frozen dataclasses."""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import yaml

from .errors import ConfigError, GeometryError
from .mesh import Geometry


@dataclass(frozen=True)
class ZGridSpec:
    """Uniform frequency grid on ``(z_min, z_max]``.

    ``z_max`` defaults to ``z_max_factor * eta_n`` once the Bloch spectrum is
    known. ``values`` overrides everything with an explicit list.
    """

    n_points: int = 400
    z_min: float = 0.0
    z_max: float | None = None
    z_max_factor: float = 1.2
    values: tuple[float, ...] | None = None


@dataclass(frozen=True)
class Tolerances:
    delta_pole: float | None = None  # None: 1e-3 * eta_1
    tol_gap: float = 1e-10
    rtol: float = 1e-9
    mean_rel: float = 1e-8


@dataclass(frozen=True)
class SteklovSpec:
    chi_norms: tuple[float, ...] = (0.02, 0.04, 0.08, 0.16)
    directions: tuple[tuple[float, float], ...] = ((1.0, 0.0), (0.0, 1.0), (1.0, 1.0), (1.0, -1.0))
    k: int = 4
    refine: int | None = None  # None: same level as everything else


@dataclass(frozen=True)
class RunConfig:
    geometry: Geometry = field(default_factory=Geometry)
    lame: tuple[float, float] = (1.0, 0.1)
    n_modes: int = 11
    epsilons: tuple[float, ...] = (1e-3, 1e-4, 1e-5)
    z_grid: ZGridSpec = field(default_factory=ZGridSpec)
    n_directions: int = 64
    refine: int = 2
    element_order: int = 2
    tolerances: Tolerances = field(default_factory=Tolerances)
    steklov: SteklovSpec = field(default_factory=SteklovSpec)
    seed: int = 0
    output_dir: str = "out"
    cache_dir: str | None = None

    def __post_init__(self):
        t = self.tolerances
        for name in ("tol_gap", "rtol", "mean_rel"):
            if not getattr(t, name) > 0:
                raise ConfigError(f"tolerances.{name} must be positive")
        if t.delta_pole is not None and not t.delta_pole > 0:
            raise ConfigError("tolerances.delta_pole must be positive")
        if not self.epsilons or any(not e > 0 for e in self.epsilons):
            raise ConfigError("epsilons must be a non-empty list of positive numbers")
        if self.n_modes < 1:
            raise ConfigError("n_modes must be at least 1")
        if self.element_order not in (1, 2):
            raise ConfigError("element_order must be 1 or 2")
        if self.refine < 0:
            raise ConfigError("refine must be non-negative")
        if self.n_directions < 1:
            raise ConfigError("n_directions must be at least 1")
        if self.z_grid.values is None and self.z_grid.n_points < 2:
            raise ConfigError("z_grid.n_points must be at least 2")
        if len(self.lame) != 2:
            raise ConfigError("lame must be a pair (lambda, mu)")
        if any(not c > 0 for c in self.steklov.chi_norms) or any(c > 0.3 for c in self.steklov.chi_norms):
            raise ConfigError("steklov.chi_norms must lie in (0, 0.3]")

    # -- serialisation -------------------------------------------------
    def to_dict(self) -> dict:
        d = asdict(self)
        d["geometry"] = self.geometry.to_dict()
        return _plain(d)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        if not isinstance(d, dict):
            raise ConfigError("configuration must be a mapping")
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
        kw = dict(d)
        try:
            if "geometry" in kw:
                kw["geometry"] = Geometry.from_dict(kw["geometry"])
            if "lame" in kw:
                kw["lame"] = _lame(kw["lame"])
            if "epsilons" in kw:
                kw["epsilons"] = tuple(float(e) for e in kw["epsilons"])
            if "z_grid" in kw:
                z = dict(kw["z_grid"])
                if z.get("values") is not None:
                    z["values"] = tuple(float(v) for v in z["values"])
                kw["z_grid"] = ZGridSpec(**z)
            if "tolerances" in kw:
                kw["tolerances"] = Tolerances(**{k: (None if v is None else float(v)) for k, v in kw["tolerances"].items()})
            if "steklov" in kw:
                s = dict(kw["steklov"])
                if "chi_norms" in s:
                    s["chi_norms"] = tuple(float(c) for c in s["chi_norms"])
                if "directions" in s:
                    s["directions"] = tuple(tuple(float(x) for x in t) for t in s["directions"])
                kw["steklov"] = SteklovSpec(**s)
        except GeometryError:
            raise
        except (TypeError, KeyError, ValueError) as exc:
            raise ConfigError(f"malformed configuration: {exc}") from exc
        return cls(**kw)

    def with_overrides(self, **kw) -> "RunConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        return replace(self, **kw) if kw else self

    # -- hashing -------------------------------------------------------
    def digest(self, *sections: str) -> str:
        """Hash of the chosen top-level sections (all physics sections by default)."""
        d = self.to_dict()
        d.pop("output_dir", None)
        d.pop("cache_dir", None)
        if sections:
            d = {k: d[k] for k in sections}
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _lame(v):
    if isinstance(v, dict):
        return (float(v["lambda"]), float(v["mu"]))
    return tuple(float(x) for x in v)


def _plain(x):
    if isinstance(x, dict):
        return {k: _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    return x


def load_config(path) -> RunConfig:
    """Parse a YAML configuration file; any problem becomes :class:`ConfigError`."""
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"configuration file {str(p)!r} not found")
    try:
        data = yaml.safe_load(p.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {str(p)!r}: {exc}") from exc
    return RunConfig.from_dict(data or {})


def dump_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)
