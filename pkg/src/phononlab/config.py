"""Run configuration: one JSON document, validated into the library's types."""
from __future__ import annotations

import dataclasses
import enum
import json
from dataclasses import dataclass, field

from .collision import GammaMode, GridSpec
from .evolution import PRESETS, SolverConfig
from .kernels import QuadratureConfig
from .spherical import PhysicalParams

__all__ = ["ConfigError", "ExperimentConfig", "RunConfig", "load_config"]


class ConfigError(ValueError):
    """Malformed or inconsistent configuration."""


@dataclass(frozen=True)
class ExperimentConfig:
    preset: str = "exp-decay"
    params: dict = field(default_factory=dict)
    initial_csv: str | None = None
    remove_c0: bool | None = None  # None: command default
    window: tuple = (10.0, 200.0)
    eps_list: tuple = (0.4, 0.2, 0.1, 0.05)
    eps_grid: GridSpec = GridSpec(panel_growth=1.25)
    refinement: tuple = (100, 200, 400)
    kernel_points: int = 40
    kernel_range: tuple = (1e-3, 50.0)
    tail_study: tuple = (30.0, 60.0, 120.0)
    L_max: int = 8
    workers: int = 1

    def __post_init__(self):
        if self.preset not in PRESETS:
            raise ConfigError(f"unknown preset {self.preset!r}; choose from {PRESETS}")
        if len(self.window) != 2 or not self.window[0] < self.window[1]:
            raise ConfigError("window must be (t_lo, t_hi) with t_lo < t_hi")
        if self.L_max < 0 or self.kernel_points < 2 or self.workers < 1:
            raise ConfigError("L_max >= 0, kernel_points >= 2 and workers >= 1 required")


def _to_jsonable(obj):
    if isinstance(obj, enum.Enum):
        return obj.value
    if dataclasses.is_dataclass(obj):
        return {f.name: _to_jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, (list, tuple)):
        return [_to_jsonable(v) for v in obj]
    if isinstance(obj, dict):
        return {k: _to_jsonable(v) for k, v in obj.items()}
    return obj


def _build(cls, data, name):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"{name} must be a JSON object")
    known = {f.name for f in dataclasses.fields(cls)}
    extra = set(data) - known
    if extra:
        raise ConfigError(f"unknown keys in {name}: {sorted(extra)}")
    try:
        return cls(**data)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {name}: {exc}") from exc


@dataclass(frozen=True)
class RunConfig:
    grid: GridSpec = GridSpec()
    quadrature: QuadratureConfig = QuadratureConfig()
    solver: SolverConfig = SolverConfig()
    gamma_mode: GammaMode = GammaMode.KERNEL_CONSISTENT
    physics: PhysicalParams = PhysicalParams()
    experiment: ExperimentConfig = ExperimentConfig()
    out: str = "out"
    seed: int = 0

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise ConfigError("configuration must be a JSON object")
        known = {f.name for f in dataclasses.fields(cls)}
        extra = set(data) - known
        if extra:
            raise ConfigError(f"unknown top-level keys: {sorted(extra)}")
        exp = dict(data.get("experiment") or {})
        if "eps_grid" in exp:
            exp["eps_grid"] = _build(GridSpec, exp["eps_grid"], "experiment.eps_grid")
        for key in ("window", "eps_list", "refinement", "kernel_range", "tail_study"):
            if key in exp:
                exp[key] = tuple(exp[key])
        try:
            mode = GammaMode(data.get("gamma_mode", GammaMode.KERNEL_CONSISTENT.value))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        seed = data.get("seed", 0)
        if not isinstance(seed, int) or seed < 0 or seed >= 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        return cls(
            grid=_build(GridSpec, data.get("grid"), "grid"),
            quadrature=_build(QuadratureConfig, data.get("quadrature"), "quadrature"),
            solver=_build(SolverConfig, data.get("solver"), "solver"),
            gamma_mode=mode,
            physics=_build(PhysicalParams, data.get("physics"), "physics"),
            experiment=_build(ExperimentConfig, exp, "experiment"),
            out=str(data.get("out", "out")),
            seed=seed,
        )

    def to_dict(self):
        return _to_jsonable(self)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def replace(self, **kw):
        return dataclasses.replace(self, **kw)


def load_config(path=None):
    if path is None:
        return RunConfig()
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
    return RunConfig.from_dict(data)
