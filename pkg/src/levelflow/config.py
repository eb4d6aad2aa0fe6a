"""Job configuration: defaults, job files, and command-line overrides."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace
from pathlib import Path

from .expression import parse_expression
from .field import Window

DEFAULT_WINDOW = (-1.0, 1.0, -1.0, 1.0)
DEFAULT_GRID = (128, 128)
SEED_ENV = "LEVELFLOW_SEED"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Tolerances:
    """``None`` means derive from the field (see :func:`levelflow.pipeline.resolve_tolerances`)."""

    trace: float | None = None
    grad: float | None = None
    seam: float | None = None
    verify: float = 1e-2


@dataclass(frozen=True)
class Outputs:
    report: bool = True
    chart: bool = True
    svg: bool = True


@dataclass(frozen=True)
class JobConfig:
    expr: str
    window: Window = field(default_factory=lambda: Window(*DEFAULT_WINDOW, *DEFAULT_GRID))
    levels: int = 64
    strips: int = 8
    tolerances: Tolerances = field(default_factory=Tolerances)
    outputs: Outputs = field(default_factory=Outputs)
    seed: int = 0

    def __post_init__(self):
        if self.levels < 2 or self.strips < 1:
            raise ConfigError("levels must be >= 2 and strips >= 1")
        t = self.tolerances
        for name in ("trace", "grad", "seam", "verify"):
            v = getattr(t, name)
            if v is not None and not v > 0:
                raise ConfigError(f"tolerance {name} must be positive")
        parse_expression(self.expr)


def seed_from_env(default: int = 0) -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw == "":
        return default
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


def load_job(path) -> dict:
    """Read a JSON job file into a flat dict of settings."""
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read job file {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("job file must hold a JSON object")
    flat = {}
    for key in ("expr", "window", "grid", "levels", "strips", "seed"):
        if key in data:
            flat[key] = data[key]
    for key, val in (data.get("tolerances") or {}).items():
        flat[f"tol_{key}"] = val
    for key, val in (data.get("outputs") or {}).items():
        flat[f"out_{key}"] = val
    return flat


def build_config(settings: dict) -> JobConfig:
    """Assemble a :class:`JobConfig` from merged settings; missing keys get defaults."""
    if not settings.get("expr"):
        raise ConfigError("no expression given (use --expr or a job file)")
    win = settings.get("window") or DEFAULT_WINDOW
    grid = settings.get("grid") or DEFAULT_GRID
    if len(win) != 4 or len(grid) != 2:
        raise ConfigError("window needs 4 numbers and grid needs 2")
    try:
        window = Window(*(float(v) for v in win), int(grid[0]), int(grid[1]))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    tol = Tolerances()
    for name in ("trace", "grad", "seam", "verify"):
        v = settings.get(f"tol_{name}")
        if v is not None:
            tol = replace(tol, **{name: float(v)})
    out = Outputs()
    for name in ("report", "chart", "svg"):
        v = settings.get(f"out_{name}")
        if v is not None:
            out = replace(out, **{name: bool(v)})
    return JobConfig(
        expr=settings["expr"],
        window=window,
        levels=int(settings.get("levels") or 64),
        strips=int(settings.get("strips") or 8),
        tolerances=tol,
        outputs=out,
        seed=int(settings["seed"]) if settings.get("seed") is not None else seed_from_env(),
    )
