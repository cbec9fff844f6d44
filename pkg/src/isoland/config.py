"""Run configuration: flat ``key = value`` text with ``#`` comments.

Floats are written with ``repr`` so a config survives a write/read cycle
unchanged.  Lists are comma separated.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field, fields
from pathlib import Path

__all__ = ["ConfigError", "RunConfig", "KEY_HELP", "load_config", "dump_config", "parse_config"]


class ConfigError(ValueError):
    """Invalid or unreadable configuration; the message names the offending key."""

    def __init__(self, key: str, message: str):
        super().__init__(f"config key '{key}': {message}")
        self.key = key


@dataclass
class RunConfig:
    dimension: int = 3
    gamma: float = -2.0
    alpha: float = 1.0
    scheme: str = "divergence"
    r_max: float = 12.0
    n_cells: int = 512
    grid_stretch: str = "uniform"
    dt: float = 1e-4
    t_end: float = 0.1
    monitor_every: int = 10
    snapshot_count: int = 64
    p_list: list = field(default_factory=lambda: [1.0, 2.0, 3.0])
    initial: str = "gaussian 1.0"
    mass: float = 1.0
    seed: int = 0
    output_dir: str = "out"
    tol_neg: float = 1e-10
    tol_mono: float = 1e-8
    # verify / eigen / moser settings
    suite_size: int = 100
    cube_count: int = 200
    eigen_sigmas: list = field(default_factory=lambda: [1.0, 0.3, 0.1, 0.03, 0.01])
    eigen_r_max: float = 1e16
    eigen_ratio: float = 1.04
    snapshot: str = ""
    trajectory: str = ""
    moser_p0: float = 2.0
    moser_R: float = 1.0
    moser_n_max: int = 8

    def validate(self) -> "RunConfig":
        if int(self.dimension) != self.dimension or self.dimension < 3:
            raise ConfigError("dimension", f"must be an integer >= 3, got {self.dimension}")
        if not -self.dimension <= self.gamma <= -2.0:
            raise ConfigError("gamma", f"must lie in [-d, -2], got {self.gamma}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError("alpha", f"must lie in [0, 1], got {self.alpha}")
        if self.scheme not in ("divergence", "nondivergence"):
            raise ConfigError("scheme", f"must be divergence or nondivergence, got {self.scheme!r}")
        if self.scheme == "divergence" and self.gamma == -self.dimension:
            raise ConfigError("scheme", "gamma = -d is only supported by the nondivergence scheme")
        if not self.r_max > 0:
            raise ConfigError("r_max", f"must be positive, got {self.r_max}")
        if self.n_cells < 16:
            raise ConfigError("n_cells", f"must be >= 16, got {self.n_cells}")
        if self.grid_stretch != "uniform":
            try:
                q = float(self.grid_stretch)
            except ValueError:
                raise ConfigError("grid_stretch", f"must be 'uniform' or a ratio >= 1, "
                                  f"got {self.grid_stretch!r}") from None
            if not q >= 1.0:
                raise ConfigError("grid_stretch", f"ratio must be >= 1, got {q}")
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ConfigError("dt", f"must be positive, got {self.dt}")
        if not self.t_end >= 0:
            raise ConfigError("t_end", f"must be non-negative, got {self.t_end}")
        if self.monitor_every < 1:
            raise ConfigError("monitor_every", f"must be >= 1, got {self.monitor_every}")
        if self.snapshot_count < 2:
            raise ConfigError("snapshot_count", f"must be >= 2, got {self.snapshot_count}")
        for p in self.p_list:
            if not (p >= 1):
                raise ConfigError("p_list", f"exponents must be >= 1, got {p}")
        if not self.mass >= 0:
            raise ConfigError("mass", f"must be non-negative, got {self.mass}")
        if self.seed < 0:
            raise ConfigError("seed", f"must be non-negative, got {self.seed}")
        parse_initial(self.initial)
        return self

    def stretch(self):
        return "uniform" if self.grid_stretch == "uniform" else float(self.grid_stretch)

    def replace(self, **kw) -> "RunConfig":
        return dataclasses.replace(self, **kw)


KEY_HELP = {
    "dimension": "space dimension d (>= 3)",
    "gamma": "interaction exponent in [-d, -2]",
    "alpha": "reaction multiplier in [0, 1]",
    "scheme": "divergence | nondivergence",
    "r_max": "outer radius (Dirichlet boundary)",
    "n_cells": "number of radial cells",
    "grid_stretch": "'uniform' or geometric cell ratio",
    "dt": "time step",
    "t_end": "final time",
    "monitor_every": "steps between monitor records",
    "snapshot_count": "number of stored snapshots",
    "p_list": "comma separated L^p exponents to monitor",
    "initial": "'gaussian SIGMA' | 'bump R' | 'two_bumps' | 'zero' | 'file PATH'",
    "mass": "initial mass",
    "seed": "RNG seed for randomized suites",
    "output_dir": "output directory (overridden by --out)",
    "tol_neg": "relative tolerance for clamping negative density",
    "tol_mono": "relative per-step tolerance for L^p monotonicity",
    "suite_size": "random test functions per density in verify",
    "cube_count": "random cubes in the cube-average suite",
    "eigen_sigmas": "comma separated Gaussian widths for the eigenvalue ladder",
    "eigen_r_max": "outer radius of the eigenvalue grid",
    "eigen_ratio": "geometric cell ratio of the eigenvalue grid",
    "snapshot": "snapshot .json header used as density by verify",
    "trajectory": "simulate output directory used by moser",
    "moser_p0": "initial exponent of the Moser cascade",
    "moser_R": "radius R of the Moser cascade",
    "moser_n_max": "number of cascade levels (<= 8)",
}


def parse_initial(spec: str):
    """Split an initial-data spec into (kind, argument)."""
    parts = spec.split(None, 1)
    if not parts:
        raise ConfigError("initial", "empty initial-data spec")
    kind = parts[0]
    arg = parts[1].strip() if len(parts) > 1 else ""
    if kind in ("gaussian", "bump"):
        try:
            val = float(arg) if arg else 1.0
        except ValueError:
            raise ConfigError("initial", f"bad width {arg!r}") from None
        if not val > 0:
            raise ConfigError("initial", f"width must be positive, got {val}")
        return kind, val
    if kind in ("two_bumps", "zero"):
        return kind, None
    if kind == "file":
        if not arg:
            raise ConfigError("initial", "file spec needs a path")
        return kind, arg
    raise ConfigError("initial", f"unknown initial-data kind {kind!r}")


def _convert(name, typ, text):
    text = text.strip()
    try:
        if typ is int or typ == "int":
            return int(text)
        if typ is float or typ == "float":
            return float(text)
        if typ is list or typ == "list":
            return [float(t) for t in text.split(",") if t.strip()]
        return text
    except ValueError:
        raise ConfigError(name, f"cannot parse {text!r}") from None


def parse_config(text: str) -> RunConfig:
    types = {f.name: f.type for f in fields(RunConfig)}
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", f"expected key = value, got {raw!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in types:
            raise ConfigError(key, "unknown key")
        values[key] = _convert(key, types[key], val)
    return RunConfig(**values).validate()


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("--config", f"cannot read {path}: {exc}") from None
    return parse_config(text)


def dump_config(cfg: RunConfig) -> str:
    lines = []
    for f in fields(RunConfig):
        v = getattr(cfg, f.name)
        if isinstance(v, list):
            s = ", ".join(repr(float(x)) for x in v)
        elif isinstance(v, float):
            s = repr(v)
        else:
            s = str(v)
        lines.append(f"{f.name} = {s}")
    return "\n".join(lines) + "\n"
