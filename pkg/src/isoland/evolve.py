"""Time integration in radial coordinates.

Finite volumes on the cells of the nodal weights: V_i = w_i, interfaces at
the radii enclosing the cumulative volume.  With frozen coefficients the
divergence-form flux  a f' - f a'  is discretised as

    F_{i+1/2} = T_{i+1/2} (a_i f_{i+1} - a_{i+1} f_i),   T = area / spacing,

the centred form of  a^2 (f/a)'.  Its implicit Euler matrix is an M-matrix
for any dt, so the update is positivity preserving and conserves
sum_i V_i f_i up to the outflow through r_max, where f = 0.

The non-divergence scheme treats  a Lap f  implicitly and the reaction
-alpha (2+gamma) h f  explicitly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded

from .config import RunConfig, parse_initial
from .core import DomainError, Params, RadialField, RadialGrid, lp_norm, make_grid
from .potentials import PotentialPair, a_lower_bound, compute_potentials

__all__ = [
    "NumericalFailure",
    "InvariantViolation",
    "SolverState",
    "MonitorRecord",
    "LpReport",
    "initial_field",
    "make_state",
    "step",
    "heat_step",
    "run",
    "monitor",
    "second_moment_residual",
    "lp_monotonicity_report",
    "gaussian_density",
]


class NumericalFailure(RuntimeError):
    """Linear solve failure or non-finite values during time stepping."""

    def __init__(self, message: str, step_index: int):
        super().__init__(f"step {step_index}: {message}")
        self.step_index = step_index


class InvariantViolation(RuntimeError):
    """An inequality-backed or conservation invariant failed beyond tolerance."""


@dataclass(frozen=True)
class SolverState:
    t: float
    f: RadialField
    pair: PotentialPair
    step_index: int = 0
    clamped_mass: float = 0.0


@dataclass(frozen=True)
class MonitorRecord:
    t: float
    mass: float
    m1: float
    m2: float
    m2_rhs: float
    lp: dict
    sup_f: float
    a_min_ratio: float
    ell: float


@dataclass
class LpReport:
    p: float
    increments: np.ndarray
    max_rel_increase: float
    flagged: list
    in_range: bool
    label: str
    dissipation_factor: float
    tol: float = 1e-8

    @property
    def ok(self) -> bool:
        return not self.flagged


# -- initial data ------------------------------------------------------------------
def gaussian_density(grid: RadialGrid, sigma: float = 1.0, mass: float = 1.0) -> RadialField:
    """Isotropic Gaussian with standard deviation sigma, normalised on the grid."""
    d = grid.d
    vals = np.exp(-0.5 * (grid.r / sigma) ** 2) / (2.0 * math.pi * sigma ** 2) ** (d / 2)
    return _normalise(grid, vals, mass)


def _bump(r, R):
    out = np.zeros_like(r)
    inside = r < R
    x = r[inside] / R
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - x * x))
    return out


def _normalise(grid, vals, mass):
    tot = grid.w @ vals
    if mass == 0.0 or tot == 0.0:
        return RadialField(grid, np.zeros(grid.n))
    return RadialField(grid, vals * (mass / tot))


def initial_field(grid: RadialGrid, spec: str, mass: float = 1.0) -> RadialField:
    kind, arg = parse_initial(spec)
    if kind == "gaussian":
        return gaussian_density(grid, arg, mass)
    if kind == "bump":
        return _normalise(grid, _bump(grid.r, arg), mass)
    if kind == "two_bumps":
        vals = _bump(grid.r, 1.0) + 0.5 * _bump(np.abs(grid.r - 3.0), 1.0)
        return _normalise(grid, vals, mass)
    if kind == "zero":
        return RadialField(grid, np.zeros(grid.n))
    from .io import read_snapshot
    _, f = read_snapshot(arg)
    same = f.grid.n == grid.n and np.array_equal(f.grid.edges, grid.edges)
    vals = f.values if same else f.grid.interpolate(f.values, grid.r)
    return RadialField(grid, np.maximum(vals, 0.0))


def make_state(f: RadialField, params: Params, t: float = 0.0) -> SolverState:
    return SolverState(t=t, f=f, pair=compute_potentials(f, params), step_index=0)


# -- operators ---------------------------------------------------------------------
def _transmissibility(grid: RadialGrid):
    b, area, delta = grid.interfaces
    return area / delta


def _divergence_banded(grid: RadialGrid, a: np.ndarray, dt: float) -> np.ndarray:
    """Banded form of  I - dt V^-1 L  with  (L f)_i = F_{i+1/2} - F_{i-1/2}."""
    n = grid.n
    T = _transmissibility(grid)
    V = grid.w
    ab = np.zeros((3, n))
    # interior interfaces i+1/2, i = 0..n-2
    up = T[:-1] * a[:-1]     # coefficient of f_{i+1} in F_{i+1/2}
    lo = T[:-1] * a[1:]      # coefficient of f_i (with minus sign)
    diag = np.zeros(n)
    diag[:-1] += lo          # node i loses  T a_{i+1} f_i
    diag[1:] += up           # node i+1 loses T a_i f_{i+1}
    diag[-1] += T[-1] * a[-1]  # outflow to f = 0 at r_max
    ab[0, 1:] = -dt * up / V[:-1]
    ab[2, :-1] = -dt * lo / V[1:]
    ab[1] = 1.0 + dt * diag / V
    return ab


def _nondivergence_banded(grid: RadialGrid, a: np.ndarray, dt: float) -> np.ndarray:
    """Banded form of  I - dt diag(a) V^-1 Lap."""
    n = grid.n
    T = _transmissibility(grid)
    V = grid.w
    ab = np.zeros((3, n))
    t_in = T[:-1]
    diag = np.zeros(n)
    diag[:-1] += t_in
    diag[1:] += t_in
    diag[-1] += T[-1]
    ab[0, 1:] = -dt * a[:-1] * t_in / V[:-1]
    ab[2, :-1] = -dt * a[1:] * t_in / V[1:]
    ab[1] = 1.0 + dt * a * diag / V
    return ab


def _reaction(pair: PotentialPair, f: np.ndarray, params: Params) -> np.ndarray:
    # -(2+gamma) h f ; for gamma = -d the variant  f_t = a Lap f + alpha f^2
    if params.coulomb:
        return f * f
    return -(2.0 + params.gamma) * pair.h.values * f


def _solve(ab, rhs, step_index):
    try:
        out = solve_banded((1, 1), ab, rhs, check_finite=False)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericalFailure(f"linear solve failed: {exc}", step_index) from None
    if not np.all(np.isfinite(out)):
        raise NumericalFailure("non-finite values in solution", step_index)
    return out


def step(state: SolverState, dt: float, scheme: str, params: Params,
         tol_neg: float = 1e-10) -> SolverState:
    """One semi-implicit step with coefficients frozen at state.t."""
    if not dt > 0:
        raise DomainError(f"dt must be positive, got {dt}")
    f = state.f.values
    grid = state.f.grid
    a = state.pair.a.values
    k = state.step_index + 1
    if scheme == "divergence":
        if params.coulomb:
            raise DomainError("gamma = -d requires the nondivergence scheme")
        rhs = f.copy()
        if params.alpha != 1.0 and params.gamma != -2.0:
            rhs += dt * (params.alpha - 1.0) * _reaction(state.pair, f, params)
        new = _solve(_divergence_banded(grid, a, dt), rhs, k)
    elif scheme == "nondivergence":
        rhs = f + dt * params.alpha * _reaction(state.pair, f, params)
        new = _solve(_nondivergence_banded(grid, a, dt), rhs, k)
    else:
        raise DomainError(f"unknown scheme {scheme!r}")
    clamped = 0.0
    if new.min() < 0.0:
        scale = max(np.abs(new).max(), 1e-300)
        if new.min() < -tol_neg * scale:
            raise NumericalFailure(f"negative density {new.min():.3e} beyond tolerance", k)
        neg = np.minimum(new, 0.0)
        clamped = float(-grid.w @ neg)
        new = new - neg
    fn = RadialField(grid, new)
    pair = compute_potentials(fn, params, check_tail=False)
    return SolverState(t=state.t + dt, f=fn, pair=pair, step_index=k,
                       clamped_mass=state.clamped_mass + clamped)


def heat_step(f: RadialField, dt: float, kappa: float) -> RadialField:
    """Implicit Euler step of  f_t = kappa Lap f  with the same assembly as step()."""
    a = np.full(f.grid.n, kappa)
    new = _solve(_divergence_banded(f.grid, a, dt), f.values.copy(), 0)
    return RadialField(f.grid, np.maximum(new, 0.0))


# -- monitors ----------------------------------------------------------------------
def monitor(state: SolverState, params: Params, p_list=(1.0, 2.0)) -> MonitorRecord:
    f = state.f
    g = f.grid
    mass = float(g.w @ f.values)
    m2 = float(g.weights(2.0) @ f.values)
    a = state.pair.a.values
    m2_rhs = 2.0 * (params.d + 2.0 + params.gamma) * float(g.w @ (f.values * a))
    lp = {float(p): lp_norm(f, p) for p in p_list}
    if mass > 0:
        lb = a_lower_bound(f, params, state.pair)
        ell, ratio = lb.ell, float(np.min(a / np.sqrt(1.0 + g.r ** 2) ** (2.0 + params.gamma)))
    else:
        ell, ratio = 0.0, 0.0
    # radial data has zero momentum; recorded as a symmetry check
    return MonitorRecord(t=state.t, mass=mass, m1=0.0, m2=m2, m2_rhs=m2_rhs, lp=lp,
                         sup_f=float(f.values.max()), a_min_ratio=ratio, ell=ell)


def run(config: RunConfig, progress=None):
    """Integrate to t_end; returns (trajectory snapshots, monitor records)."""
    config.validate()
    params = Params.make(config.dimension, config.gamma, config.alpha)
    grid = make_grid(config.r_max, config.n_cells, config.stretch(), config.dimension)
    f0 = initial_field(grid, config.initial, config.mass)
    state = make_state(f0, params)
    nsteps = int(round(config.t_end / config.dt))
    snap_at = set(np.unique(np.round(np.linspace(0, nsteps, config.snapshot_count)).astype(int)))
    p_list = config.p_list
    traj, mons = [], []
    for k in range(nsteps + 1):
        if k > 0:
            state = step(state, config.dt, config.scheme, params, config.tol_neg)
        if k % config.monitor_every == 0 or k == nsteps:
            mons.append(monitor(state, params, p_list))
        if k in snap_at:
            traj.append(state)
        if progress is not None:
            progress(k, nsteps)
    return traj, mons


def second_moment_residual(monitors) -> float:
    """max |dM2/dt - 2(d+2+gamma) int f a| / |2(d+2+gamma) int f a| (centred differences)."""
    if len(monitors) < 3:
        raise ValueError("need at least 3 monitor records")
    t = np.array([m.t for m in monitors])
    m2 = np.array([m.m2 for m in monitors])
    rhs = np.array([m.m2_rhs for m in monitors])
    if not np.any(rhs) and not np.any(m2):
        return 0.0
    slope = (m2[2:] - m2[:-2]) / (t[2:] - t[:-2])
    return float(np.max(np.abs(slope - rhs[1:-1]) / np.abs(rhs[1:-1])))


def lp_monotonicity_report(monitors, p: float, params: Params, tol: float = 1e-8) -> LpReport:
    """Per-interval relative increments of ||f||_p and the admissible-range label."""
    norms = np.array([m.lp[float(p)] for m in monitors])
    inc = np.diff(norms) / np.where(norms[:-1] > 0, norms[:-1], 1.0)
    flagged = [int(i) for i in np.flatnonzero(inc > tol)]
    in_range = 1.0 <= p <= params.p_max_monotone
    kappa = -2.0 - params.gamma
    factor = 4.0 * (p - 1.0) * (1.0 / p - kappa / (params.d + params.gamma))
    label = "admissible" if in_range else "outside-range (p > p_max_monotone)"
    return LpReport(p=float(p), increments=inc, max_rel_increase=float(inc.max(initial=0.0)),
                    flagged=flagged if in_range else [], in_range=in_range, label=label,
                    dissipation_factor=factor, tol=tol)
