"""Energy identity, energy inequality and the Moser cascade on trajectories.

For u = f^(p/2) and a cutoff rho the weighted L^p energy obeys

    d/dt int rho^2 f^p = -(4(p-1)/p) int a |grad(rho u)|^2
                         + int (c1(p) |grad rho|^2 - Lap rho^2) a f^p
                         + (p-1) int (-Lap a) rho^2 f^p
                         - c2(p) int a u (grad(rho u), grad rho),

with c1(p) = 4 + 4/p and c2(p) = 8/p (derived by integrating by parts
twice; at p = 2 these are 6 and 4).  Lap a is evaluated as (2+gamma) h.

The cascade quantities E_n grow like f^(p_n) with p_n -> inf, so they are
accumulated in log space (max + log-sum-exp).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .core import DomainError, Params, RadialField, RadialGrid, make_grid

__all__ = [
    "CutoffSequence",
    "MoserSchedule",
    "EnergyInequalityReport",
    "energy_coefficients",
    "build_cutoffs",
    "energy_identity_terms",
    "energy_identity_residual",
    "energy_inequality_check",
    "moser_diagnostic",
    "time_integral",
]

N_MAX_LIMIT = 8
MIN_BAND_CELLS = 8


def energy_coefficients(p: float):
    """(c1, c2) in the weighted energy identity."""
    return 4.0 + 4.0 / p, 8.0 / p


# -- cutoffs -----------------------------------------------------------------------
def _smoothstep(x):
    x = np.clip(x, 0.0, 1.0)
    s = x ** 3 * (10.0 - 15.0 * x + 6.0 * x * x)
    ds = 30.0 * x * x * (1.0 - x) ** 2
    dds = 60.0 * x * (1.0 - x) * (1.0 - 2.0 * x)
    return s, ds, dds


def _cutoff_profile(r, inner, outer, d):
    """rho, rho', Lap(rho^2) for rho = 1 on [0, inner], 0 beyond outer."""
    width = outer - inner
    s, ds, dds = _smoothstep((r - inner) / width)
    rho = 1.0 - s
    d1 = -ds / width
    d2 = -dds / width ** 2
    r_safe = np.where(r > 0, r, 1.0)
    lap_sq = 2.0 * d1 * d1 + 2.0 * rho * d2 + (d - 1) * 2.0 * rho * d1 / r_safe
    return rho, d1, lap_sq


@dataclass
class CutoffSequence:
    """Cutoffs rho_n = 1 on B_{R_(n+1)}, 0 outside B_{R_n}, R_n = (1 + 2^-n) R."""

    R: float
    count: int
    rho_n: list
    grad_bound_const: float
    lap_bound_const: float
    grad_n: list = field(default_factory=list)
    lap_sq_n: list = field(default_factory=list)

    def radius(self, n: int) -> float:
        return (1.0 + 2.0 ** (-n)) * self.R


def build_cutoffs(R: float, count: int, grid: RadialGrid) -> CutoffSequence:
    """Quintic-smoothstep cutoffs with analytic gradient and Lap(rho^2)."""
    if not R > 0:
        raise DomainError(f"R must be positive, got {R}")
    if count < 1:
        raise DomainError(f"need at least one cutoff, got {count}")
    if 2.0 * R > grid.r_max * (1 + 1e-12):
        raise DomainError(f"B_(2R) = B_{2 * R} leaves the grid (r_max={grid.r_max})")
    r = grid.r
    rhos, grads, laps = [], [], []
    gc, lc = 0.0, 0.0
    for n in range(count):
        outer = (1.0 + 2.0 ** (-n)) * R
        inner = (1.0 + 2.0 ** (-n - 1)) * R
        cells = np.count_nonzero((r > inner) & (r < outer))
        if cells < MIN_BAND_CELLS:
            raise DomainError(f"transition band {n} ({inner:.4g}, {outer:.4g}) has {cells} "
                              f"nodes, need {MIN_BAND_CELLS}")
        rho, d1, lap_sq = _cutoff_profile(r, inner, outer, grid.d)
        rhos.append(RadialField(grid, rho))
        grads.append(d1)
        laps.append(lap_sq)
        if n >= 1:  # bounds are stated for rho_{k+1}, k = n-1
            k = n - 1
            gc = max(gc, float(np.abs(d1).max()) * R / 2.0 ** k)
            lc = max(lc, float(np.abs(lap_sq).max()) * R * R / 4.0 ** k)
    return CutoffSequence(R=R, count=count, rho_n=rhos, grad_bound_const=gc,
                          lap_bound_const=lc, grad_n=grads, lap_sq_n=laps)


# -- time integration helpers ------------------------------------------------------
def time_integral(ts, vals, lo: float, hi: float) -> float:
    """Integral over [lo, hi] of the piecewise-linear interpolant of vals(ts)."""
    ts = np.asarray(ts, dtype=float)
    vals = np.asarray(vals, dtype=float)
    if lo < ts[0] - 1e-12 or hi > ts[-1] + 1e-12 or hi < lo:
        raise DomainError(f"time window [{lo}, {hi}] outside trajectory [{ts[0]}, {ts[-1]}]")
    inner = (ts > lo) & (ts < hi)
    tt = np.concatenate([[lo], ts[inner], [hi]])
    vv = np.interp(tt, ts, vals)
    return float(np.trapezoid(vv, tt))


def _log_time_integral(ts, logv, lo, hi):
    """log of the trapezoid integral over [lo, hi] of exp(logv), without overflow."""
    inner = (ts > lo) & (ts < hi)
    tt = np.concatenate([[lo], ts[inner], [hi]])
    lv = np.concatenate([[_log_interp(ts, logv, lo)], logv[inner], [_log_interp(ts, logv, hi)]])
    dt = np.diff(tt)
    keep = dt > 0
    if not np.any(keep):
        return -np.inf
    # each trapezoid: dt/2 (e^x + e^y)
    terms = np.logaddexp(lv[:-1], lv[1:])[keep] + np.log(0.5 * dt[keep])
    return float(logsumexp(terms))


def _log_interp(ts, logv, t):
    k = np.searchsorted(ts, t)
    if k < len(ts) and ts[k] == t:
        return logv[k]
    k = min(max(k, 1), len(ts) - 1)
    t0, t1 = ts[k - 1], ts[k]
    lam = (t - t0) / (t1 - t0)
    with np.errstate(divide="ignore"):
        return float(np.logaddexp(np.log1p(-lam) + logv[k - 1] if lam < 1 else -np.inf,
                                  np.log(lam) + logv[k] if lam > 0 else -np.inf))


# -- energy identity ---------------------------------------------------------------
def _lap_full(values, grid):
    """Radial Laplacian at every node: even ghost at r = -r_0, zero beyond r_max."""
    g = np.asarray(values, dtype=float)
    r = np.concatenate([[-grid.r[0]], grid.r, [grid.r_max]])
    gg = np.concatenate([[g[0]], g, [0.0]])
    hm = r[1:-1] - r[:-2]
    hp = r[2:] - r[1:-1]
    gm, g0, gp = gg[:-2], gg[1:-1], gg[2:]
    d2 = 2.0 * (hm * gp - (hm + hp) * g0 + hp * gm) / (hm * hp * (hm + hp))
    d1 = (hm ** 2 * gp + (hp ** 2 - hm ** 2) * g0 - hp ** 2 * gm) / (hm * hp * (hm + hp))
    return d2 + (grid.d - 1) * d1 / grid.r


def _rho_parts(rho, grid):
    if rho is None:
        return np.ones(grid.n), np.zeros(grid.n)
    if isinstance(rho, RadialField):
        if rho.grid is not grid:
            raise DomainError("cutoff and snapshot grids differ")
        vals = rho.values
    else:
        vals = np.asarray(rho, dtype=float)
    return vals, _lap_full(vals ** 2, grid)


def energy_identity_terms(state, rho, p: float, params: Params):
    """(int rho^2 f^p, right-hand side of the identity) for one snapshot."""
    grid = state.f.grid
    f = state.f.values
    a = state.pair.a.values
    h = state.pair.h.values
    rho_v, lap_rho2 = _rho_parts(rho, grid)
    c1, c2 = energy_coefficients(p)
    u = f ** (0.5 * p)
    fp = f ** p
    w = grid.w
    q = grid.quad(0.0)
    aq = q.interp(a)
    d_rho_u = q.deriv(rho_v * u)
    d_rho = q.deriv(rho_v)
    lap_a = (2.0 + params.gamma) * h
    t_a = -(4.0 * (p - 1.0) / p) * float(q.w @ (aq * d_rho_u ** 2))
    t_b = float(q.w @ (c1 * d_rho ** 2 * aq * q.interp(fp))) - float(w @ (lap_rho2 * a * fp))
    t_c = (p - 1.0) * float(w @ (-lap_a * rho_v ** 2 * fp))
    t_d = -c2 * float(q.w @ (aq * q.interp(u) * d_rho_u * d_rho))
    energy = float(w @ (rho_v ** 2 * fp))
    return energy, t_a + t_b + t_c + t_d


def energy_identity_residual(trajectory, rho, p: float, params: Params) -> float:
    """max over interior snapshots of |dE/dt - rhs| / |rhs| (centred differences).

    ``rho`` is a RadialField on the trajectory grid, or None for rho = 1.
    """
    if len(trajectory) < 3:
        raise ValueError("need at least 3 snapshots")
    if not p > 1:
        raise DomainError(f"p must exceed 1, got {p}")
    ts = np.array([s.t for s in trajectory])
    pairs = [energy_identity_terms(s, rho, p, params) for s in trajectory]
    E = np.array([x[0] for x in pairs])
    rhs = np.array([x[1] for x in pairs])
    if not np.any(E):
        return 0.0
    slope = (E[2:] - E[:-2]) / (ts[2:] - ts[:-2])
    denom = np.abs(rhs[1:-1])
    denom = np.where(denom > 0, denom, 1.0)
    return float(np.max(np.abs(slope - rhs[1:-1]) / denom))


# -- energy inequality -------------------------------------------------------------
@dataclass
class EnergyInequalityReport:
    lhs: float
    int_rho2_fp: float
    int_a_fp_rho_terms: float
    first_coefficient: float
    C1_min: float
    Cp2_min: float

    @property
    def holds_with_zero_constants(self) -> bool:
        return self.lhs <= self.first_coefficient * self.int_rho2_fp * (1 + 1e-12)


def energy_inequality_check(trajectory, rho, p: float, T1: float, T2: float, T3: float,
                            params: Params, cutoff_grad=None, cutoff_lap_sq=None
                            ) -> EnergyInequalityReport:
    """Smallest constants in the local energy inequality on [T1, T3].

    LHS = sup_(T2,T3) int rho^2 f^p + ((p-1)/p) int_T2^T3 int a |grad(rho f^(p/2))|^2,
    RHS = (1/(T2-T1) + C1) I1 + K I2 with I1 = int_T1^T3 int rho^2 f^p and
    I2 = int_T1^T3 int a f^p (|grad rho|^2 + |Lap rho^2|).  Reports the least
    C1 with K = 0 and the least K with C1 = 0.
    """
    if not T1 < T2 < T3:
        raise DomainError("need T1 < T2 < T3")
    ts = np.array([s.t for s in trajectory])
    if T1 < ts[0] - 1e-12 or T3 > ts[-1] + 1e-12:
        raise DomainError(f"window [{T1}, {T3}] outside trajectory [{ts[0]}, {ts[-1]}]")
    grid = trajectory[0].f.grid
    rho_v, lap_rho2 = _rho_parts(rho, grid)
    if cutoff_lap_sq is not None:
        lap_rho2 = np.asarray(cutoff_lap_sq)
    q = grid.quad(0.0)
    d_rho = q.deriv(rho_v)
    E, G, J = [], [], []
    for s in trajectory:
        f = s.f.values
        a = s.pair.a.values
        fp = f ** p
        E.append(float(grid.w @ (rho_v ** 2 * fp)))
        aq = q.interp(a)
        G.append(float(q.w @ (aq * q.deriv(rho_v * f ** (0.5 * p)) ** 2)))
        J.append(float(q.w @ (aq * q.interp(fp) * d_rho ** 2))
                 + float(grid.w @ (a * fp * np.abs(lap_rho2))))
    E, G, J = map(np.array, (E, G, J))
    inside = (ts >= T2) & (ts <= T3)
    sup_e = max([float(np.interp(T2, ts, E)), float(np.interp(T3, ts, E))]
                + list(E[inside]))
    lhs = sup_e + (p - 1.0) / p * time_integral(ts, G, T2, T3)
    I1 = time_integral(ts, E, T1, T3)
    I2 = time_integral(ts, J, T1, T3)
    first = 1.0 / (T2 - T1)
    deficit = lhs - first * I1
    c1 = max(0.0, deficit / I1) if I1 > 0 else 0.0
    k = max(0.0, deficit / I2) if I2 > 0 else (0.0 if deficit <= 0 else math.inf)
    return EnergyInequalityReport(lhs=lhs, int_rho2_fp=I1, int_a_fp_rho_terms=I2,
                                  first_coefficient=first, C1_min=c1, Cp2_min=k)


# -- Moser cascade -----------------------------------------------------------------
@dataclass
class MoserSchedule:
    T: float
    R: float
    p0: float
    T_n: np.ndarray
    R_n: np.ndarray
    p_n: np.ndarray
    log_E: np.ndarray
    log_restricted: np.ndarray
    fact_i: list
    ratios: np.ndarray
    sup_f: float
    limit_estimate: float
    extrapolation_error: float
    b_const: float
    grad_bound_const: float = float("nan")
    lap_bound_const: float = float("nan")

    @property
    def E_n(self):
        return np.exp(self.log_E)


def _fine_grid(R, n_max, d):
    band = 2.0 ** (-(n_max + 1)) * R
    n = int(math.ceil(2.0 * R / (band / MIN_BAND_CELLS))) + 2 * MIN_BAND_CELLS
    return make_grid(2.0 * R, n, "uniform", d)


def moser_diagnostic(trajectory, p0: float, R: float, T: float | None, n_max: int,
                     params: Params) -> MoserSchedule:
    """E_n cascade of the L^p -> L^inf iteration, evaluated in log space.

    Snapshots are interpolated onto a uniform grid over [0, 2R] fine enough
    to resolve the thinnest cutoff band with MIN_BAND_CELLS nodes.  The
    limit of E_n is extrapolated by least squares in the model
    log E_n = L + A/p_n + B log(p_n)/p_n.
    """
    if not p0 > params.p_min_linfty:
        raise DomainError(f"p0 must exceed d/(d+gamma+2) = {params.p_min_linfty}, got {p0}")
    if n_max > N_MAX_LIMIT:
        warnings.warn(f"n_max={n_max} clipped to {N_MAX_LIMIT}", RuntimeWarning, stacklevel=2)
        n_max = N_MAX_LIMIT
    if n_max < 2:
        raise DomainError("need n_max >= 2 for the extrapolation")
    ts = np.array([s.t for s in trajectory])
    T = float(ts[-1]) if T is None else float(T)
    if T > ts[-1] + 1e-12 or T / 4.0 < ts[0] - 1e-12:
        raise DomainError(f"window [T/4, T] = [{T / 4}, {T}] outside trajectory")
    src = trajectory[0].f.grid
    if 2.0 * R > src.r_max:
        raise DomainError(f"B_(2R) leaves the trajectory grid (r_max={src.r_max})")
    d = params.d
    fine = _fine_grid(R, n_max, d)
    cut = build_cutoffs(R, n_max + 1, fine)
    q = params.q_exp
    with np.errstate(divide="ignore"):
        logf = np.array([np.log(np.maximum(src.interpolate(s.f.values, fine.r), 0.0))
                         for s in trajectory])
        loga = np.array([np.log(np.maximum(src.interpolate(s.pair.a.values, fine.r), 0.0))
                         for s in trajectory])
        logw = np.log(fine.w)
        logw_R = np.log(fine.weights(0.0, R))
    ns = np.arange(n_max + 1)
    T_n = 0.25 * (2.0 - 2.0 ** (-ns)) * T
    R_n = (1.0 + 2.0 ** (-ns)) * R
    p_n = p0 * (q / 2.0) ** ns
    log_E = np.empty(n_max + 1)
    log_res = np.empty(n_max + 1)
    for n in ns:
        pn = p_n[n]
        with np.errstate(divide="ignore"):
            lrho = q * np.log(cut.rho_n[n].values)
        lint = logsumexp(logw + lrho + loga + pn * logf, axis=1)
        lres = logsumexp(logw_R + loga + pn * logf, axis=1)
        log_E[n] = _log_time_integral(ts, lint, T_n[n], T) / pn
        log_res[n] = _log_time_integral(ts, lres, 0.5 * T, T) / pn
    fact_i = [bool(le >= lr - 1e-6) for le, lr in zip(log_E, log_res)]
    window = (ts >= 0.5 * T - 1e-12) & (ts <= T + 1e-12)
    inside = fine.r <= R
    sup_f = float(np.exp(logf[window][:, inside].max()))
    X = np.stack([np.ones_like(p_n), 1.0 / p_n, np.log(p_n) / p_n], axis=1)
    coef, *_ = np.linalg.lstsq(X, log_E, rcond=None)
    limit = float(np.exp(coef[0]))
    m = params.m_exp
    return MoserSchedule(T=T, R=R, p0=p0, T_n=T_n, R_n=R_n, p_n=p_n, log_E=log_E,
                         log_restricted=log_res, fact_i=fact_i,
                         ratios=np.exp(np.diff(log_E)), sup_f=sup_f, limit_estimate=limit,
                         extrapolation_error=abs(limit / sup_f - 1.0),
                         b_const=max(4.0 * q, (q / 2.0) ** m),
                         grad_bound_const=cut.grad_bound_const,
                         lap_bound_const=cut.lap_bound_const)
