"""Verification bench for weighted Hardy/Poincare/Sobolev inequalities.

All quadratic forms are integrals of the piecewise-linear interpolants of
the sampled fields, taken with the segment quadrature of the grid.  For
pure-power weights (the Hardy inequality) the integrals are exact up to
rounding, so the inequality holds for every test function the grid can
represent and a violation signals a bug rather than under-resolution.

Unknown universal constants are never guessed: the suites report the
smallest constant that makes each inequality hold on the tested functions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy import linalg
from scipy.interpolate import PchipInterpolator
from scipy.ndimage import gaussian_filter1d
from scipy.special import betainc, roots_legendre

from .core import DomainError, Params, RadialField, RadialGrid, sphere_area
from .potentials import PotentialPair

__all__ = [
    "TestFunction",
    "CubeSpec",
    "Ball",
    "SigmaReport",
    "EigenReport",
    "EpsReport",
    "gaussian_test",
    "bump_test",
    "random_smooth_test",
    "hardy_check",
    "potential_hardy_check",
    "rayleigh_lambda_iso",
    "power_pair",
    "ball_integral",
    "weighted_quotient",
    "QUOTIENT_THRESHOLD",
    "sigma",
    "random_cubes",
    "cube_average_sup",
    "sigma_slope",
    "weighted_sobolev_check",
    "space_time_check",
    "eps_poincare_check",
    "eps_poincare_envelope",
]

# informational threshold for the weighted quotient (radially decreasing data)
QUOTIENT_THRESHOLD = 1.0 / 96.0


@dataclass(frozen=True)
class TestFunction:
    """Signed radial test function vanishing at and beyond ``R_supp``."""

    __test__ = False  # not a pytest class

    field: RadialField
    R_supp: float
    family: str = "custom"

    @property
    def values(self):
        return self.field.values

    @property
    def grid(self):
        return self.field.grid

    def scaled(self, c):
        return TestFunction(self.field.with_values(c * self.values, nonneg=False),
                            self.R_supp, self.family)


@dataclass(frozen=True)
class CubeSpec:
    center: np.ndarray
    side: float
    level: int = 0

    def __post_init__(self):
        if not self.side > 0:
            raise DomainError(f"cube side must be positive, got {self.side}")
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))


@dataclass(frozen=True)
class Ball:
    center: np.ndarray
    radius: float

    @property
    def offset(self) -> float:
        return float(np.linalg.norm(np.atleast_1d(self.center)))


@dataclass
class SigmaReport:
    s: float
    r: float
    sigma_value: float
    eta: float
    p_of_s: float
    slope_estimate: float
    sides: np.ndarray = field(default_factory=lambda: np.array([]))
    values: np.ndarray = field(default_factory=lambda: np.array([]))


@dataclass
class EigenReport:
    lambda_iso: float
    lower_bound: float
    minimizer: TestFunction
    iterations: int
    residual: float
    dense_value: float = float("nan")
    radial_restricted: bool = True

    @property
    def margin(self) -> float:
        return self.lambda_iso - self.lower_bound


@dataclass
class EpsReport:
    eps: np.ndarray
    K: np.ndarray
    slope: float
    H: float = 0.0
    D: float = 0.0
    A: float = 0.0


# -- test functions ----------------------------------------------------------------
def _tf(grid, vals, R, family):
    vals = np.where(grid.r < R, vals, 0.0)
    return TestFunction(RadialField(grid, vals, nonneg=False), float(R), family)


def _bump_profile(r, R):
    out = np.zeros_like(r, dtype=float)
    inside = r < R
    x = r[inside] / R
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - x * x))
    return out


def gaussian_test(grid: RadialGrid, sigma: float = 1.0, R: float | None = None) -> TestFunction:
    """exp(-r^2 / (2 sigma^2)), cut at R (default r_max)."""
    R = grid.r_max if R is None else R
    return _tf(grid, np.exp(-0.5 * (grid.r / sigma) ** 2), R, "gaussian")


def bump_test(grid: RadialGrid, R: float = 1.0) -> TestFunction:
    return _tf(grid, _bump_profile(grid.r, R), R, "bump")


def random_smooth_test(grid: RadialGrid, rng: np.random.Generator, R: float = 2.0,
                       smooth: float = 4.0) -> TestFunction:
    """Low-pass filtered node noise times a bump of radius R."""
    noise = gaussian_filter1d(rng.standard_normal(grid.n), smooth, mode="nearest")
    return _tf(grid, (1.0 + noise) * _bump_profile(grid.r, R), R, "random-smooth")


# -- quadratic forms ---------------------------------------------------------------
def _check_grid(grid, *fields_):
    for f in fields_:
        if f.grid is not grid:
            raise DomainError("fields live on different grids")


def _weighted_l2(grid, weight, phi, power=0.0):
    q = grid.quad(power)
    wq = q.w if weight is None else q.w * q.interp(weight)
    return float(wq @ q.interp(phi) ** 2)


def _weighted_grad(grid, weight, phi, power=0.0):
    q = grid.quad(power)
    wq = q.w if weight is None else q.w * q.interp(weight)
    return float(wq @ q.deriv(phi) ** 2)


def hardy_check(phi: TestFunction, gamma: float, d: int):
    """(lhs, rhs) = ((d+gamma)^2 int |v|^gamma phi^2, 4 int |v|^(2+gamma) |grad phi|^2)."""
    grid = phi.grid
    if d != grid.d:
        raise DomainError(f"grid dimension {grid.d} differs from d={d}")
    if not gamma > -d:
        raise DomainError(f"|v|^gamma phi^2 needs gamma > -d, got {gamma}")
    lhs = (d + gamma) ** 2 * _weighted_l2(grid, None, phi.values, gamma)
    rhs = 4.0 * _weighted_grad(grid, None, phi.values, 2.0 + gamma)
    return lhs, rhs


def potential_hardy_check(phi: TestFunction, pair: PotentialPair, params: Params):
    """(lhs, rhs) = ((d+gamma) int h phi^2, 4 int a |grad phi|^2)."""
    grid = phi.grid
    _check_grid(grid, pair.a, pair.h)
    if not -params.d < params.gamma <= -2.0:
        raise DomainError(f"needs -d < gamma <= -2, got {params.gamma}")
    lhs = (params.d + params.gamma) * _weighted_l2(grid, pair.h.values, phi.values)
    rhs = 4.0 * _weighted_grad(grid, pair.a.values, phi.values)
    return lhs, rhs


# -- eigenvalue problem ------------------------------------------------------------
def _assemble(grid, weight, deriv, power=0.0):
    """Tridiagonal Gram matrix of  int weight~ (phi or phi')^2  in banded storage."""
    q = grid.quad(power)
    wq = q.w if weight is None else q.w * q.interp(weight)
    cl, cr = (q.dl, q.dr) if deriv else (q.cl, q.cr)
    n = grid.n
    diag = np.zeros(n)
    off = np.zeros(n - 1)
    np.add.at(diag, q.il, wq * cl * cl)
    np.add.at(diag, q.ir, wq * cr * cr)
    same = q.il == q.ir
    # constant segment: il == ir, cr = 0, so only cl*cl entered above
    np.add.at(off, q.il[~same], (wq * cl * cr)[~same])
    return diag, off


def power_pair(grid: RadialGrid, gamma: float) -> PotentialPair:
    """Pure-power weights a = r^(2+gamma), h = r^gamma (the Hardy pair)."""
    a = RadialField(grid, grid.r ** (2.0 + gamma))
    h = RadialField(grid, grid.r ** gamma)
    return PotentialPair(a=a, h=h, gamma=gamma, source_mass=float("nan"), c_a=1.0, c_h=1.0)


def rayleigh_lambda_iso(pair: PotentialPair, grid: RadialGrid, params: Params,
                        shift: float | None = None, tol: float = 1e-12,
                        max_iter: int = 2000, dense_check: bool = True,
                        lower_bound: float | None = None) -> EigenReport:
    """Smallest value of  int a |grad phi|^2 / int h phi^2  over radial phi, phi(r_max) = 0.

    The forms are discretised on the grid's piecewise-linear space with the
    last two nodes fixed to zero; the generalized eigenproblem is solved by
    shifted inverse iteration on the Jacobi-scaled pencil (shift 0.9 times
    the lower bound), cross-checked by a dense symmetric-definite solve.
    ``lower_bound`` defaults to (d+gamma)/4; pass (d+gamma)^2/4 for the
    pure-power pair.  The residual is measured on the scaled pencil.
    """
    _check_grid(grid, pair.a, pair.h)
    da, oa = _assemble(grid, pair.a.values, True)
    db, ob = _assemble(grid, pair.h.values, False)
    m = grid.n - 2
    da, oa, db, ob = da[:m], oa[:m - 1], db[:m], ob[:m - 1]
    if np.any(da <= 0) or np.any(db <= 0):
        raise DomainError("degenerate quadratic forms (non-positive weights)")
    # Jacobi scaling by the stiffness diagonal
    sc = 1.0 / np.sqrt(da)
    Ad, Ao = da * sc * sc, oa * sc[:-1] * sc[1:]
    Bd, Bo = db * sc * sc, ob * sc[:-1] * sc[1:]

    lower = (params.d + params.gamma) / 4.0 if lower_bound is None else lower_bound
    sig = 0.9 * lower if shift is None else shift

    def matvec(d_, o_, x):
        y = d_ * x
        y[:-1] += o_ * x[1:]
        y[1:] += o_ * x[:-1]
        return y

    ab = np.zeros((3, m))
    ab[0, 1:] = Ao - sig * Bo
    ab[1] = Ad - sig * Bd
    ab[2, :-1] = Ao - sig * Bo
    x = np.ones(m)
    lam_old = np.inf
    it = 0
    lam = np.nan
    for it in range(1, max_iter + 1):
        y = linalg.solve_banded((1, 1), ab, matvec(Bd, Bo, x), check_finite=False)
        x = y / np.sqrt(y @ matvec(Bd, Bo, y))
        lam = float(x @ matvec(Ad, Ao, x))
        if abs(lam - lam_old) <= tol * abs(lam):
            break
        lam_old = lam
    dense = float("nan")
    if dense_check and m <= 4096:
        A = np.diag(Ad) + np.diag(Ao, 1) + np.diag(Ao, -1)
        B = np.diag(Bd) + np.diag(Bo, 1) + np.diag(Bo, -1)
        w, v = linalg.eigh(A, B, subset_by_index=[0, 0])
        dense = float(w[0])
        if not abs(dense - lam) <= 1e-6 * abs(dense):
            # inverse iteration locked onto another eigenvalue or stalled on a
            # small spectral gap: restart the polish from the dense solution
            lam, x = dense, v[:, 0] / np.sqrt(v[:, 0] @ matvec(Bd, Bo, v[:, 0]))
    # Rayleigh-quotient polish: converges the eigenvector, not just lambda
    for _ in range(4):
        ab[0, 1:] = Ao - lam * Bo
        ab[1] = Ad - lam * Bd
        ab[2, :-1] = Ao - lam * Bo
        try:
            y = linalg.solve_banded((1, 1), ab, matvec(Bd, Bo, x), check_finite=False)
        except (linalg.LinAlgError, ValueError):
            break
        if not np.all(np.isfinite(y)):
            break
        x = y / np.sqrt(y @ matvec(Bd, Bo, y))
        lam = float(x @ matvec(Ad, Ao, x))
    Bx = matvec(Bd, Bo, x)
    res = float(np.linalg.norm(matvec(Ad, Ao, x) - lam * Bx) / np.linalg.norm(Bx))
    phi = np.zeros(grid.n)
    phi[:m] = x * sc
    phi /= np.abs(phi).max()
    if phi[np.argmax(np.abs(phi))] < 0:
        phi = -phi
    tf = TestFunction(RadialField(grid, phi, nonneg=False), grid.r_max, "optimizer-output")
    return EigenReport(lambda_iso=lam, lower_bound=lower, minimizer=tf, iterations=it,
                       residual=res, dense_value=dense)


# -- ball and cube integrals -------------------------------------------------------
def _cap_fraction(r, c, R, d):
    """Fraction of the sphere |x| = r lying inside the ball B(c e, R)."""
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    full = r <= R - c
    out[full] = 1.0
    part = (r > abs(c - R)) & (r < c + R) & ~full
    rp = r[part]
    cos_t = np.clip((rp * rp + c * c - R * R) / (2.0 * rp * c), -1.0, 1.0)
    half = 0.5 * betainc(0.5 * (d - 1), 0.5, 1.0 - cos_t * cos_t)
    out[part] = np.where(cos_t >= 0, half, 1.0 - half)
    return out


def _local_width(grid, r):
    k = min(np.searchsorted(grid.edges, r), grid.n)
    return float(grid.widths[max(k - 1, 0)])


def ball_integral(values, grid: RadialGrid, ball: Ball) -> float:
    """int_B g(|x|) dx for the interpolant of ``values`` and a ball anywhere in R^d."""
    c, R = ball.offset, float(ball.radius)
    if c + R > grid.r_max * (1 + 1e-12):
        raise DomainError("ball leaves the grid")
    if 2.0 * R < 2.0 * _local_width(grid, c):
        raise DomainError(f"ball of radius {R} is not resolved by the grid")
    values = np.asarray(values, dtype=float)
    if c == 0.0:
        return float(grid.weights(0.0, R) @ values)
    total = 0.0
    lo = abs(c - R)
    if c < R:
        total += float(grid.weights(0.0, R - c) @ values)
    hi = c + R
    brk = np.concatenate([[lo], grid.r[(grid.r > lo) & (grid.r < hi)], [hi]])
    xg, wg = roots_legendre(8)
    a_, b_ = brk[:-1, None], brk[1:, None]
    x = (0.5 * (a_ + b_) + 0.5 * (b_ - a_) * xg).ravel()
    w = (0.5 * (b_ - a_) * wg).ravel()
    frac = _cap_fraction(x, c, R, grid.d)
    g = grid.interpolate(values, x)
    total += float(np.sum(w * g * frac * sphere_area(grid.d) * x ** (grid.d - 1)))
    return total


def weighted_quotient(pair: PotentialPair, balls) -> float:
    """max over balls of |B|^(2/d) int_B h / int_B a."""
    grid = pair.a.grid
    d = grid.d
    best = -np.inf
    for b in balls:
        vol = grid.ball_volume(b.radius)
        ih = ball_integral(pair.h.values, grid, b)
        ia = ball_integral(pair.a.values, grid, b)
        if ia <= 0:
            raise DomainError("a has no mass on the ball")
        best = max(best, vol ** (2.0 / d) * ih / ia)
    return float(best)


class _RadialEval:
    """Monotone cubic interpolation of a radial field, evenly extended to r < r_0."""

    def __init__(self, fld: RadialField):
        r = fld.grid.r
        v = fld.values
        self.r_top = fld.grid.r_max
        self._p = PchipInterpolator(np.concatenate([-r[::-1], r]),
                                    np.concatenate([v[::-1], v]), extrapolate=True)

    def __call__(self, rad):
        return self._p(rad)


def _cube_points(Q: CubeSpec, d: int, sub: int = 4, order: int = 6):
    xg, wg = roots_legendre(order)
    h = Q.side / sub
    offs = (np.arange(sub) + 0.5) * h - 0.5 * Q.side
    pts1 = (offs[:, None] + 0.5 * h * xg[None, :]).ravel()
    w1 = np.tile(0.5 * h * wg, sub)
    grids = np.meshgrid(*([pts1] * d), indexing="ij")
    wgrids = np.meshgrid(*([w1] * d), indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1) + Q.center[:d]
    w = np.prod(np.stack([g.ravel() for g in wgrids], axis=1), axis=1)
    return pts, w


def sigma(Q: CubeSpec, w1, w2, r_exp: float, s: float, d: int) -> float:
    """|Q|^(1/d - 1/2 + 1/r) (avg_Q w1^s)^(1/(r s)) (avg_Q w2^-s)^(1/(2 s)).

    ``w1`` and ``w2`` are RadialFields (or callables of |x|).
    """
    if not s > 0:
        raise DomainError(f"s must be positive, got {s}")
    if len(Q.center) < d:
        raise DomainError("cube centre has too few coordinates")
    e1 = w1 if callable(w1) else _RadialEval(w1)
    e2 = w2 if callable(w2) else _RadialEval(w2)
    for fld in (w1, w2):
        if isinstance(fld, RadialField):
            g = fld.grid
            far = np.linalg.norm(Q.center[:d]) + 0.5 * math.sqrt(d) * Q.side
            if far > g.r_max:
                raise DomainError("cube leaves the grid")
            if Q.side < 2.0 * _local_width(g, np.linalg.norm(Q.center[:d])):
                raise DomainError(f"cube of side {Q.side} is not resolved by the grid")
    pts, w = _cube_points(Q, d)
    rad = np.linalg.norm(pts, axis=1)
    v1 = e1(rad)
    v2 = e2(rad)
    if np.any(v2 <= 0):
        raise DomainError("w2 vanishes on the cube")
    vol = Q.side ** d
    avg1 = float(w @ np.maximum(v1, 0.0) ** s) / vol
    avg2 = float(w @ v2 ** (-s)) / vol
    return vol ** (1.0 / d - 0.5 + 1.0 / r_exp) * avg1 ** (1.0 / (r_exp * s)) * avg2 ** (1.0 / (2 * s))


def random_cubes(rng: np.random.Generator, count: int = 200, d: int = 3, radius: float = 4.0,
                 levels=range(1, 7)):
    """Cubes with dyadic sides 2^-k and centres uniform in the ball B_radius."""
    levels = list(levels)
    cubes = []
    for _ in range(count):
        x = rng.standard_normal(d)
        x *= radius * rng.random() ** (1.0 / d) / np.linalg.norm(x)
        k = int(rng.choice(levels))
        cubes.append(CubeSpec(center=x, side=2.0 ** (-k), level=k))
    return cubes


def cube_average_sup(pair: PotentialPair, params: Params, cubes, s: float = 1.5) -> float:
    """sup over cubes of sigma with w1 = a^m, w2 = a, r = 2m."""
    m = params.m_exp
    am = pair.a.with_values(pair.a.values ** m)
    ea, eam = _RadialEval(pair.a), _RadialEval(am)
    return max(sigma(Q, eam, ea, 2.0 * m, s, params.d) for Q in cubes)


def sigma_slope(pair: PotentialPair, params: Params, s: float = 1.6,
                center=None, sides=None) -> SigmaReport:
    """Log-log slope of sigma^2 (w1 = h, w2 = a, r = 2) against the cube side."""
    d, g = params.d, params.gamma
    sides = 2.0 ** -np.arange(2, 7) if sides is None else np.asarray(sides, dtype=float)
    center = np.zeros(d) if center is None else np.asarray(center, dtype=float)
    eh, ea = _RadialEval(pair.h), _RadialEval(pair.a)
    vals = np.array([sigma(CubeSpec(center, L), eh, ea, 2.0, s, d) for L in sides])
    slope = float(np.polyfit(np.log(sides), np.log(vals ** 2), 1)[0])
    eta = 2.0 - d / s
    p_of_s = d * s / (d + s * (d + g))
    return SigmaReport(s=s, r=2.0, sigma_value=float(vals.max()), eta=eta, p_of_s=p_of_s,
                       slope_estimate=slope, sides=sides, values=vals)


# -- Sobolev-type and epsilon-Poincare ---------------------------------------------
def weighted_sobolev_check(phi: TestFunction, pair: PotentialPair, params: Params):
    """((int a^m phi^2m)^(1/m), int a |grad phi|^2, ratio)."""
    grid = phi.grid
    _check_grid(grid, pair.a)
    m = params.m_exp
    q = grid.quad(0.0)
    lhs = float(q.w @ (np.maximum(q.interp(pair.a.values), 0.0) ** m
                       * np.abs(q.interp(phi.values)) ** (2 * m))) ** (1.0 / m)
    rhs = _weighted_grad(grid, pair.a.values, phi.values)
    ratio = 0.0 if lhs == 0.0 else lhs / rhs
    return lhs, rhs, ratio


def _q_identity(d: int) -> Fraction:
    # q/2 = 1 + 2/d = 2 - 1/m with m = d/(d-2), checked exactly
    half_q = Fraction(1) + Fraction(2, d)
    if half_q != 2 - Fraction(d - 2, d):
        raise ArithmeticError("exponent identity q/2 = 2 - 1/m failed")
    return 2 * half_q


def space_time_check(trajectory, phi_of_t, params: Params):
    """(int int a phi^q, (int int a |grad phi|^2 + sup_t int phi^2)^(q/2), ratio).

    ``phi_of_t`` is a TestFunction, or a callable t -> TestFunction.
    """
    if len(trajectory) < 2:
        raise ValueError("need at least two snapshots")
    q_exp = float(_q_identity(params.d))
    ts = np.array([s.t for s in trajectory])
    A, G, M = [], [], []
    for st in trajectory:
        phi = phi_of_t(st.t) if callable(phi_of_t) else phi_of_t
        grid = st.f.grid
        if phi.grid is not grid:
            raise DomainError("test function and snapshot grids differ")
        qd = grid.quad(0.0)
        a = qd.interp(st.pair.a.values)
        A.append(float(qd.w @ (a * np.abs(qd.interp(phi.values)) ** q_exp)))
        G.append(float(qd.w @ (a * qd.deriv(phi.values) ** 2)))
        M.append(_weighted_l2(grid, None, phi.values))
    lhs = float(np.trapezoid(A, ts))
    rhs = (float(np.trapezoid(G, ts)) + max(M)) ** (q_exp / 2.0)
    return lhs, rhs, (0.0 if lhs == 0.0 else lhs / rhs)


def _support_ok(phi: TestFunction, R: float, tol: float = 0.0) -> bool:
    outside = phi.grid.r > R
    return not np.any(np.abs(phi.values[outside]) > tol)


def eps_poincare_check(phi: TestFunction, pair: PotentialPair, eps_list, R: float,
                       params: Params) -> EpsReport:
    """Minimal K(eps) with  int h phi^2 <= eps int a |grad phi|^2 + K int a phi^2."""
    if not _support_ok(phi, R):
        raise DomainError(f"test function is not supported in B_{R}")
    eps = np.asarray(eps_list, dtype=float)
    if np.any(eps <= 0):
        raise DomainError("eps must be positive")
    grid = phi.grid
    H = _weighted_l2(grid, pair.h.values, phi.values)
    D = _weighted_grad(grid, pair.a.values, phi.values)
    A = _weighted_l2(grid, pair.a.values, phi.values)
    if A == 0.0:
        K = np.zeros_like(eps)
    else:
        K = np.maximum(0.0, (H - eps * D) / A)
    return EpsReport(eps=eps, K=K, slope=_fit_slope(eps, K), H=H, D=D, A=A)


def _fit_slope(eps, K):
    pos = K > 0
    if pos.sum() < 2:
        return 0.0
    return float(np.polyfit(np.log(eps[pos]), np.log(K[pos]), 1)[0])


def eps_poincare_envelope(reports, lo: float = 1e-3, hi: float = 0.5, num: int = 25):
    """Suite envelope  K_env(eps) = max_phi K_phi(eps)  and its log-log slope.

    The fit uses eps in [lo, hi] * eps_c, with eps_c = max H/D the largest eps
    at which some K is still positive.
    """
    reps = [r for r in reports if r.D > 0]
    if not reps:
        return np.array([]), np.array([]), 0.0
    eps_c = max(r.H / r.D for r in reps)
    eps = eps_c * np.logspace(math.log10(lo), math.log10(hi), num)
    K = np.max([np.maximum(0.0, (r.H - eps * r.D) / r.A) for r in reps], axis=0)
    return eps, K, _fit_slope(eps, K)
