"""Nonlocal coefficients a[f], h[f] for radial densities.

For radial f the convolution with |v|^lam reduces to a one-dimensional
integral

    (f * |.|^lam)(r) = int_0^inf f(s) k_lam(r, s) s^(d-1) ds,

where k_lam(r, s) is omega_{d-1} times the mean of |x - y|^lam over the
sphere |y| = s, |x| = r.  The spherical mean has the closed form

    M(r, s) = max(r,s)^lam 2F1(-lam/2, 1 - d/2 - lam/2; d/2; (min/max)^2),

which reduces to  [(r+s)^mu - |r-s|^mu] / (2 r s mu),  mu = lam + 2,  for d = 3.
The kernel is singular like |r - s|^(lam+d-1) on the diagonal when
lam < 1 - d; those segments are integrated on a geometric mesh towards the
singularity with a Gauss-Jacobi rule on the innermost piece.

Convolutions are linear maps  f -> W f  that are cached per (grid, lam).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.special import gamma as gamma_fn
from scipy.special import hyp2f1, psi, rgamma, roots_jacobi, roots_legendre

from .core import (DomainError, Params, RadialField, RadialGrid, japanese,
                   lp_norm, sphere_area)

__all__ = [
    "PotentialPair",
    "LowerBoundRecord",
    "radial_kernel",
    "sphere_mean",
    "convolution_matrix",
    "convolve_power",
    "compute_potentials",
    "radial_laplacian",
    "delta_identity_residual",
    "a_sup_bound",
    "a_sup_bound_numeric",
    "a_lower_bound",
    "tail_mass",
]

N_FAR = 8       # Gauss points on smooth segments
N_NEAR = 8      # Gauss points per piece of the graded diagonal mesh
NEAR_LEVELS = 14
NEAR_RATIO = 0.25
TAIL_WARN = 1e-8


@dataclass(frozen=True)
class PotentialPair:
    """a[f] and h[f] on the grid of f, with the constants used."""

    a: RadialField
    h: RadialField
    gamma: float
    source_mass: float
    c_a: float = float("nan")
    c_h: float = float("nan")


@dataclass(frozen=True)
class LowerBoundRecord:
    """Lower bound  a[f] >= ell <v>^(2+gamma)  and its pointwise verification."""

    ell: float
    r_concentration: float
    theta: float
    p_used: float
    min_ratio: float
    holds: bool


# -- kernels -----------------------------------------------------------------------
def sphere_mean(lam: float, r, s, d: int = 3):
    """Mean of |x - y|^lam over |y| = s for |x| = r (vectorised)."""
    r, s = np.broadcast_arrays(np.asarray(r, dtype=float), np.asarray(s, dtype=float))
    if lam == 0.0:
        return np.ones(r.shape)
    mx = np.maximum(r, s)
    mn = np.minimum(r, s)
    x = mn / mx
    # 1 - z computed from |r - s| so it keeps relative accuracy on the diagonal
    w1 = np.abs(r - s) * (mx + mn) / (mx * mx)
    return mx ** lam * _f21_mean(lam, d, x * x, w1)


def _f21_mean(lam, d, z, w1):
    a, b, c = -0.5 * lam, 1.0 - 0.5 * d - 0.5 * lam, 0.5 * d
    nu = c - a - b  # = d - 1 + lam > -1
    out = np.empty_like(z)
    lo = w1 > 0.5
    out[lo] = hyp2f1(a, b, c, z[lo])
    hi = ~lo
    if not np.any(hi):
        return out
    w = w1[hi]
    if abs(nu - round(nu)) > 1e-9:
        # z -> 1 - z connection formula; both series have small argument
        A = gamma_fn(c) * gamma_fn(nu) * rgamma(c - a) * rgamma(c - b)
        B = gamma_fn(c) * gamma_fn(-nu) * rgamma(a) * rgamma(b)
        out[hi] = (A * hyp2f1(a, b, 1.0 - nu, w)
                   + B * w ** nu * hyp2f1(c - a, c - b, 1.0 + nu, w))
        return out
    # integer nu (logarithmic case): direct evaluation, asymptote on the diagonal
    vals = hyp2f1(a, b, c, np.minimum(z[hi], 1.0))
    if round(nu) == 0:
        tiny = w < 1e-12
        vals[tiny] = (gamma_fn(c) * rgamma(a) * rgamma(b)
                      * (2.0 * psi(1.0) - psi(a) - psi(b) - np.log(w[tiny])))
    out[hi] = vals
    return out


def radial_kernel(lam: float, r: float, s: float, d: int = 3) -> float:
    """k_lam(r, s): (f * |.|^lam)(r) = int f(s) k_lam(r, s) s^(d-1) ds.

    Uses the closed form for d = 3 and a 64-point Gauss rule in the polar
    angle otherwise (graded towards theta = 0 when r is close to s).
    """
    if lam <= -d:
        raise DomainError(f"|v|^{lam} is not locally integrable in d={d}")
    if not (r > 0 and s > 0):
        raise DomainError("radii must be positive")
    if lam == 0.0:
        return sphere_area(d)
    if d == 3:
        mu = lam + 2.0
        mx, mn = max(r, s), min(r, s)
        if mn / mx < 1e-3:
            # the difference below cancels; the series form is exact here
            return float(4.0 * math.pi * sphere_mean(lam, r, s, 3))
        if mu == 0.0:
            return 2.0 * math.pi / (r * s) * math.log((r + s) / abs(r - s))
        return 2.0 * math.pi * ((r + s) ** mu - abs(r - s) ** mu) / (r * s * mu)
    return _kernel_theta(lam, r, s, d)


def _kernel_theta(lam, r, s, d):
    # omega_{d-2} int_0^pi (r^2 + s^2 - 2 r s cos t)^(lam/2) sin^(d-2) t dt
    x, w = roots_legendre(64)
    theta_c = min(abs(r - s) / math.sqrt(r * s), 1.0)
    # graded breakpoints towards the (near) singularity at theta = 0
    brk = [0.0]
    t = theta_c
    while t < math.pi:
        brk.append(t)
        t *= 4.0
    brk.append(math.pi)
    brk = np.unique(brk)
    total = 0.0
    for lo, hi in zip(brk[:-1], brk[1:]):
        th = 0.5 * (lo + hi) + 0.5 * (hi - lo) * x
        # (r - s)^2 + 4 r s sin^2(t/2) avoids cancellation near t = 0
        dist2 = (r - s) ** 2 + 4.0 * r * s * np.sin(0.5 * th) ** 2
        total += 0.5 * (hi - lo) * np.sum(w * dist2 ** (0.5 * lam) * np.sin(th) ** (d - 2))
    return float(sphere_area(d - 1) * total)


# -- convolution matrix ------------------------------------------------------------
def _segment_table(grid: RadialGrid):
    r = grid.r
    a = np.concatenate([[0.0], r])
    b = np.concatenate([r, [grid.r_max]])
    n = grid.n
    il = np.concatenate([[0], np.arange(n - 1), [n - 2]])
    ir = np.concatenate([[0], np.arange(1, n), [n - 1]])
    return a, b, il, ir


def _interp_coeffs(grid, x, il, ir):
    r = grid.r
    rl, rr = r[il], r[ir]
    const = il == ir
    span = np.where(const, 1.0, rr - rl)
    u = np.where(const, 0.0, (x - rl) / span)
    return 1.0 - u, np.where(const, 0.0, u)


def _near_rule(nu: float):
    """Nodes/weights on [0, 1] of the graded rule for t^nu-type singularities at 0.

    Pieces [q^(j+1), q^j] for j < NEAR_LEVELS carry Gauss-Legendre points; the
    innermost piece [0, q^NEAR_LEVELS] a Gauss-Jacobi rule with weight t^nu.
    The returned weights integrate  G(t) dt, i.e. Jacobi weights are divided
    by t^nu so the rule applies to the full integrand.
    """
    xl, wl = roots_legendre(N_NEAR)
    ts, ws = [], []
    for j in range(NEAR_LEVELS):
        lo, hi = NEAR_RATIO ** (j + 1), NEAR_RATIO ** j
        ts.append(0.5 * (lo + hi) + 0.5 * (hi - lo) * xl)
        ws.append(0.5 * (hi - lo) * wl)
    eps = NEAR_RATIO ** NEAR_LEVELS
    jn = min(nu, 0.0)
    if jn < 0:
        xj, wj = roots_jacobi(N_NEAR, 0.0, jn)
        tj = 0.5 * eps * (1.0 + xj)
        ts.append(tj)
        ws.append(wj * (0.5 * eps) ** (jn + 1) / tj ** jn)
    else:
        ts.append(0.5 * eps * (1.0 + xl))
        ws.append(0.5 * eps * wl)
    return np.concatenate(ts), np.concatenate(ws)


def convolution_matrix(grid: RadialGrid, lam: float, chunk: int = 256) -> np.ndarray:
    """Matrix W with  (W f)_i = (f~ * |.|^lam)(r_i)  for the interpolant f~ of f."""
    d = grid.d
    if lam <= -d:
        raise DomainError(f"|v|^{lam} is not locally integrable in d={d}")
    key = ("conv", float(lam))
    if key in grid._cache:
        return grid._cache[key]
    n = grid.n
    if lam == 0.0:
        W = np.broadcast_to(grid.w, (n, n))
        grid._cache[key] = W
        return W

    omega = grid.omega
    r = grid.r
    sa, sb, sil, sir = _segment_table(grid)
    nseg = len(sa)

    # far-field rule: N_FAR Gauss points on every segment, laid out by segment
    xg, wg = roots_legendre(N_FAR)
    xq = (0.5 * (sa + sb)[:, None] + 0.5 * (sb - sa)[:, None] * xg).ravel()
    wq = (0.5 * (sb - sa)[:, None] * wg).ravel() * xq ** (d - 1) * omega
    qseg = np.repeat(np.arange(nseg), N_FAR)
    qcl, qcr = _interp_coeffs(grid, xq, sil[qseg], sir[qseg])
    P = sparse.csr_matrix(
        (np.concatenate([qcl, qcr]),
         (np.concatenate([np.arange(len(xq))] * 2),
          np.concatenate([sil[qseg], sir[qseg]]))),
        shape=(len(xq), n),
    )

    W = np.empty((n, n))
    for lo in range(0, n, chunk):
        rows = np.arange(lo, min(lo + chunk, n))
        B = sphere_mean(lam, r[rows, None], xq[None, :], d) * wq
        # drop the two segments touching r_i: segments i and i+1
        for k in range(2):
            cols = (rows + k)[:, None] * N_FAR + np.arange(N_FAR)
            B[rows[:, None] - lo, cols] = 0.0
        W[rows] = (P.T @ B.T).T

    # diagonal segments: graded rule towards s = r_i from both sides
    tn, wn = _near_rule(lam + d - 1.0)
    for k in (0, 1):
        seg = np.arange(n) + k
        a_, b_ = sa[seg], sb[seg]
        length = b_ - a_
        if k == 0:  # segment ends at r_i: s = r_i - t L
            s = r[:, None] - tn[None, :] * length[:, None]
        else:       # segment starts at r_i
            s = r[:, None] + tn[None, :] * length[:, None]
        wts = wn[None, :] * length[:, None] * s ** (d - 1) * omega
        vals = sphere_mean(lam, r[:, None], s, d) * wts
        il = np.broadcast_to(sil[seg][:, None], s.shape)
        ir = np.broadcast_to(sir[seg][:, None], s.shape)
        cl, cr = _interp_coeffs(grid, s, il, ir)
        rows = np.broadcast_to(np.arange(n)[:, None], s.shape)
        np.add.at(W, (rows, il), vals * cl)
        np.add.at(W, (rows, ir), vals * cr)

    W.setflags(write=False)
    grid._cache[key] = W
    return W


def tail_mass(f: RadialField, frac: float = 0.9) -> float:
    """Mass of f outside the ball of radius frac * r_max."""
    g = f.grid
    return float((g.w - g.weights(0.0, frac * g.r_max)) @ np.abs(f.values))


def convolve_power(f: RadialField, lam: float, check_tail: bool = True) -> RadialField:
    """f * |.|^lam on the grid of f, for lam in (-d, 0]."""
    d = f.grid.d
    if lam <= -d:
        raise DomainError(f"|v|^{lam} is not locally integrable in d={d}")
    if lam > 0:
        raise DomainError(f"convolution exponent must be <= 0, got {lam}")
    if check_tail:
        tm = tail_mass(f)
        total = float(f.grid.w @ np.abs(f.values))
        if total > 0 and tm > TAIL_WARN * total:
            warnings.warn(f"tail mass {tm:.2e} beyond 0.9 r_max: potentials near the "
                          "boundary are truncated", RuntimeWarning, stacklevel=2)
    W = convolution_matrix(f.grid, lam)
    vals = W @ f.values
    return RadialField(f.grid, vals, nonneg=f.nonneg and np.all(f.values >= 0))


def compute_potentials(f: RadialField, params: Params, check_tail: bool = True) -> PotentialPair:
    """a[f] = c (f * |v|^(2+gamma)),  h[f] = C(d, d+gamma) (f * |v|^gamma).

    At gamma = -d the Riesz potential of order zero is the identity, so h = f,
    and a uses the unit constant.
    """
    if f.grid.d != params.d:
        raise DomainError(f"grid dimension {f.grid.d} differs from params d={params.d}")
    g = params.gamma
    ca, ch = params.c_coupling, params.riesz_h
    a = ca * convolve_power(f, 2.0 + g, check_tail).values
    if params.coulomb:
        h = f.values.copy()
    else:
        h = ch * convolve_power(f, g, check_tail=False).values
    mass = float(f.grid.w @ f.values)
    return PotentialPair(a=RadialField(f.grid, a), h=RadialField(f.grid, h),
                         gamma=g, source_mass=mass, c_a=ca, c_h=ch)


# -- identity check ----------------------------------------------------------------
def radial_laplacian(values, grid: RadialGrid) -> np.ndarray:
    """g'' + (d-1) g'/r by centred three-point differences; NaN at the end nodes."""
    g = np.asarray(values, dtype=float)
    r = grid.r
    hm = r[1:-1] - r[:-2]
    hp = r[2:] - r[1:-1]
    gm, g0, gp = g[:-2], g[1:-1], g[2:]
    d2 = 2.0 * (hm * gp - (hm + hp) * g0 + hp * gm) / (hm * hp * (hm + hp))
    d1 = (hm ** 2 * gp + (hp ** 2 - hm ** 2) * g0 - hp ** 2 * gm) / (hm * hp * (hm + hp))
    out = np.full_like(g, np.nan)
    out[1:-1] = d2 + (grid.d - 1) * d1 / r[1:-1]
    return out


def delta_identity_residual(pair: PotentialPair, f: RadialField, params: Params,
                            r_cut: float | None = None) -> float:
    """max |Lap a - (2+gamma) h| / max |(2+gamma) h| over interior nodes.

    With the positive normalisation of a[f] the identity holds with the sign
    as written, Lap a = (2+gamma) h (both sides are <= 0).
    ``r_cut`` restricts the comparison to nodes with r < r_cut (default
    0.9 r_max, away from the truncation boundary).
    """
    grid = f.grid
    if params.gamma == -2.0:
        return 0.0
    r_cut = 0.9 * grid.r_max if r_cut is None else r_cut
    inner = np.zeros(grid.n, bool)
    inner[1:-1] = True
    inner &= grid.r < r_cut
    if inner.sum() < 32:
        raise DomainError(f"grid too coarse: {inner.sum()} interior nodes (need 32)")
    target = (2.0 + params.gamma) * pair.h.values
    scale = np.abs(target[inner]).max()
    if scale == 0.0:
        return 0.0
    lap = radial_laplacian(pair.a.values, grid)
    return float(np.abs(lap[inner] - target[inner]).max() / scale)


# -- bounds on a -------------------------------------------------------------------
def _conj(p):
    return 1.0 if p == math.inf else p / (p - 1.0)


def a_sup_bound(f: RadialField, p: float, params: Params) -> float:
    """Upper bound  C ||f||_p^theta ||f||_1^(1-theta)  for sup a[f].

    Splits the convolution at radius s, applies Hoelder on B_s and the mass
    bound outside, and minimises  A s^e1 + B s^(-kappa)  in closed form.
    """
    d, g = params.d, params.gamma
    if not p > params.p_min_linfty:
        raise DomainError(f"bound needs p > d/(d+gamma+2) = {params.p_min_linfty}, got {p}")
    c = params.c_coupling
    n1 = lp_norm(f, 1.0)
    if n1 == 0.0:
        return 0.0
    kappa = -(2.0 + g)
    if kappa == 0.0:
        return c * n1
    np_ = lp_norm(f, p)
    pc = _conj(p)
    omega = sphere_area(d)
    beta = -kappa * pc
    e1 = d / pc - kappa
    theta = kappa * pc / d
    const = (omega / (beta + d)) ** (theta / pc) * (kappa / e1) ** (-theta) * (d / pc) / e1
    return c * const * np_ ** theta * n1 ** (1.0 - theta)


def a_sup_bound_numeric(f: RadialField, p: float, params: Params, num: int = 4001) -> float:
    """Same bound minimised over s on a logarithmic grid (cross-check)."""
    d, g = params.d, params.gamma
    c = params.c_coupling
    n1 = lp_norm(f, 1.0)
    kappa = -(2.0 + g)
    if kappa == 0.0:
        return c * n1
    np_ = lp_norm(f, p)
    pc = _conj(p)
    beta = -kappa * pc
    s = np.logspace(-12, 12, num)
    ball = (sphere_area(d) * s ** (beta + d) / (beta + d)) ** (1.0 / pc)
    return float(np.min(c * np_ * ball + c * s ** (-kappa) * n1))


def a_lower_bound(f: RadialField, params: Params, pair: PotentialPair | None = None,
                  p: float = math.inf) -> LowerBoundRecord:
    """ell = (1/2) c ||f||_1 r^(2+gamma) with r = 2 ||f||_{L^1_2} / ||f||_1.

    ||f||_{L^1_2} = int f <v>^2 dv.  The pointwise inequality
    a(r_i) >= ell <r_i>^(2+gamma) is checked on the grid.
    """
    mass = lp_norm(f, 1.0)
    if mass <= 0.0:
        raise DomainError("lower bound needs positive mass")
    grid = f.grid
    m12 = float(grid.weights(0.0) @ f.values + grid.weights(2.0) @ f.values)
    rc = 2.0 * m12 / mass
    g = params.gamma
    ell = 0.5 * params.c_coupling * mass * rc ** (2.0 + g)
    theta = abs(2.0 + g) * _conj(p) / params.d
    if pair is None:
        pair = compute_potentials(f, params, check_tail=False)
    ratio = pair.a.values / (ell * japanese(grid.r) ** (2.0 + g))
    mr = float(ratio.min())
    return LowerBoundRecord(ell=ell, r_concentration=rc, theta=theta, p_used=p,
                            min_ratio=mr, holds=bool(mr >= 1.0))
