"""Parameters, radial grids, quadrature and closed-form constants.

A radial function g(|v|) on R^d is stored by its samples at cell-centred nodes
r_0 < r_1 < ... < r_{n-1} of a (possibly graded) partition of [0, r_max].
Every integral in the package is taken of the piecewise-linear interpolant
of those samples:

* on [0, r_0] the interpolant is constant (even extension, g'(0) = 0);
* on [r_{i-1}, r_i] it is linear;
* on [r_{n-1}, r_max] it is the linear extrapolation of the last two nodes.

Because the interpolant is fixed, quadrature weights against r^(d-1+k) dr
can be made exact for it, also on graded grids.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.special import gammaln, roots_jacobi, roots_legendre

__all__ = [
    "DomainError",
    "Params",
    "RadialGrid",
    "RadialField",
    "Quadrature",
    "riesz_constant",
    "coupling_constant",
    "gamma_star",
    "gamma_star_bisect",
    "sphere_area",
    "make_grid",
    "integrate_radial",
    "lp_norm",
    "japanese",
]

# Gauss-Legendre points per interpolation segment; with 12 points the rule is
# exact to rounding for the polynomial-times-power integrands used here.
N_GAUSS = 12


class DomainError(ValueError):
    """An argument lies outside the domain where a quantity is defined."""


def sphere_area(d: int) -> float:
    """Surface area of the unit sphere S^{d-1} in R^d."""
    return 2.0 * math.pi ** (d / 2) / math.gamma(d / 2)


def japanese(r):
    """<v> = sqrt(1 + |v|^2)."""
    return np.sqrt(1.0 + np.asarray(r, dtype=float) ** 2)


def riesz_constant(d: int, alpha: float) -> float:
    """Normalisation C(d, alpha) of the Riesz potential (-Delta)^(-alpha/2).

    (-Delta)^(-alpha/2) f = C(d, alpha) * (f * |v|^(alpha - d)).

    Raises
    ------
    DomainError
        If alpha is not in (0, d).
    """
    if not 0.0 < alpha < d:
        raise DomainError(f"C(d, alpha) needs 0 < alpha < d, got alpha={alpha}, d={d}")
    logc = (-0.5 * d * math.log(math.pi) - alpha * math.log(2.0)
            + gammaln((d - alpha) / 2.0) - gammaln(alpha / 2.0))
    return math.exp(logc)


def coupling_constant(d: int, gamma: float) -> float:
    """c_{d,gamma} = C(d, d+gamma) / (d+gamma), the positive normalisation of a[f]."""
    if d < 3:
        raise DomainError(f"dimension must be >= 3, got {d}")
    if not -d < gamma <= -2.0:
        raise DomainError(f"c_(d,gamma) needs -d < gamma <= -2, got gamma={gamma}")
    return riesz_constant(d, d + gamma) / (d + gamma)


def gamma_star(d: int) -> float:
    """Closed form of the threshold exponent gamma_*, cross-checked by bisection."""
    if d < 3:
        raise DomainError(f"dimension must be >= 3, got {d}")
    closed = -1.0 - 1.5 * d + 0.5 * math.sqrt(5 * d * d - 4 * d + 4)
    root = gamma_star_bisect(d)
    if abs(closed - root) > 1e-10:
        raise ArithmeticError(f"gamma_* mismatch for d={d}: {closed} vs {root}")
    return closed


def gamma_star_bisect(d: int, tol: float = 1e-13) -> float:
    """Root of d/(d+2+g) - (d+g)/(-g-2) on (-1-d/2, -2) by bisection."""
    def g(x):
        return d / (d + 2.0 + x) - (d + x) / (-x - 2.0)

    lo, hi = -1.0 - d / 2.0, -2.0 - 1e-15
    # g(lo) > 0 (second term vanishes), g -> -inf as x -> -2
    glo = g(lo)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        gm = g(mid)
        if (gm > 0) == (glo > 0):
            lo, glo = mid, gm
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class Params:
    """Physical parameters of the equation and the exponents derived from them.

    Build with :meth:`Params.make`; the derived fields are filled in there.
    At gamma = -d the coupling constant degenerates and the unit constant of
    the quadratic-reaction variant  f_t = a[f] Lap f + alpha f^2  is used.
    """

    d: int
    gamma: float
    alpha: float
    c_coupling: float
    m_exp: float
    q_exp: float
    p_max_monotone: float
    p_min_linfty: float
    gamma_star: float

    @classmethod
    def make(cls, d: int, gamma: float, alpha: float = 1.0) -> "Params":
        if int(d) != d or d < 3:
            raise DomainError(f"dimension must be an integer >= 3, got {d}")
        d = int(d)
        if not -d <= gamma <= -2.0:
            raise DomainError(f"gamma must lie in [-d, -2] = [{-d}, -2], got {gamma}")
        if not 0.0 <= alpha <= 1.0:
            raise DomainError(f"alpha must lie in [0, 1], got {alpha}")
        c = 1.0 if gamma == -d else coupling_constant(d, gamma)
        p_max = math.inf if gamma == -2.0 else (d + gamma) / (-2.0 - gamma)
        return cls(
            d=d,
            gamma=float(gamma),
            alpha=float(alpha),
            c_coupling=c,
            m_exp=d / (d - 2.0),
            q_exp=2.0 * (1.0 + 2.0 / d),
            p_max_monotone=p_max,
            p_min_linfty=d / (d + gamma + 2.0),
            gamma_star=gamma_star(d),
        )

    @property
    def coulomb(self) -> bool:
        return self.gamma == -self.d

    @property
    def riesz_h(self) -> float:
        """C(d, d+gamma), the constant in front of h[f] (1 at gamma = -d, where h = f)."""
        return 1.0 if self.coulomb else riesz_constant(self.d, self.d + self.gamma)

    @property
    def in_linfty_range(self) -> bool:
        """True when gamma lies in (gamma_*, -2], the range with an L^infinity bound."""
        return self.gamma > self.gamma_star

    def admissible_p_range(self):
        """Interval [1, (d+gamma)/(-2-gamma)] of monotone L^p norms, or None if empty."""
        if self.p_max_monotone < 1.0:
            return None
        return (1.0, self.p_max_monotone)


@dataclass(frozen=True)
class Quadrature:
    """Quadrature points for integrals of piecewise-linear interpolants.

    ``w`` already contains the measure  omega_{d-1} r^(d-1+power) dr.  Point j
    interpolates from nodes ``il[j]`` and ``ir[j]`` with coefficients
    ``cl[j]``/``cr[j]``; ``dl``/``dr`` are the matching derivative coefficients.
    """

    x: np.ndarray
    w: np.ndarray
    il: np.ndarray
    ir: np.ndarray
    cl: np.ndarray
    cr: np.ndarray
    dl: np.ndarray
    dr: np.ndarray
    seg: np.ndarray

    def interp(self, values):
        values = np.asarray(values, dtype=float)
        return self.cl * values[..., self.il] + self.cr * values[..., self.ir]

    def deriv(self, values):
        values = np.asarray(values, dtype=float)
        return self.dl * values[..., self.il] + self.dr * values[..., self.ir]

    def nodal(self, n: int, pointwise=None) -> np.ndarray:
        """Fold sum_j w_j p_j (cl, cr) into nodal weights of length n."""
        wp = self.w if pointwise is None else self.w * pointwise
        out = np.zeros(n)
        np.add.at(out, self.il, wp * self.cl)
        np.add.at(out, self.ir, wp * self.cr)
        return out


@dataclass(frozen=True, eq=False)
class RadialGrid:
    """Cell-centred radial grid on [0, r_max] with exact interpolant quadrature.

    ``w`` are the nodal weights for  int_{|v| < r_max} g(|v|) dv  (they include
    the sphere area).  Use :func:`make_grid` to construct one.
    """

    d: int
    edges: np.ndarray
    stretch: object = "uniform"
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def r(self) -> np.ndarray:
        return self._nodes

    @cached_property
    def _nodes(self):
        e = self.edges
        return 0.5 * (e[1:] + e[:-1])

    @property
    def n(self) -> int:
        return len(self.edges) - 1

    @property
    def r_max(self) -> float:
        return float(self.edges[-1])

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)

    @property
    def omega(self) -> float:
        return sphere_area(self.d)

    @property
    def w(self) -> np.ndarray:
        return self.weights(0.0)

    def ball_volume(self, R=None) -> float:
        R = self.r_max if R is None else R
        return self.omega * R ** self.d / self.d

    # -- segment structure of the interpolant ------------------------------------
    @cached_property
    def _segments(self):
        """(a, b, node_left, node_right, r_left, r_right) for the n+1 segments."""
        r, n = self.r, self.n
        a = np.concatenate([[0.0], r])
        b = np.concatenate([r, [self.r_max]])
        il = np.concatenate([[0], np.arange(n - 1), [n - 2]])
        ir = np.concatenate([[0], np.arange(1, n), [n - 1]])
        return a, b, il, ir

    def quad(self, power: float = 0.0, upto: float | None = None) -> Quadrature:
        """Quadrature for  omega int_0^upto (interpolant expr) r^(d-1+power) dr."""
        key = ("quad", float(power), None if upto is None else float(upto))
        if key in self._cache:
            return self._cache[key]
        p = self.d - 1 + power
        if p <= -1:
            raise DomainError(f"r^{p} is not integrable at the origin (power={power})")
        a, b, il, ir = self._segments
        if upto is not None:
            upto = min(float(upto), self.r_max)
            b = np.minimum(b, upto)
            keep = b > a
            a, b, il, ir = a[keep], b[keep], il[keep], ir[keep]
        seg_ids = np.flatnonzero(np.ones(len(a), bool))
        r = self.r

        xs, ws, segs = [], [], []
        # segment 0 touches the origin: Gauss-Jacobi absorbs r^p exactly
        if a[0] == 0.0:
            t, wt = roots_jacobi(N_GAUSS, 0.0, p)
            half = 0.5 * b[0]
            xs.append(half * (1.0 + t))
            ws.append(wt * half ** (p + 1))
            segs.append(np.zeros(N_GAUSS, int))
            start = 1
        else:
            start = 0
        t, wt = roots_legendre(N_GAUSS)
        aa, bb = a[start:, None], b[start:, None]
        x = 0.5 * (aa + bb) + 0.5 * (bb - aa) * t
        xs.append(x.ravel())
        ws.append((0.5 * (bb - aa) * wt * x ** p).ravel())
        segs.append(np.repeat(seg_ids[start:], N_GAUSS))

        x = np.concatenate(xs)
        w = np.concatenate(ws) * self.omega
        seg = np.concatenate(segs)
        jl, jr = il[seg], ir[seg]
        rl, rr = r[jl], r[jr]
        const = jl == jr
        span = np.where(const, 1.0, rr - rl)
        u = np.where(const, 0.0, (x - rl) / span)
        cl = 1.0 - u
        cr = np.where(const, 0.0, u)
        dl = np.where(const, 0.0, -1.0 / span)
        dr = np.where(const, 0.0, 1.0 / span)
        q = Quadrature(x=x, w=w, il=jl, ir=jr, cl=cl, cr=cr, dl=dl, dr=dr, seg=seg)
        self._cache[key] = q
        return q

    def weights(self, power: float = 0.0, upto: float | None = None) -> np.ndarray:
        """Nodal weights w with  sum w_i g_i = omega int_0^upto g~(r) r^(d-1+power) dr."""
        key = ("w", float(power), None if upto is None else float(upto))
        if key not in self._cache:
            self._cache[key] = self.quad(power, upto).nodal(self.n)
        return self._cache[key]

    def interpolate(self, values, x) -> np.ndarray:
        """Evaluate the interpolant of nodal ``values`` at radii ``x``."""
        values = np.asarray(values, dtype=float)
        x = np.asarray(x, dtype=float)
        r = self.r
        out = np.interp(x, r, values)
        # np.interp clamps beyond r_{n-1}; extrapolate linearly like the quadrature
        hi = x > r[-1]
        if np.any(hi):
            slope = (values[-1] - values[-2]) / (r[-1] - r[-2])
            out[hi] = values[-1] + slope * (x[hi] - r[-1])
        return out

    @cached_property
    def interfaces(self):
        """Control-volume interfaces used by the finite-volume operators.

        Returns (b, area, delta): interface radii enclosing exactly the
        cumulative nodal volume, their sphere areas, and node spacing across
        each interface.  The last entry is the outer boundary r_max, where
        delta is the distance from the last node to r_max.
        """
        cum = np.cumsum(self.w)
        b = (cum * self.d / self.omega) ** (1.0 / self.d)
        b[-1] = self.r_max
        area = self.omega * b ** (self.d - 1)
        delta = np.concatenate([np.diff(self.r), [self.r_max - self.r[-1]]])
        return b, area, delta

    def describe(self) -> dict:
        return {"d": self.d, "r_max": self.r_max, "n": self.n, "stretch": self.stretch}


def make_grid(r_max: float, n: int, stretch="uniform", d: int = 3) -> RadialGrid:
    """Radial grid of ``n`` cells on [0, r_max].

    Parameters
    ----------
    r_max : float
        Outer radius (Dirichlet boundary for the solver).
    n : int
        Number of cells (= nodes), at least 16.
    stretch : "uniform" or float
        A float ``q > 1`` gives geometric grading: each cell is ``q`` times
        wider than the previous one, so nodes cluster near the origin.
    d : int
        Dimension of the ambient space.
    """
    if not r_max > 0:
        raise DomainError(f"r_max must be positive, got {r_max}")
    if int(n) != n or n < 16:
        raise DomainError(f"need at least 16 cells, got n={n}")
    if d < 3:
        raise DomainError(f"dimension must be >= 3, got {d}")
    n = int(n)
    if isinstance(stretch, str):
        if stretch != "uniform":
            raise DomainError(f"unknown grid stretch {stretch!r}")
        edges = np.linspace(0.0, r_max, n + 1)
    else:
        q = float(stretch)
        if q == 1.0:
            edges = np.linspace(0.0, r_max, n + 1)
        elif q > 1.0:
            k = np.arange(n + 1)
            # cumulative widths h0 q^j, normalised to end at r_max
            edges = r_max * np.expm1(k * math.log(q)) / math.expm1(n * math.log(q))
        else:
            raise DomainError(f"geometric ratio must be >= 1, got {q}")
    edges[-1] = r_max
    return RadialGrid(d=int(d), edges=edges, stretch=stretch)


def geometric_grid(r_max: float, first_cell: float, ratio: float, d: int = 3) -> RadialGrid:
    """Geometric grid with a prescribed first cell width (number of cells derived)."""
    n = math.ceil(math.log1p(r_max * (ratio - 1.0) / first_cell) / math.log(ratio))
    return make_grid(r_max, max(n, 16), ratio, d)


@dataclass(frozen=True, eq=False)
class RadialField:
    """Samples of a radial function on a grid.

    With ``nonneg`` set, values in [-tol_neg * max|values|, 0) are clamped to
    zero and anything more negative is rejected.
    """

    grid: RadialGrid
    values: np.ndarray
    nonneg: bool = True
    tol_neg: float = 1e-10

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.grid.n,):
            raise ValueError(f"expected {self.grid.n} samples, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("field contains non-finite values")
        if self.nonneg and v.size and v.min() < 0:
            scale = max(np.abs(v).max(), 1e-300)
            if v.min() < -self.tol_neg * scale:
                raise ValueError(f"density has negative values down to {v.min():.3e}")
            v = np.maximum(v, 0.0)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def r(self):
        return self.grid.r

    def with_values(self, values, nonneg=None) -> "RadialField":
        return RadialField(self.grid, values, self.nonneg if nonneg is None else nonneg,
                           self.tol_neg)

    def scaled(self, c: float) -> "RadialField":
        return self.with_values(c * self.values, nonneg=self.nonneg and c >= 0)

    @classmethod
    def from_function(cls, grid: RadialGrid, func, nonneg=True) -> "RadialField":
        return cls(grid, func(grid.r), nonneg)


def integrate_radial(field: RadialField, k: float = 0.0) -> float:
    """int g(|v|) |v|^k dv over the ball of radius r_max."""
    if k + field.grid.d - 1 <= -1:
        raise DomainError(f"|v|^{k} is not integrable at the origin in d={field.grid.d}")
    return float(field.grid.weights(k) @ field.values)


def lp_norm(field: RadialField, p: float) -> float:
    """(int |g|^p dv)^(1/p); p = inf gives max |g|."""
    if p == math.inf:
        return float(np.abs(field.values).max())
    if p < 1:
        raise DomainError(f"L^p norm needs p >= 1, got {p}")
    s = float(field.grid.w @ np.abs(field.values) ** p)
    return s ** (1.0 / p)
