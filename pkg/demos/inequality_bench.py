"""Inequality bench: Hardy-type, Sobolev-type and eps-Poincare checks.

A single density (a Gaussian) fixes the weights a and h.  We draw random
smooth radial test functions and report the worst observed ratios, the
cube-average functional that controls the two-weight inequalities, and the
minimal eps-Poincare constant K(eps).
"""
import warnings

import numpy as np

from isoland.core import Params, make_grid
from isoland.evolve import gaussian_density
from isoland.inequalities import (Ball, cube_average_sup, eps_poincare_check,
                                  eps_poincare_envelope, hardy_check, potential_hardy_check,
                                  random_cubes, random_smooth_test, sigma_slope,
                                  weighted_quotient, weighted_sobolev_check)
from isoland.potentials import compute_potentials

P = Params.make(3, -2.4)
g = make_grid(10, 1024)
with warnings.catch_warnings():
    warnings.simplefilter("ignore", RuntimeWarning)
    pair = compute_potentials(gaussian_density(g), P, check_tail=False)
rng = np.random.default_rng(0)
tests = [random_smooth_test(g, rng, 2.0) for _ in range(50)]

worst = {"hardy": 0.0, "potential hardy": 0.0, "sobolev": 0.0}
for phi in tests:
    lhs, rhs = hardy_check(phi, P.gamma, P.d)
    worst["hardy"] = max(worst["hardy"], lhs / rhs)
    lhs, rhs = potential_hardy_check(phi, pair, P)
    worst["potential hardy"] = max(worst["potential hardy"], lhs / rhs)
    worst["sobolev"] = max(worst["sobolev"], weighted_sobolev_check(phi, pair, P)[2])
for k, v in worst.items():
    print(f"largest lhs/rhs, {k:16s}: {v:.4f}")

balls = [Ball(np.zeros(3), r) for r in (0.25, 0.5, 1.0, 2.0)]
print(f"\nweighted quotient over origin balls: {weighted_quotient(pair, balls):.4f}")
cubes = random_cubes(rng, 100, 3, 4.0)
print(f"cube-average sup (s = 1.5): {cube_average_sup(pair, P, cubes):.4f}")
rep = sigma_slope(pair, P, s=1.6)
print(f"log-log slope of sigma^2 against cube side: {rep.slope_estimate:.3f} "
      f"(eta = {rep.eta:.3f})")

eps = np.logspace(-3, 1, 9)
reports = [eps_poincare_check(phi, pair, eps, 2.0, P) for phi in tests]
e, K, slope = eps_poincare_envelope(reports)
print(f"\neps-Poincare envelope: K({e[0]:.2e}) = {K[0]:.3f}, K({e[-1]:.2e}) = {K[-1]:.3f}, "
      f"log-log slope {slope:.3f}")
