"""Concentration ladder for the potential Hardy constant.

For a radial density f the smallest value of
    int a |grad phi|^2 / int h phi^2
over radial phi is bounded below by (d + gamma) / 4.  As f concentrates to a
point mass the pair (a, h) approaches the pure powers (c r^(2+gamma),
C r^gamma) and the quotient approaches the bound, so the bound is sharp.
The grids are geometric, spanning many decades around the concentration.
"""
import warnings

from isoland.cli import eigen_grid
from isoland.core import Params
from isoland.evolve import gaussian_density
from isoland.inequalities import rayleigh_lambda_iso
from isoland.potentials import compute_potentials

P = Params.make(3, -2.5)
bound = (P.d + P.gamma) / 4.0
print(f"d = {P.d}, gamma = {P.gamma}, lower bound (d+gamma)/4 = {bound:.6f}\n")
print("sigma     nodes   lambda      lambda/bound   residual")
for sigma in (1.0, 0.3, 0.1, 0.03, 0.01):
    grid = eigen_grid(sigma, 1e16, 1.04, P.d)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        pair = compute_potentials(gaussian_density(grid, sigma), P, check_tail=False)
    rep = rayleigh_lambda_iso(pair, grid, P)
    print(f"{sigma:<8g}  {grid.n:5d}   {rep.lambda_iso:.6f}    {rep.lambda_iso / bound:.4f}"
          f"         {rep.residual:.1e}")
