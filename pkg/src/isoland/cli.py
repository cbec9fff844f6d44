"""Command line front end: ``isoland <command> [--config FILE] [--out DIR] [--seed N]``.

Commands
--------
simulate    integrate the radial equation, write monitors.csv and snapshots
verify      run the inequality suites on a density, write inequalities.csv
eigen       smallest Rayleigh quotient over a ladder of concentrated Gaussians
moser       E_n cascade on a stored simulate trajectory
gamma-star  threshold exponent and admissible exponent ranges for a dimension

Exit codes: 0 success, 1 configuration error, 2 numerical failure,
3 invariant violation.  ISOLAND_THREADS caps BLAS/OpenMP threads.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_INVARIANT = 0, 1, 2, 3
_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


class _Parser(argparse.ArgumentParser):
    # usage errors are configuration errors (argparse would exit 2)
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _apply_threads():
    val = os.environ.get("ISOLAND_THREADS")
    if val is None:
        return None
    try:
        n = int(val)
        if n < 1:
            raise ValueError
    except ValueError:
        from .config import ConfigError
        raise ConfigError("ISOLAND_THREADS", f"must be a positive integer, got {val!r}")
    for var in _THREAD_VARS:
        os.environ[var] = str(n)
    return n


def _key_epilog():
    from .config import KEY_HELP
    width = max(map(len, KEY_HELP))
    lines = ["config keys (flat 'key = value' file, '#' comments):"]
    lines += [f"  {k:<{width}}  {v}" for k, v in KEY_HELP.items()]
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="key = value configuration file")
    common.add_argument("--out", help="output directory (default: output_dir from config)")
    common.add_argument("--seed", type=int, help="RNG seed (non-negative integer)")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key; repeatable")
    fmt = argparse.RawDescriptionHelpFormatter
    parser = _Parser(prog="isoland", description=__doc__.split("\n\n")[0],
                     epilog=_key_epilog(), formatter_class=fmt)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, text in [("simulate", "integrate the radial equation"),
                       ("verify", "inequality suites on a density"),
                       ("eigen", "Rayleigh quotient over a concentration ladder"),
                       ("moser", "Moser cascade on a stored trajectory")]:
        sub.add_parser(name, parents=[common], help=text, description=text,
                       epilog=_key_epilog(), formatter_class=fmt)
    gs = sub.add_parser("gamma-star", parents=[common], help="threshold exponent table")
    gs.add_argument("dimension", type=int, nargs="?", help="space dimension d (>= 3)")
    return parser


def _load(args):
    from .config import ConfigError, RunConfig, load_config, parse_config, dump_config

    cfg = load_config(args.config) if args.config else RunConfig()
    if args.set:
        text = dump_config(cfg)
        for item in args.set:
            if "=" not in item:
                raise ConfigError("--set", f"expected KEY=VALUE, got {item!r}")
            text += item + "\n"
        cfg = parse_config(text)
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("seed", f"must be non-negative, got {args.seed}")
        cfg = cfg.replace(seed=args.seed)
    if args.out:
        cfg = cfg.replace(output_dir=args.out)
    return cfg.validate()


def _manifest(out, cfg, command, started, outcome, checks, constants, files, error=None):
    from . import __version__
    from .config import dump_config
    from .core import gamma_star
    from .io import write_manifest

    payload = {
        "command": command,
        "tool_version": __version__,
        "wall_clock_seconds": time.time() - started,
        "config": dump_config(cfg),
        "outcome": outcome,
        "checks": checks,
        "constants": constants,
    }
    if error is not None:
        payload["error"] = error
    if cfg.dimension >= 3:
        gs = gamma_star(cfg.dimension)
        payload["gamma_star"] = gs
        payload["gamma_below_gamma_star"] = bool(cfg.gamma <= gs)
        if cfg.gamma <= gs:
            payload["range_flag"] = ("outside the gamma range of the L-infinity bound "
                                     f"(gamma={cfg.gamma} <= gamma_star={gs:.6f})")
    Path(out).mkdir(parents=True, exist_ok=True)
    return write_manifest(out, payload, files)


# -- simulate ----------------------------------------------------------------------
def cmd_simulate(cfg):
    from .core import Params
    from .evolve import lp_monotonicity_report, run, second_moment_residual
    from .io import write_csv, write_monitors_csv, write_snapshot

    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    params = Params.make(cfg.dimension, cfg.gamma, cfg.alpha)
    traj, mons = run(cfg)
    files = [write_monitors_csv(out / "monitors.csv", mons, cfg.p_list)]
    for k, st in enumerate(traj):
        files += write_snapshot(out / "snapshots" / f"snap_{k:04d}", st)
    m0 = mons[0].mass
    drift = max(abs(m.mass / m0 - 1.0) for m in mons) if m0 > 0 else 0.0
    checks = {"mass_drift": drift}
    if len(mons) >= 3 and m0 > 0:
        checks["second_moment_residual"] = second_moment_residual(mons)
    rows = []
    for p in cfg.p_list:
        rep = lp_monotonicity_report(mons, p, params, cfg.tol_mono)
        checks[f"lp_{p:g}"] = {"label": rep.label, "max_rel_increase": rep.max_rel_increase,
                               "flagged": len(rep.flagged), "ok": rep.ok}
        rows.append([p, rep.max_rel_increase, len(rep.flagged), int(rep.in_range),
                     rep.dissipation_factor])
    files.append(write_csv(out / "lp_report.csv",
                           ["p", "max_rel_increase", "flagged", "in_range",
                            "dissipation_factor"], rows))
    constants = {"ell_min": min(m.ell for m in mons),
                 "a_min_ratio_min": min(m.a_min_ratio for m in mons),
                 "sup_f_max": max(m.sup_f for m in mons)}
    print(f"simulate: {len(traj)} snapshots, {len(mons)} monitor rows, "
          f"mass drift {drift:.3e} -> {out}")
    return EXIT_OK, checks, constants, files


# -- verify ------------------------------------------------------------------------
def _verify_density(cfg):
    from .core import make_grid
    from .evolve import initial_field
    from .io import read_snapshot

    if cfg.snapshot:
        _, f = read_snapshot(cfg.snapshot)
        return f
    grid = make_grid(cfg.r_max, cfg.n_cells, cfg.stretch(), cfg.dimension)
    return initial_field(grid, cfg.initial, cfg.mass)


def cmd_verify(cfg):
    import numpy as np

    from .core import Params
    from .inequalities import (Ball, bump_test, cube_average_sup, eps_poincare_check,
                               eps_poincare_envelope, gaussian_test, hardy_check,
                               potential_hardy_check, random_cubes, random_smooth_test,
                               rayleigh_lambda_iso, weighted_quotient,
                               weighted_sobolev_check)
    from .io import write_csv
    from .potentials import compute_potentials

    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    params = Params.make(cfg.dimension, cfg.gamma, cfg.alpha)
    f = _verify_density(cfg)
    grid = f.grid
    pair = compute_potentials(f, params, check_tail=False)
    rng = np.random.default_rng(cfg.seed)
    R = min(2.0, 0.5 * grid.r_max)
    tests = [gaussian_test(grid, 1.0, R), bump_test(grid, R)]
    tests += [random_smooth_test(grid, rng, R) for _ in range(cfg.suite_size)]
    trivial = not np.any(f.values > 0)
    rows, violations = [], 0
    worst = {"hardy": 0.0, "potential_hardy": 0.0, "sobolev": 0.0}
    eps_reports = []
    eps_list = np.logspace(-3, 1, 9)
    for i, phi in enumerate(tests):
        checks = [("hardy", *hardy_check(phi, params.gamma, params.d), True)]
        if params.gamma > -params.d:
            checks.append(("potential_hardy", *potential_hardy_check(phi, pair, params), True))
        lhs, rhs, _ = weighted_sobolev_check(phi, pair, params)
        checks.append(("sobolev", lhs, rhs, False))
        for name, lhs, rhs, backed in checks:
            bad = backed and lhs > rhs * (1.0 + 1e-8) and not (lhs == 0.0 and rhs == 0.0)
            violations += int(bad)
            ratio = lhs / rhs if rhs > 0 else 0.0
            worst[name] = max(worst[name], ratio)
            rows.append([name, i, phi.family, lhs, rhs, ratio, int(bad)])
        if not trivial:
            rep = eps_poincare_check(phi, pair, eps_list, R, params)
            eps_reports.append(rep)
    files = [write_csv(out / "inequalities.csv",
                       ["check", "index", "family", "lhs", "rhs", "ratio", "violated"], rows)]
    constants = {"max_ratio_" + k: v for k, v in worst.items()}
    checks = {"violations": violations, "trivial_density": bool(trivial),
              "tests": len(tests)}
    if not trivial:
        bound = (params.d + params.gamma) / 4.0
        eig = rayleigh_lambda_iso(pair, grid, params)
        checks["lambda_iso"] = {"value": eig.lambda_iso, "lower_bound": bound,
                                "residual": eig.residual, "ok": eig.lambda_iso >= bound - 1e-6}
        if eig.lambda_iso < bound - 1e-6:
            violations += 1
        radii = [r for r in (0.05, 0.1, 0.25, 0.5, 1.0) if r < 0.5 * grid.r_max]
        constants["weighted_quotient"] = weighted_quotient(
            pair, [Ball(np.zeros(params.d), r) for r in radii])
        cubes = random_cubes(rng, cfg.cube_count, params.d, min(4.0, 0.4 * grid.r_max))
        constants["cube_average_sup"] = cube_average_sup(pair, params, cubes)
        _, _, slope = eps_poincare_envelope(eps_reports)
        constants["eps_poincare_envelope_slope"] = slope
        checks["eps_poincare_monotone"] = bool(all(np.all(np.diff(r.K) <= 0)
                                                  for r in eps_reports))
    checks["violations"] = violations
    (out / "summary.json").write_text(json.dumps({"checks": checks, "constants": constants},
                                                 indent=1, sort_keys=True) + "\n")
    files.append(out / "summary.json")
    print(f"verify: {len(tests)} test functions, {violations} violations -> {out}")
    code = EXIT_INVARIANT if violations else EXIT_OK
    return code, checks, constants, files


# -- eigen -------------------------------------------------------------------------
def eigen_grid(sigma: float, r_max: float, ratio: float, d: int):
    """Geometric grid resolving a Gaussian of width sigma out to r_max."""
    from .core import geometric_grid
    return geometric_grid(r_max, min(1e-5, 1e-3 * sigma), ratio, d)


def cmd_eigen(cfg):
    from .core import Params
    from .evolve import gaussian_density
    from .inequalities import rayleigh_lambda_iso
    from .io import write_csv
    from .potentials import compute_potentials

    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    params = Params.make(cfg.dimension, cfg.gamma, cfg.alpha)
    bound = (params.d + params.gamma) / 4.0
    rows, checks = [], {}
    bad = 0
    for s in cfg.eigen_sigmas:
        if not s > 0:
            from .config import ConfigError
            raise ConfigError("eigen_sigmas", f"widths must be positive, got {s}")
        grid = eigen_grid(s, cfg.eigen_r_max, cfg.eigen_ratio, params.d)
        pair = compute_potentials(gaussian_density(grid, s, cfg.mass), params, check_tail=False)
        rep = rayleigh_lambda_iso(pair, grid, params)
        ok = rep.lambda_iso >= bound - 1e-6
        bad += int(not ok)
        rows.append([s, rep.lambda_iso, rep.lambda_iso - bound, rep.lambda_iso / bound,
                     rep.residual, grid.n])
        checks[f"sigma_{s:g}"] = {"lambda": rep.lambda_iso, "ok": ok, "residual": rep.residual}
        print(f"eigen: sigma={s:g} lambda={rep.lambda_iso:.6f} bound={bound:.6f}")
    files = [write_csv(out / "lambda.csv",
                       ["sigma", "lambda", "margin", "ratio_to_bound", "residual", "n"], rows)]
    lams = [r[1] for r in rows]
    checks["trend_towards_bound"] = bool(len(lams) < 2 or lams[-1] <= lams[0])
    constants = {"lower_bound": bound, "lambda_min": min(lams)}
    return (EXIT_INVARIANT if bad else EXIT_OK), checks, constants, files


# -- moser -------------------------------------------------------------------------
def cmd_moser(cfg):
    from .config import ConfigError
    from .core import Params
    from .io import SnapshotError, read_trajectory, write_csv
    from .moser import N_MAX_LIMIT, moser_diagnostic

    if not cfg.trajectory:
        raise ConfigError("trajectory", "moser needs a simulate output directory")
    try:
        traj = read_trajectory(cfg.trajectory)
    except SnapshotError as exc:
        raise ConfigError("trajectory", str(exc)) from None
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    params = Params.make(traj[0].f.grid.d, traj[0].pair.gamma, cfg.alpha)
    n_max = cfg.moser_n_max
    if n_max > N_MAX_LIMIT:
        print(f"moser: warning: n_max={n_max} clipped to {N_MAX_LIMIT}", file=sys.stderr)
        n_max = N_MAX_LIMIT
    sch = moser_diagnostic(traj, cfg.moser_p0, cfg.moser_R, None, n_max, params)
    ratios = list(sch.ratios) + [float("nan")]
    rows = [[n, sch.T_n[n], sch.R_n[n], sch.p_n[n], sch.log_E[n], ratios[n],
             int(sch.fact_i[n])] for n in range(len(sch.p_n))]
    files = [write_csv(out / "moser.csv",
                       ["n", "T_n", "R_n", "p_n", "log_E", "ratio", "fact_i"], rows)]
    checks = {"fact_i_all": bool(all(sch.fact_i)),
              "extrapolation_error": sch.extrapolation_error,
              "extrapolation_ok": bool(sch.extrapolation_error <= 0.05)}
    constants = {"sup_f": sch.sup_f, "limit_estimate": sch.limit_estimate,
                 "b_const": sch.b_const, "grad_bound_const": sch.grad_bound_const,
                 "lap_bound_const": sch.lap_bound_const}
    print(f"moser: limit {sch.limit_estimate:.6g} vs sup {sch.sup_f:.6g} "
          f"({100 * sch.extrapolation_error:.2f}%)")
    code = EXIT_OK if checks["fact_i_all"] else EXIT_INVARIANT
    return code, checks, constants, files


# -- gamma-star --------------------------------------------------------------------
def gamma_star_table(d: int) -> str:
    from .core import Params, gamma_star

    gs = gamma_star(d)
    lines = [f"d = {d}", f"gamma_star = {gs:.10f}", "",
             f"{'gamma':>10} {'p_max_monotone':>15} {'p_min_linfty':>13} {'overlap':>8}"]
    grid = sorted({-2.0, round(gs, 4), *[-2.0 - k * (d - 2.0) / 8.0 for k in range(1, 8)]},
                  reverse=True)
    for g in grid:
        p = Params.make(d, g)
        ok = p.p_min_linfty < p.p_max_monotone
        lines.append(f"{g:>10.4f} {p.p_max_monotone:>15.6g} {p.p_min_linfty:>13.6g} "
                     f"{'yes' if ok else 'no':>8}")
    return "\n".join(lines)


def cmd_gamma_star(d) -> int:
    from .config import ConfigError

    if d is None or d < 3:
        raise ConfigError("dimension", f"must be an integer >= 3, got {d}")
    print(gamma_star_table(d))
    return EXIT_OK


# -- entry point -------------------------------------------------------------------
_COMMANDS = {"simulate": cmd_simulate, "verify": cmd_verify, "eigen": cmd_eigen,
             "moser": cmd_moser}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    from .config import ConfigError

    try:
        _apply_threads()
        if args.command == "gamma-star":
            d = args.dimension
            if d is None:
                d = _load(args).dimension if args.config else 3
            return cmd_gamma_star(d)
        cfg = _load(args)
    except ConfigError as exc:
        print(f"isoland: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    from .core import DomainError
    from .evolve import InvariantViolation, NumericalFailure
    from .io import SnapshotError

    started = time.time()
    out = cfg.output_dir
    try:
        code, checks, constants, files = _COMMANDS[args.command](cfg)
    except (ConfigError, SnapshotError, DomainError) as exc:
        print(f"isoland: {exc}", file=sys.stderr)
        return _fail(out, cfg, args.command, started, "config_error", exc, EXIT_CONFIG)
    except NumericalFailure as exc:
        print(f"isoland: numerical failure at step {exc.step_index}: {exc}", file=sys.stderr)
        return _fail(out, cfg, args.command, started, "numerical_failure", exc, EXIT_NUMERICAL)
    except InvariantViolation as exc:
        print(f"isoland: invariant violation: {exc}", file=sys.stderr)
        return _fail(out, cfg, args.command, started, "invariant_violation", exc,
                     EXIT_INVARIANT)
    outcome = {EXIT_OK: "success", EXIT_INVARIANT: "invariant_violation"}.get(code, "error")
    _manifest(out, cfg, args.command, started, outcome, checks, constants, files)
    return code


def _fail(out, cfg, command, started, outcome, exc, code):
    try:
        _manifest(out, cfg, command, started, outcome, {}, {}, [], error=str(exc))
    except OSError:
        pass
    return code


if __name__ == "__main__":
    sys.exit(main())
