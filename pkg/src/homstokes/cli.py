"""Command line: homstokes <subcommand> --config study.toml [options].

Exit status: 0 ok, 1 validation failure, 2 solver failure, 3 a checked
threshold was breached.
"""

import argparse
import sys
from pathlib import Path

import numpy as np

from . import cache as cache_mod
from . import checks, domain
from .cell import CellGrid, CorrectorError, PreconditionError, compute_correctors, compute_effective_tensor
from .config import ConfigError, parse_config, resolve_cache_dir
from .fem import SolverError
from .study import StudyError, report_csv, report_text, run_convergence_study

EXIT_OK, EXIT_INVALID, EXIT_SOLVER, EXIT_THRESHOLD = 0, 1, 2, 3
COMMANDS = {
    "cell": "compute (or load) correctors and print the effective tensor",
    "identities": "corrector identity residuals under cell-grid refinement",
    "solve": "one fine-scale or homogenized Dirichlet solve, dumped to disk",
    "rates": "epsilon sweep; writes rates.csv and rates.txt",
    "smoothing": "smoothing-operator property suite",
    "mms": "manufactured-solution convergence suite",
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def usage():
    lines = ["usage: homstokes <command> --config PATH [--out DIR] [--cache DIR] [--jobs N] [--no-cache]",
             "", "commands:"]
    lines += [f"  {name:<11} {text}" for name, text in COMMANDS.items()]
    return "\n".join(lines)


def _parser():
    p = _Parser(prog="homstokes", add_help=False)
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.add_argument("--cache")
    p.add_argument("--jobs", type=int)
    p.add_argument("--no-cache", action="store_true")
    return p


def _cache(args, cfg):
    if args.no_cache:
        return None
    directory = resolve_cache_dir(args.cache, cfg)
    return cache_mod.CorrectorCache(directory) if directory else None


def _out_dir(args, cfg):
    out = Path(args.out or cfg.out_dir or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _correctors(cfg, store):
    A = cfg.coefficient()
    cs = store.load(A, cfg.N, cfg.cell_tol) if store else None
    if cs is None:
        cs = compute_correctors(A, CellGrid(cfg.N), cfg.cell_tol, with_adjoint=False)
        if store:
            store.store(A, cfg.N, cfg.cell_tol, cs)
    return A, cs


def cmd_cell(args, cfg, out):
    A, cs = _correctors(cfg, _cache(args, cfg))
    eff = compute_effective_tensor(A, cs)
    print(f"effective tensor for {cfg.family}{tuple(cfg.params)} on N = {cfg.N}")
    for i in range(2):
        for j in range(2):
            row = " ".join(f"{eff.values[i, j, a, b]: .10f}" for a in range(2) for b in range(2))
            print(f"  i={i + 1} j={j + 1}: {row}")
    print(f"form eigenvalues in [{eff.lower:.6g}, {eff.upper:.6g}]")
    return EXIT_OK


def cmd_identities(args, cfg, out):
    sizes = cfg.sections.get("identities", {}).get("sizes", [cfg.N // 2, cfg.N])
    res = checks.identity_study(cfg.coefficient(), tuple(int(n) for n in sizes), cfg.cell_tol)
    names = ("decomposition", "qpi", "b1", "skew", "mean_zero")
    print(f"{'N':>6} " + " ".join(f"{n:>14}" for n in names))
    for N, row in res["table"].items():
        print(f"{N:>6} " + " ".join(f"{row[n]:14.4e}" for n in names))
    for name, r in res["ratios"].items():
        print(f"ratio {name}: " + ", ".join(f"{x:.3f}" for x in r))
    print("PASS" if res["passed"] else "FAIL")
    return EXIT_OK if res["passed"] else EXIT_THRESHOLD


def cmd_solve(args, cfg, out):
    sec = cfg.sections.get("solve", {})
    kind = sec.get("kind", "fine")
    if kind not in ("fine", "homogenized"):
        raise ConfigError("solve.kind", "expected 'fine' or 'homogenized'")
    eps = float(sec.get("epsilon", cfg.epsilons[0]))
    M = int(sec.get("M", cfg.grid_size(eps)))
    grid = domain.DomainGrid(M)
    A = cfg.coefficient()
    if kind == "homogenized":
        _, cs = _correctors(cfg, _cache(args, cfg))
        coef, eps_used = compute_effective_tensor(A, cs), None
    else:
        coef, eps_used = A, eps
    recipe = sec.get("recipe", cfg.recipe)
    pb = domain.manufactured_problem(recipe, coef, grid, eps_used)
    g = float(sec.get("divergence", 0.0))
    if g != 0.0:
        pb.divergence = np.full(grid.shape, g)
    boundary = sec.get("boundary", "zero")
    if boundary == "identity":
        pb.boundary = np.moveaxis(grid.points(), -1, 0).copy()
    elif boundary != "zero":
        raise ConfigError("solve.boundary", "expected 'zero' or 'identity'")
    residual = domain.check_compatibility(pb)
    print(f"compatibility residual: {residual:.6e}")
    field = domain.solve_dirichlet_stokes(pb, cfg.domain_tol)
    path = out / f"solution_{kind}_M{M}.hssol"
    cache_mod.write_solution(path, field, eps_used)
    print(f"solved {kind} problem on M = {M}: residual {field.meta['residual']:.3e}, "
          f"{field.meta['iterations']} iterations -> {path}")
    for w in field.meta["warnings"]:
        print(f"warning: {w}")
    return EXIT_OK


def _gate(report):
    """Slope gates for oscillating sweeps; constant coefficients need small errors."""
    if report.config.family == "constant":
        worst = max(max(r[c] for c in ("l2_u", "h1_twoscale", "l2_pressure", "l2_w", "h1_w"))
                    for r in report.rows)
        return worst <= 1e-6
    f = report.fits
    ok = f["l2_u"] is not None and 0.85 <= f["l2_u"].slope <= 1.3 and f["l2_u"].r2 >= 0.98
    ok = ok and all(f[c] is not None and f[c].slope >= 0.4 for c in ("h1_twoscale", "l2_pressure", "h1_w"))
    ok = ok and f["l2_w"] is not None and f["l2_w"].slope >= 0.85
    ok = ok and max(r["bl_const"] for r in report.rows) <= 50
    return ok


def cmd_rates(args, cfg, out):
    report = run_convergence_study(cfg, _cache(args, cfg))
    (out / "rates.csv").write_text(report_csv(report))
    text = report_text(report)
    (out / "rates.txt").write_text(text + "\n")
    print(text)
    if cfg.sections.get("rates", {}).get("gate", False) and not _gate(report):
        print("FAIL: acceptance thresholds breached")
        return EXIT_THRESHOLD
    return EXIT_OK


def cmd_smoothing(args, cfg, out):
    _, cs = _correctors(cfg, _cache(args, cfg))
    res = checks.smoothing_suite(cs)
    for name, vals in res["ratios"].items():
        print(f"{name:>10}: " + " ".join(f"{v:.4f}" for v in vals))
    print(f"max ratio {res['max_ratio']:.4f} (bound {res['bound']:.4f})")
    print(f"product bound: worst excess {res['product_margin']:.3e}, worst ratio {res['product_ratio']:.4f}")
    print("PASS" if res["passed"] else "FAIL")
    return EXIT_OK if res["passed"] else EXIT_THRESHOLD


def cmd_mms(args, cfg, out):
    sec = cfg.sections.get("mms", {})
    grids = tuple(int(m) for m in sec.get("grids", [32, 64, 128]))
    res = checks.mms_suite(cfg.family, cfg.params, float(sec.get("epsilon", 0.25)), grids, cfg.domain_tol)
    for name, r in res.items():
        if name == "passed":
            continue
        errs = " ".join(f"{row['l2_u']:.3e}" for row in r["rows"])
        print(f"{name:>13}: velocity L2 {errs}  slope {r['slope']:.3f}")
    print("PASS" if res["passed"] else "FAIL")
    return EXIT_OK if res["passed"] else EXIT_THRESHOLD


HANDLERS = {"cell": cmd_cell, "identities": cmd_identities, "solve": cmd_solve, "rates": cmd_rates,
            "smoothing": cmd_smoothing, "mms": cmd_mms}


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    if argv[:1] in (["-h"], ["--help"]):
        print(usage())
        return EXIT_OK
    if not argv or argv[0] not in HANDLERS:
        if argv:
            print(f"unknown command {argv[0]!r}", file=sys.stderr)
        print(usage(), file=sys.stderr)
        return EXIT_INVALID
    command = argv[0]
    try:
        args = _parser().parse_args(argv[1:])
        cfg = parse_config(args.config)
        if args.jobs is not None:
            if args.jobs < 1:
                raise ConfigError("--jobs", "must be a positive integer")
            cfg.jobs = args.jobs
        out = _out_dir(args, cfg)
        return HANDLERS[command](args, cfg, out)
    except UsageError as exc:
        print(f"error: {exc}\n{usage()}", file=sys.stderr)
        return EXIT_INVALID
    except (ConfigError, PreconditionError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except StudyError as exc:
        solver = isinstance(exc.cause, (SolverError, CorrectorError))
        print(f"{'solver failure' if solver else 'error'}: {exc}", file=sys.stderr)
        return EXIT_SOLVER if solver else EXIT_INVALID
    except (SolverError, CorrectorError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
