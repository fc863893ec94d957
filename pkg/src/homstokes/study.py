"""Epsilon sweeps comparing fine-scale solutions with their two-scale expansions."""

import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import domain, twoscale
from .cell import CellGrid, compute_correctors, compute_effective_tensor
from .norms import FitError, boundary_layer_constant, discrete_norm, fit_rate

CSV_COLUMNS = ("epsilon", "l2_u", "h1_twoscale", "l2_pressure", "l2_w", "h1_w", "bl_const")
ERROR_COLUMNS = CSV_COLUMNS[1:6]
# extra diagnostics kept in the report but not written to the CSV
EXTRA_COLUMNS = ("h1_corrected", "l2_corrected", "h2_u0")


class StudyError(RuntimeError):
    def __init__(self, epsilon, cause):
        super().__init__(f"eps = {epsilon!r}: {cause}")
        self.epsilon = epsilon
        self.cause = cause


@dataclass
class RateReport:
    rows: list
    fits: dict
    config: object
    warnings: list = field(default_factory=list)

    def column(self, name):
        return np.array([row[name] for row in self.rows])


def _formula(recipe):
    if recipe == "vortex":
        return domain.vortex_velocity
    return lambda x: np.zeros(np.shape(x)[:-1] + (2,))


def _h2_norm(u, grid):
    g = np.stack(np.gradient(u, grid.h, axis=(-2, -1)))
    H = np.stack(np.gradient(g, grid.h, axis=(-2, -1)))
    w = grid.weights()
    return float(np.sqrt(np.sum(w * ((u ** 2).sum(0) + (g ** 2).sum((0, 1)) + (H ** 2).sum((0, 1, 2))))))


def study_row(A, correctors, effective, eps, M, recipe="vortex", extension="analytic", tol=1e-9):
    """All error columns for one eps on an M x M grid."""
    grid = domain.DomainGrid(M)
    if recipe == "vortex":
        force = domain.vortex_force(effective)
    else:
        force = None
    u0 = domain.solve_dirichlet_stokes(domain.StokesProblem(grid, effective, force), tol)
    fine = domain.StokesProblem(grid, A, force, epsilon=eps)
    op = domain.DomainOperator(fine)
    ue = op.solve(fine, tol)
    formula = _formula(recipe) if extension == "analytic" else None
    ext = twoscale.extend(u0.u, grid, twoscale.required_pad(eps, grid), formula)
    ts = twoscale.prepare_two_scale(ext, correctors, eps)
    v = twoscale.build_velocity_expansion(u0, ts)
    pexp = twoscale.build_pressure_expansion(u0, ts)
    bc = twoscale.solve_boundary_corrector(A, ts, tol, op)
    w = bc.field.u
    row = {
        "epsilon": eps,
        "l2_u": discrete_norm(ue.u - u0.u, grid, "L2"),
        "h1_twoscale": discrete_norm(ue.u - v, grid, "H1"),
        "l2_pressure": discrete_norm(ue.p - pexp, grid, "L2"),
        "l2_w": discrete_norm(w, grid, "L2"),
        "h1_w": discrete_norm(w, grid, "H1"),
        "h1_corrected": discrete_norm(ue.u - v + w, grid, "H1"),
        "l2_corrected": discrete_norm(ue.u - v + w, grid, "L2"),
        "h2_u0": _h2_norm(u0.u, grid),
    }
    consts = []
    for f in (ue.u, u0.u, w):
        for r in (eps, 2 * eps):
            c = boundary_layer_constant(f, grid, r)
            if c is not None:
                consts.append(c)
    row["bl_const"] = max(consts) if consts else 0.0
    row["M"] = M
    row["warnings"] = ue.meta["warnings"] + bc.field.meta["warnings"]
    row["divergence_shift"] = bc.divergence_shift
    return row


def _row_task(args):
    A, correctors, effective, eps, M, recipe, extension, tol = args
    try:
        return study_row(A, correctors, effective, eps, M, recipe, extension, tol)
    except Exception as exc:  # attach eps for the caller
        raise StudyError(eps, exc) from exc


def cell_data(config, cache=None):
    """Correctors and effective tensor for the configured coefficient."""
    A = config.coefficient()
    grid = CellGrid(config.N)
    correctors = None
    if cache is not None:
        correctors = cache.load(A, config.N, config.cell_tol)
    if correctors is None:
        correctors = compute_correctors(A, grid, config.cell_tol, with_adjoint=False)
        if cache is not None:
            cache.store(A, config.N, config.cell_tol, correctors)
    return A, correctors, compute_effective_tensor(A, correctors)


def run_convergence_study(config, cache=None):
    """Solve every eps of the config and fit log-log slopes per column."""
    if len(config.epsilons) == 0:
        raise ValueError("empty eps list")
    A, correctors, effective = cell_data(config, cache)
    tasks = [(A, correctors, effective, e, config.grid_size(e), config.recipe, config.extension,
              config.domain_tol) for e in config.epsilons]
    if config.jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            rows = list(pool.map(_row_task, tasks))
    else:
        rows = [_row_task(t) for t in tasks]
    rows.sort(key=lambda r: -r["epsilon"])
    warnings = [f"eps = {r['epsilon']!r}: {m}" for r in rows for m in r["warnings"]]
    # the coarsest eps is dropped from fits when it was under-resolved
    fit_rows = rows[1:] if rows and rows[0]["warnings"] and len(rows) > 2 else rows
    fits = {}
    for name in ERROR_COLUMNS + EXTRA_COLUMNS[:2]:
        try:
            fits[name] = fit_rate([r["epsilon"] for r in fit_rows], [r[name] for r in fit_rows])
        except FitError:
            fits[name] = None
    return RateReport(rows, fits, config, warnings)


def _fmt(x):
    return format(float(x), ".17g")


def report_csv(report):
    """CSV text: header, one row per eps, then ``# slope_<column>`` lines."""
    out = io.StringIO()
    out.write(",".join(CSV_COLUMNS) + "\n")
    for row in report.rows:
        out.write(",".join(_fmt(row[c]) for c in CSV_COLUMNS) + "\n")
    for name in ERROR_COLUMNS:
        fit = report.fits.get(name)
        out.write(f"# slope_{name} = {_fmt(fit.slope) if fit else 'nan'}\n")
    return out.getvalue()


def report_text(report):
    """Human-readable summary of a study."""
    lines = [f"{'eps':>10} {'M':>5} " + " ".join(f"{c:>13}" for c in CSV_COLUMNS[1:] + EXTRA_COLUMNS[:2])]
    for row in report.rows:
        vals = " ".join(f"{row[c]:13.4e}" for c in CSV_COLUMNS[1:] + EXTRA_COLUMNS[:2])
        lines.append(f"{row['epsilon']:10.5g} {row['M']:5d} {vals}")
    for name, fit in report.fits.items():
        if fit is None:
            lines.append(f"slope {name:>13}: n/a")
        else:
            lines.append(f"slope {name:>13}: {fit.slope:.4f}  (R^2 = {fit.r2:.4f})")
    lines.extend(f"warning: {w}" for w in report.warnings)
    return "\n".join(lines)
