"""Verification suites shared by the command line and the test-suite.

Each suite returns plain dicts of measured numbers plus a ``passed`` flag
computed from fixed thresholds.
"""

import numpy as np

from . import domain, twoscale
from .cell import (CellGrid, compute_b_tensor, compute_correctors, compute_dual_correctors,
                   compute_effective_tensor, verify_corrector_identities)
from .coefficients import build_coefficient
from .norms import discrete_norm, fit_rate

# identity residuals must shrink at least this much per doubling of N
REFINEMENT_FACTOR = 1.7
MEAN_ZERO_TOL = 1e-10
SKEW_TOL = 1e-12
# velocity L2 slope window for manufactured solutions
MMS_WINDOW = (1.7, 2.3)
# |1 - average of exp(-i t xi) over [0,1]^2| <= |xi| sqrt(2)/2
STEKLOV_BOUND = np.sqrt(2.0) / 2.0
CONVERGING = ("decomposition", "qpi", "b1")


def cell_pipeline(A, N, tol=1e-9, with_adjoint=False):
    """Correctors, effective tensor, b, dual correctors and identity residuals at one N."""
    grid = CellGrid(N)
    cs = compute_correctors(A, grid, tol, with_adjoint=with_adjoint)
    eff = compute_effective_tensor(A, cs)
    b = compute_b_tensor(A, cs, eff)
    dual = compute_dual_correctors(b, grid, tol)
    return {"correctors": cs, "effective": eff, "b": b, "dual": dual,
            "residuals": verify_corrector_identities(cs, dual, b, eff)}


def identity_study(A, sizes=(64, 128, 256), tol=1e-9):
    """Identity residuals over a sequence of cell grids, with refinement ratios."""
    table = {N: cell_pipeline(A, N, tol)["residuals"] for N in sizes}
    ratios = {name: [table[a][name] / table[b][name] for a, b in zip(sizes, sizes[1:])]
              for name in CONVERGING}
    ok = all(min(r) >= REFINEMENT_FACTOR for r in ratios.values()) if len(sizes) > 1 else True
    ok = ok and all(table[N]["skew"] <= SKEW_TOL and table[N]["mean_zero"] <= MEAN_ZERO_TOL
                    for N in sizes)
    return {"table": table, "ratios": ratios, "passed": bool(ok)}


def mms_errors(A, grids=(32, 64, 128), epsilon=None, tol=1e-9):
    """Velocity and pressure L2 errors of the vortex problem on a list of grids."""
    rows = []
    for M in grids:
        grid = domain.DomainGrid(M)
        pb = domain.manufactured_problem("vortex", A, grid, epsilon)
        sol = domain.solve_dirichlet_stokes(pb, tol)
        x = grid.points()
        ue = np.moveaxis(pb.exact[0](x), -1, 0)
        rows.append({"M": M, "l2_u": discrete_norm(sol.u - ue, grid, "L2"),
                     "l2_p": discrete_norm(sol.p - pb.exact[1](x), grid, "L2"),
                     "iterations": sol.meta["iterations"]})
    h = [1.0 / r["M"] for r in rows]
    slope = fit_rate(h, [r["l2_u"] for r in rows]).slope
    return {"rows": rows, "slope": slope, "passed": MMS_WINDOW[0] <= slope <= MMS_WINDOW[1]}


def mms_suite(family="laminate", params=(2.0, 1.0), epsilon=0.25, grids=(32, 64, 128), tol=1e-9):
    """Manufactured-solution convergence for A = identity and for one oscillating family."""
    out = {"constant": mms_errors(build_coefficient("constant"), grids, None, tol)}
    if family != "constant":
        out[family] = mms_errors(build_coefficient(family, params), grids, epsilon, tol)
    out["passed"] = all(v["passed"] for v in out.values() if isinstance(v, dict))
    return out


def _smooth_fields():
    tp = 2.0 * np.pi
    return {
        "sincos": lambda x: np.sin(tp * x[..., 0]) * np.cos(tp * x[..., 1]),
        "exp_quad": lambda x: np.exp(x[..., 0]) * x[..., 1] ** 2,
        "vortex_u1": lambda x: domain.vortex_velocity(x)[..., 0],
    }


def steklov_ratios(epsilons=(1 / 4, 1 / 8, 1 / 16, 1 / 32, 1 / 64), M=256):
    """||S_eps u - u|| / (eps ||grad u||) for three smooth fields."""
    grid = domain.DomainGrid(M)
    x = grid.points()
    out = {}
    for name, f in _smooth_fields().items():
        u = f(x)
        grad = discrete_norm(u, grid, "H1semi")
        vals = []
        for eps in epsilons:
            ext = twoscale.extend(u, grid, twoscale.required_pad(eps, grid), f)
            su = twoscale.steklov_smooth(ext, eps)
            vals.append(discrete_norm(su - u, grid, "L2") / (eps * grad))
        out[name] = vals
    return out


def steklov_product_margins(correctors, epsilon=1 / 8, M=128, n_random=10, seed=0):
    """Worst excess and worst ratio of ||f(x/eps) S_eps u|| over
    ||f||_{L2(Y)} ||u||, for corrector components f and random u.  The norm
    of u is taken on [-eps, 1]^2, the set that S_eps reads; identically
    zero components are skipped."""
    grid = domain.DomainGrid(M)
    k = int(np.ceil(twoscale.required_pad(epsilon, grid) / grid.h))
    n = M + 1 + 2 * k
    rng = np.random.default_rng(seed)
    y = grid.points() / epsilon
    # trapezoid weights on [-eps, 1]^2 inside the extended box
    lo = k - int(round(epsilon / grid.h))
    w1 = np.zeros(n)
    w1[lo:k + M + 1] = grid.h
    w1[lo] = w1[k + M] = 0.5 * grid.h
    w = np.outer(w1, w1)
    chi = correctors.chi.reshape(-1, *correctors.chi.shape[-2:])
    scale = np.abs(chi).max()
    x = (np.arange(n) - k) * grid.h
    x1, x2 = np.meshgrid(x, x, indexing="ij")
    worst, ratio = -np.inf, 0.0
    for _ in range(n_random):
        # random trigonometric polynomial with modes up to 3 per axis
        c = rng.standard_normal((7, 7, 2))
        u = sum(c[a + 3, b + 3, 0] * np.cos(2 * np.pi * (a * x1 + b * x2))
                + c[a + 3, b + 3, 1] * np.sin(2 * np.pi * (a * x1 + b * x2))
                for a in range(-3, 4) for b in range(-3, 4))
        ext = twoscale.ExtendedField(u, grid, k, "random")
        su = twoscale.steklov_smooth(ext, epsilon)
        unorm = np.sqrt(np.sum(w * u ** 2))
        for comp in chi:
            fy = np.sqrt(np.mean(comp ** 2))
            if fy <= 1e-12 * scale:
                continue
            lhs = discrete_norm(twoscale.sample_periodic(comp, y) * su, grid, "L2")
            worst = max(worst, lhs - fy * unorm)
            ratio = max(ratio, lhs / (fy * unorm))
    return worst, ratio


def smoothing_suite(correctors, epsilons=(1 / 4, 1 / 8, 1 / 16, 1 / 32, 1 / 64), M=256, seed=0,
                    product_epsilons=(1 / 4, 1 / 8, 1 / 16)):
    """Smoothing error ratios and the weighted-product bound."""
    ratios = steklov_ratios(epsilons, M)
    worst_ratio = max(max(v) for v in ratios.values())
    pairs = [steklov_product_margins(correctors, e, seed=seed) for e in product_epsilons]
    margin, pratio = max(p[0] for p in pairs), max(p[1] for p in pairs)
    return {"ratios": ratios, "max_ratio": worst_ratio, "bound": STEKLOV_BOUND,
            "product_margin": margin, "product_ratio": pratio,
            "passed": bool(worst_ratio <= STEKLOV_BOUND and margin <= 1e-8)}
