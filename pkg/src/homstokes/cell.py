"""Periodic Stokes cell problems: correctors, effective tensor, dual correctors.

Index conventions for stored arrays (grid axes always last):

* ``chi[j, beta, alpha]``  component alpha of chi_j^beta
* ``pi[j, beta]``
* ``b[i, j, alpha, beta]``
* ``f[i, j, beta, alpha]`` component alpha of f_ij^beta, ``q[i, j, beta]``
* ``phi[k, i, j, alpha, beta]``
"""

from dataclasses import dataclass, field

import numpy as np

from . import fem
from .coefficients import _DELTA, _form_bounds, adjoint_coefficient

D = 2


class PreconditionError(ValueError):
    pass


@dataclass(frozen=True)
class CellGrid:
    N: int

    def __post_init__(self):
        if self.N < 8 or self.N % 2:
            raise ValueError(f"cell grid needs an even N >= 8, got {self.N}")

    @property
    def h(self):
        return 1.0 / self.N

    def points(self):
        t = np.arange(self.N) * self.h
        return np.stack(np.meshgrid(t, t, indexing="ij"), axis=-1)

    def fem_grid(self):
        return fem.Q1Grid(self.N, periodic=True)


@dataclass
class PeriodicField:
    grid: CellGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape[-2:] != (self.grid.N, self.grid.N):
            raise ValueError("field extents do not match the cell grid")

    @property
    def means(self):
        return self.values.mean(axis=(-2, -1))

    def project_mean(self):
        self.values = self.values - self.means[..., None, None]
        return self


def cell_mean(values):
    return np.asarray(values).mean(axis=(-2, -1))


def _project(values):
    return values - cell_mean(values)[..., None, None]


def ddy(values, k, h):
    """Second-order centred difference along cell axis k (periodic)."""
    axis = values.ndim - 2 + k
    return (np.roll(values, -1, axis=axis) - np.roll(values, 1, axis=axis)) / (2.0 * h)


class CellStokesOperator:
    """Discrete periodic operator  -div(A grad u) + grad p,  div u  on a cell grid.

    ``A=None`` gives the vector Laplacian.  The velocity block is
    preconditioned by a mean-viscosity Laplacian inverted with FFTs, which
    also projects out the constant modes; solutions are re-centred to mean
    zero afterwards.
    """

    def __init__(self, A, grid):
        self.A = A
        self.grid = grid
        self.vgrid = grid.fem_grid()
        self.pgrid = fem.coarse_grid(self.vgrid)
        xq = self.vgrid.quad_points()
        self.cq = _DELTA[None, None] if A is None else A.evaluate(xq)
        self.K = fem.stiffness(self.vgrid, self.cq)
        self.B = fem.divergence(self.vgrid, self.pgrid)
        self.Mv = fem.mass(self.vgrid)
        if A is None:
            eta = np.ones(self.pgrid.num_nodes)
        else:
            pts = np.stack(self.pgrid.coords(), axis=-1).reshape(-1, 2)
            eta = np.einsum("nijij->n", A.evaluate(pts)) / D ** 2
        schur = fem.schur_diagonal(self.pgrid, eta)
        nn = self.vgrid.num_nodes
        lap = fem.PeriodicLaplacianInverse(self.vgrid.n, self.vgrid.h, float(np.mean(eta)))
        self.solver = fem.SaddleSolver(self.K, self.B, schur, np.arange(2 * nn),
                                       np.arange(self.pgrid.num_nodes), velocity_solve=lap,
                                       pressure_weights=np.ones(self.pgrid.num_nodes))

    def solve_load(self, load, tol=1e-9, atol=0.0):
        """Solve with a precomputed velocity load vector; returns (u, p, report)."""
        sol = self.solver
        # drop the per-component load sum so the singular system stays consistent
        load = np.asarray(load, dtype=float).reshape(2, -1)
        load = (load - load.mean(axis=1, keepdims=True)).reshape(-1)
        uf, pf, res = sol.solve(load[sol.free_u], np.zeros(sol.npr), tol=tol, atol=atol)
        nn = self.vgrid.num_nodes
        u = np.zeros(2 * nn)
        u[sol.free_u] = uf
        p = np.zeros(self.pgrid.num_nodes)
        p[sol.free_p] = pf
        u = _project(u.reshape(2, *self.grid_shape))
        p = _project(fem.prolong_pressure(self.pgrid, p))
        div = self.B @ u.reshape(-1)
        report = {"residual": res, "divergence": float(np.linalg.norm(div)),
                  "iterations": sol.iterations}
        return u, p, report

    @property
    def grid_shape(self):
        return (self.grid.N, self.grid.N)

    def nodal_load(self, force):
        """Load vector for a nodal force field (2, N, N) interpolated bilinearly."""
        force = np.asarray(force).reshape(2, -1)
        return np.concatenate([self.Mv @ force[0], self.Mv @ force[1]])


def solve_cell_stokes(A, rhs, grid, tol=1e-9, operator=None):
    """Solve -div(A grad u) + grad p = rhs, div u = 0 on the unit torus.

    ``A=None`` selects the constant Laplacian.  ``rhs`` is a PeriodicField
    with two components which must have zero mean.  Returns mean-zero
    ``(velocity, pressure)`` PeriodicFields; the pressure lives on the
    velocity nodes by bilinear prolongation.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    values = rhs.values if isinstance(rhs, PeriodicField) else np.asarray(rhs)
    scale = np.abs(values).max() if values.size else 0.0
    means = cell_mean(values)
    if np.any(np.abs(means) > 1e-10 * max(scale, 1e-300)) and scale > 0:
        raise PreconditionError(f"cell forcing must have zero mean, got means {means}")
    op = operator or CellStokesOperator(A, grid)
    u, p, _ = op.solve_load(op.nodal_load(values), tol=tol)
    return PeriodicField(grid, u), PeriodicField(grid, p)


class CorrectorError(RuntimeError):
    def __init__(self, index, cause):
        super().__init__(f"corrector solve {index} failed: {cause}")
        self.index = index
        self.cause = cause


@dataclass
class CorrectorSet:
    grid: CellGrid
    chi: np.ndarray
    pi: np.ndarray
    residuals: dict = field(default_factory=dict)
    adjoint: "CorrectorSet" = None

    def chi_field(self, j, beta):
        return PeriodicField(self.grid, self.chi[j, beta])

    def pi_field(self, j, beta):
        return PeriodicField(self.grid, self.pi[j, beta])

    def invariants(self):
        scale = max(np.abs(self.chi).max(), np.abs(self.pi).max(), 1e-300)
        return {
            "max_divergence": max((r["divergence"] for r in self.residuals.values()), default=0.0),
            "max_momentum_residual": max((r["residual"] for r in self.residuals.values()), default=0.0),
            "max_mean": float(max(np.abs(cell_mean(self.chi)).max(), np.abs(cell_mean(self.pi)).max())),
            "scale": float(scale),
        }


def _corrector_loads(op):
    cq = np.broadcast_to(op.cq, (op.vgrid.num_elements, fem.QUAD_W.size, 2, 2, 2, 2))
    for j in range(D):
        for beta in range(D):
            # flux of P_j^beta: a_ik^{ag} d_k P_j^{g beta} = a_ij^{a beta}
            yield j, beta, fem.flux_load(op.vgrid, cq[:, :, :, j, :, beta])


def _solve_correctors(A, grid, tol):
    op = CellStokesOperator(A, grid)
    chi = np.zeros((D, D, D, grid.N, grid.N))
    pi = np.zeros((D, D, grid.N, grid.N))
    residuals = {}
    for j, beta, load in _corrector_loads(op):
        try:
            u, p, rep = op.solve_load(load, tol=tol)
        except fem.SolverError as exc:
            raise CorrectorError((j + 1, beta + 1), exc) from exc
        chi[j, beta], pi[j, beta] = u, p
        residuals[(j, beta)] = rep
    return CorrectorSet(grid, chi, pi, residuals)


def compute_correctors(A, grid, tol=1e-9, with_adjoint=True):
    """Correctors (chi_j^beta, pi_j^beta) for A, plus those of A* when requested."""
    cs = _solve_correctors(A, grid, tol)
    if with_adjoint:
        cs.adjoint = _solve_correctors(adjoint_coefficient(A), grid, tol)
    return cs


@dataclass
class EffectiveTensor:
    values: np.ndarray  # [i, j, alpha, beta]
    lower: float
    upper: float

    @property
    def is_elliptic(self):
        return self.lower > 0

    def system_adjoint(self):
        """(A-hat)*: entry [i,j,a,b] -> [j,i,b,a]."""
        v = np.transpose(self.values, (1, 0, 3, 2))
        return EffectiveTensor(v.copy(), self.lower, self.upper)

    def evaluate(self, y):
        y = np.asarray(y)
        return np.broadcast_to(self.values, y.shape[:-1] + (2, 2, 2, 2))


def _total_gradients(op, chi):
    """Gradients of chi_j^beta + P_j^beta at quadrature points: [j, beta, e, q, gamma, k]."""
    vg = op.vgrid
    out = np.empty((D, D, vg.num_elements, fem.QUAD_W.size, D, D))
    for j in range(D):
        for beta in range(D):
            g = fem.quad_gradients(vg, chi[j, beta].reshape(2, -1))
            g[:, :, beta, j] += 1.0
            out[j, beta] = g
    return out


class _CellQuadrature:
    """Coefficient samples at cell quadrature points, without a solver."""

    def __init__(self, A, grid):
        self.vgrid = grid.fem_grid()
        self.cq = A.evaluate(self.vgrid.quad_points())


def compute_effective_tensor(A, correctors, operator=None):
    """a-hat_ij^{ab} = a_per(chi_j^b + P_j^b, chi_i^a + P_i^a) by cell quadrature."""
    op = operator or _CellQuadrature(A, correctors.grid)
    cq = np.broadcast_to(op.cq, (op.vgrid.num_elements, fem.QUAD_W.size, 2, 2, 2, 2))
    T = _total_gradients(op, correctors.chi)
    h2 = op.vgrid.h ** 2
    # a_kl^{gd} d_l(.)^d of trial (j, beta) against d_k(.)^g of test (i, alpha)
    ahat = h2 * np.einsum("q,eqklgd,jbeqdl,iaeqgk->ijab", fem.QUAD_W, cq, T, T, optimize=True)
    lo, hi = _form_bounds(ahat)
    return EffectiveTensor(ahat, float(lo), float(hi))


@dataclass
class BTensor:
    values: np.ndarray  # mean-zero, [i, j, alpha, beta, y1, y2]
    raw_means: np.ndarray  # nodal means before re-centring


def compute_b_tensor(A, correctors, effective):
    """b_ij^{ab} = a_ij^{ab} + a_ik^{ag} d_k chi_j^{gb} - a-hat_ij^{ab} on cell nodes."""
    grid = correctors.grid
    a = np.moveaxis(A.evaluate(grid.points()), (0, 1), (-2, -1))  # [i,j,a,b,y1,y2]
    dchi = np.stack([ddy(correctors.chi, k, grid.h) for k in range(D)])  # [k, j, b(=beta), g, y]
    b = a + np.einsum("ikagxy,kjbgxy->ijabxy", a, dchi) - effective.values[..., None, None]
    means = cell_mean(b)
    return BTensor(_project(b), means)


@dataclass
class DualCorrectorSet:
    grid: CellGrid
    f: np.ndarray
    q: np.ndarray
    phi: np.ndarray
    residuals: dict = field(default_factory=dict)


def compute_dual_correctors(b, grid, tol=1e-9):
    """Solve Delta f + grad q = b_ij^beta on the torus and form Phi_kij^{ab}.

    Phi_kij^{ab} = d_k f_ij^{ab} - d_i f_kj^{ab}, antisymmetric in (k, i)
    by construction.
    """
    values = b.values if isinstance(b, BTensor) else np.asarray(b)
    means = cell_mean(values)
    scale = max(np.abs(values).max(), 1e-300)
    if np.abs(means).max() > 1e-10 * scale:
        raise PreconditionError("b must be mean-zero for every index")
    op = CellStokesOperator(None, grid)
    loads = {(i, j, beta): op.nodal_load(-values[i, j, :, beta])
             for i in range(D) for j in range(D) for beta in range(D)}
    floor = tol * max(np.linalg.norm(v) for v in loads.values())
    N = grid.N
    f = np.zeros((D, D, D, D, N, N))
    q = np.zeros((D, D, D, N, N))
    residuals = {}
    for i in range(D):
        for j in range(D):
            for beta in range(D):
                rhs = values[i, j, :, beta]
                if not np.any(rhs):
                    residuals[(i, j, beta)] = {"residual": 0.0, "divergence": 0.0, "iterations": 0}
                    continue
                # -Delta f - grad q = -b: velocity f, pressure -q
                try:
                    u, p, rep = op.solve_load(loads[(i, j, beta)], tol=tol, atol=floor)
                except fem.SolverError as exc:
                    raise CorrectorError((i + 1, j + 1, beta + 1), exc) from exc
                f[i, j, beta], q[i, j, beta] = u, -p
                residuals[(i, j, beta)] = rep
    df = np.stack([ddy(f, k, grid.h) for k in range(D)])  # [k, i, j, beta, alpha, y]
    phi = np.empty((D, D, D, D, D, N, N))
    for k in range(D):
        for i in range(D):
            # phi[k, i, j, alpha, beta] = d_k f[i, j, beta, alpha] - d_i f[k, j, beta, alpha]
            diff = df[k, i] - df[i, k]
            phi[k, i] = np.swapaxes(diff, 1, 2)
    return DualCorrectorSet(grid, f, q, phi, residuals)


def _l2(values):
    """Discrete L2(Y) norm, root-sum-square over leading indices."""
    return float(np.sqrt(np.mean(np.asarray(values) ** 2, axis=(-2, -1)).sum()))


def verify_corrector_identities(correctors, dual, b, effective):
    """Discrete L2 residuals of the corrector and dual-corrector identities."""
    grid = correctors.grid
    h = grid.h
    bv = b.values if isinstance(b, BTensor) else np.asarray(b)
    chi, pi, q, phi = correctors.chi, correctors.pi, dual.q, dual.phi
    dphi = sum(ddy(phi[k], k, h) for k in range(D))  # [i, j, alpha, beta]
    dq = np.stack([ddy(q, a, h) for a in range(D)])  # [alpha, i, j, beta]
    decomposition = bv - dphi - np.transpose(dq, (1, 2, 0, 3, 4, 5))
    qpi = pi - sum(ddy(q[i], i, h) for i in range(D))  # [j, beta]
    div_b = sum(ddy(bv[i], i, h) for i in range(D))  # [j, alpha, beta]
    dpi = np.stack([ddy(pi, a, h) for a in range(D)])  # [alpha, j, beta]
    b1 = div_b - np.transpose(dpi, (1, 0, 2, 3, 4))
    skew = phi + np.swapaxes(phi, 0, 1)
    div_chi = sum(ddy(chi[:, :, a], a, h) for a in range(D))
    div_f = sum(ddy(dual.f[..., a, :, :], a, h) for a in range(D))
    means = [cell_mean(chi), cell_mean(pi), cell_mean(dual.f), cell_mean(q), cell_mean(bv)]
    return {
        "decomposition": _l2(decomposition),
        "qpi": _l2(qpi),
        "b1": _l2(b1),
        "skew": float(np.abs(skew).max()),
        "mean_zero": float(max(np.abs(m).max() for m in means)),
        "div_chi": _l2(div_chi),
        "div_f": _l2(div_f),
        "b_raw_mean": float(np.abs(b.raw_means).max()) if isinstance(b, BTensor) else 0.0,
        "ahat_lower": effective.lower,
    }
