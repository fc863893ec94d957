"""Dirichlet Stokes problems on the unit square.

Solves  -div(A(x/eps) grad u) + grad p = F,  div u = g,  u = f on the
boundary, with the same Q1-iso-Q2/Q1 pair as the cell problems.  Boundary
velocity dofs are eliminated and the pressure is returned with zero mean.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
import scipy.sparse as sp

from . import fem
from .cell import EffectiveTensor, PreconditionError
from .coefficients import CoefficientTensor

D = 2
TWO_PI = 2.0 * np.pi
# fine-scale resolution rule: grid spacing at most eps / RESOLUTION
RESOLUTION = 8


class DomainGrid:
    """Unit square with M intervals per axis (velocity nodes), M >= 16."""

    def __init__(self, M):
        M = int(M)
        if M < 16 or M % 2:
            raise ValueError(f"domain grid needs an even M >= 16, got {M}")
        self.M = M
        self.h = 1.0 / M
        self.fem = fem.Q1Grid(M)
        self.pfem = fem.coarse_grid(self.fem)

    @property
    def shape(self):
        return (self.M + 1, self.M + 1)

    def coords(self):
        return self.fem.coords()

    def points(self):
        return np.stack(self.coords(), axis=-1)

    def boundary_sets(self):
        """Flat node ids per side; corners go to the bottom/top sides so
        the four sets partition the boundary."""
        n = self.M + 1
        ids = np.arange(n * n).reshape(n, n)
        return {
            "bottom": ids[:, 0],
            "top": ids[:, -1],
            "left": ids[0, 1:-1],
            "right": ids[-1, 1:-1],
        }

    def boundary_mask(self):
        return self.fem.boundary_mask()

    def weights(self):
        return self.fem.node_weights()

    def distance_to_boundary(self):
        x1, x2 = self.coords()
        return np.minimum(np.minimum(x1, 1 - x1), np.minimum(x2, 1 - x2))


@dataclass
class DomainField:
    grid: DomainGrid
    u: np.ndarray  # (2, M+1, M+1)
    p: np.ndarray  # (M+1, M+1), bilinear prolongation of the coarse pressure
    p_mean: float = 0.0  # mean removed during normalization
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float)
        self.p = np.asarray(self.p, dtype=float)
        if self.u.shape != (D,) + self.grid.shape or self.p.shape != self.grid.shape:
            raise ValueError("field extents do not match the domain grid")

    def pressure_mean(self):
        return float(np.sum(self.grid.weights() * self.p))


Force = Union[Callable, np.ndarray, None]


@dataclass
class StokesProblem:
    """Data for one Dirichlet Stokes solve.

    ``coefficient`` is a CoefficientTensor evaluated at x/eps (``epsilon``
    required) or an EffectiveTensor / constant (2,2,2,2) array.  ``force``
    is either a callable of points (..., 2) -> (..., 2), sampled at
    quadrature points, or nodal values (2, M+1, M+1).  ``divergence`` and
    ``boundary`` are nodal arrays; only boundary nodes of ``boundary`` are
    read.  ``exact`` optionally holds callables (u, p) for manufactured
    cases.
    """

    grid: DomainGrid
    coefficient: object
    force: Force = None
    divergence: Optional[np.ndarray] = None
    boundary: Optional[np.ndarray] = None
    epsilon: Optional[float] = None
    exact: Optional[tuple] = None

    def __post_init__(self):
        if isinstance(self.coefficient, CoefficientTensor) and not self.coefficient.is_constant:
            if self.epsilon is None or not 0 < self.epsilon <= 1:
                raise ValueError("oscillating coefficients need 0 < epsilon <= 1")


def _coefficient_at(problem, x):
    c = problem.coefficient
    if isinstance(c, CoefficientTensor):
        y = x if problem.epsilon is None else x / problem.epsilon
        return c.evaluate(y)
    if isinstance(c, EffectiveTensor):
        return c.evaluate(x)
    c = np.asarray(c, dtype=float)
    return np.broadcast_to(c, x.shape[:-1] + (2, 2, 2, 2))


def _edge_weights(grid):
    """Trapezoid weights along one side."""
    w = np.full(grid.M + 1, grid.h)
    w[0] = w[-1] = 0.5 * grid.h
    return w


def boundary_flux(grid, f):
    """Trapezoid rule for the integral of f . n over the boundary."""
    if f is None:
        return 0.0
    f = np.asarray(f, dtype=float)
    w = _edge_weights(grid)
    return float(w @ f[0, -1, :] - w @ f[0, 0, :] + w @ f[1, :, -1] - w @ f[1, :, 0])


def check_compatibility(problem):
    """Discrete integral of g minus boundary integral of f . n."""
    grid = problem.grid
    total = 0.0
    if problem.divergence is not None:
        total = float(np.sum(grid.weights() * problem.divergence))
    return total - boundary_flux(grid, problem.boundary)


def _data_scale(problem):
    grid = problem.grid
    s = 0.0
    if problem.divergence is not None:
        s += float(np.sqrt(np.sum(grid.weights() * problem.divergence ** 2)))
    if problem.boundary is not None:
        s += float(np.abs(np.asarray(problem.boundary)[:, grid.boundary_mask()]).max(initial=0.0))
    return s


class DomainOperator:
    """Assembled and preconditioned operator for one coefficient on one grid.

    Reusable across right-hand sides (the fine problem and the boundary
    corrector share one instance).
    """

    def __init__(self, problem):
        grid = problem.grid
        self.grid = grid
        vg, pg = grid.fem, grid.pfem
        self.cq = _coefficient_at(problem, vg.quad_points())
        self.K = fem.stiffness(vg, self.cq)
        self.B = fem.divergence(vg, pg)
        nn = vg.num_nodes
        inner = np.flatnonzero(~grid.boundary_mask().ravel())
        self.free_u = np.concatenate([inner, inner + nn])
        bnd = np.flatnonzero(grid.boundary_mask().ravel())
        self.fixed_u = np.concatenate([bnd, bnd + nn])
        ppts = np.stack(pg.coords(), axis=-1)
        eta = np.einsum("...ijij->...", _coefficient_at(problem, ppts)).ravel() / D ** 2
        self.schur = fem.schur_diagonal(pg, eta)
        self.pweights = np.asarray(fem.mass(pg).sum(axis=1)).ravel()
        lap = fem.DirichletLaplacianInverse(grid.M, grid.h, float(np.mean(eta)))
        self.solver = fem.SaddleSolver(self.K, self.B, self.schur, self.free_u,
                                       np.arange(pg.num_nodes), velocity_solve=lap,
                                       pressure_weights=self.pweights)
        # fine-grid quadrature of coarse shape functions: int psi_k v for nodal v
        e1, e2 = (a.ravel() for a in vg.element_index())
        psi = fem._coarse_shape_on_fine()[e1 % 2, e2 % 2]  # (ne, q, 4)
        pconn = np.stack([pg.node_id(e1 // 2 + a, e2 // 2 + b) for a, b in fem.LOCAL_OFFSETS], axis=1)
        vals = vg.h ** 2 * np.einsum("q,eqk,qa->eka", fem.QUAD_W, psi, fem.PHI_Q)
        vconn = vg.element_nodes()
        self.P = sp.csr_matrix(
            (vals.ravel(), (np.repeat(pconn, 4, axis=1).ravel(), np.tile(vconn, (1, 4)).ravel())),
            shape=(pg.num_nodes, nn))
        self.Mv = fem.mass(vg)

    def force_load(self, force):
        vg = self.grid.fem
        if force is None:
            return np.zeros(2 * vg.num_nodes)
        if callable(force):
            return fem.load(vg, force(vg.quad_points()))
        f = np.asarray(force, dtype=float).reshape(2, -1)
        return np.concatenate([self.Mv @ f[0], self.Mv @ f[1]])

    def solve(self, problem, tol=1e-9):
        grid = self.grid
        nn = grid.fem.num_nodes
        if problem.grid is not grid and problem.grid.M != grid.M:
            raise ValueError("problem and operator grids differ")
        comp = check_compatibility(problem)
        if abs(comp) > 1e-10 * (_data_scale(problem) + 1e-30):
            raise PreconditionError(f"incompatible data: residual {comp:.3e}")
        ub = np.zeros(2 * nn)
        if problem.boundary is not None:
            ub[self.fixed_u] = np.asarray(problem.boundary, dtype=float).reshape(-1)[self.fixed_u]
        ru = self.force_load(problem.force) - self.K @ ub
        # B u = -int psi g
        gp = np.zeros(grid.pfem.num_nodes)
        if problem.divergence is not None:
            gp = -(self.P @ np.asarray(problem.divergence, dtype=float).ravel())
        rp = gp - self.B @ ub
        # remove the discrete compatibility defect: a constant shift of g
        shift = rp.sum() / self.pweights.sum()
        rp = rp - shift * self.pweights
        sol = self.solver
        uf, pc, res = sol.solve(ru[self.free_u], rp, tol=tol)
        u = ub.copy()
        u[self.free_u] = uf
        pmean = float(self.pweights @ pc / self.pweights.sum())
        pc = pc - pmean
        p = fem.prolong_pressure(grid.pfem, pc)
        div_res = float(np.linalg.norm(self.B @ u - gp + shift * self.pweights))
        meta = {"residual": res, "iterations": sol.iterations, "divergence_residual": div_res,
                "g_shift": float(shift), "compatibility": comp, "warnings": []}
        if problem.epsilon is not None and isinstance(problem.coefficient, CoefficientTensor) \
                and not problem.coefficient.is_constant and grid.h > problem.epsilon / RESOLUTION:
            meta["warnings"].append(
                f"under-resolved: h = {grid.h:.4g} > eps/{RESOLUTION} = {problem.epsilon / RESOLUTION:.4g}")
        return DomainField(grid, u.reshape((D,) + grid.shape), p, pmean, meta)


def solve_dirichlet_stokes(problem, tol=1e-9, operator=None):
    """Solve one Dirichlet Stokes problem; pressure returned with zero mean."""
    op = operator or DomainOperator(problem)
    return op.solve(problem, tol)


def solve_homogenized(effective, F, g, f, grid, tol=1e-9):
    """Constant-coefficient problem with the effective tensor."""
    return solve_dirichlet_stokes(StokesProblem(grid, effective, F, g, f), tol)


# ---------------------------------------------------------------------------
# manufactured data

def vortex_velocity(x):
    """u = (d2 psi, -d1 psi) with psi = sin^2(pi x1) sin^2(pi x2)."""
    x1, x2 = x[..., 0], x[..., 1]
    s1, s2 = np.sin(np.pi * x1) ** 2, np.sin(np.pi * x2) ** 2
    return np.stack([np.pi * s1 * np.sin(TWO_PI * x2), -np.pi * np.sin(TWO_PI * x1) * s2], axis=-1)


def vortex_gradient(x):
    """[..., alpha, j] = d_j u^alpha."""
    x1, x2 = x[..., 0], x[..., 1]
    pi2 = np.pi ** 2
    s1, s2 = np.sin(np.pi * x1) ** 2, np.sin(np.pi * x2) ** 2
    ss = np.sin(TWO_PI * x1) * np.sin(TWO_PI * x2)
    g = np.empty(x.shape[:-1] + (2, 2))
    g[..., 0, 0] = pi2 * ss
    g[..., 0, 1] = 2 * pi2 * s1 * np.cos(TWO_PI * x2)
    g[..., 1, 0] = -2 * pi2 * np.cos(TWO_PI * x1) * s2
    g[..., 1, 1] = -pi2 * ss
    return g


def vortex_hessian(x):
    """[..., alpha, i, j] = d_i d_j u^alpha."""
    x1, x2 = x[..., 0], x[..., 1]
    pi3 = np.pi ** 3
    s1, s2 = np.sin(np.pi * x1) ** 2, np.sin(np.pi * x2) ** 2
    a1, b1 = np.sin(TWO_PI * x1), np.cos(TWO_PI * x1)
    a2, b2 = np.sin(TWO_PI * x2), np.cos(TWO_PI * x2)
    H = np.empty(x.shape[:-1] + (2, 2, 2))
    H[..., 0, 0, 0] = 2 * pi3 * b1 * a2
    H[..., 0, 0, 1] = H[..., 0, 1, 0] = 2 * pi3 * a1 * b2
    H[..., 0, 1, 1] = -4 * pi3 * s1 * a2
    H[..., 1, 0, 0] = 4 * pi3 * a1 * s2
    H[..., 1, 0, 1] = H[..., 1, 1, 0] = -2 * pi3 * b1 * a2
    H[..., 1, 1, 1] = -2 * pi3 * a1 * b2
    return H


def vortex_pressure(x):
    return np.sin(TWO_PI * x[..., 0]) * np.cos(TWO_PI * x[..., 1])


def vortex_pressure_gradient(x):
    x1, x2 = x[..., 0], x[..., 1]
    return TWO_PI * np.stack([np.cos(TWO_PI * x1) * np.cos(TWO_PI * x2),
                              -np.sin(TWO_PI * x1) * np.sin(TWO_PI * x2)], axis=-1)


def vortex_force(coefficient, epsilon=None):
    """F = -div(A grad u) + grad p for the vortex pair, as a callable.

    With an oscillating A the chain rule gives the O(1/eps) term
    -(1/eps) (d_{y_i} a_ij^{ab})(x/eps) d_j u^b.
    """

    def force(x):
        x = np.asarray(x, dtype=float)
        G = vortex_gradient(x)
        H = vortex_hessian(x)
        if isinstance(coefficient, CoefficientTensor):
            y = x if epsilon is None else x / epsilon
            a = coefficient.evaluate(y)
            da = coefficient.gradient(y)
            scale = 1.0 if epsilon is None else 1.0 / epsilon
            div_a = scale * np.einsum("...ijabi->...jab", da)
        else:
            a = np.broadcast_to(np.asarray(getattr(coefficient, "values", coefficient)),
                                x.shape[:-1] + (2, 2, 2, 2))
            div_a = 0.0
        F = -np.einsum("...ijab,...bij->...a", a, H) + vortex_pressure_gradient(x)
        if not np.isscalar(div_a):
            F = F - np.einsum("...jab,...bj->...a", div_a, G)
        return F

    return force


RECIPES = ("zero", "vortex")


def manufactured_problem(recipe, coefficient, grid, epsilon=None):
    """Problem with an attached exact solution.

    ``zero`` is the all-zero problem; ``vortex`` is the stream-function
    pair above, which is divergence free and vanishes on the boundary.
    """
    if recipe == "zero":
        zero = (lambda x: np.zeros(np.shape(x)[:-1] + (2,)), lambda x: np.zeros(np.shape(x)[:-1]))
        return StokesProblem(grid, coefficient, None, None, None, epsilon, zero)
    if recipe == "vortex":
        return StokesProblem(grid, coefficient, vortex_force(coefficient, epsilon), None, None,
                             epsilon, (vortex_velocity, vortex_pressure))
    raise ValueError(f"unknown recipe {recipe!r}; expected one of {RECIPES}")
