"""Two-scale expansions, Steklov smoothing, cutoffs and the boundary corrector.

Fields on the domain are nodal arrays on a DomainGrid with the component
axes first.  Extensions live on a padded box with the same spacing, so the
domain nodes are a sub-block of the extended grid.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .domain import DomainField, DomainGrid, DomainOperator, StokesProblem, check_compatibility

D = 2
# steklov samples per grid spacing along each axis
SUBCELL = 2


class ExtensionError(ValueError):
    pass


@dataclass
class ExtendedField:
    """Values on [-pad, 1 + pad]^2 with the domain spacing.

    ``values`` has shape (..., M + 1 + 2 k, M + 1 + 2 k) where ``k`` is the
    number of pad nodes per side.
    """

    values: np.ndarray
    grid: DomainGrid
    k: int
    provenance: str

    @property
    def pad(self):
        return self.k * self.grid.h

    def coords(self):
        x = (np.arange(self.grid.M + 1 + 2 * self.k) - self.k) * self.grid.h
        return np.meshgrid(x, x, indexing="ij")

    def restrict(self):
        k = self.k
        return self.values[..., k:self.values.shape[-2] - k, k:self.values.shape[-1] - k]

    def gradient(self):
        """Centred differences; returns (..., j, n1, n2) on the same box
        (one-sided on the outermost pad nodes)."""
        h = self.grid.h
        return np.stack(np.gradient(self.values, h, axis=(-2, -1)), axis=-3)


def extend(values, grid, pad, formula=None):
    """Extend nodal values (..., M+1, M+1) to a padded box.

    With ``formula`` (a callable of points (..., 2) returning (..., C)) the
    pad is filled with the formula and the domain keeps the given discrete
    values.  Otherwise the field is reflected evenly across each face.
    """
    values = np.asarray(values, dtype=float)
    k = int(np.ceil(pad / grid.h - 1e-9))
    if k < 1:
        raise ExtensionError("pad must be at least one grid spacing")
    if formula is None:
        if k > grid.M:
            raise ExtensionError(f"pad {pad:g} exceeds the domain width for reflection")
        width = [(0, 0)] * (values.ndim - 2) + [(k, k), (k, k)]
        return ExtendedField(np.pad(values, width, mode="reflect"), grid, k, "reflection")
    x = (np.arange(grid.M + 1 + 2 * k) - k) * grid.h
    pts = np.stack(np.meshgrid(x, x, indexing="ij"), axis=-1)
    out = np.asarray(formula(pts), dtype=float)
    if values.ndim > 2:
        out = np.moveaxis(out, -1, 0)
    out = np.array(np.broadcast_to(out, values.shape[:-2] + out.shape[-2:]))
    out[..., k:k + grid.M + 1, k:k + grid.M + 1] = values
    return ExtendedField(out, grid, k, "analytic")


def required_pad(epsilon, grid):
    """Pad needed for smoothing at scale eps plus centred second differences."""
    return epsilon + 3 * grid.h


def _steklov_matrix(grid, k, epsilon, subcell=SUBCELL):
    """1D averaging over [x - eps, x] sampled at midpoints, linear interpolation.

    Maps extended nodes (M + 1 + 2k) to domain nodes (M + 1).
    """
    h = grid.h
    K = subcell * int(np.ceil(epsilon / h - 1e-12))
    z = (np.arange(K) + 0.5) / K
    x = np.arange(grid.M + 1) * h
    s = (x[:, None] - epsilon * z[None, :]) / h + k  # fractional extended index
    i0 = np.floor(s).astype(int)
    t = s - i0
    if i0.min() < 0 or i0.max() + 1 > grid.M + 2 * k:
        raise ExtensionError("extension pad too small for the smoothing radius")
    rows = np.repeat(np.arange(grid.M + 1), K)
    data = np.concatenate([((1 - t) / K).ravel(), (t / K).ravel()])
    cols = np.concatenate([i0.ravel(), (i0 + 1).ravel()])
    return sp.csr_matrix((data, (np.concatenate([rows, rows]), cols)),
                         shape=(grid.M + 1, grid.M + 1 + 2 * k))


def steklov_smooth(field, epsilon, values=None):
    """(S_eps u)(x) = average of u(x - eps z) over z in [0,1]^2, on domain nodes.

    ``values`` overrides ``field.values`` (same extended box), which lets
    derived quantities such as gradients be smoothed without rewrapping.
    """
    v = field.values if values is None else np.asarray(values)
    S = _steklov_matrix(field.grid, field.k, epsilon).toarray()
    return np.einsum("ia,...ab,jb->...ij", S, v, S, optimize=True)


def sample_periodic(cell_values, points):
    """Bilinear periodic interpolation of cell nodal values (..., N, N) at ``points`` (..., 2) in cell units."""
    cell_values = np.asarray(cell_values)
    N = cell_values.shape[-1]
    s = np.asarray(points, dtype=float) * N
    i = np.floor(s).astype(int)
    t = s - i
    i0, j0 = np.mod(i[..., 0], N), np.mod(i[..., 1], N)
    i1, j1 = np.mod(i0 + 1, N), np.mod(j0 + 1, N)
    t1, t2 = t[..., 0], t[..., 1]
    return ((1 - t1) * (1 - t2) * cell_values[..., i0, j0] + t1 * (1 - t2) * cell_values[..., i1, j0]
            + (1 - t1) * t2 * cell_values[..., i0, j1] + t1 * t2 * cell_values[..., i1, j1])


@dataclass
class TwoScaleData:
    """Oscillating and smoothed pieces shared by the expansions.

    chi: [j, beta, alpha, ...] samples of chi at x/eps on domain nodes
    pi: [j, beta, ...]
    grad: [beta, j, ...] = S_eps(d_j u0~^beta)
    hess: [beta, i, j, ...] = S_eps(d_i d_j u0~^beta)
    """

    epsilon: float
    grid: DomainGrid
    chi: np.ndarray
    pi: np.ndarray
    grad: np.ndarray
    hess: np.ndarray


def prepare_two_scale(extension, correctors, epsilon):
    grid = extension.grid
    if extension.pad < epsilon + 2 * grid.h - 1e-12:
        raise ExtensionError(f"pad {extension.pad:g} too small for eps = {epsilon:g}")
    y = grid.points() / epsilon
    chi = sample_periodic(correctors.chi, y)
    pi = sample_periodic(correctors.pi, y)
    g = extension.gradient()  # [beta, j, ...] on the extended box
    hh = np.stack(np.gradient(g, grid.h, axis=(-2, -1)), axis=-3)  # [beta, j, i, ...]
    hh = 0.5 * (hh + np.swapaxes(hh, 1, 2))
    return TwoScaleData(epsilon, grid, chi, pi, steklov_smooth(extension, epsilon, g),
                        steklov_smooth(extension, epsilon, hh))


def _chi_term(ts):
    # sum over (j, beta) of chi_j^{beta, alpha} S(d_j u^beta)
    return np.einsum("jbaxy,bjxy->axy", ts.chi, ts.grad)


def build_velocity_expansion(u0, ts):
    """v = u0 + eps chi(x/eps) S_eps(grad u0~)."""
    u = u0.u if isinstance(u0, DomainField) else np.asarray(u0)
    return u + ts.epsilon * _chi_term(ts)


def build_pressure_expansion(p0, ts):
    """p0 + pi(x/eps) S_eps(grad u0~) minus the discrete mean of the pi-term."""
    p = p0.p if isinstance(p0, DomainField) else np.asarray(p0)
    term = np.einsum("jbxy,bjxy->xy", ts.pi, ts.grad)
    w = ts.grid.weights()
    return p + term - np.sum(w * term) / np.sum(w)


def smoothstep(t):
    t = np.clip(t, 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


# max |smoothstep'| is 3/2; centred differences of the distance function
# have components at most 1, so |grad theta| <= 1.5 sqrt(2) / eps < 2.5 / eps
KAPPA = 2.5


@dataclass
class CutoffPair:
    theta: np.ndarray
    theta_wide: np.ndarray
    kappa: float
    kappa_wide: float
    epsilon: float


def build_cutoffs(epsilon, grid, kappa=KAPPA):
    """theta = 1 on the boundary, 0 beyond distance eps; the wide cutoff is
    1 within eps of the boundary and 0 beyond 2 eps."""
    if epsilon < 4 * grid.h:
        raise ValueError(f"eps = {epsilon:g} below 4 grid spacings; cutoffs unresolved")
    d = grid.distance_to_boundary()
    theta = 1.0 - smoothstep(d / epsilon)
    wide = 1.0 - smoothstep((d - epsilon) / epsilon)
    for name, f in (("theta", theta), ("theta_wide", wide)):
        g = np.stack(np.gradient(f, grid.h))
        if np.sqrt((g ** 2).sum(0)).max() > kappa / epsilon * (1 + 1e-12):
            raise ValueError(f"{name} gradient exceeds {kappa}/eps")
    return CutoffPair(theta, wide, kappa, kappa, epsilon)


@dataclass
class BoundaryCorrector:
    field: DomainField
    boundary: np.ndarray
    divergence: np.ndarray
    divergence_shift: float


def solve_boundary_corrector(A, ts, tol=1e-9, operator: Optional[DomainOperator] = None):
    """L_eps(w) + grad tau = 0, div w = eps chi(x/eps) : S_eps(grad^2 u0~), w = eps chi S_eps(grad u0~) on the boundary.

    The divergence data uses div_y chi = 0, so only the smoothed Hessian
    is differentiated.  Its discrete integral is matched to the boundary
    flux by a constant shift, which is returned.
    """
    grid = ts.grid
    bdata = ts.epsilon * _chi_term(ts)
    # sum over alpha, j, beta of chi_j^{beta, alpha} S(d_alpha d_j u^beta)
    g = ts.epsilon * np.einsum("jbaxy,bajxy->xy", ts.chi, ts.hess)
    problem = StokesProblem(grid, A, None, g, bdata, ts.epsilon)
    shift = -check_compatibility(problem)  # |domain| = 1
    problem.divergence = g + shift
    op = operator or DomainOperator(problem)
    field = op.solve(problem, tol)
    field.meta["divergence_shift"] = shift
    return BoundaryCorrector(field, bdata, problem.divergence, shift)
