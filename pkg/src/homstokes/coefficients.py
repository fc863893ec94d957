"""Periodic fourth-order coefficient tensors a_ij^{alpha beta}(y).

Arrays are indexed ``[..., i, j, alpha, beta]``; the bilinear form is
``a_ij^{ab} d_j u^b d_i v^a``.
"""

from dataclasses import dataclass, field

import numpy as np

FAMILIES = ("constant", "laminate", "trig2d", "nonsymmetric")
TWO_PI = 2.0 * np.pi
# skew perturbation amplitude relative to the scalar offset
SKEW_FRACTION = 0.1

_DELTA = np.einsum("ij,ab->ijab", np.eye(2), np.eye(2))
_SKEW = np.einsum("ij,ab->ijab", np.array([[0.0, 1.0], [-1.0, 0.0]]), np.eye(2))


class CoefficientError(ValueError):
    pass


@dataclass(frozen=True)
class CoefficientTensor:
    family: str
    params: tuple
    mu: float
    dim: int = 2
    adjoint: bool = False
    _matrix: np.ndarray = field(default=None, repr=False, compare=False)

    def _raw(self, y):
        y = np.asarray(y, dtype=float)
        lead = y.shape[:-1]
        if self.family == "constant":
            return np.broadcast_to(self._matrix, lead + (2, 2, 2, 2)).copy()
        y1, y2 = y[..., 0], y[..., 1]
        c, b = self.params
        if self.family == "laminate":
            s = c + b * np.sin(TWO_PI * y1)
            return s[..., None, None, None, None] * _DELTA
        s = c + b * np.sin(TWO_PI * y1) * np.sin(TWO_PI * y2)
        out = s[..., None, None, None, None] * _DELTA
        if self.family == "nonsymmetric":
            k = SKEW_FRACTION * c * np.cos(TWO_PI * y1) * np.cos(TWO_PI * y2)
            out = out + k[..., None, None, None, None] * _SKEW
        return out

    def _raw_grad(self, y):
        y = np.asarray(y, dtype=float)
        lead = y.shape[:-1]
        out = np.zeros(lead + (2, 2, 2, 2, 2))
        if self.family == "constant":
            return out
        y1, y2 = y[..., 0], y[..., 1]
        c, b = self.params
        s1, c1 = np.sin(TWO_PI * y1), np.cos(TWO_PI * y1)
        s2, c2 = np.sin(TWO_PI * y2), np.cos(TWO_PI * y2)
        if self.family == "laminate":
            out[..., 0] = (TWO_PI * b * c1)[..., None, None, None, None] * _DELTA
            return out
        out[..., 0] = (TWO_PI * b * c1 * s2)[..., None, None, None, None] * _DELTA
        out[..., 1] = (TWO_PI * b * s1 * c2)[..., None, None, None, None] * _DELTA
        if self.family == "nonsymmetric":
            k = SKEW_FRACTION * c * TWO_PI
            out[..., 0] += (-k * s1 * c2)[..., None, None, None, None] * _SKEW
            out[..., 1] += (-k * c1 * s2)[..., None, None, None, None] * _SKEW
        return out

    def evaluate(self, y):
        """Tensor at points ``y`` of shape (..., 2) -> (..., 2, 2, 2, 2)."""
        a = self._raw(y)
        return np.swapaxes(np.swapaxes(a, -4, -3), -2, -1) if self.adjoint else a

    def gradient(self, y):
        """d a / d y_k, shape (..., 2, 2, 2, 2, k)."""
        g = self._raw_grad(y)
        return np.swapaxes(np.swapaxes(g, -5, -4), -3, -2) if self.adjoint else g

    def adjoint_coefficient(self):
        return adjoint_coefficient(self)

    @property
    def is_constant(self):
        return self.family == "constant"

    def cache_tag(self):
        tag = self.family + ("*" if self.adjoint else "")
        return tag, ",".join(repr(float(p)) for p in self.params)


def _form_bounds(a):
    """Extremal eigenvalues of the symmetric part of a as a (d^2 x d^2) form."""
    lead = a.shape[:-4]
    # xi flattened as (i, alpha); a[i, j, alpha, beta] -> M[(i, alpha), (j, beta)]
    m = np.moveaxis(a, -3, -2).reshape(lead + (4, 4))
    sym = 0.5 * (m + np.swapaxes(m, -1, -2))
    ev = np.linalg.eigvalsh(sym)
    return ev[..., 0], ev[..., -1]


def build_coefficient(family, params=()):
    """Construct one of the built-in coefficient families.

    ``constant`` accepts no parameter (identity), one scalar multiple of the
    identity, or 16 entries of a_ij^{ab} in ``[i, j, alpha, beta]`` order.
    ``laminate``, ``trig2d`` and ``nonsymmetric`` take ``(c, b)`` with
    scalar factor ``c + b * sin(2 pi y1)`` (laminate) or
    ``c + b * sin(2 pi y1) sin(2 pi y2)``.
    """
    if family not in FAMILIES:
        raise CoefficientError(f"unknown coefficient family {family!r}")
    params = tuple(float(p) for p in params)
    if family == "constant":
        if len(params) == 0:
            mat = _DELTA.copy()
        elif len(params) == 1:
            mat = params[0] * _DELTA
        elif len(params) == 16:
            mat = np.array(params).reshape(2, 2, 2, 2)
        else:
            raise CoefficientError("constant family takes 0, 1 or 16 parameters")
        lo, hi = _form_bounds(mat)
        lo, hi = float(lo), float(hi)
        if not np.all(np.isfinite(mat)) or lo <= 0:
            raise CoefficientError(f"constant tensor not elliptic (min form eigenvalue {lo:g})")
        mat.setflags(write=False)
        return CoefficientTensor(family, params, min(lo, 1.0 / hi), _matrix=mat)
    if len(params) != 2:
        raise CoefficientError(f"{family} takes parameters (c, b)")
    c, b = params
    lo, hi = c - abs(b), c + abs(b)
    if not (np.isfinite(c) and np.isfinite(b)) or lo <= 0:
        raise CoefficientError(f"{family}({c:g}, {b:g}) degenerates: scalar factor reaches {lo:g}")
    return CoefficientTensor(family, params, min(lo, 1.0 / hi))


def adjoint_coefficient(A):
    """A* with (a*)_ij^{ab} = a_ji^{ba}."""
    return CoefficientTensor(A.family, A.params, A.mu, A.dim, not A.adjoint, A._matrix)


@dataclass
class EllipticityReport:
    lower: float
    upper: float
    worst_point: tuple
    declared_mu: float

    @property
    def passed(self):
        return self.lower >= self.declared_mu and self.upper <= 1.0 / self.declared_mu

    @property
    def largest_admissible_mu(self):
        return min(self.lower, 1.0 / self.upper)


def verify_ellipticity(A, sample_resolution=64, declared_mu=None, n_random=32, seed=0):
    """Sample the quadratic form of A on a y-grid.

    At each sample point the exact extremal Rayleigh quotients over all
    d x d matrices xi are the extreme eigenvalues of the symmetrised form;
    random xi are checked against them as a consistency guard.
    """
    if sample_resolution < 2:
        raise ValueError("sample_resolution must be >= 2")
    t = np.arange(sample_resolution) / sample_resolution
    y = np.stack(np.meshgrid(t, t, indexing="ij"), axis=-1).reshape(-1, 2)
    a = A.evaluate(y)
    lo, hi = _form_bounds(a)
    rng = np.random.default_rng(seed)
    xi = rng.standard_normal((n_random, 2, 2))  # [r, i, alpha]
    q = np.einsum("rix,nijxy,rjy->nr", xi, a, xi) / np.einsum("rix,rix->r", xi, xi)
    assert np.all(q >= lo[:, None] - 1e-12) and np.all(q <= hi[:, None] + 1e-12)
    k = int(np.argmin(lo))
    mu = A.mu if declared_mu is None else float(declared_mu)
    return EllipticityReport(float(lo.min()), float(hi.max()), tuple(y[k]), mu)
