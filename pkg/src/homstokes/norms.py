"""Discrete norms on the domain grid, boundary-layer integrals and slope fits."""

from dataclasses import dataclass

import numpy as np

KINDS = ("L2", "H1semi", "H1")


def _components(values, grid):
    v = np.asarray(values, dtype=float)
    if v.shape == grid.shape:
        v = v[None]
    return v


def discrete_norm(values, grid, kind="L2"):
    """Trapezoid-rule L2 norm; H1 seminorm from centred differences
    (one-sided at the boundary) integrated the same way."""
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}")
    v = _components(values, grid)
    w = grid.weights()
    l2sq = float(np.sum(w * (v ** 2).sum(axis=0)))
    if kind == "L2":
        return np.sqrt(l2sq)
    g = np.stack(np.gradient(v, grid.h, axis=(-2, -1)))
    semisq = float(np.sum(w * (g ** 2).sum(axis=(0, 1))))
    if kind == "H1semi":
        return np.sqrt(semisq)
    return np.sqrt(l2sq + semisq)


@dataclass
class NormReport:
    l2: float
    h1semi: float
    h1: float
    M: int


def norm_report(values, grid):
    l2 = discrete_norm(values, grid, "L2")
    semi = discrete_norm(values, grid, "H1semi")
    return NormReport(l2, semi, float(np.sqrt(l2 ** 2 + semi ** 2)), grid.M)


def boundary_layer_integral(values, grid, r):
    """Quadrature of |u|^2 over the strip of width r along the boundary.

    Computed as the whole-domain trapezoid rule minus the trapezoid rule on
    the inner square [r, 1 - r]^2, with r rounded to the nearest node.
    """
    if r < grid.h * (1 - 1e-12):
        raise ValueError("strip width below the grid spacing")
    v = _components(values, grid)
    k = int(round(r / grid.h))
    w1 = np.zeros(grid.M + 1)
    if 2 * k < grid.M:
        w1[k:grid.M + 1 - k] = grid.h
        w1[k] = w1[grid.M - k] = 0.5 * grid.h
    sq = (v ** 2).sum(axis=0)
    return float(np.sum(grid.weights() * sq) - np.sum(np.outer(w1, w1) * sq))


def boundary_layer_constant(values, grid, r):
    """C in  int_{strip r} |u|^2 <= C r |u|_{H1} |u|_{L2};  None for a zero field."""
    rep = norm_report(values, grid)
    if rep.l2 == 0.0:
        return None
    return boundary_layer_integral(values, grid, r) / (r * rep.h1 * rep.l2)


class FitError(ValueError):
    pass


@dataclass
class RateFit:
    slope: float
    intercept: float
    r2: float
    points: int


def fit_rate(eps, errors):
    """Least squares of log(error) against log(eps)."""
    eps = np.asarray(eps, dtype=float)
    err = np.asarray(errors, dtype=float)
    if eps.size < 2 or eps.size != err.size:
        raise FitError("need at least two (eps, error) pairs")
    if np.any(err <= 0) or np.any(eps <= 0) or not np.all(np.isfinite(err)):
        raise FitError("errors and eps must be positive and finite")
    x, y = np.log(eps), np.log(err)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    tot = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 if tot == 0 else float(1.0 - np.sum(resid ** 2) / tot)
    return RateFit(float(slope), float(intercept), min(max(r2, 0.0), 1.0), int(eps.size))
