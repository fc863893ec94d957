import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from homstokes import twoscale
from homstokes.cell import CellGrid, CorrectorSet
from homstokes.coefficients import build_coefficient
from homstokes.domain import DomainGrid, vortex_velocity
from homstokes.twoscale import (ExtensionError, build_cutoffs, build_pressure_expansion,
                                build_velocity_expansion, extend, prepare_two_scale, sample_periodic,
                                solve_boundary_corrector, steklov_smooth)


def _x(grid):
    return grid.coords()


def test_extend_constant():
    g = DomainGrid(16)
    ext = extend(np.full(g.shape, 3.0), g, 0.25)
    assert np.all(ext.values == 3.0) and ext.provenance == "reflection"


def test_reflection_of_x1():
    g = DomainGrid(16)
    ext = extend(_x(g)[0], g, 0.5)
    x1 = ext.coords()[0]
    i = np.argmin(np.abs(x1[:, 0] + 0.25))
    assert ext.values[i, 5] == pytest.approx(0.25)


def test_analytic_extension_keeps_domain_values():
    g = DomainGrid(16)
    u = np.moveaxis(vortex_velocity(g.points()), -1, 0) + 1e-3
    ext = extend(u, g, 0.2, vortex_velocity)
    assert ext.provenance == "analytic"
    assert np.array_equal(ext.restrict(), u)
    xe = np.stack(ext.coords(), axis=-1)
    assert np.allclose(ext.values[:, 0, :], np.moveaxis(vortex_velocity(xe), -1, 0)[:, 0, :])


def test_reflection_pad_too_large():
    g = DomainGrid(16)
    with pytest.raises(ExtensionError):
        extend(np.zeros(g.shape), g, 1.5)


def test_smoothing_needs_pad():
    g = DomainGrid(32)
    ext = extend(np.zeros(g.shape), g, 0.05)
    with pytest.raises(ExtensionError):
        steklov_smooth(ext, 0.25)


def test_steklov_constant_and_linear():
    g = DomainGrid(32)
    x1 = _x(g)[0]
    eps = 0.25
    ext = extend(np.full(g.shape, 2.0), g, twoscale.required_pad(eps, g))
    assert np.allclose(steklov_smooth(ext, eps), 2.0)
    ext = extend(x1, g, twoscale.required_pad(eps, g), lambda p: p[..., 0])
    assert np.abs(steklov_smooth(ext, eps) - (x1 - eps / 2)).max() < 1e-14


@pytest.mark.parametrize("eps", [1.0, 0.25, 0.125])
def test_steklov_sine(eps):
    g = DomainGrid(128)
    x1 = _x(g)[0]
    f = lambda p: np.sin(2 * np.pi * p[..., 0])  # noqa: E731
    ext = extend(f(g.points()), g, twoscale.required_pad(eps, g), f)
    err = np.abs(steklov_smooth(ext, eps) - oracles.steklov_sine(x1, eps)).max()
    assert err < 2e-3


@settings(max_examples=10, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 2 ** 16))
def test_steklov_linearity(a, b, seed):
    g = DomainGrid(16)
    rng = np.random.default_rng(seed)
    k = 6
    shape = (g.M + 1 + 2 * k,) * 2
    u, v = rng.standard_normal(shape), rng.standard_normal(shape)
    mk = lambda w: twoscale.ExtendedField(w, g, k, "random")  # noqa: E731
    lhs = steklov_smooth(mk(a * u + b * v), 0.25)
    rhs = a * steklov_smooth(mk(u), 0.25) + b * steklov_smooth(mk(v), 0.25)
    assert np.abs(lhs - rhs).max() <= 1e-12 * (1 + np.abs(lhs).max())


def test_sample_periodic_constant_and_nodes():
    vals = np.random.default_rng(0).standard_normal((16, 16))
    pts = np.stack(np.meshgrid(np.arange(16) / 16 + 3, np.arange(16) / 16 - 2, indexing="ij"), axis=-1)
    assert np.allclose(sample_periodic(vals, pts), vals, atol=1e-12)
    assert np.allclose(sample_periodic(np.full((16, 16), 1.5), np.random.rand(7, 2) * 10), 1.5)


def test_sample_periodic_refinement():
    pts = np.random.default_rng(3).random((200, 2)) * 5
    exact = oracles.laminate_chi(np.mod(pts[:, 0], 1.0))
    errs = []
    for N in (16, 32, 64):
        y1 = np.arange(N) / N
        cell = np.repeat(oracles.laminate_chi(y1)[:, None], N, axis=1)
        errs.append(np.abs(sample_periodic(cell, pts) - exact).max())
    assert errs[0] / errs[1] >= 3.5 and errs[1] / errs[2] >= 3.5


def _zero_correctors(N=16):
    return CorrectorSet(CellGrid(N), np.zeros((2, 2, 2, N, N)), np.zeros((2, 2, N, N)))


def _prepare(u, g, cs, eps, formula=None):
    ext = extend(u, g, twoscale.required_pad(eps, g), formula)
    return prepare_two_scale(ext, cs, eps)


def test_zero_correctors_give_u0_and_p0():
    g = DomainGrid(32)
    u = np.moveaxis(vortex_velocity(g.points()), -1, 0)
    ts = _prepare(u, g, _zero_correctors(), 0.25, vortex_velocity)
    assert np.array_equal(build_velocity_expansion(u, ts), u)
    p = np.random.default_rng(0).standard_normal(g.shape)
    assert np.array_equal(build_pressure_expansion(p, ts), p)
    A = build_coefficient("laminate", (2, 1))
    bc = solve_boundary_corrector(A, ts)
    assert np.abs(bc.field.u).max() == 0 and np.abs(bc.field.p).max() == 0


def test_pressure_expansion_mean(laminate_correctors_64):
    g = DomainGrid(32)
    u = np.moveaxis(vortex_velocity(g.points()), -1, 0)
    ts = _prepare(u, g, laminate_correctors_64, 0.25, vortex_velocity)
    p0 = np.zeros(g.shape)
    out = build_pressure_expansion(p0, ts)
    w = g.weights()
    assert abs(np.sum(w * (out - p0))) <= 1e-12 * max(1.0, np.abs(out).max())


def test_laminate_linear_fields(laminate_correctors_64):
    g = DomainGrid(64)
    x1, x2 = _x(g)
    eps = 0.25
    cs = laminate_correctors_64
    # u0 = (x2, 0) pairs with chi_2^1, which vanishes for the laminate
    u = np.stack([x2, np.zeros_like(x2)])
    ts = _prepare(u, g, cs, eps, lambda p: np.stack([p[..., 1], 0 * p[..., 1]], axis=-1))
    assert np.abs(build_velocity_expansion(u, ts) - u).max() < 1e-6
    assert np.abs(build_pressure_expansion(np.zeros(g.shape), ts)).max() < 1e-6
    # u0 = (0, x1) pairs with chi_1^2 = (0, chi(y1))
    u = np.stack([np.zeros_like(x1), x1])
    ts = _prepare(u, g, cs, eps, lambda p: np.stack([0 * p[..., 0], p[..., 0]], axis=-1))
    v = build_velocity_expansion(u, ts)
    ref = x1 + eps * oracles.laminate_chi(np.mod(x1[:, 0] / eps, 1.0))[:, None]
    assert np.abs(v[0]).max() < 1e-6
    assert np.abs(v[1] - ref).max() < 2e-3 * eps


def test_expansion_difference_is_order_eps(laminate_correctors_64):
    diffs = []
    for eps in (1 / 4, 1 / 8, 1 / 16):
        g = DomainGrid(int(8 / eps))
        u = np.moveaxis(vortex_velocity(g.points()), -1, 0)
        ts = _prepare(u, g, laminate_correctors_64, eps, vortex_velocity)
        d = build_velocity_expansion(u, ts) - u
        diffs.append(np.sqrt(np.sum(g.weights() * (d ** 2).sum(0))) / eps)
    assert max(diffs) / min(diffs) < 1.5


def test_cutoffs():
    g = DomainGrid(64)
    eps = 1 / 8
    c = build_cutoffs(eps, g)
    d = g.distance_to_boundary()
    assert np.all(c.theta[g.boundary_mask()] == 1.0)
    assert np.all(c.theta[d >= eps] == 0.0) and np.all(c.theta_wide[d >= 2 * eps] == 0.0)
    assert np.all(c.theta_wide[d <= eps] == 1.0)
    assert 0 <= c.theta.min() and c.theta.max() <= 1
    for f in (c.theta, c.theta_wide):
        grad = np.sqrt((np.stack(np.gradient(f, g.h)) ** 2).sum(0))
        assert grad.max() <= 2.5 / eps


def test_cutoffs_need_resolution():
    with pytest.raises(ValueError):
        build_cutoffs(1 / 32, DomainGrid(64))
