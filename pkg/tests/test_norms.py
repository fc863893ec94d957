import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from homstokes.domain import DomainGrid, vortex_velocity
from homstokes.norms import (FitError, boundary_layer_constant, boundary_layer_integral, discrete_norm,
                             fit_rate, norm_report)


def test_constant_l2():
    g = DomainGrid(32)
    assert discrete_norm(np.ones(g.shape), g) == pytest.approx(1.0, abs=1e-14)


def test_sine_l2_converges():
    errs = []
    for M in (16, 32, 64):
        g = DomainGrid(M)
        errs.append(abs(discrete_norm(np.sin(2 * np.pi * g.coords()[0]), g) - 1 / np.sqrt(2)))
    assert errs[-1] < 1e-12 or errs[-1] < errs[0]
    assert errs[-1] < 1e-3


def test_linear_seminorm():
    g = DomainGrid(32)
    assert discrete_norm(g.coords()[0], g, "H1semi") == pytest.approx(1.0, abs=1e-13)


def test_report_invariants():
    g = DomainGrid(16)
    u = np.random.default_rng(1).standard_normal((2,) + g.shape)
    r = norm_report(u, g)
    assert r.h1 ** 2 == pytest.approx(r.l2 ** 2 + r.h1semi ** 2, rel=1e-14)
    z = norm_report(np.zeros(g.shape), g)
    assert (z.l2, z.h1semi, z.h1) == (0.0, 0.0, 0.0)


def test_unknown_kind():
    g = DomainGrid(16)
    with pytest.raises(ValueError):
        discrete_norm(np.ones(g.shape), g, "H2")


@settings(max_examples=20, deadline=None)
@given(st.one_of(st.just(0.0), st.floats(1e-100, 1e3), st.floats(-1e3, -1e-100)), st.integers(0, 2 ** 16))
def test_homogeneity(alpha, seed):
    g = DomainGrid(16)
    u = np.random.default_rng(seed).standard_normal((2,) + g.shape)
    for kind in ("L2", "H1semi", "H1"):
        assert discrete_norm(alpha * u, g, kind) == pytest.approx(abs(alpha) * discrete_norm(u, g, kind),
                                                                 rel=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 16))
def test_triangle(seed):
    g = DomainGrid(16)
    rng = np.random.default_rng(seed)
    u, v = rng.standard_normal((2, 2) + g.shape)
    for kind in ("L2", "H1semi", "H1"):
        assert discrete_norm(u + v, g, kind) <= discrete_norm(u, g, kind) + discrete_norm(v, g, kind) + 1e-12


def test_strip_area():
    g = DomainGrid(40)
    assert boundary_layer_integral(np.ones(g.shape), g, 0.1) == pytest.approx(oracles.strip_area(0.1), abs=1e-13)
    assert boundary_layer_constant(np.ones(g.shape), g, 0.1) <= 4


@pytest.mark.parametrize("r", [1 / 8, 1 / 16, 1 / 32])
def test_strip_halving_rigid_vortex(r):
    # nonzero trace: the strip integral is close to linear in r
    g = DomainGrid(256)
    x1, x2 = g.coords()
    u = np.stack([-(x2 - 0.5), x1 - 0.5])
    assert 1.5 <= boundary_layer_integral(u, g, r) / boundary_layer_integral(u, g, r / 2) <= 2.5


def test_strip_halving_zero_trace_vortex():
    # u = 0 on the boundary, so |u|^2 ~ dist^2 and the integral scales like r^3
    g = DomainGrid(256)
    u = np.moveaxis(vortex_velocity(g.points()), -1, 0)
    ratio = boundary_layer_integral(u, g, 1 / 16) / boundary_layer_integral(u, g, 1 / 32)
    assert 7.0 <= ratio <= 9.0


def test_strip_below_spacing():
    g = DomainGrid(16)
    with pytest.raises(ValueError):
        boundary_layer_integral(np.ones(g.shape), g, 0.01)
    assert boundary_layer_constant(np.zeros(g.shape), g, 0.25) is None


def test_fit_examples():
    f = fit_rate([1 / 4, 1 / 8, 1 / 16], [1 / 4, 1 / 8, 1 / 16])
    assert f.slope == pytest.approx(1.0, abs=1e-12) and f.r2 == pytest.approx(1.0) and f.points == 3
    assert fit_rate([1 / 4, 1 / 16], [1 / 2, 1 / 4]).slope == pytest.approx(0.5, abs=1e-12)


@pytest.mark.parametrize("slope", [0.5, 1.0, 1.7, 2.0, 3.3])
def test_fit_synthetic(slope):
    eps = 2.0 ** -np.arange(2, 8)
    assert abs(fit_rate(eps, 3.7 * eps ** slope).slope - slope) <= 1e-12


@pytest.mark.parametrize("eps,err", [([0.25], [1.0]), ([0.25, 0.125], [1.0, 0.0]),
                                     ([0.25, 0.125], [1.0, -1.0]), ([0.25, 0.125], [1.0])])
def test_fit_errors(eps, err):
    with pytest.raises(FitError):
        fit_rate(eps, err)
