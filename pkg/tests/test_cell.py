import numpy as np
import pytest

import oracles
from homstokes import cell
from homstokes.cell import (CellGrid, PeriodicField, PreconditionError, compute_b_tensor, compute_correctors,
                            compute_dual_correctors, compute_effective_tensor, solve_cell_stokes,
                            verify_corrector_identities)
from homstokes.coefficients import adjoint_coefficient, build_coefficient


def _rms(v):
    return float(np.sqrt(np.mean(np.asarray(v) ** 2)))


def test_cell_grid_rejects_odd():
    with pytest.raises(ValueError):
        CellGrid(15)


def test_zero_rhs_gives_zero():
    g = CellGrid(16)
    u, p = solve_cell_stokes(None, PeriodicField(g, np.zeros((2, 16, 16))), g)
    assert np.abs(u.values).max() == 0 and np.abs(p.values).max() == 0


def test_nonzero_mean_rhs_rejected():
    g = CellGrid(16)
    with pytest.raises(PreconditionError):
        solve_cell_stokes(None, PeriodicField(g, np.ones((2, 16, 16))), g)


@pytest.mark.parametrize("N", [32, 64])
def test_gradient_mode_is_absorbed_by_pressure(N):
    g = CellGrid(N)
    y1 = g.points()[..., 0]
    rhs = np.stack([np.sin(2 * np.pi * y1), np.zeros_like(y1)])
    u, p = solve_cell_stokes(None, PeriodicField(g, rhs), g, tol=1e-11)
    # the weak divergence leaves a fine-grid alternating mode of size O(h^4)
    assert np.abs(u.values).max() < 10.0 / N ** 4
    assert np.abs(p.values - oracles.cell_mode_pressure(y1)).max() < 2.0 / N ** 2


def test_shear_mode_velocity_second_order():
    errs = []
    for N in (16, 32, 64):
        g = CellGrid(N)
        y1 = g.points()[..., 0]
        rhs = np.stack([np.zeros_like(y1), np.sin(2 * np.pi * y1)])
        u, p = solve_cell_stokes(None, PeriodicField(g, rhs), g, tol=1e-11)
        errs.append(np.abs(u.values[1] - oracles.cell_mode_velocity(y1)).max())
        assert np.abs(u.values[0]).max() < 1e-10
    assert errs[0] / errs[1] > 3.5 and errs[1] / errs[2] > 3.5


def test_laminate_corrector_matches_quadrature_oracle(laminate_correctors_64):
    cs = laminate_correctors_64
    y1 = cs.grid.points()[:, 0, 0]
    ref = oracles.laminate_chi(y1)
    got = cs.chi[0, 1, 1]  # second component of chi_1^2
    assert np.abs(got - ref[:, None]).max() < 1e-3
    assert np.abs(cs.chi[0, 1, 0]).max() < 1e-8
    # zero in the continuum; O(h^4) alternating mode on the grid
    assert np.abs(cs.chi[0, 0]).max() < 50.0 / cs.grid.N ** 4
    # pressure lives on the 2h grid: interpolation bound (2h)^2 / 8 * max|p''|
    H = 2.0 / cs.grid.N
    assert np.abs(cs.pi[0, 0] - oracles.laminate_pi_11(y1)[:, None]).max() < H ** 2 / 8 * 4 * np.pi ** 2


def test_corrector_error_shrinks_with_refinement(laminate):
    errs = []
    for N in (16, 32, 64):
        cs = compute_correctors(laminate, CellGrid(N), 1e-11, with_adjoint=False)
        y1 = cs.grid.points()[:, 0, 0]
        errs.append(np.abs(cs.chi[0, 1, 1][:, 0] - oracles.laminate_chi(y1)).max())
    assert errs[0] / errs[1] > 3.5 and errs[1] / errs[2] > 3.5


def test_laminate_effective_tensor(laminate, laminate_correctors_64):
    eff = compute_effective_tensor(laminate, laminate_correctors_64)
    assert np.abs(eff.values - oracles.laminate_effective()).max() < 1e-3
    assert eff.is_elliptic


def test_constant_tensor_has_no_correctors():
    a = 2.0 * np.einsum("ij,ab->ijab", np.eye(2), np.eye(2))
    a[0, 1, 1, 0] = a[1, 0, 0, 1] = 0.3
    a[0, 0, 1, 1] = 0.4
    A = build_coefficient("constant", a.ravel())
    cs = compute_correctors(A, CellGrid(16), 1e-10)
    assert np.abs(cs.chi).max() < 1e-12 and np.abs(cs.pi).max() < 1e-12
    eff = compute_effective_tensor(A, cs)
    assert np.abs(eff.values - a).max() < 1e-12


def test_laminate_b_tensor(laminate, laminate_correctors_64):
    cs = laminate_correctors_64
    eff = compute_effective_tensor(laminate, cs)
    b = compute_b_tensor(laminate, cs, eff)
    y1 = cs.grid.points()[:, 0, 0]
    assert np.abs(b.values[0, 0, 0, 0] - np.sin(2 * np.pi * y1)[:, None]).max() < 5e-3
    assert np.abs(b.values[0, 0, 1, 1]).max() < 5e-3
    assert np.abs(cell.cell_mean(b.values)).max() < 1e-14


def test_adjoint_effective_tensor_identity():
    A = build_coefficient("nonsymmetric", (2, 1))
    g = CellGrid(32)
    cs = compute_correctors(A, g, 1e-10, with_adjoint=True)
    eff = compute_effective_tensor(A, cs)
    eff_adj = compute_effective_tensor(adjoint_coefficient(A), cs.adjoint)
    scale = np.abs(eff.values).max()
    assert np.abs(eff.system_adjoint().values - eff_adj.values).max() < 1e-8 * scale


def test_dual_correctors_identities(laminate, laminate_correctors_64):
    cs = laminate_correctors_64
    eff = compute_effective_tensor(laminate, cs)
    b = compute_b_tensor(laminate, cs, eff)
    dual = compute_dual_correctors(b, cs.grid, 1e-10)
    res = verify_corrector_identities(cs, dual, b, eff)
    assert res["skew"] == 0.0
    assert res["mean_zero"] < 1e-10
    assert res["decomposition"] < 1e-2 and res["qpi"] < 1e-2


def test_dual_rejects_nonzero_mean():
    with pytest.raises(PreconditionError):
        compute_dual_correctors(np.ones((2, 2, 2, 2, 8, 8)), CellGrid(8))


def test_corrector_means_are_zero(laminate_correctors_64):
    inv = laminate_correctors_64.invariants()
    assert inv["max_mean"] < 1e-12
    assert inv["max_momentum_residual"] < 1e-9
