"""Q1-iso-Q2 / Q1 mixed finite elements on uniform square grids.

Velocity is continuous bilinear on the fine grid of ``n`` intervals per
axis; pressure is continuous bilinear on the grid of ``n // 2`` intervals.
The same assembly serves the periodic unit cell and the Dirichlet unit
square.  Array layout is ``field[i1, i2]`` with ``x1 = i1*h, x2 = i2*h``;
flattened node id is ``i1 * nodes_per_axis + i2`` and velocity dof is
``component * num_nodes + node``.
"""

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

# 3-point Gauss rule on [0, 1]
_G1 = np.array([0.5 - 0.5 * np.sqrt(0.6), 0.5, 0.5 + 0.5 * np.sqrt(0.6)])
_W1 = np.array([5.0, 8.0, 5.0]) / 18.0
QUAD_XI = np.array([[a, b] for a in _G1 for b in _G1])
QUAD_W = np.array([wa * wb for wa in _W1 for wb in _W1])
# local node k <-> offsets (k // 2, k % 2) along (x1, x2)
LOCAL_OFFSETS = np.array([[0, 0], [0, 1], [1, 0], [1, 1]])


class SolverError(RuntimeError):
    """Krylov iteration failed to reach the requested tolerance."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


def shape_values(xi):
    """Bilinear shape functions at reference points ``xi`` (m, 2) -> (m, 4)."""
    x, y = xi[:, 0:1], xi[:, 1:2]
    a = LOCAL_OFFSETS[:, 0][None, :]
    b = LOCAL_OFFSETS[:, 1][None, :]
    return np.where(a, x, 1 - x) * np.where(b, y, 1 - y)


def shape_gradients(xi):
    """Reference gradients (m, 4, 2); divide by h for physical gradients."""
    x, y = xi[:, 0:1], xi[:, 1:2]
    a = LOCAL_OFFSETS[:, 0][None, :]
    b = LOCAL_OFFSETS[:, 1][None, :]
    gx = np.where(a, 1.0, -1.0) * np.where(b, y, 1 - y)
    gy = np.where(a, x, 1 - x) * np.where(b, 1.0, -1.0)
    return np.stack([gx, gy], axis=-1)


PHI_Q = shape_values(QUAD_XI)
DPHI_Q = shape_gradients(QUAD_XI)


class Q1Grid:
    """Uniform grid of ``n`` intervals per axis on [0, 1]^2."""

    def __init__(self, n, periodic=False):
        if n < 2:
            raise ValueError("need at least two intervals per axis")
        self.n = int(n)
        self.h = 1.0 / self.n
        self.periodic = bool(periodic)
        self.npa = self.n if self.periodic else self.n + 1
        self.num_nodes = self.npa ** 2
        self.num_elements = self.n ** 2

    @property
    def shape(self):
        return (self.npa, self.npa)

    def coords(self):
        x = np.arange(self.npa) * self.h
        return np.meshgrid(x, x, indexing="ij")

    def node_id(self, i1, i2):
        if self.periodic:
            i1 = np.mod(i1, self.npa)
            i2 = np.mod(i2, self.npa)
        return i1 * self.npa + i2

    def element_index(self):
        e = np.arange(self.n)
        return np.meshgrid(e, e, indexing="ij")

    def element_nodes(self):
        e1, e2 = (a.ravel() for a in self.element_index())
        return np.stack([self.node_id(e1 + a, e2 + b) for a, b in LOCAL_OFFSETS], axis=1)

    def quad_points(self):
        """Physical quadrature points (ne, nq, 2)."""
        e1, e2 = (a.ravel() for a in self.element_index())
        origin = np.stack([e1, e2], axis=1) * self.h
        return origin[:, None, :] + QUAD_XI[None, :, :] * self.h

    def boundary_mask(self):
        mask = np.zeros(self.shape, dtype=bool)
        if not self.periodic:
            mask[0, :] = mask[-1, :] = mask[:, 0] = mask[:, -1] = True
        return mask

    def node_weights(self):
        """Trapezoid weights; exact integrals of bilinear interpolants."""
        w1 = np.full(self.npa, self.h)
        if not self.periodic:
            w1[0] = w1[-1] = 0.5 * self.h
        return np.outer(w1, w1)


def coarse_grid(vgrid):
    if vgrid.n % 2:
        raise ValueError("velocity grid needs an even number of intervals")
    return Q1Grid(vgrid.n // 2, vgrid.periodic)


def evaluate_at_quad(vgrid, func):
    """Evaluate ``func(x)`` with x of shape (..., 2) at all quadrature points."""
    return func(vgrid.quad_points())


def _vector_dofs(grid, conn):
    nn = grid.num_nodes
    return np.concatenate([conn, conn + nn], axis=1)


def stiffness(vgrid, cq):
    """Bilinear form sum_q a_ij^ab(x_q) d_j u^b d_i v^a.

    ``cq`` holds coefficients at quadrature points, shape (ne, nq, 2, 2, 2, 2)
    indexed ``[e, q, i, j, alpha, beta]`` (may broadcast over e and q).
    Rows are test dofs (alpha), columns trial dofs (beta).
    """
    ne = vgrid.num_elements
    cq = np.broadcast_to(cq, (ne, QUAD_W.size, 2, 2, 2, 2))
    g = DPHI_Q  # (q, a, i); area h^2 cancels the two 1/h factors
    ke = np.einsum("q,eqijxy,qbj,qai->exayb", QUAD_W, cq, g, g, optimize=True)
    ke = ke.reshape(ne, 8, 8)
    dofs = _vector_dofs(vgrid, vgrid.element_nodes())
    rows = np.repeat(dofs, 8, axis=1).ravel()
    cols = np.tile(dofs, (1, 8)).ravel()
    n = 2 * vgrid.num_nodes
    return sp.csr_matrix((ke.ravel(), (rows, cols)), shape=(n, n))


def _coarse_shape_on_fine():
    """Coarse shape values at fine quadrature points per sub-element offset."""
    out = np.empty((2, 2, QUAD_W.size, 4))
    for s1 in range(2):
        for s2 in range(2):
            xi = (QUAD_XI + np.array([s1, s2])) / 2.0
            out[s1, s2] = shape_values(xi)
    return out


def divergence(vgrid, pgrid):
    """B[k, (beta, b)] = -int psi_k d_beta phi_b."""
    e1, e2 = (a.ravel() for a in vgrid.element_index())
    psi = _coarse_shape_on_fine()[e1 % 2, e2 % 2]  # (ne, q, 4)
    c1, c2 = e1 // 2, e2 // 2
    pconn = np.stack([pgrid.node_id(c1 + a, c2 + b) for a, b in LOCAL_OFFSETS], axis=1)
    # area h^2 times 1/h from the gradient
    be = -vgrid.h * np.einsum("q,eqk,qbj->ekjb", QUAD_W, psi, DPHI_Q)
    be = be.reshape(vgrid.num_elements, 4, 8)
    vdofs = _vector_dofs(vgrid, vgrid.element_nodes())
    rows = np.repeat(pconn, 8, axis=1).ravel()
    cols = np.tile(vdofs, (1, 4)).ravel()
    return sp.csr_matrix((be.ravel(), (rows, cols)), shape=(pgrid.num_nodes, 2 * vgrid.num_nodes))


def mass(grid):
    me = grid.h ** 2 * np.einsum("q,qa,qb->ab", QUAD_W, PHI_Q, PHI_Q)
    conn = grid.element_nodes()
    rows = np.repeat(conn, 4, axis=1).ravel()
    cols = np.tile(conn, (1, 4)).ravel()
    vals = np.tile(me.ravel(), grid.num_elements)
    return sp.csr_matrix((vals, (rows, cols)), shape=(grid.num_nodes, grid.num_nodes))


def load(vgrid, fq):
    """Load vector int F . phi for F sampled at quadrature points (ne, nq, 2)."""
    le = vgrid.h ** 2 * np.einsum("q,eqx,qa->exa", QUAD_W, fq, PHI_Q)
    dofs = _vector_dofs(vgrid, vgrid.element_nodes())
    out = np.zeros(2 * vgrid.num_nodes)
    np.add.at(out, dofs.ravel(), le.reshape(vgrid.num_elements, 8).ravel())
    return out


def flux_load(vgrid, sq):
    """Load vector -int s_i^alpha d_i phi^alpha for a flux sampled as (ne, nq, i, alpha)."""
    ne = vgrid.num_elements
    sq = np.broadcast_to(sq, (ne, QUAD_W.size, 2, 2))
    le = -vgrid.h * np.einsum("q,eqix,qai->exa", QUAD_W, sq, DPHI_Q)
    dofs = _vector_dofs(vgrid, vgrid.element_nodes())
    out = np.zeros(2 * vgrid.num_nodes)
    np.add.at(out, dofs.ravel(), le.reshape(ne, 8).ravel())
    return out


def quad_gradients(vgrid, u):
    """Gradients of a nodal vector field u (2, nn) at quadrature points.

    Returns (ne, nq, alpha, j) with entry d_j u^alpha.
    """
    conn = vgrid.element_nodes()
    ue = u[:, conn]  # (2, ne, 4)
    return np.einsum("xea,qaj->eqxj", ue, DPHI_Q) / vgrid.h


def prolong_pressure(pgrid, p):
    """Bilinear interpolation of coarse nodal values onto the fine node grid."""
    p = np.asarray(p).reshape(pgrid.shape)
    if pgrid.periodic:
        n = pgrid.npa
        out = np.empty((2 * n, 2 * n))
        out[0::2, 0::2] = p
        out[1::2, 0::2] = 0.5 * (p + np.roll(p, -1, axis=0))
        out[:, 1::2] = 0.5 * (out[:, 0::2] + np.roll(out[:, 0::2], -1, axis=1))
        return out
    n = pgrid.npa
    out = np.empty((2 * n - 1, 2 * n - 1))
    out[0::2, 0::2] = p
    out[1::2, 0::2] = 0.5 * (p[:-1] + p[1:])
    out[:, 1::2] = 0.5 * (out[:, 0:-1:2] + out[:, 2::2])
    return out


def nodal_to_quad(vgrid, values):
    """Interpolate nodal values (..., nn) to quadrature points (ne, nq, ...)."""
    conn = vgrid.element_nodes()
    v = np.asarray(values)
    ve = v[..., conn]  # (..., ne, 4)
    out = np.einsum("...ea,qa->...eq", ve, PHI_Q)
    return np.moveaxis(np.moveaxis(out, -1, 0), -1, 0)


class SaddleSolver:
    """Preconditioned GMRES for [[K, B^T], [B, 0]] restricted to free dofs.

    The preconditioner is block upper-triangular, using a sparse LU of the
    velocity block and a lumped pressure mass scaled by the inverse local
    viscosity for the Schur complement.  GMRES runs right-preconditioned so
    the monitored residual is the true one.
    """

    def __init__(self, K, B, schur_diag, free_u, free_p, velocity_solve=None, pressure_weights=None):
        self.free_u = np.asarray(free_u)
        self.free_p = np.asarray(free_p)
        self.K = K[self.free_u][:, self.free_u].tocsc()
        self.B = B[self.free_p][:, self.free_u].tocsr()
        self.S = np.asarray(schur_diag)[self.free_p]
        self.nu = self.free_u.size
        self.npr = self.free_p.size
        self.A = sp.bmat([[self.K, self.B.T], [self.B, None]], format="csr")
        if velocity_solve is None:
            lu = spla.splu(self.K, permc_spec="COLAMD")
            velocity_solve = lu.solve
        self.velocity_solve = velocity_solve
        # nonzero weights: project the pressure correction onto mean zero
        self.pressure_weights = pressure_weights
        self.iterations = 0

    def _precond(self, r):
        ru, rp = r[: self.nu], r[self.nu:]
        xp = -rp / self.S
        if self.pressure_weights is not None:
            w = self.pressure_weights
            xp = xp - (w @ xp) / w.sum()
        xu = self.velocity_solve(ru - self.B.T @ xp)
        return np.concatenate([xu, xp])

    def solve(self, ru, rp, tol=1e-9, maxiter=400, atol=0.0):
        """Relative residual target ``tol``; ``atol`` is an absolute floor
        for right-hand sides that are roundoff-sized copies of zero."""
        rhs = np.concatenate([ru, rp])
        bnorm = np.linalg.norm(rhs)
        n = rhs.size
        if bnorm <= atol:
            return np.zeros(self.nu), np.zeros(self.npr), 0.0
        op = spla.LinearOperator((n, n), matvec=lambda y: self.A @ self._precond(y), dtype=float)
        counter = {"n": 0}

        def cb(_):
            counter["n"] += 1

        target = max(tol * bnorm, atol)
        y, _ = spla.gmres(op, rhs, rtol=0.1 * target / bnorm, atol=0.0, restart=200, maxiter=maxiter,
                          callback=cb, callback_type="pr_norm")
        x = self._precond(y)
        res = np.linalg.norm(rhs - self.A @ x) / bnorm
        if res * bnorm > target:
            # one polishing pass from the current iterate
            r = rhs - self.A @ x
            y2, _ = spla.gmres(op, r, rtol=0.1 * target / np.linalg.norm(r), atol=0.0,
                               restart=200, maxiter=maxiter, callback=cb, callback_type="pr_norm")
            x = x + self._precond(y2)
            res = np.linalg.norm(rhs - self.A @ x) / bnorm
        self.iterations = counter["n"]
        if not np.isfinite(res) or res * bnorm > target:
            raise SolverError(f"GMRES stalled at relative residual {res:.3e}", residual=res)
        return x[: self.nu], x[self.nu:], res


def schur_diagonal(pgrid, eta_nodes):
    """Lumped pressure mass divided by a nodal viscosity estimate."""
    lumped = np.asarray(mass(pgrid).sum(axis=1)).ravel()
    return lumped / np.asarray(eta_nodes).ravel()


def _q1_symbols(n, h):
    theta = 2.0 * np.pi * np.fft.fftfreq(n)
    k1 = (2.0 - 2.0 * np.cos(theta)) / h
    m1 = h * (4.0 + 2.0 * np.cos(theta)) / 6.0
    return k1, m1


class PeriodicLaplacianInverse:
    """Exact inverse of eta * (Q1 vector Laplacian) on the torus via FFT.

    Returns the mean-zero solution; the constant mode is discarded.
    """

    def __init__(self, n, h, eta=1.0):
        k1, m1 = _q1_symbols(n, h)
        lam = eta * (np.outer(k1, m1) + np.outer(m1, k1))
        lam[0, 0] = np.inf
        self.inv = 1.0 / lam
        self.n = n

    def __call__(self, r):
        r = r.reshape(-1, self.n, self.n)
        out = np.fft.ifft2(np.fft.fft2(r) * self.inv).real
        return out.reshape(-1)


class DirichletLaplacianInverse:
    """Inverse of eta * (Q1 vector Laplacian) on interior nodes of the
    unit square with zero boundary values, via the type-I sine transform."""

    def __init__(self, n, h, eta=1.0):
        theta = np.pi * np.arange(1, n) / n
        k1 = (2.0 - 2.0 * np.cos(theta)) / h
        m1 = h * (4.0 + 2.0 * np.cos(theta)) / 6.0
        self.inv = 1.0 / (eta * (np.outer(k1, m1) + np.outer(m1, k1)))
        self.m = n - 1

    def __call__(self, r):
        from scipy.fft import dstn, idstn

        r = r.reshape(-1, self.m, self.m)
        out = idstn(dstn(r, type=1, axes=(1, 2)) * self.inv, type=1, axes=(1, 2))
        return out.reshape(-1)
