"""Leray projection, Stokes operator, convective bilinear term, V-norm.

The projection onto divergence-free fields with impermeable walls is computed
per horizontal Fourier mode: a vertical Helmholtz problem

    q'' - k^2 q = div(u),   q'(-L) = u3(-L),  q'(+L) = u3(+L)

is solved by Chebyshev collocation with the two wall rows replaced by the
Neumann boundary conditions, and grad(q) is subtracted. This enforces
div(u) = 0 at interior nodes and u3 = 0 on the walls exactly; tangential wall
components are the time stepper's job, not the projector's. The k = 0 mode
has no Helmholtz problem: its vertical velocity is removed outright (the only
x3-independent admissible value is zero once the walls are impermeable).
"""

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .fields import ScalarField, VectorField, inner_l2
from .grid import cheb_antiderivative


class ProjectionContext:
    """Factorized per-mode pressure solves for one grid; immutable, shareable."""

    def __init__(self, grid):
        self.grid = grid
        nz = grid.nz
        nyr = grid.ny // 2 + 1
        self.modes = [
            (ix, iy) for ix in range(grid.nx) for iy in range(nyr) if (ix, iy) != (0, 0)
        ]
        blocks = []
        for ix, iy in self.modes:
            k2 = grid.kx[ix] ** 2 + grid.ky_r[iy] ** 2
            m = grid.dz2 - k2 * np.eye(nz)
            m[0, :] = grid.dz[0, :]
            m[-1, :] = grid.dz[-1, :]
            if not np.all(np.isfinite(m)):
                raise ArithmeticError(f"singular vertical solve at mode {(ix, iy)}")
            blocks.append(m)
        self._lu = splu(sp.block_diag(blocks, format="csc"))
        self._nz = nz
        self._nyr = nyr

    @classmethod
    def for_grid(cls, grid):
        ctx = grid._cache.get("projection")
        if ctx is None:
            ctx = cls(grid)
            grid._cache["projection"] = ctx
        return ctx

    def _solve_modes(self, rhs):
        """Solve all k != 0 mode systems; rhs complex (nmodes, nz)."""
        flat = np.column_stack([rhs.real.ravel(), rhs.imag.ravel()])
        sol = self._lu.solve(flat)
        return (sol[:, 0] + 1j * sol[:, 1]).reshape(rhs.shape)

    def project_arrays(self, v1, v2, v3, return_q=False):
        g = self.grid
        nx, nyr, nz = g.nx, self._nyr, self._nz
        h1 = np.fft.rfft2(v1, axes=(0, 1))
        h2 = np.fft.rfft2(v2, axes=(0, 1))
        h3 = np.fft.rfft2(v3, axes=(0, 1))
        ikx = 1j * g.kx[:, None, None]
        iky = 1j * g.ky_r[None, :, None]
        div = ikx * h1 + iky * h2 + h3 @ g.dz.T

        rhs = div.reshape(nx * nyr, nz)[1:, :].copy()  # mode (0,0) excluded
        wall = h3.reshape(nx * nyr, nz)[1:, :]
        rhs[:, 0] = wall[:, 0]
        rhs[:, -1] = wall[:, -1]
        qh = np.zeros((nx * nyr, nz), dtype=complex)
        qh[1:, :] = self._solve_modes(rhs)
        # zero-mean pressure fixes the free constant of the k = 0 mode
        qh[0, :] = cheb_antiderivative(g, h3.reshape(nx * nyr, nz)[0, :])
        qh = qh.reshape(nx, nyr, nz)

        h1 -= ikx * qh
        h2 -= iky * qh
        h3 -= qh @ g.dz.T
        h3[0, 0, :] = 0.0  # exact, not just up to antiderivative truncation
        s = (nx, g.ny)
        out = (
            np.fft.irfft2(h1, s=s, axes=(0, 1)),
            np.fft.irfft2(h2, s=s, axes=(0, 1)),
            np.fft.irfft2(h3, s=s, axes=(0, 1)),
        )
        if return_q:
            return out, np.fft.irfft2(qh, s=s, axes=(0, 1))
        return out


def leray_project(u, return_q=False):
    """Project a vector field onto the discrete divergence-free space.

    The output satisfies div = 0 (interior collocation rows) and u3 = 0 at
    the walls; output - input is the gradient of the returned scalar q.
    Idempotent on already projected fields.
    """
    ctx = ProjectionContext.for_grid(u.grid)
    arrays = [c.values for c in u.components()]
    if return_q:
        (p1, p2, p3), q = ctx.project_arrays(*arrays, return_q=True)
        proj = VectorField.from_arrays(u.grid, p1, p2, p3, divergence_free=True)
        return proj, ScalarField(u.grid, values=q)
    p1, p2, p3 = ctx.project_arrays(*arrays)
    return VectorField.from_arrays(u.grid, p1, p2, p3, divergence_free=True)


def stokes_apply(u):
    """Stokes operator A u = -P(laplacian u) for divergence-free no-slip u."""
    if not (u.divergence_free and u.no_slip):
        raise ValueError("stokes_apply needs a divergence-free, no-slip field")
    g = u.grid
    ctx = ProjectionContext.for_grid(g)
    neg_lap = [
        -(g.diff2(c.values, 0) + g.diff2(c.values, 1) + g.diff2(c.values, 2))
        for c in u.components()
    ]
    a1, a2, a3 = ctx.project_arrays(*neg_lap)
    return VectorField.from_arrays(g, a1, a2, a3, divergence_free=True)


def v_norm(u):
    """sqrt(<u, Au>); equivalent to |grad u|_2 up to a grid-dependent factor."""
    val = inner_l2(u, stokes_apply(u))
    if val < 0:
        raise ArithmeticError(
            f"<u, Au> = {val} is negative; the discrete projection is inconsistent"
        )
    return float(np.sqrt(val))


def vnorm_gradient_ratio(u):
    """v_norm(u)^2 / |grad u|_2^2, the measured equivalence factor."""
    g = u.grid
    w = g.weights3d()
    grad2 = sum(
        np.sum(w * g.diff(c.values, a) ** 2) for c in u.components() for a in range(3)
    )
    return v_norm(u) ** 2 / float(grad2)


def convective_arrays(grid, u_arrays, v_arrays, dealias=True):
    """(u . grad) v computed pseudo-spectrally, optionally 2/3-dealiased."""
    if dealias:
        u_arrays = [grid.dealias(a) for a in u_arrays]
    out = []
    for i in range(3):
        acc = np.zeros_like(v_arrays[i])
        for j in range(3):
            dv = grid.diff(v_arrays[i], j, check_resolution=False)
            if dealias:
                dv = grid.dealias(dv)
            acc += u_arrays[j] * dv
        out.append(grid.dealias(acc) if dealias else acc)
    return out


def bilinear_b(u, v, dealias=True):
    """B(u, v) = P((u . grad) v) with the convective (non-rotational) form."""
    g = u.grid
    if not g.same_as(v.grid):
        raise ValueError("grid mismatch")
    conv = convective_arrays(
        g, [c.values for c in u.components()], [c.values for c in v.components()], dealias
    )
    ctx = ProjectionContext.for_grid(g)
    b1, b2, b3 = ctx.project_arrays(*conv)
    return VectorField.from_arrays(g, b1, b2, b3, divergence_free=True)
