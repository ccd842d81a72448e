"""Barotropic / baroclinic splitting over the vertical direction.

The barotropic part of a field is its vertical average over the channel
height; the baroclinic part is the (vertically mean-free) remainder. The
split is an L2-orthogonal decomposition and commutes with horizontal
derivatives.
"""

import numpy as np

from .fields import ScalarField, VectorField


class BarotropicField:
    """A horizontal (x3-independent) field stored as an (nx, ny) array."""

    __slots__ = ("grid", "values2d")

    def __init__(self, grid, values2d):
        values2d = np.asarray(values2d, dtype=float)
        if values2d.shape != (grid.nx, grid.ny):
            raise ValueError(
                f"2-D field shape {values2d.shape} does not match grid ({grid.nx}, {grid.ny})"
            )
        self.grid = grid
        self.values2d = values2d

    @classmethod
    def from_function(cls, grid, fn):
        x, y, _ = grid.mesh()
        return cls(grid, np.broadcast_to(fn(x[:, :, 0], y[:, :, 0]), (grid.nx, grid.ny)).copy())

    def as_scalar_field(self):
        """Constant-in-x3 extension to a 3-D ScalarField."""
        return ScalarField(
            self.grid, values=np.repeat(self.values2d[:, :, None], self.grid.nz, axis=2)
        )

    # 2-D quadrature protocol for norm_lq / inner products
    @property
    def quad_weights(self):
        return self.grid.weights2d()

    @property
    def magnitude_values(self):
        return np.abs(self.values2d)

    def grad_h(self):
        g = self.grid
        return (
            BarotropicField(g, g.diff2d(self.values2d, 0)),
            BarotropicField(g, g.diff2d(self.values2d, 1)),
        )

    def norm_l2(self):
        return float(np.sqrt(np.sum(self.values2d**2) * self.grid.weights2d()))

    def norm_h1(self):
        """Full 2-D H1 norm (L2 part included)."""
        gx, gy = self.grad_h()
        w = self.grid.weights2d()
        return float(
            np.sqrt(np.sum((self.values2d**2 + gx.values2d**2 + gy.values2d**2)) * w)
        )

    def _binary(self, other, op):
        if isinstance(other, BarotropicField):
            return BarotropicField(self.grid, op(self.values2d, other.values2d))
        return BarotropicField(self.grid, op(self.values2d, other))

    def __add__(self, other):
        return self._binary(other, np.add)

    def __sub__(self, other):
        return self._binary(other, np.subtract)

    def __mul__(self, other):
        return self._binary(other, np.multiply)

    __rmul__ = __mul__

    def __neg__(self):
        return BarotropicField(self.grid, -self.values2d)


def vertical_average(theta):
    """Barotropic mode: (1 / 2L) integral over [-L, L], per horizontal node."""
    g = theta.grid
    avg = np.einsum("xyz,z->xy", theta.values, g.wz) / (2.0 * g.half_height)
    return BarotropicField(g, avg)


def baroclinic(theta):
    """Baroclinic mode theta - mean(theta); vertically mean-free."""
    g = theta.grid
    avg = vertical_average(theta)
    return ScalarField(g, values=theta.values - avg.values2d[:, :, None])


def split(theta):
    """(barotropic, baroclinic) pair reconstructing theta exactly."""
    avg = vertical_average(theta)
    tilde = ScalarField(theta.grid, values=theta.values - avg.values2d[:, :, None])
    return avg, tilde


def mean_vertical_flow_ratio(u):
    """|mean(u3)|_2 relative to |u3|_2 for a vector field (0 when u3 = 0).

    For a divergence-free, no-slip field whose u3 is x3-independent, u3 must
    vanish identically, so both norms are zero; the ratio measures how far a
    constructed field is from that degenerate configuration.
    """
    if not isinstance(u, VectorField):
        raise ValueError("expected a VectorField")
    g = u.grid
    w3 = float(np.sqrt(np.sum(g.weights3d() * u.u3.values**2)))
    if w3 == 0.0:
        return 0.0
    bar = vertical_average(u.u3).as_scalar_field()
    wbar = float(np.sqrt(np.sum(g.weights3d() * bar.values**2)))
    return wbar / w3
