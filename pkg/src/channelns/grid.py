"""Spectral discretization of a doubly periodic channel box.

The horizontal directions are uniform Fourier grids with periods (px, py);
the vertical direction is Chebyshev-Gauss-Lobatto collocation on
[-half_height, half_height] with Clenshaw-Curtis quadrature weights, so both
walls z = -L and z = +L are collocation points.

Array convention: fields are (nx, ny, nz) float64 arrays, axis 0 = x1,
axis 1 = x2, axis 2 = x3 (wall-normal).
"""

import warnings

import numpy as np
from scipy.fft import dct

# Energy fraction in the top spectral band above which a field is considered
# under-resolved by `Grid.diff` (flagged with a warning, never fatal).
RESOLUTION_THRESHOLD = 1e-4


class ResolutionWarning(UserWarning):
    """A differentiated field carries significant top-band spectral energy."""


def cgl_points(nz, half_height):
    """Chebyshev-Gauss-Lobatto points on [-L, L], ascending, endpoints included."""
    n = nz - 1
    return -half_height * np.cos(np.pi * np.arange(nz) / n)


def clenshaw_curtis_weights(nz, half_height):
    """Quadrature weights on the CGL points; exact for polynomials of degree < nz."""
    n = nz - 1
    if n < 2:
        raise ValueError("need at least 3 vertical points")
    theta = np.pi * np.arange(1, n) / n
    v = np.ones(n - 1)
    if n % 2 == 0:
        w_end = 1.0 / (n**2 - 1)
        for k in range(1, n // 2):
            v -= 2.0 * np.cos(2 * k * theta) / (4 * k**2 - 1)
        v -= np.cos(n * theta) / (n**2 - 1)
    else:
        w_end = 1.0 / n**2
        for k in range(1, (n - 1) // 2 + 1):
            v -= 2.0 * np.cos(2 * k * theta) / (4 * k**2 - 1)
    w = np.empty(nz)
    w[0] = w[-1] = w_end
    w[1:-1] = 2.0 * v / n
    return half_height * w


def cheb_diff_matrix(nz, half_height):
    """Differentiation matrix on the ascending CGL points of `cgl_points`.

    Rows sum to exactly zero (negative-sum trick), so constants differentiate
    to exact zeros.
    """
    n = nz - 1
    x = np.cos(np.pi * np.arange(nz) / n)  # standard descending nodes
    c = np.ones(nz)
    c[0] = c[-1] = 2.0
    c *= (-1.0) ** np.arange(nz)
    dx = x[:, None] - x[None, :]
    d = np.outer(c, 1.0 / c) / (dx + np.eye(nz))
    d -= np.diag(d.sum(axis=1))
    # ascending z = -L * x keeps the index order and flips/scales the derivative
    return -d / half_height


class Grid:
    """Immutable channel grid with transforms, derivatives and quadrature.

    Parameters
    ----------
    nx, ny : even mode counts of the horizontal Fourier directions (>= 4)
    nz : vertical collocation count (>= 5), walls included
    px, py : horizontal periods
    half_height : channel half height L, walls at x3 = -L and +L
    """

    def __init__(self, nx, ny, nz, px, py, half_height):
        if nx < 4 or ny < 4 or nx % 2 or ny % 2:
            raise ValueError("nx, ny must be even and >= 4")
        if nz < 5:
            raise ValueError("nz must be >= 5")
        if px <= 0 or py <= 0 or half_height <= 0:
            raise ValueError("px, py, half_height must be positive")
        self.nx, self.ny, self.nz = int(nx), int(ny), int(nz)
        self.px, self.py = float(px), float(py)
        self.half_height = float(half_height)

        self.x = np.arange(self.nx) * (self.px / self.nx)
        self.y = np.arange(self.ny) * (self.py / self.ny)
        self.z = cgl_points(self.nz, self.half_height)
        self.wz = clenshaw_curtis_weights(self.nz, self.half_height)
        self.wx = self.px / self.nx
        self.wy = self.py / self.ny

        self.kx = 2 * np.pi * np.fft.fftfreq(self.nx, d=self.px / self.nx)
        self.ky = 2 * np.pi * np.fft.fftfreq(self.ny, d=self.py / self.ny)
        self.ky_r = 2 * np.pi * np.fft.rfftfreq(self.ny, d=self.py / self.ny)

        self.dz = cheb_diff_matrix(self.nz, self.half_height)
        self.dz2 = self.dz @ self.dz

        # 2/3-rule mask in the horizontal rfft2 layout
        mx = np.abs(np.fft.fftfreq(self.nx) * self.nx) <= self.nx // 3
        my = np.arange(self.ny // 2 + 1) <= self.ny // 3
        self.dealias_mask = mx[:, None] & my[None, :]

        self.volume = self.px * self.py * 2 * self.half_height
        self._cache = {}

    # -- basic geometry -------------------------------------------------

    def mesh(self):
        """Broadcastable coordinate arrays (X, Y, Z)."""
        return (
            self.x[:, None, None],
            self.y[None, :, None],
            self.z[None, None, :],
        )

    def weights3d(self):
        """Quadrature weights broadcastable over an (nx, ny, nz) field."""
        return self.wx * self.wy * self.wz[None, None, :]

    def weights2d(self):
        return self.wx * self.wy

    def same_as(self, other):
        return self is other or (
            (self.nx, self.ny, self.nz, self.px, self.py, self.half_height)
            == (other.nx, other.ny, other.nz, other.px, other.py, other.half_height)
        )

    def check_values_shape(self, values):
        values = np.asarray(values, dtype=float)
        if values.shape != (self.nx, self.ny, self.nz):
            raise ValueError(
                f"field shape {values.shape} does not match grid "
                f"({self.nx}, {self.ny}, {self.nz})"
            )
        return values

    # -- quadrature ------------------------------------------------------

    def integrate(self, values):
        """Box integral by trapezoid (periodic) x Clenshaw-Curtis quadrature."""
        return float(np.einsum("xyz,z->", np.asarray(values), self.wz) * self.wx * self.wy)

    def integrate2d(self, values2d):
        return float(np.sum(values2d) * self.wx * self.wy)

    # -- transforms -------------------------------------------------------

    def to_spectral(self, values):
        """Fourier (x1, x2) x Chebyshev (x3) coefficients of a physical field.

        Normalized so a constant field maps to a single unit coefficient at
        index (0, 0, 0). The transform is linear and inverted exactly by
        `from_spectral`.
        """
        values = self.check_values_shape(values)
        vh = np.fft.fft2(values, axes=(0, 1)) / (self.nx * self.ny)
        return _cheb_transform(vh)

    def from_spectral(self, coef):
        coef = np.asarray(coef)
        if coef.shape != (self.nx, self.ny, self.nz):
            raise ValueError(
                f"coefficient shape {coef.shape} does not match grid "
                f"({self.nx}, {self.ny}, {self.nz})"
            )
        vh = _cheb_inverse(coef)
        return np.fft.ifft2(vh * (self.nx * self.ny), axes=(0, 1)).real

    # -- differentiation ---------------------------------------------------

    def diff(self, values, axis, check_resolution=True):
        """Spectral derivative along a 0-based axis (0 = x1, 1 = x2, 2 = x3)."""
        values = self.check_values_shape(values)
        if axis not in (0, 1, 2):
            raise ValueError("axis must be 0, 1 or 2")
        if check_resolution:
            frac = self.top_band_fraction(values, axis)
            if frac > RESOLUTION_THRESHOLD:
                warnings.warn(
                    f"axis-{axis} derivative of an under-resolved field "
                    f"(top-band energy fraction {frac:.2e})",
                    ResolutionWarning,
                    stacklevel=2,
                )
        if axis == 2:
            return values @ self.dz.T
        vh = np.fft.rfft2(values, axes=(0, 1))
        if axis == 0:
            vh *= 1j * self.kx[:, None, None]
            vh[self.nx // 2, :, :] = 0.0
        else:
            vh *= 1j * self.ky_r[None, :, None]
            vh[:, self.ny // 2, :] = 0.0
        return np.fft.irfft2(vh, s=(self.nx, self.ny), axes=(0, 1))

    def diff2(self, values, axis):
        """Second spectral derivative along a 0-based axis."""
        values = self.check_values_shape(values)
        if axis == 2:
            return values @ self.dz2.T
        vh = np.fft.rfft2(values, axes=(0, 1))
        k = self.kx[:, None, None] if axis == 0 else self.ky_r[None, :, None]
        return np.fft.irfft2(-(k**2) * vh, s=(self.nx, self.ny), axes=(0, 1))

    def diff2d(self, values2d, axis):
        """Spectral derivative of a horizontal (nx, ny) field."""
        vh = np.fft.rfft2(values2d)
        if axis == 0:
            vh *= 1j * self.kx[:, None]
            vh[self.nx // 2, :] = 0.0
        else:
            vh *= 1j * self.ky_r[None, :]
            vh[:, self.ny // 2] = 0.0
        return np.fft.irfft2(vh, s=(self.nx, self.ny))

    def dealias(self, values):
        """Zero the top third of horizontal modes (2/3 rule)."""
        vh = np.fft.rfft2(values, axes=(0, 1))
        vh *= self.dealias_mask[:, :, None]
        return np.fft.irfft2(vh, s=(self.nx, self.ny), axes=(0, 1))

    # -- resolution metrics --------------------------------------------------

    def top_band_fraction(self, values, axis):
        """Energy fraction above the 2/3 cutoff along one axis (0, 1 or 2)."""
        if axis == 2:
            coef = _cheb_transform(np.asarray(values, dtype=float))
            e = np.sum(np.abs(coef) ** 2, axis=(0, 1))
            cut = int(np.ceil(2 * (self.nz - 1) / 3))
            total = e.sum()
            return float(e[cut:].sum() / total) if total > 0 else 0.0
        vh = np.fft.fft2(np.asarray(values), axes=(0, 1))
        e = np.sum(np.abs(vh) ** 2, axis=(1, 2) if axis == 0 else (0, 2))
        n = self.nx if axis == 0 else self.ny
        m = np.abs(np.fft.fftfreq(n) * n)
        total = e.sum()
        return float(e[m > n // 3].sum() / total) if total > 0 else 0.0

    def resolution_fractions(self, values):
        return tuple(self.top_band_fraction(values, a) for a in (0, 1, 2))


def make_grid(nx, ny, nz, px, py, half_height):
    """Build a channel grid (see `Grid`)."""
    return Grid(nx, ny, nz, px, py, half_height)


def _cheb_transform(vh):
    """Chebyshev coefficients along the last axis from CGL point values.

    Works on real or complex input; conventions match the ascending nodes of
    `cgl_points` so that f = sum_m c_m T_m(z / L).
    """
    n = vh.shape[-1] - 1
    if np.iscomplexobj(vh):
        g = dct(vh.real, type=1, axis=-1) + 1j * dct(vh.imag, type=1, axis=-1)
    else:
        g = dct(vh, type=1, axis=-1)
    c = g / n
    c[..., 0] *= 0.5
    c[..., -1] *= 0.5
    c *= (-1.0) ** np.arange(n + 1)
    return c


def cheb_antiderivative(grid, values):
    """Vertical antiderivative with zero mean, along the last axis.

    The antiderivative of a degree nz-1 Chebyshev interpolant has degree nz;
    the top coefficient is dropped, so the result is exact only for inputs of
    degree <= nz-2 (spectrally accurate otherwise).
    """
    c = _cheb_transform(np.asarray(values, dtype=complex))
    n = grid.nz - 1
    b = np.zeros_like(c)
    # d/ds antiderivative recurrence on [-1, 1]: b_k = (c_{k-1} - c_{k+1}) / (2k)
    if n >= 1:
        b[..., 1] = c[..., 0] - 0.5 * c[..., 2] if n >= 2 else c[..., 0]
    for k in range(2, n + 1):
        upper = c[..., k + 1] if k + 1 <= n else 0.0
        b[..., k] = (c[..., k - 1] - upper) / (2.0 * k)
    b *= grid.half_height  # ds -> dz scaling
    out = _cheb_inverse(b)
    if not np.iscomplexobj(values):
        out = out.real
    mean = np.einsum("...z,z->...", out, grid.wz) / (2 * grid.half_height)
    return out - mean[..., None]


def _cheb_inverse(coef):
    """Inverse of `_cheb_transform` (values on the ascending CGL points)."""
    n = coef.shape[-1] - 1
    a = coef * (-1.0) ** np.arange(n + 1)
    if np.iscomplexobj(a):
        g = dct(a.real, type=1, axis=-1) + 1j * dct(a.imag, type=1, axis=-1)
    else:
        g = dct(a, type=1, axis=-1)
    signs = (-1.0) ** np.arange(n + 1)
    return 0.5 * (g + a[..., :1] + a[..., -1:] * signs)
