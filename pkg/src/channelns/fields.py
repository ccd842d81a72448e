"""Field types, vector calculus operators, norms, and checkpoint I/O.

ScalarField and VectorField carry a grid handle plus lazily synchronized
physical / spectral representations. All norms are physical-space quadrature;
all derivatives are spectral.
"""

import struct

import numpy as np

from .grid import Grid

_CHECKPOINT_MAGIC = b"CHANNELF"
_CHECKPOINT_VERSION = 1


class ScalarField:
    """A scalar function on a channel grid.

    At least one of `values` (physical) and `coef` (spectral) must be given;
    the missing representation is computed on demand and cached. Fields are
    treated as immutable value snapshots.
    """

    __slots__ = ("grid", "_values", "_coef")

    def __init__(self, grid, values=None, coef=None):
        if values is None and coef is None:
            raise ValueError("need values or coefficients")
        self.grid = grid
        self._values = None if values is None else grid.check_values_shape(values)
        self._coef = None if coef is None else np.asarray(coef, dtype=complex)

    @classmethod
    def from_function(cls, grid, fn):
        x, y, z = grid.mesh()
        return cls(grid, values=np.broadcast_to(fn(x, y, z), (grid.nx, grid.ny, grid.nz)).copy())

    @classmethod
    def zeros(cls, grid):
        return cls(grid, values=np.zeros((grid.nx, grid.ny, grid.nz)))

    @property
    def values(self):
        if self._values is None:
            self._values = self.grid.from_spectral(self._coef)
        return self._values

    @property
    def coef(self):
        if self._coef is None:
            self._coef = self.grid.to_spectral(self._values)
        return self._coef

    # quadrature protocol shared by all field types
    @property
    def quad_weights(self):
        return self.grid.weights3d()

    @property
    def magnitude_values(self):
        return np.abs(self.values)

    def _binary(self, other, op):
        if isinstance(other, ScalarField):
            if not self.grid.same_as(other.grid):
                raise ValueError("grid mismatch")
            return ScalarField(self.grid, values=op(self.values, other.values))
        return ScalarField(self.grid, values=op(self.values, other))

    def __add__(self, other):
        return self._binary(other, np.add)

    def __radd__(self, other):
        return self._binary(other, lambda a, b: b + a)

    def __sub__(self, other):
        return self._binary(other, np.subtract)

    def __rsub__(self, other):
        return self._binary(other, lambda a, b: b - a)

    def __mul__(self, other):
        return self._binary(other, np.multiply)

    __rmul__ = __mul__

    def __neg__(self):
        return ScalarField(self.grid, values=-self.values)

    def wall_max(self):
        v = self.values
        return float(max(np.max(np.abs(v[:, :, 0])), np.max(np.abs(v[:, :, -1]))))


class VectorField:
    """Three scalar components (u1, u2, u3) with constraint flags.

    `divergence_free` promises max |div u| small at unit scale; `no_slip`
    promises all components vanish on the walls. The flags record how the
    field was constructed; `verify_flags` measures the residuals.
    """

    __slots__ = ("u1", "u2", "u3", "divergence_free", "no_slip")

    def __init__(self, u1, u2, u3, divergence_free=False, no_slip=False):
        if not (u1.grid.same_as(u2.grid) and u1.grid.same_as(u3.grid)):
            raise ValueError("components on different grids")
        self.u1, self.u2, self.u3 = u1, u2, u3
        self.divergence_free = bool(divergence_free)
        self.no_slip = bool(no_slip)

    @classmethod
    def from_arrays(cls, grid, v1, v2, v3, **flags):
        return cls(
            ScalarField(grid, values=v1),
            ScalarField(grid, values=v2),
            ScalarField(grid, values=v3),
            **flags,
        )

    @classmethod
    def zeros(cls, grid, **flags):
        z = np.zeros((grid.nx, grid.ny, grid.nz))
        return cls.from_arrays(grid, z, z.copy(), z.copy(), **flags)

    @property
    def grid(self):
        return self.u1.grid

    def components(self):
        return (self.u1, self.u2, self.u3)

    @property
    def quad_weights(self):
        return self.grid.weights3d()

    @property
    def magnitude_values(self):
        return np.sqrt(self.u1.values**2 + self.u2.values**2 + self.u3.values**2)

    def _binary(self, other, op, **flags):
        return VectorField(
            op(self.u1, other.u1), op(self.u2, other.u2), op(self.u3, other.u3), **flags
        )

    def __add__(self, other):
        flags = dict(
            divergence_free=self.divergence_free and other.divergence_free,
            no_slip=self.no_slip and other.no_slip,
        )
        return self._binary(other, lambda a, b: a + b, **flags)

    def __sub__(self, other):
        flags = dict(
            divergence_free=self.divergence_free and other.divergence_free,
            no_slip=self.no_slip and other.no_slip,
        )
        return self._binary(other, lambda a, b: a - b, **flags)

    def __mul__(self, scalar):
        return VectorField(
            self.u1 * scalar,
            self.u2 * scalar,
            self.u3 * scalar,
            divergence_free=self.divergence_free,
            no_slip=self.no_slip,
        )

    __rmul__ = __mul__

    def __neg__(self):
        return self * (-1.0)

    def wall_max(self):
        return max(c.wall_max() for c in self.components())

    def verify_flags(self):
        """Measured residuals (max |div u|, max wall speed)."""
        return float(np.max(np.abs(divergence(self).values))), self.wall_max()


# ---------------------------------------------------------------------------
# norms and inner products


def norm_lq(field, q):
    """Lebesgue q-norm by quadrature; q = inf returns the grid max.

    Works for 3-D scalar/vector fields and for 2-D horizontal fields (any
    object exposing `quad_weights` / `magnitude_values`). The grid max is a
    lower bound on the true supremum.
    """
    if q != np.inf and q < 1:
        raise ValueError("q must be >= 1")
    mag = field.magnitude_values
    if q == np.inf:
        return float(np.max(mag))
    return float(np.sum(field.quad_weights * mag**q) ** (1.0 / q))


def inner_l2(a, b):
    """L2 inner product by quadrature; symmetric bilinear."""
    if isinstance(a, VectorField) != isinstance(b, VectorField):
        raise ValueError("cannot mix scalar and vector fields")
    if not a.grid.same_as(b.grid):
        raise ValueError("grid mismatch")
    w = a.quad_weights
    if isinstance(a, VectorField):
        tot = sum(np.sum(w * x.values * y.values) for x, y in zip(a.components(), b.components()))
    else:
        av = a.values if isinstance(a, ScalarField) else a.magnitude_values
        tot = np.sum(w * av * b.values)
    return float(tot)


# ---------------------------------------------------------------------------
# differential operators


def diff(field, axis):
    """Spectral derivative of a scalar field; axis in {1, 2, 3} (1-based)."""
    if axis not in (1, 2, 3):
        raise ValueError("axis must be 1, 2 or 3")
    g = field.grid
    return ScalarField(g, values=g.diff(field.values, axis - 1))


def grad(phi):
    """Full gradient as a VectorField (no constraint flags)."""
    return VectorField(diff(phi, 1), diff(phi, 2), diff(phi, 3))


def grad_h(phi):
    """Horizontal gradient (d/dx1, d/dx2) as a pair of scalar fields."""
    return (diff(phi, 1), diff(phi, 2))


def divergence(u):
    g = u.grid
    d = g.diff(u.u1.values, 0) + g.diff(u.u2.values, 1) + g.diff(u.u3.values, 2)
    return ScalarField(g, values=d)


def laplacian(phi):
    g = phi.grid
    v = phi.values
    return ScalarField(g, values=g.diff2(v, 0) + g.diff2(v, 1) + g.diff2(v, 2))


def laplacian_h(phi):
    g = phi.grid
    v = phi.values
    return ScalarField(g, values=g.diff2(v, 0) + g.diff2(v, 1))


def sobolev_norm(field, m):
    """H^m norm, m in {0, 1, 2}: (sum over |alpha| <= m of |d^alpha f|_2^2)^(1/2).

    Mixed second derivatives are counted once. Vector fields sum componentwise.
    """
    if m not in (0, 1, 2):
        raise ValueError("m must be 0, 1 or 2")
    if isinstance(field, VectorField):
        return float(np.sqrt(sum(sobolev_norm(c, m) ** 2 for c in field.components())))
    g = field.grid
    w = g.weights3d()
    v = field.values
    total = np.sum(w * v**2)
    if m >= 1:
        firsts = [g.diff(v, a) for a in range(3)]
        total += sum(np.sum(w * d**2) for d in firsts)
        if m == 2:
            for a in range(3):
                for b in range(a, 3):
                    d2 = g.diff(firsts[a], b, check_resolution=False)
                    total += np.sum(w * d2**2)
    return float(np.sqrt(total))


# ---------------------------------------------------------------------------
# random fields


def random_field(
    grid,
    seed,
    decay=4.0,
    flags=(),
    vector=None,
    amplitude=1.0,
    kmax=None,
    mz=None,
):
    """Deterministic smooth random field with a prescribed spectrum decay.

    Horizontal content is restricted to wavenumber indices |k| <= kmax and the
    vertical profile is a combination of mz low trigonometric modes, with mode
    amplitudes ~ (1 + |k|^2)^(-decay/2), so the field stays well inside the
    resolved band. Passing explicit (kmax, mz) yields the same continuum field
    on any sufficiently fine grid, which ensemble refinement studies rely on.

    flags: subset of {"divergence_free", "no_slip"}. divergence_free implies a
    vector field; a divergence-free + no-slip field is built as the curl of a
    wall-clamped potential (hence a fixed point of the Leray projection), a
    divergence-free-only field by projecting an unconstrained one.
    """
    flags = frozenset(flags)
    unknown = flags - {"divergence_free", "no_slip"}
    if unknown:
        raise ValueError(f"unknown flags: {sorted(unknown)}")
    if decay <= 1:
        raise ValueError("decay exponent must be > 1")
    if vector is None:
        vector = "divergence_free" in flags
    if "divergence_free" in flags and not vector:
        raise ValueError("a scalar field cannot be divergence_free")
    if kmax is None:
        kmax = max(min(grid.nx, grid.ny) // 3 - 1, 1)
    if mz is None:
        mz = max((grid.nz - 1) // 3 - 1, 2)
    if kmax > min(grid.nx, grid.ny) // 3 or mz + 1 > (grid.nz - 1) // 2:
        raise ValueError("requested spectrum does not fit the resolved band")

    no_slip = "no_slip" in flags
    if not vector:
        v = _random_scalar(grid, _seed_key(seed, 0), decay, kmax, mz, "sin" if no_slip else "cos")
        v *= amplitude / _l2(grid, v)
        return ScalarField(grid, values=v)

    if "divergence_free" in flags and no_slip:
        if mz + 4 > grid.nz - 1:
            raise ValueError("requested vertical spectrum does not fit the polynomial basis")
        psi1 = _random_scalar(grid, _seed_key(seed, 1), decay, kmax, mz, "clamped")
        psi2 = _random_scalar(grid, _seed_key(seed, 2), decay, kmax, mz, "clamped")
        psi3 = _random_scalar(grid, _seed_key(seed, 3), decay, kmax, mz, "polyzero")
        v1 = grid.diff(psi3, 1) - grid.diff(psi2, 2)
        v2 = grid.diff(psi1, 2) - grid.diff(psi3, 0)
        v3 = grid.diff(psi2, 0) - grid.diff(psi1, 1)
        scale = amplitude / _l2v(grid, v1, v2, v3)
        return VectorField.from_arrays(
            grid, v1 * scale, v2 * scale, v3 * scale, divergence_free=True, no_slip=True
        )

    comps = [
        _random_scalar(grid, _seed_key(seed, i + 1), decay, kmax, mz, "sin" if no_slip else "cos")
        for i in range(3)
    ]
    u = VectorField.from_arrays(grid, *comps, no_slip=no_slip)
    if "divergence_free" in flags:
        from .stokes import leray_project

        u = leray_project(u)
        return u * (amplitude / np.sqrt(inner_l2(u, u)))
    return u * (amplitude / _l2v(grid, *comps))


def _seed_key(seed, *tags):
    """Flatten an int or sequence seed plus tags into a SeedSequence key."""
    if isinstance(seed, (int, np.integer)):
        key = [int(seed) % 2**64]
    else:
        key = [int(s) % 2**64 for s in seed]
    return key + [int(t) % 2**64 for t in tags]


def random_horizontal_values(grid, seed, decay=4.0, kmax=None):
    """Deterministic smooth random 2-D field values, unit horizontal L2 norm."""
    if kmax is None:
        kmax = max(min(grid.nx, grid.ny) // 3 - 1, 1)
    rng = np.random.default_rng(_seed_key(seed, 9))
    nyr = grid.ny // 2 + 1
    spec = np.zeros((grid.nx, nyr), dtype=complex)
    for ikx in range(-kmax, kmax + 1):
        for iky in range(0, kmax + 1):
            re, im = rng.standard_normal(2)
            if iky == 0 and ikx < 0:
                continue
            amp = (1.0 + ikx**2 + iky**2) ** (-decay / 2.0)
            spec[ikx % grid.nx, iky] = amp * (re + 1j * im)
    vals = np.fft.irfft2(spec, s=(grid.nx, grid.ny)) * (grid.nx * grid.ny)
    return vals / np.sqrt(np.sum(vals**2) * grid.weights2d())


def _vertical_basis(grid, m, kind):
    z = grid.z
    big_l = grid.half_height
    s = z / big_l
    if kind == "sin":  # vanishes at both walls
        return np.sin((m + 1) * np.pi * (s + 1) / 2)
    if kind == "cos":  # free at the walls
        return np.cos(m * np.pi * (s + 1) / 2)
    # polynomial bases are differentiated exactly by the collocation matrix,
    # so curl-constructed fields satisfy their wall conditions to rounding
    cheb = np.cos(m * np.arccos(np.clip(s, -1.0, 1.0)))
    if kind == "polyzero":  # vanishes at both walls
        return (1.0 - s**2) * cheb
    if kind == "clamped":  # value and z-derivative vanish at both walls
        return (1.0 - s**2) ** 2 * cheb
    raise ValueError(kind)


def _random_scalar(grid, seed_key, decay, kmax, mz, kind):
    """Sum over vertical modes of horizontal random trig polynomials.

    The draw order is fixed and independent of the grid size, so a fixed
    (seed, decay, kmax, mz) names one continuum field.
    """
    rng = np.random.default_rng(seed_key)
    out = np.zeros((grid.nx, grid.ny, grid.nz))
    nyr = grid.ny // 2 + 1
    for m in range(mz):
        spec = np.zeros((grid.nx, nyr), dtype=complex)
        kz2 = ((m + 1) * np.pi / (2 * grid.half_height)) ** 2
        for ikx in range(-kmax, kmax + 1):
            for iky in range(0, kmax + 1):
                re, im = rng.standard_normal(2)
                if iky == 0 and ikx < 0:
                    continue  # conjugate of (|ikx|, 0); keep draw order fixed
                amp = (1.0 + ikx**2 + iky**2 + kz2) ** (-decay / 2.0)
                spec[ikx % grid.nx, iky] = amp * (re + 1j * im)
        plane = np.fft.irfft2(spec, s=(grid.nx, grid.ny)) * (grid.nx * grid.ny)
        out += plane[:, :, None] * _vertical_basis(grid, m, kind)[None, None, :]
    return out


def _l2(grid, values):
    return float(np.sqrt(np.sum(grid.weights3d() * values**2)))


def _l2v(grid, v1, v2, v3):
    w = grid.weights3d()
    return float(np.sqrt(np.sum(w * (v1**2 + v2**2 + v3**2))))


# ---------------------------------------------------------------------------
# checkpoint format (shared with the CLI)
#
# magic "CHANNELF" | version i32 | ncomp i32 | nx i32 | ny i32 | nz i32 |
# px f64 | py f64 | L f64 | time f64 | ncomp blocks of nx*ny*nz little-endian
# f64 physical values in x1-fastest order.

_HEADER = struct.Struct("<8s i i i i i d d d d")


def write_checkpoint(path, field, time=0.0):
    """Write a ScalarField or VectorField snapshot."""
    comps = field.components() if isinstance(field, VectorField) else (field,)
    g = comps[0].grid
    with open(path, "wb") as fh:
        fh.write(
            _HEADER.pack(
                _CHECKPOINT_MAGIC,
                _CHECKPOINT_VERSION,
                len(comps),
                g.nx,
                g.ny,
                g.nz,
                g.px,
                g.py,
                g.half_height,
                float(time),
            )
        )
        for c in comps:
            fh.write(np.ascontiguousarray(c.values.transpose(2, 1, 0), dtype="<f8").tobytes())


def read_checkpoint(path, grid=None, **flags):
    """Read a checkpoint; returns (field, time).

    If `grid` is given it must match the stored dimensions; otherwise a new
    grid is built from the header.
    """
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        if len(header) < _HEADER.size:
            raise ValueError(f"{path}: truncated header")
        magic, version, ncomp, nx, ny, nz, px, py, big_l, time = _HEADER.unpack(header)
        if magic != _CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not a channel field checkpoint")
        if version != _CHECKPOINT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        if grid is None:
            grid = Grid(nx, ny, nz, px, py, big_l)
        elif (nx, ny, nz) != (grid.nx, grid.ny, grid.nz) or not np.allclose(
            (px, py, big_l), (grid.px, grid.py, grid.half_height)
        ):
            raise ValueError(f"{path}: checkpoint grid does not match the requested grid")
        comps = []
        count = nx * ny * nz
        for _ in range(ncomp):
            data = np.frombuffer(fh.read(8 * count), dtype="<f8", count=count)
            comps.append(ScalarField(grid, values=data.reshape(nz, ny, nx).transpose(2, 1, 0)))
    if ncomp == 1:
        return comps[0], time
    if ncomp == 3:
        return VectorField(*comps, **flags), time
    raise ValueError(f"{path}: unexpected component count {ncomp}")
