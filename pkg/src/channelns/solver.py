"""Time integration of the channel Navier-Stokes system.

Scheme: second-order IMEX - Crank-Nicolson for the viscous term, second-order
Adams-Bashforth for the convective term (first-order startup step), with the
pressure treated as a Lagrange multiplier. Each step solves, per horizontal
Fourier mode, one coupled collocation system for (u1, u2, u3, p) in which the
momentum equations hold at interior nodes, the no-slip conditions are boundary
rows, and the divergence-free constraint is imposed at every vertical node.
The stepped velocity therefore satisfies both constraints to solver precision.
"""

import warnings
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .estimates import CSV_COLUMNS, DiagnosticsRecord, compute_diagnostics
from .fields import ScalarField, VectorField, inner_l2, norm_lq
from .stokes import convective_arrays, leray_project


class SolverAbort(RuntimeError):
    """Raised when the state stops being finite; carries the last good data."""

    def __init__(self, message, state=None, trajectory=None):
        super().__init__(message)
        self.state = state
        self.trajectory = trajectory


class CflError(ValueError):
    """Advective CFL limit exceeded (message advises a stable dt)."""


@dataclass
class SolverConfig:
    dt: float
    t_end: float
    scheme: str = "cnab2"
    dealias: bool = True
    cfl_safety: float = 0.5
    adaptive_dt: bool = False
    output_every: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.dt <= 0 or self.t_end <= 0:
            raise ValueError("dt and t_end must be positive")
        if self.scheme != "cnab2":
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.output_every < 1:
            raise ValueError("output_every must be >= 1")


@dataclass
class SimState:
    u: VectorField
    t: float
    nu: float
    forcing: "object" = None
    step_index: int = 0
    # spectral convective term of the previous step, for Adams-Bashforth
    conv_prev: tuple = field(default=None, repr=False)


class SteadyForcing:
    """Constant-in-time body force."""

    def __init__(self, force):
        self.force = force

    def field(self, t):
        return self.force


class TimePeriodicForcing:
    """f(t, x) = sin(omega t + phase) * g(x)."""

    def __init__(self, force, omega, phase=0.0):
        self.force = force
        self.omega = float(omega)
        self.phase = float(phase)

    def field(self, t):
        return self.force * float(np.sin(self.omega * t + self.phase))


class StepperContext:
    """Factorized implicit systems for a fixed (grid, nu, dt)."""

    def __init__(self, grid, nu, dt):
        self.grid = grid
        self.nu = float(nu)
        self.dt = float(dt)
        nz = grid.nz
        nyr = grid.ny // 2 + 1
        eye = np.eye(nz)
        interior = np.arange(1, nz - 1)
        blocks = []
        for ix in range(grid.nx):
            for iy in range(nyr):
                if (ix, iy) == (0, 0):
                    continue
                kx, ky = grid.kx[ix], grid.ky_r[iy]
                k2 = kx**2 + ky**2
                h = eye - (nu * dt / 2.0) * (grid.dz2 - k2 * eye)
                m = np.zeros((4 * nz, 4 * nz), dtype=complex)
                for c, ik in ((0, 1j * kx * dt), (1, 1j * ky * dt)):
                    r = c * nz
                    m[r + interior, c * nz : (c + 1) * nz] = h[interior, :]
                    m[r + interior, 3 * nz + interior] = ik
                    m[r, r] = 1.0
                    m[r + nz - 1, r + nz - 1] = 1.0
                r = 2 * nz
                m[r + interior, r : r + nz] = h[interior, :]
                m[r + interior, 3 * nz : 4 * nz] = dt * grid.dz[interior, :]
                m[r, r] = 1.0
                m[r + nz - 1, r + nz - 1] = 1.0
                r = 3 * nz
                rows = np.arange(nz)
                m[r + rows, rows] = 1j * kx
                m[r + rows, nz + rows] = 1j * ky
                m[r + rows, 2 * nz : 3 * nz] = grid.dz
                blocks.append(m)
        self._lu = splu(sp.block_diag(blocks, format="csc"))
        h0 = eye - (nu * dt / 2.0) * grid.dz2
        h0[0, :] = 0.0
        h0[0, 0] = 1.0
        h0[-1, :] = 0.0
        h0[-1, -1] = 1.0
        self._lu0 = np.linalg.inv(h0)  # small dense k = 0 system
        self._nz = nz
        self._nyr = nyr

    @classmethod
    def for_state(cls, grid, nu, dt):
        key = ("stepper", float(nu), float(dt))
        ctx = grid._cache.get(key)
        if ctx is None:
            ctx = cls(grid, nu, dt)
            grid._cache[key] = ctx
        return ctx

    def implicit_solve(self, r1, r2, r3):
        """Solve the coupled systems; r_i are rfft2-layout spectral right sides
        already multiplied by dt (momentum rows; boundary rows are enforced)."""
        g = self.grid
        nz, nyr = self._nz, self._nyr
        nmodes_total = g.nx * nyr
        rhs = np.zeros((nmodes_total, 4 * nz), dtype=complex)
        rhs[:, 0 * nz : 1 * nz] = r1.reshape(nmodes_total, nz)
        rhs[:, 1 * nz : 2 * nz] = r2.reshape(nmodes_total, nz)
        rhs[:, 2 * nz : 3 * nz] = r3.reshape(nmodes_total, nz)
        for c in range(3):
            rhs[:, c * nz] = 0.0
            rhs[:, c * nz + nz - 1] = 0.0
        sol = np.empty_like(rhs)
        sol[1:, :] = self._lu.solve(rhs[1:, :].ravel()).reshape(-1, 4 * nz)
        # k = 0: decoupled Dirichlet solves for the horizontal means, w = 0
        b0 = rhs[0].copy()
        sol[0, 0 * nz : 1 * nz] = self._lu0 @ b0[0 * nz : 1 * nz]
        sol[0, 1 * nz : 2 * nz] = self._lu0 @ b0[1 * nz : 2 * nz]
        sol[0, 2 * nz :] = 0.0
        shape = (g.nx, nyr, nz)
        return (
            sol[:, 0 * nz : 1 * nz].reshape(shape),
            sol[:, 1 * nz : 2 * nz].reshape(shape),
            sol[:, 2 * nz : 3 * nz].reshape(shape),
        )


def cfl_number(state, dt):
    """Advective CFL of the current velocity for step size dt."""
    g = state.u.grid
    z = g.z
    dz = np.empty_like(z)
    dz[:-1] = np.diff(z)
    dz[-1] = dz[-2]
    dz[1:] = np.minimum(dz[1:], np.diff(z))
    rate = (
        np.max(np.abs(state.u.u1.values)) / (g.px / g.nx)
        + np.max(np.abs(state.u.u2.values)) / (g.py / g.ny)
        + np.max(np.abs(state.u.u3.values) / dz[None, None, :])
    )
    return float(dt * rate)


def step(state, config):
    """Advance one IMEX step; returns a new SimState.

    Deterministic for a fixed build; raises CflError when the advective CFL
    exceeds the configured safety factor (unless adaptive_dt is set, in which
    case dt is temporarily halved for the offending steps) and SolverAbort on
    non-finite values.
    """
    dt = config.dt
    cfl = cfl_number(state, dt)
    if cfl > config.cfl_safety:
        if not config.adaptive_dt:
            raise CflError(
                f"CFL {cfl:.3f} exceeds safety {config.cfl_safety}; "
                f"use dt <= {dt * config.cfl_safety / cfl:.3e}"
            )
        sub = int(np.ceil(cfl / config.cfl_safety))
        inner_cfg = replace(config, dt=dt / sub, adaptive_dt=False, cfl_safety=np.inf)
        for _ in range(sub):
            state = step(state, inner_cfg)
        return replace(state, step_index=state.step_index)
    g = state.u.grid
    ctx = StepperContext.for_state(g, state.nu, dt)
    arrays = [c.values for c in state.u.components()]
    conv = convective_arrays(g, arrays, arrays, dealias=config.dealias)
    conv_hat = tuple(np.fft.rfft2(c, axes=(0, 1)) for c in conv)
    if state.conv_prev is None:
        ab = conv_hat
    else:
        ab = tuple(1.5 * c - 0.5 * p for c, p in zip(conv_hat, state.conv_prev))
    f = state.forcing.field(state.t + dt / 2.0) if state.forcing is not None else None
    rhs = []
    k2 = (g.kx[:, None, None] ** 2 + g.ky_r[None, :, None] ** 2)
    for i in range(3):
        uh = np.fft.rfft2(arrays[i], axes=(0, 1))
        lap = uh @ g.dz2.T - k2 * uh
        r = uh + (state.nu * dt / 2.0) * lap - dt * ab[i]
        if f is not None:
            r += dt * np.fft.rfft2(f.components()[i].values, axes=(0, 1))
        rhs.append(r)
    h1, h2, h3 = ctx.implicit_solve(*rhs)
    s = (g.nx, g.ny)
    u_new = VectorField.from_arrays(
        g,
        np.fft.irfft2(h1, s=s, axes=(0, 1)),
        np.fft.irfft2(h2, s=s, axes=(0, 1)),
        np.fft.irfft2(h3, s=s, axes=(0, 1)),
        divergence_free=True,
        no_slip=True,
    )
    if not np.isfinite(u_new.u1.values[0, 0, 0]) or not np.isfinite(
        float(np.max(np.abs(u_new.u1.values)))
    ):
        raise SolverAbort(f"non-finite state at t = {state.t + dt}", state=state)
    return SimState(
        u=u_new,
        t=state.t + dt,
        nu=state.nu,
        forcing=state.forcing,
        step_index=state.step_index + 1,
        conv_prev=conv_hat,
    )


class Trajectory:
    """Ordered diagnostic records of one run plus run-level metadata."""

    def __init__(self):
        self.records = []
        self.meta = {}

    def append(self, rec):
        self.records.append(rec)

    def column(self, name):
        return np.array([getattr(r, name) for r in self.records])

    @property
    def t(self):
        return self.column("t")

    def write_csv(self, path, header_lines=()):
        with open(path, "w") as fh:
            for line in header_lines:
                fh.write(f"# {line}\n")
            fh.write(",".join(CSV_COLUMNS) + "\n")
            for r in self.records:
                fh.write(",".join(repr(getattr(r, c)) for c in CSV_COLUMNS) + "\n")


def exact_shear_solution(grid, mode_k, amplitude, t, nu):
    """Decaying shear flow u = a e^(-nu lambda_k t) (g_k(x3), 0, 0).

    g_k is the k-th Dirichlet eigenmode of -d^2/dx3^2 on [-L, L], so the flow
    solves the full nonlinear system exactly: the convective term vanishes
    identically and the pressure is constant.
    """
    if mode_k < 1 or int(mode_k) != mode_k:
        raise ValueError("mode_k must be a positive integer")
    big_l = grid.half_height
    lam = (mode_k * np.pi / (2 * big_l)) ** 2
    profile = np.sin(mode_k * np.pi * (grid.z + big_l) / (2 * big_l))
    v1 = amplitude * np.exp(-nu * lam * t) * np.broadcast_to(
        profile[None, None, :], (grid.nx, grid.ny, grid.nz)
    )
    zero = np.zeros((grid.nx, grid.ny, grid.nz))
    return VectorField.from_arrays(
        grid, v1.copy(), zero, zero.copy(), divergence_free=True, no_slip=True
    )


def shear_eigenvalue(grid, mode_k):
    return (mode_k * np.pi / (2 * grid.half_height)) ** 2


def build_initial(grid, family, params, default_seed=0):
    """Initial condition from a named analytic family.

    zero | shear(k, amplitude) | perturbed_shear(k, amplitude, perturbation,
    seed, decay, kmax, mz) | random(amplitude, seed, decay, kmax, mz).
    """
    from .fields import random_field

    p = dict(params)
    seed = p.pop("seed", default_seed)
    if family == "zero":
        return VectorField.zeros(grid, divergence_free=True, no_slip=True)
    if family == "shear":
        return exact_shear_solution(grid, p.pop("k", 1), p.pop("amplitude", 1.0), 0.0, 1.0)
    if family == "perturbed_shear":
        base = exact_shear_solution(grid, p.pop("k", 1), p.pop("amplitude", 1.0), 0.0, 1.0)
        pert = random_field(
            grid,
            [seed, 101],
            decay=p.pop("decay", 4.0),
            flags=("divergence_free", "no_slip"),
            amplitude=p.pop("perturbation", 0.1),
            kmax=p.pop("kmax", None),
            mz=p.pop("mz", None),
        )
        if p:
            raise ValueError(f"unknown initial parameters {sorted(p)}")
        return base + pert
    if family == "random":
        return random_field(
            grid,
            [seed, 102],
            decay=p.pop("decay", 4.0),
            flags=("divergence_free", "no_slip"),
            amplitude=p.pop("amplitude", 1.0),
            kmax=p.pop("kmax", None),
            mz=p.pop("mz", None),
        )
    raise ValueError(f"unknown initial family {family!r}")


def build_forcing(grid, family, params, default_seed=0):
    """Forcing from a named family: none | shear | random | time_periodic.

    time_periodic wraps a base family (params base_family / base_params) with
    a sin(omega t + phase) amplitude.
    """
    from .fields import random_field

    p = dict(params)
    if family == "none":
        return None
    if family == "shear":
        f = exact_shear_solution(grid, p.pop("k", 1), p.pop("amplitude", 1.0), 0.0, 1.0)
        if p:
            raise ValueError(f"unknown forcing parameters {sorted(p)}")
        return SteadyForcing(f)
    if family == "random":
        f = random_field(
            grid,
            [p.pop("seed", default_seed), 103],
            decay=p.pop("decay", 4.0),
            flags=("divergence_free", "no_slip"),
            amplitude=p.pop("amplitude", 1.0),
            kmax=p.pop("kmax", None),
            mz=p.pop("mz", None),
        )
        if p:
            raise ValueError(f"unknown forcing parameters {sorted(p)}")
        return SteadyForcing(f)
    if family == "time_periodic":
        omega = p.pop("omega", 1.0)
        phase = p.pop("phase", 0.0)
        base_family = p.pop("base_family", "shear")
        base_params = p.pop("base_params", {})
        if p:
            raise ValueError(f"unknown forcing parameters {sorted(p)}")
        base = build_forcing(grid, base_family, base_params, default_seed)
        return TimePeriodicForcing(base.force, omega, phase)
    raise ValueError(f"unknown forcing family {family!r}")


def run(u0, nu, config, forcing=None, on_record=None):
    """Integrate from u0 to t_end, emitting diagnostics every output_every steps.

    Returns (final_state, Trajectory). Partial output stays valid on abort:
    SolverAbort is re-raised with `state` (last good) and `trajectory` filled.
    If u0 is not flagged divergence-free it is Leray-projected first.
    """
    if not u0.divergence_free:
        u0 = leray_project(u0)
    state = SimState(u=u0, t=0.0, nu=float(nu), forcing=forcing)
    traj = Trajectory()
    n_steps = int(round(config.t_end / config.dt))
    if abs(n_steps * config.dt - config.t_end) > 1e-9 * config.t_end:
        warnings.warn(
            f"t_end is not a multiple of dt; integrating {n_steps} steps "
            f"to t = {n_steps * config.dt:.6g}",
            stacklevel=2,
        )

    cum_d = 0.0
    cum_fu = 0.0
    prev = None  # (t, D, fu)

    def record(st):
        nonlocal cum_d, cum_fu, prev
        f_now = st.forcing.field(st.t) if st.forcing is not None else None
        diag = compute_diagnostics(st.u, forcing=f_now)
        if prev is not None:
            h = st.t - prev[0]
            cum_d += 0.5 * h * (prev[1] + diag["D"])
            cum_fu += 0.5 * h * (prev[2] + diag["fu"])
        prev = (st.t, diag["D"], diag["fu"])
        resid = diag["E"] - traj.records[0].E + 2 * st.nu * cum_d - 2 * cum_fu if traj.records else 0.0
        rec = DiagnosticsRecord(
            t=st.t,
            E=diag["E"],
            D=diag["D"],
            Dh=diag["Dh"],
            V2=diag["V2"],
            crit=diag["crit"],
            resid=resid,
            cumD=cum_d,
            dh_grad2=diag["dh_grad2"],
            Au2=diag["Au2"],
            dz_u2=diag["dz_u2"],
            fu=diag["fu"],
            fnorm=diag["fnorm"],
        )
        traj.append(rec)
        if on_record is not None:
            on_record(st, rec)
        return rec

    record(state)
    try:
        for _ in range(n_steps):
            state = step(state, config)
            if state.step_index % config.output_every == 0 or state.step_index == n_steps:
                record(state)
    except SolverAbort as err:
        err.trajectory = traj
        raise
    traj.meta["F_sampled"] = float(np.max(traj.column("fnorm"))) if traj.records else 0.0
    traj.meta["nu"] = float(nu)
    traj.meta["t_end"] = state.t
    traj.meta["E0"] = traj.records[0].E
    return state, traj
