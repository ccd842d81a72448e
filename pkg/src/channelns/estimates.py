"""Trajectory diagnostics, a-priori bound formulas, and inequality monitors.

The central diagnostic is |grad w_tilde|_2, the L2 norm of the gradient of
the baroclinic (vertically mean-free) part of the wall-normal velocity; its
boundedness in time is the regularity criterion this package instruments.
The bound formulas K1, K2, K combine the forcing amplitude, viscosity, time
horizon and initial norms into explicit a-priori bounds on energy-type
quantities; the unnamed prefactors are runtime constants (unit, user-supplied,
or calibrated from data).
"""

import math
import warnings
from dataclasses import asdict, dataclass

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .decomposition import baroclinic
from .fields import VectorField, norm_lq
from .stokes import ProjectionContext

#: Column order of the diagnostics CSV written by runs (fixed interface).
CSV_COLUMNS = ("t", "E", "D", "Dh", "V2", "crit", "resid", "cumD", "dh_grad2", "Au2", "dz_u2")

_LOG_MAX = math.log(np.finfo(float).max)


@dataclass
class DiagnosticsRecord:
    """Per-output-step norms of a trajectory.

    E = |u|_2^2, D = |grad u|_2^2, Dh = |grad_h u|_2^2, V2 = <u, Au>,
    crit = |grad w_tilde|_2, resid = energy-budget residual from t = 0,
    cumD = trapezoidal integral of D, dh_grad2 = |grad_h grad u|_2^2,
    Au2 = |Au|_2^2, dz_u2 = |du/dx3|_2. fu = <f, u> and fnorm = |f|_2 are
    kept in memory but are not part of the CSV interface.
    """

    t: float
    E: float
    D: float
    Dh: float
    V2: float
    crit: float
    resid: float
    cumD: float
    dh_grad2: float
    Au2: float
    dz_u2: float
    fu: float = 0.0
    fnorm: float = 0.0

    def as_dict(self):
        return asdict(self)


@dataclass
class BoundReport:
    """Outcome of checking one bound: margin = bound - measured."""

    name: str
    bound: float
    measured: float
    constant: float
    inputs: dict
    details: dict

    @property
    def margin(self):
        return self.bound - self.measured

    @property
    def held(self):
        return bool(self.measured <= self.bound)

    def as_dict(self):
        d = {
            "name": self.name,
            "bound": self.bound,
            "measured": self.measured,
            "margin": self.margin,
            "held": self.held,
            "constant": self.constant,
            "inputs": self.inputs,
        }
        d.update(self.details)
        return d


def compute_diagnostics(u, forcing=None):
    """All instantaneous norms of one DiagnosticsRecord, as a dict."""
    g = u.grid
    w = g.weights3d()
    comps = [c.values for c in u.components()]
    e = sum(np.sum(w * c**2) for c in comps)
    firsts = [[g.diff(c, a, check_resolution=False) for a in range(3)] for c in comps]
    d = sum(np.sum(w * firsts[i][a] ** 2) for i in range(3) for a in range(3))
    dh = sum(np.sum(w * firsts[i][a] ** 2) for i in range(3) for a in range(2))
    dz2 = sum(np.sum(w * firsts[i][2] ** 2) for i in range(3))
    dh_grad2 = sum(
        np.sum(w * g.diff(firsts[i][a], l, check_resolution=False) ** 2)
        for i in range(3)
        for a in range(3)
        for l in range(2)
    )
    ctx = ProjectionContext.for_grid(g)
    neg_lap = [-(g.diff2(c, 0) + g.diff2(c, 1) + g.diff2(c, 2)) for c in comps]
    a1, a2, a3 = ctx.project_arrays(*neg_lap)
    au2 = np.sum(w * (a1**2 + a2**2 + a3**2))
    v2 = np.sum(w * (a1 * comps[0] + a2 * comps[1] + a3 * comps[2]))
    if v2 < -1e-10 * max(e, 1.0):
        raise ArithmeticError(f"<u, Au> = {v2} is negative; projection inconsistent")
    tilde = baroclinic(u.u3)
    crit2 = sum(np.sum(w * g.diff(tilde.values, a, check_resolution=False) ** 2) for a in range(3))
    fu = fnorm = 0.0
    if forcing is not None:
        fw = [c.values for c in forcing.components()]
        fu = float(sum(np.sum(w * fw[i] * comps[i]) for i in range(3)))
        fnorm = float(np.sqrt(sum(np.sum(w * c**2) for c in fw)))
    return {
        "E": float(e),
        "D": float(d),
        "Dh": float(dh),
        "V2": float(max(v2, 0.0)),
        "crit": float(np.sqrt(max(crit2, 0.0))),
        "dh_grad2": float(dh_grad2),
        "Au2": float(au2),
        "dz_u2": float(np.sqrt(dz2)),
        "fu": fu,
        "fnorm": fnorm,
    }


def criterion_diag(u):
    """|grad w_tilde|_2 with w_tilde the baroclinic part of u3."""
    if not isinstance(u, VectorField):
        raise ValueError("expected a VectorField")
    g = u.grid
    w = g.weights3d()
    tilde = baroclinic(u.u3)
    val = sum(np.sum(w * g.diff(tilde.values, a, check_resolution=False) ** 2) for a in range(3))
    return float(np.sqrt(val))


def forcing_sup(samples):
    """Max of |f(t_i)|_2 over a nonempty set of sampled forcing fields.

    Accepts VectorFields or precomputed norms; a sampled lower bound of the
    true essential supremum over the time interval.
    """
    samples = list(samples)
    if not samples:
        raise ValueError("empty forcing sample set")
    norms = [norm_lq(s, 2) if isinstance(s, VectorField) else float(s) for s in samples]
    return float(max(norms))


# ---------------------------------------------------------------------------
# explicit bound formulas


def bound_k1(F, L, nu, T, u0_l2, C=1.0):
    """C F^2 (L^4 + nu T) / nu^2 + 2 |u0|_2^2."""
    if nu <= 0 or L <= 0 or T <= 0:
        raise ValueError("nu, L, T must be positive")
    if C <= 0:
        raise ValueError("C must be positive")
    return C * F**2 * (L**4 + nu * T) / nu**2 + 2.0 * u0_l2**2


def bound_k2(K1, T, sup_crit, u0_h1, F, C=1.0):
    """exp(C K1^2 + C (T + K1^2) sup_crit^4) * (|u0|_H1^2 + F^2 + C K1^2).

    Evaluated in log space; returns +inf (never raises) when the value
    exceeds the double range. Monotone nondecreasing in every argument.
    """
    bracket = u0_h1**2 + F**2 + C * K1**2
    if bracket == 0.0:
        return 0.0
    exponent = C * K1**2 + C * (T + K1**2) * sup_crit**4
    log_val = exponent + math.log(bracket)
    if log_val > _LOG_MAX:
        return math.inf
    return math.exp(exponent) * bracket


def bound_k_final(K1, K2, u0_h1, F, C=1.0):
    """exp(C K2^(4/3) K1^(2/3)) * (|u0|_H1^2 + F^2), evaluated saturating."""
    bracket = u0_h1**2 + F**2
    if bracket == 0.0:
        return 0.0
    if math.isinf(K2) or math.isinf(K1):
        return math.inf
    exponent = C * K2 ** (4.0 / 3.0) * K1 ** (2.0 / 3.0)
    log_val = exponent + math.log(bracket)
    if log_val > _LOG_MAX:
        return math.inf
    return math.exp(exponent) * bracket


# ---------------------------------------------------------------------------
# trajectory monitors


def _integration_error_estimate(t, y):
    """Rough total trapezoid error: sum over panels of h |second difference| / 12."""
    if len(t) < 3:
        return 0.0
    d2 = np.abs(np.diff(y, 2))
    h = np.diff(t)
    return float(np.sum(0.5 * (h[:-1] + h[1:]) * d2) / 12.0)


def energy_budget(traj, t0_index=0):
    """Energy-budget residual series r(t, t0) along a trajectory.

    r = E(t) - E(t0) + 2 nu int_{t0}^t D ds - 2 int_{t0}^t <f, u> ds, with
    trapezoidal integrals over the output samples. For the discrete solutions
    produced here the budget is an equality up to O(dt^2) plus quadrature
    error, so |r| measures the integration fidelity.
    """
    t = traj.t
    nu = traj.meta["nu"]
    if len(t) < 2:
        raise ValueError("trajectory too short")
    e = traj.column("E")
    d = traj.column("D")
    fu = traj.column("fu")
    err_est = 2 * nu * _integration_error_estimate(t, d) + 2 * _integration_error_estimate(t, fu)
    scale = float(np.max(e) + np.max(np.abs(fu)) * (t[-1] - t[0]) + 1e-300)
    if err_est > 1e-2 * scale:
        warnings.warn(
            f"output cadence is too coarse for the energy budget "
            f"(estimated integration error {err_est:.2e})",
            stacklevel=2,
        )
    cum_d = cumulative_trapezoid(d, t, initial=0.0)
    cum_fu = cumulative_trapezoid(fu, t, initial=0.0)
    i0 = t0_index
    resid = (
        (e - e[i0])
        + 2 * nu * (cum_d - cum_d[i0])
        - 2 * (cum_fu - cum_fu[i0])
    )
    resid[:i0] = 0.0
    report = BoundReport(
        name="energy_budget",
        bound=err_est,
        measured=float(np.max(np.abs(resid[i0:]))),
        constant=1.0,
        inputs={"nu": nu, "t0": float(t[i0])},
        details={"n_samples": len(t)},
    )
    return resid, report


def decay_bound_check(traj, F, L, C=1.0):
    """Pointwise energy decay and cumulative dissipation bounds.

    Checks |u(t)|_2^2 <= C L^4 F^2 / nu^2 + exp(-nu t / L^2) |u0|_2^2 and
    nu int_0^t D <= C L^2 F^2 t / nu + |u0|_2^2 at every output time;
    reports the first violation of each if any.
    """
    t = traj.t
    nu = traj.meta["nu"]
    e = traj.column("E")
    cum_d = traj.column("cumD")
    e0 = e[0]
    bound_e = C * L**4 * F**2 / nu**2 + np.exp(-nu * t / L**2) * e0
    bound_i = C * L**2 * F**2 * t / nu + e0

    def _pointwise_report(name, measured_series, bound_series):
        viol = np.nonzero(measured_series > bound_series)[0]
        i_tight = int(np.argmin(bound_series - measured_series))
        return BoundReport(
            name=name,
            bound=float(bound_series[i_tight]),
            measured=float(measured_series[i_tight]),
            constant=C,
            inputs={"F": F, "L": L, "nu": nu, "E0": float(e0)},
            details={
                "first_violation_t": float(t[viol[0]]) if len(viol) else None,
                "violations": int(len(viol)),
                "tightest_t": float(t[i_tight]),
            },
        )

    return (
        _pointwise_report("decay_l2", e, bound_e),
        _pointwise_report("decay_l22", nu * cum_d, bound_i),
    )


def k1_bound_check(traj, F, L, T=None, C=1.0):
    """E(t) + nu int_0^t D <= K1 along the trajectory."""
    nu = traj.meta["nu"]
    if T is None:
        T = float(traj.t[-1])
    e = traj.column("E")
    cum_d = traj.column("cumD")
    lhs = e + nu * cum_d
    k1 = bound_k1(F, L, nu, T, math.sqrt(e[0]), C)
    viol = np.nonzero(lhs > k1)[0]
    return BoundReport(
        name="k1",
        bound=float(k1),
        measured=float(np.max(lhs)),
        constant=C,
        inputs={"F": F, "L": L, "nu": nu, "T": T, "u0_l2": float(math.sqrt(e[0]))},
        details={
            "violations": int(len(viol)),
            "first_violation_t": float(traj.t[viol[0]]) if len(viol) else None,
        },
    )


def gronwall_check(t, y, a, b, premise_tol=1e-6):
    """Check y(t) <= exp(int a) (y(0) + int b exp(-int a)) at every sample.

    t, y, a, b are equal-length series; a nonuniform grid is resampled onto a
    uniform one (with a warning). The finite-difference premise y' <= a y + b
    is evaluated at interior points and reported, not enforced.
    """
    t = np.asarray(t, float)
    y = np.asarray(y, float)
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    if not (len(t) == len(y) == len(a) == len(b)):
        raise ValueError("series lengths differ")
    h = np.diff(t)
    if len(h) and (np.max(h) - np.min(h)) > 1e-9 * np.max(h):
        warnings.warn("nonuniform time grid; resampling uniformly", stacklevel=2)
        tu = np.linspace(t[0], t[-1], len(t))
        y = np.interp(tu, t, y)
        a = np.interp(tu, t, a)
        b = np.interp(tu, t, b)
        t = tu
    dy = (y[2:] - y[:-2]) / (t[2:] - t[:-2])
    premise_resid = dy - (a[1:-1] * y[1:-1] + b[1:-1])
    scale = float(np.max(np.abs(y)) + np.max(np.abs(b)) + 1e-300)
    premise_violations = int(np.sum(premise_resid > premise_tol * scale))
    int_a = cumulative_trapezoid(a, t, initial=0.0)
    integrand = b * np.exp(-int_a)
    int_b = cumulative_trapezoid(integrand, t, initial=0.0)
    bound = np.exp(int_a) * (y[0] + int_b)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(bound != 0.0, y / bound, np.where(y == 0.0, 1.0, np.inf))
    return BoundReport(
        name="gronwall",
        bound=float(np.max(bound)),
        measured=float(np.max(y)),
        constant=1.0,
        inputs={"n": len(t)},
        details={
            "max_ratio": float(np.max(ratios)),
            "premise_violations": premise_violations,
            "bound_series": bound,
        },
    )


_DERIV_NOISE_CADENCE = 0.2


def _diff_ineq_sides(traj, F):
    """Interior-sample LHS/RHS factor pairs of the two differential inequalities.

    Inequality A: d/dt Dh + nu dh_grad2 <= C [F^2 + E D + (E^(1/4) D + crit^4
    + E dz_u2^2 crit^4) Dh]; inequality B: d/dt V2 + nu Au2 <= C [F^2 +
    Dh^(4/3) dz_u2^(4/3) V2]. Both RHS are returned constant-free.
    """
    t = traj.t
    nu = traj.meta["nu"]
    e = traj.column("E")
    d = traj.column("D")
    dh = traj.column("Dh")
    v2 = traj.column("V2")
    crit = traj.column("crit")
    dzu = traj.column("dz_u2")
    dhg = traj.column("dh_grad2")
    au2 = traj.column("Au2")
    i = slice(1, -1)
    dt2 = t[2:] - t[:-2]
    lhs_a = (dh[2:] - dh[:-2]) / dt2 + nu * dhg[i]
    rhs_a = F**2 + e[i] * d[i] + (e[i] ** 0.25 * d[i] + crit[i] ** 4 + e[i] * dzu[i] ** 2 * crit[i] ** 4) * dh[i]
    lhs_b = (v2[2:] - v2[:-2]) / dt2 + nu * au2[i]
    rhs_b = F**2 + dh[i] ** (4.0 / 3.0) * dzu[i] ** (4.0 / 3.0) * v2[i]
    return t[i], (lhs_a, rhs_a), (lhs_b, rhs_b)


def diff_ineq_monitor(traj, F, C=1.0):
    """Verify both Gronwall-ready differential inequalities along a trajectory.

    Time derivatives use centered differences at interior samples; endpoints
    are excluded. Reports, per inequality, the violation fraction at the given
    constant and the minimal constant making it hold on this trajectory.
    """
    t = traj.t
    if len(t) < 3:
        raise ValueError("need at least 3 samples")
    h = float(np.max(np.diff(t)))
    span = float(t[-1] - t[0])
    if h > _DERIV_NOISE_CADENCE * span:
        warnings.warn("cadence too coarse; finite-difference derivatives are noisy", stacklevel=2)
    ti, (lhs_a, rhs_a), (lhs_b, rhs_b) = _diff_ineq_sides(traj, F)
    if isinstance(C, (tuple, list)):
        c_a, c_b = C
    else:
        c_a = c_b = C
    reports = []
    for name, lhs, rhs, c in (
        ("diff_ineq_dh", lhs_a, rhs_a, c_a),
        ("diff_ineq_v", lhs_b, rhs_b, c_b),
    ):
        ok = rhs > 0
        viol = np.sum(lhs[ok] > c * rhs[ok]) + np.sum(lhs[~ok] > 0)
        frac = float(viol / max(len(lhs), 1))
        with np.errstate(divide="ignore", invalid="ignore"):
            need = np.where(lhs > 0, lhs / np.where(ok, rhs, np.inf), 0.0)
        min_c = float(np.max(need)) if len(need) else 0.0
        i_tight = int(np.argmax(lhs - c * rhs)) if len(lhs) else 0
        reports.append(
            BoundReport(
                name=name,
                bound=float(c * rhs[i_tight]) if len(rhs) else 0.0,
                measured=float(lhs[i_tight]) if len(lhs) else 0.0,
                constant=c,
                inputs={"F": F, "nu": traj.meta["nu"]},
                details={
                    "violation_fraction": frac,
                    "fraction_held": 1.0 - frac,
                    "min_constant": min_c,
                    "n_interior": int(len(lhs)),
                },
            )
        )
    return tuple(reports)


def calibrate_trajectory_constants(traj, F, L, margin=0.1):
    """Minimal constants (plus a safety margin) making the trajectory bounds hold.

    Returns a dict usable as the calibrated-constant file of a run: keys k1,
    decay_l2, decay_l22, diff_ineq_dh, diff_ineq_v.
    """
    nu = traj.meta["nu"]
    t = traj.t
    e = traj.column("E")
    cum_d = traj.column("cumD")
    e0 = e[0]
    T = float(t[-1])

    def _min_c(numer, denom):
        pos = numer > 0
        if not np.any(pos):
            return 0.0
        return float(np.max(numer[pos] / denom[pos]))

    c_k1 = _min_c(e + nu * cum_d - 2 * e0, np.full_like(e, F**2 * (L**4 + nu * T) / nu**2))
    c_l2 = _min_c(e - np.exp(-nu * t / L**2) * e0, np.full_like(e, L**4 * F**2 / nu**2))
    c_l22 = _min_c(nu * cum_d - e0, L**2 * F**2 * np.maximum(t, 1e-300) / nu)
    reps = diff_ineq_monitor(traj, F, C=1.0)
    floor = 1e-6  # the bound formulas require strictly positive constants
    out = {
        "k1": max(c_k1 * (1 + margin), floor),
        "decay_l2": max(c_l2 * (1 + margin), floor),
        "decay_l22": max(c_l22 * (1 + margin), floor),
        "diff_ineq_dh": max(reps[0].details["min_constant"] * (1 + margin), floor),
        "diff_ineq_v": max(reps[1].details["min_constant"] * (1 + margin), floor),
    }
    return out
