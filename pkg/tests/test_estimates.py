import math

import numpy as np
import pytest

from channelns import estimates
from channelns.estimates import (
    CSV_COLUMNS,
    DiagnosticsRecord,
    bound_k1,
    bound_k2,
    bound_k_final,
    criterion_diag,
    decay_bound_check,
    diff_ineq_monitor,
    energy_budget,
    forcing_sup,
    gronwall_check,
    k1_bound_check,
)
from channelns.fields import ScalarField, VectorField, grad, norm_lq, random_field
from channelns.solver import SolverConfig, Trajectory, exact_shear_solution, run
from channelns.grid import make_grid

TAU = 2 * np.pi


def make_traj(t, nu=1.0, **columns):
    """Synthetic trajectory with given column arrays (others zero)."""
    traj = Trajectory()
    traj.meta["nu"] = nu
    n = len(t)
    cols = {c: np.zeros(n) for c in CSV_COLUMNS if c != "t"}
    cols.update({"fu": np.zeros(n), "fnorm": np.zeros(n)})
    cols.update({k: np.asarray(v, float) for k, v in columns.items()})
    for i, ti in enumerate(t):
        traj.append(DiagnosticsRecord(t=float(ti), **{k: float(v[i]) for k, v in cols.items()}))
    return traj


class TestCriterionDiagnostic:
    def test_zero_vertical_velocity(self, g16):
        one = np.ones((16, 16, 17))
        _, _, z = g16.mesh()
        u = VectorField.from_arrays(g16, np.cos(np.pi * z / 2) * one, 0 * one, 0 * one)
        assert criterion_diag(u) == 0.0

    def test_mean_free_u3_equals_full_gradient_norm(self, g16):
        # u3 = sin(x1) z is vertically mean-free, so the baroclinic part is u3
        x, _, z = g16.mesh()
        one = np.ones((16, 16, 17))
        u3 = ScalarField(g16, values=(np.sin(x) * z) * one)
        u = VectorField.from_arrays(g16, 0 * one, 0 * one, u3.values)
        expected = norm_lq(grad(u3), 2)
        assert criterion_diag(u) == pytest.approx(expected, rel=1e-12)

    def test_x3_independent_u3(self, g16):
        x, _, _ = g16.mesh()
        one = np.ones((16, 16, 17))
        u = VectorField.from_arrays(g16, 0 * one, 0 * one, np.sin(x) * one)
        assert criterion_diag(u) < 1e-12

    def test_rejects_scalar(self, g16):
        with pytest.raises(ValueError):
            criterion_diag(random_field(g16, 0, flags=()))


class TestForcingSup:
    def test_zero(self, g16):
        assert forcing_sup([VectorField.zeros(g16)]) == 0.0

    def test_constant(self, g16):
        f = random_field(g16, 1, flags=("divergence_free", "no_slip"), amplitude=2.0)
        assert forcing_sup([f, f, f]) == pytest.approx(2.0, rel=1e-12)

    def test_time_periodic_samples(self, g16):
        f = random_field(g16, 2, flags=("divergence_free", "no_slip"), amplitude=3.0)
        times = np.linspace(0, 1, 7)
        samples = [f * float(np.sin(t)) for t in times]
        expected = max(abs(np.sin(t)) for t in times) * 3.0
        assert forcing_sup(samples) == pytest.approx(expected, rel=1e-12)

    def test_accepts_norms(self):
        assert forcing_sup([1.0, 2.5, 0.3]) == 2.5

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            forcing_sup([])


class TestBoundFormulas:
    def test_k1_no_forcing(self):
        assert bound_k1(0.0, 1.0, 1.0, 1.0, math.sqrt(3.0), C=7.7) == pytest.approx(6.0)

    def test_k1_substitution(self):
        assert bound_k1(1.0, 1.0, 1.0, 2.0, 0.0, C=1.0) == pytest.approx(3.0, abs=1e-15)

    def test_k1_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            bound_k1(1.0, 1.0, -1.0, 1.0, 0.0)
        with pytest.raises(ValueError):
            bound_k1(1.0, 0.0, 1.0, 1.0, 0.0)
        with pytest.raises(ValueError):
            bound_k1(1.0, 1.0, 1.0, 1.0, 0.0, C=0.0)

    def test_k2_zero_constant_limit(self):
        assert bound_k2(5.0, 1.0, 0.0, 2.0, 3.0, C=0.0) == pytest.approx(4.0 + 9.0, rel=1e-15)

    def test_k2_substitution(self):
        # exponent 1, bracket 2 -> 2e
        assert bound_k2(1.0, 1.0, 0.0, 1.0, 0.0, C=1.0) == pytest.approx(
            2 * math.e, rel=1e-12
        )

    def test_k2_saturates(self):
        val = bound_k2(1e6, 1.0, 1e3, 1.0, 1.0, C=1.0)
        assert val == math.inf

    def test_k2_zero_bracket(self):
        assert bound_k2(0.0, 1.0, 5.0, 0.0, 0.0, C=1.0) == 0.0

    def test_k_final_trivial_exponent(self):
        assert bound_k_final(0.0, 7.0, 2.0, 1.0) == pytest.approx(5.0, rel=1e-15)
        assert bound_k_final(7.0, 0.0, 2.0, 1.0) == pytest.approx(5.0, rel=1e-15)

    def test_k_final_substitution(self):
        assert bound_k_final(1.0, 1.0, 1.0, 0.0, C=1.0) == pytest.approx(math.e, rel=1e-12)

    def test_k_final_saturates_on_inf(self):
        assert bound_k_final(1.0, math.inf, 1.0, 0.0) == math.inf

    @pytest.mark.parametrize("idx", range(5))
    def test_k2_monotone(self, idx):
        base = [1.0, 1.0, 0.5, 1.0, 0.5]  # K1, T, sup_crit, u0_h1, F
        bumped = list(base)
        bumped[idx] += 0.25
        assert bound_k2(*bumped, C=1.0) >= bound_k2(*base, C=1.0)

    @pytest.mark.parametrize("idx", range(4))
    def test_k_final_monotone(self, idx):
        base = [1.0, 1.0, 1.0, 0.5]  # K1, K2, u0_h1, F
        bumped = list(base)
        bumped[idx] += 0.25
        assert bound_k_final(*bumped, C=1.0) >= bound_k_final(*base, C=1.0)


class TestEnergyBudget:
    def test_zero_trajectory(self):
        t = np.linspace(0.0, 1.0, 11)
        traj = make_traj(t)
        resid, rep = energy_budget(traj)
        assert np.max(np.abs(resid)) == 0.0

    def test_exact_decay_closed_form(self):
        # E = E0 exp(-2 nu lam t), D = lam E: the budget closes exactly
        nu, lam, e0 = 1.0, (np.pi / 2) ** 2, 4 * np.pi**2
        t = np.linspace(0.0, 0.1, 1001)
        e = e0 * np.exp(-2 * nu * lam * t)
        traj = make_traj(t, nu=nu, E=e, D=lam * e)
        resid, rep = energy_budget(traj)
        assert np.max(np.abs(resid)) < 1e-6 * e0

    def test_coarse_cadence_warns(self):
        nu, lam, e0 = 1.0, (np.pi / 2) ** 2, 4 * np.pi**2
        t = np.linspace(0.0, 2.0, 5)
        e = e0 * np.exp(-2 * nu * lam * t)
        traj = make_traj(t, nu=nu, E=e, D=lam * e)
        with pytest.warns(UserWarning, match="cadence"):
            energy_budget(traj)


class TestDecayBounds:
    def test_exact_shear_satisfies_decay(self):
        # e^{-2 nu lam t} <= e^{-nu t / L^2} needs lam >= 1/(2 L^2): true since
        # lam = pi^2/4 > 1/2
        nu, lam, e0 = 1.0, (np.pi / 2) ** 2, 4 * np.pi**2
        t = np.linspace(0.0, 0.5, 201)
        e = e0 * np.exp(-2 * nu * lam * t)
        cum_d = (e0 - e) / (2 * nu)  # integral of D = lam E
        traj = make_traj(t, nu=nu, E=e, D=lam * e, cumD=cum_d)
        rep_e, rep_i = decay_bound_check(traj, F=0.0, L=1.0, C=1.0)
        assert rep_e.details["violations"] == 0
        assert rep_i.details["violations"] == 0
        assert rep_e.held and rep_i.held

    def test_zero_state(self):
        traj = make_traj(np.linspace(0, 1, 5))
        rep_e, rep_i = decay_bound_check(traj, F=0.0, L=1.0)
        assert rep_e.details["violations"] == 0

    def test_violation_detected(self):
        t = np.linspace(0.0, 1.0, 11)
        e = 1.0 + t  # grows with no forcing: must violate the decay bound
        traj = make_traj(t, nu=1.0, E=e)
        rep_e, _ = decay_bound_check(traj, F=0.0, L=1.0)
        assert rep_e.details["violations"] > 0
        assert not rep_e.held
        assert rep_e.details["first_violation_t"] is not None


class TestK1Check:
    def test_exact_shear_run_holds_with_unit_constant(self):
        nu, lam, e0 = 1.0, (np.pi / 2) ** 2, 4 * np.pi**2
        t = np.linspace(0.0, 0.5, 101)
        e = e0 * np.exp(-2 * nu * lam * t)
        cum_d = (e0 - e) / (2 * nu)
        traj = make_traj(t, nu=nu, E=e, D=lam * e, cumD=cum_d)
        rep = k1_bound_check(traj, F=0.0, L=1.0, C=1.0)
        assert rep.details["violations"] == 0
        assert rep.measured <= rep.bound


class TestGronwall:
    def test_saturating_exponential(self):
        t = np.linspace(0.0, 1.0, 10001)
        rep = gronwall_check(t, np.exp(t), np.ones_like(t), np.zeros_like(t))
        assert abs(rep.details["max_ratio"] - 1.0) < 1e-8
        assert rep.details["premise_violations"] == 0

    def test_saturating_relaxation(self):
        t = np.linspace(0.0, 1.0, 10001)
        y = 1.0 - np.exp(-t)
        rep = gronwall_check(t, y, -np.ones_like(t), np.ones_like(t))
        assert abs(rep.details["max_ratio"] - 1.0) < 1e-8

    def test_constant_case(self):
        t = np.linspace(0.0, 1.0, 101)
        y = np.full_like(t, 2.0)
        rep = gronwall_check(t, y, np.zeros_like(t), np.zeros_like(t))
        assert rep.details["max_ratio"] == pytest.approx(1.0, abs=1e-14)

    def test_nonuniform_resampled_with_warning(self):
        t = np.concatenate([np.linspace(0, 0.5, 501), np.linspace(0.502, 1.0, 250)])
        with pytest.warns(UserWarning, match="resampling"):
            rep = gronwall_check(t, np.exp(t), np.ones_like(t), np.zeros_like(t))
        assert abs(rep.details["max_ratio"] - 1.0) < 1e-6

    def test_premise_violation_reported(self):
        t = np.linspace(0.0, 1.0, 101)
        y = np.exp(2 * t)  # y' = 2y > 1*y
        rep = gronwall_check(t, y, np.ones_like(t), np.zeros_like(t))
        assert rep.details["premise_violations"] > 0

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            gronwall_check([0, 1], [0, 1, 2], [0, 0], [0, 0])


class TestDiffIneqMonitor:
    def test_zero_state_holds(self):
        t = np.linspace(0.0, 1.0, 21)
        traj = make_traj(t)
        rep_a, rep_b = diff_ineq_monitor(traj, F=1.0, C=1.0)
        assert rep_a.details["violation_fraction"] == 0.0
        assert rep_b.details["violation_fraction"] == 0.0

    def test_shear_decay_holds_trivially(self):
        # grad_h u = 0 along a shear flow: the first inequality reads 0 <= C F^2
        nu, lam, e0 = 1.0, (np.pi / 2) ** 2, 4 * np.pi**2
        t = np.linspace(0.0, 0.2, 101)
        e = e0 * np.exp(-2 * nu * lam * t)
        traj = make_traj(
            t, nu=nu, E=e, D=lam * e, V2=lam * e, Au2=lam**2 * e, dz_u2=np.sqrt(lam * e)
        )
        rep_a, rep_b = diff_ineq_monitor(traj, F=0.0, C=1.0)
        assert rep_a.details["violation_fraction"] == 0.0
        # d/dt V2 = -2 nu lam V2 < 0 and Au2 = lam V2, so lhs = -nu lam V2 <= 0
        assert rep_b.details["violation_fraction"] == 0.0

    def test_min_constant_scales_inequality(self):
        t = np.linspace(0.0, 1.0, 51)
        dh = 1.0 + t  # d/dt Dh = 1 against rhs E*D*... all zero except F
        traj = make_traj(t, nu=1.0, Dh=dh)
        rep_a, _ = diff_ineq_monitor(traj, F=1.0, C=1.0)
        assert rep_a.details["min_constant"] == pytest.approx(1.0, rel=1e-6)
        rep_a2, _ = diff_ineq_monitor(traj, F=2.0, C=1.0)
        assert rep_a2.details["min_constant"] == pytest.approx(0.25, rel=1e-6)

    def test_needs_three_samples(self):
        with pytest.raises(ValueError):
            diff_ineq_monitor(make_traj([0.0, 1.0]), F=0.0)


@pytest.fixture(scope="module")
def decay_run():
    g = make_grid(8, 8, 17, TAU, TAU, 1.0)
    u0 = exact_shear_solution(g, 1, 1.0, 0.0, 1.0) + random_field(
        g, 55, flags=("divergence_free", "no_slip"), amplitude=0.3
    )
    return run(u0, 1.0, SolverConfig(dt=2e-3, t_end=0.1, output_every=2))


class TestTrajectoryIntegration:
    def test_poincare_consistent_decay(self, decay_run):
        # E decays at least as fast as the measured smallest Rayleigh quotient
        _, traj = decay_run
        e, d, t = traj.column("E"), traj.column("D"), traj.t
        rho = np.min(d / e)
        bound = e[0] * np.exp(-2.0 * traj.meta["nu"] * rho * t)
        assert np.all(e <= bound * (1 + 1e-6))

    def test_calibrated_constants_positive_and_reused(self, decay_run):
        _, traj = decay_run
        consts = estimates.calibrate_trajectory_constants(traj, F=0.0, L=1.0)
        assert set(consts) == {"k1", "decay_l2", "decay_l22", "diff_ineq_dh", "diff_ineq_v"}
        assert all(v > 0 for v in consts.values())
        rep = k1_bound_check(traj, F=0.0, L=1.0, C=consts["k1"])
        assert rep.details["violations"] == 0

    def test_criterion_column_matches_function(self, decay_run):
        final_state, traj = decay_run
        assert traj.records[-1].crit == pytest.approx(
            criterion_diag(final_state.u), rel=1e-12
        )

    def test_bound_report_margin_invariant(self, decay_run):
        _, traj = decay_run
        rep = k1_bound_check(traj, F=0.0, L=1.0, C=1.0)
        assert rep.margin == pytest.approx(rep.bound - rep.measured)
        d = rep.as_dict()
        assert d["margin"] == rep.margin
