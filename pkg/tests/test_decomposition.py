import numpy as np
import pytest

from channelns.decomposition import (
    BarotropicField,
    baroclinic,
    mean_vertical_flow_ratio,
    split,
    vertical_average,
)
from channelns.fields import ScalarField, VectorField, inner_l2, norm_lq, random_field


def sf(grid, fn):
    return ScalarField.from_function(grid, fn)


class TestVerticalAverage:
    def test_odd_function(self, g32):
        avg = vertical_average(sf(g32, lambda x, y, z: z + 0 * x))
        assert np.max(np.abs(avg.values2d)) < 1e-14

    def test_z_squared(self, g32):
        # oracle: (1/2) int_{-1}^{1} z^2 dz = 1/3
        avg = vertical_average(sf(g32, lambda x, y, z: z**2 + 0 * x))
        assert np.max(np.abs(avg.values2d - 1.0 / 3.0)) < 1e-12

    def test_x3_independent(self, g32):
        avg = vertical_average(sf(g32, lambda x, y, z: np.sin(x) + 0 * z))
        x, _, _ = g32.mesh()
        assert np.max(np.abs(avg.values2d - np.sin(x[:, :, 0]))) < 1e-13


class TestBaroclinic:
    def test_constant_in_z(self, g16):
        tilde = baroclinic(sf(g16, lambda x, y, z: np.cos(y) + 0 * z))
        assert np.max(np.abs(tilde.values)) < 1e-13

    def test_already_mean_free(self, g16):
        theta = sf(g16, lambda x, y, z: z + 0 * x)
        tilde = baroclinic(theta)
        assert np.max(np.abs(tilde.values - theta.values)) < 1e-14

    def test_z_squared(self, g32):
        tilde = baroclinic(sf(g32, lambda x, y, z: z**2 + 0 * x))
        _, _, z = g32.mesh()
        assert np.max(np.abs(tilde.values - (z**2 - 1.0 / 3.0))) < 1e-12

    def test_average_of_baroclinic_vanishes(self, g16):
        theta = random_field(g16, 31, flags=())
        tilde = baroclinic(theta)
        assert vertical_average(tilde).norm_l2() < 1e-10 * norm_lq(theta, 2)


class TestSplitProperties:
    def test_reconstruction_exact(self, g16):
        theta = random_field(g16, 32, flags=())
        avg, tilde = split(theta)
        recon = avg.values2d[:, :, None] + tilde.values
        assert np.array_equal(recon, theta.values) or np.max(
            np.abs(recon - theta.values)
        ) < 1e-15 * np.max(np.abs(theta.values))

    def test_l2_orthogonality(self, g16):
        theta = random_field(g16, 33, flags=())
        avg, tilde = split(theta)
        avg3d = avg.as_scalar_field()
        ip = inner_l2(avg3d, tilde)
        assert abs(ip) < 1e-10 * max(norm_lq(avg3d, 2) * norm_lq(tilde, 2), 1e-300)

    def test_pythagoras(self, g16):
        theta = random_field(g16, 34, flags=())
        avg, tilde = split(theta)
        total = norm_lq(theta, 2) ** 2
        parts = norm_lq(avg.as_scalar_field(), 2) ** 2 + norm_lq(tilde, 2) ** 2
        assert parts == pytest.approx(total, rel=1e-10)

    def test_commutes_with_horizontal_derivatives(self, g16):
        theta = random_field(g16, 35, flags=())
        for axis in (0, 1):
            davg = vertical_average(theta).grad_h()[axis]
            dtheta = ScalarField(g16, values=g16.diff(theta.values, axis))
            avgd = vertical_average(dtheta)
            assert np.max(np.abs(davg.values2d - avgd.values2d)) < 1e-10


class TestBarotropicField:
    def test_shape_checked(self, g16):
        with pytest.raises(ValueError):
            BarotropicField(g16, np.zeros((4, 4)))

    def test_constant_extension(self, g16):
        bf = BarotropicField.from_function(g16, lambda x, y: np.sin(x))
        ext = bf.as_scalar_field()
        assert np.max(np.abs(ext.values - ext.values[:, :, :1])) == 0.0

    def test_norms(self, g16):
        bf = BarotropicField.from_function(g16, lambda x, y: np.sin(x) + 0 * y)
        assert bf.norm_l2() == pytest.approx(np.sqrt(2) * np.pi, rel=1e-12)
        assert bf.norm_h1() == pytest.approx(2 * np.pi, rel=1e-10)

    def test_arithmetic(self, g16):
        a = BarotropicField.from_function(g16, lambda x, y: np.sin(x) + 0 * y)
        b = BarotropicField.from_function(g16, lambda x, y: np.cos(y) + 0 * x)
        c = a + 2.0 * b - a
        assert np.allclose(c.values2d, 2 * b.values2d)


class TestNoSlipConsequence:
    def test_shear_flow_has_no_vertical_mean_flow(self, g16):
        _, _, z = g16.mesh()
        one = np.ones((16, 16, 17))
        u = VectorField.from_arrays(
            g16,
            np.cos(np.pi * z / 2) * one,
            0 * one,
            0 * one,
            divergence_free=True,
            no_slip=True,
        )
        assert mean_vertical_flow_ratio(u) == 0.0

    def test_x3_independent_u3_must_vanish(self, g16):
        # a divergence-free no-slip field whose u3 is x3-independent has
        # u3 = 0: the wall value extends to the whole column
        u = random_field(g16, 36, flags=("divergence_free", "no_slip"))
        tilde = baroclinic(u.u3)
        if norm_lq(tilde, 2) < 1e-12 * norm_lq(u.u3, 2):
            assert norm_lq(u.u3, 2) < 1e-12
        ratio = mean_vertical_flow_ratio(u)
        assert 0.0 <= ratio <= 1.0

    def test_rejects_scalar(self, g16):
        with pytest.raises(ValueError):
            mean_vertical_flow_ratio(random_field(g16, 0, flags=()))
