import csv

import numpy as np
import pytest
from numpy.polynomial import polynomial as P

from core_types import Dataset, ModelFamily
from errors import InvalidArgument, InvalidData
from harness import make_dataset
from poly_cc import PolyCurve, back_transform, export_poly_coefficients, fit_poly, shift_scale
from systems import make_system

POS = ModelFamily.POSITION_FRICTION
VEL = ModelFamily.VELOCITY_FRICTION


class TestBackTransform:
    def test_identity(self):
        c_hat = [0.3, -1.0, 2.5, 0.7]
        np.testing.assert_array_equal(back_transform(c_hat, 0.0, 1.0), c_hat)

    def test_hand_expansion(self):
        np.testing.assert_allclose(back_transform([0.0, 1.0], 1.0, 2.0), [-0.5, 0.5])

    def test_rejects_zero_scale(self):
        with pytest.raises(InvalidArgument):
            back_transform([1.0, 2.0], 0.0, 0.0)

    def test_matches_recursion_when_unscaled(self):
        # with A1 = 1: c_j = c_hat_j + sum_{k>j} C(k, j) (-A0)^(k-j) c_hat_k
        c_hat = np.array([1.0, -2.0, 0.5, 3.0])
        A0 = 0.4
        expected = np.array([
            1.0 + (-2.0) * (-A0) + 0.5 * (-A0) ** 2 + 3.0 * (-A0) ** 3,
            -2.0 + 2 * 0.5 * (-A0) + 3 * 3.0 * (-A0) ** 2,
            0.5 + 3 * 3.0 * (-A0),
            3.0,
        ])
        np.testing.assert_allclose(back_transform(c_hat, A0, 1.0), expected, rtol=1e-14)

    def test_random_evaluation_equivalence(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            c_hat = rng.normal(size=11)
            A0 = rng.uniform(-0.5, 0.5)
            A1 = rng.uniform(1.0, 2.0)
            curve = PolyCurve(c_hat, A0, A1, 'x', (A0 - A1, A0 + A1))
            z = rng.uniform(A0 - A1, A0 + A1, size=100)
            np.testing.assert_allclose(P.polyval(z, curve.monomial_coeffs), curve(z), rtol=0, atol=1e-9)


def test_shift_scale():
    assert shift_scale(np.array([-1.0, 3.0, 0.5])) == (1.0, 2.0)
    with pytest.raises(InvalidData):
        shift_scale(np.ones(4))


class TestFitPoly:
    def test_linear_oscillator(self, undamped_dataset):
        model = fit_poly(undamped_dataset, POS, degree=5)
        np.testing.assert_allclose(model.cc_a.monomial_coeffs, 0.0, atol=1e-8)
        expected_f2 = np.zeros(6)
        expected_f2[1] = 1.0
        np.testing.assert_allclose(model.cc_b.monomial_coeffs, expected_f2, atol=1e-8)
        assert not model.fit.rank_deficient

    def test_van_der_pol_recovery(self, vdp_dataset):
        model = fit_poly(vdp_dataset, POS)
        f1 = model.cc_a.monomial_coeffs
        f2 = model.cc_b.monomial_coeffs
        assert f1[0] == pytest.approx(-0.501, abs=1e-6)
        assert f1[2] == pytest.approx(0.501, abs=1e-6)
        assert f2[1] == pytest.approx(1.22, abs=1e-6)
        assert model.method == 'poly'
        assert model.cc_a.degree == 10

    def test_shifted_and_monomial_forms_agree_on_fit(self, vdp_dataset):
        model = fit_poly(vdp_dataset, POS)
        z = np.linspace(*model.cc_a.domain, 50)
        for curve in (model.cc_a, model.cc_b):
            np.testing.assert_allclose(P.polyval(z, curve.monomial_coeffs), curve(z), atol=1e-9)

    def test_velocity_family_omits_restoring_constant(self, vdp_dataset):
        model = fit_poly(vdp_dataset, VEL, degree=4)
        assert model.cc_a.variable == 'xdot'
        assert model.cc_b.shifted_coeffs[0] == 0.0
        assert model.fit.n_columns == 5 + 4

    def test_two_points_are_rank_deficient(self):
        ds = Dataset(t=[0.0, 1.0], x=[0.0, 1.0], xdot=[1.0, 2.0], xddot=[0.0, 0.0], fext=[0.0, 1.0])
        model = fit_poly(ds, POS, degree=10)
        assert model.fit.rank_deficient
        assert model.fit.rank <= 2

    def test_degenerate_domain(self):
        t = np.linspace(0, 1, 10)
        ds = Dataset(t=t, x=np.ones(10), xdot=np.zeros(10), xddot=np.zeros(10), fext=np.ones(10))
        with pytest.raises(InvalidData):
            fit_poly(ds, POS)

    def test_invalid_degree(self, vdp_dataset):
        with pytest.raises(InvalidArgument):
            fit_poly(vdp_dataset, POS, degree=0)

    def test_residual_does_not_increase_with_degree(self):
        ds = make_dataset(make_system('impact'))
        residuals = [fit_poly(ds, POS, degree=d).fit.fit_residual for d in range(1, 7)]
        for lower, higher in zip(residuals, residuals[1:]):
            assert higher <= lower * (1 + 1e-9) + 1e-25


def test_export(tmp_path, undamped_dataset):
    model = fit_poly(undamped_dataset, POS, degree=3)
    path = export_poly_coefficients(model, tmp_path / 'poly.csv')
    with open(path) as f:
        rows = list(csv.reader(f))
    assert rows[0] == ['curve', 'basis', 'j', 'coeff']
    assert len(rows) == 1 + 2 * 2 * 4
    assert {r[0] for r in rows[1:]} == {'f1', 'f2'}
    assert {r[1] for r in rows[1:]} == {'shifted', 'monomial'}
