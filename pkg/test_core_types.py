import numpy as np
import pytest

from core_types import (
    AnalyticCurve, Dataset, ForcingForm, ForcingSpec, IdentifiedModel, ModelFamily,
    estimate_derivatives, require_valid, resample_uniform, residual, validate_dataset,
)
from errors import InvalidArgument, InvalidData
from systems import make_system


def uniform_dataset(n=11, **overrides):
    t = np.linspace(0.0, 1.0, n)
    cols = dict(t=t, x=np.sin(t), xdot=np.cos(t), xddot=-np.sin(t), fext=np.zeros(n))
    cols.update(overrides)
    return Dataset(**cols)


class TestModelFamily:
    @pytest.mark.parametrize('text, expected', [
        ('position', ModelFamily.POSITION_FRICTION),
        ('1', ModelFamily.POSITION_FRICTION),
        (2, ModelFamily.VELOCITY_FRICTION),
        ('Velocity', ModelFamily.VELOCITY_FRICTION),
    ])
    def test_parse(self, text, expected):
        assert ModelFamily.parse(text) is expected

    def test_parse_rejects_unknown(self):
        with pytest.raises(InvalidArgument):
            ModelFamily.parse('rayleigh')

    def test_curve_layout(self):
        assert ModelFamily.POSITION_FRICTION.curve_names == ('f1', 'f2')
        assert ModelFamily.VELOCITY_FRICTION.input_variables == ('xdot', 'x')
        assert ModelFamily.VELOCITY_FRICTION.code == 2


class TestForcing:
    def test_harmonic_scalar_and_array(self):
        f = ForcingSpec(2.0, 0.5)
        assert isinstance(f(0.0), float)
        assert f(0.0) == 2.0
        np.testing.assert_allclose(f(np.array([0.0, np.pi])), [2.0, 2.0 * np.cos(0.5 * np.pi)])

    def test_zero(self):
        assert ForcingSpec.zero()(3.0) == 0.0

    def test_fhn_composite(self):
        f = ForcingSpec(2.0, 1.2, ForcingForm.FHN_COMPOSITE, coupling=0.064)
        t = 0.7
        expected = -0.064 * 2.0 * np.cos(1.2 * t) + 2.0 * 1.2 * np.sin(1.2 * t)
        assert f(t) == pytest.approx(expected, rel=1e-14)

    def test_with_drive_keeps_form(self):
        f = ForcingSpec(1.0, 1.0, ForcingForm.FHN_COMPOSITE, 0.1).with_drive(3.0, 0.2)
        assert (f.amplitude, f.omega, f.form, f.coupling) == (3.0, 0.2, ForcingForm.FHN_COMPOSITE, 0.1)


class TestDataset:
    def test_arrays_are_read_only_copies(self):
        x = np.sin(np.linspace(0, 1, 11))
        ds = uniform_dataset(x=x)
        x[0] = 99.0
        assert ds.x[0] == 0.0
        with pytest.raises(ValueError):
            ds.x[0] = 1.0

    def test_valid_dataset_has_no_violations(self):
        assert validate_dataset(uniform_dataset()) == []
        assert uniform_dataset().h == pytest.approx(0.1)

    def test_non_finite_value_is_reported_with_index(self):
        x = np.sin(np.linspace(0, 1, 11))
        x[3] = np.nan
        assert validate_dataset(uniform_dataset(x=x)) == ['x non-finite @ 3']

    def test_repeated_time_gives_single_violation(self):
        t = np.linspace(0.0, 1.0, 11)
        t[5] = t[4]
        violations = validate_dataset(uniform_dataset(t=t))
        assert violations == ['t not strictly increasing @ 5']

    def test_non_uniform_step(self):
        t = np.linspace(0.0, 1.0, 11)
        t[5] += 0.01
        violations = validate_dataset(uniform_dataset(t=t))
        assert 't non-uniform step @ 5' in violations

    def test_length_mismatch_and_short(self):
        violations = validate_dataset(Dataset(t=[0.0], x=[0.0], xdot=[0.0], xddot=[0.0], fext=[0.0, 1.0]))
        assert any(v.startswith('length mismatch') for v in violations)
        assert any(v.startswith('t too short') for v in violations)

    def test_require_valid_raises(self):
        with pytest.raises(InvalidData):
            require_valid(uniform_dataset(fext=np.full(11, np.inf)))

    def test_domain(self):
        ds = uniform_dataset()
        assert ds.domain('x') == (0.0, pytest.approx(np.sin(1.0)))


class TestResampling:
    def test_endpoints_exact_and_linear_reproduced(self):
        t_raw = np.array([0.0, 0.3, 0.5, 1.1, 2.0])
        y_raw = 3.0 * t_raw - 1.0
        grid, values = resample_uniform(t_raw, y_raw, 21)
        assert values[0] == y_raw[0] and values[-1] == y_raw[-1]
        np.testing.assert_allclose(values, 3.0 * grid - 1.0, atol=1e-12)

    def test_rejects_unsorted(self):
        with pytest.raises(InvalidArgument):
            resample_uniform([0.0, 2.0, 1.0], [0.0, 1.0, 2.0], 5)

    def test_cubic_on_irregular_grid(self):
        rng = np.random.default_rng(11)
        t_raw = np.concatenate([[0.0], np.cumsum(rng.uniform(0.02, 0.1, size=40))])
        grid, values = resample_uniform(t_raw, t_raw ** 3, 101)
        np.testing.assert_allclose(values, grid ** 3, atol=1e-12)

    def test_uniform_input_is_left_alone(self):
        t = np.linspace(0.0, 3.0, 31)
        grid, values = resample_uniform(t, np.sin(t), 31)
        np.testing.assert_array_equal(grid, t)
        np.testing.assert_allclose(values, np.sin(t), rtol=0, atol=1e-13)

    def test_two_points(self):
        grid, values = resample_uniform([0.0, 0.4, 1.0], [1.0, 2.0, 5.0], 2)
        np.testing.assert_array_equal(grid, [0.0, 1.0])
        np.testing.assert_array_equal(values, [1.0, 5.0])

    def test_rejects_single_point_grid(self):
        with pytest.raises(InvalidArgument):
            resample_uniform([0.0, 1.0], [0.0, 1.0], 1)


class TestDerivatives:
    def test_sine(self):
        t = np.linspace(0.0, 2.0 * np.pi, 629)
        xdot, xddot = estimate_derivatives(t, np.sin(t))
        np.testing.assert_allclose(xdot, np.cos(t), atol=1e-7)
        np.testing.assert_allclose(xddot, -np.sin(t), atol=1e-4)

    def test_cubic_is_exact_in_the_interior(self):
        t = np.linspace(-1.0, 1.0, 41)
        xdot, xddot = estimate_derivatives(t, t ** 3)
        np.testing.assert_allclose(xdot, 3 * t ** 2, atol=1e-10)
        np.testing.assert_allclose(xddot, 6 * t, atol=1e-7)

    def test_polynomials_up_to_second_degree_are_exact(self):
        t = np.linspace(0.0, 1.0, 21)
        xdot, xddot = estimate_derivatives(t, np.full_like(t, 2.5))
        np.testing.assert_allclose(xdot, 0.0, atol=1e-10)
        np.testing.assert_allclose(xddot, 0.0, atol=1e-8)
        xdot, xddot = estimate_derivatives(t, t ** 2)
        np.testing.assert_allclose(xdot, 2 * t, atol=1e-10)
        np.testing.assert_allclose(xddot, 2.0, atol=1e-8)

    def test_interior_error_is_fourth_order(self):
        errors = []
        for n in (41, 81, 161):
            t = np.linspace(0.0, 2.0, n)
            xdot, xddot = estimate_derivatives(t, np.sin(t))
            errors.append((np.max(np.abs(xdot[2:-2] - np.cos(t[2:-2]))),
                           np.max(np.abs(xddot[2:-2] + np.sin(t[2:-2])))))
        errors = np.array(errors)
        slopes = np.log2(errors[:-1] / errors[1:])
        assert np.all(slopes >= 3.5)

    def test_needs_five_samples(self):
        with pytest.raises(InvalidArgument):
            estimate_derivatives(np.arange(4.0), np.arange(4.0))


class TestCurvesAndResidual:
    def test_call_keeps_shape(self):
        curve = AnalyticCurve(lambda z: 2 * z, 'x')
        assert curve(1.5) == 3.0
        assert curve(np.ones((2, 3))).shape == (2, 3)

    def test_identified_model_checks_inputs(self):
        a = AnalyticCurve(lambda z: z, 'x')
        b = AnalyticCurve(lambda z: z, 'x')
        with pytest.raises(InvalidArgument):
            IdentifiedModel(ModelFamily.VELOCITY_FRICTION, a, b)

    def test_true_system_residual_vanishes(self, vdp_dataset, vdp_system):
        assert np.max(residual(vdp_dataset, vdp_system)) < 1e-20

    def test_residual_tells_systems_apart(self, vdp_dataset):
        assert np.mean(residual(vdp_dataset, make_system('stick_slip'))) > 1e-2
