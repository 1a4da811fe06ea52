import numpy as np
import pytest

from core_types import AnalyticCurve, ForcingSpec, IdentifiedModel, ModelFamily, residual
from errors import DivergenceError, InvalidArgument, StiffnessFailure
from odesim import FIXED_STEP, IntegratorConfig, fixed_step_dp5, integrate, simulate_identified, simulate_system
from systems import SYSTEM_NAMES, make_system

POS = ModelFamily.POSITION_FRICTION


def curves(damping, restoring):
    return AnalyticCurve(damping, 'x'), AnalyticCurve(restoring, 'x')


class TestIntegratorConfig:
    def test_auto_resolution(self):
        cfg = IntegratorConfig()
        assert cfg.resolve(False) == ('RK45', np.inf)
        assert cfg.resolve(True) == (FIXED_STEP, 0.01)

    def test_only_explicit_runge_kutta_methods(self):
        with pytest.raises(InvalidArgument):
            IntegratorConfig(method='LSODA')

    def test_fixed_step_never_exceeds_the_discontinuous_step(self):
        assert IntegratorConfig(method=FIXED_STEP).resolve(False) == (FIXED_STEP, 0.01)
        assert IntegratorConfig(method=FIXED_STEP, max_step=0.004).resolve(False) == (FIXED_STEP, 0.004)

    def test_explicit_method_is_kept(self):
        assert IntegratorConfig(method='DOP853').resolve(True) == ('DOP853', 0.01)

    @pytest.mark.parametrize('kwargs', [
        {'rtol': 0.0}, {'t_max': -1.0}, {'n_samples': 1}, {'method': 'euler'},
    ])
    def test_rejects_bad_values(self, kwargs):
        with pytest.raises(InvalidArgument):
            IntegratorConfig(**kwargs)


class TestIntegrate:
    def test_free_harmonic_oscillator(self):
        a, b = curves(lambda z: np.zeros_like(z), lambda z: z)
        traj = integrate(POS, a, b, ForcingSpec.zero(), 1.0, 0.0, IntegratorConfig(t_max=10.0))
        np.testing.assert_allclose(traj.x, np.cos(traj.t), atol=1e-7)
        np.testing.assert_allclose(traj.xdot, -np.sin(traj.t), atol=1e-7)
        assert traj.method == 'RK45'

    def test_output_grid(self):
        a, b = curves(lambda z: np.zeros_like(z), lambda z: z)
        traj = integrate(POS, a, b, ForcingSpec(0.5, 0.5), 0.0, 0.0,
                         IntegratorConfig(t_max=5.0, n_samples=101))
        assert traj.t.shape == (101,)
        assert traj.t[-1] == 5.0
        np.testing.assert_allclose(np.diff(traj.t), 0.05)
        np.testing.assert_allclose(traj.fext, 0.5 * np.cos(0.5 * traj.t))

    def test_acceleration_comes_from_the_right_hand_side(self):
        a, b = curves(lambda z: 0.3 * np.ones_like(z), lambda z: z ** 3)
        traj = integrate(POS, a, b, ForcingSpec(1.0, 1.0), 0.2, 0.0, IntegratorConfig(t_max=5.0))
        np.testing.assert_allclose(traj.xddot, traj.fext - 0.3 * traj.xdot - traj.x ** 3, atol=1e-14)

    def test_blow_up_is_a_divergence(self):
        a, b = curves(lambda z: np.zeros_like(z), lambda z: -z ** 3)
        with pytest.raises(DivergenceError) as info:
            integrate(POS, a, b, ForcingSpec.zero(), 2.0, 0.0, IntegratorConfig(t_max=10.0))
        assert info.value.t is not None and info.value.t < 10.0

    def test_evaluation_budget(self):
        a, b = curves(lambda z: np.zeros_like(z), lambda z: z)
        with pytest.raises(StiffnessFailure):
            integrate(POS, a, b, ForcingSpec.zero(), 1.0, 0.0, IntegratorConfig(max_rhs_evals=10))

    def test_curve_inputs_must_match_family(self):
        a = AnalyticCurve(lambda z: z, 'xdot')
        b = AnalyticCurve(lambda z: z, 'x')
        with pytest.raises(InvalidArgument):
            integrate(POS, a, b, ForcingSpec.zero(), 1.0, 0.0)


@pytest.mark.parametrize('name', ['van_der_pol', 'duffing', 'impact', 'fitzhugh_nagumo'])
def test_smooth_registry_residual(name):
    system = make_system(name)
    ds = simulate_system(system).to_dataset()
    assert np.max(residual(ds, system)) < 1e-10



def test_identified_model_with_true_curves_matches_ground_truth(vdp_system):
    model = IdentifiedModel(vdp_system.family, vdp_system.cc_a, vdp_system.cc_b)
    cfg = IntegratorConfig(t_max=10.0, n_samples=200)
    forcing = vdp_system.forcing(1.0, 1.3)
    ours = simulate_identified(model, forcing, 0.1, -0.2, cfg)
    truth = simulate_system(vdp_system, forcing, (0.1, -0.2), cfg)
    np.testing.assert_array_equal(ours.x, truth.x)


@pytest.mark.parametrize('name', SYSTEM_NAMES)
def test_every_registry_system_reaches_t_max(name):
    system = make_system(name)
    traj = simulate_system(system)
    assert traj.t[-1] == 40.0 and traj.t.size == 500
    assert np.all(np.isfinite(traj.x)) and np.all(np.isfinite(traj.xdot))
    assert traj.method == (FIXED_STEP if system.discontinuous else 'RK45')
    assert np.max(residual(traj.to_dataset(), system)) < 1e-10


class TestFixedStep:
    def test_step_divides_the_interval(self):
        sol = fixed_step_dp5(lambda t, y: -y, 1.0, [1.0], 0.3)
        assert sol.h == 0.25
        assert sol.t.size == 5
        assert sol(np.array([1.0]))[0, 0] == pytest.approx(np.exp(-1.0), rel=1e-5)

    def test_dense_output_passes_through_the_nodes(self):
        sol = fixed_step_dp5(lambda t, y: np.array([y[1], -y[0]]), 2.0, [1.0, 0.0], 0.1)
        np.testing.assert_allclose(sol(sol.t).T, sol.y, atol=1e-12)

    def test_harmonic_oscillator_over_forty_seconds(self):
        a, b = curves(lambda z: np.zeros_like(z), lambda z: z)
        traj = integrate(POS, a, b, ForcingSpec.zero(), 1.0, 0.0, IntegratorConfig(method=FIXED_STEP))
        assert traj.method == FIXED_STEP
        np.testing.assert_allclose(traj.x, np.cos(traj.t), atol=1e-7)

    def test_sticking_phase_does_not_stall(self):
        system = make_system('stick_slip')
        traj = simulate_system(system, system.forcing(0.5, 0.3), (0.0, 0.0))
        # drive never beats the dry friction, so the whole run sits on the sign switch
        assert traj.method == FIXED_STEP
        assert traj.n_rhs_evals <= 6 * 4001 + 1
        assert np.all(np.isfinite(traj.x))


class TestSmoothAccuracy:
    def test_harmonic_error_at_t_max(self):
        a, b = curves(lambda z: np.zeros_like(z), lambda z: z)
        traj = integrate(POS, a, b, ForcingSpec.zero(), 1.0, 0.0)
        assert abs(traj.x[-1] - np.cos(40.0)) < 1e-7

    def test_energy_is_conserved(self):
        a, b = curves(lambda z: np.zeros_like(z), lambda z: 2.0 * z)
        traj = integrate(POS, a, b, ForcingSpec.zero(), 1.0, 0.0)
        energy = 0.5 * (traj.xdot ** 2 + 2.0 * traj.x ** 2)
        assert np.max(np.abs(energy / energy[0] - 1.0)) < 1e-7

    # duffing is chaotic at its defaults, so halving tolerances is not a convergence check there
    @pytest.mark.parametrize('name', ['van_der_pol', 'fitzhugh_nagumo'])
    def test_self_convergence(self, name):
        system = make_system(name)
        coarse = simulate_system(system, cfg=IntegratorConfig(rtol=1e-9, atol=1e-9))
        fine = simulate_system(system, cfg=IntegratorConfig(rtol=5e-10, atol=5e-10))
        assert np.max(np.abs(coarse.x - fine.x)) < 1e-6
