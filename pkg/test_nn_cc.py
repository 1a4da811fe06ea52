import numpy as np
import pytest

from core_types import Dataset, Extrapolation, IdentifiedModel, ModelFamily
from errors import InvalidArgument, InvalidData, TrainingFailure
from harness import make_dataset
from nn_cc import (
    ACTIVATION_NAMES, ACTIVATIONS, RRELU_EVAL_SLOPE, AdamState, NeuralCurve, TrainConfig, adam_step,
    export_model, fit_edge_extrapolation, forcing_loss, get_activation, import_model, loss_and_grads,
    mlp_forward, mlp_forward_batch, mlp_init, train,
)
from systems import make_system

POS = ModelFamily.POSITION_FRICTION
VEL = ModelFamily.VELOCITY_FRICTION

TINY = dict(neurons=10, layers=1, activation='tanh', history_every=50)


def set_layers(net, weights, biases):
    for W, value in zip(net.weights, weights):
        W[...] = value
    for b, value in zip(net.biases, biases):
        b[...] = value
    return net


def with_fext(ds, fext):
    return Dataset(t=ds.t, x=ds.x, xdot=ds.xdot, xddot=ds.xddot, fext=fext)


class TestNetwork:
    def test_init_is_deterministic_per_seed(self):
        a = mlp_init((1, 5, 1), 'tanh', 7).flat_parameters()
        b = mlp_init((1, 5, 1), 'tanh', 7).flat_parameters()
        c = mlp_init((1, 5, 1), 'tanh', 8).flat_parameters()
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_he_uniform_bounds_and_zero_biases(self):
        net = mlp_init((1, 50, 50, 1), 'relu', 0)
        assert np.all(np.abs(net.weights[1]) <= np.sqrt(6.0 / 50))
        assert not any(b.any() for b in net.biases)

    def test_default_architecture_size(self):
        assert TrainConfig().widths == (1, 100, 100, 1)
        assert mlp_init(TrainConfig().widths).param_count == 10401

    @pytest.mark.parametrize('widths', [(1,), (1, 0, 1), (2, 5, 1), (1, 5, 3)])
    def test_rejects_bad_widths(self, widths):
        with pytest.raises(InvalidArgument):
            mlp_init(widths)

    def test_unknown_activation(self):
        with pytest.raises(InvalidArgument, match='unknown activation'):
            get_activation('swish2')

    def test_zero_weights_output_the_last_bias(self):
        net = mlp_init((1, 4, 4, 1), 'relu', 0)
        set_layers(net, [0.0, 0.0, 0.0], [0.0, 0.0, 0.7])
        assert mlp_forward(net, 3.0) == 0.7

    def test_single_relu_neuron(self):
        net = set_layers(mlp_init((1, 1, 1), 'relu', 0), [2.0, 3.0], [-1.0, 0.5])
        assert mlp_forward(net, 1.0) == 3.5
        assert mlp_forward(net, 0.0) == 0.5

    def test_batch_matches_single_evaluation(self):
        net = mlp_init((1, 8, 8, 1), 'tanh', 1)
        zs = np.linspace(-2.0, 2.0, 17)
        batch = mlp_forward_batch(net, zs)[0]
        np.testing.assert_allclose(batch, [mlp_forward(net, z) for z in zs], rtol=1e-12)

    def test_set_flat_parameters_checks_size(self):
        net = mlp_init((1, 3, 1))
        with pytest.raises(InvalidArgument):
            net.set_flat_parameters(np.zeros(5))


class TestActivations:
    @pytest.mark.parametrize('name', ACTIVATION_NAMES)
    def test_gradient_matches_finite_differences(self, name):
        act = ACTIVATIONS[name]
        z = np.array([-1.3, -0.4, 0.35, 1.7])
        h = 1e-6
        numeric = (act.fn(z + h) - act.fn(z - h)) / (2 * h)
        np.testing.assert_allclose(act.grad(z), numeric, rtol=1e-5, atol=1e-7)

    def test_leaky_slopes(self):
        assert ACTIVATIONS['leakyrelu'].fn(np.array([-2.0]))[0] == pytest.approx(-0.02)
        assert ACTIVATIONS['rrelu'].fn(np.array([-1.0]))[0] == pytest.approx(-RRELU_EVAL_SLOPE)
        assert RRELU_EVAL_SLOPE == pytest.approx((1 / 8 + 1 / 3) / 2)


class TestLoss:
    @pytest.mark.parametrize('family', [POS, VEL])
    def test_gradients_match_finite_differences(self, family):
        rng = np.random.default_rng(17)
        ds = Dataset(t=np.linspace(0.0, 1.0, 50), x=rng.uniform(-2.0, 2.0, 50),
                     xdot=rng.uniform(-2.0, 2.0, 50), xddot=rng.normal(size=50), fext=rng.normal(size=50))
        net_a = mlp_init((1, 5, 5, 1), 'tanh', 1)
        net_b = mlp_init((1, 5, 5, 1), 'tanh', 2)
        for net in (net_a, net_b):
            net.set_flat_parameters(rng.normal(scale=0.5, size=net.param_count))
        loss, grads_a, grads_b = loss_and_grads(net_a, net_b, ds, family, lambda_c=0.5)
        assert loss == pytest.approx(forcing_loss(net_a, net_b, ds, family, lambda_c=0.5), rel=1e-12)

        h = 1e-6
        for net, grads in ((net_a, grads_a), (net_b, grads_b)):
            analytic = np.concatenate([g.ravel() for g in grads])
            flat = net.flat_parameters()
            numeric = np.zeros_like(flat)
            for i in range(flat.size):
                for sign in (1, -1):
                    shifted = flat.copy()
                    shifted[i] += sign * h
                    net.set_flat_parameters(shifted)
                    numeric[i] += sign * forcing_loss(net_a, net_b, ds, family, lambda_c=0.5)
                net.set_flat_parameters(flat)
            np.testing.assert_allclose(analytic, numeric / (2 * h), rtol=1e-4, atol=1e-7)

    @pytest.mark.parametrize('family', [POS, VEL])
    def test_zero_networks(self, small_dataset, family):
        net_a, net_b = mlp_init((1, 3, 1)), mlp_init((1, 3, 1))
        for net in (net_a, net_b):
            net.set_flat_parameters(np.zeros(net.param_count))
        expected = np.mean((small_dataset.fext - small_dataset.xddot) ** 2)
        assert forcing_loss(net_a, net_b, small_dataset, family) == pytest.approx(expected, rel=1e-14)


def test_adam_first_step_moves_by_learning_rate():
    p = np.array([1.0])
    state = AdamState.for_parameters([p])
    adam_step([p], [np.array([0.3])], state, TrainConfig(learning_rate=1e-3))
    assert p[0] == pytest.approx(1.0 - 1e-3, rel=1e-9)
    assert state.step == 1


@pytest.mark.parametrize('kwargs', [
    {'neurons': 0}, {'max_epochs': 0}, {'learning_rate': 0.0}, {'beta1': 1.0},
    {'lambda_c': -1.0}, {'edge_fraction': 0.6}, {'activation': 'step'},
])
def test_train_config_validation(kwargs):
    with pytest.raises(InvalidArgument):
        TrainConfig(**kwargs)


class TestTrain:
    def test_loss_decreases_and_is_deterministic(self, damped_dataset):
        cfg = TrainConfig(max_epochs=200, seed=3, **TINY)
        first = train(damped_dataset, POS, cfg)
        second = train(damped_dataset, POS, cfg)
        assert [e for e, _ in first.fit.history] == [1, 50, 100, 150, 200]
        assert first.fit.final_loss < first.fit.history[0][1]
        assert first.fit.final_loss == second.fit.final_loss
        np.testing.assert_array_equal(first.cc_a.net.flat_parameters(), second.cc_a.net.flat_parameters())
        assert first.method == 'nn' and first.fit.epochs == 200

    def test_curves_are_seeded_independently(self, damped_dataset):
        model = train(damped_dataset, POS, TrainConfig(max_epochs=1, **TINY))
        assert not np.array_equal(model.cc_a.net.weights[0], model.cc_b.net.weights[0])

    def test_loss_stop_ends_training_early(self, damped_dataset):
        model = train(damped_dataset, VEL, TrainConfig(max_epochs=100, loss_stop=1e9, **TINY))
        assert model.fit.epochs == 1
        assert model.fit.final_loss == model.fit.history[0][1]
        assert model.cc_a.variable == 'xdot'

    def test_non_finite_loss_raises(self, damped_dataset):
        ds = with_fext(damped_dataset, np.full(damped_dataset.n, 1e200))
        with pytest.raises(TrainingFailure) as info:
            train(ds, POS, TrainConfig(max_epochs=10, **TINY))
        assert info.value.epoch == 1

    @pytest.mark.slow
    def test_stick_slip_training_converges(self):
        ds = make_dataset(make_system('stick_slip'))
        model = train(ds, VEL, TrainConfig(max_epochs=5000, neurons=50))
        assert model.fit.final_loss < 1e-2 * model.fit.history[0][1]
        assert abs(model.cc_b.raw(0.0)[0]) < 0.05

    @pytest.mark.slow
    def test_curves_do_not_depend_on_the_seed(self, vdp_dataset):
        first = train(vdp_dataset, POS, TrainConfig(seed=0))
        second = train(vdp_dataset, POS, TrainConfig(seed=1))
        lo, hi = vdp_dataset.domain('x')
        margin = 0.05 * (hi - lo)
        z = np.linspace(lo + margin, hi - margin, 200)
        for name in ('cc_a', 'cc_b'):
            gap = np.abs(getattr(first, name)(z) - getattr(second, name)(z))
            assert np.max(gap) < 0.05


class TestEdges:
    def test_lines_reproduce_a_linear_network(self):
        net = set_layers(mlp_init((1, 1, 1), 'relu', 0), [1.0, 2.0], [10.0, 0.5])
        edges = fit_edge_extrapolation(net, (-1.0, 1.0))
        np.testing.assert_allclose(edges.as_tuple(), (2.0, 20.5, 2.0, 20.5), atol=1e-9)

    def test_rejects_degenerate_domain(self):
        with pytest.raises(InvalidArgument):
            fit_edge_extrapolation(mlp_init((1, 2, 1)), (1.0, 1.0))

    def test_neural_curve_switches_to_lines_outside(self):
        net = mlp_init((1, 6, 1), 'tanh', 5)
        curve = NeuralCurve.from_net(net, 'x', (-1.0, 1.0))
        inside = np.linspace(-1.0, 1.0, 9)
        np.testing.assert_array_equal(curve(inside), curve.raw(inside))
        e = curve.edges
        assert curve(3.0) == pytest.approx(e.hi_slope * 3.0 + e.hi_intercept)
        assert curve(-2.0) == pytest.approx(e.lo_slope * -2.0 + e.lo_intercept)
        assert curve(3.0) != pytest.approx(curve.raw(3.0)[0])

    def test_edge_lines_meet_the_network_at_the_boundary(self):
        net = mlp_init((1, 6, 1), 'tanh', 5)
        curve = NeuralCurve.from_net(net, 'x', (0.0, 0.1))
        for edge, step in ((0.0, -1e-9), (0.1, 1e-9)):
            assert abs(curve(edge + step) - curve(edge)) < 1e-3

    def test_native_policy_keeps_the_network_outside(self):
        curve = NeuralCurve.from_net(mlp_init((1, 6, 1), 'tanh', 5), 'x', (-1.0, 1.0))
        native = curve.with_extrapolation(Extrapolation.NATIVE)
        z = np.array([-4.0, 0.3, 5.0])
        np.testing.assert_array_equal(native(z), curve.raw(z))
        assert curve.extrapolation is Extrapolation.LINEAR_EDGES
        assert native.edges == curve.edges


class TestExport:
    def test_round_trip_is_bit_identical(self, tmp_path, damped_dataset):
        model = train(damped_dataset, VEL, TrainConfig(max_epochs=5, seed=9, **TINY))
        path = export_model(model, tmp_path / 'model.txt')
        header = path.read_text().splitlines()[0]
        assert header.startswith('nncc v1 family=2 activation=tanh widths=1,10,1 ')
        assert 'seed=9' in header

        loaded = import_model(path)
        assert loaded.family is VEL
        for ours, theirs in ((model.cc_a, loaded.cc_a), (model.cc_b, loaded.cc_b)):
            np.testing.assert_array_equal(ours.net.flat_parameters(), theirs.net.flat_parameters())
            assert ours.domain == theirs.domain
            assert ours.edges == theirs.edges
        assert loaded.fit.final_loss == model.fit.final_loss
        assert export_model(loaded, tmp_path / 'again.txt').read_text() == path.read_text()

    def test_rejects_non_neural_models(self, tmp_path, vdp_system):
        model = IdentifiedModel(vdp_system.family, vdp_system.cc_a, vdp_system.cc_b)
        with pytest.raises(InvalidArgument):
            export_model(model, tmp_path / 'x.txt')

    def test_malformed_files(self, tmp_path, damped_dataset):
        bad = tmp_path / 'bad.txt'
        bad.write_text('hello\n1.0\n')
        with pytest.raises(InvalidData):
            import_model(bad)

        path = export_model(train(damped_dataset, POS, TrainConfig(max_epochs=1, **TINY)),
                            tmp_path / 'model.txt')
        truncated = tmp_path / 'truncated.txt'
        truncated.write_text('\n'.join(path.read_text().splitlines()[:-3]) + '\n')
        with pytest.raises(InvalidData, match='parameters'):
            import_model(truncated)

        with pytest.raises(InvalidData):
            import_model(tmp_path / 'missing.txt')
