"""NN-CC: one small feedforward network per characteristic curve.

Both networks are trained together with full-batch Adam on the forcing
residual loss, backpropagated by hand in numpy. Outside the training domain a
NeuralCurve follows straight lines fitted to the network near each edge.
"""

import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import erf, expit

from core_types import (
    CurveKind, CurveModel, Dataset, Extrapolation, IdentifiedModel, ModelFamily, require_valid,
)
from dataset_storage import format_float
from errors import InvalidArgument, InvalidData, TrainingFailure

logger = logging.getLogger("ccident.nn_cc")

FORMAT_TAG = 'nncc v1'


# ============================================================================
# Activations
# ============================================================================

@dataclass(frozen=True)
class Activation:
    name: str
    fn: Callable[[np.ndarray], np.ndarray]
    grad: Callable[[np.ndarray], np.ndarray]  # derivative at the pre-activation


LEAKY_SLOPE = 0.01
RRELU_EVAL_SLOPE = (1.0 / 8.0 + 1.0 / 3.0) / 2.0
SELU_SCALE = 1.0507009873554805
SELU_ALPHA = 1.6732632423543772
_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)


def _leaky(name: str, slope: float) -> Activation:
    return Activation(
        name,
        lambda z: np.where(z > 0, z, slope * z),
        lambda z: np.where(z > 0, 1.0, slope),
    )


def _silu_grad(z):
    s = expit(z)
    return s + z * s * (1.0 - s)


def _gelu_grad(z):
    return 0.5 * (1.0 + erf(z * _INV_SQRT2)) + z * _INV_SQRT2PI * np.exp(-0.5 * z * z)


def _selu(z):
    return SELU_SCALE * np.where(z > 0, z, SELU_ALPHA * np.expm1(np.minimum(z, 0.0)))


def _selu_grad(z):
    return SELU_SCALE * np.where(z > 0, 1.0, SELU_ALPHA * np.exp(np.minimum(z, 0.0)))


ACTIVATIONS: Dict[str, Activation] = {
    'relu': Activation('relu', lambda z: np.maximum(z, 0.0), lambda z: (z > 0).astype(float)),
    'leakyrelu': _leaky('leakyrelu', LEAKY_SLOPE),
    'tanh': Activation('tanh', np.tanh, lambda z: 1.0 - np.tanh(z) ** 2),
    'sigmoid': Activation('sigmoid', expit, lambda z: expit(z) * (1.0 - expit(z))),
    'silu': Activation('silu', lambda z: z * expit(z), _silu_grad),
    'sin': Activation('sin', np.sin, np.cos),
    'gelu': Activation('gelu', lambda z: 0.5 * z * (1.0 + erf(z * _INV_SQRT2)), _gelu_grad),
    'selu': Activation('selu', _selu, _selu_grad),
    'softplus': Activation('softplus', lambda z: np.logaddexp(0.0, z), expit),
    'rrelu': _leaky('rrelu', RRELU_EVAL_SLOPE),
}
ACTIVATION_NAMES = tuple(ACTIVATIONS)


def get_activation(name: str) -> Activation:
    key = name.strip().lower()
    if key not in ACTIVATIONS:
        raise InvalidArgument(f"unknown activation {name!r}; choose from {', '.join(ACTIVATION_NAMES)}")
    return ACTIVATIONS[key]


# ============================================================================
# Network
# ============================================================================

@dataclass
class MLP:
    """Scalar-in, scalar-out perceptron; weights[l] has shape (fan_in, fan_out)."""
    widths: Tuple[int, ...]
    activation: str
    weights: List[np.ndarray]
    biases: List[np.ndarray]

    def __post_init__(self):
        self.widths = tuple(int(w) for w in self.widths)
        self.activation = get_activation(self.activation).name
        _check_widths(self.widths)
        if len(self.weights) != len(self.widths) - 1 or len(self.biases) != len(self.weights):
            raise InvalidArgument("one weight matrix and one bias vector per layer")
        for l, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.shape != (self.widths[l], self.widths[l + 1]) or b.shape != (self.widths[l + 1],):
                raise InvalidArgument(f"layer {l} has shapes {W.shape}/{b.shape}, "
                                      f"expected ({self.widths[l]}, {self.widths[l + 1]})")

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    @property
    def param_count(self) -> int:
        return sum(W.size + b.size for W, b in zip(self.weights, self.biases))

    def parameters(self) -> List[np.ndarray]:
        """Layer-major parameter list [W0, b0, W1, b1, ...] (views, not copies)."""
        out = []
        for W, b in zip(self.weights, self.biases):
            out.extend((W, b))
        return out

    def flat_parameters(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.parameters()])

    def set_flat_parameters(self, flat: np.ndarray):
        flat = np.asarray(flat, dtype=float)
        if flat.size != self.param_count:
            raise InvalidArgument(f"expected {self.param_count} parameters, got {flat.size}")
        offset = 0
        for p in self.parameters():
            p[...] = flat[offset:offset + p.size].reshape(p.shape)
            offset += p.size

    def copy(self) -> 'MLP':
        return MLP(self.widths, self.activation, [W.copy() for W in self.weights],
                   [b.copy() for b in self.biases])


def _check_widths(widths: Sequence[int]):
    if len(widths) < 2:
        raise InvalidArgument("an MLP needs at least an input and an output width")
    if any(w <= 0 for w in widths):
        raise InvalidArgument(f"layer widths must be positive, got {list(widths)}")
    if widths[0] != 1 or widths[-1] != 1:
        raise InvalidArgument(f"characteristic-curve networks are scalar-to-scalar, got {list(widths)}")


def mlp_init(widths: Sequence[int], activation: str = 'relu',
             seed: Union[int, np.random.SeedSequence] = 0) -> MLP:
    """He-uniform weights in +-sqrt(6 / fan_in), zero biases; deterministic per seed."""
    widths = tuple(int(w) for w in widths)
    _check_widths(widths)
    get_activation(activation)
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        limit = math.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MLP(widths, activation.strip().lower(), weights, biases)


@dataclass
class ForwardCache:
    inputs: List[np.ndarray]       # layer inputs a_0 .. a_{L-1}
    pre: List[np.ndarray]          # hidden pre-activations


def mlp_forward_batch(net: MLP, zs: np.ndarray) -> Tuple[np.ndarray, ForwardCache]:
    """Evaluate on a 1-D batch; returns outputs and the cache needed by ``backward``."""
    act = ACTIVATIONS[net.activation]
    a = np.asarray(zs, dtype=float).reshape(-1, 1)
    cache = ForwardCache(inputs=[], pre=[])
    last = net.n_layers - 1
    for l, (W, b) in enumerate(zip(net.weights, net.biases)):
        cache.inputs.append(a)
        h = a @ W + b
        if l == last:
            return h[:, 0], cache
        cache.pre.append(h)
        a = act.fn(h)


def mlp_forward(net: MLP, z: float) -> float:
    return float(mlp_forward_batch(net, np.array([z], dtype=float))[0][0])


def backward(net: MLP, cache: ForwardCache, grad_out: np.ndarray) -> List[np.ndarray]:
    """Gradients w.r.t. ``net.parameters()`` given dL/d(output) per sample."""
    act = ACTIVATIONS[net.activation]
    delta = np.asarray(grad_out, dtype=float).reshape(-1, 1)
    grads: List[np.ndarray] = [None] * (2 * net.n_layers)
    for l in range(net.n_layers - 1, -1, -1):
        grads[2 * l] = cache.inputs[l].T @ delta
        grads[2 * l + 1] = delta.sum(axis=0)
        if l > 0:
            delta = (delta @ net.weights[l].T) * act.grad(cache.pre[l - 1])
    return grads


# ============================================================================
# Loss
# ============================================================================

def _curve_inputs(ds: Dataset, family: ModelFamily) -> np.ndarray:
    return ds.x if family is ModelFamily.POSITION_FRICTION else ds.xdot


def loss_and_grads(net_a: MLP, net_b: MLP, ds: Dataset, family: ModelFamily,
                   lambda_c: float = 0.01) -> Tuple[float, List[np.ndarray], List[np.ndarray]]:
    """
    Forcing residual loss and its gradients for both networks.

    L = mean((x'' + friction + F_b(x) - F_ext)^2), with friction F_a(x) x' for the
    position family and F_a(x') for the velocity family; the velocity family
    adds lambda_c * F_b(0)^2 to pin the gauge of the restoring curve.
    """
    family = ModelFamily.parse(family)
    n = ds.n
    pin = family is ModelFamily.VELOCITY_FRICTION and lambda_c > 0

    Fa, cache_a = mlp_forward_batch(net_a, _curve_inputs(ds, family))
    zb = np.append(ds.x, 0.0) if pin else ds.x
    Fb_all, cache_b = mlp_forward_batch(net_b, zb)
    Fb = Fb_all[:n]

    friction = Fa * ds.xdot if family is ModelFamily.POSITION_FRICTION else Fa
    r = ds.xddot + friction + Fb - ds.fext
    loss = float(np.mean(r * r))

    dr = 2.0 * r / n
    d_Fa = dr * ds.xdot if family is ModelFamily.POSITION_FRICTION else dr
    d_Fb = dr
    if pin:
        Fb0 = Fb_all[n]
        loss += lambda_c * Fb0 * Fb0
        d_Fb = np.append(dr, 2.0 * lambda_c * Fb0)

    return loss, backward(net_a, cache_a, d_Fa), backward(net_b, cache_b, d_Fb)


def forcing_loss(net_a: MLP, net_b: MLP, ds: Dataset, family: ModelFamily,
                 lambda_c: float = 0.01) -> float:
    family = ModelFamily.parse(family)
    Fa = mlp_forward_batch(net_a, _curve_inputs(ds, family))[0]
    Fb = mlp_forward_batch(net_b, ds.x)[0]
    friction = Fa * ds.xdot if family is ModelFamily.POSITION_FRICTION else Fa
    loss = float(np.mean((ds.xddot + friction + Fb - ds.fext) ** 2))
    if family is ModelFamily.VELOCITY_FRICTION and lambda_c > 0:
        loss += lambda_c * mlp_forward(net_b, 0.0) ** 2
    return loss


# ============================================================================
# Training
# ============================================================================

@dataclass(frozen=True)
class TrainConfig:
    neurons: int = 100
    layers: int = 2
    activation: str = 'relu'
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    max_epochs: int = 20000
    loss_stop: float = 1e-7
    lambda_c: float = 0.01
    seed: int = 0
    history_every: int = 100
    edge_fraction: float = 0.05
    edge_points: int = 21

    def __post_init__(self):
        if self.neurons < 1 or self.layers < 1:
            raise InvalidArgument(f"neurons and layers must be >= 1, got {self.neurons}, {self.layers}")
        if self.max_epochs < 1:
            raise InvalidArgument(f"max_epochs must be >= 1, got {self.max_epochs}")
        if not self.learning_rate > 0:
            raise InvalidArgument(f"learning_rate must be > 0, got {self.learning_rate}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise InvalidArgument("Adam betas must lie in [0, 1)")
        if self.lambda_c < 0 or self.loss_stop < 0:
            raise InvalidArgument("lambda_c and loss_stop must be >= 0")
        if not 0 < self.edge_fraction < 0.5 or self.edge_points < 2:
            raise InvalidArgument("edge_fraction must be in (0, 0.5) and edge_points >= 2")
        get_activation(self.activation)

    @property
    def widths(self) -> Tuple[int, ...]:
        return (1,) + (self.neurons,) * self.layers + (1,)


@dataclass
class AdamState:
    m: List[np.ndarray]
    v: List[np.ndarray]
    step: int = 0

    @classmethod
    def for_parameters(cls, params: Sequence[np.ndarray]) -> 'AdamState':
        return cls(m=[np.zeros_like(p) for p in params], v=[np.zeros_like(p) for p in params])


def adam_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray], state: AdamState,
              cfg: TrainConfig):
    """One in-place Adam update of ``params``."""
    state.step += 1
    bias1 = 1.0 - cfg.beta1 ** state.step
    bias2 = 1.0 - cfg.beta2 ** state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1.0 - cfg.beta2) * g * g
        p -= cfg.learning_rate * (m / bias1) / (np.sqrt(v / bias2) + cfg.eps)


@dataclass
class NNFit:
    """Training record attached to an NN-CC IdentifiedModel."""
    final_loss: float
    epochs: int
    seed: int
    history: List[Tuple[int, float]] = field(default_factory=list)
    wall_time: float = 0.0
    config: Optional[TrainConfig] = None


def train(ds: Dataset, family: ModelFamily, cfg: Optional[TrainConfig] = None) -> IdentifiedModel:
    """
    Train both curve networks jointly with full-batch Adam.

    Stops after cfg.max_epochs or once the loss reaches cfg.loss_stop.

    Raises:
        TrainingFailure: the loss became non-finite
    """
    cfg = cfg or TrainConfig()
    require_valid(ds)
    family = ModelFamily.parse(family)

    seq_a, seq_b = np.random.SeedSequence(cfg.seed).spawn(2)
    net_a = mlp_init(cfg.widths, cfg.activation, seq_a)
    net_b = mlp_init(cfg.widths, cfg.activation, seq_b)
    params = net_a.parameters() + net_b.parameters()
    state = AdamState.for_parameters(params)

    history: List[Tuple[int, float]] = []
    started = time.perf_counter()
    loss = math.inf
    epoch = 0
    stopped_early = False
    for epoch in range(1, cfg.max_epochs + 1):
        loss, grads_a, grads_b = loss_and_grads(net_a, net_b, ds, family, cfg.lambda_c)
        if not math.isfinite(loss):
            raise TrainingFailure(f"non-finite loss at epoch {epoch}", epoch=epoch)
        if epoch == 1 or epoch % cfg.history_every == 0:
            history.append((epoch, loss))
            logger.debug(f"epoch {epoch}: loss={loss:.6e}")
        if loss <= cfg.loss_stop:
            stopped_early = True
            break
        adam_step(params, grads_a + grads_b, state, cfg)

    if not stopped_early:
        loss = forcing_loss(net_a, net_b, ds, family, cfg.lambda_c)
        if not math.isfinite(loss):
            raise TrainingFailure(f"non-finite loss after epoch {epoch}", epoch=epoch)
    wall_time = time.perf_counter() - started
    logger.info(f"NN-CC trained {epoch} epochs in {wall_time:.1f}s, final loss {loss:.3e}")

    var_a, var_b = family.input_variables
    cc_a = NeuralCurve.from_net(net_a, var_a, ds.domain(var_a), cfg.edge_fraction, cfg.edge_points)
    cc_b = NeuralCurve.from_net(net_b, var_b, ds.domain(var_b), cfg.edge_fraction, cfg.edge_points)
    fit = NNFit(final_loss=loss, epochs=epoch, seed=cfg.seed, history=history,
                wall_time=wall_time, config=cfg)
    return IdentifiedModel(family=family, cc_a=cc_a, cc_b=cc_b, method='nn', fit=fit)


# ============================================================================
# Edge extrapolation
# ============================================================================

@dataclass(frozen=True)
class EdgeLines:
    """Straight lines continuing a curve below and above its domain."""
    lo_slope: float
    lo_intercept: float
    hi_slope: float
    hi_intercept: float

    def as_tuple(self) -> Tuple[float, float, float, float]:
        return (self.lo_slope, self.lo_intercept, self.hi_slope, self.hi_intercept)


def fit_edge_extrapolation(net: MLP, domain: Tuple[float, float], fraction: float = 0.05,
                           n_points: int = 21) -> EdgeLines:
    """Least-squares lines through the network on the outer ``fraction`` of each edge."""
    lo, hi = float(domain[0]), float(domain[1])
    if not (np.isfinite(lo) and np.isfinite(hi) and hi > lo):
        raise InvalidArgument(f"degenerate extrapolation domain [{lo}, {hi}]")
    width = fraction * (hi - lo)
    lines = []
    for start, stop in ((lo, lo + width), (hi - width, hi)):
        zs = np.linspace(start, stop, n_points)
        slope, intercept = np.polyfit(zs, mlp_forward_batch(net, zs)[0], 1)
        lines.extend((float(slope), float(intercept)))
    return EdgeLines(*lines)


class NeuralCurve(CurveModel):
    """Trained network inside its domain, edge lines outside."""

    kind = CurveKind.NEURAL

    def __init__(self, net: MLP, variable: str, domain: Tuple[float, float], edges: EdgeLines,
                 extrapolation: Extrapolation = Extrapolation.LINEAR_EDGES):
        super().__init__(variable, domain)
        self.net = net
        self.edges = edges
        self.extrapolation = Extrapolation(extrapolation)

    @classmethod
    def from_net(cls, net: MLP, variable: str, domain: Tuple[float, float],
                 fraction: float = 0.05, n_points: int = 21) -> 'NeuralCurve':
        return cls(net, variable, domain, fit_edge_extrapolation(net, domain, fraction, n_points))

    def with_extrapolation(self, policy: Extrapolation) -> 'NeuralCurve':
        return NeuralCurve(self.net, self.variable, self.domain, self.edges, policy)

    def raw(self, z) -> np.ndarray:
        """Network output without extrapolation."""
        z = np.atleast_1d(np.asarray(z, dtype=float))
        return self.with_extrapolation(Extrapolation.NATIVE).evaluate(z.ravel()).reshape(z.shape)

    def evaluate(self, z: np.ndarray) -> np.ndarray:
        lo, hi = self.domain
        out = mlp_forward_batch(self.net, z)[0]
        if self.extrapolation is Extrapolation.NATIVE:
            return out
        below, above = z < lo, z > hi
        if below.any():
            out[below] = self.edges.lo_slope * z[below] + self.edges.lo_intercept
        if above.any():
            out[above] = self.edges.hi_slope * z[above] + self.edges.hi_intercept
        return out


# ============================================================================
# Export / import
# ============================================================================

def _floats(values: Sequence[float]) -> str:
    return ','.join(format_float(v) for v in values)


def export_model(model: IdentifiedModel, path: Path) -> Path:
    """
    Write an NN-CC model as text: one header line, then one parameter per line.

    Parameters follow net_a then net_b, each layer-major with W row-major
    before b, printed with 17 significant digits.
    """
    cc_a, cc_b = model.cc_a, model.cc_b
    if not (isinstance(cc_a, NeuralCurve) and isinstance(cc_b, NeuralCurve)):
        raise InvalidArgument("export_model needs an NN-CC model")
    if cc_a.net.widths != cc_b.net.widths or cc_a.net.activation != cc_b.net.activation:
        raise InvalidArgument("both curve networks must share widths and activation")
    fit = model.fit if isinstance(model.fit, NNFit) else None

    header = [
        FORMAT_TAG,
        f"family={model.family.code}",
        f"activation={cc_a.net.activation}",
        f"widths={','.join(str(w) for w in cc_a.net.widths)}",
        f"domain_a={_floats(cc_a.domain)}",
        f"domain_b={_floats(cc_b.domain)}",
        f"edge_lines={_floats(cc_a.edges.as_tuple() + cc_b.edges.as_tuple())}",
    ]
    if fit is not None:
        header += [f"seed={fit.seed}", f"final_loss={format_float(fit.final_loss)}", f"epochs={fit.epochs}"]

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w') as f:
        f.write(' '.join(header) + '\n')
        for value in np.concatenate([cc_a.net.flat_parameters(), cc_b.net.flat_parameters()]):
            f.write(format_float(value) + '\n')
    return path


def _parse_header(line: str) -> Dict[str, str]:
    if not line.startswith(FORMAT_TAG + ' '):
        raise InvalidData(f"not an NN-CC model file (expected header starting with {FORMAT_TAG!r})")
    fields = {}
    for token in line[len(FORMAT_TAG):].split():
        key, sep, value = token.partition('=')
        if not sep:
            raise InvalidData(f"malformed header token {token!r}")
        fields[key] = value
    for key in ('family', 'activation', 'widths', 'domain_a', 'domain_b', 'edge_lines'):
        if key not in fields:
            raise InvalidData(f"model header is missing {key}")
    return fields


def _split_floats(text: str, count: int, key: str) -> List[float]:
    try:
        values = [float(v) for v in text.split(',')]
    except ValueError:
        raise InvalidData(f"header field {key} is not numeric: {text!r}")
    if len(values) != count:
        raise InvalidData(f"header field {key} needs {count} values, got {len(values)}")
    return values


def import_model(path: Path) -> IdentifiedModel:
    """Read a model written by ``export_model``; the round trip is bit-identical."""
    path = Path(path)
    if not path.exists():
        raise InvalidData(f"model file not found: {path}")
    with open(path, 'r') as f:
        lines = f.read().splitlines()
    if not lines:
        raise InvalidData(f"{path} is empty")

    fields = _parse_header(lines[0])
    try:
        family = ModelFamily.parse(fields['family'])
        widths = tuple(int(w) for w in fields['widths'].split(','))
        net_a = mlp_init(widths, fields['activation'], 0)
        net_b = mlp_init(widths, fields['activation'], 0)
    except (InvalidArgument, ValueError) as e:
        raise InvalidData(f"{path}: {e}")

    try:
        values = np.array([float(v) for v in lines[1:] if v.strip()], dtype=float)
    except ValueError as e:
        raise InvalidData(f"{path}: {e}")
    n = net_a.param_count
    if values.size != 2 * n:
        raise InvalidData(f"{path}: expected {2 * n} parameters, found {values.size}")
    net_a.set_flat_parameters(values[:n])
    net_b.set_flat_parameters(values[n:])

    edges = _split_floats(fields['edge_lines'], 8, 'edge_lines')
    var_a, var_b = family.input_variables
    cc_a = NeuralCurve(net_a, var_a, tuple(_split_floats(fields['domain_a'], 2, 'domain_a')),
                       EdgeLines(*edges[:4]))
    cc_b = NeuralCurve(net_b, var_b, tuple(_split_floats(fields['domain_b'], 2, 'domain_b')),
                       EdgeLines(*edges[4:]))

    fit = None
    if 'final_loss' in fields:
        fit = NNFit(final_loss=float(fields['final_loss']), epochs=int(fields.get('epochs', 0)),
                    seed=int(fields.get('seed', 0)))
    return IdentifiedModel(family=family, cc_a=cc_a, cc_b=cc_b, method='nn', fit=fit)
