"""Benchmark zoo: analytic characteristic curves, reference parameters and samplers.

Curves are built from module-level functions bound with functools.partial so
that a TrueSystem can be pickled into sweep worker processes.
"""

from dataclasses import dataclass
from functools import partial
from types import MappingProxyType
from typing import Callable, Dict, List, Mapping, Optional, Tuple

import numpy as np

from core_types import AnalyticCurve, ForcingForm, ForcingSpec, ModelFamily, sign0
from errors import InvalidArgument

POS = ModelFamily.POSITION_FRICTION
VEL = ModelFamily.VELOCITY_FRICTION


# ============================================================================
# Closed-form curves
# ============================================================================

def _constant(z, value):
    return np.full_like(z, value, dtype=float)


def _linear(z, k):
    return k * z


def _vdp_damping(z, mu):
    return mu * (z ** 2 - 1.0)


def _cubic_spring(z, k, beta):
    return k * z + beta * z ** 3


def _impact_spring(z, k, x_lim):
    return k * z + k * np.maximum(z - x_lim, 0.0)


def _fhn_damping(z, eps, b):
    return z ** 2 + eps * b - 1.0


def _fhn_restoring(z, eps, a, b):
    return eps * (a + (1.0 - b) * z + b * z ** 3 / 3.0)


def _coulomb(z, c, F_f):
    return c * z + F_f * sign0(z)


def _dieterich_ruina(z, c, F_f, a, b, d, V_f, eps):
    speed = np.abs(z) + eps
    level = F_f + a * np.log(speed / V_f) + b * np.log(d + V_f / speed)
    return c * z + level * sign0(z)


def _stribeck(z, c, F_f, a, b, V_f):
    level = F_f + a * np.exp(-(np.abs(z) / V_f) ** b)
    return c * z + level * sign0(z)


def _tanh_power(z, c, F_f, alpha, gamma):
    # odd extension of z**gamma
    return c * z + F_f * np.tanh(alpha * sign0(z) * np.abs(z) ** gamma)


def _backlash(z, k, d):
    kz = k * z
    return np.where(kz > d, kz - d, np.where(kz < -d, kz + d, 0.0))


def _piecewise1(z):
    return np.where(z >= 1.0, z ** 2, np.where(z >= 0.5, 1.0, (z - 1.0) ** 3))


def _piecewise2(z):
    return np.select(
        [z >= 1.5, z >= 1.0, z >= 0.5, z >= -0.3],
        [0.5 * z, z ** 2, np.ones_like(z), (z - 1.0) ** 3],
        default=2.0 * z - 3.0,
    )


# ============================================================================
# Registry
# ============================================================================

@dataclass(frozen=True)
class SystemDef:
    """Static description of one registry entry."""
    family: ModelFamily
    defaults: Mapping[str, float]
    curves: Callable[[Mapping[str, float]], Tuple[Callable, Callable]]
    amplitude: float
    omega: float
    init: Tuple[float, float]
    discontinuous: bool = False
    forcing_form: ForcingForm = ForcingForm.HARMONIC_COS


APPENDIX_POS_INIT = (0.5, 0.5)
APPENDIX_VEL_INIT = (0.1, 0.1)
COULOMB = {'c': 0.1, 'F_f': 0.5}

REGISTRY: Dict[str, SystemDef] = {
    'van_der_pol': SystemDef(
        POS, {'mu': 0.501, 'k': 1.22},
        lambda p: (partial(_vdp_damping, mu=p['mu']), partial(_linear, k=p['k'])),
        amplitude=0.834, omega=1.512, init=(-0.353, -0.408)),
    'stick_slip': SystemDef(
        VEL, {'c': 0.386, 'mu_n': 0.801, 'k': 1.274},
        lambda p: (partial(_coulomb, c=p['c'], F_f=p['mu_n']), partial(_linear, k=p['k'])),
        amplitude=2.0, omega=0.363, init=(-0.076, 0.146), discontinuous=True),
    'duffing': SystemDef(
        POS, {'delta': 0.3, 'alpha': -1.0, 'beta': 1.0},
        lambda p: (partial(_constant, value=p['delta']),
                   partial(_cubic_spring, k=p['alpha'], beta=p['beta'])),
        amplitude=0.5, omega=1.2, init=APPENDIX_POS_INIT),
    'impact': SystemDef(
        POS, {'c': 0.1, 'k': 0.5, 'x_lim': 0.5},
        lambda p: (partial(_constant, value=p['c']),
                   partial(_impact_spring, k=p['k'], x_lim=p['x_lim'])),
        amplitude=0.5, omega=1.2, init=APPENDIX_POS_INIT),
    'fitzhugh_nagumo': SystemDef(
        POS, {'a': 0.7, 'b': 0.8, 'eps': 0.08},
        lambda p: (partial(_fhn_damping, eps=p['eps'], b=p['b']),
                   partial(_fhn_restoring, eps=p['eps'], a=p['a'], b=p['b'])),
        amplitude=2.0, omega=1.2, init=APPENDIX_POS_INIT,
        forcing_form=ForcingForm.FHN_COMPOSITE),
    'dieterich_ruina': SystemDef(
        VEL, {'c': 0.1, 'k': 1.0, 'F_f': 0.5, 'a': 0.07, 'b': 0.09, 'd': 0.022,
              'V_f': 3e-3, 'eps': 1e-6},
        lambda p: (partial(_dieterich_ruina, c=p['c'], F_f=p['F_f'], a=p['a'], b=p['b'],
                           d=p['d'], V_f=p['V_f'], eps=p['eps']),
                   partial(_linear, k=p['k'])),
        amplitude=2.0, omega=0.3, init=APPENDIX_VEL_INIT, discontinuous=True),
    'stribeck': SystemDef(
        VEL, {'c': 0.1, 'k': 1.0, 'F_f': 0.5, 'a': 0.07, 'b': 2.0, 'V_f': 0.1, 'beta': 0.3},
        lambda p: (partial(_stribeck, c=p['c'], F_f=p['F_f'], a=p['a'], b=p['b'], V_f=p['V_f']),
                   partial(_cubic_spring, k=p['k'], beta=p['beta'])),
        amplitude=2.0, omega=0.3, init=APPENDIX_VEL_INIT, discontinuous=True),
    'coulomb_tanh_power': SystemDef(
        VEL, {'c': 0.1, 'k': 1.0, 'F_f': 0.5, 'alpha': 500.0, 'beta': 0.3, 'gamma': 3.0},
        lambda p: (partial(_tanh_power, c=p['c'], F_f=p['F_f'], alpha=p['alpha'], gamma=p['gamma']),
                   partial(_cubic_spring, k=p['k'], beta=p['beta'])),
        amplitude=2.0, omega=0.3, init=APPENDIX_VEL_INIT, discontinuous=True),
    'backlash': SystemDef(
        VEL, {**COULOMB, 'k': 2.0, 'd': 0.5},
        lambda p: (partial(_coulomb, c=p['c'], F_f=p['F_f']), partial(_backlash, k=p['k'], d=p['d'])),
        amplitude=2.0, omega=0.3, init=APPENDIX_VEL_INIT, discontinuous=True),
    'piecewise1': SystemDef(
        VEL, dict(COULOMB),
        lambda p: (partial(_coulomb, c=p['c'], F_f=p['F_f']), _piecewise1),
        amplitude=2.0, omega=0.3, init=APPENDIX_VEL_INIT, discontinuous=True),
    'piecewise2': SystemDef(
        VEL, dict(COULOMB),
        lambda p: (partial(_coulomb, c=p['c'], F_f=p['F_f']), _piecewise2),
        amplitude=2.0, omega=0.3, init=APPENDIX_VEL_INIT, discontinuous=True),
}

SYSTEM_NAMES = tuple(REGISTRY)


@dataclass(frozen=True, eq=False)
class TrueSystem:
    """A benchmark with analytic curves, used for data generation and ground truth."""
    name: str
    family: ModelFamily
    cc_a: AnalyticCurve
    cc_b: AnalyticCurve
    params: Mapping[str, float]
    default_forcing: ForcingSpec
    default_init: Tuple[float, float]
    discontinuous: bool = False

    def forcing(self, amplitude: float, omega: float) -> ForcingSpec:
        """Forcing of this system's form with a new drive amplitude/frequency."""
        return self.default_forcing.with_drive(amplitude, omega)

    def __getstate__(self):
        return {'name': self.name, 'params': dict(self.params)}

    def __setstate__(self, state):
        rebuilt = make_system(state['name'], state['params'])
        for name in ('name', 'family', 'cc_a', 'cc_b', 'params', 'default_forcing',
                     'default_init', 'discontinuous'):
            object.__setattr__(self, name, getattr(rebuilt, name))


def _lookup(name: str) -> SystemDef:
    if name not in REGISTRY:
        raise InvalidArgument(f"unknown system {name!r}; registry: {', '.join(SYSTEM_NAMES)}")
    return REGISTRY[name]


def default_params(name: str) -> Dict[str, float]:
    return dict(_lookup(name).defaults)


def make_system(name: str, params: Optional[Mapping[str, float]] = None) -> TrueSystem:
    """
    Build a registry system.

    Args:
        name: registry name (see SYSTEM_NAMES)
        params: complete parameter record; None uses the published defaults

    Raises:
        InvalidArgument: unknown name, missing or unknown parameter
    """
    spec = _lookup(name)
    if params is None:
        params = spec.defaults
    missing = [key for key in spec.defaults if key not in params]
    if missing:
        raise InvalidArgument(f"system {name!r} is missing parameter(s): {', '.join(missing)}")
    unknown = [key for key in params if key not in spec.defaults]
    if unknown:
        raise InvalidArgument(
            f"system {name!r} has no parameter(s) {', '.join(unknown)}; "
            f"expected {', '.join(spec.defaults)}")
    values = {key: float(params[key]) for key in spec.defaults}

    fn_a, fn_b = spec.curves(values)
    var_a, var_b = spec.family.input_variables
    name_a, name_b = spec.family.curve_names
    # f4 of piecewise/backlash systems may jump; the velocity curve carries the sign
    cc_a = AnalyticCurve(fn_a, var_a, discontinuous=spec.discontinuous, name=name_a)
    cc_b = AnalyticCurve(fn_b, var_b, discontinuous=name in ('piecewise1', 'piecewise2'), name=name_b)

    coupling = values['eps'] * values['b'] if spec.forcing_form is ForcingForm.FHN_COMPOSITE else 0.0
    forcing = ForcingSpec(spec.amplitude, spec.omega, spec.forcing_form, coupling)
    return TrueSystem(name=name, family=spec.family, cc_a=cc_a, cc_b=cc_b,
                      params=MappingProxyType(values), default_forcing=forcing,
                      default_init=spec.init, discontinuous=spec.discontinuous)


# ============================================================================
# Seeds and sampling protocols
# ============================================================================

def derive_seed(master: int, index: int) -> int:
    """Deterministic child seed k of a master seed."""
    state = np.random.SeedSequence([int(master), int(index)]).generate_state(1, np.uint64)
    return int(state[0] >> np.uint64(1))


Interval = Tuple[float, float]
DRIVE_KEYS = ('A', 'omega', 'x0', 'v0')


@dataclass(frozen=True)
class SamplingProtocol:
    """Uniform intervals for training draws and validation re-draws.

    ``train`` covers physical parameters plus the drive keys (A, omega, x0, v0);
    ``validate`` covers only drive keys. Physical parameters absent from
    ``train`` stay at their defaults.
    """
    train: Mapping[str, Interval]
    validate: Mapping[str, Interval]
    n_train: int = 30
    n_val_per_train: int = 30
    rng_seed: int = 0

    def __post_init__(self):
        for label, intervals in (('train', self.train), ('validate', self.validate)):
            for key, (lo, hi) in intervals.items():
                if not lo <= hi:
                    raise InvalidArgument(f"protocol {label} interval for {key} is empty: [{lo}, {hi}]")
        for key in DRIVE_KEYS:
            if key not in self.validate:
                raise InvalidArgument(f"protocol validate section needs interval for {key}")
        extra = [key for key in self.validate if key not in DRIVE_KEYS]
        if extra:
            raise InvalidArgument(f"validation may only resample {DRIVE_KEYS}, got {extra}")
        if self.n_train < 0 or self.n_val_per_train < 0:
            raise InvalidArgument("n_train and n_val_per_train must be >= 0")


@dataclass(frozen=True)
class TrainingConfig:
    """One training draw: physical parameters, forcing, init and its own seed."""
    index: int
    params: Dict[str, float]
    forcing: ForcingSpec
    init: Tuple[float, float]
    seed: int


@dataclass(frozen=True)
class ValidationConfig:
    index: int
    forcing: ForcingSpec
    init: Tuple[float, float]
    seed: int


def paper_protocol(name: str, n_train: int = 30, n_val_per_train: int = 30, seed: int = 0) -> SamplingProtocol:
    """Published sweep protocols (van der Pol, stick-slip) or a generic one."""
    drive = {'omega': (0.0, 5.0), 'x0': (-0.5, 0.5), 'v0': (-0.5, 0.5)}
    if name == 'van_der_pol':
        train = {'mu': (0.5, 10.0), 'k': (0.5, 1.5), 'A': (0.0, 2.0), **drive}
        validate = {'A': (0.0, 2.0), **drive}
    elif name == 'stick_slip':
        train = {'mu_n': (0.5, 1.0), 'k': (0.5, 1.5), 'c': (0.1, 0.5), 'A': (2.0, 2.0), **drive}
        validate = {'A': (1.0, 1.5), **drive}
    else:
        spec = _lookup(name)
        x0, v0 = spec.init
        train = {
            'A': (0.5 * spec.amplitude, spec.amplitude),
            'omega': (0.5 * spec.omega, 1.5 * spec.omega),
            'x0': (x0 - 0.1, x0 + 0.1),
            'v0': (v0 - 0.1, v0 + 0.1),
        }
        validate = dict(train)
    return SamplingProtocol(train=train, validate=validate, n_train=n_train,
                            n_val_per_train=n_val_per_train, rng_seed=seed)


def _draw(rng: np.random.Generator, intervals: Mapping[str, Interval]) -> Dict[str, float]:
    return {key: float(rng.uniform(lo, hi)) for key, (lo, hi) in intervals.items()}


def sample_training_configs(protocol: SamplingProtocol, system: TrueSystem) -> List[TrainingConfig]:
    """n_train independent draws; identical for identical protocol seeds."""
    configs = []
    for k in range(protocol.n_train):
        seed = derive_seed(protocol.rng_seed, k)
        values = _draw(np.random.default_rng(seed), protocol.train)
        params = dict(system.params)
        for key in params:
            if key in values:
                params[key] = values[key]
        unknown = [key for key in values if key not in params and key not in DRIVE_KEYS]
        if unknown:
            raise InvalidArgument(f"protocol samples unknown parameter(s) {unknown} for {system.name}")
        forcing = make_system(system.name, params).forcing(
            values.get('A', system.default_forcing.amplitude),
            values.get('omega', system.default_forcing.omega))
        init = (values.get('x0', system.default_init[0]), values.get('v0', system.default_init[1]))
        configs.append(TrainingConfig(index=k, params=params, forcing=forcing,
                                      init=init, seed=seed))
    return configs


def sample_validation_configs(protocol: SamplingProtocol, training: TrainingConfig) -> List[ValidationConfig]:
    """Re-draw forcing and init only; physical parameters stay those of ``training``."""
    configs = []
    for j in range(protocol.n_val_per_train):
        seed = derive_seed(training.seed, j)
        values = _draw(np.random.default_rng(seed), protocol.validate)
        forcing = training.forcing.with_drive(values['A'], values['omega'])
        configs.append(ValidationConfig(index=j, forcing=forcing,
                                        init=(values['x0'], values['v0']), seed=seed))
    return configs
