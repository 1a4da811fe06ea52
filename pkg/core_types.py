"""Domain vocabulary: model families, datasets, curve models and forcing.

Every identification back-end, the integrator and the harness speak in terms of
the types defined here. Arrays stored on a Dataset are copied and frozen on
construction so a validated dataset can be handed to concurrent fits.
"""

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Callable, List, Optional, Tuple, Union

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.ndimage import uniform_filter1d

from errors import InvalidArgument, InvalidData

ArrayLike = Union[float, np.ndarray]

SERIES = ('t', 'x', 'xdot', 'xddot', 'fext')
UNIFORM_STEP_RTOL = 1e-8


class ModelFamily(str, Enum):
    """The two second-order model structures.

    position: x'' + f1(x) x' + f2(x) = F_ext(t)
    velocity: x'' + f3(x') + f4(x) = F_ext(t)
    """
    POSITION_FRICTION = "position"
    VELOCITY_FRICTION = "velocity"

    @property
    def code(self) -> int:
        return 1 if self is ModelFamily.POSITION_FRICTION else 2

    @property
    def curve_names(self) -> Tuple[str, str]:
        return ('f1', 'f2') if self is ModelFamily.POSITION_FRICTION else ('f3', 'f4')

    @property
    def input_variables(self) -> Tuple[str, str]:
        """Input variable of (cc_a, cc_b)."""
        return ('x', 'x') if self is ModelFamily.POSITION_FRICTION else ('xdot', 'x')

    @classmethod
    def parse(cls, value: Union[str, int, 'ModelFamily']) -> 'ModelFamily':
        if isinstance(value, ModelFamily):
            return value
        text = str(value).strip().lower()
        aliases = {
            'position': cls.POSITION_FRICTION, '1': cls.POSITION_FRICTION,
            'positionfriction': cls.POSITION_FRICTION,
            'velocity': cls.VELOCITY_FRICTION, '2': cls.VELOCITY_FRICTION,
            'velocityfriction': cls.VELOCITY_FRICTION,
        }
        if text not in aliases:
            raise InvalidArgument(f"unknown model family {value!r} (use position or velocity)")
        return aliases[text]


class CurveKind(str, Enum):
    POLYNOMIAL = "polynomial"
    SPARSE_POLYNOMIAL = "sparse_polynomial"
    NEURAL = "neural"
    ANALYTIC = "analytic"


class Extrapolation(str, Enum):
    NATIVE = "native"
    LINEAR_EDGES = "linear_edges"


class CurveModel:
    """A scalar characteristic curve z -> f(z).

    Subclasses implement ``evaluate`` on 1-D float arrays; ``__call__`` accepts
    scalars or arrays and keeps the input shape.
    """

    kind: CurveKind = CurveKind.ANALYTIC
    extrapolation: Extrapolation = Extrapolation.NATIVE

    def __init__(self, variable: str, domain: Tuple[float, float] = (-np.inf, np.inf),
                 discontinuous: bool = False):
        if variable not in ('x', 'xdot'):
            raise InvalidArgument(f"curve input variable must be 'x' or 'xdot', got {variable!r}")
        self.variable = variable
        self.domain = (float(domain[0]), float(domain[1]))
        self.discontinuous = discontinuous

    def evaluate(self, z: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, z: ArrayLike) -> ArrayLike:
        arr = np.asarray(z, dtype=float)
        out = self.evaluate(np.atleast_1d(arr))
        if arr.ndim == 0:
            return float(out[0])
        return out.reshape(arr.shape)

    def __repr__(self):
        return f"{type(self).__name__}(variable={self.variable!r}, domain={self.domain})"


class AnalyticCurve(CurveModel):
    """Closed-form curve backed by a vectorised function of z."""

    kind = CurveKind.ANALYTIC

    def __init__(self, fn: Callable[[np.ndarray], np.ndarray], variable: str,
                 discontinuous: bool = False, name: str = ''):
        super().__init__(variable, discontinuous=discontinuous)
        self.fn = fn
        self.name = name

    def evaluate(self, z: np.ndarray) -> np.ndarray:
        return np.asarray(self.fn(z), dtype=float) * np.ones_like(z)


def sign0(z: np.ndarray) -> np.ndarray:
    """sign with sign(0) = 0."""
    return np.sign(z)


def check_curve_inputs(family: ModelFamily, cc_a: CurveModel, cc_b: CurveModel):
    """Raise InvalidArgument when the curves do not take the family's inputs."""
    expected = family.input_variables
    got = (cc_a.variable, cc_b.variable)
    if got != expected:
        raise InvalidArgument(
            f"{family.value} family expects curve inputs {expected}, got {got}"
        )


def ode_terms(family: ModelFamily, cc_a: CurveModel, cc_b: CurveModel,
              x: ArrayLike, v: ArrayLike) -> Tuple[ArrayLike, ArrayLike]:
    """Return (friction, restoring) for the family at state (x, v)."""
    if family is ModelFamily.POSITION_FRICTION:
        return cc_a(x) * v, cc_b(x)
    return cc_a(v), cc_b(x)


@dataclass(frozen=True)
class IdentifiedModel:
    """A model family plus its two identified curves; directly integrable."""
    family: ModelFamily
    cc_a: CurveModel
    cc_b: CurveModel
    method: str = ''
    fit: Any = None  # back-end specific fit record

    def __post_init__(self):
        check_curve_inputs(self.family, self.cc_a, self.cc_b)

    def with_curves(self, cc_a: CurveModel, cc_b: CurveModel, method: Optional[str] = None) -> 'IdentifiedModel':
        return replace(self, cc_a=cc_a, cc_b=cc_b, method=method or self.method)


class ForcingForm(str, Enum):
    HARMONIC_COS = "harmonic_cos"
    FHN_COMPOSITE = "fhn_composite"
    ZERO = "zero"


@dataclass(frozen=True)
class ForcingSpec:
    """External forcing F_ext(t).

    For FHN_COMPOSITE the stimulus is I(t) = A cos(omega t) and the forcing of the
    second-order form is -coupling * I(t) - I'(t), with coupling = eps * b.
    """
    amplitude: float = 0.0
    omega: float = 0.0
    form: ForcingForm = ForcingForm.HARMONIC_COS
    coupling: float = 0.0

    def __call__(self, t: ArrayLike) -> ArrayLike:
        phase = self.omega * np.asarray(t, dtype=float)
        if self.form is ForcingForm.ZERO:
            out = np.zeros_like(phase)
        elif self.form is ForcingForm.HARMONIC_COS:
            out = self.amplitude * np.cos(phase)
        else:
            out = (-self.coupling * self.amplitude * np.cos(phase)
                   + self.amplitude * self.omega * np.sin(phase))
        return float(out) if np.ndim(out) == 0 else out

    def with_drive(self, amplitude: float, omega: float) -> 'ForcingSpec':
        return replace(self, amplitude=float(amplitude), omega=float(omega))

    @classmethod
    def zero(cls) -> 'ForcingSpec':
        return cls(form=ForcingForm.ZERO)


def _frozen(values) -> np.ndarray:
    arr = np.array(values, dtype=float, copy=True).reshape(-1)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Dataset:
    """Uniformly sampled trajectory {t, x, x', x'', F_ext}."""
    t: np.ndarray
    x: np.ndarray
    xdot: np.ndarray
    xddot: np.ndarray
    fext: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        for name in SERIES:
            object.__setattr__(self, name, _frozen(getattr(self, name)))

    @property
    def n(self) -> int:
        return len(self.t)

    @property
    def h(self) -> float:
        return (self.t[-1] - self.t[0]) / (self.n - 1)

    def columns(self) -> List[np.ndarray]:
        return [getattr(self, name) for name in SERIES]

    def domain(self, variable: str) -> Tuple[float, float]:
        values = self.x if variable == 'x' else self.xdot
        return float(np.min(values)), float(np.max(values))


def validate_dataset(ds: Dataset) -> List[str]:
    """Return every violated Dataset invariant; empty list when valid."""
    violations = []
    lengths = {name: len(getattr(ds, name)) for name in SERIES}
    if len(set(lengths.values())) > 1:
        detail = ', '.join(f"{k}={v}" for k, v in lengths.items())
        violations.append(f"length mismatch: {detail}")
    if lengths['t'] < 2:
        violations.append(f"t too short: N_data={lengths['t']} < 2")

    for name in SERIES:
        bad = np.flatnonzero(~np.isfinite(getattr(ds, name)))
        violations.extend(f"{name} non-finite @ {k}" for k in bad)

    t = ds.t
    if len(t) >= 2 and np.all(np.isfinite(t)):
        steps = np.diff(t)
        not_increasing = np.flatnonzero(~(steps > 0))
        violations.extend(f"t not strictly increasing @ {k + 1}" for k in not_increasing)
        if len(not_increasing) == 0:
            h = (t[-1] - t[0]) / (len(t) - 1)
            off_grid = np.flatnonzero(np.abs(steps - h) > UNIFORM_STEP_RTOL * abs(h))
            violations.extend(f"t non-uniform step @ {k + 1}" for k in off_grid)
    return violations


def require_valid(ds: Dataset):
    """Raise InvalidData listing the first violations of an invalid dataset."""
    violations = validate_dataset(ds)
    if violations:
        shown = '; '.join(violations[:5])
        more = f" (+{len(violations) - 5} more)" if len(violations) > 5 else ''
        raise InvalidData(f"invalid dataset: {shown}{more}")


def resample_uniform(t_raw: np.ndarray, y_raw: np.ndarray, n: int) -> Tuple[np.ndarray, np.ndarray]:
    """Cubic-interpolate y_raw onto n uniform points spanning [t_raw[0], t_raw[-1]].

    Returns (t_uniform, y_uniform). Endpoint values are reproduced exactly.
    """
    if n < 2:
        raise InvalidArgument(f"resample_uniform needs n >= 2, got {n}")
    t_raw = np.asarray(t_raw, dtype=float)
    y_raw = np.asarray(y_raw, dtype=float)
    if len(t_raw) < 2 or len(t_raw) != len(y_raw):
        raise InvalidArgument("t_raw and y_raw must have the same length >= 2")
    if not np.all(np.diff(t_raw) > 0):
        raise InvalidArgument("t_raw must be strictly increasing")

    grid = np.linspace(t_raw[0], t_raw[-1], n)
    values = CubicSpline(t_raw, y_raw)(grid)
    values[0] = y_raw[0]
    values[-1] = y_raw[-1]
    return grid, values


# 5-point stencils, coefficients over 12 h (first) and 12 h^2 (second)
_D1_CENTRAL = np.array([1.0, -8.0, 0.0, 8.0, -1.0])
_D1_EDGE0 = np.array([-25.0, 48.0, -36.0, 16.0, -3.0])
_D1_EDGE1 = np.array([-3.0, -10.0, 18.0, -6.0, 1.0])
_D2_CENTRAL = np.array([-1.0, 16.0, -30.0, 16.0, -1.0])
_D2_EDGE0 = np.array([35.0, -104.0, 114.0, -56.0, 11.0])
_D2_EDGE1 = np.array([11.0, -20.0, 6.0, 4.0, -1.0])


def estimate_derivatives(t: np.ndarray, x: np.ndarray, smoothing: int = 1) -> Tuple[np.ndarray, np.ndarray]:
    """Finite-difference (x', x'') on a uniform grid.

    Fourth-order central stencils in the interior, one-sided five-point stencils
    at the two first and last samples. ``smoothing`` > 1 applies a moving
    average of that window before differencing.
    """
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    if len(x) < 5 or len(t) != len(x):
        raise InvalidArgument("estimate_derivatives needs at least 5 samples")
    if smoothing < 1:
        raise InvalidArgument(f"smoothing window must be >= 1, got {smoothing}")
    h = (t[-1] - t[0]) / (len(t) - 1)
    if h <= 0 or np.any(np.abs(np.diff(t) - h) > UNIFORM_STEP_RTOL * abs(h)):
        raise InvalidArgument("estimate_derivatives needs a uniform, increasing grid")

    if smoothing > 1:
        x = uniform_filter1d(x, size=smoothing, mode='nearest')

    n = len(x)
    # windows[k] = x[k .. k+4]
    windows = np.lib.stride_tricks.sliding_window_view(x, 5)
    d1 = np.empty(n)
    d2 = np.empty(n)
    d1[2:-2] = windows @ _D1_CENTRAL
    d2[2:-2] = windows @ _D2_CENTRAL

    head, tail = x[:5], x[-5:][::-1]
    d1[0], d1[1] = head @ _D1_EDGE0, head @ _D1_EDGE1
    d1[-1], d1[-2] = -(tail @ _D1_EDGE0), -(tail @ _D1_EDGE1)
    d2[0], d2[1] = head @ _D2_EDGE0, head @ _D2_EDGE1
    d2[-1], d2[-2] = tail @ _D2_EDGE0, tail @ _D2_EDGE1

    return d1 / (12.0 * h), d2 / (12.0 * h * h)


def residual(ds: Dataset, model) -> np.ndarray:
    """Squared ODE residual per sample for an IdentifiedModel or TrueSystem."""
    check_curve_inputs(model.family, model.cc_a, model.cc_b)
    friction, restoring = ode_terms(model.family, model.cc_a, model.cc_b, ds.x, ds.xdot)
    return (ds.xddot + friction + restoring - ds.fext) ** 2
