"""Forward integration of true systems and identified models."""

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np
from scipy.integrate import RK45, solve_ivp

from core_types import (
    CurveModel, Dataset, ForcingSpec, IdentifiedModel, ModelFamily,
    check_curve_inputs, ode_terms,
)
from errors import DivergenceError, IntegrationError, InvalidArgument, StiffnessFailure

logger = logging.getLogger("ccident.odesim")

FIXED_STEP = 'RK45-fixed'
METHODS = ('auto', 'RK45', 'DOP853', FIXED_STEP)


@dataclass(frozen=True)
class IntegratorConfig:
    """Tolerances and output grid of a forward simulation.

    ``method='auto'`` integrates smooth systems with the adaptive
    Dormand-Prince 5(4) pair. When either curve is flagged discontinuous it
    runs the same pair with a fixed step of ``discontinuous_max_step``, which
    cannot stall in sticking phases where step control collapses.
    """
    rtol: float = 1e-10
    atol: float = 1e-10
    max_step: float = np.inf
    t_max: float = 40.0
    n_samples: int = 500
    method: str = 'auto'
    discontinuous_max_step: float = 0.01
    max_rhs_evals: int = 5_000_000
    divergence_bound: float = 1e6

    def __post_init__(self):
        if not (self.rtol > 0 and self.atol > 0):
            raise InvalidArgument(f"rtol and atol must be > 0, got {self.rtol}, {self.atol}")
        if not self.t_max > 0:
            raise InvalidArgument(f"t_max must be > 0, got {self.t_max}")
        if self.n_samples < 2:
            raise InvalidArgument(f"n_samples must be >= 2, got {self.n_samples}")
        if not self.max_step > 0 or not self.discontinuous_max_step > 0:
            raise InvalidArgument("max_step values must be > 0")
        if self.method not in METHODS:
            raise InvalidArgument(f"unknown integration method {self.method!r}; choose from {METHODS}")

    def resolve(self, discontinuous: bool) -> Tuple[str, float]:
        """Return the (method, max_step) actually used.

        For the fixed-step method the second item is the step itself.
        """
        method = self.method
        if method == 'auto':
            method = FIXED_STEP if discontinuous else 'RK45'
        if method == FIXED_STEP or discontinuous:
            return method, min(self.max_step, self.discontinuous_max_step)
        return method, self.max_step


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Uniformly resampled solution; xddot comes from the right-hand side."""
    t: np.ndarray
    x: np.ndarray
    xdot: np.ndarray
    xddot: np.ndarray
    fext: np.ndarray
    method: str = ''
    n_rhs_evals: int = 0

    def to_dataset(self, meta: Optional[dict] = None) -> Dataset:
        return Dataset(self.t, self.x, self.xdot, self.xddot, self.fext, meta=dict(meta or {}))


class _Abort(Exception):
    """Carries an IntegrationError out of the solver callback."""

    def __init__(self, error: IntegrationError):
        super().__init__(str(error))
        self.error = error


@dataclass(frozen=True, eq=False)
class FixedStepSolution:
    """Step nodes plus the per-step Dormand-Prince interpolant coefficients."""
    t: np.ndarray
    y: np.ndarray
    q: np.ndarray
    h: float

    def __call__(self, t: np.ndarray) -> np.ndarray:
        """Dense output at ``t``, shape (2, len(t)), like ``OdeSolution``."""
        t = np.asarray(t, dtype=float)
        idx = np.clip(np.searchsorted(self.t, t, side='right') - 1, 0, len(self.q) - 1)
        theta = (t - self.t[idx]) / self.h
        powers = np.cumprod(np.repeat(theta[:, None], self.q.shape[2], axis=1), axis=1)
        return (self.y[idx] + self.h * np.einsum('nkp,np->nk', self.q[idx], powers)).T


def fixed_step_dp5(fun: Callable, t_max: float, y0, step: float) -> FixedStepSolution:
    """
    Dormand-Prince 5(4) without step control.

    The step is the largest h <= ``step`` that divides [0, t_max] evenly. The
    tableau and the 4th-order continuous extension are scipy's RK45 ones, so
    interior values match what the adaptive solver would interpolate.
    """
    n_steps = max(1, int(np.ceil(t_max / step - 1e-9)))
    h = t_max / n_steps
    a, b, c, p = RK45.A, RK45.B, RK45.C, RK45.P
    n_stages = RK45.n_stages

    ts = np.linspace(0.0, t_max, n_steps + 1)
    y = np.asarray(y0, dtype=float)
    ys = np.empty((n_steps + 1, y.size))
    q = np.empty((n_steps, y.size, p.shape[1]))
    k = np.empty((n_stages + 1, y.size))
    ys[0] = y
    f = np.asarray(fun(0.0, y), dtype=float)
    for i in range(n_steps):
        t = ts[i]
        k[0] = f
        for s in range(1, n_stages):
            k[s] = fun(t + c[s] * h, y + h * (k[:s].T @ a[s, :s]))
        y = y + h * (k[:n_stages].T @ b)
        # FSAL: last stage is the next step's first
        f = np.asarray(fun(t + h, y), dtype=float)
        k[n_stages] = f
        q[i] = k.T @ p
        ys[i + 1] = y
    return FixedStepSolution(t=ts, y=ys, q=q, h=h)


def integrate(family: ModelFamily, cc_a: CurveModel, cc_b: CurveModel, forcing: ForcingSpec,
              x0: float, v0: float, cfg: Optional[IntegratorConfig] = None) -> Trajectory:
    """
    Integrate x'' = F_ext(t) - friction - restoring from (x0, v0) over [0, t_max].

    Returns:
        Trajectory on cfg.n_samples uniform points

    Raises:
        StiffnessFailure: the step size collapsed or the evaluation budget ran out
        DivergenceError: the state became non-finite or exceeded divergence_bound
    """
    cfg = cfg or IntegratorConfig()
    check_curve_inputs(family, cc_a, cc_b)
    discontinuous = cc_a.discontinuous or cc_b.discontinuous
    method, max_step = cfg.resolve(discontinuous)
    n_evals = [0]

    def rhs(t, y):
        n_evals[0] += 1
        x, v = y[0], y[1]
        if not (np.isfinite(x) and np.isfinite(v)):
            raise _Abort(DivergenceError(f"non-finite state at t={t:.6g}", t=t))
        if abs(x) > cfg.divergence_bound or abs(v) > cfg.divergence_bound:
            raise _Abort(DivergenceError(
                f"state left the divergence bound {cfg.divergence_bound:g} at t={t:.6g}", t=t))
        if n_evals[0] > cfg.max_rhs_evals:
            raise _Abort(StiffnessFailure(
                f"right-hand side evaluation budget ({cfg.max_rhs_evals}) exhausted at t={t:.6g}", t=t))
        friction, restoring = ode_terms(family, cc_a, cc_b, x, v)
        return [v, forcing(t) - friction - restoring]

    y0 = [float(x0), float(v0)]
    try:
        if method == FIXED_STEP:
            dense = fixed_step_dp5(rhs, cfg.t_max, y0, max_step)
            n_steps = len(dense.q)
        else:
            sol = solve_ivp(rhs, (0.0, cfg.t_max), y0, method=method, rtol=cfg.rtol, atol=cfg.atol,
                            max_step=max_step, dense_output=True)
            if sol.status != 0:
                t_fail = float(sol.t[-1]) if len(sol.t) else 0.0
                raise StiffnessFailure(f"integration stopped at t={t_fail:.6g}: {sol.message}", t=t_fail)
            dense = sol.sol
            n_steps = len(sol.t) - 1
    except _Abort as abort:
        raise abort.error

    grid = np.linspace(0.0, cfg.t_max, cfg.n_samples)
    states = dense(grid)
    x, v = states[0], states[1]
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(v))):
        bad = int(np.flatnonzero(~(np.isfinite(x) & np.isfinite(v)))[0])
        raise DivergenceError(f"non-finite dense output at t={grid[bad]:.6g}", t=float(grid[bad]))

    fext = np.asarray(forcing(grid), dtype=float)
    friction, restoring = ode_terms(family, cc_a, cc_b, x, v)
    xddot = fext - friction - restoring

    logger.debug(f"{method}: {n_evals[0]} rhs evaluations, {n_steps} steps")
    return Trajectory(t=grid, x=x, xdot=v, xddot=xddot, fext=fext,
                      method=method, n_rhs_evals=n_evals[0])


def simulate_identified(model: IdentifiedModel, forcing: ForcingSpec, x0: float, v0: float,
                        cfg: Optional[IntegratorConfig] = None) -> Trajectory:
    """Integrate an identified model; each curve applies its own extrapolation policy."""
    return integrate(model.family, model.cc_a, model.cc_b, forcing, x0, v0, cfg)


def simulate_system(system, forcing: Optional[ForcingSpec] = None,
                    init: Optional[Tuple[float, float]] = None,
                    cfg: Optional[IntegratorConfig] = None) -> Trajectory:
    """Ground-truth run of a TrueSystem, defaulting to its own forcing and init."""
    forcing = forcing or system.default_forcing
    x0, v0 = init if init is not None else system.default_init
    return integrate(system.family, system.cc_a, system.cc_b, forcing, x0, v0, cfg)
