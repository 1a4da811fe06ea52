"""Refit identified curves to closed-form laws.

A learned curve is sampled over its training domain and replaced by a
polynomial, a straight line, or a viscous-plus-Coulomb law. The result
extrapolates natively, which makes physical parameters readable off the
identified model.
"""

import logging
from typing import Dict, Optional

import numpy as np
from numpy.polynomial import Polynomial

from core_types import CurveKind, CurveModel, IdentifiedModel, sign0
from errors import InvalidArgument

logger = logging.getLogger("ccident.curve_refit")

LAWS = ('polynomial', 'linear', 'coulomb')
DEFAULT_SAMPLES = 400


class RefitCurve(CurveModel):
    """Closed-form law fitted to another curve."""

    kind = CurveKind.ANALYTIC

    def __init__(self, law: str, params: Dict[str, float], variable: str, domain,
                 polynomial: Optional[Polynomial] = None, rms_error: float = 0.0):
        super().__init__(variable, domain, discontinuous=(law == 'coulomb'))
        self.law = law
        self.params = dict(params)
        self.polynomial = polynomial
        self.rms_error = rms_error

    def evaluate(self, z: np.ndarray) -> np.ndarray:
        if self.law == 'coulomb':
            return self.params['c'] * z + self.params['F_f'] * sign0(z)
        return self.polynomial(z)

    def __repr__(self):
        shown = ', '.join(f"{k}={v:.6g}" for k, v in self.params.items())
        return f"RefitCurve({self.law}: {shown})"


def _samples(curve: CurveModel, n_points: int):
    lo, hi = curve.domain
    if not (np.isfinite(lo) and np.isfinite(hi) and hi > lo):
        raise InvalidArgument(f"cannot refit a curve over the domain [{lo}, {hi}]")
    z = np.linspace(lo, hi, n_points)
    return z, np.asarray(curve(z), dtype=float)


def refit_curve(curve: CurveModel, law: str = 'polynomial', degree: int = 3,
                n_points: int = DEFAULT_SAMPLES) -> RefitCurve:
    """
    Least-squares fit of ``law`` to ``curve`` on n_points over its domain.

    Args:
        curve: any identified or analytic curve with a finite domain
        law: 'polynomial' (of ``degree``), 'linear', or 'coulomb' (c*z + F_f*sign(z))
        degree: polynomial degree, ignored by the other laws
    """
    if law not in LAWS:
        raise InvalidArgument(f"unknown refit law {law!r}; choose from {', '.join(LAWS)}")
    if law == 'linear':
        degree = 1
    if degree < 0:
        raise InvalidArgument(f"degree must be >= 0, got {degree}")
    z, f = _samples(curve, n_points)

    if law == 'coulomb':
        design = np.column_stack([z, sign0(z)])
        (c, F_f), *_ = np.linalg.lstsq(design, f, rcond=None)
        fitted = RefitCurve('coulomb', {'c': float(c), 'F_f': float(F_f)}, curve.variable, curve.domain)
    else:
        poly = Polynomial.fit(z, f, degree).convert()
        params = {f'c{j}': float(c) for j, c in enumerate(poly.coef)}
        fitted = RefitCurve(law, params, curve.variable, curve.domain, polynomial=poly)

    fitted.rms_error = float(np.sqrt(np.mean((fitted(z) - f) ** 2)))
    logger.debug(f"refit {law} on {curve.variable}: rms error {fitted.rms_error:.3e}")
    return fitted


def refit_model(model: IdentifiedModel, law_a: str = 'polynomial', law_b: str = 'polynomial',
                degree: int = 3, n_points: int = DEFAULT_SAMPLES) -> IdentifiedModel:
    """Replace both curves of ``model`` by their refits."""
    cc_a = refit_curve(model.cc_a, law_a, degree, n_points)
    cc_b = refit_curve(model.cc_b, law_b, degree, n_points)
    return model.with_curves(cc_a, cc_b, method=f"{model.method}+refit")
