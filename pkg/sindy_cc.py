"""SINDy-CC: sparse polynomial characteristic curves by sequentially thresholded least squares.

The forcing coefficient is fixed at one by moving F_ext into the regression
target (y = F_ext - x''), and the velocity family library has no mixed x*x'
terms, so every identified model has exactly the structure of its family.
"""

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, NamedTuple, Sequence, Tuple

import numpy as np

from core_types import CurveKind, CurveModel, Dataset, IdentifiedModel, ModelFamily, require_valid
from dataset_storage import format_float
from errors import InvalidArgument

logger = logging.getLogger("ccident.sindy_cc")

DEFAULT_DEGREE = 10
DEFAULT_THRESHOLD = 0.05
DEFAULT_RIDGE = 1e-5
DEFAULT_MAX_ITER = 20
RCOND = 1e-12


class Term(NamedTuple):
    """Library column x^x_exp * xdot^v_exp belonging to cc_a (curve=0) or cc_b (curve=1)."""
    curve: int
    x_exp: int
    v_exp: int

    def render(self) -> str:
        parts = []
        if self.x_exp:
            parts.append('x' if self.x_exp == 1 else f'x^{self.x_exp}')
        if self.v_exp:
            parts.append('xdot' if self.v_exp == 1 else f'xdot^{self.v_exp}')
        return '*'.join(parts) or '1'


def build_library(family: ModelFamily, degree: int) -> List[Term]:
    """
    Candidate terms of the family, cc_a terms first.

    position: x^j * xdot (j = 0..N), then x^j (j = 0..N)
    velocity: xdot^j (j = 0..N), then x^j (j = 1..N)
    """
    if degree < 1:
        raise InvalidArgument(f"degree must be >= 1, got {degree}")
    family = ModelFamily.parse(family)
    if family is ModelFamily.POSITION_FRICTION:
        return ([Term(0, j, 1) for j in range(degree + 1)]
                + [Term(1, j, 0) for j in range(degree + 1)])
    return ([Term(0, 0, j) for j in range(degree + 1)]
            + [Term(1, j, 0) for j in range(1, degree + 1)])


def evaluate_library(terms: Sequence[Term], x: np.ndarray, xdot: np.ndarray) -> np.ndarray:
    """Design matrix with one column per term."""
    x = np.asarray(x, dtype=float)
    xdot = np.asarray(xdot, dtype=float)
    return np.column_stack([x ** term.x_exp * xdot ** term.v_exp for term in terms])


def _ridge_solve(theta: np.ndarray, y: np.ndarray, ridge: float) -> np.ndarray:
    """argmin |theta c - y|^2 + ridge |c|^2 as an augmented least-squares problem."""
    if ridge > 0:
        n = theta.shape[1]
        theta = np.vstack([theta, np.sqrt(ridge) * np.eye(n)])
        y = np.concatenate([y, np.zeros(n)])
    return np.linalg.lstsq(theta, y, rcond=RCOND)[0]


def _stlsq(theta: np.ndarray, y: np.ndarray, threshold: float, ridge: float,
           max_iter: int) -> Tuple[np.ndarray, int, bool]:
    if theta.ndim != 2 or theta.shape[0] != len(y):
        raise InvalidArgument(f"theta has {theta.shape[0]} rows but y has {len(y)} entries")
    if threshold < 0 or ridge < 0:
        raise InvalidArgument("threshold and ridge must be >= 0")
    if max_iter < 1:
        raise InvalidArgument(f"max_iter must be >= 1, got {max_iter}")

    # column scaling keeps high powers solvable; thresholds act on unscaled coefficients
    scale = np.max(np.abs(theta), axis=0)
    scale[scale == 0] = 1.0
    theta_w = theta / scale

    n_terms = theta.shape[1]
    active = np.ones(n_terms, dtype=bool)
    coeffs = np.zeros(n_terms)
    converged = False
    iteration = 0
    for iteration in range(1, max_iter + 1):
        coeffs = np.zeros(n_terms)
        if active.any():
            coeffs[active] = _ridge_solve(theta_w[:, active], y, ridge) / scale[active]
        keep = active & (np.abs(coeffs) >= threshold)
        if np.array_equal(keep, active):
            converged = True
            break
        active = keep
        if not active.any():
            coeffs = np.zeros(n_terms)
            break

    # unbias on the final support; drop anything the plain solve pushes under threshold
    while active.any():
        coeffs = np.zeros(n_terms)
        coeffs[active] = np.linalg.lstsq(theta_w[:, active], y, rcond=RCOND)[0] / scale[active]
        keep = active & (np.abs(coeffs) >= threshold)
        if np.array_equal(keep, active):
            break
        active = keep
    coeffs[~active] = 0.0

    if not active.any():
        logger.warning(f"STLSQ removed every term (threshold={threshold:g}); "
                       "returning the all-zero model, lower the threshold")
    elif not converged:
        logger.debug(f"STLSQ active set still changing after {max_iter} iterations")
    return coeffs, iteration, converged


def stlsq(theta: np.ndarray, y: np.ndarray, threshold: float = DEFAULT_THRESHOLD,
          ridge: float = DEFAULT_RIDGE, max_iter: int = DEFAULT_MAX_ITER) -> np.ndarray:
    """
    Sequentially thresholded ridge regression.

    Alternates a ridge-regularised solve on the active set with hard
    thresholding of |c| < threshold until the active set is stable or max_iter
    is reached. Inactive entries are exactly 0 and every active entry has
    |c| >= threshold.
    """
    return _stlsq(np.asarray(theta, dtype=float), np.asarray(y, dtype=float),
                  threshold, ridge, max_iter)[0]


class SparsePolyCurve(CurveModel):
    """sum_k c_k z^e_k over the active terms of one curve."""

    kind = CurveKind.SPARSE_POLYNOMIAL

    def __init__(self, terms: Sequence[Term], coeffs: Sequence[float], variable: str,
                 domain: Tuple[float, float]):
        super().__init__(variable, domain)
        self.terms = list(terms)
        self.coeffs = np.array(coeffs, dtype=float)
        self.exponents = np.array([t.v_exp if variable == 'xdot' else t.x_exp for t in self.terms], dtype=int)

    @property
    def active_terms(self) -> List[Tuple[Term, float]]:
        return [(term, float(c)) for term, c in zip(self.terms, self.coeffs) if c != 0.0]

    def evaluate(self, z: np.ndarray) -> np.ndarray:
        out = np.zeros_like(z)
        for e, c in zip(self.exponents, self.coeffs):
            if c != 0.0:
                out = out + c * z ** e
        return out


@dataclass(frozen=True)
class SparseFit:
    terms: Tuple[Term, ...]
    coeffs: np.ndarray
    threshold: float
    ridge: float
    n_iterations: int
    converged: bool
    fit_residual: float

    @property
    def n_active(self) -> int:
        return int(np.count_nonzero(self.coeffs))


def fit_sindy(ds: Dataset, family: ModelFamily, degree: int = DEFAULT_DEGREE,
              threshold: float = DEFAULT_THRESHOLD, ridge: float = DEFAULT_RIDGE,
              max_iter: int = DEFAULT_MAX_ITER) -> IdentifiedModel:
    """Identify both curves of the family with one sparse regression."""
    require_valid(ds)
    family = ModelFamily.parse(family)
    terms = build_library(family, degree)
    theta = evaluate_library(terms, ds.x, ds.xdot)
    y = ds.fext - ds.xddot

    coeffs, n_iterations, converged = _stlsq(theta, y, threshold, ridge, max_iter)
    fit_residual = float(np.mean((theta @ coeffs - y) ** 2))

    var_a, var_b = family.input_variables
    curves = []
    for index, variable in ((0, var_a), (1, var_b)):
        mask = [term.curve == index for term in terms]
        curves.append(SparsePolyCurve([t for t, m in zip(terms, mask) if m], coeffs[mask],
                                      variable, ds.domain(variable)))

    fit = SparseFit(terms=tuple(terms), coeffs=coeffs, threshold=threshold, ridge=ridge,
                    n_iterations=n_iterations, converged=converged, fit_residual=fit_residual)
    logger.debug(f"sindy fit: {fit.n_active}/{len(terms)} active terms after {n_iterations} iterations")
    return IdentifiedModel(family=family, cc_a=curves[0], cc_b=curves[1], method='sindy', fit=fit)


def export_sindy_terms(model: IdentifiedModel, path: Path) -> Path:
    """Write ``curve,term,coeff`` rows for active terms only."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(['curve', 'term', 'coeff'])
        for name, curve in zip(model.family.curve_names, (model.cc_a, model.cc_b)):
            for term, coeff in curve.active_terms:
                writer.writerow([name, term.render(), format_float(coeff)])
    return path
