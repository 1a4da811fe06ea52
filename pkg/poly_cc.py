"""Poly-CC: polynomial characteristic curves fitted by linear least squares.

Each curve is expanded in the shifted, normalised variable
z_hat = (z - A0) / A1 with A0, A1 the midpoint and half-width of the training
range, which keeps z_hat in [-1, 1] and the design matrix well conditioned.
"""

import csv
import logging
from dataclasses import dataclass
from math import comb
from pathlib import Path
from typing import Sequence, Tuple

import numpy as np

from core_types import CurveKind, CurveModel, Dataset, IdentifiedModel, ModelFamily, require_valid
from dataset_storage import format_float
from errors import InvalidArgument, InvalidData

logger = logging.getLogger("ccident.poly_cc")

DEFAULT_DEGREE = 10
RCOND = 1e-12


class PolyCurve(CurveModel):
    """Degree-N polynomial in the shifted variable, evaluated with Horner's rule."""

    kind = CurveKind.POLYNOMIAL

    def __init__(self, shifted_coeffs: Sequence[float], A0: float, A1: float,
                 variable: str, domain: Tuple[float, float]):
        if not A1 > 0:
            raise InvalidArgument(f"A1 must be > 0, got {A1}")
        super().__init__(variable, domain)
        self.shifted_coeffs = np.array(shifted_coeffs, dtype=float)
        self.A0 = float(A0)
        self.A1 = float(A1)

    @property
    def degree(self) -> int:
        return len(self.shifted_coeffs) - 1

    @property
    def monomial_coeffs(self) -> np.ndarray:
        return back_transform(self.shifted_coeffs, self.A0, self.A1)

    def evaluate(self, z: np.ndarray) -> np.ndarray:
        zh = (z - self.A0) / self.A1
        out = np.full_like(zh, self.shifted_coeffs[-1])
        for coef in self.shifted_coeffs[-2::-1]:
            out = out * zh + coef
        return out


@dataclass(frozen=True)
class PolyFit:
    """Diagnostics of the joint least-squares solve."""
    degree: int
    rank: int
    n_columns: int
    rank_deficient: bool
    fit_residual: float


def shift_scale(z: np.ndarray) -> Tuple[float, float]:
    """Midpoint A0 and half-width A1 of the observed range of z."""
    lo, hi = float(np.min(z)), float(np.max(z))
    if not hi > lo:
        raise InvalidData(f"degenerate domain: max z = min z = {lo}")
    return (hi + lo) / 2.0, (hi - lo) / 2.0


def back_transform(shifted_coeffs: Sequence[float], A0: float, A1: float) -> np.ndarray:
    """
    Monomial coefficients c_j of f(z) = sum_k c_hat_k ((z - A0) / A1)^k.

    Binomial expansion of the defining identity:
        c_j = sum_{k=j..N} C(k, j) (-A0)^(k-j) / A1^k * c_hat_k
    evaluated from j = N down to j = 0.
    """
    if A1 == 0:
        raise InvalidArgument("back_transform needs A1 != 0")
    c_hat = np.asarray(shifted_coeffs, dtype=float)
    N = len(c_hat) - 1
    out = np.zeros(N + 1)
    for j in range(N, -1, -1):
        out[j] = sum(comb(k, j) * (-A0) ** (k - j) / A1 ** k * c_hat[k] for k in range(j, N + 1))
    return out


def _powers(zh: np.ndarray, degree: int) -> np.ndarray:
    return np.vander(zh, degree + 1, increasing=True)


def fit_poly(ds: Dataset, family: ModelFamily, degree: int = DEFAULT_DEGREE) -> IdentifiedModel:
    """
    Fit both curves of the family in one least-squares problem.

    Target y = F_ext - x''. Position family columns: z_hat^j * x' and z_hat^j
    (j = 0..N). Velocity family columns: v_hat^j (j = 0..N) and z_hat^j
    (j = 1..N); the f4 constant is omitted to fix the additive gauge.
    """
    if degree < 1:
        raise InvalidArgument(f"degree must be >= 1, got {degree}")
    require_valid(ds)
    family = ModelFamily.parse(family)

    y = ds.fext - ds.xddot
    x_A0, x_A1 = shift_scale(ds.x)
    X = _powers((ds.x - x_A0) / x_A1, degree)

    if family is ModelFamily.POSITION_FRICTION:
        theta = np.hstack([X * ds.xdot[:, None], X])
        a_scale, a_var, a_data = (x_A0, x_A1), 'x', ds.x
    else:
        v_A0, v_A1 = shift_scale(ds.xdot)
        V = _powers((ds.xdot - v_A0) / v_A1, degree)
        theta = np.hstack([V, X[:, 1:]])
        a_scale, a_var, a_data = (v_A0, v_A1), 'xdot', ds.xdot

    coeffs, _, rank, _ = np.linalg.lstsq(theta, y, rcond=RCOND)
    n_columns = theta.shape[1]
    rank_deficient = rank < n_columns
    fit_residual = float(np.mean((theta @ coeffs - y) ** 2))
    if rank_deficient:
        logger.warning(f"rank-deficient design matrix ({rank}/{n_columns}); using minimum-norm solution")

    coeffs_a = coeffs[:degree + 1]
    if family is ModelFamily.POSITION_FRICTION:
        coeffs_b = coeffs[degree + 1:]
    else:
        coeffs_b = np.concatenate([[0.0], coeffs[degree + 1:]])

    cc_a = PolyCurve(coeffs_a, *a_scale, variable=a_var,
                     domain=(float(np.min(a_data)), float(np.max(a_data))))
    cc_b = PolyCurve(coeffs_b, x_A0, x_A1, variable='x', domain=ds.domain('x'))
    fit = PolyFit(degree=degree, rank=int(rank), n_columns=n_columns,
                  rank_deficient=bool(rank_deficient), fit_residual=fit_residual)
    logger.debug(f"poly fit degree={degree} rank={rank}/{n_columns} residual={fit_residual:.3e}")
    return IdentifiedModel(family=family, cc_a=cc_a, cc_b=cc_b, method='poly', fit=fit)


def export_poly_coefficients(model: IdentifiedModel, path: Path) -> Path:
    """Write ``curve,basis,j,coeff`` rows for both curves in both bases."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(['curve', 'basis', 'j', 'coeff'])
        for name, curve in zip(model.family.curve_names, (model.cc_a, model.cc_b)):
            for basis, values in (('shifted', curve.shifted_coeffs), ('monomial', curve.monomial_coeffs)):
                for j, value in enumerate(values):
                    writer.writerow([name, basis, j, format_float(value)])
    return path
