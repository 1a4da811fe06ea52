"""Experiment orchestration: validation sweeps, family selection, architecture sweeps, reports.

A sweep is a list of training cells. Each cell generates one training
dataset, fits every requested method on it and scores the identified models
on the cell's validation configurations. Cells run in a process pool and are
reassembled by index, so reports do not depend on scheduling.
"""

import csv
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from core_types import CurveModel, Dataset, ForcingSpec, IdentifiedModel, ModelFamily, residual
from dataset_storage import format_float
from errors import CCIdentError, IntegrationError, InvalidArgument
from nn_cc import ACTIVATION_NAMES, NeuralCurve, TrainConfig, train
from odesim import IntegratorConfig, Trajectory, simulate_identified, simulate_system
from poly_cc import fit_poly
from sindy_cc import fit_sindy
from systems import (
    SamplingProtocol, TrainingConfig, TrueSystem, ValidationConfig, make_system,
    sample_training_configs, sample_validation_configs,
)

logger = logging.getLogger("ccident.harness")

METHODS = ('poly', 'sindy', 'nn')
ARCH_AXES = {
    'neurons': (10, 20, 50, 100, 150, 200),
    'layers': (1, 2, 3, 4),
    'activation': ACTIVATION_NAMES,
}
CC_GRID_POINTS = 400
CC_GRID_SPAN = 1.5


# ============================================================================
# Methods
# ============================================================================

@dataclass(frozen=True)
class MethodSettings:
    """Hyperparameters of the three identification back-ends."""
    poly_degree: int = 10
    sindy_degree: int = 10
    threshold: float = 0.05
    ridge: float = 1e-5
    max_iter: int = 20
    nn: TrainConfig = field(default_factory=TrainConfig)


def parse_methods(selection: str) -> Tuple[str, ...]:
    """'all' or a comma list of poly/sindy/nn, returned in canonical order."""
    if selection.strip().lower() == 'all':
        return METHODS
    chosen = {m.strip().lower() for m in selection.split(',') if m.strip()}
    unknown = chosen - set(METHODS)
    if unknown or not chosen:
        raise InvalidArgument(f"unknown method(s) {sorted(unknown) or selection!r}; use poly, sindy, nn or all")
    return tuple(m for m in METHODS if m in chosen)


def identify(ds: Dataset, family: ModelFamily, method: str,
             settings: Optional[MethodSettings] = None) -> IdentifiedModel:
    settings = settings or MethodSettings()
    if method == 'poly':
        return fit_poly(ds, family, settings.poly_degree)
    if method == 'sindy':
        return fit_sindy(ds, family, settings.sindy_degree, settings.threshold,
                         settings.ridge, settings.max_iter)
    if method == 'nn':
        return train(ds, family, settings.nn)
    raise InvalidArgument(f"unknown method {method!r}")


def make_dataset(system: TrueSystem, forcing: Optional[ForcingSpec] = None,
                 init: Optional[Tuple[float, float]] = None,
                 integrator: Optional[IntegratorConfig] = None) -> Dataset:
    """Simulate a true system and package the run as a Dataset with its metadata."""
    forcing = forcing or system.default_forcing
    init = tuple(init) if init is not None else system.default_init
    traj = simulate_system(system, forcing, init, integrator)
    meta = {
        'system': system.name,
        'family': system.family.value,
        'params': dict(system.params),
        'A': forcing.amplitude,
        'omega': forcing.omega,
        'forcing_form': forcing.form.value,
        'x0': init[0],
        'v0': init[1],
        'integrator': traj.method,
    }
    ds = traj.to_dataset(meta)
    ds.meta['residual_max'] = float(np.max(residual(ds, system)))
    return ds


# ============================================================================
# Scores and reports
# ============================================================================

def rmse(x_pred: np.ndarray, x_true: np.ndarray) -> float:
    """Root-mean-square error between paired samples."""
    x_pred = np.asarray(x_pred, dtype=float)
    x_true = np.asarray(x_true, dtype=float)
    if x_pred.shape != x_true.shape:
        raise InvalidArgument(f"rmse needs equal lengths, got {x_pred.shape} and {x_true.shape}")
    if x_pred.size == 0:
        raise InvalidArgument("rmse of empty series")
    return float(np.sqrt(np.mean((x_pred - x_true) ** 2)))


@dataclass(frozen=True)
class Summary:
    n: int
    min: float
    q1: float
    median: float
    q3: float
    max: float
    mean: float

    def as_row(self) -> List[float]:
        return [self.min, self.q1, self.median, self.q3, self.max, self.mean]


def summarize(values: Sequence[float]) -> Summary:
    """Five-number summary plus mean; quartiles interpolate linearly between order statistics."""
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        nan = float('nan')
        return Summary(0, nan, nan, nan, nan, nan, nan)
    q = np.percentile(arr, [0, 25, 50, 75, 100], method='linear')
    return Summary(int(arr.size), *(float(v) for v in q), float(np.mean(arr)))


class RunStatus(str, Enum):
    OK = "ok"
    DIVERGED = "diverged"
    FAILED = "failed"


@dataclass(frozen=True)
class RunRecord:
    """Score of one (method, training config, validation config) cell."""
    method: str
    train_idx: int
    val_idx: int
    rmse: float
    status: RunStatus
    seed: int
    message: str = ''

    @property
    def diverged(self) -> bool:
        return self.status is RunStatus.DIVERGED


@dataclass
class ExperimentReport:
    """All runs of one method; divergent and failed runs stay out of the statistics."""
    method: str
    records: List[RunRecord]
    summary: Summary
    n_diverged: int
    n_failed: int
    master_seed: int = 0

    @classmethod
    def from_records(cls, method: str, records: Sequence[RunRecord], master_seed: int = 0) -> 'ExperimentReport':
        records = sorted(records, key=lambda r: (r.train_idx, r.val_idx))
        ok = [r.rmse for r in records if r.status is RunStatus.OK]
        return cls(
            method=method,
            records=list(records),
            summary=summarize(ok),
            n_diverged=sum(r.status is RunStatus.DIVERGED for r in records),
            n_failed=sum(r.status is RunStatus.FAILED for r in records),
            master_seed=master_seed,
        )

    @property
    def values(self) -> List[float]:
        return [r.rmse for r in self.records if r.status is RunStatus.OK]


# ============================================================================
# Validation sweep
# ============================================================================

@dataclass(frozen=True)
class SweepConfig:
    methods: Tuple[str, ...] = METHODS
    settings: MethodSettings = field(default_factory=MethodSettings)
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)
    jobs: int = 1


@dataclass(frozen=True)
class _Cell:
    system_name: str
    training: TrainingConfig
    validations: Tuple[ValidationConfig, ...]
    cfg: SweepConfig


def score_model(model: IdentifiedModel, reference: Trajectory, forcing: ForcingSpec,
                init: Tuple[float, float], integrator: Optional[IntegratorConfig] = None) -> Tuple[float, RunStatus, str]:
    """Simulate ``model`` under a validation case and score x(t) against the reference."""
    try:
        pred = simulate_identified(model, forcing, init[0], init[1], integrator)
    except IntegrationError as e:
        return float('nan'), RunStatus.DIVERGED, str(e)
    value = rmse(pred.x, reference.x)
    if not math.isfinite(value):
        return float('nan'), RunStatus.DIVERGED, 'non-finite rmse'
    return value, RunStatus.OK, ''


def run_training_cell(cell: _Cell) -> List[RunRecord]:
    """Fit every method on one training config and score it on that config's validations."""
    training, cfg = cell.training, cell.cfg
    system = make_system(cell.system_name, training.params)
    records: List[RunRecord] = []

    def fail_all(methods, validations, message):
        for method in methods:
            for val in validations:
                records.append(RunRecord(method, training.index, val.index, float('nan'),
                                         RunStatus.FAILED, val.seed, message))

    try:
        ds = make_dataset(system, training.forcing, training.init, cfg.integrator)
    except CCIdentError as e:
        fail_all(cfg.methods, cell.validations, f"training data: {e}")
        return records

    references: Dict[int, Trajectory] = {}
    usable = []
    for val in cell.validations:
        try:
            references[val.index] = simulate_system(system, val.forcing, val.init, cfg.integrator)
            usable.append(val)
        except IntegrationError as e:
            fail_all(cfg.methods, [val], f"reference: {e}")

    for method in cfg.methods:
        settings = replace(cfg.settings, nn=replace(cfg.settings.nn, seed=training.seed))
        try:
            model = identify(ds, system.family, method, settings)
        except CCIdentError as e:
            fail_all([method], usable, f"{method}: {e}")
            continue
        for val in usable:
            value, status, message = score_model(model, references[val.index], val.forcing,
                                                 val.init, cfg.integrator)
            records.append(RunRecord(method, training.index, val.index, value, status, val.seed, message))
    return records


def _run_cells(fn: Callable, cells: Sequence, jobs: int,
               on_result: Optional[Callable[[int, object], None]] = None) -> List:
    """Apply ``fn`` to every cell, inline or in a process pool; results keep cell order."""
    results = [None] * len(cells)
    if jobs <= 1 or len(cells) <= 1:
        for i, cell in enumerate(cells):
            results[i] = fn(cell)
            if on_result:
                on_result(i, results[i])
        return results

    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = {pool.submit(fn, cell): i for i, cell in enumerate(cells)}
        for future in as_completed(futures):
            i = futures[future]
            results[i] = future.result()
            if on_result:
                on_result(i, results[i])
    return results


def run_sweep(system: TrueSystem, protocol: SamplingProtocol, cfg: Optional[SweepConfig] = None,
              on_record: Optional[Callable[[int, int, RunRecord], None]] = None) -> Dict[str, ExperimentReport]:
    """
    Train/validate sweep: n_train x n_val_per_train RMSE values per method.

    Args:
        system: registry system providing curves and the parameters not sampled
        protocol: sampling intervals and master seed
        cfg: methods, hyperparameters, integrator and worker count
        on_record: called as on_record(done, total, record) in the parent process

    Returns:
        {method: ExperimentReport}, deterministic for a given protocol seed
    """
    cfg = cfg or SweepConfig()
    trainings = sample_training_configs(protocol, system)
    cells = [_Cell(system.name, training, tuple(sample_validation_configs(protocol, training)), cfg)
             for training in trainings]
    total = sum(len(c.validations) for c in cells) * len(cfg.methods)
    done = [0]

    def report_cell(i, records):
        n_ok = sum(r.status is RunStatus.OK for r in records)
        logger.info(f"training cell {i + 1}/{len(cells)}: {n_ok}/{len(records)} runs ok")
        for record in records:
            done[0] += 1
            if on_record:
                on_record(done[0], total, record)

    logger.info(f"sweep {system.name}: {len(cells)} training configs, methods={','.join(cfg.methods)}, "
                f"jobs={cfg.jobs}")
    results = _run_cells(run_training_cell, cells, cfg.jobs, report_cell)

    by_method: Dict[str, List[RunRecord]] = {m: [] for m in cfg.methods}
    for records in results:
        for record in records:
            by_method[record.method].append(record)
    return {m: ExperimentReport.from_records(m, by_method[m], protocol.rng_seed) for m in cfg.methods}


# ============================================================================
# Family selection
# ============================================================================

@dataclass(frozen=True)
class ValidationCase:
    """Forcing and init of a validation run with its ground-truth trajectory."""
    forcing: ForcingSpec
    init: Tuple[float, float]
    reference: Trajectory


def validation_case(system: TrueSystem, forcing: ForcingSpec, init: Tuple[float, float],
                    integrator: Optional[IntegratorConfig] = None) -> ValidationCase:
    return ValidationCase(forcing, tuple(init), simulate_system(system, forcing, init, integrator))


@dataclass(frozen=True)
class FamilySelection:
    """Validation RMSE of both families; winner is None when both runs failed."""
    rmse: Dict[ModelFamily, float]
    status: Dict[ModelFamily, RunStatus]
    winner: Optional[ModelFamily]
    inconclusive: bool
    non_discriminative: bool

    @property
    def ranking(self) -> List[Tuple[ModelFamily, float]]:
        return sorted(self.rmse.items(), key=lambda kv: (not math.isfinite(kv[1]), kv[1]))


def _same_case(meta: Mapping, case: ValidationCase) -> bool:
    keys = ('A', 'omega', 'x0', 'v0')
    if not all(k in meta for k in keys):
        return False
    ours = (case.forcing.amplitude, case.forcing.omega, case.init[0], case.init[1])
    return all(abs(float(meta[k]) - v) <= 1e-12 for k, v in zip(keys, ours))


def select_family(ds_train: Dataset, case: ValidationCase, method: str = 'poly',
                  settings: Optional[MethodSettings] = None,
                  integrator: Optional[IntegratorConfig] = None) -> FamilySelection:
    """
    Fit both model families on the training data and compare them on a validation case.

    A result with both families failing is inconclusive. When the validation
    case repeats the training forcing and init (per the dataset metadata) the
    result is flagged non-discriminative.
    """
    scores: Dict[ModelFamily, float] = {}
    statuses: Dict[ModelFamily, RunStatus] = {}
    for family in ModelFamily:
        try:
            model = identify(ds_train, family, method, settings)
        except CCIdentError as e:
            logger.warning(f"{family.value} family fit failed: {e}")
            scores[family], statuses[family] = float('nan'), RunStatus.FAILED
            continue
        value, status, message = score_model(model, case.reference, case.forcing, case.init, integrator)
        if message:
            logger.info(f"{family.value} family validation: {message}")
        scores[family], statuses[family] = value, status

    finite = {f: v for f, v in scores.items() if math.isfinite(v)}
    winner = min(finite, key=finite.get) if finite else None
    return FamilySelection(rmse=scores, status=statuses, winner=winner,
                           inconclusive=winner is None,
                           non_discriminative=_same_case(ds_train.meta, case))


# ============================================================================
# Architecture sweep
# ============================================================================

@dataclass(frozen=True)
class ArchRow:
    value: str
    final_loss: float
    wall_time: float
    error: str = ''


@dataclass(frozen=True)
class _ArchCell:
    ds: Dataset
    family: ModelFamily
    cfg: TrainConfig
    value: str


def arch_config(base: TrainConfig, axis: str, value) -> TrainConfig:
    """``base`` with one architecture axis set to ``value``."""
    if axis == 'neurons':
        return replace(base, neurons=int(value))
    if axis == 'layers':
        return replace(base, layers=int(value))
    if axis == 'activation':
        return replace(base, activation=str(value))
    raise InvalidArgument(f"unknown architecture axis {axis!r}; choose from {', '.join(ARCH_AXES)}")


def _train_arch_cell(cell: _ArchCell) -> ArchRow:
    started = time.perf_counter()
    try:
        model = train(cell.ds, cell.family, cell.cfg)
    except CCIdentError as e:
        return ArchRow(cell.value, float('nan'), time.perf_counter() - started, str(e))
    return ArchRow(cell.value, model.fit.final_loss, time.perf_counter() - started)


def sweep_architecture(ds: Dataset, family: ModelFamily, axis: str, values: Optional[Sequence] = None,
                       base: Optional[TrainConfig] = None, jobs: int = 1,
                       on_row: Optional[Callable[[int, int, ArchRow], None]] = None) -> List[ArchRow]:
    """Train NN-CC once per axis value with a fixed seed; failures become rows with an error."""
    base = base or TrainConfig()
    if axis not in ARCH_AXES:
        raise InvalidArgument(f"unknown architecture axis {axis!r}; choose from {', '.join(ARCH_AXES)}")
    values = list(values) if values is not None else list(ARCH_AXES[axis])
    family = ModelFamily.parse(family)
    cells = [_ArchCell(ds, family, arch_config(base, axis, v), str(v)) for v in values]

    def report(i, row):
        logger.info(f"{axis}={row.value}: final loss {row.final_loss:.3e} ({row.wall_time:.1f}s)")
        if on_row:
            on_row(i + 1, len(cells), row)

    return _run_cells(_train_arch_cell, cells, jobs, report)


# ============================================================================
# CSV output
# ============================================================================

def _writer(path: Path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    f = open(path, 'w', newline='')
    return f, csv.writer(f, lineterminator='\n')


def write_raw_csv(reports: Mapping[str, ExperimentReport], path: Path) -> Path:
    """One row per run: ``method,train_idx,val_idx,rmse,diverged,seed``; failed runs have rmse nan."""
    f, writer = _writer(path)
    with f:
        writer.writerow(['method', 'train_idx', 'val_idx', 'rmse', 'diverged', 'seed'])
        for method, report in reports.items():
            for r in report.records:
                writer.writerow([method, r.train_idx, r.val_idx, format_float(r.rmse),
                                 int(r.diverged), r.seed])
    return Path(path)


def write_summary_csv(reports: Mapping[str, ExperimentReport], path: Path) -> Path:
    f, writer = _writer(path)
    with f:
        writer.writerow(['method', 'n', 'n_diverged', 'n_failed', 'min', 'q1', 'median', 'q3', 'max', 'mean'])
        for method, report in reports.items():
            s = report.summary
            writer.writerow([method, s.n, report.n_diverged, report.n_failed]
                            + [format_float(v) for v in s.as_row()])
    return Path(path)


def write_arch_csv(rows: Sequence[ArchRow], path: Path) -> Path:
    f, writer = _writer(path)
    with f:
        writer.writerow(['value', 'final_loss', 'wall_time', 'error'])
        for row in rows:
            writer.writerow([row.value, format_float(row.final_loss), f"{row.wall_time:.3f}", row.error])
    return Path(path)


def cc_grid(domain: Tuple[float, float], n: int = CC_GRID_POINTS, span: float = CC_GRID_SPAN) -> np.ndarray:
    """n points centred on the domain and covering ``span`` times its width."""
    lo, hi = domain
    mid, half = (lo + hi) / 2.0, span * (hi - lo) / 2.0
    return np.linspace(mid - half, mid + half, n)


def write_cc_samples(path: Path, domain: Tuple[float, float], curves: Mapping[str, CurveModel],
                     true_curve: Optional[CurveModel] = None) -> Path:
    """``z,f_true,f_<method>...`` on the plotting grid; f_true is omitted when unknown."""
    z = cc_grid(domain)
    columns = {'z': z}
    if true_curve is not None:
        columns['f_true'] = true_curve(z)
    for method in METHODS:
        if method in curves:
            columns[f'f_{method}'] = curves[method](z)
    f, writer = _writer(path)
    with f:
        writer.writerow(list(columns))
        for row in zip(*columns.values()):
            writer.writerow([format_float(v) for v in row])
    return Path(path)


def write_nn_edges(path: Path, curve: NeuralCurve, true_curve: Optional[CurveModel] = None) -> Path:
    """``z,f_true,f_nn_raw,f_nn_linext``: raw network against edge extrapolation."""
    z = cc_grid(curve.domain)
    f_true = true_curve(z) if true_curve is not None else np.full_like(z, np.nan)
    f, writer = _writer(path)
    with f:
        writer.writerow(['z', 'f_true', 'f_nn_raw', 'f_nn_linext'])
        for row in zip(z, f_true, curve.raw(z), curve(z)):
            writer.writerow([format_float(v) for v in row])
    return Path(path)
