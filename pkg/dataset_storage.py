"""Dataset storage: CSV trajectories with JSON metadata sidecars."""

import csv
import json
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np

from core_types import SERIES, Dataset, estimate_derivatives
from errors import InvalidData

HEADER = list(SERIES)


def format_float(value: float) -> str:
    """Full double precision, '.' decimal point, no grouping."""
    return f"{float(value):.17g}"


def metadata_path(csv_path: Path) -> Path:
    csv_path = Path(csv_path)
    return csv_path.with_name(csv_path.stem + '.meta.json')


def save_dataset(ds: Dataset, path: Path) -> Path:
    """Write ``t,x,xdot,xddot,fext`` rows with 17 significant digits."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(HEADER)
        for row in zip(*ds.columns()):
            writer.writerow([format_float(v) for v in row])
    return path


def load_dataset(path: Path, estimate_missing: bool = False, smoothing: int = 1) -> Dataset:
    """
    Read a dataset CSV.

    Args:
        path: CSV with at least ``t,x,fext`` columns
        estimate_missing: fill absent ``xdot``/``xddot`` columns by finite differences
        smoothing: moving-average window used when estimating derivatives

    Returns:
        Dataset (not yet validated)
    """
    path = Path(path)
    if not path.exists():
        raise InvalidData(f"dataset not found: {path}")

    with open(path, 'r', newline='') as f:
        reader = csv.reader(f)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise InvalidData(f"{path} is empty")
        rows = [row for row in reader if row]

    unknown = [h for h in header if h not in SERIES]
    if unknown:
        raise InvalidData(f"{path}: unknown column(s) {unknown}")
    for required in ('t', 'x', 'fext'):
        if required not in header:
            raise InvalidData(f"{path}: missing column '{required}'")

    try:
        table = np.array([[float(v) for v in row] for row in rows], dtype=float)
    except ValueError as e:
        raise InvalidData(f"{path}: {e}")
    if table.ndim != 2 or table.shape[0] == 0 or table.shape[1] != len(header):
        raise InvalidData(f"{path}: ragged or empty table")

    columns = {name: table[:, i] for i, name in enumerate(header)}
    missing = [name for name in ('xdot', 'xddot') if name not in columns]
    if missing:
        if not estimate_missing:
            raise InvalidData(f"{path}: missing column(s) {missing}; pass estimate_missing to derive them")
        xdot, xddot = estimate_derivatives(columns['t'], columns['x'], smoothing=smoothing)
        columns.setdefault('xdot', xdot)
        columns.setdefault('xddot', xddot)

    meta = read_metadata(path) or {}
    return Dataset(meta=meta, **{name: columns[name] for name in SERIES})


def write_metadata(csv_path: Path, meta: Dict[str, Any]) -> Path:
    """Write the JSON sidecar next to a dataset CSV."""
    target = metadata_path(csv_path)
    with open(target, 'w') as f:
        json.dump(meta, f, indent=4, sort_keys=True)
    return target


def read_metadata(csv_path: Path) -> Optional[Dict[str, Any]]:
    target = metadata_path(csv_path)
    if not target.exists():
        return None
    with open(target, 'r') as f:
        return json.load(f)


class DatasetStorage:
    """Directory-backed storage for named datasets."""

    def __init__(self, root: Union[str, Path] = "./output/datasets"):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def path_for(self, name: str) -> Path:
        return self.root / f"{name}.csv"

    def save(self, name: str, ds: Dataset, meta: Optional[Dict[str, Any]] = None) -> Path:
        """Save a dataset and, if given, its metadata sidecar."""
        path = save_dataset(ds, self.path_for(name))
        if meta is not None:
            write_metadata(path, meta)
        return path

    def load(self, name: str, estimate_missing: bool = False) -> Dataset:
        return load_dataset(self.path_for(name), estimate_missing=estimate_missing)

    def exists(self, name: str) -> bool:
        return self.path_for(name).exists()

    def list_names(self) -> List[str]:
        return sorted(p.stem for p in self.root.glob('*.csv'))
