"""Individual-level records, size grids and CSV ingestion.

Rows follow the usual IPM data table: one individual per row with its size
at ``t``, survival, size at ``t+1`` and the number of recruits landing in
each size class.  Continuous sizes are mapped to classes ``1..N`` by a
:class:`SizeGrid`; class ``0`` is reserved for "dead at ``t+1``".
"""

from __future__ import annotations

import csv
import json
import math
import os
import warnings
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .errors import DataError

__all__ = [
    "IndividualRecord",
    "SizeGrid",
    "Dataset",
    "build_quantile_grid",
    "integer_grid",
    "discretize",
    "read_dataset",
    "write_dataset",
]


@dataclass(frozen=True)
class IndividualRecord:
    id: str
    z_continuous: float
    z_class: int
    survived: int
    z_next_class: int
    offspring: Mapping[int, int] = field(default_factory=dict)
    env_label: str | None = None
    covariates: tuple[float, ...] = ()
    z_next_continuous: float | None = None


@dataclass(frozen=True)
class SizeGrid:
    """Split points ``s_1 < ... < s_{N-1}``; class ``k`` is ``(s_{k-1}, s_k]``.

    With ``has_seedling_class`` the first split is exactly ``0`` so class 1
    holds the zero-size (seedling) individuals only.
    """

    split_points: np.ndarray
    has_seedling_class: bool = False

    def __post_init__(self):
        s = np.asarray(self.split_points, dtype=float)
        if s.ndim != 1 or s.size < 1:
            raise DataError("grid needs at least one split point")
        if np.any(np.diff(s) <= 0):
            raise DataError("grid split points must be strictly increasing")
        s.setflags(write=False)
        object.__setattr__(self, "split_points", s)

    @property
    def n_classes(self) -> int:
        return self.split_points.size + 1

    def discretize(self, z):
        return discretize(z, self)

    def class_edges(self) -> np.ndarray:
        """Edges ``(-inf, s_1, ..., s_{N-1}, inf)`` of the N class intervals."""
        return np.concatenate(([-np.inf], self.split_points, [np.inf]))

    def to_dict(self) -> dict:
        return {
            "split_points": [float(x) for x in self.split_points],
            "has_seedling_class": bool(self.has_seedling_class),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "SizeGrid":
        return cls(np.asarray(d["split_points"], dtype=float),
                   bool(d.get("has_seedling_class", False)))

    def __eq__(self, other):
        if not isinstance(other, SizeGrid):
            return NotImplemented
        return (self.has_seedling_class == other.has_seedling_class
                and np.array_equal(self.split_points, other.split_points))

    def __hash__(self):
        return hash((self.has_seedling_class, self.split_points.tobytes()))


def _inverted_cdf_splits(sorted_values: np.ndarray, n_classes: int) -> np.ndarray:
    m = sorted_values.size
    k = np.arange(1, n_classes)
    idx = np.ceil(k * m / n_classes).astype(int) - 1
    splits = np.unique(sorted_values[idx])
    # a split at the sample maximum would leave the top class empty
    return splits[splits < sorted_values[-1]]


def build_quantile_grid(values: Iterable[float], n_classes: int,
                        seedling: bool | str = "auto") -> SizeGrid:
    """Split points at the ``k/N`` sample quantiles of ``values``.

    Quantiles use the inverted-CDF definition, so with distinct values the
    class counts differ by at most one.  When ``seedling`` is true (or
    ``"auto"`` and the sample has exact zeros next to positive values),
    class 1 is the zero class and the remaining ``N-1`` classes split the
    positive values.
    """
    v = np.asarray(list(values) if not isinstance(values, np.ndarray) else values,
                   dtype=float).ravel()
    if v.size == 0:
        raise DataError("no values to build a grid from")
    if n_classes < 2:
        raise DataError("n_classes must be at least 2")
    if not np.all(np.isfinite(v)):
        raise DataError("grid values must be finite")

    if seedling == "auto":
        seedling = bool(np.any(v == 0.0) and np.any(v > 0.0) and v.min() >= 0.0)

    if seedling:
        pos = np.sort(v[v > 0.0])
        if pos.size == 0:
            raise DataError("grid degenerate: no positive sizes next to seedlings")
        n_pos_classes = n_classes - 1
        if np.unique(pos).size < n_pos_classes:
            raise DataError(
                f"grid degenerate: {np.unique(pos).size} distinct positive values "
                f"for {n_pos_classes} non-seedling classes")
        splits = np.concatenate(([0.0], _inverted_cdf_splits(pos, n_pos_classes)))
    else:
        srt = np.sort(v)
        if np.unique(srt).size < n_classes:
            raise DataError(
                f"grid degenerate: {np.unique(srt).size} distinct values for "
                f"{n_classes} classes")
        splits = _inverted_cdf_splits(srt, n_classes)

    if splits.size + 1 < n_classes:
        warnings.warn(
            f"tied quantiles collapsed the grid from {n_classes} to "
            f"{splits.size + 1} classes", stacklevel=2)
    return SizeGrid(splits, has_seedling_class=bool(seedling))


def integer_grid(n_classes: int) -> SizeGrid:
    """Grid for data already recorded as integer classes ``1..N``."""
    return SizeGrid(np.arange(1, n_classes) + 0.5, has_seedling_class=False)


def discretize(z, grid: SizeGrid):
    """Class of ``z``: one plus the number of split points strictly below it.

    A value equal to a split point therefore lands in the lower class.
    Works elementwise on arrays and returns a python ``int`` for scalars.
    """
    cls = np.searchsorted(grid.split_points, np.asarray(z, dtype=float), side="left") + 1
    cls = np.clip(cls, 1, grid.n_classes)
    if np.ndim(cls) == 0:
        return int(cls)
    return cls.astype(np.int64)


@dataclass
class Dataset:
    """Column-oriented table of individual records.

    ``offspring[r, j-1]`` is the number of recruits of row ``r`` landing in
    class ``j``.  ``z_next`` is NaN for individuals that died.
    """

    ids: list
    z: np.ndarray
    survived: np.ndarray
    z_next: np.ndarray
    offspring: np.ndarray
    grid: SizeGrid
    env: np.ndarray | None = None
    covariates: np.ndarray | None = None
    covariate_names: tuple = ()
    z_class: np.ndarray = None
    z_next_class: np.ndarray = None

    def __post_init__(self):
        n = len(self.ids)
        if n == 0:
            raise DataError("no records")
        self.z = np.asarray(self.z, dtype=float)
        self.survived = np.asarray(self.survived, dtype=np.int64)
        self.z_next = np.asarray(self.z_next, dtype=float)
        self.offspring = np.asarray(self.offspring, dtype=np.int64).reshape(n, -1)
        for name in ("z", "survived", "z_next"):
            if getattr(self, name).shape != (n,):
                raise DataError(f"column {name} has the wrong length")
        if self.offspring.shape[1] != self.grid.n_classes:
            raise DataError(
                f"{self.offspring.shape[1]} offspring columns for a "
                f"{self.grid.n_classes}-class grid")
        if np.any(self.offspring < 0):
            raise DataError("negative offspring count")
        if not np.all(np.isin(self.survived, (0, 1))):
            raise DataError("survival must be 0 or 1")
        alive = self.survived == 1
        if self.z_next_class is None and np.any(alive & ~np.isfinite(self.z_next)):
            raise DataError("survivor without a size at t+1")
        self.z_next = np.where(alive, self.z_next, np.nan)
        if self.z_class is None:
            self.z_class = discretize(self.z, self.grid)
        if self.z_next_class is None:
            zn = np.where(alive, self.z_next, 0.0)
            self.z_next_class = np.where(alive, discretize(zn, self.grid), 0)
        self.z_class = np.asarray(self.z_class, dtype=np.int64).reshape(n)
        self.z_next_class = np.asarray(self.z_next_class, dtype=np.int64).reshape(n)
        if np.any((self.z_next_class == 0) != ~alive):
            raise DataError("survived = 0 must coincide with z_next_class = 0")
        if self.env is not None:
            self.env = np.asarray(self.env, dtype=object).reshape(n)
        if self.covariates is not None:
            self.covariates = np.asarray(self.covariates, dtype=float).reshape(n, -1)
            self.covariate_names = tuple(self.covariate_names)
        else:
            self.covariates = np.zeros((n, 0))
            self.covariate_names = ()

    @property
    def n(self) -> int:
        return len(self.ids)

    @property
    def n_classes(self) -> int:
        return self.grid.n_classes

    @property
    def env_levels(self) -> list:
        if self.env is None:
            return []
        return sorted(set(self.env.tolist()), key=str)

    @property
    def records(self) -> list[IndividualRecord]:
        out = []
        for r in range(self.n):
            counts = {j + 1: int(c) for j, c in enumerate(self.offspring[r]) if c}
            out.append(IndividualRecord(
                id=str(self.ids[r]),
                z_continuous=float(self.z[r]),
                z_class=int(self.z_class[r]),
                survived=int(self.survived[r]),
                z_next_class=int(self.z_next_class[r]),
                offspring=counts,
                env_label=None if self.env is None else self.env[r],
                covariates=tuple(float(x) for x in self.covariates[r]),
                z_next_continuous=(float(self.z_next[r]) if self.survived[r] else None),
            ))
        return out

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(
            ids=[self.ids[i] for i in np.arange(self.n)[idx]],
            z=self.z[idx],
            survived=self.survived[idx],
            z_next=self.z_next[idx],
            offspring=self.offspring[idx],
            grid=self.grid,
            env=None if self.env is None else self.env[idx],
            covariates=self.covariates[idx],
            covariate_names=self.covariate_names,
            z_class=self.z_class[idx],
            z_next_class=self.z_next_class[idx],
        )


# ---------------------------------------------------------------------------
# CSV ingestion
# ---------------------------------------------------------------------------

DEFAULT_SCHEMA = {
    "columns": {
        "id": "id",
        "z": "z_t",
        "survived": "s",
        "z_next": "z_next",
        "env": None,
    },
    "offspring_prefix": "y_",
    "covariates": [],
    "n_classes": None,
    "grid": "quantile",
    "seedling": "auto",
    "offspring_path": None,
    "offspring_columns": {"parent_id": "parent_id", "class": "class"},
}


def _load_schema(schema_config) -> dict:
    cfg = json.loads(json.dumps(DEFAULT_SCHEMA))
    if schema_config is None:
        return cfg
    if isinstance(schema_config, (str, os.PathLike)):
        with open(schema_config, encoding="utf-8") as fh:
            schema_config = json.load(fh)
    for key, value in schema_config.items():
        if isinstance(value, dict) and isinstance(cfg.get(key), dict):
            cfg[key].update(value)
        else:
            cfg[key] = value
    return cfg


def _parse_float(text, row, column):
    try:
        val = float(text)
    except (TypeError, ValueError):
        raise DataError(f"not a number: {text!r}", row=row, column=column) from None
    if not math.isfinite(val):
        raise DataError(f"non-finite value {text!r}", row=row, column=column)
    return val


def _parse_count(text, row, column):
    text = (text or "").strip()
    if text == "":
        return 0
    try:
        val = float(text)
    except ValueError:
        raise DataError(f"offspring count is not a number: {text!r}",
                        row=row, column=column) from None
    if val < 0:
        raise DataError("negative offspring count", row=row, column=column)
    if val != int(val):
        raise DataError(f"offspring count is not an integer: {text!r}",
                        row=row, column=column)
    return int(val)


def grid_sidecar_path(path) -> str:
    return os.fspath(path) + ".grid.json"


def read_dataset(path, schema_config=None, grid: SizeGrid | None = None) -> Dataset:
    """Read a CSV in the individual-record layout.

    Required columns are id, size at ``t``, survival and size at ``t+1``
    (blank for the dead); offspring come either as wide ``y_1..y_N`` columns
    or from a long-format file of ``(parent_id, class)`` rows.  The grid is,
    in order of preference: the ``grid`` argument, a ``<path>.grid.json``
    sidecar, the schema's ``grid`` entry.
    """
    cfg = _load_schema(schema_config)
    cols = cfg["columns"]
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames
        rows = list(reader)
    if not header or not rows:
        raise DataError("no records")

    for role in ("id", "z", "survived", "z_next"):
        if cols[role] not in header:
            raise DataError(f"missing required column {cols[role]!r}")
    env_col = cols.get("env")
    if env_col is not None and env_col not in header:
        raise DataError(f"missing required column {env_col!r}")
    for c in cfg["covariates"]:
        if c not in header:
            raise DataError(f"missing required column {c!r}")

    prefix = cfg["offspring_prefix"]
    y_cols = {}
    for h in header:
        if h.startswith(prefix) and h[len(prefix):].isdigit():
            y_cols[int(h[len(prefix):])] = h
    long_path = cfg.get("offspring_path")
    if y_cols:
        n_classes = max(y_cols)
        if sorted(y_cols) != list(range(1, n_classes + 1)):
            raise DataError("offspring columns must run y_1..y_N without gaps")
    elif long_path is not None:
        n_classes = cfg.get("n_classes")
        if not n_classes:
            raise DataError("n_classes is required with long-format offspring")
    else:
        raise DataError(f"missing required column {prefix}1 (or an offspring_path)")
    if cfg.get("n_classes") and int(cfg["n_classes"]) != n_classes:
        raise DataError(
            f"schema says {cfg['n_classes']} classes but the file has {n_classes}")

    n = len(rows)
    ids, z, s, zn = [], np.empty(n), np.empty(n, dtype=np.int64), np.full(n, np.nan)
    off = np.zeros((n, n_classes), dtype=np.int64)
    env = [] if env_col is not None else None
    covs = np.empty((n, len(cfg["covariates"])))
    for r, row in enumerate(rows, start=1):
        k = r - 1
        ids.append(row[cols["id"]])
        z[k] = _parse_float(row[cols["z"]], r, cols["z"])
        s_text = (row[cols["survived"]] or "").strip()
        if s_text not in ("0", "1", "0.0", "1.0"):
            raise DataError(f"survival must be 0 or 1, got {s_text!r}",
                            row=r, column=cols["survived"])
        s[k] = int(float(s_text))
        zn_text = (row[cols["z_next"]] or "").strip()
        if s[k] == 1:
            if zn_text == "":
                raise DataError("survivor without a size at t+1",
                                row=r, column=cols["z_next"])
            zn[k] = _parse_float(zn_text, r, cols["z_next"])
        for j, h in y_cols.items():
            off[k, j - 1] = _parse_count(row[h], r, h)
        if env is not None:
            label = (row[env_col] or "").strip()
            if label == "":
                raise DataError("missing environment label", row=r, column=env_col)
            env.append(label)
        for c_i, c in enumerate(cfg["covariates"]):
            covs[k, c_i] = _parse_float(row[c], r, c)

    if long_path is not None:
        _add_long_offspring(long_path, cfg["offspring_columns"], ids, off)

    if grid is None and os.path.exists(grid_sidecar_path(path)):
        with open(grid_sidecar_path(path), encoding="utf-8") as fh:
            grid = SizeGrid.from_dict(json.load(fh))
    if grid is None:
        spec = cfg["grid"]
        if spec == "quantile":
            grid = build_quantile_grid(z, n_classes, seedling=cfg["seedling"])
        elif spec == "integer":
            grid = integer_grid(n_classes)
        else:
            grid = SizeGrid(np.asarray(spec, dtype=float),
                            has_seedling_class=bool(cfg["seedling"] is True))
    if grid.n_classes != n_classes:
        raise DataError(
            f"grid has {grid.n_classes} classes but offspring cover {n_classes}")

    return Dataset(ids=ids, z=z, survived=s, z_next=zn, offspring=off, grid=grid,
                   env=None if env is None else np.array(env, dtype=object),
                   covariates=covs, covariate_names=tuple(cfg["covariates"]))


def _add_long_offspring(path, columns, ids, off):
    index = {pid: k for k, pid in enumerate(ids)}
    n_classes = off.shape[1]
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for c in columns.values():
            if reader.fieldnames is None or c not in reader.fieldnames:
                raise DataError(f"missing required column {c!r} in {path}")
        for r, row in enumerate(reader, start=1):
            pid = row[columns["parent_id"]]
            if pid not in index:
                raise DataError(f"recruit assigned to unknown parent {pid!r}",
                                row=r, column=columns["parent_id"])
            j = _parse_count(row[columns["class"]], r, columns["class"])
            if not 1 <= j <= n_classes:
                raise DataError(f"recruit class {j} outside 1..{n_classes}",
                                row=r, column=columns["class"])
            off[index[pid], j - 1] += 1


def write_dataset(dataset: Dataset, path, write_grid: bool = True) -> None:
    """Write the wide CSV layout (plus class columns and a grid sidecar)."""
    N = dataset.n_classes
    header = ["id", "z_t", "s", "z_next", "z_class", "z_next_class"]
    header += [f"y_{j}" for j in range(1, N + 1)]
    if dataset.env is not None:
        header.append("year")
    header += list(dataset.covariate_names)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in range(dataset.n):
            row = [dataset.ids[r], repr(float(dataset.z[r])), int(dataset.survived[r]),
                   "" if dataset.survived[r] == 0 else repr(float(dataset.z_next[r])),
                   int(dataset.z_class[r]), int(dataset.z_next_class[r])]
            row += [int(c) for c in dataset.offspring[r]]
            if dataset.env is not None:
                row.append(dataset.env[r])
            row += [repr(float(c)) for c in dataset.covariates[r]]
            w.writerow(row)
    if write_grid:
        with open(grid_sidecar_path(path), "w", encoding="utf-8") as fh:
            json.dump(dataset.grid.to_dict(), fh, indent=1)


def schema_for(dataset: Dataset) -> dict:
    """Schema config matching :func:`write_dataset` output."""
    cols = dict(DEFAULT_SCHEMA["columns"])
    if dataset.env is not None:
        cols["env"] = "year"
    return {"columns": cols, "covariates": list(dataset.covariate_names)}


def records_to_dataset(records: Sequence[IndividualRecord], grid: SizeGrid) -> Dataset:
    """Assemble a dataset from already-classified records."""
    if not records:
        raise DataError("no records")
    n, N = len(records), grid.n_classes
    off = np.zeros((n, N), dtype=np.int64)
    for k, rec in enumerate(records):
        for j, c in rec.offspring.items():
            off[k, j - 1] = c
    env = [rec.env_label for rec in records]
    has_env = [e is not None for e in env]
    if any(has_env) and not all(has_env):
        raise DataError("environment label present for some records only")
    return Dataset(
        ids=[rec.id for rec in records],
        z=np.array([rec.z_continuous for rec in records]),
        survived=np.array([rec.survived for rec in records]),
        z_next=np.array([np.nan if rec.z_next_continuous is None
                         else rec.z_next_continuous for rec in records]),
        offspring=off,
        grid=grid,
        env=np.array(env, dtype=object) if all(has_env) else None,
        covariates=np.array([rec.covariates for rec in records], dtype=float).reshape(n, -1),
        z_class=np.array([rec.z_class for rec in records]),
        z_next_class=np.array([rec.z_next_class for rec in records]),
    )
