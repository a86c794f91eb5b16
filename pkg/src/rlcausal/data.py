"""Tabular ingestion and preprocessing.

CSV files are read per RFC 4180 (header row, quoted fields, UTF-8).
Preprocessing mirrors a fixed recipe: integer-encode categorical columns
by first appearance, drop near-duplicate columns via a correlation
threshold, then z-score everything. All steps are pure functions of
(raw data, config, seed), so repeated runs are bit-identical.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

logger = logging.getLogger(__name__)

KINDS = ("continuous", "categorical")


class IngestionError(ValueError):
    """Raised when a file cannot be turned into a Dataset."""


@dataclass(frozen=True)
class Variable:
    """One column: a name, a kind, and an optional short denotation tag."""

    name: str
    kind: str = "continuous"
    denotation: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown variable kind {self.kind!r}; expected one of {KINDS}")


@dataclass(frozen=True)
class VariableTable:
    """Ordered, uniquely named variables; the canonical column order."""

    variables: tuple[Variable, ...]

    def __post_init__(self):
        object.__setattr__(self, "variables", tuple(self.variables))
        names = [v.name for v in self.variables]
        if len(set(names)) != len(names):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise ValueError(f"duplicate variable names: {dupes}")

    @classmethod
    def from_names(cls, names: Iterable[str], kind: str = "continuous") -> "VariableTable":
        return cls(tuple(Variable(n, kind) for n in names))

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(v.name for v in self.variables)

    def __len__(self) -> int:
        return len(self.variables)

    def __iter__(self):
        return iter(self.variables)

    def __getitem__(self, i: int) -> Variable:
        return self.variables[i]

    def index(self, name: str) -> int:
        for i, v in enumerate(self.variables):
            if v.name == name:
                return i
        raise KeyError(f"no variable named {name!r}")

    def subset(self, keep: Iterable[int]) -> "VariableTable":
        return VariableTable(tuple(self.variables[i] for i in keep))


@dataclass(frozen=True)
class Dataset:
    """An m x d sample matrix plus its variable table.

    ``samples`` is float64 once categorical columns are encoded; straight
    out of :func:`load_csv` it may be an object array still holding raw
    category strings. Arrays are frozen after construction.
    """

    samples: np.ndarray
    variables: VariableTable
    dropped_rows: int = 0
    categorical_codes: Mapping[str, tuple[str, ...]] = field(default_factory=dict)
    standardized: bool = False
    constant_columns: tuple[str, ...] = ()

    def __post_init__(self):
        arr = np.asarray(self.samples)
        if arr.ndim != 2:
            raise ValueError(f"samples must be 2-D, got shape {arr.shape}")
        if arr.shape[1] != len(self.variables):
            raise ValueError(
                f"samples have {arr.shape[1]} columns but table lists {len(self.variables)}"
            )
        if arr.dtype != object:
            arr = arr.astype(np.float64)
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)
        object.__setattr__(self, "categorical_codes", dict(self.categorical_codes))

    @property
    def m(self) -> int:
        return self.samples.shape[0]

    @property
    def d(self) -> int:
        return self.samples.shape[1]

    @property
    def numeric(self) -> bool:
        return self.samples.dtype == np.float64

    def column(self, name: str) -> np.ndarray:
        return self.samples[:, self.variables.index(name)]


def _require_numeric(ds: Dataset, op: str) -> np.ndarray:
    if not ds.numeric:
        raise ValueError(f"{op} requires encoded numeric data; call encode_categoricals first")
    return ds.samples.astype(np.float64, copy=False)


# -- ingestion --------------------------------------------------------------


def _try_float(cell: str) -> float | None:
    try:
        return float(cell)
    except ValueError:
        return None


def load_csv(path: str | Path, schema: VariableTable | None = None) -> Dataset:
    """Read a CSV with a header row into a Dataset.

    Column kinds come from ``schema`` when given, otherwise a column is
    categorical iff any non-missing cell fails to parse as a number.
    Rows containing missing cells (empty strings or NaN) are dropped and
    counted in ``Dataset.dropped_rows``.
    """
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise IngestionError(f"{path}: file is empty") from None
            rows = list(reader)
    except OSError as exc:
        raise IngestionError(f"cannot read {path}: {exc}") from exc

    header = [h.strip() for h in header]
    if len(set(header)) != len(header):
        raise IngestionError(f"{path}: duplicate column names in header")
    if not rows:
        raise IngestionError(f"{path}: no data rows")

    n_cols = len(header)
    for i, row in enumerate(rows):
        if len(row) != n_cols:
            raise IngestionError(
                f"{path}: ragged data row {i + 1}: expected {n_cols} cells, got {len(row)}"
            )

    if schema is not None:
        if list(schema.names) != header:
            missing = [n for n in schema.names if n not in header]
            extra = [h for h in header if h not in schema.names]
            raise IngestionError(
                f"{path}: header does not match schema "
                f"(missing {missing or 'none'}, unexpected {extra or 'none'})"
            )

    # Parse cell by cell; a column is numeric iff every non-missing cell parses.
    parsed: list[list[float | str | None]] = []
    col_numeric = [True] * n_cols
    for row in rows:
        out: list[float | str | None] = []
        for c, cell in enumerate(row):
            if cell.strip() == "":
                out.append(None)
                continue
            value = _try_float(cell)
            if value is None:
                col_numeric[c] = False
                out.append(cell)
            elif np.isnan(value):
                out.append(None)
            else:
                out.append(value)
        parsed.append(out)

    kept: list[list[float | str]] = []
    dropped = 0
    for row in parsed:
        if any(cell is None for cell in row):
            dropped += 1
        else:
            kept.append(row)  # type: ignore[arg-type]
    if not kept:
        raise IngestionError(f"{path}: every row had missing cells ({dropped} dropped)")
    if dropped:
        logger.info("load_csv: dropped %d rows with missing cells from %s", dropped, path)

    if schema is not None:
        variables = schema
        for c, var in enumerate(schema):
            if var.kind == "continuous" and not col_numeric[c]:
                raise IngestionError(
                    f"{path}: column {var.name!r} declared continuous but has "
                    "non-numeric values"
                )
    else:
        variables = VariableTable(
            tuple(
                Variable(name, "continuous" if col_numeric[c] else "categorical")
                for c, name in enumerate(header)
            )
        )

    if all(col_numeric):
        samples = np.array(kept, dtype=np.float64)
    else:
        samples = np.empty((len(kept), n_cols), dtype=object)
        for r, row in enumerate(kept):
            for c, cell in enumerate(row):
                samples[r, c] = cell

    return Dataset(samples=samples, variables=variables, dropped_rows=dropped)


def load_schema(path: str | Path) -> VariableTable:
    """Read a JSON schema file listing variable names, kinds, and denotations."""
    with Path(path).open(encoding="utf-8") as fh:
        raw = json.load(fh)
    entries = raw["variables"] if isinstance(raw, dict) else raw
    variables = []
    for entry in entries:
        variables.append(
            Variable(
                name=entry["name"],
                kind=entry.get("kind", "continuous"),
                denotation=entry.get("denotation"),
            )
        )
    return VariableTable(tuple(variables))


# -- preprocessing ----------------------------------------------------------


@dataclass(frozen=True)
class PreprocessConfig:
    """Settings for the drop/filter/standardize pipeline."""

    target: str | None = None
    drop_columns: tuple[str, ...] = ()
    correlation_threshold: float = 0.95
    standardize: bool = True

    def __post_init__(self):
        if not 0.0 < self.correlation_threshold <= 1.0:
            raise ValueError("correlation_threshold must lie in (0, 1]")
        if self.target is not None and self.target in self.drop_columns:
            raise ValueError(f"target {self.target!r} cannot be in drop_columns")


def encode_categoricals(ds: Dataset) -> Dataset:
    """Replace string-valued columns with integer codes by first appearance.

    Numeric columns pass through untouched, including numeric columns whose
    declared kind is categorical (they are treated as pre-encoded). The
    category order backing each code is kept for decoding and reporting.
    """
    if ds.numeric:
        return ds
    d = ds.d
    out = np.empty((ds.m, d), dtype=np.float64)
    codes: dict[str, tuple[str, ...]] = dict(ds.categorical_codes)
    for c in range(d):
        col = ds.samples[:, c]
        if all(isinstance(v, float) for v in col):
            out[:, c] = col.astype(np.float64)
            continue
        mapping: dict[str, int] = {}
        encoded = np.empty(ds.m, dtype=np.float64)
        for r, raw in enumerate(col):
            key = str(raw)
            if key not in mapping:
                mapping[key] = len(mapping)
            encoded[r] = mapping[key]
        out[:, c] = encoded
        codes[ds.variables[c].name] = tuple(mapping)
    return replace(ds, samples=out, categorical_codes=codes)


def decode_column(ds: Dataset, name: str) -> list[str]:
    """Invert integer coding for one encoded categorical column."""
    categories = ds.categorical_codes.get(name)
    if categories is None:
        raise KeyError(f"column {name!r} has no stored category mapping")
    return [categories[int(v)] for v in ds.column(name)]


def correlation_matrix(ds: Dataset) -> np.ndarray:
    """Symmetric Pearson matrix with unit diagonal.

    Constant columns get correlation 0 against everything (flagged via
    logging) but keep the unit diagonal.
    """
    x = _require_numeric(ds, "correlation_matrix")
    if ds.m < 2:
        raise ValueError("correlation requires at least 2 samples")
    centered = x - x.mean(axis=0)
    norms = np.sqrt((centered**2).sum(axis=0))
    constant = norms == 0.0
    if constant.any():
        names = [ds.variables[i].name for i in np.flatnonzero(constant)]
        logger.warning("correlation_matrix: constant columns given corr 0: %s", names)
    safe = np.where(constant, 1.0, norms)
    unit = centered / safe
    corr = unit.T @ unit
    corr[constant, :] = 0.0
    corr[:, constant] = 0.0
    np.fill_diagonal(corr, 1.0)
    corr = np.clip(corr, -1.0, 1.0)
    return (corr + corr.T) / 2.0


def multicollinearity_filter(
    ds: Dataset, cfg: PreprocessConfig
) -> tuple[Dataset, list[str]]:
    """Drop the later column of every pair correlated beyond the threshold.

    Scanning is deterministic in canonical column order; the configured
    target is never dropped (a pair whose later member is the target is
    left intact).
    """
    corr = correlation_matrix(ds)
    target_idx = ds.variables.index(cfg.target) if cfg.target is not None else None
    kept: list[int] = []
    dropped: list[str] = []
    for j in range(ds.d):
        if j == target_idx:
            kept.append(j)
            continue
        collides = any(abs(corr[i, j]) > cfg.correlation_threshold for i in kept)
        if collides:
            dropped.append(ds.variables[j].name)
        else:
            kept.append(j)
    if not dropped:
        return ds, []
    filtered = replace(
        ds,
        samples=np.ascontiguousarray(ds.samples[:, kept]),
        variables=ds.variables.subset(kept),
    )
    return filtered, dropped


def standardize(ds: Dataset) -> Dataset:
    """Z-score every column (mean 0, sample std 1); constants become zeros.

    Idempotent: standardizing twice equals standardizing once. Constant
    columns are recorded in ``constant_columns``.
    """
    x = _require_numeric(ds, "standardize")
    if ds.m < 2:
        raise ValueError("standardize requires at least 2 samples")
    mean = x.mean(axis=0)
    std = x.std(axis=0, ddof=1)
    constant = std == 0.0
    flagged = tuple(ds.variables[i].name for i in np.flatnonzero(constant))
    if flagged:
        logger.warning("standardize: constant columns set to zero: %s", list(flagged))
    safe = np.where(constant, 1.0, std)
    z = (x - mean) / safe
    z[:, constant] = 0.0
    return replace(ds, samples=z, standardized=True, constant_columns=flagged)


def sample_batch(ds: Dataset, s: int, seed: int | np.random.Generator) -> np.ndarray:
    """Draw s rows without replacement and return them as a d x s matrix.

    Each variable becomes one sequence element carrying s features.
    Deterministic for an integer seed.
    """
    x = _require_numeric(ds, "sample_batch")
    if not 1 <= s <= ds.m:
        raise ValueError(f"batch size {s} out of range [1, {ds.m}]")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    rows = rng.choice(ds.m, size=s, replace=False)
    return np.ascontiguousarray(x[rows].T)


def dataco_schema_path() -> Path:
    """Path of the bundled 16-variable supply-chain schema file."""
    return Path(__file__).parent / "resources" / "dataco_table1.json"
