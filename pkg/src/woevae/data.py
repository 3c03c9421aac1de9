"""Tabular credit data: schema, CSV ingestion, majority-class split and a
synthetic portfolio generator.

Cells are stored column-wise. A numeric column keeps float64 values plus a
boolean missing mask; a categorical column keeps an object array of tokens
(``None`` where missing). The mask is authoritative, so a missing numeric
cell never doubles as a number. ``Dataset.cell`` exposes the missing state
as the :data:`MISSING` marker.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

NUMERIC = "numeric"
CATEGORICAL = "categorical"


class _Missing:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "MISSING"

    def __reduce__(self):
        return (_Missing, ())


MISSING = _Missing()


class DataError(ValueError):
    """Base class for dataset construction problems."""


class LoadError(DataError):
    pass


class SplitError(DataError):
    pass


class ConfigError(DataError):
    pass


@dataclass(frozen=True)
class FeatureSchema:
    name: str
    kind: str = NUMERIC
    allows_missing: bool = True

    def __post_init__(self):
        if self.kind not in (NUMERIC, CATEGORICAL):
            raise ConfigError(f"feature {self.name!r}: unknown kind {self.kind!r}")


@dataclass(frozen=True)
class Column:
    values: np.ndarray
    missing: np.ndarray

    def __len__(self) -> int:
        return len(self.values)


class Dataset:
    """n rows of d typed cells plus a binary label per row."""

    def __init__(self, schema: Sequence[FeatureSchema], columns: Sequence[Column],
                 labels: Iterable[int]):
        self.schema = tuple(schema)
        names = [f.name for f in self.schema]
        if len(set(names)) != len(names):
            raise DataError(f"duplicate feature names in schema: {names}")
        if len(columns) != len(self.schema):
            raise DataError("one column per schema entry is required")
        self.labels = np.asarray(list(labels) if not isinstance(labels, np.ndarray) else labels,
                                 dtype=np.int8)
        if self.labels.ndim != 1:
            raise DataError("labels must be one-dimensional")
        if not np.isin(self.labels, (0, 1)).all():
            raise DataError("labels must be 0 or 1")
        n = len(self.labels)
        cols = []
        for f, col in zip(self.schema, columns):
            if len(col) != n:
                raise DataError(f"column {f.name!r} has {len(col)} cells, expected {n}")
            if f.kind == NUMERIC:
                vals = np.asarray(col.values, dtype=np.float64)
                if not np.isfinite(vals[~col.missing]).all():
                    raise DataError(f"column {f.name!r} holds non-finite values")
            else:
                vals = np.asarray(col.values, dtype=object)
            miss = np.asarray(col.missing, dtype=bool)
            if miss.any() and not f.allows_missing:
                raise DataError(f"column {f.name!r} does not allow missing values")
            vals.setflags(write=False)
            miss.setflags(write=False)
            cols.append(Column(vals, miss))
        self.columns = tuple(cols)
        self.labels.setflags(write=False)

    @property
    def n(self) -> int:
        return len(self.labels)

    @property
    def d(self) -> int:
        return len(self.schema)

    @property
    def names(self) -> list[str]:
        return [f.name for f in self.schema]

    def index_of(self, name: str) -> int:
        for j, f in enumerate(self.schema):
            if f.name == name:
                return j
        raise KeyError(name)

    def column(self, name: str) -> Column:
        return self.columns[self.index_of(name)]

    def cell(self, i: int, j: int):
        col = self.columns[j]
        if col.missing[i]:
            return MISSING
        v = col.values[i]
        return float(v) if self.schema[j].kind == NUMERIC else v

    def row(self, i: int) -> tuple:
        return tuple(self.cell(i, j) for j in range(self.d))

    def take(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=np.intp)
        cols = [Column(c.values[idx], c.missing[idx]) for c in self.columns]
        return Dataset(self.schema, cols, self.labels[idx])

    def __len__(self) -> int:
        return self.n

    def __repr__(self) -> str:
        return f"Dataset(n={self.n}, d={self.d}, defaults={int(self.labels.sum())})"


def dataset_from_rows(schema: Sequence[FeatureSchema], rows: Sequence[Sequence],
                      labels: Sequence[int]) -> Dataset:
    """Build a dataset from python cell values (floats, tokens, MISSING/None)."""
    n = len(rows)
    if len(labels) != n:
        raise DataError("labels length must equal number of rows")
    cols = []
    for j, f in enumerate(schema):
        miss = np.zeros(n, dtype=bool)
        if f.kind == NUMERIC:
            vals = np.full(n, np.nan)
        else:
            vals = np.empty(n, dtype=object)
        for i, r in enumerate(rows):
            if len(r) != len(schema):
                raise DataError(f"row {i} has {len(r)} cells, expected {len(schema)}")
            v = r[j]
            if v is MISSING or v is None:
                miss[i] = True
            elif f.kind == NUMERIC:
                vals[i] = float(v)
            else:
                vals[i] = str(v)
        cols.append(Column(vals, miss))
    return Dataset(schema, cols, labels)


# -- schema sidecar ---------------------------------------------------------

@dataclass(frozen=True)
class SchemaFile:
    features: tuple[FeatureSchema, ...]
    label_column: str
    missing_token: str = ""


def load_schema(path) -> SchemaFile:
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    try:
        feats = tuple(FeatureSchema(f["name"], f.get("kind", NUMERIC),
                                    bool(f.get("allows_missing", True)))
                      for f in raw["features"])
        return SchemaFile(feats, raw["label"], raw.get("missing_token", ""))
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"malformed schema file {path}: {exc}") from exc


def save_schema(path, schema: Sequence[FeatureSchema], label_column: str,
                missing_token: str = "") -> None:
    doc = {
        "label": label_column,
        "missing_token": missing_token,
        "features": [{"name": f.name, "kind": f.kind,
                      "allows_missing": f.allows_missing} for f in schema],
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


# -- CSV --------------------------------------------------------------------

def _data_lines(fh):
    # leading '#' lines carry provenance comments
    for line in fh:
        if line.startswith("#"):
            continue
        yield line


def load_csv(path, schema: Sequence[FeatureSchema], label_column: str,
             missing_token: str = "") -> Dataset:
    """Read a headed CSV into a Dataset.

    Empty cells and cells equal to ``missing_token`` become missing. Row
    numbers in error messages count data rows from 1 (the header is row 0).
    """
    schema = tuple(schema)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(_data_lines(fh))
        try:
            header = next(reader)
        except StopIteration:
            raise LoadError(f"{path}: empty file") from None
        pos = {name: k for k, name in enumerate(header)}
        wanted = [f.name for f in schema] + [label_column]
        absent = [w for w in wanted if w not in pos]
        if absent:
            raise LoadError(f"{path}: header lacks columns {absent}")
        idx = [pos[f.name] for f in schema]
        lab_idx = pos[label_column]
        width = len(header)

        rows, labels = [], []
        for rownum, rec in enumerate(reader, start=1):
            if not rec:
                continue
            if len(rec) != width:
                raise LoadError(f"{path}: row {rownum} has {len(rec)} cells, expected {width}")
            lab = rec[lab_idx].strip()
            if lab not in ("0", "1"):
                raise LoadError(f"{path}: row {rownum} label {lab!r} is not 0 or 1")
            cells = []
            for f, k in zip(schema, idx):
                tok = rec[k]
                if tok == "" or tok == missing_token:
                    if not f.allows_missing:
                        raise LoadError(f"{path}: row {rownum} column {f.name!r} is missing "
                                        "but the schema forbids missing values")
                    cells.append(MISSING)
                elif f.kind == NUMERIC:
                    try:
                        v = float(tok)
                    except ValueError:
                        raise LoadError(f"{path}: row {rownum} column {f.name!r}: "
                                        f"cannot parse {tok!r} as a number") from None
                    if not math.isfinite(v):
                        raise LoadError(f"{path}: row {rownum} column {f.name!r}: "
                                        f"non-finite value {tok!r}")
                    cells.append(v)
                else:
                    cells.append(tok)
            rows.append(cells)
            labels.append(int(lab))
    return dataset_from_rows(schema, rows, labels)


def write_csv(path, ds: Dataset, label_column: str = "y", missing_token: str = "",
              comment: str | None = None) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ds.names + [label_column])
        for i in range(ds.n):
            out = []
            for j in range(ds.d):
                v = ds.cell(i, j)
                if v is MISSING:
                    out.append(missing_token)
                else:
                    out.append(repr(v) if isinstance(v, float) else v)
            out.append(str(int(ds.labels[i])))
            w.writerow(out)


# -- split ------------------------------------------------------------------

@dataclass(frozen=True)
class SplitPlan:
    train_indices: np.ndarray
    eval_indices: np.ndarray
    seed: int

    def to_json(self) -> dict:
        return {"seed": self.seed, "train": self.train_indices.tolist(),
                "eval": self.eval_indices.tolist()}

    @classmethod
    def from_json(cls, doc: Mapping) -> "SplitPlan":
        return cls(np.asarray(doc["train"], dtype=np.intp),
                   np.asarray(doc["eval"], dtype=np.intp), int(doc["seed"]))


def split_majority(ds: Dataset, train_fraction: float = 0.3, seed: int = 0) -> SplitPlan:
    """Draw a uniform sample of the label-0 rows for VAE training; everything
    else (remaining majority rows and all minority rows) is the eval set."""
    if not 0.0 < train_fraction < 1.0:
        raise SplitError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    majority = np.flatnonzero(ds.labels == 0)
    if len(majority) == 0:
        raise SplitError("dataset has no majority-class (label 0) rows")
    k = int(math.floor(train_fraction * len(majority) + 1e-9))
    rng = np.random.default_rng(seed)
    train = np.sort(rng.choice(majority, size=k, replace=False))
    mask = np.ones(ds.n, dtype=bool)
    mask[train] = False
    return SplitPlan(train.astype(np.intp), np.flatnonzero(mask).astype(np.intp), seed)


# -- synthetic portfolios ---------------------------------------------------

@dataclass
class Segment:
    """One mixture component of a synthetic portfolio.

    ``numeric`` maps feature -> (mean, variance); ``categorical`` maps
    feature -> {token: probability}; ``missing`` maps feature -> probability
    that the cell is blanked out.
    """
    weight: float
    default_prob: float
    numeric: dict[str, tuple[float, float]] = field(default_factory=dict)
    categorical: dict[str, dict[str, float]] = field(default_factory=dict)
    missing: dict[str, float] = field(default_factory=dict)

    @classmethod
    def from_json(cls, doc: Mapping) -> "Segment":
        return cls(
            weight=float(doc["weight"]),
            default_prob=float(doc["default_prob"]),
            numeric={k: (float(v[0]), float(v[1])) for k, v in doc.get("numeric", {}).items()},
            categorical={k: {t: float(p) for t, p in v.items()}
                         for k, v in doc.get("categorical", {}).items()},
            missing={k: float(v) for k, v in doc.get("missing", {}).items()},
        )


def synth_generate(segments: Sequence[Segment], n: int, seed: int = 0) -> Dataset:
    if not segments:
        raise ConfigError("at least one segment is required")
    weights = np.array([s.weight for s in segments], dtype=np.float64)
    if abs(weights.sum() - 1.0) > 1e-9 or (weights < 0).any():
        raise ConfigError(f"segment weights must be non-negative and sum to 1, got {weights.sum()!r}")
    first = segments[0]
    num_names = list(first.numeric)
    cat_names = list(first.categorical)
    for s in segments[1:]:
        if list(s.numeric) != num_names or list(s.categorical) != cat_names:
            raise ConfigError("all segments must describe the same features in the same order")
    for s in segments:
        if not 0.0 <= s.default_prob <= 1.0:
            raise ConfigError(f"default_prob {s.default_prob} outside [0, 1]")
        for name, (_, var) in s.numeric.items():
            if var < 0:
                raise ConfigError(f"negative variance for {name!r}")
        for name, probs in s.categorical.items():
            if abs(sum(probs.values()) - 1.0) > 1e-9:
                raise ConfigError(f"category probabilities for {name!r} must sum to 1")
    any_missing = {name for s in segments for name, p in s.missing.items() if p > 0}
    schema = [FeatureSchema(nm, NUMERIC, nm in any_missing) for nm in num_names]
    schema += [FeatureSchema(nm, CATEGORICAL, nm in any_missing) for nm in cat_names]

    rng = np.random.default_rng(seed)
    seg = rng.choice(len(segments), size=n, p=weights) if n else np.zeros(0, dtype=np.intp)
    columns = []
    for nm in num_names:
        vals = np.empty(n)
        for k, s in enumerate(segments):
            sel = seg == k
            mean, var = s.numeric[nm]
            vals[sel] = rng.normal(mean, math.sqrt(var), size=int(sel.sum()))
        columns.append((nm, vals))
    for nm in cat_names:
        vals = np.empty(n, dtype=object)
        for k, s in enumerate(segments):
            sel = seg == k
            tokens = list(s.categorical[nm])
            probs = np.array([s.categorical[nm][t] for t in tokens])
            picks = rng.choice(len(tokens), size=int(sel.sum()), p=probs / probs.sum())
            vals[sel] = np.array(tokens, dtype=object)[picks] if len(picks) else []
        columns.append((nm, vals))
    cols = []
    for nm, vals in columns:
        miss = np.zeros(n, dtype=bool)
        if nm in any_missing:
            p = np.array([s.missing.get(nm, 0.0) for s in segments])[seg]
            miss = rng.random(n) < p
        if vals.dtype == object:
            vals[miss] = None
        else:
            vals[miss] = np.nan
        cols.append(Column(vals, miss))
    probs = np.array([s.default_prob for s in segments])[seg]
    labels = (rng.random(n) < probs).astype(np.int8)
    return Dataset(schema, cols, labels)
