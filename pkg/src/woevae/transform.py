"""Weight-of-Evidence binning and the comparison transformations.

A fitted :class:`TransformSpec` turns a :class:`~woevae.data.Dataset` into a
numeric matrix in [0, 1]. The WoE kinds replace each cell by its bin's
weight of evidence ``log((goods/G) / (bads/B))``; the other kinds encode the
raw table (numerics as-is, categoricals one-hot) and optionally standardise
or rotate it onto its principal axes. Every kind finishes with a per-column
min/max rescale so the sigmoid decoder mean can reproduce the inputs.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .data import CATEGORICAL, NUMERIC, Dataset

log = logging.getLogger(__name__)

WOE_COARSE = "woe_coarse"
WOE_FINE = "woe_fine"
PCA_FULL = "pca_full"
STANDARDIZE = "standardize"
RAW = "raw"
KINDS = (WOE_COARSE, WOE_FINE, PCA_FULL, STANDARDIZE, RAW)

FORMAT_VERSION = 1


class TransformError(ValueError):
    pass


class FitError(TransformError):
    pass


@dataclass(frozen=True)
class Bin:
    """One bin of a feature.

    Interval bins cover ``(lower, upper]``. Categorical bins hold a set of
    tokens. The missing bin holds neither.
    """
    goods: int
    bads: int
    woe: float = 0.0
    lower: float = -math.inf
    upper: float = math.inf
    categories: frozenset | None = None
    is_missing: bool = False

    @property
    def count(self) -> int:
        return self.goods + self.bads

    @property
    def bad_rate(self) -> float:
        return self.bads / self.count if self.count else 0.0

    def label(self) -> str:
        if self.is_missing:
            return "Missing"
        if self.categories is not None:
            return "{" + ",".join(sorted(self.categories)) + "}"
        return f"({self.lower!r}, {self.upper!r}]"


def woe_value(goods: int, bads: int, total_goods: int, total_bads: int, n_bins: int) -> float:
    """WoE of a bin from raw counts; 0.5-smoothed only when a cell is empty."""
    if total_goods <= 0 or total_bads <= 0:
        raise FitError("degenerate labels: WoE needs both goods and bads")
    if goods == 0 or bads == 0:
        g = (goods + 0.5) / (total_goods + 0.5 * n_bins)
        b = (bads + 0.5) / (total_bads + 0.5 * n_bins)
        return math.log(g / b)
    return math.log((goods / total_goods) / (bads / total_bads))


@dataclass(frozen=True)
class BinSpec:
    feature: str
    kind: str
    bins: tuple[Bin, ...]
    fallback: int | None = None  # index of the bin that receives unseen categories

    @property
    def totals(self) -> tuple[int, int]:
        return sum(b.goods for b in self.bins), sum(b.bads for b in self.bins)

    def regular_bins(self) -> list[int]:
        return [k for k, b in enumerate(self.bins) if not b.is_missing]

    def missing_bin(self) -> int | None:
        for k, b in enumerate(self.bins):
            if b.is_missing:
                return k
        return None

    def with_woe(self) -> "BinSpec":
        """Recompute every bin's WoE from its stored counts."""
        G, B = self.totals
        K = len(self.bins)
        return replace(self, bins=tuple(replace(b, woe=woe_value(b.goods, b.bads, G, B, K))
                                        for b in self.bins))

    def assign(self, values: np.ndarray, missing: np.ndarray) -> np.ndarray:
        """Bin index for every cell; raises on cells no bin accepts."""
        out = np.empty(len(values), dtype=np.intp)
        miss_k = self.missing_bin()
        if missing.any():
            if miss_k is None:
                raise TransformError(f"feature {self.feature!r}: missing value but the fitted "
                                     "table has no Missing bin")
            out[missing] = miss_k
        present = ~missing
        if self.kind == NUMERIC:
            regular = self.regular_bins()
            uppers = np.array([self.bins[k].upper for k in regular])
            pos = np.searchsorted(uppers[:-1], values[present].astype(np.float64), side="left")
            out[present] = np.asarray(regular, dtype=np.intp)[pos]
        else:
            lookup = {}
            for k, b in enumerate(self.bins):
                for tok in b.categories or ():
                    lookup[tok] = k
            idx = np.flatnonzero(present)
            for i in idx:
                tok = values[i]
                k = lookup.get(tok)
                if k is None:
                    if self.fallback is None:
                        raise TransformError(f"feature {self.feature!r}: unseen category "
                                             f"{tok!r} and no fallback bin")
                    k = self.fallback
                out[i] = k
        return out

    def woe_array(self) -> np.ndarray:
        return np.array([b.woe for b in self.bins])


def _count(bins_of_rows: np.ndarray, labels: np.ndarray, n_bins: int) -> tuple[np.ndarray, np.ndarray]:
    bads = np.bincount(bins_of_rows, weights=labels, minlength=n_bins).astype(np.int64)
    totals = np.bincount(bins_of_rows, minlength=n_bins).astype(np.int64)
    return totals - bads, bads


def _quantile_edges(x: np.ndarray, k: int) -> list[float]:
    if len(x) == 0:
        return []
    qs = np.quantile(x, np.arange(1, k) / k)
    edges = sorted(set(float(q) for q in qs))
    # an edge at the maximum would leave the last bin empty
    return [e for e in edges if e < x.max()]


def fit_fine_bins(ds: Dataset, feature: str, k: int = 20, edges: Sequence[float] | None = None,
                  categorical_fallback: bool = True) -> BinSpec:
    """Fine classing of one feature.

    Numeric features get ``k`` equal-frequency bins (right-closed intervals
    whose upper edges are the empirical quantiles), or the explicit inner
    ``edges`` when given. A Missing bin is added when missing cells occur.
    Categorical features get one bin per observed token, ordered by WoE;
    with ``categorical_fallback`` the most populous one receives unseen
    tokens.
    """
    if k < 2:
        raise FitError("k must be at least 2")
    j = ds.index_of(feature)
    f = ds.schema[j]
    col = ds.columns[j]
    y = ds.labels.astype(np.int64)
    G = int((y == 0).sum())
    B = int((y == 1).sum())
    if G == 0 or B == 0:
        raise FitError("degenerate labels: WoE needs both goods and bads")
    present = ~col.missing
    bins: list[Bin] = []
    if f.kind == NUMERIC:
        x = col.values[present]
        cuts = sorted(float(e) for e in edges) if edges is not None else _quantile_edges(x, k)
        lowers = [-math.inf] + cuts
        uppers = cuts + [math.inf]
        pos = np.searchsorted(np.asarray(cuts), x, side="left")
        g, b = _count(pos, y[present], len(uppers))
        for lo, hi, gg, bb in zip(lowers, uppers, g, b):
            bins.append(Bin(int(gg), int(bb), lower=lo, upper=hi))
        fallback = None
    else:
        toks = col.values[present]
        cats = sorted(set(toks))
        code = {t: c for c, t in enumerate(cats)}
        pos = np.fromiter((code[t] for t in toks), dtype=np.intp, count=len(toks))
        g, b = _count(pos, y[present], len(cats))
        bins = [Bin(int(gg), int(bb), categories=frozenset([t])) for t, gg, bb in zip(cats, g, b)]
        fallback = None
    if col.missing.any():
        ym = y[col.missing]
        bins.insert(0, Bin(int((ym == 0).sum()), int((ym == 1).sum()), is_missing=True))
    spec = BinSpec(feature, f.kind, tuple(bins)).with_woe()
    if f.kind == CATEGORICAL:
        missing = [bn for bn in spec.bins if bn.is_missing]
        regular = sorted((bn for bn in spec.bins if not bn.is_missing),
                         key=lambda bn: (bn.woe, min(bn.categories)))
        ordered = tuple(missing + regular)
        if categorical_fallback and regular:
            biggest = max(range(len(regular)), key=lambda r: (regular[r].count, -r))
            fallback = len(missing) + biggest
        spec = BinSpec(feature, f.kind, ordered, fallback)
    return spec


def _merge_pair(a: Bin, b: Bin) -> Bin:
    if a.categories is not None:
        return Bin(a.goods + b.goods, a.bads + b.bads, categories=a.categories | b.categories)
    return Bin(a.goods + b.goods, a.bads + b.bads, lower=a.lower, upper=b.upper)


def coarse_merge(spec: BinSpec, max_bins: int = 5, min_share: float = 0.05,
                 on_merge=None) -> BinSpec:
    """Greedy coarse classing.

    Repeatedly merges the adjacent pair of regular bins whose WoE values are
    closest, until at most ``max_bins`` regular bins remain and each holds at
    least ``min_share`` of all observations. While only the share constraint
    is violated, the smallest offending bin is merged into its closer
    neighbour. The Missing bin is never merged and does not count towards
    ``max_bins``. ``on_merge(left, right, merged)`` is called for every
    executed merge.
    """
    if max_bins < 1:
        raise ValueError("max_bins must be at least 1")
    G, B = spec.totals
    n = G + B
    miss_k = spec.missing_bin()
    missing = [spec.bins[miss_k]] if miss_k is not None else []
    regular = [spec.bins[k] for k in spec.regular_bins()]
    fb_owner = None
    if spec.fallback is not None:
        fb_cats = spec.bins[spec.fallback].categories
        fb_owner = next(iter(fb_cats)) if fb_cats else None

    def woes(bins):
        K = len(bins) + len(missing)
        return [woe_value(b.goods, b.bads, G, B, K) for b in bins]

    while len(regular) > 1:
        w = woes(regular)
        gaps = [abs(w[i + 1] - w[i]) for i in range(len(regular) - 1)]
        if len(regular) > max_bins:
            i = min(range(len(gaps)), key=lambda t: (gaps[t], t))
        else:
            small = [t for t, b in enumerate(regular) if b.count < min_share * n]
            if not small:
                break
            t = min(small, key=lambda s: (regular[s].count, s))
            if t == 0:
                i = 0
            elif t == len(regular) - 1:
                i = t - 1
            else:
                i = t - 1 if gaps[t - 1] <= gaps[t] else t
        merged = _merge_pair(regular[i], regular[i + 1])
        if on_merge is not None:
            on_merge(regular[i], regular[i + 1], merged)
        regular[i:i + 2] = [merged]

    bins = tuple(missing + regular)
    fallback = None
    if fb_owner is not None:
        fallback = next(k for k, b in enumerate(bins)
                        if b.categories is not None and fb_owner in b.categories)
    return BinSpec(spec.feature, spec.kind, bins, fallback).with_woe()


@dataclass(frozen=True)
class WoeTable:
    specs: tuple[BinSpec, ...]
    total_goods: int
    total_bads: int

    def __getitem__(self, feature: str) -> BinSpec:
        for s in self.specs:
            if s.feature == feature:
                return s
        raise KeyError(feature)

    @property
    def features(self) -> list[str]:
        return [s.feature for s in self.specs]


def woe_fit(ds: Dataset, k: int = 20, coarse: bool = True, max_bins: int = 5,
            min_share: float = 0.05, edges: dict[str, Sequence[float]] | None = None) -> WoeTable:
    y = ds.labels
    G, B = int((y == 0).sum()), int((y == 1).sum())
    if G == 0 or B == 0:
        raise FitError("degenerate labels: WoE needs both goods and bads")
    specs = []
    for f in ds.schema:
        spec = fit_fine_bins(ds, f.name, k, (edges or {}).get(f.name))
        if coarse:
            spec = coarse_merge(spec, max_bins, min_share)
        specs.append(spec)
    return WoeTable(tuple(specs), G, B)


def woe_encode(table: WoeTable, ds: Dataset) -> np.ndarray:
    """Map every cell to its bin's WoE (no rescaling)."""
    out = np.empty((ds.n, len(table.specs)))
    for j, spec in enumerate(table.specs):
        col = ds.column(spec.feature)
        out[:, j] = spec.woe_array()[spec.assign(col.values, col.missing)]
    return out


# -- raw encoding / standardize / PCA --------------------------------------

@dataclass(frozen=True)
class RawEncoding:
    """Numeric features pass through, categoricals become one-hot blocks."""
    features: tuple[str, ...]
    kinds: tuple[str, ...]
    categories: tuple[tuple[str, ...], ...]  # empty for numeric features
    columns: tuple[str, ...]
    indicators: tuple[bool, ...] = ()  # numeric feature carries a missing-indicator column

    @classmethod
    def fit(cls, ds: Dataset, missing_indicators: bool = False) -> "RawEncoding":
        """With ``missing_indicators``, a numeric feature that has missing cells
        gets a 0/1 indicator column and its missing cells encode as 0."""
        cats, cols, ind = [], [], []
        for f, col in zip(ds.schema, ds.columns):
            if f.kind == NUMERIC:
                cats.append(())
                cols.append(f.name)
                flag = missing_indicators and bool(col.missing.any())
                ind.append(flag)
                if flag:
                    cols.append(f"{f.name}=<missing>")
            else:
                toks = tuple(sorted(set(col.values[~col.missing])))
                if col.missing.any():
                    toks = toks + ("<missing>",)
                cats.append(toks)
                cols.extend(f"{f.name}={t}" for t in toks)
                ind.append(False)
        return cls(tuple(ds.names), tuple(f.kind for f in ds.schema), tuple(cats), tuple(cols),
                   tuple(ind))

    def encode(self, ds: Dataset) -> np.ndarray:
        out = np.zeros((ds.n, len(self.columns)))
        c = 0
        flags = self.indicators or (False,) * len(self.features)
        for name, kind, toks, flag in zip(self.features, self.kinds, self.categories, flags):
            col = ds.column(name)
            if kind == NUMERIC:
                if flag:
                    out[:, c] = np.where(col.missing, 0.0, col.values)
                    out[:, c + 1] = col.missing
                    c += 2
                    continue
                if col.missing.any():
                    raise TransformError(f"feature {name!r}: missing values cannot be passed "
                                         "through a raw encoding")
                out[:, c] = col.values
                c += 1
                continue
            code = {t: k for k, t in enumerate(toks)}
            for i in range(ds.n):
                tok = "<missing>" if col.missing[i] else col.values[i]
                k = code.get(tok)
                if k is None:
                    raise TransformError(f"feature {name!r}: unseen category {tok!r}")
                out[i, c + k] = 1.0
            c += len(toks)
        return out


def pca_components(x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Mean, component matrix (columns = axes, descending variance) and
    eigenvalues of the population covariance of ``x``."""
    mean = x.mean(axis=0)
    xc = x - mean
    cov = xc.T @ xc / len(x)
    vals, vecs = np.linalg.eigh(cov)
    order = np.argsort(vals)[::-1]
    vals, vecs = vals[order], vecs[:, order]
    for j in range(vecs.shape[1]):
        k = int(np.argmax(np.abs(vecs[:, j])))
        if vecs[k, j] < 0:
            vecs[:, j] = -vecs[:, j]
    return mean, vecs, vals


# -- TransformSpec ----------------------------------------------------------

@dataclass
class TransformSpec:
    kind: str
    woe: WoeTable | None = None
    encoding: RawEncoding | None = None
    mean: np.ndarray | None = None
    scale: np.ndarray | None = None       # standardize divisor
    components: np.ndarray | None = None  # pca_full
    col_min: np.ndarray = field(default_factory=lambda: np.zeros(0))
    col_max: np.ndarray = field(default_factory=lambda: np.zeros(0))
    columns: tuple[str, ...] = ()

    @property
    def output_dim(self) -> int:
        return len(self.columns)

    @property
    def constant_columns(self) -> np.ndarray:
        return ~(self.col_min < self.col_max)

    def pre_scale(self, ds: Dataset) -> np.ndarray:
        """Transformed matrix before the [0, 1] rescale."""
        if self.kind in (WOE_COARSE, WOE_FINE):
            return woe_encode(self.woe, ds)
        x = self.encoding.encode(ds)
        if self.kind == RAW:
            return x
        if self.kind == STANDARDIZE:
            return (x - self.mean) / self.scale
        return (x - self.mean) @ self.components

    def rescale(self, x: np.ndarray) -> np.ndarray:
        span = self.col_max - self.col_min
        const = self.constant_columns
        safe = np.where(const, 1.0, span)
        out = np.clip((x - self.col_min) / safe, 0.0, 1.0)
        out[:, const] = 0.5
        return out


def fit_transform(ds: Dataset, kind: str = WOE_COARSE, k: int = 20, max_bins: int = 5,
                  min_share: float = 0.05, edges: dict | None = None,
                  missing_indicators: bool = False) -> TransformSpec:
    """Fit a transform of the given kind. ``missing_indicators`` applies to the
    non-WoE kinds, which otherwise reject missing numeric cells."""
    if kind not in KINDS:
        raise FitError(f"unknown transform kind {kind!r}")
    if kind in (WOE_COARSE, WOE_FINE):
        table = woe_fit(ds, k, kind == WOE_COARSE, max_bins, min_share, edges)
        spec = TransformSpec(kind, woe=table, columns=tuple(table.features))
    else:
        enc = RawEncoding.fit(ds, missing_indicators)
        x = enc.encode(ds)
        spec = TransformSpec(kind, encoding=enc)
        if kind == STANDARDIZE:
            spec.mean = x.mean(axis=0)
            sd = x.std(axis=0)
            spec.scale = np.where(sd > 0, sd, 1.0)
            spec.columns = enc.columns
        elif kind == PCA_FULL:
            spec.mean, spec.components, _ = pca_components(x)
            spec.columns = tuple(f"pc{j + 1}" for j in range(x.shape[1]))
        else:
            spec.columns = enc.columns
    pre = spec.pre_scale(ds)
    if len(pre):
        spec.col_min, spec.col_max = pre.min(axis=0), pre.max(axis=0)
    else:
        spec.col_min = spec.col_max = np.zeros(pre.shape[1])
    if spec.constant_columns.any():
        log.warning("constant transformed columns map to 0.5: %s",
                    [c for c, z in zip(spec.columns, spec.constant_columns) if z])
    return spec


def apply_transform(spec: TransformSpec, ds: Dataset) -> np.ndarray:
    return spec.rescale(spec.pre_scale(ds))


# -- JSON -------------------------------------------------------------------

def _num(x: float) -> str:
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def _arr(a: np.ndarray | None):
    if a is None:
        return None
    return {"shape": list(a.shape), "data": [_num(float(v)) for v in np.ravel(a)]}


def _unarr(doc):
    if doc is None:
        return None
    return np.array([float(v) for v in doc["data"]], dtype=np.float64).reshape(doc["shape"])


def _bin_to_json(b: Bin) -> dict:
    doc = {"goods": b.goods, "bads": b.bads, "woe": _num(b.woe)}
    if b.is_missing:
        doc["missing"] = True
    elif b.categories is not None:
        doc["categories"] = sorted(b.categories)
    else:
        doc["lower"], doc["upper"] = _num(b.lower), _num(b.upper)
    return doc


def _bin_from_json(doc: dict) -> Bin:
    common = dict(goods=int(doc["goods"]), bads=int(doc["bads"]), woe=float(doc["woe"]))
    if doc.get("missing"):
        return Bin(is_missing=True, **common)
    if "categories" in doc:
        return Bin(categories=frozenset(doc["categories"]), **common)
    return Bin(lower=float(doc["lower"]), upper=float(doc["upper"]), **common)


def spec_to_json(spec: TransformSpec) -> dict:
    doc: dict = {"format": "woevae-transform", "version": FORMAT_VERSION, "kind": spec.kind,
                 "columns": list(spec.columns), "col_min": _arr(spec.col_min),
                 "col_max": _arr(spec.col_max)}
    if spec.woe is not None:
        doc["woe"] = {
            "total_goods": spec.woe.total_goods, "total_bads": spec.woe.total_bads,
            "features": [{"feature": s.feature, "kind": s.kind, "fallback": s.fallback,
                          "bins": [_bin_to_json(b) for b in s.bins]} for s in spec.woe.specs],
        }
    if spec.encoding is not None:
        e = spec.encoding
        doc["encoding"] = {"features": list(e.features), "kinds": list(e.kinds),
                           "categories": [list(c) for c in e.categories],
                           "columns": list(e.columns), "indicators": list(e.indicators)}
    for name in ("mean", "scale", "components"):
        a = getattr(spec, name)
        if a is not None:
            doc[name] = _arr(a)
    return doc


def spec_from_json(doc: dict) -> TransformSpec:
    if doc.get("format") != "woevae-transform":
        raise TransformError("not a transform file")
    if doc.get("version") != FORMAT_VERSION:
        raise TransformError(f"unsupported transform file version {doc.get('version')!r}")
    spec = TransformSpec(doc["kind"], columns=tuple(doc["columns"]),
                         col_min=_unarr(doc["col_min"]), col_max=_unarr(doc["col_max"]))
    if "woe" in doc:
        w = doc["woe"]
        specs = tuple(BinSpec(f["feature"], f["kind"], tuple(_bin_from_json(b) for b in f["bins"]),
                              f.get("fallback")) for f in w["features"])
        spec.woe = WoeTable(specs, int(w["total_goods"]), int(w["total_bads"]))
    if "encoding" in doc:
        e = doc["encoding"]
        spec.encoding = RawEncoding(tuple(e["features"]), tuple(e["kinds"]),
                                    tuple(tuple(c) for c in e["categories"]), tuple(e["columns"]),
                                    tuple(e.get("indicators", ())))
    for name in ("mean", "scale", "components"):
        if name in doc:
            setattr(spec, name, _unarr(doc[name]))
    return spec


def save_spec(path, spec: TransformSpec, extra: dict | None = None) -> None:
    doc = spec_to_json(spec)
    if extra:
        doc.update(extra)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_spec(path) -> TransformSpec:
    with open(path, encoding="utf-8") as fh:
        return spec_from_json(json.load(fh))
