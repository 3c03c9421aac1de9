"""Per-cluster risk statistics, salient dimensions and a small logistic PD
model for latent-space colour maps."""
from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

Z_99 = 2.57


def default_rate(labels, y, cluster_ids: Sequence[int] | None = None) -> dict[int, float]:
    """Share of defaults per cluster id. Requested ids without members are
    dropped with a warning."""
    labels = np.asarray(labels)
    y = np.asarray(y)
    if labels.shape != y.shape:
        raise ValueError("labels and y must have equal length")
    ids = sorted(set(labels.tolist())) if cluster_ids is None else list(cluster_ids)
    out = {}
    for c in ids:
        sel = labels == c
        n = int(sel.sum())
        if n == 0:
            warnings.warn(f"cluster {c} has no members; excluded", RuntimeWarning, stacklevel=2)
            continue
        out[int(c)] = int(y[sel].sum()) / n
    return out


def binomial_ci(dr: float, n: int, z: float = Z_99) -> tuple[float, float]:
    """Normal-approximation interval ``dr -/+ z*sqrt(dr(1-dr)/n)``, clipped to [0, 1]."""
    if n < 1:
        raise ValueError("n must be at least 1")
    if not 0.0 <= dr <= 1.0:
        raise ValueError("dr must lie in [0, 1]")
    half = z * math.sqrt(dr * (1.0 - dr) / n)
    return max(0.0, dr - half), min(1.0, dr + half)


@dataclass
class ClusterStats:
    cluster: int
    n: int
    defaults: int
    default_rate: float
    ci_low: float
    ci_high: float


@dataclass
class Salient:
    cluster: int
    feature: str
    df: float


@dataclass
class ClusterReport:
    clusters: list[ClusterStats]
    separated: np.ndarray = field(default_factory=lambda: np.zeros((0, 0), dtype=bool))
    salient: list[Salient] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "clusters": [{"cluster": c.cluster, "default_rate": repr(c.default_rate),
                          "ci_low": repr(c.ci_low), "ci_high": repr(c.ci_high),
                          "n": c.n, "defaults": c.defaults} for c in self.clusters],
            "separated": self.separated.astype(int).tolist(),
            "salient": [{"cluster": s.cluster, "feature": s.feature, "df": repr(s.df)}
                        for s in self.salient],
        }


def cluster_stats(labels, y, z: float = Z_99) -> list[ClusterStats]:
    labels = np.asarray(labels)
    y = np.asarray(y)
    rates = default_rate(labels, y)
    out = []
    for c, dr in rates.items():
        sel = labels == c
        n = int(sel.sum())
        lo, hi = binomial_ci(dr, n, z)
        out.append(ClusterStats(c, n, int(y[sel].sum()), dr, lo, hi))
    return out


def overlap_matrix(clusters: Sequence[ClusterStats]) -> np.ndarray:
    """``sep[j, l]`` is True iff the two intervals are disjoint."""
    k = len(clusters)
    if k < 2:
        raise ValueError("need at least two clusters")
    sep = np.zeros((k, k), dtype=bool)
    for a in range(k):
        for b in range(a + 1, k):
            ca, cb = clusters[a], clusters[b]
            sep[a, b] = sep[b, a] = ca.ci_high < cb.ci_low or cb.ci_high < ca.ci_low
    return sep


@dataclass(frozen=True)
class SalientConfig:
    sd_multiplier: float = 1.0
    epsilon_out: float = 1e-9

    def __post_init__(self):
        if not self.sd_multiplier > 0:
            raise ValueError("sd_multiplier must be positive")


def difference_factors(features: np.ndarray, labels, cluster: int,
                       epsilon_out: float = 1e-9) -> tuple[np.ndarray, np.ndarray]:
    """Relative gap between in-cluster and out-of-cluster feature means.

    Returns ``(df, usable)``; features with ``|mu_out| < epsilon_out`` are
    unusable and carry NaN.
    """
    X = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels)
    inside = labels == cluster
    if not inside.any():
        raise ValueError(f"cluster {cluster} is empty")
    if inside.all():
        raise ValueError("a single cluster has no out-of-cluster patterns")
    mu_in = X[inside].mean(axis=0)
    mu_out = X[~inside].mean(axis=0)
    usable = np.abs(mu_out) >= epsilon_out
    df = np.full(X.shape[1], np.nan)
    df[usable] = (mu_in[usable] - mu_out[usable]) / mu_out[usable]
    return df, usable


def salient_dimensions(features: np.ndarray, labels, cfg: SalientConfig = SalientConfig(),
                       names: Sequence[str] | None = None) -> list[Salient]:
    """Features whose difference factor lies at least ``sd_multiplier``
    population standard deviations from the cluster's mean factor."""
    X = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels)
    ell = X.shape[1]
    if ell < 2:
        raise ValueError("need at least two features")
    names = list(names) if names is not None else [f"x{v + 1}" for v in range(ell)]
    ids = sorted(set(labels.tolist()))
    if len(ids) < 2:
        raise ValueError("salient dimensions need at least two clusters")
    out = []
    for c in ids:
        df, usable = difference_factors(X, labels, c, cfg.epsilon_out)
        if not usable.all():
            warnings.warn(f"cluster {c}: out-of-cluster mean near zero for "
                          f"{[names[v] for v in np.flatnonzero(~usable)]}; skipped",
                          RuntimeWarning, stacklevel=2)
        vals = df[usable]
        if len(vals) == 0:
            continue
        mu = vals.sum() / len(vals)
        sd = math.sqrt(((vals - mu) ** 2).sum() / len(vals))
        if sd == 0.0:
            continue
        lo, hi = mu - cfg.sd_multiplier * sd, mu + cfg.sd_multiplier * sd
        for v in np.flatnonzero(usable):
            if df[v] <= lo or df[v] >= hi:
                out.append(Salient(int(c), names[v], float(df[v])))
    return out


def build_report(labels, y, features: np.ndarray | None = None,
                 feature_names: Sequence[str] | None = None,
                 salient_cfg: SalientConfig = SalientConfig(), z: float = Z_99) -> ClusterReport:
    stats = cluster_stats(labels, y, z)
    sep = overlap_matrix(stats) if len(stats) >= 2 else np.zeros((1, 1), dtype=bool)
    sal = []
    if features is not None and len(stats) >= 2:
        sal = salient_dimensions(features, labels, salient_cfg, feature_names)
    return ClusterReport(stats, sep, sal)


# -- PD model ---------------------------------------------------------------

@dataclass
class LogisticModel:
    weights: np.ndarray
    intercept: float


def _sigmoid(t: np.ndarray) -> np.ndarray:
    out = np.empty_like(t)
    pos = t >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
    e = np.exp(t[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def fit_pd_logistic(features: np.ndarray, y, lr: float = 0.5, iterations: int = 2000) -> LogisticModel:
    """Full-batch gradient descent on the mean logistic loss."""
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if not np.isin(y, (0.0, 1.0)).all():
        raise ValueError("y must be binary")
    if not np.isfinite(X).all():
        raise ValueError("features must be finite")
    n, d = X.shape
    w = np.zeros(d)
    b = 0.0
    for it in range(iterations):
        t = X @ w + b
        p = _sigmoid(t)
        r = p - y
        w -= lr * (X.T @ r) / n
        b -= lr * float(r.mean())
        if it % 100 == 0 or it == iterations - 1:
            loss = float(np.mean(np.logaddexp(0.0, t) - y * t))
            if not math.isfinite(loss):
                raise FloatingPointError(f"non-finite logistic loss at iteration {it}")
    return LogisticModel(w, b)


def predict_pd(model: LogisticModel, features: np.ndarray) -> np.ndarray:
    p = _sigmoid(np.asarray(features, dtype=np.float64) @ model.weights + model.intercept)
    return np.clip(p, 1e-15, 1.0 - 1e-15)


def colormap_export(points: np.ndarray, pd: np.ndarray, path, source_tag: str,
                    comment: str | None = None) -> None:
    """CSV of latent coordinates with a PD estimate per point."""
    Z = np.atleast_2d(np.asarray(points, dtype=np.float64))
    pd = np.asarray(pd, dtype=np.float64)
    if len(Z) != len(pd):
        raise ValueError(f"{len(Z)} points but {len(pd)} probabilities")
    if not ((pd >= 0) & (pd <= 1)).all():
        raise ValueError("probabilities must lie in [0, 1]")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"z{j + 1}" for j in range(Z.shape[1])] + ["pd", "source_tag"])
        for z, p in zip(Z, pd):
            w.writerow([repr(float(v)) for v in z] + [repr(float(p)), source_tag])


def save_report(path, report: ClusterReport, extra: dict | None = None) -> None:
    doc = report.to_json()
    if extra:
        doc.update(extra)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")
