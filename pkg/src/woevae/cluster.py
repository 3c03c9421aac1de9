"""Automatic labelling of the latent space by repeated Ward bisection.

Starting from one pending group holding every point, each group is split in
two by Ward agglomeration. The split is kept only when both halves have more
than ``n_min`` members and their centroids lie more than ``rho`` apart; kept
halves go back into the queue, rejected groups become final clusters.
"""
from __future__ import annotations

import csv
import json
import logging
from collections import deque
from dataclasses import asdict, dataclass, field

import numpy as np

from . import kernels

log = logging.getLogger(__name__)


class DegenerateSplit(ValueError):
    """Raised when a group cannot be bisected (all points coincide)."""


@dataclass(frozen=True)
class LabelingConfig:
    n_min: int = 50
    rho: float = 0.25
    subsample_cap: int = 2000
    seed: int = 0

    def __post_init__(self):
        if self.n_min < 1:
            raise ValueError("n_min must be at least 1")
        if not self.rho > 0:
            raise ValueError("rho must be positive")
        if self.subsample_cap < 2:
            raise ValueError("subsample_cap must be at least 2")

    @classmethod
    def for_size(cls, n: int, **overrides) -> "LabelingConfig":
        """Defaults scaled to the data: n_min = max(50, 0.5% of n)."""
        kw = {"n_min": max(50, int(0.005 * n))}
        kw.update(overrides)
        return cls(**kw)


@dataclass
class Bisection:
    labels: np.ndarray      # 0/1 per point
    centroids: np.ndarray   # (2, d_z), over all points

    @property
    def sizes(self) -> tuple[int, int]:
        n1 = int((self.labels == 0).sum())
        return n1, len(self.labels) - n1

    @property
    def distance(self) -> float:
        return float(np.linalg.norm(self.centroids[0] - self.centroids[1]))


def ward_bisect(points: np.ndarray, subsample_cap: int = 2000, seed: int = 0) -> Bisection:
    """Two-cluster cut of the Ward dendrogram.

    Above ``subsample_cap`` points, Ward runs on a seeded uniform subsample
    and the other points join the nearer of the two subsample centroids.
    """
    P = np.ascontiguousarray(points, dtype=np.float64)
    m = len(P)
    if m < 2:
        raise DegenerateSplit("need at least two points to bisect")
    if np.all(P == P[0]):
        raise DegenerateSplit("all points are identical")
    if m > subsample_cap:
        rng = np.random.default_rng(seed)
        sub = np.sort(rng.choice(m, size=subsample_cap, replace=False))
        sub_lab = kernels.ward_two_clusters(P[sub])
        cents = np.stack([P[sub][sub_lab == c].mean(axis=0) for c in (0, 1)])
        labels = kernels.nearest_centroid(P, np.ascontiguousarray(cents)).astype(np.int8)
        labels[sub] = sub_lab
    else:
        labels = kernels.ward_two_clusters(P)
    cents = np.stack([P[labels == c].mean(axis=0) for c in (0, 1)])
    return Bisection(np.asarray(labels, dtype=np.int8), cents)


@dataclass
class SplitRecord:
    size: int
    n1: int
    n2: int
    distance: float
    accepted: bool


@dataclass
class ClusterAssignment:
    labels: np.ndarray                  # cluster id (1..L) per point
    centroids: np.ndarray               # (L, d_z); row k-1 belongs to id k
    sizes: np.ndarray                   # (L,)
    splits: list[SplitRecord] = field(default_factory=list)

    @property
    def n_clusters(self) -> int:
        return len(self.sizes)

    @property
    def ids(self) -> list[int]:
        return list(range(1, self.n_clusters + 1))


def label_latent(points, cfg: LabelingConfig) -> ClusterAssignment:
    """Queue-driven bisecting labelling (first in, first out)."""
    P = np.ascontiguousarray(getattr(points, "points", points), dtype=np.float64)
    n = len(P)
    if n < cfg.n_min:
        raise ValueError(f"need at least n_min={cfg.n_min} points, got {n}")
    pending = deque([np.arange(n)])
    final: list[np.ndarray] = []
    splits: list[SplitRecord] = []
    attempt = 0
    while pending:
        item = pending.popleft()
        # both halves need more than n_min members
        if len(item) < 2 * cfg.n_min + 2:
            final.append(item)
            continue
        try:
            bis = ward_bisect(P[item], cfg.subsample_cap, seed=hash_seed(cfg.seed, attempt))
        except DegenerateSplit:
            final.append(item)
            continue
        finally:
            attempt += 1
        n1, n2 = bis.sizes
        dist = bis.distance
        ok = n1 > cfg.n_min and n2 > cfg.n_min and dist > cfg.rho
        splits.append(SplitRecord(len(item), n1, n2, dist, ok))
        if ok:
            pending.append(item[bis.labels == 0])
            pending.append(item[bis.labels == 1])
        else:
            final.append(item)

    final.sort(key=lambda idx: (-len(idx), int(idx.min())))
    labels = np.zeros(n, dtype=np.int64)
    for k, idx in enumerate(final, start=1):
        labels[idx] = k
    cents = np.stack([P[idx].mean(axis=0) for idx in final])
    sizes = np.array([len(idx) for idx in final], dtype=np.int64)
    log.info("labelled %d points into %d clusters (%d bisections)", n, len(final), len(splits))
    return ClusterAssignment(labels, cents, sizes, splits)


def hash_seed(master: int, index: int) -> int:
    return int(np.random.SeedSequence([master, index]).generate_state(1)[0])


def assign_new(asg: ClusterAssignment, new_points: np.ndarray) -> np.ndarray:
    """Nearest-centroid cluster id per point; ties go to the smaller id."""
    if asg.n_clusters == 0:
        raise ValueError("assignment has no clusters")
    P = np.ascontiguousarray(np.atleast_2d(new_points), dtype=np.float64)
    return kernels.nearest_centroid(P, np.ascontiguousarray(asg.centroids)) + 1


def write_assignment(csv_path, json_path, asg: ClusterAssignment, row_index,
                     cfg: LabelingConfig, extra: dict | None = None) -> None:
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        if extra and "config_sha256" in extra:
            fh.write(f"# config_sha256={extra['config_sha256']}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row_id", "cluster"])
        for r, c in zip(row_index, asg.labels):
            w.writerow([int(r), int(c)])
    doc = {
        "n_clusters": asg.n_clusters,
        "sizes": asg.sizes.tolist(),
        "centroids": [[repr(float(v)) for v in c] for c in asg.centroids],
        "config": asdict(cfg),
        "splits": [asdict(s) for s in asg.splits],
    }
    if extra:
        doc.update(extra)
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def read_assignment(csv_path) -> tuple[np.ndarray, np.ndarray]:
    """Returns ``(row_ids, cluster_ids)``."""
    with open(csv_path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(line for line in fh if not line.startswith("#")))[1:]
    arr = np.array([[int(a), int(b)] for a, b in rows], dtype=np.int64).reshape(-1, 2)
    return arr[:, 0], arr[:, 1]
