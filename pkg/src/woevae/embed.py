"""Latent representations of customers from a trained encoder."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .vae import VaeParams, encode


@dataclass
class LatentEmbedding:
    points: np.ndarray    # (n, d_z) posterior means (or MC averages)
    log_vars: np.ndarray  # (n, d_z)
    row_index: np.ndarray  # dataset row of each embedded point

    def __post_init__(self):
        if self.points.shape != self.log_vars.shape or len(self.row_index) != len(self.points):
            raise ValueError("points, log_vars and row_index disagree in shape")
        if len(np.unique(self.row_index)) != len(self.row_index):
            raise ValueError("row_index must not repeat rows")

    def __len__(self) -> int:
        return len(self.points)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def subset(self, rows) -> "LatentEmbedding":
        """Restrict to the given dataset rows (in the given order)."""
        pos = {int(r): k for k, r in enumerate(self.row_index)}
        take = np.array([pos[int(r)] for r in rows], dtype=np.intp)
        return LatentEmbedding(self.points[take], self.log_vars[take], self.row_index[take])


def _rows(matrix, row_index):
    X = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
    if row_index is None:
        row_index = np.arange(len(X))
    return X, np.asarray(row_index, dtype=np.intp)


def embed_mean(p: VaeParams, matrix: np.ndarray, row_index=None) -> LatentEmbedding:
    """Posterior mean E[z|x] = mu_z for every row."""
    X, rows = _rows(matrix, row_index)
    m = encode(p, X)
    return LatentEmbedding(np.atleast_2d(m.mu), np.atleast_2d(m.log_var), rows)


def embed_mc(p: VaeParams, matrix: np.ndarray, samples: int = 100, seed: int = 0,
             row_index=None, eps: np.ndarray | None = None) -> LatentEmbedding:
    """Average of ``samples`` reparametrised draws per row.

    ``eps`` (shape ``(samples, n, d_z)``) overrides the seeded noise.
    """
    if samples < 1:
        raise ValueError("samples must be at least 1")
    X, rows = _rows(matrix, row_index)
    m = encode(p, X)
    mu, lv = np.atleast_2d(m.mu), np.atleast_2d(m.log_var)
    if eps is None:
        eps = np.random.default_rng(seed).standard_normal((samples,) + mu.shape)
    elif eps.shape != (samples,) + mu.shape:
        raise ValueError(f"eps must have shape {(samples,) + mu.shape}")
    sd = np.exp(0.5 * lv)
    acc = np.zeros_like(mu)
    for s in range(samples):
        acc += mu + sd * eps[s]
    return LatentEmbedding(acc / samples, lv, rows)


def write_embedding_csv(path, emb: LatentEmbedding, comment: str | None = None) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        dz = emb.dim
        w.writerow(["row_id"] + [f"z{j + 1}" for j in range(dz)]
                   + [f"logvar{j + 1}" for j in range(dz)])
        for r, z, lv in zip(emb.row_index, emb.points, emb.log_vars):
            w.writerow([int(r)] + [repr(float(v)) for v in z] + [repr(float(v)) for v in lv])


def read_embedding_csv(path) -> LatentEmbedding:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(line for line in fh if not line.startswith("#"))]
    header, body = rows[0], rows[1:]
    dz = (len(header) - 1) // 2
    arr = np.array([[float(v) for v in r] for r in body], dtype=np.float64).reshape(len(body), -1)
    return LatentEmbedding(arr[:, 1:1 + dz].copy(), arr[:, 1 + dz:].copy(),
                           arr[:, 0].astype(np.intp))
