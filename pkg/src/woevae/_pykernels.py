"""Pure numpy versions of the compiled kernels in ``_kernels.pyx``."""
import numpy as np


def _pairwise_sq(points: np.ndarray) -> np.ndarray:
    m, d = points.shape
    D = np.zeros((m, m))
    # per-coordinate accumulation keeps the summation order of the C loop
    for t in range(d):
        diff = points[:, t][:, None] - points[:, t][None, :]
        D = D + diff * diff
    np.fill_diagonal(D, np.inf)
    return D


def ward_two_clusters(points: np.ndarray) -> np.ndarray:
    points = np.ascontiguousarray(points, dtype=np.float64)
    m = points.shape[0]
    if m < 2:
        raise ValueError("need at least two points")
    D = _pairwise_sq(points)
    size = np.ones(m)
    active = np.ones(m, dtype=bool)
    parent = np.arange(m)
    chain: list[int] = []
    remaining = m
    while remaining > 2:
        if not chain:
            chain.append(int(np.argmax(active)))
        a = chain[-1]
        row = np.where(active, D[a], np.inf)
        b = int(np.argmin(row))
        best = row[b]
        if len(chain) >= 2 and D[a, chain[-2]] <= best:
            b = chain[-2]
        if len(chain) >= 2 and b == chain[-2]:
            del chain[-2:]
            dab = D[a, b]
            sa, sb = size[a], size[b]
            upd = active.copy()
            upd[[a, b]] = False
            sk = size[upd]
            vals = ((sa + sk) * D[a, upd] + (sb + sk) * D[b, upd] - sk * dab) / (sa + sb + sk)
            D[b, upd] = vals
            D[upd, b] = vals
            size[b] = sa + sb
            active[a] = False
            parent[a] = b
            remaining -= 1
        else:
            chain.append(b)

    def find(i):
        while parent[i] != i:
            i = parent[i]
        return i

    root0 = find(0)
    return np.array([0 if find(i) == root0 else 1 for i in range(m)], dtype=np.int8)


def nearest_centroid(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    points = np.asarray(points, dtype=np.float64)
    centroids = np.asarray(centroids, dtype=np.float64)
    acc = np.zeros((len(points), len(centroids)))
    for t in range(points.shape[1]):
        diff = points[:, t][:, None] - centroids[:, t][None, :]
        acc = acc + diff * diff
    return np.argmin(acc, axis=1).astype(np.intp)
