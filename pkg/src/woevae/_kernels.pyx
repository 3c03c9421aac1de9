# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops: Ward agglomeration down to two clusters and
nearest-centroid assignment. Arithmetic order mirrors ``_pykernels`` so both
backends return identical results."""
import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY

cnp.import_array()


cdef inline Py_ssize_t _find(Py_ssize_t[::1] parent, Py_ssize_t i) noexcept nogil:
    while parent[i] != i:
        parent[i] = parent[parent[i]]
        i = parent[i]
    return i


def ward_two_clusters(const double[:, ::1] points):
    """Run Ward agglomeration (nearest-neighbour chain, Lance-Williams
    updates on squared Euclidean distances) until two clusters remain.

    Returns an int8 array of 0/1 labels; the cluster holding point 0 is 0.
    """
    cdef Py_ssize_t m = points.shape[0]
    cdef Py_ssize_t d = points.shape[1]
    if m < 2:
        raise ValueError("need at least two points")
    cdef double[:, ::1] D = np.empty((m, m), dtype=np.float64)
    cdef double[::1] size = np.ones(m, dtype=np.float64)
    cdef unsigned char[::1] active = np.ones(m, dtype=np.uint8)
    cdef Py_ssize_t[::1] parent = np.arange(m, dtype=np.intp)
    cdef Py_ssize_t[::1] chain = np.empty(m, dtype=np.intp)
    cdef Py_ssize_t i, j, k, t, a, b, prev, top = 0, remaining = m, nxt = 0
    cdef double acc, diff, best, dab, sa, sb, sk
    cdef cnp.ndarray[cnp.int8_t, ndim=1] labels = np.zeros(m, dtype=np.int8)

    with nogil:
        for i in range(m):
            D[i, i] = INFINITY
            for j in range(i + 1, m):
                acc = 0.0
                for t in range(d):
                    diff = points[i, t] - points[j, t]
                    acc = acc + diff * diff
                D[i, j] = acc
                D[j, i] = acc

        while remaining > 2:
            if top == 0:
                while not active[nxt]:
                    nxt += 1
                chain[0] = nxt
                top = 1
            a = chain[top - 1]
            b = -1
            best = INFINITY
            for k in range(m):
                if active[k] and k != a and D[a, k] < best:
                    best = D[a, k]
                    b = k
            if top >= 2:
                prev = chain[top - 2]
                if D[a, prev] <= best:
                    b = prev
            if top >= 2 and b == chain[top - 2]:
                top -= 2
                dab = D[a, b]
                sa = size[a]
                sb = size[b]
                for k in range(m):
                    if active[k] and k != a and k != b:
                        sk = size[k]
                        acc = ((sa + sk) * D[a, k] + (sb + sk) * D[b, k] - sk * dab) / (sa + sb + sk)
                        D[b, k] = acc
                        D[k, b] = acc
                size[b] = sa + sb
                active[a] = 0
                parent[a] = b
                remaining -= 1
            else:
                chain[top] = b
                top += 1

    cdef Py_ssize_t root0 = _find(parent, 0)
    for i in range(m):
        if _find(parent, i) != root0:
            labels[i] = 1
    return labels


def nearest_centroid(const double[:, ::1] points, const double[:, ::1] centroids):
    """Index of the nearest centroid per point; ties go to the lower index."""
    cdef Py_ssize_t n = points.shape[0]
    cdef Py_ssize_t k = centroids.shape[0]
    cdef Py_ssize_t d = points.shape[1]
    cdef Py_ssize_t i, c, t, arg
    cdef double acc, diff, best
    out = np.empty(n, dtype=np.intp)
    cdef Py_ssize_t[::1] o = out
    with nogil:
        for i in range(n):
            best = INFINITY
            arg = 0
            for c in range(k):
                acc = 0.0
                for t in range(d):
                    diff = points[i, t] - centroids[c, t]
                    acc = acc + diff * diff
                if acc < best:
                    best = acc
                    arg = c
            o[i] = arg
    return out
