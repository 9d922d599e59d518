"""Exact nearest-neighbour queries over fixed 3D point sets."""

import numpy as np

from lens_forge import kernels
from lens_forge._accel import use_numba


class KDTree:
    """Balanced KD-tree (median splits on the widest axis, bucketed leaves).

    ``query`` returns exact Euclidean distances: the result equals a brute
    force linear scan. An empty tree answers ``inf`` for every query.
    Ties go to the lowest point index.
    """

    def __init__(self, points, leafsize=16):
        points = np.array(points, dtype=np.float64, order="C").reshape(-1, 3)
        self.points = points
        self.points.setflags(write=False)
        self.leafsize = int(leafsize)
        if len(points):
            (self._perm, self._start, self._end, self._dim, self._split,
             self._left, self._right, self._lo, self._hi) = kernels.kd_build(points, self.leafsize)

    def __len__(self):
        return len(self.points)

    def query(self, queries):
        """Nearest distances and point indices for an ``(m, 3)`` query array."""
        queries = np.ascontiguousarray(queries, dtype=np.float64)
        single = queries.ndim == 1
        queries = queries.reshape(-1, 3)
        if len(self.points) == 0:
            dist = np.full(len(queries), np.inf)
            idx = np.full(len(queries), -1, dtype=np.int64)
        elif use_numba():
            dist, idx = kernels._kd_query_nb(self.points, self._perm, self._start, self._end, self._dim,
                                             self._split, self._left, self._right, queries)
        else:
            dist, idx = kernels._kd_query_np(self.points, self._perm, self._start, self._end, self._lo,
                                             self._hi, self._left, self._right, queries)
        if single:
            return float(dist[0]), int(idx[0])
        return dist, idx

    def nearest_distance(self, queries):
        d, _ = self.query(queries)
        return d


def build_index(points):
    return KDTree(points)
