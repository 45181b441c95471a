"""Ward hierarchical clustering, dendrogram cuts and the preservation check."""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np

from postclust import kernels
from postclust.dataset import DataMatrix


def _as_values(m) -> np.ndarray:
    return m.values if isinstance(m, DataMatrix) else np.asarray(m, dtype=np.float64)


def squared_distance_matrix(m) -> np.ndarray:
    """Squared Euclidean distances, accumulated column by column."""
    x = _as_values(m)
    if x.ndim == 1:
        x = x[:, None]
    n = x.shape[0]
    d2 = np.zeros((n, n))
    for g in range(x.shape[1]):
        diff = x[:, g][:, None] - x[:, g][None, :]
        d2 += diff * diff
    return d2


def euclidean_distance_matrix(m) -> np.ndarray:
    """Pairwise Euclidean distances between the rows of ``m``."""
    x = _as_values(m)
    if np.isnan(x).any():
        raise ValueError("distance matrix needs complete data")
    return np.sqrt(squared_distance_matrix(x))


@dataclass(frozen=True)
class Dendrogram:
    """Agglomeration history.

    ``merges`` holds ``(left, right, height)`` records in merge order.
    Leaves are nodes ``0..n-1``; merge ``s`` creates node ``n + s``.
    """

    merges: tuple
    leaf_count: int

    def to_dict(self) -> dict:
        return {
            "leaf_count": self.leaf_count,
            "merges": [
                {"left": int(a), "right": int(b), "height": float(h)} for a, b, h in self.merges
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _ward_from_squared(d2: np.ndarray, sizes=None, n_merges=None) -> Dendrogram:
    n = d2.shape[0]
    if n < 2:
        raise ValueError("need at least two observations to cluster")
    if sizes is None:
        sizes = np.ones(n)
    if n_merges is None:
        n_merges = n - 1
    left, right, h2 = kernels.ward_merges(d2, sizes, n_merges)
    heights = np.sqrt(h2)
    merges = tuple((int(a), int(b), float(h)) for a, b, h in zip(left, right, heights))
    return Dendrogram(merges, n)


def ward_linkage(d, sizes=None) -> Dendrogram:
    """Ward.D2 agglomeration from a Euclidean distance matrix.

    Lance-Williams updates run on squared distances; heights are reported on
    the distance scale.  Among equally cheap merges the pair with the
    lexicographically smallest ``(left id, right id)`` goes first.
    """
    d = np.asarray(d, dtype=np.float64)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise ValueError("distance matrix must be square")
    if d.shape[0] < 2:
        raise ValueError("need at least two observations to cluster")
    if (d < 0).any() or not np.allclose(d, d.T) or np.any(np.diag(d) != 0):
        raise ValueError("distance matrix must be symmetric, nonnegative, zero diagonal")
    if sizes is not None:
        sizes = np.asarray(sizes, dtype=np.float64)
        if sizes.shape != (d.shape[0],) or (sizes <= 0).any():
            raise ValueError("sizes must be positive, one per observation")
    return _ward_from_squared(d * d, sizes)


@dataclass(frozen=True)
class Partition:
    """Rows assigned to clusters ``1..K``.

    Cluster ids are ordered by the smallest row index they contain.
    """

    labels: np.ndarray
    members: tuple

    @property
    def K(self) -> int:
        return len(self.members)

    @property
    def n(self) -> int:
        return len(self.labels)

    def size(self, k: int) -> int:
        return len(self.members[k - 1])

    def rows(self, k: int) -> np.ndarray:
        """Sorted row indices of cluster ``k``."""
        if not 1 <= k <= self.K:
            raise ValueError(f"cluster id {k} out of range 1..{self.K}")
        return np.flatnonzero(self.labels == k)

    def mask(self, k: int) -> np.ndarray:
        return self.labels == k

    @classmethod
    def from_labels(cls, labels) -> "Partition":
        """Build from arbitrary hashable labels, renumbering by first row."""
        remap = {}
        out = np.empty(len(labels), dtype=np.int64)
        for i, lab in enumerate(labels):
            if lab not in remap:
                remap[lab] = len(remap) + 1
            out[i] = remap[lab]
        members = tuple(frozenset(np.flatnonzero(out == k).tolist()) for k in range(1, len(remap) + 1))
        return cls(out, members)


def cut(dend: Dendrogram, K: int) -> Partition:
    """Partition obtained by undoing the last ``K - 1`` merges.

    The dendrogram may be truncated, as long as it holds the first
    ``n - K`` merges.
    """
    n = dend.leaf_count
    if not 1 <= K <= n:
        raise ValueError(f"K must be between 1 and {n}, got {K}")
    if len(dend.merges) < n - K:
        raise ValueError("dendrogram holds too few merges for this cut")
    parent = list(range(n + len(dend.merges)))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for s, (a, b, _) in enumerate(dend.merges[: n - K]):
        parent[find(a)] = n + s
        parent[find(b)] = n + s
    return Partition.from_labels([find(i) for i in range(n)])


def clusters_preserved(reference: Partition, k: int, l: int, candidate: Partition) -> bool:
    """True when ``candidate`` contains clusters ``k`` and ``l`` of ``reference`` exactly."""
    want_k = reference.members[k - 1]
    want_l = reference.members[l - 1]
    found = set(candidate.members)
    return want_k in found and want_l in found


class Clusterer(Protocol):
    """Anything mapping a data matrix to a :class:`Partition`.

    Implementations may also provide ``preservation_flags`` (see
    :class:`WardClusterer`) to evaluate many one-column perturbations at once.
    """

    def __call__(self, m) -> Partition: ...


class WardClusterer:
    """Ward.D2 on Euclidean distances, cut at a fixed number of clusters."""

    def __init__(self, n_clusters: int):
        if n_clusters < 1:
            raise ValueError("n_clusters must be positive")
        self.n_clusters = n_clusters

    def __repr__(self):
        return f"WardClusterer(n_clusters={self.n_clusters})"

    def __call__(self, m) -> Partition:
        x = _as_values(m)
        n = x.shape[0]
        if self.n_clusters > n:
            raise ValueError(f"cannot cut {n} observations into {self.n_clusters} clusters")
        if n == 1:
            return Partition.from_labels([0])
        dend = _ward_from_squared(squared_distance_matrix(x), n_merges=n - self.n_clusters)
        return cut(dend, self.n_clusters)

    def preservation_flags(self, m, g: int, x_g, direction, shifts, k_rows, l_rows) -> np.ndarray:
        """Preservation of two row sets when column ``g`` becomes ``x_g + direction * shift``.

        Returns a boolean array with one entry per shift.  The other columns
        are taken from ``m`` unchanged.
        """
        x = _as_values(m)
        rest = np.delete(x, g, axis=1)
        base = squared_distance_matrix(rest) if rest.shape[1] else np.zeros((x.shape[0],) * 2)
        tags = np.zeros(x.shape[0], dtype=np.int8)
        tags[np.asarray(k_rows)] = 1
        tags[np.asarray(l_rows)] = 2
        flags = kernels.ward_preserved_many(
            base,
            np.asarray(x_g, dtype=np.float64),
            np.asarray(direction, dtype=np.float64),
            np.asarray(shifts, dtype=np.float64),
            tags,
            self.n_clusters,
        )
        return flags.astype(bool)


class FixedClusterer:
    """Returns the same partition whatever the data (every perturbation preserves)."""

    def __init__(self, partition: Partition):
        self.partition = partition

    def __call__(self, m) -> Partition:
        return self.partition

    def preservation_flags(self, m, g, x_g, direction, shifts, k_rows, l_rows) -> np.ndarray:
        return np.ones(len(shifts), dtype=bool)


def ward_partition(m, K: int) -> Partition:
    """Convenience: ``cut(ward_linkage(euclidean_distance_matrix(m)), K)``."""
    return WardClusterer(K)(m)


def partition_sizes(part: Partition) -> Sequence[int]:
    return [len(s) for s in part.members]
