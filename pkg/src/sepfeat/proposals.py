"""Cluster proposals: row subsampling, k-means, Ward linkage."""
from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .core import ClusterProposal, DataMatrix, child_seed, make_rng
from .errors import BadCount, BadK

WARD_MAX_ROWS = 5000
ALGORITHMS = ("kmeans", "ward")


@dataclass(frozen=True)
class ProposalPolicy:
    n_subsample: int
    k_min: int
    k_max: int
    algorithm: str = "kmeans"
    t_proposals: int = 100

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}")
        if not 2 <= self.k_min <= self.k_max <= self.n_subsample:
            raise ValueError("need 2 <= k_min <= k_max <= n_subsample")
        if self.t_proposals < 1:
            raise ValueError("t_proposals must be >= 1")
        if self.algorithm == "ward" and self.n_subsample > WARD_MAX_ROWS:
            raise ValueError(f"ward proposals are capped at {WARD_MAX_ROWS} rows")

    def check(self, m: DataMatrix):
        if self.n_subsample > m.n_samples:
            raise BadCount(f"n_subsample={self.n_subsample} exceeds N={m.n_samples}")


def subsample_rows(m, n: int, seed: int) -> np.ndarray:
    """``n`` distinct row indices drawn uniformly, returned in ascending order."""
    n_rows = m.n_samples if isinstance(m, DataMatrix) else int(m)
    if n > n_rows:
        raise BadCount(f"cannot draw {n} rows from {n_rows}")
    if n < 1:
        raise BadCount("need at least one row")
    idx = make_rng(seed).choice(n_rows, size=n, replace=False)
    return np.sort(idx)


def _sq_dists(x, x_sq, centers):
    d = x_sq[:, None] - 2.0 * (x @ centers.T) + (centers ** 2).sum(axis=1)[None, :]
    np.maximum(d, 0.0, out=d)
    return d


def _kmeanspp(x, x_sq, k, rng):
    n = x.shape[0]
    chosen = [int(rng.integers(n))]
    closest = _sq_dists(x, x_sq, x[chosen])[:, 0]
    for _ in range(1, k):
        total = closest.sum()
        if total > 0:
            nxt = int(rng.choice(n, p=closest / total))
        else:
            # fewer distinct points than clusters
            rest = np.setdiff1d(np.arange(n), chosen)
            nxt = int(rng.choice(rest))
        chosen.append(nxt)
        closest = np.minimum(closest, _sq_dists(x, x_sq, x[nxt:nxt + 1])[:, 0])
    return x[chosen].copy()


def _repair_empty(x, labels, centers, k):
    counts = np.bincount(labels, minlength=k)
    for empty in np.flatnonzero(counts == 0):
        big = int(np.argmax(counts))
        members = np.flatnonzero(labels == big)
        d = ((x[members] - centers[big]) ** 2).sum(axis=1)
        far = members[int(np.argmax(d))]
        labels[far] = empty
        counts[big] -= 1
        counts[empty] = 1
    return labels


def _sse(x, labels, k):
    sse = 0.0
    centers = np.zeros((k, x.shape[1]))
    for c in range(k):
        pts = x[labels == c]
        centers[c] = pts.mean(axis=0)
        sse += ((pts - centers[c]) ** 2).sum()
    return sse, centers


def kmeans(points, k: int, seed: int, *, row_indices=None, max_iter=100, move_tol=1e-6) -> ClusterProposal:
    """Lloyd's algorithm from a single k-means++ start.

    ``history`` on the result logs the within-cluster sum of squares after
    every iteration; it is non-increasing.
    """
    x = np.asarray(points, float)
    n = x.shape[0]
    if not 2 <= k <= n:
        raise BadK(f"k={k} with {n} points")
    rng = make_rng(seed)
    x_sq = (x ** 2).sum(axis=1)
    centers = _kmeanspp(x, x_sq, k, rng)
    history = []
    labels = None
    for _ in range(max_iter):
        labels = np.argmin(_sq_dists(x, x_sq, centers), axis=1)
        labels = _repair_empty(x, labels, centers, k)
        sse, new_centers = _sse(x, labels, k)
        if history and sse > history[-1] * (1 + 1e-12) + 1e-12:
            raise AssertionError("k-means inertia increased")
        history.append(sse)
        shift = np.sqrt(((new_centers - centers) ** 2).sum(axis=1)).max()
        centers = new_centers
        if shift < move_tol:
            break
    rows = np.arange(n) if row_indices is None else np.asarray(row_indices)
    return ClusterProposal(rows, labels, k, np.array(history))


@numba.njit(cache=True, nogil=True)
def _ward_kernel(x, k):
    n = x.shape[0]
    dist = np.empty((n, n))
    for i in range(n):
        dist[i, i] = np.inf
        for j in range(i + 1, n):
            s = 0.0
            for d in range(x.shape[1]):
                v = x[i, d] - x[j, d]
                s += v * v
            dist[i, j] = 0.5 * s  # merge cost of two singletons
            dist[j, i] = 0.5 * s
    size = np.ones(n)
    alive = np.ones(n, np.bool_)
    parent = np.arange(n)
    nn = np.empty(n, np.int64)
    nn_d = np.empty(n)
    for i in range(n):
        best = -1
        bd = np.inf
        for j in range(n):
            if j != i and dist[i, j] < bd:
                bd = dist[i, j]
                best = j
        nn[i] = best
        nn_d[i] = bd
    heights = np.empty(max(n - k, 0))
    n_alive = n
    step = 0
    while n_alive > k:
        a = -1
        ad = np.inf
        for i in range(n):
            if alive[i] and nn_d[i] < ad:
                ad = nn_d[i]
                a = i
        b = nn[a]
        if b < a:
            a, b = b, a
        heights[step] = ad
        step += 1
        # merge b into a (Lance-Williams update for Ward)
        na = size[a]
        nb = size[b]
        dab = dist[a, b]
        for c in range(n):
            if not alive[c] or c == a or c == b:
                continue
            nc = size[c]
            v = ((na + nc) * dist[a, c] + (nb + nc) * dist[b, c] - nc * dab) / (na + nb + nc)
            dist[a, c] = v
            dist[c, a] = v
        size[a] = na + nb
        alive[b] = False
        n_alive -= 1
        for c in range(n):
            if parent[c] == b:
                parent[c] = a
        for c in range(n):
            if not alive[c]:
                continue
            if c == a or nn[c] == a or nn[c] == b:
                best = -1
                bd = np.inf
                for j in range(n):
                    if j != c and alive[j] and dist[c, j] < bd:
                        bd = dist[c, j]
                        best = j
                nn[c] = best
                nn_d[c] = bd
            elif dist[c, a] < nn_d[c] or (dist[c, a] == nn_d[c] and a < nn[c]):
                nn[c] = a
                nn_d[c] = dist[c, a]
    return parent, heights


def ward(points, k: int, *, row_indices=None) -> ClusterProposal:
    """Agglomerative clustering under Ward's criterion, cut at ``k`` clusters.

    Merge heights (increase in within-cluster sum of squares) are logged in
    ``history``.  Ties go to the lexicographically smallest cluster pair.
    """
    x = np.ascontiguousarray(points, dtype=float)
    n = x.shape[0]
    if not 2 <= k <= n:
        raise BadK(f"k={k} with {n} points")
    if n > WARD_MAX_ROWS:
        raise BadCount(f"ward is capped at {WARD_MAX_ROWS} rows")
    parent, heights = _ward_kernel(x, k)
    # number clusters by their smallest member
    _, labels = np.unique(parent, return_inverse=True)
    rows = np.arange(n) if row_indices is None else np.asarray(row_indices)
    return ClusterProposal(rows, labels, k, heights)


def draw_k(policy: ProposalPolicy, seed: int) -> int:
    return int(make_rng(seed).integers(policy.k_min, policy.k_max + 1))


def draw_proposal(m: DataMatrix, policy: ProposalPolicy, seed: int) -> ClusterProposal:
    """Subsample, draw K_p uniformly from [k_min, k_max], cluster."""
    policy.check(m)
    rows = subsample_rows(m, policy.n_subsample, child_seed(seed, "subsample"))
    k = draw_k(policy, child_seed(seed, "k"))
    pts = m.values[rows]
    if policy.algorithm == "kmeans":
        return kmeans(pts, k, child_seed(seed, "kmeans"), row_indices=rows)
    return ward(pts, k, row_indices=rows)
