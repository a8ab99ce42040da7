"""Shared data model and the seeding contract.

Every container is a frozen dataclass whose arrays are marked read-only, so
instances can be shared freely between threads.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from typing import Mapping, Optional

import numpy as np

from .errors import InvalidData, ZeroVarianceColumn

SPARSITY_EPS = 1e-8
SEED_MASK = (1 << 64) - 1


def _frozen(a, dtype=None):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


def child_seed(seed: int, label) -> int:
    """Derive a 64-bit child seed from a parent seed and a stage label."""
    h = hashlib.blake2b(f"{int(seed) & SEED_MASK}/{label}".encode(), digest_size=8)
    return int.from_bytes(h.digest(), "little")


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed) & SEED_MASK))


@dataclass(frozen=True)
class DataMatrix:
    """N samples by D features.

    ``informative_mask`` and ``metadata`` are only filled by the synthetic
    generators; real data leaves them empty.
    """

    values: np.ndarray
    feature_names: tuple
    sample_ids: tuple
    true_labels: Optional[np.ndarray] = None
    informative_mask: Optional[np.ndarray] = None
    metadata: Mapping = field(default_factory=dict)

    def __post_init__(self):
        values = _frozen(self.values, float)
        if values.ndim != 2:
            raise InvalidData("values must be a 2-D array")
        n, d = values.shape
        if n < 2 or d < 1:
            raise InvalidData(f"need N >= 2 and D >= 1, got {n}x{d}")
        if not np.all(np.isfinite(values)):
            raise InvalidData("values contain non-finite entries")
        names = tuple(str(s) for s in self.feature_names)
        ids = tuple(str(s) for s in self.sample_ids)
        if len(names) != d or len(set(names)) != d:
            raise InvalidData("feature_names must be D unique strings")
        if len(ids) != n or len(set(ids)) != n:
            raise InvalidData("sample_ids must be N unique strings")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "feature_names", names)
        object.__setattr__(self, "sample_ids", ids)
        if self.true_labels is not None:
            labels = _frozen(self.true_labels, np.int64)
            if labels.shape != (n,):
                raise InvalidData("true_labels must have length N")
            if labels.min() < 0 or len(np.unique(labels)) != labels.max() + 1:
                raise InvalidData("true_labels must cover 0..K-1 with no gaps")
            object.__setattr__(self, "true_labels", labels)
        if self.informative_mask is not None:
            mask = _frozen(self.informative_mask, bool)
            if mask.shape != (d,):
                raise InvalidData("informative_mask must have length D")
            object.__setattr__(self, "informative_mask", mask)
        object.__setattr__(self, "metadata", dict(self.metadata))

    @classmethod
    def from_array(cls, values, feature_names=None, sample_ids=None, **kw):
        values = np.asarray(values, float)
        n, d = values.shape
        if feature_names is None:
            feature_names = [f"f{j}" for j in range(d)]
        if sample_ids is None:
            sample_ids = [f"s{i}" for i in range(n)]
        return cls(values, feature_names, sample_ids, **kw)

    @property
    def shape(self):
        return self.values.shape

    @property
    def n_samples(self):
        return self.values.shape[0]

    @property
    def n_features(self):
        return self.values.shape[1]

    @property
    def k_true(self):
        return None if self.true_labels is None else int(self.true_labels.max()) + 1

    def with_values(self, values, **changes):
        return replace(self, values=values, **changes)

    def select_features(self, idx):
        idx = np.asarray(idx, dtype=np.int64)
        mask = None if self.informative_mask is None else self.informative_mask[idx]
        return replace(
            self,
            values=self.values[:, idx],
            feature_names=[self.feature_names[j] for j in idx],
            informative_mask=mask,
        )


@dataclass(frozen=True)
class ClusterProposal:
    """Assignment of a row subsample to ``k_p`` proposed clusters.

    ``history`` is the optional iteration log of the producing algorithm
    (k-means inertia per iteration, or Ward merge heights).
    """

    row_indices: np.ndarray
    assignments: np.ndarray
    k_p: int
    history: Optional[np.ndarray] = None

    def __post_init__(self):
        rows = _frozen(self.row_indices, np.int64)
        assign = _frozen(self.assignments, np.int64)
        k = int(self.k_p)
        if rows.ndim != 1 or rows.shape != assign.shape:
            raise InvalidData("row_indices and assignments must be equal-length vectors")
        if len(np.unique(rows)) != rows.size:
            raise InvalidData("row_indices must be distinct")
        if k < 2:
            raise InvalidData("k_p must be >= 2")
        if assign.size and (assign.min() < 0 or assign.max() >= k):
            raise InvalidData("assignments must lie in [0, k_p)")
        object.__setattr__(self, "row_indices", rows)
        object.__setattr__(self, "assignments", assign)
        object.__setattr__(self, "k_p", k)
        if self.history is not None:
            object.__setattr__(self, "history", _frozen(self.history, float))

    def members(self, cluster):
        return self.row_indices[self.assignments == cluster]

    def cluster_sizes(self):
        return np.bincount(self.assignments, minlength=self.k_p)

    def occupied(self):
        return np.flatnonzero(self.cluster_sizes() > 0)


@dataclass(frozen=True)
class Separator:
    theta: np.ndarray
    pair: tuple
    objective_value: float
    nnz: int
    n_iter: int = 0

    def __post_init__(self):
        object.__setattr__(self, "theta", _frozen(self.theta, float))
        object.__setattr__(self, "pair", tuple(int(p) for p in self.pair))

    @staticmethod
    def count_nonzero(theta, eps=SPARSITY_EPS):
        return int(np.count_nonzero(np.abs(theta) > eps))


@dataclass(frozen=True)
class FeatureScores:
    """Ensemble feature scores.

    ``support_counts`` counts, per feature, the separators in which it was
    nonzero; ``n_pairs`` is the number of pairs visited and ``n_zero`` how
    many of them returned the all-zero separator.
    """

    g: np.ndarray
    proposals_used: int
    null_mean: Optional[float] = None
    null_std: Optional[float] = None
    z: Optional[np.ndarray] = None
    lambda_hat: Optional[float] = None
    support_counts: Optional[np.ndarray] = None
    n_pairs: int = 0
    n_zero: int = 0
    proposals: Optional[tuple] = None

    def __post_init__(self):
        object.__setattr__(self, "g", _frozen(self.g, float))
        if self.z is not None:
            object.__setattr__(self, "z", _frozen(self.z, float))
        if self.support_counts is not None:
            object.__setattr__(self, "support_counts", _frozen(self.support_counts, np.int64))


def standardize_columns(m: DataMatrix) -> DataMatrix:
    """Center every column and scale it to unit sample standard deviation."""
    x = m.values
    mean = x.mean(axis=0)
    centered = x - mean
    sd = np.sqrt((centered ** 2).sum(axis=0) / (x.shape[0] - 1))
    bad = np.flatnonzero((np.ptp(x, axis=0) == 0) | ~(sd > 0))
    if bad.size:
        raise ZeroVarianceColumn(int(bad[0]))
    return m.with_values(centered / sd)

