"""Count-matrix preprocessing for single-cell style data.

Reads are downsampled to a common depth per cell, lowly expressed or
low-variance genes are filtered out, and surviving genes are scaled to
unit variance.  A selected gene set can then be widened with its most
correlated companions.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import DataMatrix, _frozen, make_rng
from .errors import EmptyResult, InvalidData


@dataclass(frozen=True)
class CountMatrix:
    counts: np.ndarray
    gene_names: tuple
    cell_ids: tuple
    dropped: tuple = field(default=())  # cells removed by downsampling

    def __post_init__(self):
        c = np.asarray(self.counts)
        if c.ndim != 2:
            raise InvalidData("counts must be 2-D")
        if c.size and (not np.issubdtype(c.dtype, np.integer)):
            if not np.all(np.isfinite(c)) or np.any(c != np.round(c)):
                raise InvalidData("counts must be integers")
        c = _frozen(c, np.int64)
        if c.size and c.min() < 0:
            raise InvalidData("counts must be nonnegative")
        genes = tuple(str(g) for g in self.gene_names)
        cells = tuple(str(s) for s in self.cell_ids)
        if len(genes) != c.shape[1] or len(set(genes)) != len(genes):
            raise InvalidData("gene_names must be unique, one per column")
        if len(cells) != c.shape[0] or len(set(cells)) != len(cells):
            raise InvalidData("cell_ids must be unique, one per row")
        object.__setattr__(self, "counts", c)
        object.__setattr__(self, "gene_names", genes)
        object.__setattr__(self, "cell_ids", cells)
        object.__setattr__(self, "dropped", tuple(str(s) for s in self.dropped))


def downsample_reads(c: CountMatrix, depth: int, seed: int) -> CountMatrix:
    """Draw ``depth`` reads per cell without replacement.

    Cells with fewer than ``depth`` reads are dropped; their ids are listed
    in ``dropped`` on the result.
    """
    if depth < 0:
        raise ValueError("depth must be >= 0")
    rng = make_rng(seed)
    totals = c.counts.sum(axis=1)
    keep = np.flatnonzero(totals >= depth)
    out = np.empty((keep.size, c.counts.shape[1]), dtype=np.int64)
    for j, i in enumerate(keep):
        out[j] = rng.multivariate_hypergeometric(c.counts[i], depth)
    dropped = tuple(c.cell_ids[i] for i in np.flatnonzero(totals < depth))
    return CountMatrix(out, c.gene_names, [c.cell_ids[i] for i in keep], dropped=dropped)


def filter_and_normalize(c: CountMatrix, mean_min: float, std_min: float,
                         feature_whitelist=None) -> DataMatrix:
    """Keep genes with mean >= mean_min and std >= std_min, scale to unit variance.

    Only the variance is changed (no centering), so values stay
    nonnegative.  Standard deviations use the N-1 denominator.  The
    result's metadata lists ``kept`` and ``dropped`` genes.
    """
    if mean_min < 0 or std_min < 0:
        raise ValueError("thresholds must be >= 0")
    x = c.counts.astype(float)
    mean = x.mean(axis=0)
    sd = x.std(axis=0, ddof=1) if x.shape[0] > 1 else np.zeros(x.shape[1])
    keep = (mean >= mean_min) & (sd >= std_min) & (sd > 0)
    if feature_whitelist is not None:
        allowed = set(str(g) for g in feature_whitelist)
        keep &= np.array([g in allowed for g in c.gene_names], dtype=bool)
    idx = np.flatnonzero(keep)
    if idx.size == 0:
        raise EmptyResult("no gene passed the filters")
    names = [c.gene_names[j] for j in idx]
    meta = {"kept": names, "dropped": [g for j, g in enumerate(c.gene_names) if not keep[j]],
            "scaling": "unit variance, not centered"}
    return DataMatrix(x[:, idx] / sd[idx], names, c.cell_ids, metadata=meta)


def expand_correlated(m: DataMatrix, selected, k: int):
    """Selected features plus each one's ``k`` most correlated other features.

    ``selected`` holds feature names or column indices; names are returned.
    Order: the selection first, then additions in order of discovery.
    Equal correlations are broken by lower column index.
    """
    if k < 0:
        raise ValueError("k must be >= 0")
    pos = {n: j for j, n in enumerate(m.feature_names)}
    idx = []
    for s in selected:
        j = s if isinstance(s, (int, np.integer)) else pos.get(str(s))
        if j is None or not 0 <= j < m.n_features:
            raise KeyError(f"unknown feature {s!r}")
        idx.append(int(j))
    if not idx:
        raise ValueError("selection is empty")
    out = list(dict.fromkeys(idx))
    if k:
        x = m.values - m.values.mean(axis=0)
        norms = np.sqrt((x ** 2).sum(axis=0))
        seen = set(out)
        for j in list(out):
            with np.errstate(invalid="ignore", divide="ignore"):
                r = (x.T @ x[:, j]) / (norms * norms[j])
            r = np.where(np.isfinite(r), r, -np.inf)
            r[j] = -np.inf
            for t in np.argsort(-r, kind="stable")[:k]:
                if r[t] == -np.inf:
                    break
                if t not in seen:
                    seen.add(int(t))
                    out.append(int(t))
    return [m.feature_names[j] for j in out]
