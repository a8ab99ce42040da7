"""Metrics against planted ground truth and closed-form reference values."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist

from .core import ClusterProposal, DataMatrix, FeatureScores
from .errors import DegenerateMask, MissingLabels, ZeroDenominator


@dataclass(frozen=True)
class RocCurve:
    thresholds: np.ndarray  # descending; the first entry is +inf
    fpr: np.ndarray
    tpr: np.ndarray
    auroc: float


def _mask(truth, n=None):
    mask = np.asarray(truth, dtype=bool)
    if n is not None and mask.shape != (n,):
        raise DegenerateMask(f"mask length {mask.shape} does not match {n} scores")
    if mask.all() or not mask.any():
        raise DegenerateMask("mask needs at least one true and one false entry")
    return mask


def _scores(s):
    return s.g if isinstance(s, FeatureScores) else np.asarray(s, float)


def roc(scores, truth_mask) -> RocCurve:
    """ROC over all distinct thresholds, tied scores moving diagonally."""
    s = _scores(scores)
    mask = _mask(truth_mask, s.shape[0])
    order = np.argsort(-s, kind="stable")
    s, mask = s[order], mask[order]
    # last index of each group of equal scores
    ends = np.r_[np.flatnonzero(np.diff(s) != 0), s.size - 1]
    tp = np.cumsum(mask)[ends]
    fp = np.cumsum(~mask)[ends]
    tpr = np.r_[0.0, tp / mask.sum()]
    fpr = np.r_[0.0, fp / (~mask).sum()]
    thresholds = np.r_[np.inf, s[ends]]
    auroc = float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2))
    return RocCurve(thresholds, fpr, tpr, auroc)


def auroc(scores, truth_mask) -> float:
    return roc(scores, truth_mask).auroc


def false_negative_rate(selected, truth_mask) -> float:
    """Fraction of truly informative features missing from ``selected``."""
    mask = np.asarray(truth_mask, bool)
    hit = np.zeros_like(mask)
    hit[np.asarray(selected, dtype=np.int64)] = True
    return float((mask & ~hit).sum() / mask.sum())


def distance_correlation(m, subspace_mask) -> float:
    """Pearson correlation of squared pairwise distances, subspace vs full space."""
    x = m.values if isinstance(m, DataMatrix) else np.asarray(m, float)
    mask = np.asarray(subspace_mask, bool)
    if mask.shape != (x.shape[1],) or not mask.any():
        raise DegenerateMask("subspace mask must select at least one of the D features")
    if x.shape[0] < 2:
        raise DegenerateMask("need at least two samples")
    full = pdist(x, "sqeuclidean")
    if mask.all():
        return 1.0
    sub = pdist(x[:, mask], "sqeuclidean")
    return float(np.corrcoef(sub, full)[0, 1])


def cluster_entropy(proposal: ClusterProposal, true_labels) -> float:
    """Size-weighted entropy (nats) of the true labels inside each proposed cluster."""
    if true_labels is None:
        raise MissingLabels("true labels are required")
    labels = np.asarray(true_labels)
    rows = proposal.row_indices
    if rows.size and rows.max() >= labels.shape[0]:
        raise MissingLabels("labels do not cover every proposal row")
    lab = labels[rows]
    n = lab.size
    total = 0.0
    for c in proposal.occupied():
        _, counts = np.unique(lab[proposal.assignments == c], return_counts=True)
        p = counts / counts.sum()
        total += counts.sum() / n * float(-(p * np.log(p)).sum())
    return total


def weight_ratio(scores, truth_mask) -> float:
    """Mean score over informative features over mean score over the rest."""
    g = _scores(scores)
    mask = _mask(truth_mask, g.shape[0])
    den = g[~mask].mean()
    if den == 0:
        raise ZeroDenominator()
    return float(g[mask].mean() / den)


@dataclass(frozen=True)
class CountingEstimate:
    exact: float
    simplified: float

    @property
    def relative_gap(self):
        """|exact - simplified| relative to the exact value."""
        return abs(self.exact - self.simplified) / self.exact


def counting_oracle(k_true: int, k_p: int, d: int) -> CountingEstimate:
    """Signal-to-error vote ratio for one proposal with ``k_p`` clusters.

    Assumes every true cluster is split evenly into ``a = k_p / k_true``
    pure proposed clusters and that every separator selects one feature.
    ``exact`` keeps the finite-``a`` factor ``a / (a - 1)``; ``simplified``
    is its large-``a`` limit ``(D - D_s) / (2 k_true)``.
    """
    if not 2 <= k_true <= k_p:
        raise ValueError("need 2 <= k_true <= k_p")
    d_s = math.comb(k_true, 2)
    if d <= d_s:
        raise ValueError("d must exceed k_true (k_true - 1) / 2")
    a = k_p / k_true
    simplified = (d - d_s) / (2 * k_true)
    if a == 1:
        return CountingEstimate(math.inf, simplified)
    exact = k_p ** 2 * (d - d_s) / (2 * k_true ** 3 * a * (a - 1))
    return CountingEstimate(exact, simplified)


def measured_vote_ratio(scores: FeatureScores, truth_mask) -> float:
    """Per-feature support frequency, informative over uninformative.

    Each nonzero separator component is one vote; this is the empirical
    counterpart of :func:`counting_oracle`.
    """
    if scores.support_counts is None:
        raise ValueError("scores carry no support counts")
    mask = _mask(truth_mask, scores.support_counts.shape[0])
    c = scores.support_counts.astype(float)
    den = c[~mask].mean()
    if den == 0:
        raise ZeroDenominator("no votes on uninformative features")
    return float(c[mask].mean() / den)


def collapse_coordinates(d, d_s, n, ratio):
    """Scaling-plot coordinates ``x = D / (D_s ln N)`` and ``y = ratio sqrt(D_s) / D``."""
    return d / (d_s * math.log(n)), ratio * math.sqrt(d_s) / d


def collapse_spread(cells, x_min=5.0):
    """Largest relative vertical spread between per-N curves beyond ``x_min``.

    ``cells`` holds ``(D, D_s, N, weight_ratio)`` tuples.  Each N gives a
    curve in collapse coordinates.  At every grid point with ``x > x_min``
    the curves whose x-range covers it are evaluated, interpolating
    linearly in ``log x``, and the spread is ``(max - min) / mean``.
    Returns ``(max spread, list of (x, n_curves, spread))``.
    """
    curves = {}
    for d, d_s, n, r in cells:
        curves.setdefault(n, []).append(collapse_coordinates(d, d_s, n, r))
    curves = {n: sorted(c) for n, c in curves.items()}
    xs = sorted({x for c in curves.values() for x, _ in c if x > x_min})
    detail = []
    for x in xs:
        ys = []
        for c in curves.values():
            cx = np.array([p[0] for p in c])
            cy = np.array([p[1] for p in c])
            if cx[0] <= x <= cx[-1]:
                ys.append(float(np.interp(np.log(x), np.log(cx), cy)))
        ys = np.array(ys)
        spread = float((ys.max() - ys.min()) / ys.mean()) if ys.size > 1 else 0.0
        detail.append((x, int(ys.size), spread))
    worst = max((s for _, _, s in detail), default=0.0)
    return worst, detail


def inversions(values, increasing=True) -> int:
    """Number of adjacent steps that go the wrong way."""
    v = np.asarray(values, float)
    steps = np.diff(v)
    return int(np.sum(steps < 0) if increasing else np.sum(steps > 0))
