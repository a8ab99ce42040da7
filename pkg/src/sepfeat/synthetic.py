"""Synthetic benchmarks with planted pairwise informative features.

In the pairwise construction every pair of true clusters ``(l, m)`` owns one
feature, assigned in lexicographic pair order to the first ``D_s`` columns.
Along that feature cluster ``l`` is ``N(+delta/2, sigma^2)``, cluster ``m`` is
``N(-delta/2, sigma^2)`` and every other cluster is standard normal.  The
remaining columns carry no cluster signal.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .core import DataMatrix, child_seed, make_rng, standardize_columns
from .errors import SpecInvalid


def n_informative(k_true: int) -> int:
    return k_true * (k_true - 1) // 2


@dataclass(frozen=True)
class PairwiseMixtureSpec:
    k_true: int = 7
    d_total: int = 861
    separation: float = 6.0
    sigma_in: float = 1.0
    n_per_cluster: int = 200
    noise_theta: float = 0.0
    seed: int = 0
    cluster_sizes: tuple | None = field(default=None)

    @property
    def d_s(self):
        return n_informative(self.k_true)

    @property
    def s_ratio(self):
        return self.separation / self.sigma_in

    def sizes(self):
        if self.cluster_sizes is not None:
            return tuple(int(s) for s in self.cluster_sizes)
        return (int(self.n_per_cluster),) * self.k_true

    def validate(self):
        if self.k_true < 2:
            raise SpecInvalid("k_true must be >= 2")
        if self.d_s > self.d_total:
            raise SpecInvalid(f"need d_total >= {self.d_s} for k_true={self.k_true}")
        if not (self.separation > 0 and self.sigma_in > 0):
            raise SpecInvalid("separation and sigma_in must be positive")
        if self.noise_theta < 0:
            raise SpecInvalid("noise_theta must be >= 0")
        sizes = self.sizes()
        if len(sizes) != self.k_true or min(sizes) < 1:
            raise SpecInvalid("need one positive size per cluster")


def pair_to_dimension(k_true: int) -> dict:
    return {pair: d for d, pair in enumerate(combinations(range(k_true), 2))}


def generate_pairwise_mixture(spec: PairwiseMixtureSpec, *, standardize=True) -> DataMatrix:
    """Draw a dataset; rows are shuffled, columns standardized afterwards.

    ``metadata`` records the pair to column map, the raw (pre-standardization)
    column means per cluster, the separation ratio S and, with correlated
    noise, the planted direction ``r``.
    """
    spec.validate()
    rng = make_rng(child_seed(spec.seed, "pairwise-mixture"))
    sizes = spec.sizes()
    n = sum(sizes)
    labels = np.repeat(np.arange(spec.k_true), sizes)
    d_s = spec.d_s
    x = np.empty((n, spec.d_total))
    x[:, :d_s] = rng.standard_normal((n, d_s))
    pairs = pair_to_dimension(spec.k_true)
    for (l, m), d in pairs.items():
        for c, sign in ((l, 1.0), (m, -1.0)):
            rows = labels == c
            x[rows, d] = sign * spec.separation / 2 + spec.sigma_in * rng.standard_normal(rows.sum())
    d_n = spec.d_total - d_s
    meta = {
        "pairs": {f"{l},{m}": d for (l, m), d in pairs.items()},
        "d_s": d_s,
        "S": spec.s_ratio,
        "separation": spec.separation,
        "sigma_in": spec.sigma_in,
        "noise_theta": spec.noise_theta,
    }
    if d_n:
        noise = rng.standard_normal((n, d_n))
        if spec.noise_theta > 0:
            r = rng.standard_normal(d_n)
            noise += np.sqrt(spec.noise_theta) * rng.standard_normal((n, 1)) * r[None, :]
            meta["r"] = r.tolist()
        x[:, d_s:] = noise
    order = rng.permutation(n)
    x, labels = x[order], labels[order]
    meta["raw_cluster_means"] = np.array(
        [x[labels == c, :d_s].mean(axis=0) for c in range(spec.k_true)]).tolist()
    mask = np.zeros(spec.d_total, bool)
    mask[:d_s] = True
    width = len(str(spec.d_total - 1))
    m = DataMatrix(
        x,
        [f"f{j:0{width}d}" for j in range(spec.d_total)],
        [f"c{i}" for i in range(n)],
        true_labels=labels,
        informative_mask=mask,
        metadata=meta,
    )
    return standardize_columns(m) if standardize else m


def generate_single_axis(n: int, delta: float, d_noise: int, seed: int) -> DataMatrix:
    """Two equal clusters separated by ``delta`` along the first column only."""
    if n % 2 or n < 2:
        raise SpecInvalid("n must be even and positive")
    rng = make_rng(child_seed(seed, "single-axis"))
    labels = np.repeat([0, 1], n // 2)
    x = rng.standard_normal((n, 1 + d_noise))
    x[:, 0] += np.where(labels == 0, delta / 2, -delta / 2)
    mask = np.zeros(1 + d_noise, bool)
    mask[0] = True
    return DataMatrix.from_array(x, true_labels=labels, informative_mask=mask,
                                 metadata={"delta": delta})


def split_sizes(n: int, k: int):
    base, extra = divmod(n, k)
    return tuple(base + (1 if c < extra else 0) for c in range(k))


def grid_spec(base: PairwiseMixtureSpec, ratio, n) -> PairwiseMixtureSpec:
    d_s = base.d_s
    d = ratio * d_s
    if abs(d - round(d)) > 1e-9 or round(d) < d_s:
        raise SpecInvalid(f"ratio {ratio} does not give an integer D >= D_s")
    if n < base.k_true:
        raise SpecInvalid("need at least one point per cluster")
    return PairwiseMixtureSpec(
        k_true=base.k_true, d_total=int(round(d)), separation=base.separation,
        sigma_in=base.sigma_in, n_per_cluster=n // base.k_true, noise_theta=base.noise_theta,
        seed=child_seed(base.seed, f"grid/{ratio}/{n}"),
        cluster_sizes=split_sizes(n, base.k_true))


def generate_scaling_grid(base: PairwiseMixtureSpec, ratios, n_values):
    """One dataset per (D/D_s, N) cell, in row-major (ratio, N) order."""
    specs = [grid_spec(base, r, n) for r in ratios for n in n_values]
    return [generate_pairwise_mixture(s) for s in specs]
