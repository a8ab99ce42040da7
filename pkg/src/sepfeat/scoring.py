"""Ensemble feature scores and the column-shuffle null model.

For every proposal clustering, a sparse separator is fitted between each
pair of proposed clusters.  A feature's score is the absolute value of its
separator components, summed over pairs and averaged over proposals.
Features that separate hidden clusters keep turning up in the sparse
supports and score high.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from itertools import combinations
from typing import Callable, Optional, Sequence

import numpy as np

from .core import SPARSITY_EPS, DataMatrix, FeatureScores, child_seed, make_rng, standardize_columns
from .errors import DegenerateNull, ProposalFailed, SepfeatError
from .maxmargin import SCALES, SolverSettings, calibrate_lambda, fit_pairs, pair_factor
from .proposals import ProposalPolicy, draw_proposal


LAMBDA_SCALES = SCALES


@dataclass(frozen=True)
class ScorerConfig:
    """Scoring options.

    ``lambda_scale`` selects how the calibrated weight is applied:
    ``"global"`` uses ``lambda_hat`` unchanged for every pair,
    ``"pair_size"`` fits each pair at ``lambda_hat * (n_l + n_m)`` and
    ``"relative"`` at ``lambda_hat * lambda_max`` of the pair.
    """

    policy: ProposalPolicy
    solver: SolverSettings = field(default_factory=SolverSettings)
    target_nnz: float = 1.0
    normalize_theta: bool = True
    null_runs: int = 1
    pilot_proposals: int = 25
    pilot_pairs: int = 100
    bisection_depth: int = 20
    lambda_hat: Optional[float] = None  # skip calibration when set
    lambda_scale: str = "relative"

    def __post_init__(self):
        if self.null_runs < 0:
            raise ValueError("null_runs must be >= 0")
        if self.target_nnz < 1:
            raise ValueError("target_nnz must be >= 1")
        if self.pilot_proposals < 1 or self.pilot_pairs < 1:
            raise ValueError("pilot sizes must be >= 1")
        if self.lambda_hat is not None and not self.lambda_hat >= 0:
            raise ValueError("lambda_hat must be >= 0")
        if self.lambda_scale not in LAMBDA_SCALES:
            raise ValueError(f"lambda_scale must be one of {LAMBDA_SCALES}")



def proposal_seed(seed: int, t: int) -> int:
    return child_seed(seed, f"proposal/{t}")


def _values(m):
    return m.values if isinstance(m, DataMatrix) else np.asarray(m, float)


def _score_one(x, m, config, seed, t, lam, separator_fn, keep):
    """Partial (unnormalized by T) scores from proposal ``t``."""
    try:
        prop = draw_proposal(m, config.policy, proposal_seed(seed, t))
        pairs = list(combinations(prop.occupied().tolist(), 2))
        settings = replace(config.solver, lam=lam)
        if separator_fn is None:
            g, support, n_zero, _ = fit_pairs(x, prop, pairs, settings, normalize=config.normalize_theta,
                                              scale=config.lambda_scale)
        else:
            g = np.zeros(x.shape[1])
            support = np.zeros(x.shape[1], dtype=np.int64)
            n_zero = 0
            for pair in pairs:
                settings = replace(config.solver, lam=lam * pair_factor(x, prop, pair, config.lambda_scale))
                theta = np.asarray(separator_fn(x, prop, pair, settings), float)
                nrm = np.linalg.norm(theta)
                if nrm == 0:
                    n_zero += 1
                    continue
                support += np.abs(theta) > SPARSITY_EPS
                g += np.abs(theta / nrm if config.normalize_theta else theta)
        return g, support, len(pairs), n_zero, (prop if keep else None)
    except SepfeatError as e:
        raise ProposalFailed(t, e) from e


def calibrate_for(m: DataMatrix, config: ScorerConfig, seed: int) -> float:
    """Global L1 weight from the first ``pilot_proposals`` ensemble members."""
    n_pilot = min(config.pilot_proposals, config.policy.t_proposals)
    pilots = []
    for t in range(n_pilot):
        try:
            pilots.append(draw_proposal(m, config.policy, proposal_seed(seed, t)))
        except SepfeatError as e:
            raise ProposalFailed(t, e) from e
    return calibrate_lambda(m, pilots, config.target_nnz, config.solver,
                            max_pairs=config.pilot_pairs, depth=config.bisection_depth,
                            seed=child_seed(seed, "pilot"), scale=config.lambda_scale)


def score_features(m: DataMatrix, config: ScorerConfig, seed: int, *, lambda_hat=None,
                   proposal_indices: Optional[Sequence[int]] = None,
                   separator_fn: Optional[Callable] = None, keep_proposals=False,
                   n_jobs: int = 1) -> FeatureScores:
    """Ensemble scores ``g`` for every column of ``m``.

    Columns are standardized first.  ``proposal_indices`` restricts the run
    to a subset of the ``t_proposals`` ensemble members (scores are then
    averaged over that subset).  ``separator_fn(x, proposal, pair,
    settings)`` replaces the solver and must return a weight vector.
    Partial results are summed in proposal order, so the output does not
    depend on ``n_jobs``.
    """
    m = standardize_columns(m)
    config.policy.check(m)
    if lambda_hat is None:
        lambda_hat = config.lambda_hat
    if lambda_hat is None:
        lambda_hat = 0.0 if separator_fn is not None else calibrate_for(m, config, seed)
    lam = float(lambda_hat)
    idx = list(range(config.policy.t_proposals)) if proposal_indices is None else [int(t) for t in proposal_indices]
    if not idx:
        raise ValueError("no proposals to score")
    x = np.ascontiguousarray(m.values)

    def job(t):
        return _score_one(x, m, config, seed, t, lam, separator_fn, keep_proposals)

    if n_jobs == 1:
        parts = [job(t) for t in idx]
    else:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            parts = list(pool.map(job, idx))
    g = np.zeros(m.n_features)
    support = np.zeros(m.n_features, dtype=np.int64)
    n_pairs = n_zero = 0
    for part_g, part_s, n_p, n_z, _ in parts:
        g += part_g
        support += part_s
        n_pairs += n_p
        n_zero += n_z
    return FeatureScores(
        g=g / len(idx),
        proposals_used=len(idx),
        lambda_hat=lam,
        support_counts=support,
        n_pairs=n_pairs,
        n_zero=n_zero,
        proposals=tuple(p[4] for p in parts) if keep_proposals else None,
    )


def shuffle_columns(m, seed: int):
    """Permute every column independently; marginals are kept exactly."""
    x = _values(m)
    out = make_rng(seed).permuted(x, axis=0)
    if isinstance(m, DataMatrix):
        return m.with_values(out)
    return out


def pooled_moments(scores) -> tuple:
    """Mean and population standard deviation of pooled null scores."""
    s = np.concatenate([np.ravel(a) for a in scores]) if isinstance(scores, (list, tuple)) else np.ravel(scores)
    mu = float(s.mean())
    sigma = float(np.sqrt(np.mean((s - mu) ** 2)))
    return mu, sigma


def null_statistics(m: DataMatrix, config: ScorerConfig, seed: int, lambda_hat=None, *, n_jobs=1):
    """Null mean and std from ``null_runs`` scorings of column-shuffled data.

    Uses the same ensemble size, policy and L1 weight as the real run.
    """
    if config.null_runs < 1:
        raise ValueError("null_runs must be >= 1")
    m = standardize_columns(m)
    if lambda_hat is None:
        lambda_hat = config.lambda_hat if config.lambda_hat is not None else calibrate_for(m, config, seed)
    runs = []
    for r in range(config.null_runs):
        shuffled = shuffle_columns(m, child_seed(seed, f"null-shuffle/{r}"))
        runs.append(score_features(shuffled, config, child_seed(seed, f"null-score/{r}"),
                                   lambda_hat=lambda_hat, n_jobs=n_jobs).g)
    mu, sigma = pooled_moments(runs)
    if sigma == 0:
        err = DegenerateNull(f"all null scores equal {mu!r}")
        err.mu, err.sigma = mu, sigma
        raise err
    return mu, sigma


def z_scores(scores: FeatureScores) -> FeatureScores:
    if scores.null_mean is None or scores.null_std is None:
        raise DegenerateNull("null statistics are missing")
    if not scores.null_std > 0:
        raise DegenerateNull("null standard deviation is zero")
    return replace(scores, z=(scores.g - scores.null_mean) / scores.null_std)


def select_features(scores: FeatureScores, threshold: float = 1.0) -> np.ndarray:
    """Indices of features with z above ``threshold``."""
    if scores.z is None:
        raise DegenerateNull("z-scores have not been computed")
    return np.flatnonzero(scores.z > threshold)


def score_with_null(m: DataMatrix, config: ScorerConfig, seed: int, *, n_jobs=1) -> FeatureScores:
    """Scores, null statistics and z-scores with one shared L1 weight."""
    m = standardize_columns(m)
    lam = config.lambda_hat if config.lambda_hat is not None else calibrate_for(m, config, seed)
    scores = score_features(m, config, seed, lambda_hat=lam, n_jobs=n_jobs)
    mu, sigma = null_statistics(m, config, child_seed(seed, "null"), lambda_hat=lam, n_jobs=n_jobs)
    return z_scores(replace(scores, null_mean=mu, null_std=sigma))
