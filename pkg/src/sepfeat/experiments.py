"""End-to-end benchmark runs on synthetic data."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .core import DataMatrix, FeatureScores, child_seed
from .evaluation import auroc, cluster_entropy, measured_vote_ratio, weight_ratio
from .errors import ZeroDenominator
from .maxmargin import SolverSettings
from .proposals import ProposalPolicy
from .scoring import ScorerConfig, calibrate_for, null_statistics, score_features, z_scores
from .synthetic import PairwiseMixtureSpec, generate_pairwise_mixture, grid_spec

FIG3_SPEC = PairwiseMixtureSpec(k_true=7, d_total=861, separation=6.0, sigma_in=1.0, n_per_cluster=200)
FIG3_POLICY = ProposalPolicy(n_subsample=700, k_min=3, k_max=14, algorithm="kmeans", t_proposals=1000)


@dataclass
class BenchmarkResult:
    data: DataMatrix
    scores: FeatureScores

    def summary(self):
        mask = self.data.informative_mask
        out = {
            "T": self.scores.proposals_used,
            "lambda_hat": self.scores.lambda_hat,
            "auroc": auroc(self.scores.g, mask),
            "mean_nnz": self.scores.support_counts.sum() / max(self.scores.n_pairs, 1),
        }
        try:
            out["weight_ratio"] = weight_ratio(self.scores, mask)
        except ZeroDenominator as e:
            out["weight_ratio"] = e.ratio
        try:
            out["vote_ratio"] = measured_vote_ratio(self.scores, mask)
        except ZeroDenominator as e:
            out["vote_ratio"] = e.ratio
        if self.scores.proposals is not None and self.data.true_labels is not None:
            out["entropy"] = float(np.mean([cluster_entropy(p, self.data.true_labels)
                                            for p in self.scores.proposals]))
        if self.scores.z is not None:
            out["null_mean"] = self.scores.null_mean
            out["null_std"] = self.scores.null_std
        return out


def default_policy(n: int, t: int, algorithm="kmeans") -> ProposalPolicy:
    """Half the rows per proposal and ``K_p ~ Unif(3, N/20)``."""
    return ProposalPolicy(n_subsample=n // 2, k_min=3, k_max=max(3, n // 20),
                          algorithm=algorithm, t_proposals=t)


def run_benchmark(data: DataMatrix, config: ScorerConfig, seed: int, *, with_null=False,
                  keep_proposals=False, n_jobs=1) -> BenchmarkResult:
    lam = config.lambda_hat if config.lambda_hat is not None else calibrate_for(data, config, seed)
    scores = score_features(data, config, seed, lambda_hat=lam, keep_proposals=keep_proposals,
                            n_jobs=n_jobs)
    if with_null:
        mu, sigma = null_statistics(data, config, child_seed(seed, "null"), lambda_hat=lam, n_jobs=n_jobs)
        scores = z_scores(replace(scores, null_mean=mu, null_std=sigma))
    return BenchmarkResult(data, scores)


def fig3_run(seed: int, *, t_proposals=1000, noise_theta=0.0, separation=6.0, d_total=861,
             with_null=False, keep_proposals=False, n_jobs=1) -> BenchmarkResult:
    """The 7-cluster, 861-feature benchmark; ``seed`` drives data and ensemble."""
    spec = replace(FIG3_SPEC, seed=child_seed(seed, "data"), noise_theta=noise_theta,
                   separation=separation, d_total=d_total)
    data = generate_pairwise_mixture(spec)
    config = ScorerConfig(replace(FIG3_POLICY, t_proposals=t_proposals))
    return run_benchmark(data, config, child_seed(seed, "score"), with_null=with_null,
                         keep_proposals=keep_proposals, n_jobs=n_jobs)


def scaling_cell(base: PairwiseMixtureSpec, ratio, n, t_proposals, seed, *, solver=None,
                 algorithm="kmeans", n_jobs=1, lambda_scale="relative"):
    """One row of the scaling table."""
    spec = replace(grid_spec(base, ratio, n), seed=child_seed(seed, f"data/{ratio}/{n}"))
    data = generate_pairwise_mixture(spec)
    config = ScorerConfig(default_policy(n, t_proposals, algorithm), solver=solver or SolverSettings(),
                          lambda_scale=lambda_scale)
    res = run_benchmark(data, config, child_seed(seed, f"score/{ratio}/{n}"), keep_proposals=True,
                        n_jobs=n_jobs)
    s = res.summary()
    return {"D": spec.d_total, "D_s": spec.d_s, "N": n, "T": t_proposals,
            "weight_ratio": s["weight_ratio"], "auroc": s["auroc"], "entropy": s["entropy"],
            "lambda_hat": s["lambda_hat"]}


def sweep_d_for(x_target: float, d_s: int, n: int) -> int:
    """Smallest multiple of ``d_s`` with ``D / (D_s ln N)`` at least ``x_target``."""
    return d_s * math.ceil(x_target * math.log(n))


def sweep_s_row(s_value, seed, *, base=FIG3_SPEC, x_target=15.0, t_proposals=300, n_jobs=1):
    """One row of the separation sweep at fixed ``D / (D_s ln N)``."""
    n = base.k_true * base.n_per_cluster
    d = sweep_d_for(x_target, base.d_s, n)
    spec = replace(base, d_total=d, separation=float(s_value) * base.sigma_in,
                   seed=child_seed(seed, f"data/S={s_value!r}"))
    data = generate_pairwise_mixture(spec)
    config = ScorerConfig(replace(FIG3_POLICY, n_subsample=n // 2, t_proposals=t_proposals))
    res = run_benchmark(data, config, child_seed(seed, f"score/S={s_value!r}"), n_jobs=n_jobs)
    s = res.summary()
    return {"S": float(s_value), "D": d, "D_s": base.d_s, "N": n, "T": t_proposals,
            "x": d / (base.d_s * math.log(n)), "auroc": s["auroc"],
            "weight_ratio": s["weight_ratio"], "lambda_hat": s["lambda_hat"]}, res
