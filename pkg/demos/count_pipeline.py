"""From raw counts to an expanded feature set.

A toy count matrix stands in for single-cell expression: two cell types
differ in three marker genes.  Cells are downsampled to a common depth,
low-expression genes are dropped, features are scored, and the winners are
expanded by their top correlates, which recovers the weak marker.
"""
import numpy as np

from sepfeat.experiments import default_policy
from sepfeat.preprocessing import CountMatrix, downsample_reads, expand_correlated, filter_and_normalize
from sepfeat.scoring import ScorerConfig, score_with_null, select_features

rng = np.random.default_rng(5)
n_cells, n_genes = 300, 40
kind = rng.integers(0, 2, n_cells)
rate = rng.uniform(0.5, 4.0, n_genes)
rate[35:] = 0.002  # nearly silent genes
lam = np.tile(rate, (n_cells, 1))
lam[:, :3] *= np.where(kind[:, None] == 1, 6.0, 0.3)  # markers
lam[:, 3] = lam[:, 0] * 0.9  # a co-expressed partner of marker 0
lam[:, 4] *= np.where(kind == 1, 2.0, 0.6)  # a weak marker, below the z cut
counts = CountMatrix(rng.poisson(lam * rng.uniform(60, 120, (n_cells, 1))),
                     [f"gene{j}" for j in range(n_genes)], [f"cell{i}" for i in range(n_cells)])

depth = 150
down = downsample_reads(counts, depth, seed=1)
print(f"downsampled to {depth} reads: kept {len(down.cell_ids)} cells, dropped {len(down.dropped)}")
m = filter_and_normalize(down, 0.05, 0.05)
print(f"filtered genes: kept {m.n_features}, dropped {len(m.metadata['dropped'])}")

scores = score_with_null(m, ScorerConfig(default_policy(m.n_samples, 100)), seed=2)
picked = [m.feature_names[i] for i in select_features(scores, 3.0)]
print(f"genes with z > 3: {picked}")
print(f"expanded by top 4 correlates: {expand_correlated(m, picked, 4)}")
print(f"z of the weak marker gene4: {scores.z[m.feature_names.index('gene4')]:.2f}")
