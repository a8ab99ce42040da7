"""Watch one sparse separator switch features on as the L1 weight falls.

Two clusters differ along feature 0 strongly and along feature 1 weakly;
the remaining features are noise.  Above lambda_max the separator is zero.
Lowering the weight switches on the strong axis first, then the weak one,
and only much later any noise direction.
"""
import numpy as np

from sepfeat.core import ClusterProposal
from sepfeat.maxmargin import SolverSettings, fit_separator, lambda_max

rng = np.random.default_rng(0)
n = 60
labels = np.repeat([0, 1], n // 2)
x = rng.normal(size=(n, 6))
x[:, 0] += np.where(labels == 0, 2.0, -2.0)
x[:, 1] += np.where(labels == 0, 0.6, -0.6)
x = (x - x.mean(0)) / x.std(0)

prop = ClusterProposal(np.arange(n), labels, 2)
top = lambda_max(x, prop, (0, 1))
print(f"lambda_max = {top:.2f}: any weight at or above this gives theta = 0\n")
print(" lambda/lambda_max   nnz   objective   theta")
for frac in (1.0, 0.9, 0.6, 0.3, 0.1, 0.03, 0.01):
    sep = fit_separator(x, prop, (0, 1), SolverSettings(lam=frac * top))
    print(f"  {frac:14.2f}  {sep.nnz:5d}  {sep.objective_value:10.3f}   {np.round(sep.theta, 3)}")
