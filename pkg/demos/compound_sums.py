"""Aggregate claims driven by correlated claim counts, checked by simulation."""

import numpy as np

from commonshock import CdphParams, build_compound_mphstar, compound_laplace, independent_mphstar, mphstar_laplace
from commonshock.compound import compound_sample_many, exponential_lt, exponential_pair_sampler

counts = CdphParams(alpha=[1.0], P=[[0.5]], U=[[0.5]], Q1=[[0.5]], Q2=[[0.25]])
claims = independent_mphstar([1.0], [[-1.0]], [1.0], [[-1.0]])
joint = build_compound_mphstar(counts, claims)
print("MPH* representation has", joint.S.shape[0], "phases")

y1, y2 = compound_sample_many(counts, exponential_pair_sampler(), 500_000, np.random.default_rng(3))
for theta in ((0.5, 0.5), (1.0, 0.2), (2.0, 2.0)):
    via_pgf = compound_laplace(counts, exponential_lt(1.0), exponential_lt(1.0), theta)
    via_mph = mphstar_laplace(joint, theta)
    mc = np.exp(-theta[0] * y1 - theta[1] * y2).mean()
    print(f"theta {theta}: pgf route {via_pgf:.6f}, MPH* route {via_mph:.6f}, simulation {mc:.6f}")
print("mean totals:", y1.mean(), y2.mean(), "correlation:", np.corrcoef(y1, y2)[0, 1])
