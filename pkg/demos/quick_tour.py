"""A first look: build a small model, evaluate it, sample from it, combine it."""

import numpy as np

from commonshock import (
    CdphParams,
    cdph_sample_many,
    covariance,
    cross_moment,
    joint_pgf,
    joint_pmf,
    max_dph,
    min_dph,
    sum_dph,
)
from commonshock.dph import dph_mean, dph_pmf

# one shared phase, then one private phase per coordinate
model = CdphParams(
    alpha=[1.0],
    P=[[0.5]],
    U=[[0.5]],
    Q1=[[0.5]],
    Q2=[[0.25]],
)

print("P(tau1=3, tau2=3) =", joint_pmf(model, 3, 3))
print("E[tau1], E[tau2]   =", cross_moment(model, 1, 0), cross_moment(model, 0, 1))
print("Cov(tau1, tau2)    =", covariance(model))
print("pgf at (0.5, 0.5)  =", joint_pgf(model, 0.5, 0.5))

t1, t2, *_ = cdph_sample_many(model, 200_000, np.random.default_rng(1))
print("sample means       =", t1.mean(), t2.mean())
print("sample covariance  =", np.cov(t1, t2)[0, 1])

for name, build in (("min", min_dph), ("max", max_dph), ("sum", sum_dph)):
    law = build(model)
    print(f"{name}: mean {dph_mean(law):.4f}, P(= 4) {dph_pmf(law, 4):.5f}")
