"""Univariate discrete phase-type distributions.

``tau ~ DPH(alpha, P)`` is the step at which a terminating Markov chain
with initial vector ``alpha`` and sub-stochastic matrix ``P`` leaves its
transient states.  Support is the positive integers.
"""

from dataclasses import dataclass
from math import factorial

import numpy as np

from .linalg import (
    ROW_SUM_TOL,
    as_matrix,
    clamp_small_negatives,
    resolvent_apply,
    validate_substochastic,
)

TAIL_TOL = 1e-12
MAX_SUPPORT = 1_000_000


@dataclass(frozen=True, eq=False)
class DphParams:
    """Initial probability vector ``alpha`` and transient matrix ``P``."""

    alpha: np.ndarray
    P: np.ndarray

    def __post_init__(self):
        alpha = clamp_small_negatives(np.atleast_1d(np.asarray(self.alpha, dtype=float)), "alpha")
        P = clamp_small_negatives(as_matrix(self.P, "P"), "P")
        if alpha.ndim != 1 or P.shape != (alpha.size, alpha.size):
            raise ValueError(f"alpha {alpha.shape} and P {P.shape} are not conformable")
        if abs(alpha.sum() - 1.0) > ROW_SUM_TOL:
            raise ValueError(f"alpha must sum to 1, sums to {alpha.sum()!r}")
        report = validate_substochastic(P)
        if not report.ok:
            raise ValueError(f"P is not a terminating sub-stochastic matrix: {report.failures()}")
        alpha.setflags(write=False)
        P.setflags(write=False)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "P", P)

    @property
    def dim(self):
        return self.alpha.size

    @property
    def exit(self):
        """One-step absorption probabilities ``1 - P 1``."""
        return np.clip(1.0 - self.P.sum(axis=1), 0.0, None)


def dph_pmf(params, ell):
    """``P(tau = ell) = alpha P^(ell-1) (1 - P 1)``."""
    if ell < 1:
        raise ValueError("DPH support starts at 1")
    row = params.alpha @ np.linalg.matrix_power(params.P, int(ell) - 1)
    return float(row @ params.exit)


def dph_pmf_vector(params, n_max):
    """pmf at ``1..n_max`` by forward recursion (index 0 holds ell=1)."""
    out = np.empty(n_max)
    row = params.alpha.copy()
    exit_ = params.exit
    for k in range(n_max):
        out[k] = row @ exit_
        row = row @ params.P
    return out


def tail_mass(params, ell):
    """``P(tau > ell) = alpha P^ell 1``."""
    return float((params.alpha @ np.linalg.matrix_power(params.P, int(ell))).sum())


def support_bound(params, tol=TAIL_TOL):
    """Smallest ``L`` with ``P(tau > L) < tol``, found by forward iteration."""
    row = params.alpha.copy()
    for L in range(MAX_SUPPORT):
        if row.sum() < tol:
            return L
        row = row @ params.P
    raise RuntimeError("tail mass did not fall below tolerance")


def dph_cdf(params, ell):
    return 1.0 - tail_mass(params, ell) if ell >= 0 else 0.0


def dph_pgf(params, x):
    """``E[x^tau] = x alpha (I - x P)^{-1} (1 - P 1)``."""
    return float(x * (params.alpha @ resolvent_apply(params.P, x, params.exit)))


def dph_factorial_moment(params, n):
    """``E[tau (tau-1) ... (tau-n+1)] = n! alpha P^(n-1) (I-P)^(-n-1) (1 - P 1)``."""
    if n < 1:
        raise ValueError("factorial moment order must be >= 1")
    return float(params.alpha @ factorial_kernel(params.P, n) @ params.exit)


def factorial_kernel(T, n):
    """``n! T^(n-1) (I-T)^(-n-1)`` for ``n >= 1`` and ``(I-T)^(-1)`` for ``n = 0``.

    Returned as a matrix; all powers of ``(I-T)^{-1}`` go through the
    checked resolvent solve.
    """
    T = np.asarray(T, dtype=float)
    d = T.shape[0]
    inv = resolvent_apply(T, 1.0, np.eye(d))
    if n == 0:
        return inv
    return factorial(n) * np.linalg.matrix_power(T, n - 1) @ np.linalg.matrix_power(inv, n + 1)


def dph_mean(params):
    return dph_factorial_moment(params, 1)


def _cumulative_rows(P, exit_):
    # transient columns followed by the cemetery column
    full = np.hstack([P, exit_[:, None]])
    cum = np.cumsum(full, axis=1)
    cum[:, -1] = 1.0
    return cum


def _draw_rows(cum, states, rng):
    u = rng.random(states.size)
    return (cum[states] <= u[:, None]).sum(axis=1)


def dph_sample_many(params, n, rng):
    """Draw ``n`` absorption times by running the augmented chain."""
    cum_init = np.cumsum(params.alpha)
    cum_init[-1] = 1.0
    cum = _cumulative_rows(params.P, params.exit)
    cemetery = params.dim
    states = np.searchsorted(cum_init, rng.random(n), side="right")
    out = np.zeros(n, dtype=np.int64)
    active = np.arange(n)
    step = 0
    while active.size:
        step += 1
        states = _draw_rows(cum, states, rng)
        done = states == cemetery
        out[active[done]] = step
        active = active[~done]
        states = states[~done]
    return out


def dph_sample(params, rng):
    """One draw from ``DPH(alpha, P)``."""
    return int(dph_sample_many(params, 1, rng)[0])
