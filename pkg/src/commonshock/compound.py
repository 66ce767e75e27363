"""Compound sums ``Y_k = X_{k,1} + ... + X_{k,tau_k}`` driven by CDPH counts.

Two routes to the joint Laplace transform of ``(Y1, Y2)``:

* independent summands: the CDPH joint pgf evaluated at the summand
  transforms (:func:`compound_laplace`);
* MPH* summands: an explicit MPH* representation on the product of the
  coupled chain with the summand's jump process
  (:func:`build_compound_mphstar`), evaluated by :func:`mphstar_laplace`.

Both assume the basic support (default shift).
"""

from dataclasses import dataclass

import numpy as np

from .cdph import DEFAULT_SHIFT, cdph_sample_many, joint_pgf, joint_pgf_latent
from .closures import build_coupled_chain
from .linalg import COND_LIMIT, NumericalError, as_matrix, decays, kron

RATE_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class MphStarParams:
    """Jump process ``(pi, S)`` on ``C`` with reward rows ``R[0]``, ``R[1]``."""

    pi: np.ndarray
    S: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        pi = np.atleast_1d(np.asarray(self.pi, dtype=float))
        S = as_matrix(self.S, "S")
        R = as_matrix(self.R, "R")
        n = pi.size
        if S.shape != (n, n) or R.shape != (2, n):
            raise ValueError(f"shapes do not conform: pi {pi.shape}, S {S.shape}, R {R.shape}")
        if np.any(pi < 0) or abs(pi.sum() - 1.0) > RATE_TOL:
            raise ValueError("pi must be a probability vector")
        off = S - np.diag(np.diag(S))
        if np.any(off < 0) or np.any(np.diag(S) >= 0):
            raise ValueError("S needs non-negative off-diagonal and negative diagonal entries")
        rows = S.sum(axis=1)
        if np.any(rows > RATE_TOL) or not np.any(rows < 0):
            raise ValueError("S rows must sum to <= 0 with at least one exit")
        rate = -np.diag(S).min()
        if not decays(np.eye(n) + S / rate):
            raise ValueError("jump process does not reach absorption")
        if np.any(R < 0):
            raise ValueError("rewards must be non-negative")
        for name, value in (("pi", pi), ("S", S), ("R", R)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)

    @property
    def exit(self):
        return np.clip(-self.S.sum(axis=1), 0.0, None)


@dataclass(frozen=True)
class LaplacePoint:
    theta1: float
    theta2: float

    def __post_init__(self):
        if self.theta1 < 0 or self.theta2 < 0:
            raise ValueError("Laplace arguments must be non-negative")


def _point(point):
    return point if isinstance(point, LaplacePoint) else LaplacePoint(*point)


def exponential_lt(rate):
    """Laplace transform of an exponential law with the given rate."""
    return lambda theta: rate / (rate + theta)


def ph_lt(pi, S):
    """Laplace transform ``pi (theta I - S)^{-1} (-S 1)`` of a univariate PH law."""
    pi = np.atleast_1d(np.asarray(pi, dtype=float))
    S = as_matrix(S, "S")
    s = -S.sum(axis=1)

    def lt(theta):
        return float(pi @ np.linalg.solve(theta * np.eye(S.shape[0]) - S, s))

    return lt


def _require_basic(params):
    if params.shift != DEFAULT_SHIFT:
        raise ValueError("compound sums are defined for counts on the basic support")


def compound_laplace(params, lt1, lt2, point):
    """``E[exp(-theta1 Y1 - theta2 Y2)]`` for independent ``X1``, ``X2``."""
    _require_basic(params)
    point = _point(point)
    a1 = lt1(point.theta1)
    a2 = lt2(point.theta2)
    for a in (a1, a2):
        if not 0.0 < a <= 1.0:
            raise ValueError(f"summand transform returned {a}, outside (0, 1]")
    return joint_pgf(params, a1, a2)


def mphstar_laplace(params, point):
    """``pi (Delta - S)^{-1} (-S 1)`` with ``Delta = diag(theta1 r1 + theta2 r2)``."""
    point = _point(point)
    return _mphstar_transform(params, point.theta1, point.theta2)


def _mphstar_transform(params, theta1, theta2):
    delta = np.diag(theta1 * params.R[0] + theta2 * params.R[1])
    system = delta - params.S
    if np.linalg.cond(system, p=1) > COND_LIMIT:
        raise NumericalError("MPH* Laplace system is ill-conditioned")
    return float(params.pi @ np.linalg.solve(system, params.exit))


def independent_mphstar(pi1, S1, pi2, S2):
    """MPH* pair with ``X1 ~ PH(pi1, S1)`` independent of ``X2 ~ PH(pi2, S2)``.

    One jump process runs through the first block (reward to ``X1`` only),
    then restarts in the second block (reward to ``X2`` only).
    """
    S1 = as_matrix(S1, "S1")
    S2 = as_matrix(S2, "S2")
    pi1 = np.atleast_1d(np.asarray(pi1, dtype=float))
    pi2 = np.atleast_1d(np.asarray(pi2, dtype=float))
    n1, n2 = S1.shape[0], S2.shape[0]
    S = np.zeros((n1 + n2, n1 + n2))
    S[:n1, :n1] = S1
    S[:n1, n1:] = np.outer(-S1.sum(axis=1), pi2)
    S[n1:, n1:] = S2
    R = np.zeros((2, n1 + n2))
    R[0, :n1] = 1.0
    R[1, n1:] = 1.0
    return MphStarParams(np.concatenate([pi1, np.zeros(n2)]), S, R)


def build_compound_mphstar(params, summand):
    """MPH* representation of ``(Y1, Y2)`` for i.i.d. MPH* summands.

    The coupled chain advances one step each time the summand process is
    absorbed, at which point a fresh summand starts from ``pi``.  Reward for
    ``Y1`` is switched off once the first coordinate has finished, and
    likewise for ``Y2``.  Simultaneous termination of both coordinates
    sends the product chain straight to absorption.
    """
    _require_basic(params)
    chain = build_coupled_chain(params)
    dim = chain.Pmax.shape[0]
    restart = np.outer(summand.exit, summand.pi)
    S = kron(np.eye(dim), summand.S) + kron(chain.Pmax, restart)
    slices = chain.block_slices()
    active1 = np.zeros(dim)
    active2 = np.zeros(dim)
    for label in ("E", "SS", "D2"):
        active1[slices[label]] = 1.0
    for label in ("E", "SS", "D1"):
        active2[slices[label]] = 1.0
    R = np.vstack([kron(active1[None, :], summand.R[0][None, :]),
                   kron(active2[None, :], summand.R[1][None, :])])
    pi = kron(chain.init[None, :], summand.pi[None, :]).ravel()
    return MphStarParams(pi, S, R)


def sample_mphstar(params, n, rng):
    """Draw ``n`` pairs ``(X1, X2)`` by uniformisation of the jump process."""
    S = params.S
    c = S.shape[0]
    rate = -np.diag(S).min()
    K = np.eye(c) + S / rate
    full = np.hstack([K, params.exit[:, None] / rate])
    cum = np.cumsum(full, axis=1)
    cum[:, -1] = 1.0
    cum_init = np.cumsum(params.pi)
    cum_init[-1] = 1.0
    states = np.searchsorted(cum_init, rng.random(n), side="right")
    x = np.zeros((2, n))
    active = np.arange(n)
    while active.size:
        hold = rng.exponential(1.0 / rate, active.size)
        x[:, active] += params.R[:, states] * hold
        u = rng.random(active.size)
        states = (cum[states] <= u[:, None]).sum(axis=1)
        alive = states < c
        active = active[alive]
        states = states[alive]
    return x[0], x[1]


def exponential_pair_sampler(rate1=1.0, rate2=1.0):
    """Sampler of independent exponential summands in the ``(n, rng)`` protocol."""

    def draw(n, rng):
        return rng.exponential(1.0 / rate1, n), rng.exponential(1.0 / rate2, n)

    return draw


def mphstar_sampler(params):
    return lambda n, rng: sample_mphstar(params, n, rng)


def compound_sample_many(params, summand_sampler, n, rng):
    """``n`` draws of ``(Y1, Y2)``.

    ``summand_sampler(k, rng)`` must return two arrays of ``k`` i.i.d.
    summand coordinates.  Each path consumes ``max(tau1, tau2)`` pairs; the
    first ``tau_k`` of them feed ``Y_k``.
    """
    _require_basic(params)
    tau1, tau2, *_ = cdph_sample_many(params, n, rng)
    need = np.maximum(tau1, tau2)
    total = int(need.sum())
    x1, x2 = summand_sampler(total, rng)
    path = np.repeat(np.arange(n), need)
    starts = np.concatenate([[0], np.cumsum(need)[:-1]])
    pos = np.arange(total) - np.repeat(starts, need)
    y1 = np.bincount(path, weights=np.where(pos < tau1[path], x1, 0.0), minlength=n)
    y2 = np.bincount(path, weights=np.where(pos < tau2[path], x2, 0.0), minlength=n)
    return y1, y2


def compound_sample(params, summand_sampler, rng):
    y1, y2 = compound_sample_many(params, summand_sampler, 1, rng)
    return float(y1[0]), float(y2[0])


def compound_transform(params, lt1, lt2):
    """Unchecked ``(theta1, theta2) -> E[exp(-theta1 Y1 - theta2 Y2)]``.

    Accepts small negative arguments so that derivatives at the origin can
    be taken by central differences.
    """
    _require_basic(params)

    def transform(theta1, theta2):
        a1 = lt1(theta1)
        a2 = lt2(theta2)
        return joint_pgf_latent(params, a1 * a2, a1, a2)

    return transform


def mphstar_transform(params):
    return lambda theta1, theta2: _mphstar_transform(params, theta1, theta2)


_STENCILS = {
    0: ((0, 1.0),),
    1: ((1, 0.5), (-1, -0.5)),
    2: ((1, 1.0), (0, -2.0), (-1, 1.0)),
}
BASE_STEP = 1e-4
WIDE_STEP = 1e-3


def _difference(transform, r1, r2, h):
    total = 0.0
    for o1, w1 in _STENCILS[r1]:
        for o2, w2 in _STENCILS[r2]:
            total += w1 * w2 * transform(o1 * h, o2 * h)
    return total / h ** (r1 + r2)


def compound_cross_moment_numeric(transform, r1, r2, rel_tol=1e-3):
    """``E[Y1^r1 Y2^r2]`` for ``r1, r2 <= 2`` by differentiating a transform.

    ``transform`` maps ``(theta1, theta2)`` to the joint Laplace transform
    (see :func:`compound_transform`, :func:`mphstar_transform`).  Central
    differences at steps ``h`` and ``2h`` are combined by one Richardson
    step.  Returns ``(value, error_estimate)``.
    """
    if r1 not in _STENCILS or r2 not in _STENCILS:
        raise ValueError("orders above 2 per coordinate are not supported")
    order = r1 + r2
    if order == 0:
        return float(transform(0.0, 0.0)), 0.0
    # round-off grows like eps / h^order; widen the step for high orders
    h = BASE_STEP if order <= 2 else WIDE_STEP
    coarse = _difference(transform, r1, r2, 2 * h)
    fine = _difference(transform, r1, r2, h)
    value = (4 * fine - coarse) / 3
    error = abs(fine - coarse) / 3
    sign = (-1) ** order
    if not np.isfinite(value) or error > rel_tol * max(1.0, abs(value)):
        raise NumericalError(f"finite differences did not settle (estimate {value}, error {error})")
    return sign * value, error
