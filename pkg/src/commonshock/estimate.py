"""Maximum likelihood estimation of CDPH parameters with the EM algorithm.

The E-step works on the distinct observed pairs (with multiplicities) and
is vectorised across them.  For an observation ``(n1, n2)`` with common
shock length ``t`` the relevant quantities are

* ``a_t = alpha P^(t-1)``                      (forward, shared by all pairs)
* ``w_t = (Q1^(n1-t-1) q1) * (Q2^(n2-t-1) q2)`` (split-phase likelihood)
* ``h_s[j] = f(n1 - s, n2 - s | j)``           (backward over ``E``)

with ``h_s = U w_{s+1} + P h_{s+1}`` and ``f(n1, n2) = alpha h_0``.  The
split-phase statistics for coordinate ``k`` use a forward vector over ``S``
that folds in every possible common-shock exit time.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from .cdph import DEFAULT_SHIFT, CdphParams, LATTICE_TOL, pmf_grid, random_params

log = logging.getLogger(__name__)

ZERO_MASS = 1e-12


@dataclass(frozen=True, eq=False)
class CountDataset:
    """Distinct lattice points ``values[k] = (x1, x2)`` with multiplicities."""

    values: np.ndarray
    weights: np.ndarray
    shift: tuple = DEFAULT_SHIFT

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).reshape(-1, 2)
        weights = np.asarray(self.weights, dtype=np.int64).ravel()
        if values.shape[0] != weights.size:
            raise ValueError("one weight per observation is required")
        if np.any(weights < 1):
            raise ValueError("weights are positive integer multiplicities")
        if weights.sum() < 1:
            raise ValueError("dataset is empty")
        shift = tuple(float(s) for s in self.shift)
        c1, k1, c2, k2 = shift
        scaled = (values - np.array([k1, k2])) / np.array([c1, c2])
        taus = np.rint(scaled)
        bad = np.any(np.abs(scaled - taus) > LATTICE_TOL, axis=1) | np.any(taus < 0, axis=1)
        if np.any(bad):
            first = tuple(float(v) for v in values[np.argmax(bad)])
            raise ValueError(f"observation {first} is not on the lattice given by shift {shift}")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "shift", shift)
        object.__setattr__(self, "taus", taus.astype(np.int64) + 2)

    @classmethod
    def from_observations(cls, x1, x2, shift=DEFAULT_SHIFT, weights=None):
        """Aggregate raw observations (optionally pre-weighted) into distinct pairs."""
        x = np.column_stack([np.asarray(x1, dtype=float), np.asarray(x2, dtype=float)])
        if x.shape[0] == 0:
            raise ValueError("dataset is empty")
        w = np.ones(x.shape[0], dtype=np.int64) if weights is None else np.asarray(weights, dtype=np.int64)
        uniq, inverse = np.unique(x, axis=0, return_inverse=True)
        counts = np.bincount(inverse.ravel(), weights=w, minlength=uniq.shape[0]).astype(np.int64)
        keep = counts > 0
        return cls(uniq[keep], counts[keep], shift)

    @property
    def size(self):
        """Total number of observations ``n``."""
        return int(self.weights.sum())

    def expanded(self):
        """Raw observations, one row per unit of weight."""
        return np.repeat(self.values, self.weights, axis=0)


@dataclass
class SufficientStats:
    A: np.ndarray
    NA: np.ndarray
    NT: np.ndarray
    NB1: np.ndarray
    NB2: np.ndarray
    Nb1: np.ndarray
    Nb2: np.ndarray

    @classmethod
    def zeros(cls, n_common, n_split):
        e, s = n_common, n_split
        return cls(np.zeros(e), np.zeros((e, e)), np.zeros((e, s)),
                   np.zeros((s, s)), np.zeros((s, s)), np.zeros(s), np.zeros(s))

    def __add__(self, other):
        return SufficientStats(*(getattr(self, f) + getattr(other, f) for f in _STAT_FIELDS))

    def split(self, k):
        return (self.NB1, self.Nb1) if k == 1 else (self.NB2, self.Nb2)


_STAT_FIELDS = ("A", "NA", "NT", "NB1", "NB2", "Nb1", "Nb2")


@dataclass
class EmConfig:
    dims: tuple = (2, 1)
    max_iters: int = 500
    log_lik_tol: float = 0.0
    seed: int = 0
    init_scheme: str = "uniform"
    max_retries: int = 20
    patience: int = 10

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if min(self.dims) < 1:
            raise ValueError("dims must be >= (1, 1)")
        if self.init_scheme != "uniform":
            raise ValueError(f"unknown init scheme {self.init_scheme!r}")


@dataclass
class EmResult:
    params: CdphParams
    trace: np.ndarray
    config: EmConfig
    retries: int = 0
    initial: CdphParams = field(default=None, repr=False)

    @property
    def log_likelihood(self):
        return float(self.trace[-1])


def _check_lattice(params, data):
    if tuple(params.shift) != tuple(data.shift):
        raise ValueError(f"lattice mismatch: model shift {params.shift} vs data shift {data.shift}")


def pair_probabilities(params, data):
    """``f(n1, n2)`` at every distinct observation."""
    _check_lattice(params, data)
    t1, t2 = data.taus.T
    F = pmf_grid(params, int(t1.max()), int(t2.max()))
    return F[t1, t2]


def log_likelihood(params, data):
    """Weighted log-likelihood; ``-inf`` if any observation has zero mass."""
    f = pair_probabilities(params, data)
    if np.any(f <= 0):
        return -np.inf
    return float(data.weights @ np.log(f))


class _Tables:
    """Per-iteration vectors shared across observations."""

    def __init__(self, params, t1, t2):
        self.params = params
        self.L = np.minimum(t1, t2) - 1
        self.Lmax = int(self.L.max())
        P, U = params.P, params.U
        ne = params.n_common
        self.a = np.empty((self.Lmax, ne))
        row = params.alpha.copy()
        for t in range(self.Lmax):
            self.a[t] = row
            row = row @ P
        self.entry = self.a @ U
        self.B = {1: self._split(1, int(t1.max())), 2: self._split(2, int(t2.max()))}

    def _split(self, k, n_max):
        Q = self.params.split_matrix(k)
        out = np.zeros((n_max + 1, self.params.n_split))
        vec = self.params.exit_vector(k)
        # out[z] = Q^(z-1) q for z >= 1; out[0] stays zero as a masked sentinel
        for z in range(1, n_max + 1):
            out[z] = vec
            vec = Q @ vec
        return out


def _forward_split(tables, k, taus, other):
    """Forward vectors over ``S`` for coordinate ``k``.

    ``V[:, t] = sum_{l < t} c_l Q_k^(t-1-l)`` where ``c_l`` is the weight of
    leaving ``E`` at time ``l`` into each split state, times the other
    coordinate's absorption likelihood.
    """
    params = tables.params
    Q = params.split_matrix(k)
    K = taus.size
    n_max = int(taus.max())
    ell = np.arange(1, tables.Lmax + 1)
    valid = ell[None, :] <= tables.L[:, None]
    z_other = np.where(valid, other[:, None] - ell[None, :], 0)
    c = tables.entry[None, :, :] * tables.B[3 - k][z_other]
    V = np.zeros((K, n_max + 1, params.n_split))
    for t in range(1, n_max):
        nxt = V[:, t] @ Q
        if t <= tables.Lmax:
            nxt = nxt + c[:, t - 1]
        V[:, t + 1] = nxt
    return V


def _e_step_core(params, data):
    _check_lattice(params, data)
    t1, t2 = (np.asarray(x) for x in data.taus.T)
    weights = data.weights.astype(float)
    tab = _Tables(params, t1, t2)
    Lmax = tab.Lmax
    K = t1.size
    steps = np.arange(1, Lmax + 1)
    valid = steps[None, :] <= tab.L[:, None]
    z1 = np.where(valid, t1[:, None] - steps[None, :], 0)
    z2 = np.where(valid, t2[:, None] - steps[None, :], 0)
    W = tab.B[1][z1] * tab.B[2][z2]          # (K, Lmax, |S|), zero where masked

    H = np.zeros((K, Lmax + 1, params.n_common))
    for s in range(Lmax - 1, -1, -1):
        H[:, s] = W[:, s] @ params.U.T + H[:, s + 1] @ params.P.T
    f = H[:, 0] @ params.alpha
    if np.any(f <= 0):
        bad = tuple(float(v) for v in data.values[np.argmax(f <= 0)])
        raise ValueError(f"observation {bad} has zero probability under the current parameters")
    coef = weights / f

    stats = SufficientStats.zeros(*params.dims)
    stats.A = params.alpha * (coef @ H[:, 0])
    G = np.einsum("k,kte->te", coef, H[:, 1:Lmax])       # t = 1..Lmax-1
    stats.NA = params.P * (tab.a[:Lmax - 1].T @ G)
    Wsum = np.einsum("k,kts->ts", coef, W)
    stats.NT = params.U * (tab.a.T @ Wsum)

    for k, taus, other in ((1, t1, t2), (2, t2, t1)):
        Q = params.split_matrix(k)
        V = _forward_split(tab, k, taus, other)
        n_max = int(taus.max())
        t = np.arange(n_max + 1)
        inside = (t[None, :] >= 2) & (t[None, :] <= taus[:, None] - 1)
        zb = np.where(inside, taus[:, None] - t[None, :], 0)
        Bk = tab.B[k][zb]                       # (K, n_max+1, |S|)
        NB = Q * np.einsum("k,kti,ktj->ij", coef, V, Bk)
        Nb = params.exit_vector(k) * (coef @ V[np.arange(K), taus])
        if k == 1:
            stats.NB1, stats.Nb1 = NB, Nb
        else:
            stats.NB2, stats.Nb2 = NB, Nb
    loglik = float(weights @ np.log(f))
    return stats, loglik


def e_step(params, data):
    """Conditional expectations of the complete-data statistics given the counts."""
    return _e_step_core(params, data)[0]


def e_step_with_loglik(params, data):
    return _e_step_core(params, data)


def _normalise_rows(counts, previous):
    totals = counts.sum(axis=1, keepdims=True)
    out = np.empty_like(counts)
    empty = totals[:, 0] < ZERO_MASS
    out[~empty] = counts[~empty] / totals[~empty]
    if np.any(empty):
        if previous is None:
            raise ValueError("a state has no expected visits and no previous value to keep")
        out[empty] = previous[empty]
    return out


def mle_fully_observed(stats, shift=DEFAULT_SHIFT, previous=None):
    """Closed-form M-step.

    Rows with (numerically) zero expected visits keep their values from
    ``previous``; without ``previous`` such rows are an error.
    """
    n = stats.A.sum()
    if n < ZERO_MASS:
        raise ValueError("no observations: total start count is zero")
    ne = stats.A.size
    alpha = stats.A / n
    prev_pu = prev_q1 = prev_q2 = None
    if previous is not None:
        prev_pu = np.hstack([previous.P, previous.U])
        prev_q1 = np.hstack([previous.Q1, previous.q1[:, None]])
        prev_q2 = np.hstack([previous.Q2, previous.q2[:, None]])
    pu = _normalise_rows(np.hstack([stats.NA, stats.NT]), prev_pu)
    q1 = _normalise_rows(np.hstack([stats.NB1, stats.Nb1[:, None]]), prev_q1)
    q2 = _normalise_rows(np.hstack([stats.NB2, stats.Nb2[:, None]]), prev_q2)
    return CdphParams(alpha, pu[:, :ne], pu[:, ne:], q1[:, :-1], q2[:, :-1], shift)


def initial_params(config, data, rng):
    """Random start whose likelihood on ``data`` is finite."""
    for attempt in range(config.max_retries + 1):
        params = random_params(*config.dims, rng, shift=data.shift)
        if np.isfinite(log_likelihood(params, data)):
            return params, attempt
    raise RuntimeError(f"no initialisation with positive likelihood after {config.max_retries} retries")


def em_fit(data, config=None, init=None):
    """Run EM from a random (seeded) or supplied start.

    ``trace[i]`` is the log-likelihood after the ``i``-th M-step.
    """
    config = config or EmConfig()
    rng = np.random.default_rng(config.seed)
    retries = 0
    if init is None:
        params, retries = initial_params(config, data, rng)
    else:
        params = init.with_shift(data.shift)
    start = params
    stats, _ = e_step_with_loglik(params, data)
    trace = []
    still = 0
    for it in range(config.max_iters):
        params = mle_fully_observed(stats, data.shift, previous=params)
        stats, ll = e_step_with_loglik(params, data)
        trace.append(ll)
        if config.log_lik_tol > 0 and it > 0:
            still = still + 1 if abs(trace[-1] - trace[-2]) < config.log_lik_tol else 0
            if still >= config.patience:
                log.debug("early stop at iteration %d", it + 1)
                break
    return EmResult(params, np.array(trace), config, retries, start)


def simulate_paths(params, n, rng):
    """Simulate ``n`` fully observed path pairs.

    Returns ``(tau1, tau2, stats)`` where ``stats`` is a dict of per-path
    integer count arrays keyed like :class:`SufficientStats` fields.
    """
    ne, ns = params.dims
    cum_init = np.cumsum(params.alpha)
    cum_init[-1] = 1.0
    states = np.searchsorted(cum_init, rng.random(n), side="right")
    A = np.zeros((n, ne), dtype=np.int64)
    A[np.arange(n), states] = 1
    NA = np.zeros(n * ne * ne, dtype=np.int64)
    NT = np.zeros(n * ne * ns, dtype=np.int64)
    cum = np.cumsum(np.hstack([params.P, params.U]), axis=1)
    cum[:, -1] = 1.0
    m = np.zeros(n, dtype=np.int64)
    entry = np.zeros(n, dtype=np.int64)
    active = np.arange(n)
    step = 0
    while active.size:
        step += 1
        nxt = (cum[states] <= rng.random(active.size)[:, None]).sum(axis=1)
        stay = nxt < ne
        np.add.at(NA, (active[stay] * ne + states[stay]) * ne + nxt[stay], 1)
        go = ~stay
        np.add.at(NT, (active[go] * ne + states[go]) * ns + nxt[go] - ne, 1)
        m[active[go]] = step
        entry[active[go]] = nxt[go] - ne
        active, states = active[stay], nxt[stay]
    out = {"A": A, "NA": NA.reshape(n, ne, ne), "NT": NT.reshape(n, ne, ns)}
    taus = []
    for k in (1, 2):
        Q = params.split_matrix(k)
        cumq = np.cumsum(np.hstack([Q, params.exit_vector(k)[:, None]]), axis=1)
        cumq[:, -1] = 1.0
        NB = np.zeros(n * ns * ns, dtype=np.int64)
        Nb = np.zeros((n, ns), dtype=np.int64)
        z = np.zeros(n, dtype=np.int64)
        active = np.arange(n)
        states = entry.copy()
        step = 0
        while active.size:
            step += 1
            nxt = (cumq[states] <= rng.random(active.size)[:, None]).sum(axis=1)
            stay = nxt < ns
            np.add.at(NB, (active[stay] * ns + states[stay]) * ns + nxt[stay], 1)
            done = ~stay
            Nb[active[done], states[done]] += 1
            z[active[done]] = step
            active, states = active[stay], nxt[stay]
        out[f"NB{k}"] = NB.reshape(n, ns, ns)
        out[f"Nb{k}"] = Nb
        taus.append(m + z)
    return taus[0], taus[1], out


def total_stats(per_path, mask=None):
    """Sum per-path counts (optionally over a boolean mask) into :class:`SufficientStats`."""
    pick = (lambda x: x[mask]) if mask is not None else (lambda x: x)
    return SufficientStats(*(pick(per_path[f]).sum(axis=0).astype(float) for f in _STAT_FIELDS))
