"""Common-shock bivariate discrete phase-type (CDPH) distributions.

Two chains share a path through the common-shock states ``E`` (matrix
``P``), jump together into ``S`` via ``U`` and then run independently with
``Q1`` and ``Q2`` until absorption.  ``tau12`` is the exit time from ``E``
and ``(tau1, tau2)`` are the two absorption times, so the basic support is
``{2, 3, ...}^2``.

State indices are 0-based throughout.
"""

from dataclasses import dataclass
from math import comb

import numpy as np

from .dph import DphParams, factorial_kernel, support_bound
from .linalg import (
    ROW_SUM_TOL,
    as_matrix,
    clamp_small_negatives,
    decays,
    hadamard,
    left_resolvent_apply,
    resolvent_apply,
    validate_substochastic,
)

DEFAULT_SHIFT = (1.0, 2.0, 1.0, 2.0)
LATTICE_TOL = 1e-9
MOMENT_ORDER_CAP = 6


@dataclass(frozen=True, eq=False)
class CdphParams:
    """The five blocks ``(alpha, P, U, Q1, Q2)`` plus lattice metadata.

    ``shift = (c1, k1, c2, k2)`` maps the basic pair to
    ``N_k = c_k (tau_k - 2) + k_k``; the default leaves ``tau`` unchanged.
    """

    alpha: np.ndarray
    P: np.ndarray
    U: np.ndarray
    Q1: np.ndarray
    Q2: np.ndarray
    shift: tuple = DEFAULT_SHIFT

    def __post_init__(self):
        alpha = clamp_small_negatives(np.atleast_1d(np.asarray(self.alpha, dtype=float)), "alpha")
        P = clamp_small_negatives(as_matrix(self.P, "P"), "P")
        U = clamp_small_negatives(as_matrix(self.U, "U"), "U")
        Q1 = clamp_small_negatives(as_matrix(self.Q1, "Q1"), "Q1")
        Q2 = clamp_small_negatives(as_matrix(self.Q2, "Q2"), "Q2")
        ne, ns = alpha.size, Q1.shape[0]
        if P.shape != (ne, ne) or U.shape != (ne, ns) or Q1.shape != (ns, ns) or Q2.shape != (ns, ns):
            raise ValueError(
                f"block shapes do not conform: alpha {alpha.shape}, P {P.shape}, "
                f"U {U.shape}, Q1 {Q1.shape}, Q2 {Q2.shape}")
        if abs(alpha.sum() - 1.0) > ROW_SUM_TOL:
            raise ValueError(f"alpha must sum to 1, sums to {alpha.sum()!r}")
        rows = P.sum(axis=1) + U.sum(axis=1)
        if np.any(np.abs(rows - 1.0) > ROW_SUM_TOL):
            raise ValueError(f"rows of (P U) must sum to 1, got {rows}")
        if not decays(P):
            raise ValueError("common-shock matrix P does not terminate")
        for name, Q in (("Q1", Q1), ("Q2", Q2)):
            report = validate_substochastic(Q)
            if not report.ok:
                raise ValueError(f"{name} is not a terminating sub-stochastic matrix: "
                                 f"{report.failures()}")
        shift = tuple(float(s) for s in self.shift)
        if len(shift) != 4 or shift[0] <= 0 or shift[2] <= 0:
            raise ValueError(f"shift must be (c1, k1, c2, k2) with c1, c2 > 0, got {self.shift}")
        for name, value in (("alpha", alpha), ("P", P), ("U", U), ("Q1", Q1), ("Q2", Q2)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)
        object.__setattr__(self, "shift", shift)

    @property
    def n_common(self):
        return self.alpha.size

    @property
    def n_split(self):
        return self.Q1.shape[0]

    @property
    def dims(self):
        return self.n_common, self.n_split

    @property
    def q1(self):
        return np.clip(1.0 - self.Q1.sum(axis=1), 0.0, None)

    @property
    def q2(self):
        return np.clip(1.0 - self.Q2.sum(axis=1), 0.0, None)

    def exit_vector(self, k):
        return self.q1 if k == 1 else self.q2

    def split_matrix(self, k):
        return self.Q1 if k == 1 else self.Q2

    def with_shift(self, shift):
        return CdphParams(self.alpha, self.P, self.U, self.Q1, self.Q2, shift)

    def block_matrix(self, k):
        """The marginal transient matrix ``[[P, U], [0, Q_k]]`` over ``E u S``."""
        ne, ns = self.dims
        out = np.zeros((ne + ns, ne + ns))
        out[:ne, :ne] = self.P
        out[:ne, ne:] = self.U
        out[ne:, ne:] = self.split_matrix(k)
        return out


@dataclass(frozen=True)
class LatentTriple:
    """``m = tau12``, ``z1 = tau1 - tau12``, ``z2 = tau2 - tau12``."""

    m: int
    z1: int
    z2: int

    def __post_init__(self):
        if min(self.m, self.z1, self.z2) < 1:
            raise ValueError("latent components are positive integers")


def random_params(n_common, n_split, rng, shift=DEFAULT_SHIFT):
    """Uniform(0, 1) entries normalised to satisfy the block constraints."""
    alpha = rng.random(n_common)
    alpha /= alpha.sum()
    pu = rng.random((n_common, n_common + n_split))
    pu /= pu.sum(axis=1, keepdims=True)
    blocks = []
    for _ in range(2):
        qe = rng.random((n_split, n_split + 1))
        qe /= qe.sum(axis=1, keepdims=True)
        blocks.append(qe[:, :n_split])
    return CdphParams(alpha, pu[:, :n_common], pu[:, n_common:], blocks[0], blocks[1], shift)


def marginal(params, k):
    """``tau_k ~ DPH((alpha, 0), [[P, U], [0, Q_k]])``."""
    init = np.concatenate([params.alpha, np.zeros(params.n_split)])
    return DphParams(init, params.block_matrix(k))


def common_shock(params):
    """``tau12 ~ DPH(alpha, P)``."""
    return DphParams(params.alpha, params.P)


def _check_positive(*args):
    for a in args:
        if int(a) != a or a < 1:
            raise ValueError(f"arguments must be positive integers, got {args}")


def _split_vector(params, k, z):
    Q = params.split_matrix(k)
    return np.linalg.matrix_power(Q, int(z) - 1) @ params.exit_vector(k)


def _psi_from(row, params, m, z1, z2):
    entry = row @ np.linalg.matrix_power(params.P, int(m) - 1) @ params.U
    return float(entry @ hadamard(_split_vector(params, 1, z1), _split_vector(params, 2, z2)))


def psi(params, m, z1, z2):
    """``P(tau12 = m, tau1 - tau12 = z1, tau2 - tau12 = z2)``."""
    _check_positive(m, z1, z2)
    return _psi_from(params.alpha, params, m, z1, z2)


def psi_conditional(params, i, m, z1, z2):
    """As :func:`psi`, given both chains start in common-shock state ``i``."""
    if not 0 <= i < params.n_common:
        raise IndexError(f"state {i} outside 0..{params.n_common - 1}")
    _check_positive(m, z1, z2)
    row = np.zeros(params.n_common)
    row[i] = 1.0
    return _psi_from(row, params, m, z1, z2)


# Grid machinery.  Vectors alpha P^(m-1) U and Q_k^(z-1) q_k are built once
# by forward recursion and reused for every cell.

def entry_vectors(params, m_max, start=None):
    """Rows ``start P^(m-1) U`` for ``m = 1..m_max`` (row ``m-1``).

    With ``start=None`` this uses ``alpha``; pass the identity to get the
    per-initial-state version with shape ``(m_max, |E|, |S|)``.
    """
    row = params.alpha if start is None else start
    out = np.empty((m_max,) + np.shape(row @ params.U))
    for m in range(m_max):
        out[m] = row @ params.U
        row = row @ params.P
    return out


def split_vectors(params, k, z_max):
    """Rows ``Q_k^(z-1) q_k`` for ``z = 1..z_max`` (row ``z-1``)."""
    Q = params.split_matrix(k)
    out = np.empty((max(z_max, 0), params.n_split))
    vec = params.exit_vector(k)
    for z in range(z_max):
        out[z] = vec
        vec = Q @ vec
    return out


def pmf_grid(params, n1_max, n2_max):
    """Array ``F`` with ``F[n1, n2] = f(n1, n2)`` for ``0 <= n_k <= n_k_max``."""
    F = np.zeros((n1_max + 1, n2_max + 1))
    m_max = min(n1_max, n2_max) - 1
    if m_max < 1:
        return F
    A = entry_vectors(params, m_max)
    B1 = split_vectors(params, 1, n1_max - 1)
    B2 = split_vectors(params, 2, n2_max - 1)
    for m in range(1, m_max + 1):
        z1 = n1_max - m
        z2 = n2_max - m
        block = (B1[:z1] * A[m - 1]) @ B2[:z2].T
        F[m + 1:, m + 1:] += block
    return F


def conditional_pmf_grid(params, n1_max, n2_max):
    """``G[i, n1, n2] = f(n1, n2 | i)`` over the same index range as :func:`pmf_grid`."""
    ne = params.n_common
    G = np.zeros((ne, n1_max + 1, n2_max + 1))
    m_max = min(n1_max, n2_max) - 1
    if m_max < 1:
        return G
    A = entry_vectors(params, m_max, start=np.eye(ne))
    B1 = split_vectors(params, 1, n1_max - 1)
    B2 = split_vectors(params, 2, n2_max - 1)
    for m in range(1, m_max + 1):
        z1 = n1_max - m
        z2 = n2_max - m
        G[:, m + 1:, m + 1:] += np.einsum("as,is,bs->iab", B1[:z1], A[m - 1], B2[:z2])
    return G


def joint_pmf(params, n1, n2):
    """``f(n1, n2) = sum_{m=1}^{min(n1,n2)-1} psi(m, n1-m, n2-m)``; zero off support."""
    if int(n1) != n1 or int(n2) != n2 or min(n1, n2) < 2:
        return 0.0
    return float(pmf_grid(params, int(n1), int(n2))[-1, -1])


def joint_pmf_conditional(params, i, n1, n2):
    if not 0 <= i < params.n_common:
        raise IndexError(f"state {i} outside 0..{params.n_common - 1}")
    if int(n1) != n1 or int(n2) != n2 or min(n1, n2) < 2:
        return 0.0
    start = np.zeros(params.n_common)
    start[i] = 1.0
    return float(pmf_grid(_restart(params, start), int(n1), int(n2))[-1, -1])


def _restart(params, start):
    return CdphParams(start, params.P, params.U, params.Q1, params.Q2, params.shift)


def to_basic(params, x1, x2):
    """Map lattice points ``(x1, x2)`` back to ``(tau1, tau2)``; raise if off lattice."""
    c1, k1, c2, k2 = params.shift
    out = []
    for x, c, k in ((x1, c1, k1), (x2, c2, k2)):
        t = (x - k) / c
        r = round(t)
        if abs(t - r) > LATTICE_TOL or r < 0:
            raise ValueError(f"{x} is not on the lattice {c}*N + {k}")
        out.append(int(r) + 2)
    return tuple(out)


def from_basic(params, tau1, tau2):
    c1, k1, c2, k2 = params.shift
    return c1 * (tau1 - 2) + k1, c2 * (tau2 - 2) + k2


def shifted_pmf(params, x1, x2):
    """pmf of ``N_k = c_k (tau_k - 2) + k_k`` at a lattice point."""
    return joint_pmf(params, *to_basic(params, x1, x2))


def support_bounds(params, tol=1e-12):
    """``(N1, N2)`` with ``P(tau_k > N_k) < tol`` for each marginal."""
    return support_bound(marginal(params, 1), tol), support_bound(marginal(params, 2), tol)


def _split_resolvent(params, k, zeta):
    # zeta (I - zeta Q)^{-1} q, with the zeta -> 0 limit handled naturally
    return zeta * resolvent_apply(params.split_matrix(k), zeta, params.exit_vector(k))


def joint_pgf_latent(params, zeta0, zeta1, zeta2):
    """``E[zeta0^tau12 zeta1^(tau1-tau12) zeta2^(tau2-tau12)]``.

    Validated for arguments in ``[0, 1]``; larger values are accepted when
    the resolvents exist but are not part of the tested contract.
    """
    entry = zeta0 * (left_resolvent_apply(params.alpha, params.P, zeta0) @ params.U)
    return float(entry @ hadamard(_split_resolvent(params, 1, zeta1),
                                  _split_resolvent(params, 2, zeta2)))


def joint_pgf(params, zeta1, zeta2):
    """``E[zeta1^tau1 zeta2^tau2]``: the latent pgf at ``zeta0 = zeta1 zeta2``."""
    return joint_pgf_latent(params, zeta1 * zeta2, zeta1, zeta2)


def factorial_moment_latent(params, n0, n1, n2):
    """Joint falling-factorial moment of ``(tau12, tau1 - tau12, tau2 - tau12)``."""
    if min(n0, n1, n2) < 0:
        raise ValueError("orders must be non-negative")
    entry = params.alpha @ factorial_kernel(params.P, n0) @ params.U
    v1 = factorial_kernel(params.Q1, n1) @ params.q1
    v2 = factorial_kernel(params.Q2, n2) @ params.q2
    return float(entry @ hadamard(v1, v2))


def stirling2(n, k):
    """Stirling numbers of the second kind by the standard recurrence."""
    table = [[0] * (n + 1) for _ in range(n + 1)]
    table[0][0] = 1
    for i in range(1, n + 1):
        for j in range(1, i + 1):
            table[i][j] = j * table[i - 1][j] + table[i - 1][j - 1]
    return table[n][k] if k <= n else 0


def cross_moment(params, r1, r2, cap=MOMENT_ORDER_CAP):
    """``E[tau1^r1 tau2^r2]`` from the latent factorial moments.

    Expands ``(m + z1)^r1 (m + z2)^r2`` binomially, then rewrites each
    ordinary power as falling factorials via Stirling numbers.
    """
    if r1 < 0 or r2 < 0:
        raise ValueError("orders must be non-negative")
    if r1 + r2 > cap:
        raise ValueError(f"total order {r1 + r2} exceeds cap {cap}")
    cache = {}

    def fm(a, b, c):
        if (a, b, c) not in cache:
            cache[a, b, c] = factorial_moment_latent(params, a, b, c)
        return cache[a, b, c]

    total = 0.0
    for a in range(r1 + 1):
        for b in range(r2 + 1):
            # powers: m^(a+b) z1^(r1-a) z2^(r2-b)
            coef = comb(r1, a) * comb(r2, b)
            p0, p1, p2 = a + b, r1 - a, r2 - b
            inner = 0.0
            for k0 in range(p0 + 1):
                s0 = stirling2(p0, k0)
                if not s0:
                    continue
                for k1 in range(p1 + 1):
                    s1 = stirling2(p1, k1)
                    if not s1:
                        continue
                    for k2 in range(p2 + 1):
                        s2 = stirling2(p2, k2)
                        if s2:
                            inner += s0 * s1 * s2 * fm(k0, k1, k2)
            total += coef * inner
    return total


def shifted_moment(params, r1, r2, cap=MOMENT_ORDER_CAP):
    """``E[N1^r1 N2^r2]`` on the lattice, with ``N_k = c_k tau_k + (k_k - 2 c_k)``."""
    c1, k1, c2, k2 = params.shift
    d1, d2 = k1 - 2 * c1, k2 - 2 * c2
    total = 0.0
    for a in range(r1 + 1):
        for b in range(r2 + 1):
            coef = comb(r1, a) * comb(r2, b) * c1 ** a * d1 ** (r1 - a) * c2 ** b * d2 ** (r2 - b)
            if coef:
                total += coef * cross_moment(params, a, b, cap)
    return total


def covariance(params):
    m1 = cross_moment(params, 1, 0)
    m2 = cross_moment(params, 0, 1)
    return cross_moment(params, 1, 1) - m1 * m2


def _absorption_steps(start, Q, exit_, rng):
    """Steps until absorption for chains started at ``start`` in ``S``."""
    n = start.size
    full = np.hstack([Q, exit_[:, None]])
    cum = np.cumsum(full, axis=1)
    cum[:, -1] = 1.0
    cemetery = Q.shape[0]
    out = np.zeros(n, dtype=np.int64)
    states = start.copy()
    active = np.arange(n)
    step = 0
    while active.size:
        step += 1
        u = rng.random(active.size)
        states = (cum[states] <= u[:, None]).sum(axis=1)
        done = states == cemetery
        out[active[done]] = step
        active = active[~done]
        states = states[~done]
    return out


def cdph_sample_many(params, n, rng):
    """Vectorised exact sampler.

    Returns ``(tau1, tau2, m, z1, z2)`` as integer arrays of length ``n``;
    the shared phase and the split state are drawn first, then the two
    independent tails.
    """
    ne = params.n_common
    cum_init = np.cumsum(params.alpha)
    cum_init[-1] = 1.0
    cum = np.cumsum(np.hstack([params.P, params.U]), axis=1)
    cum[:, -1] = 1.0
    states = np.searchsorted(cum_init, rng.random(n), side="right")
    m = np.zeros(n, dtype=np.int64)
    entry = np.zeros(n, dtype=np.int64)
    active = np.arange(n)
    step = 0
    while active.size:
        step += 1
        u = rng.random(active.size)
        states = (cum[states] <= u[:, None]).sum(axis=1)
        left = states >= ne
        m[active[left]] = step
        entry[active[left]] = states[left] - ne
        active = active[~left]
        states = states[~left]
    z1 = _absorption_steps(entry, params.Q1, params.q1, rng)
    z2 = _absorption_steps(entry, params.Q2, params.q2, rng)
    return m + z1, m + z2, m, z1, z2


def cdph_sample(params, rng):
    """One draw ``(tau1, tau2, LatentTriple)``."""
    t1, t2, m, z1, z2 = cdph_sample_many(params, 1, rng)
    return int(t1[0]), int(t2[0]), LatentTriple(int(m[0]), int(z1[0]), int(z2[0]))
