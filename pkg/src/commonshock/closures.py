"""Closure constructions: min, max and sum of the coordinates, mixtures,
and sums of independent CDPH vectors.

The coupled chain lives on ``E u (S x S) u ({d1} x S) u (S x {d2})``.
``S x S`` is flattened row-major, so the pair ``(j1, j2)`` sits at offset
``j1 * |S| + j2`` inside its block.
"""

from dataclasses import dataclass

import numpy as np

from .cdph import CdphParams
from .dph import DphParams
from .linalg import block_diag, kron

WEIGHT_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class CoupledChainParams:
    """Initial vector and transient matrix of the coupled chain.

    ``block_index[k]`` is ``(label, coords)`` for flat state ``k``, where the
    label is one of ``"E"``, ``"SS"``, ``"D1"`` (first coordinate finished)
    or ``"D2"`` (second finished).
    """

    init: np.ndarray
    Pmax: np.ndarray
    block_index: tuple
    n_common: int
    n_split: int

    def block_slices(self):
        ne, ns = self.n_common, self.n_split
        edges = np.cumsum([0, ne, ns * ns, ns, ns])
        return {label: slice(edges[i], edges[i + 1])
                for i, label in enumerate(("E", "SS", "D1", "D2"))}

    def exit_vector(self):
        return np.clip(1.0 - self.Pmax.sum(axis=1), 0.0, None)


def diagonal_entry(U, n_split):
    """``U*`` with ``u*[i, (j1, j2)] = u[i, j1]`` when ``j1 == j2`` and 0 otherwise."""
    U = np.asarray(U, dtype=float)
    out = np.zeros((U.shape[0], n_split * n_split))
    for j in range(n_split):
        out[:, j * n_split + j] = U[:, j]
    return out


def build_coupled_chain(params):
    ne, ns = params.dims
    Q1, Q2 = params.Q1, params.Q2
    q1 = params.q1[:, None]
    q2 = params.q2[:, None]
    nss = ns * ns
    dim = ne + nss + 2 * ns
    M = np.zeros((dim, dim))
    e, ss, d1, d2 = ne, ne + nss, ne + nss + ns, dim
    M[:e, :e] = params.P
    M[:e, e:ss] = diagonal_entry(params.U, ns)
    M[e:ss, e:ss] = kron(Q1, Q2)
    M[e:ss, ss:d1] = kron(q1, Q2)
    M[e:ss, d1:d2] = kron(Q1, q2)
    M[ss:d1, ss:d1] = Q2
    M[d1:d2, d1:d2] = Q1
    init = np.zeros(dim)
    init[:ne] = params.alpha
    index = ([("E", (i,)) for i in range(ne)]
             + [("SS", (j1, j2)) for j1 in range(ns) for j2 in range(ns)]
             + [("D1", (j,)) for j in range(ns)]
             + [("D2", (j,)) for j in range(ns)])
    return CoupledChainParams(init, M, tuple(index), ne, ns)


def max_dph(params):
    """``max(tau1, tau2)`` is the absorption time of the coupled chain."""
    chain = build_coupled_chain(params)
    return DphParams(chain.init, chain.Pmax)


def min_dph(params):
    """``min(tau1, tau2)`` is the exit time from ``E u (S x S)``."""
    ne, ns = params.dims
    P_min = np.zeros((ne + ns * ns, ne + ns * ns))
    P_min[:ne, :ne] = params.P
    P_min[:ne, ne:] = diagonal_entry(params.U, ns)
    P_min[ne:, ne:] = kron(params.Q1, params.Q2)
    init = np.concatenate([params.alpha, np.zeros(ns * ns)])
    return DphParams(init, P_min)


def sum_dph(params):
    """DPH representation of ``tau1 + tau2``.

    States in ``E u (S x S)`` carry reward 2 and are split into an entry
    copy and a pass-through copy, so each visit costs two steps; the
    single-coordinate blocks keep reward 1.
    """
    chain = build_coupled_chain(params)
    slices = chain.block_slices()
    n = chain.Pmax.shape[0]
    double = np.zeros(n, dtype=bool)
    double[slices["E"]] = True
    double[slices["SS"]] = True
    # entry position of each original state in the expanded chain
    width = np.where(double, 2, 1)
    entry = np.concatenate([[0], np.cumsum(width)[:-1]])
    # the copy whose outgoing row carries the original transitions
    leave = entry + width - 1
    size = int(width.sum())
    M = np.zeros((size, size))
    for s in range(n):
        if double[s]:
            M[entry[s], leave[s]] = 1.0
        M[leave[s], entry] = chain.Pmax[s]
    init = np.zeros(size)
    init[entry] = chain.init
    return DphParams(init, M)


def mixture(components):
    """Finite mixture of CDPH laws via block-diagonal stacking.

    ``components`` is a sequence of ``(weight, CdphParams)`` pairs with
    positive weights summing to one and a common shift.
    """
    components = list(components)
    if not components:
        raise ValueError("mixture needs at least one component")
    weights = np.array([w for w, _ in components], dtype=float)
    if np.any(weights <= 0) or abs(weights.sum() - 1.0) > WEIGHT_TOL:
        raise ValueError(f"weights must be positive and sum to 1, got {weights}")
    shifts = {p.shift for _, p in components}
    if len(shifts) != 1:
        raise ValueError(f"components live on different lattices: {sorted(shifts)}")
    params = [p for _, p in components]
    alpha = np.concatenate([w * p.alpha for w, p in components])
    return CdphParams(
        alpha,
        block_diag(*[p.P for p in params]),
        block_diag(*[p.U for p in params]),
        block_diag(*[p.Q1 for p in params]),
        block_diag(*[p.Q2 for p in params]),
        params[0].shift,
    )


def sum_of_vectors(a, b):
    """CDPH representation of ``(tau1(a) + tau1(b), tau2(a) + tau2(b))``
    for independent basic-support inputs.

    Common-shock states are ``E(a) u (S(a) x E(b))``; split states are
    ``(S(a) x S(b)) u S(b)``.
    """
    for p in (a, b):
        if p.shift != (1.0, 2.0, 1.0, 2.0):
            raise ValueError("sum_of_vectors is defined on the basic (default-shift) support")
    ne1, ns1 = a.dims
    ne2, ns2 = b.dims
    I_s1 = np.eye(ns1)
    I_s2 = np.eye(ns2)

    P = np.zeros((ne1 + ns1 * ne2, ne1 + ns1 * ne2))
    P[:ne1, :ne1] = a.P
    P[:ne1, ne1:] = kron(a.U, b.alpha[None, :])
    P[ne1:, ne1:] = kron(I_s1, b.P)

    U = np.zeros((ne1 + ns1 * ne2, ns1 * ns2 + ns2))
    U[ne1:, :ns1 * ns2] = kron(I_s1, b.U)

    def split(Qa, qa, Qb):
        Q = np.zeros((ns1 * ns2 + ns2, ns1 * ns2 + ns2))
        Q[:ns1 * ns2, :ns1 * ns2] = kron(Qa, I_s2)
        Q[:ns1 * ns2, ns1 * ns2:] = kron(qa[:, None], I_s2)
        Q[ns1 * ns2:, ns1 * ns2:] = Qb
        return Q

    alpha = np.concatenate([a.alpha, np.zeros(ns1 * ne2)])
    return CdphParams(alpha, P, U, split(a.Q1, a.q1, b.Q1), split(a.Q2, a.q2, b.Q2))
