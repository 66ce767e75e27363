"""Small dense matrix kernel shared by the distribution modules.

Matrices are plain 2-d ``numpy`` float arrays; vectors are 1-d arrays.
Everything here is tiny (dimension well under 100), so the routines favour
clarity and explicit checks over speed.
"""

from dataclasses import dataclass

import numpy as np

ROW_SUM_TOL = 1e-9
NEG_CLAMP_TOL = 1e-12
DECAY_TOL = 1e-12
COND_LIMIT = 1e12
# repeated squaring: A^(2^k) for k up to this bound
MAX_SQUARINGS = 60


class NumericalError(ArithmeticError):
    """Raised when a linear solve is singular or ill-conditioned."""


def as_matrix(a, name="matrix"):
    """Coerce ``a`` to a finite 2-d float array."""
    m = np.array(a, dtype=float, ndmin=2)
    if m.ndim != 2:
        raise ValueError(f"{name} must be 2-dimensional, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} has non-finite entries")
    return m


def clamp_small_negatives(a, name="matrix"):
    """Zero out round-off negatives; reject anything more negative."""
    a = np.array(a, dtype=float)
    if np.any(a < -NEG_CLAMP_TOL):
        raise ValueError(f"{name} has negative entries (min {a.min():.3g})")
    a[a < 0] = 0.0
    return a


def _require_square(a):
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")


def mat_power(a, n):
    """Return ``a**n`` (matrix power); ``a**0`` is the identity."""
    a = np.asarray(a, dtype=float)
    _require_square(a)
    if n < 0:
        raise ValueError("power must be non-negative")
    return np.linalg.matrix_power(a, int(n))


def kron(a, b):
    """Kronecker product with row-major (lexicographic) block order."""
    return np.kron(np.atleast_2d(a), np.atleast_2d(b))


def hadamard(u, v):
    """Entrywise product of two equally sized vectors."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch: {u.shape} vs {v.shape}")
    return u * v


def block_diag(*blocks):
    """Block-diagonal assembly of (possibly rectangular) 2-d blocks."""
    blocks = [np.atleast_2d(np.asarray(b, dtype=float)) for b in blocks]
    rows = sum(b.shape[0] for b in blocks)
    cols = sum(b.shape[1] for b in blocks)
    out = np.zeros((rows, cols))
    r = c = 0
    for b in blocks:
        out[r:r + b.shape[0], c:c + b.shape[1]] = b
        r += b.shape[0]
        c += b.shape[1]
    return out


def decays(a, tol=DECAY_TOL):
    """True if ``|a|^T 1`` drops below ``tol`` for some T.

    Powers are formed by repeated squaring, so T runs over 1, 2, 4, ...
    ``2**MAX_SQUARINGS``.  For a non-negative matrix this certifies a
    spectral radius strictly below one without an eigensolver.
    """
    m = np.abs(np.asarray(a, dtype=float))
    _require_square(m)
    for _ in range(MAX_SQUARINGS + 1):
        norm = m.sum(axis=1).max() if m.size else 0.0
        if norm < tol:
            return True
        if not np.isfinite(norm) or norm > 1e150:
            return False
        m = m @ m
    return False


def neumann_converges(a, x=1.0):
    """Certify ``rho(x a) < 1`` via ``||(x a)^(2^k)||_inf < 1`` for some k."""
    m = x * np.asarray(a, dtype=float)
    for _ in range(MAX_SQUARINGS + 1):
        norm = np.abs(m).sum(axis=1).max() if m.size else 0.0
        if norm < 1.0:
            return True
        if not np.isfinite(norm) or norm > 1e150:
            return False
        m = m @ m
    return False


def resolvent_apply(a, x, v):
    """Solve ``(I - x a) w = v`` for ``w``.

    ``v`` may be a vector or a matrix of right-hand sides.  Raises
    :class:`NumericalError` when the Neumann series for ``(I - x a)^{-1}``
    cannot be certified to converge or the system is ill-conditioned.
    """
    a = np.asarray(a, dtype=float)
    _require_square(a)
    v = np.asarray(v, dtype=float)
    if v.shape[0] != a.shape[0]:
        raise ValueError(f"dimension mismatch: {a.shape} vs {v.shape}")
    if not neumann_converges(a, x):
        raise NumericalError(f"spectral radius of x*A not below 1 (x={x})")
    system = np.eye(a.shape[0]) - x * a
    if np.linalg.cond(system, p=1) > COND_LIMIT:
        raise NumericalError("resolvent system is ill-conditioned")
    return np.linalg.solve(system, v)


def left_resolvent_apply(row, a, x):
    """Row-vector form: return ``row (I - x a)^{-1}``."""
    return resolvent_apply(np.asarray(a, dtype=float).T, x, np.asarray(row, dtype=float))


@dataclass(frozen=True)
class SubstochasticReport:
    entries_ok: bool
    row_sums_ok: bool
    terminates: bool
    has_exit: bool = True

    @property
    def ok(self):
        return self.entries_ok and self.row_sums_ok and self.terminates and self.has_exit

    def failures(self):
        names = ("entries_ok", "row_sums_ok", "terminates", "has_exit")
        return [n for n in names if not getattr(self, n)]


def validate_substochastic(a, strict_exit=False, tol=ROW_SUM_TOL):
    """Check that ``a`` is sub-stochastic and that its chain terminates.

    The report is returned rather than raised so callers can decide how
    strict to be.
    """
    a = np.asarray(a, dtype=float)
    _require_square(a)
    entries_ok = bool(np.all(np.isfinite(a)) and np.all(a >= -NEG_CLAMP_TOL)
                      and np.all(a <= 1 + tol))
    row_sums = a.sum(axis=1)
    row_sums_ok = bool(np.all(row_sums <= 1 + tol))
    terminates = entries_ok and decays(a)
    has_exit = bool(np.any(row_sums < 1)) if strict_exit else True
    return SubstochasticReport(entries_ok, row_sums_ok, terminates, has_exit)
