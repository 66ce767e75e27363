"""Reference data generators, empirical pmfs and fit diagnostics.

Counts ``N*`` on ``{0, 1, ...}`` are fitted as ``N* + 2``, i.e. on the
lattice with shift ``(1, 0, 1, 0)`` (see :data:`COUNT_SHIFT`).
"""

import csv
import json
from dataclasses import dataclass

import numpy as np
from scipy.stats import poisson

from .cdph import common_shock, marginal, pmf_grid
from .dph import dph_pmf_vector, support_bound
from .estimate import CountDataset, EmConfig, em_fit

COUNT_SHIFT = (1.0, 0.0, 1.0, 0.0)
WINDOW_MASS = 1e-6
STUDY_DIMS = ((2, 1), (3, 2), (4, 3))
STUDY_SIZE = 10_000


@dataclass(frozen=True)
class BivPoissonSpec:
    """``N1 = V1 + Z``, ``N2 = V2 + Z`` with independent Poisson ``V1, V2, Z``.

    ``lambda_V1`` or ``lambda_V2`` may be zero (pure common shock).
    """

    lambda_V1: float
    lambda_V2: float
    lambda_Z: float

    def __post_init__(self):
        if min(self.lambda_V1, self.lambda_V2) < 0 or self.lambda_Z <= 0:
            raise ValueError("Poisson intensities must be positive (V rates may be 0)")

    @classmethod
    def from_marginals(cls, lambda_N1, lambda_N2, lambda_Z):
        return cls(lambda_N1 - lambda_Z, lambda_N2 - lambda_Z, lambda_Z)


@dataclass(frozen=True)
class PoissonLindleySpec:
    """Conditionally independent Poisson counts with means ``rate_k * L``, ``L ~ Lindley(theta)``."""

    theta: float
    rate1: float
    rate2: float

    def __post_init__(self):
        if min(self.theta, self.rate1, self.rate2) <= 0:
            raise ValueError("theta and rates must be positive")


def sample_biv_poisson_counts(spec, n, rng):
    if n < 1:
        raise ValueError("n must be >= 1")
    z = rng.poisson(spec.lambda_Z, n)
    return rng.poisson(spec.lambda_V1, n) + z, rng.poisson(spec.lambda_V2, n) + z


def sample_biv_poisson(spec, n, rng):
    return CountDataset.from_observations(*sample_biv_poisson_counts(spec, n, rng), shift=COUNT_SHIFT)


def sample_lindley(theta, n, rng):
    """Lindley draws as the mixture ``Exp(theta)`` w.p. ``theta/(theta+1)``, else ``Gamma(2, theta)``."""
    shape = np.where(rng.random(n) < theta / (theta + 1.0), 1.0, 2.0)
    return rng.gamma(shape, 1.0 / theta)


def lindley_mean(theta):
    return (theta + 2.0) / (theta * (theta + 1.0))


def sample_poisson_lindley_counts(spec, n, rng):
    if n < 1:
        raise ValueError("n must be >= 1")
    lam = sample_lindley(spec.theta, n, rng)
    return rng.poisson(spec.rate1 * lam), rng.poisson(spec.rate2 * lam)


def sample_poisson_lindley(spec, n, rng):
    return CountDataset.from_observations(*sample_poisson_lindley_counts(spec, n, rng), shift=COUNT_SHIFT)


def biv_poisson_pmf(spec, n1, n2):
    """Closed-form pmf by convolving over the shared component."""
    z = np.arange(min(n1, n2) + 1)
    return float(np.sum(poisson.pmf(z, spec.lambda_Z)
                        * poisson.pmf(n1 - z, spec.lambda_V1)
                        * poisson.pmf(n2 - z, spec.lambda_V2)))


@dataclass(frozen=True, eq=False)
class EmpiricalPmf:
    """Relative frequencies on the grid ``x1 = x1_values[i]``, ``x2 = x2_values[j]``."""

    x1_values: np.ndarray
    x2_values: np.ndarray
    freq: np.ndarray
    size: int


def empirical_pmf(data):
    if data.size < 1:
        raise ValueError("empty dataset")
    c1, k1, c2, k2 = data.shift
    t1, t2 = data.taus.T
    grid = np.zeros((t1.max() - 1, t2.max() - 1))
    np.add.at(grid, (t1 - 2, t2 - 2), data.weights)
    x1 = c1 * np.arange(grid.shape[0]) + k1
    x2 = c2 * np.arange(grid.shape[1]) + k2
    return EmpiricalPmf(x1, x2, grid / data.size, data.size)


def total_variation(p, q):
    """Half the l1 distance between two pmfs on a common grid."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError("pmf grids differ in shape")
    return 0.5 * float(np.abs(p - q).sum())


def _quantile_index(pmf, mass):
    # first index whose cumulative mass reaches 1 - mass
    cum = np.cumsum(pmf)
    hit = np.nonzero(cum >= 1.0 - mass)[0]
    return int(hit[0]) if hit.size else pmf.size - 1


@dataclass
class FitReport:
    x1_values: np.ndarray
    x2_values: np.ndarray
    empirical: np.ndarray
    fitted: np.ndarray
    difference: np.ndarray
    tv_distance: float
    marginals: tuple
    shock_values: np.ndarray
    shock_pmf: np.ndarray
    outside_mass: float

    def metrics(self):
        return {
            "tv_distance": self.tv_distance,
            "fitted_mass_outside_window": self.outside_mass,
            "window": [[float(self.x1_values[0]), float(self.x1_values[-1])],
                       [float(self.x2_values[0]), float(self.x2_values[-1])]],
        }


def fit_report(data, fitted, window_mass=WINDOW_MASS):
    """Compare the empirical pmf of ``data`` with the fitted CDPH law.

    The window is the smallest lattice rectangle from the origin of the
    support that holds ``1 - window_mass`` of each fitted marginal and all
    empirical mass.  The TV distance adds the fitted mass outside it.
    """
    if tuple(fitted.shift) != tuple(data.shift):
        raise ValueError(f"lattice mismatch: model shift {fitted.shift} vs data shift {data.shift}")
    emp = empirical_pmf(data)
    bounds = []
    for k in (1, 2):
        m = marginal(fitted, k)
        pmf = dph_pmf_vector(m, support_bound(m, window_mass) + 1)
        fit_top = _quantile_index(pmf, window_mass) + 1          # tau - 2 index
        bounds.append(max(fit_top, emp.freq.shape[k - 1] - 1))
    n1, n2 = bounds[0] + 1, bounds[1] + 1
    empirical = np.zeros((n1, n2))
    empirical[:emp.freq.shape[0], :emp.freq.shape[1]] = emp.freq
    full = pmf_grid(fitted, n1 + 1, n2 + 1)
    model = full[2:, 2:]
    outside = max(0.0, 1.0 - float(model.sum()))
    c1, k1, c2, k2 = fitted.shift
    x1 = c1 * np.arange(n1) + k1
    x2 = c2 * np.arange(n2) + k2
    tv = total_variation(empirical, model) + 0.5 * outside
    marg = tuple((xs, empirical.sum(axis=ax), model.sum(axis=ax))
                 for xs, ax in ((x1, 1), (x2, 0)))
    shock = common_shock(fitted)
    L = support_bound(shock, window_mass) + 1
    shock_pmf = dph_pmf_vector(shock, L)
    return FitReport(x1, x2, empirical, model, np.abs(empirical - model), tv,
                     marg, np.arange(L), shock_pmf, outside)


def _fmt(x):
    return repr(float(x)) if isinstance(x, (float, np.floating)) else str(x)


def write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def write_grid_csv(path, x1, x2, grid):
    """Long-format grid: one ``x1,x2,value`` row per cell, row-major, no holes."""
    write_csv(path, ("x1", "x2", "value"),
              ((a, b, grid[i, j]) for i, a in enumerate(x1) for j, b in enumerate(x2)))


def write_trace_csv(path, trace):
    write_csv(path, ("iteration", "log_likelihood"),
              ((i + 1, float(v)) for i, v in enumerate(trace)))


def write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_report(report, out_dir, prefix=""):
    """Emit every table of a :class:`FitReport` into ``out_dir``."""
    out_dir.mkdir(parents=True, exist_ok=True)
    write_grid_csv(out_dir / f"{prefix}empirical_grid.csv", report.x1_values, report.x2_values, report.empirical)
    write_grid_csv(out_dir / f"{prefix}fitted_grid.csv", report.x1_values, report.x2_values, report.fitted)
    write_grid_csv(out_dir / f"{prefix}difference_grid.csv", report.x1_values, report.x2_values, report.difference)
    for k, (xs, e, f) in enumerate(report.marginals, start=1):
        write_csv(out_dir / f"{prefix}marginal{k}.csv", ("x", "empirical", "fitted"), zip(xs, e, f))
    write_csv(out_dir / f"{prefix}common_shock.csv", ("shock", "probability"),
              zip(report.shock_values, report.shock_pmf))
    write_json(out_dir / f"{prefix}metrics.json", report.metrics())


STUDIES = {
    "poisson-1": ("poisson", BivPoissonSpec.from_marginals(5.0, 4.0, 1.0)),
    "poisson-2": ("poisson", BivPoissonSpec.from_marginals(5.0, 4.0, 2.0)),
    "poisson-3": ("poisson", BivPoissonSpec.from_marginals(5.0, 4.0, 3.0)),
    "lindley": ("lindley", PoissonLindleySpec(2.0, 2.0, 3.0)),
    "userdata": ("userdata", None),
}


def study_data(study, seed, n=STUDY_SIZE, data=None):
    kind, spec = STUDIES[study]
    rng = np.random.default_rng(seed)
    if kind == "poisson":
        return sample_biv_poisson(spec, n, rng)
    if kind == "lindley":
        return sample_poisson_lindley(spec, n, rng)
    if data is None:
        raise ValueError("userdata study needs an input dataset")
    return data


def run_study(data, seed, dims_list=STUDY_DIMS, max_iters=500):
    """Fit each configuration on the same data and seed; returns ``{dims: (EmResult, FitReport)}``."""
    out = {}
    for dims in dims_list:
        result = em_fit(data, EmConfig(dims=tuple(dims), max_iters=max_iters, seed=seed))
        out[tuple(dims)] = (result, fit_report(data, result.params))
    return out


def shock_mode(params):
    """Most likely common-shock length (in ``tau`` steps minus one)."""
    shock = common_shock(params)
    pmf = dph_pmf_vector(shock, support_bound(shock) + 1)
    return int(np.argmax(pmf))


__all__ = [
    "BivPoissonSpec", "PoissonLindleySpec", "EmpiricalPmf", "FitReport", "COUNT_SHIFT",
    "sample_biv_poisson", "sample_poisson_lindley", "biv_poisson_pmf", "lindley_mean",
    "empirical_pmf", "total_variation", "fit_report", "run_study", "study_data", "STUDIES",
    "write_report", "write_trace_csv", "write_grid_csv", "write_csv", "write_json", "shock_mode",
    "sample_lindley",
]
