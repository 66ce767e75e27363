import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from commonshock import CdphParams, random_params
from commonshock.cdph import (
    LatentTriple,
    cdph_sample,
    cdph_sample_many,
    conditional_pmf_grid,
    covariance,
    cross_moment,
    factorial_moment_latent,
    joint_pgf,
    joint_pgf_latent,
    joint_pmf,
    joint_pmf_conditional,
    marginal,
    pmf_grid,
    psi,
    psi_conditional,
    shifted_moment,
    shifted_pmf,
    stirling2,
    support_bounds,
    to_basic,
)
from commonshock.dph import dph_factorial_moment, dph_pgf, dph_pmf_vector
from oracles import brute_psi_sum, pair_chain_pmf, scalar_model


def falling(x, n):
    out = 1
    for j in range(n):
        out *= x - j
    return out


def model_strategy(e_max=4, s_max=4):
    return st.builds(lambda seed, e, s: random_params(e, s, np.random.default_rng(seed)),
                     st.integers(0, 2**31), st.integers(1, e_max), st.integers(1, s_max))


def full_grid(params, tol=1e-13):
    N1, N2 = support_bounds(params, tol)
    return pmf_grid(params, N1, N2)


class TestPsi:
    def test_scalar_values(self, scalar):
        assert psi(scalar, 1, 1, 1) == pytest.approx(0.1875, abs=1e-15)
        assert psi(scalar, 2, 1, 1) == pytest.approx(0.09375, abs=1e-15)

    def test_rejects_non_positive(self, scalar):
        with pytest.raises(ValueError):
            psi(scalar, 0, 1, 1)

    def test_conditional_single_state(self, scalar):
        assert psi_conditional(scalar, 0, 2, 3, 1) == psi(scalar, 2, 3, 1)
        assert psi_conditional(scalar, 0, 1, 1, 1) == pytest.approx(0.1875)
        with pytest.raises(IndexError):
            psi_conditional(scalar, 1, 1, 1, 1)

    @given(model_strategy(3, 3), st.integers(1, 5), st.integers(1, 5), st.integers(1, 5))
    @settings(max_examples=40, deadline=None)
    def test_mixture_over_start_states(self, params, m, z1, z2):
        mix = sum(params.alpha[i] * psi_conditional(params, i, m, z1, z2) for i in range(params.n_common))
        assert mix == pytest.approx(psi(params, m, z1, z2), abs=1e-12)

    @given(model_strategy(3, 3), st.integers(1, 5), st.integers(1, 5), st.integers(1, 5))
    @settings(max_examples=40, deadline=None)
    def test_termwise_hadamard(self, params, m, z1, z2):
        entry = params.alpha @ np.linalg.matrix_power(params.P, m - 1) @ params.U
        v1 = np.linalg.matrix_power(params.Q1, z1 - 1) @ params.q1
        v2 = np.linalg.matrix_power(params.Q2, z2 - 1) @ params.q2
        terms = sum(entry[j] * v1[j] * v2[j] for j in range(params.n_split))
        assert psi(params, m, z1, z2) == pytest.approx(terms, abs=1e-14)


class TestJointPmf:
    def test_scalar_values(self, scalar):
        assert joint_pmf(scalar, 2, 2) == pytest.approx(0.1875, abs=1e-15)
        assert joint_pmf(scalar, 3, 2) == pytest.approx(0.046875, abs=1e-15)

    def test_off_support_is_zero(self, scalar):
        assert joint_pmf(scalar, 5, 1) == 0.0
        assert joint_pmf(scalar, 2.5, 3) == 0.0

    def test_conditional(self, scalar):
        assert joint_pmf_conditional(scalar, 0, 2, 2) == pytest.approx(0.1875)
        assert joint_pmf_conditional(scalar, 0, 4, 6) == pytest.approx(joint_pmf(scalar, 4, 6))

    @given(model_strategy(3, 3))
    @settings(max_examples=25, deadline=None)
    def test_total_probability_over_start_states(self, params):
        G = conditional_pmf_grid(params, 8, 7)
        F = pmf_grid(params, 8, 7)
        assert np.abs(np.tensordot(params.alpha, G, axes=1) - F).max() <= 1e-12

    @given(model_strategy())
    @settings(max_examples=30, deadline=None)
    def test_normalisation(self, params):
        assert abs(full_grid(params, 1e-13).sum() - 1.0) <= 1e-10

    @given(model_strategy(3, 3))
    @settings(max_examples=25, deadline=None)
    def test_marginals(self, params):
        F = full_grid(params, 1e-14)
        for k, axis in ((1, 1), (2, 0)):
            row = F.sum(axis=axis)
            pmf = dph_pmf_vector(marginal(params, k), row.size - 1)
            assert np.abs(row[1:] - pmf).max() <= 1e-10

    @given(model_strategy(3, 3))
    @settings(max_examples=25, deadline=None)
    def test_pair_chain_oracle(self, params):
        assert np.abs(pmf_grid(params, 12, 10) - pair_chain_pmf(params, 12, 10)).max() <= 1e-14

    def test_mdph_reduction(self, rng):
        beta = rng.random(3)
        beta /= beta.sum()
        full = rng.random((3, 4))
        full /= full.sum(axis=1, keepdims=True)
        Q, q = full[:, :3], full[:, 3]
        params = CdphParams([1.0], [[0.0]], beta[None, :], Q, Q)
        for n1 in range(2, 8):
            for n2 in range(2, 8):
                expect = sum(beta[j] * (np.linalg.matrix_power(Q, n1 - 2) @ q)[j]
                             * (np.linalg.matrix_power(Q, n2 - 2) @ q)[j] for j in range(3))
                assert joint_pmf(params, n1, n2) == pytest.approx(expect, abs=1e-12)


class TestShift:
    def test_translation(self, scalar):
        m = scalar.with_shift((1, 0, 1, 0))
        assert shifted_pmf(m, 0, 0) == joint_pmf(scalar, 2, 2)

    def test_identity_shift(self, scalar):
        assert shifted_pmf(scalar, 2, 2) == joint_pmf(scalar, 2, 2)

    def test_scaled(self, scalar):
        m = scalar.with_shift((2, 0, 1, 0))
        assert shifted_pmf(m, 2, 1) == joint_pmf(scalar, 3, 3)

    def test_off_lattice(self, scalar):
        with pytest.raises(ValueError):
            to_basic(scalar.with_shift((2, 0, 1, 0)), 1, 1)

    def test_invalid_shift(self, scalar):
        with pytest.raises(ValueError):
            scalar.with_shift((0, 0, 1, 0))

    def test_shifted_moments(self, scalar):
        m = scalar.with_shift((2, 1, 3, 0))
        grid = full_grid(scalar, 1e-15)
        n1, n2 = np.meshgrid(np.arange(grid.shape[0]), np.arange(grid.shape[1]), indexing="ij")
        x1, x2 = 2 * (n1 - 2) + 1, 3 * (n2 - 2)
        assert shifted_moment(m, 1, 1) == pytest.approx(float((x1 * x2 * grid).sum()), rel=1e-10)


class TestPgf:
    def test_normalisation(self, scalar):
        assert joint_pgf_latent(scalar, 1, 1, 1) == pytest.approx(1.0, abs=1e-12)
        assert joint_pgf(scalar, 1, 1) == pytest.approx(1.0, abs=1e-12)

    def test_geometric_common_shock(self, scalar):
        assert joint_pgf_latent(scalar, 0.5, 1, 1) == pytest.approx(1 / 3, abs=1e-14)

    def test_zero_argument(self, scalar):
        assert joint_pgf_latent(scalar, 0.0, 0.5, 0.5) == 0.0

    def test_latent_brute(self, scalar):
        z = (0.3, 0.6, 0.9)
        brute = brute_psi_sum(scalar, lambda m, a, b: z[0] ** m * z[1] ** a * z[2] ** b)
        assert joint_pgf_latent(scalar, *z) == pytest.approx(brute, abs=1e-8)

    def test_scalar_brute(self, scalar):
        F = full_grid(scalar, 1e-15)
        n1, n2 = np.meshgrid(np.arange(F.shape[0]), np.arange(F.shape[1]), indexing="ij")
        assert joint_pgf(scalar, 0.5, 0.5) == pytest.approx(float((0.5 ** n1 * 0.5 ** n2 * F).sum()), abs=1e-8)

    @given(model_strategy(3, 3), st.sampled_from([0.3, 0.7]), st.sampled_from([0.3, 0.7]))
    @settings(max_examples=25, deadline=None)
    def test_duality(self, params, z1, z2):
        F = full_grid(params, 1e-13)
        n1, n2 = np.meshgrid(np.arange(F.shape[0]), np.arange(F.shape[1]), indexing="ij")
        assert joint_pgf(params, z1, z2) == pytest.approx(float((z1 ** n1 * z2 ** n2 * F).sum()), abs=1e-8)

    @given(model_strategy(3, 3), st.floats(0.05, 1.0))
    @settings(max_examples=25, deadline=None)
    def test_marginal_pgf(self, params, z):
        assert joint_pgf(params, z, 1.0) == pytest.approx(dph_pgf(marginal(params, 1), z), abs=1e-10)


class TestMoments:
    def test_trivial(self, scalar):
        assert factorial_moment_latent(scalar, 0, 0, 0) == pytest.approx(1.0, abs=1e-12)
        assert factorial_moment_latent(scalar, 1, 0, 0) == pytest.approx(2.0, abs=1e-12)
        assert cross_moment(scalar, 0, 0) == pytest.approx(1.0, abs=1e-12)

    def test_latent_brute(self, scalar):
        brute = brute_psi_sum(scalar, lambda m, a, b: m * a * b)
        assert factorial_moment_latent(scalar, 1, 1, 1) == pytest.approx(brute, abs=1e-7)

    def test_cross_moment_brute(self, scalar):
        F = full_grid(scalar, 1e-16)
        n1, n2 = np.meshgrid(np.arange(F.shape[0]), np.arange(F.shape[1]), indexing="ij")
        assert cross_moment(scalar, 2, 1) == pytest.approx(float((n1 ** 2 * n2 * F).sum()), abs=1e-6)

    @given(model_strategy(3, 3))
    @settings(max_examples=25, deadline=None)
    def test_marginal_mean(self, params):
        assert cross_moment(params, 1, 0) == pytest.approx(dph_factorial_moment(marginal(params, 1), 1), abs=1e-10)
        assert cross_moment(params, 0, 1) == pytest.approx(dph_factorial_moment(marginal(params, 2), 1), abs=1e-10)

    def test_cap(self, scalar):
        with pytest.raises(ValueError):
            cross_moment(scalar, 4, 3)

    def test_stirling(self):
        assert [stirling2(4, k) for k in range(5)] == [0, 1, 7, 6, 1]
        assert stirling2(0, 0) == 1


class TestSampler:
    def test_determinism(self, scalar):
        a = cdph_sample(scalar, np.random.default_rng(4))
        b = cdph_sample(scalar, np.random.default_rng(4))
        assert a == b
        t1, t2, latent = a
        assert isinstance(latent, LatentTriple)
        assert (t1, t2) == (latent.m + latent.z1, latent.m + latent.z2)

    def test_latent_triple_validation(self):
        with pytest.raises(ValueError):
            LatentTriple(0, 1, 1)

    @pytest.mark.slow
    def test_positive_correlation(self, scalar):
        t1, t2, *_ = cdph_sample_many(scalar, 200_000, np.random.default_rng(8))
        emp = np.cov(t1, t2)[0, 1]
        exact = covariance(scalar)
        assert exact > 0 and emp > 0
        # standard error of a sample covariance, estimated from the sample
        d = (t1 - t1.mean()) * (t2 - t2.mean())
        assert abs(emp - exact) <= 4 * d.std() / np.sqrt(t1.size)
