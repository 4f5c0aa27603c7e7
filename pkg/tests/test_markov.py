import numpy as np
import pytest

from ttrs import (
    DegenerateError,
    GinzburgLandauSpec,
    IsingSpec,
    MarkovSpec,
    TensorTrain,
    gl_discretize,
    gl_energy,
    gl_grid,
    homogeneous_markov_spec,
    ising_coupling,
    ising_energy,
    ising_spec_to_markov,
    markov_spec_from_json,
    markov_spec_to_json,
    markov_to_tt,
    marginal,
    random_markov_spec,
    sample_ancestral,
    sample_from_tt,
    sample_gibbs,
    sample_mh_continuous,
    tt_contract_full,
    window_marginal,
)
from ttrs.markov import gl_chain_factors, ising_chain_factors, mh_acceptance_probability
from ttrs.validation import concentration_bound

from helpers import dense_boltzmann, dense_chain_density, statistical_pass


class TestGinzburgLandau:
    def test_zero_configuration_energy(self):
        for d, beta, lam in [(3, 1.0, 1.0), (8, 2.0, 0.5)]:
            spec = GinzburgLandauSpec(d=d, beta=beta, lam=lam)
            x = np.zeros(d)
            assert gl_energy(spec, x) == pytest.approx(beta * (d + 1) / (4 * lam))

    def test_grid_contains_zero_for_odd_n(self):
        spec = GinzburgLandauSpec(d=3)
        assert 0.0 in gl_grid(spec, 9)

    def test_kernels_stochastic(self):
        mspec = gl_discretize(GinzburgLandauSpec(d=6), 7)
        for ker in mspec.kernels:
            assert np.allclose(ker.sum(axis=-1), 1.0, atol=1e-12)
        assert mspec.initial.sum() == pytest.approx(1.0, abs=1e-12)

    def test_density_matches_brute_force_normalization(self):
        spec = GinzburgLandauSpec(d=3)
        n = 3
        mspec = gl_discretize(spec, n)
        dense = dense_chain_density(mspec)
        z = gl_grid(spec, n)
        oracle = dense_boltzmann(lambda x: gl_energy(spec, x), [z, z, z])
        assert np.allclose(dense, oracle, atol=1e-12)

    def test_parameter_validation(self):
        with pytest.raises(ValueError):
            GinzburgLandauSpec(d=3, beta=-1.0)
        with pytest.raises(ValueError):
            GinzburgLandauSpec(d=3, a=4.0, b=-4.0)


class TestIsing:
    def test_coupling_values(self):
        assert ising_coupling(1, 2) == pytest.approx(-1 / 2)
        assert ising_coupling(1, 3) == pytest.approx(-1 / 3)
        assert ising_coupling(1, 4) == 0.0
        assert ising_coupling(5, 3) == pytest.approx(-1 / 3)

    def test_energy_matches_full_double_sum(self):
        spec = IsingSpec(d=5, beta=0.4)
        rng = np.random.default_rng(0)
        x = rng.choice([-1.0, 1.0], size=5)
        brute = sum(
            ising_coupling(i + 1, j + 1) * x[i] * x[j]
            for i in range(5)
            for j in range(5)
        )
        assert ising_energy(spec, x) == pytest.approx(brute, abs=1e-12)

    def test_density_matches_enumeration(self):
        spec = IsingSpec(d=4, beta=0.4)
        dense = dense_chain_density(ising_spec_to_markov(spec))
        vals = np.array(spec.alphabet)
        oracle = dense_boltzmann(
            lambda x: spec.beta * ising_energy(spec, x), [vals] * 4
        )
        assert np.allclose(dense, oracle, atol=1e-12)

    def test_global_flip_symmetry(self):
        spec = IsingSpec(d=4, beta=0.4)
        dense = dense_chain_density(ising_spec_to_markov(spec))
        assert np.allclose(dense, dense[::-1, ::-1, ::-1, ::-1], atol=1e-12)

    def test_five_state_alphabet(self):
        spec = IsingSpec(d=4, beta=0.2, alphabet=(-2, -1, 0, 1, 2))
        dense = dense_chain_density(ising_spec_to_markov(spec))
        vals = np.array(spec.alphabet)
        oracle = dense_boltzmann(
            lambda x: spec.beta * ising_energy(spec, x), [vals] * 4
        )
        assert np.allclose(dense, oracle, atol=1e-12)


class TestMarkovToTT:
    def test_product_density_is_rank_one(self):
        margs = [np.array([0.2, 0.8]), np.array([0.5, 0.5]), np.array([0.9, 0.1])]
        spec = MarkovSpec(
            order=1,
            extents=(2, 2, 2),
            initial=margs[0],
            kernels=(np.tile(margs[1], (2, 1)), np.tile(margs[2], (2, 1))),
        )
        tt = markov_to_tt(spec)
        dense = tt_contract_full(tt)
        for k in (1, 2):
            svals = np.linalg.svd(dense.reshape(2**k, -1), compute_uv=False)
            assert svals[1] <= 1e-14 * svals[0]

    def test_random_chain_matches_enumeration(self):
        spec = random_markov_spec(4, 3, seed=1)
        assert np.abs(
            tt_contract_full(markov_to_tt(spec)) - dense_chain_density(spec)
        ).max() <= 1e-13

    def test_order_two_chain_matches_enumeration(self):
        spec = random_markov_spec(5, 2, order=2, seed=2)
        assert np.abs(
            tt_contract_full(markov_to_tt(spec)) - dense_chain_density(spec)
        ).max() <= 1e-13

    def test_gl_unfolding_ranks_bounded(self):
        mspec = gl_discretize(GinzburgLandauSpec(d=8), 9)
        tt = markov_to_tt(mspec)
        assert all(r <= 9 for r in tt.ranks)

    def test_window_marginal_matches_enumeration(self):
        spec = random_markov_spec(6, 3, order=2, seed=3)
        dense = dense_chain_density(spec)
        got = window_marginal(spec, 2, 5)
        expect = dense.sum(axis=(0, 5))
        assert np.allclose(got, expect, atol=1e-12)
        got = window_marginal(spec, 5, 6)
        assert np.allclose(got, dense.sum(axis=(0, 1, 2, 3)), atol=1e-12)


class TestAncestral:
    def test_deterministic_given_seed(self):
        spec = random_markov_spec(5, 3, seed=4)
        a = sample_ancestral(spec, 400, seed=9)
        b = sample_ancestral(spec, 400, seed=9)
        assert np.array_equal(a.values, b.values)

    def test_permutation_chain_follows_orbit(self):
        # deterministic kernels: state cycles 1 -> 2 -> 3 -> 1
        perm = np.zeros((3, 3))
        perm[0, 1] = perm[1, 2] = perm[2, 0] = 1.0
        spec = MarkovSpec(order=1, extents=(3,) * 4,
                          initial=np.array([1.0, 0.0, 0.0]),
                          kernels=(perm,) * 3)
        s = sample_ancestral(spec, 50, seed=0)
        assert np.array_equal(s.values, np.tile([1, 2, 3, 1], (50, 1)))

    def test_marginals_concentrate(self):
        spec = random_markov_spec(2, 3, seed=5)
        truth = window_marginal(spec, 1, 2)
        n_samples = 10**5
        bound = concentration_bound(9, 1, n_samples, 0.05)

        def run_bank(bank):
            hits = sum(
                np.abs(
                    marginal(sample_ancestral(spec, n_samples, seed=s), (1, 2)).frequency
                    - truth
                ).max()
                <= bound
                for s in bank
            )
            return hits >= int(0.95 * len(bank)), f"{hits}/{len(bank)}"

        ok, detail = statistical_pass(run_bank)
        assert ok, detail


class TestGibbs:
    def test_thin_validation(self):
        cf = gl_chain_factors(GinzburgLandauSpec(d=4), 5)
        with pytest.raises(ValueError):
            sample_gibbs(cf, 10, thin=0)

    def test_independent_sites_exact_after_one_sweep(self):
        # zero coupling: conditionals equal marginals, so even a single
        # sweep from any start draws each site from its stationary law
        import ttrs.markov as mk

        d, n = 4, 5
        spec = GinzburgLandauSpec(d=d, h=1e8)
        cf = gl_chain_factors(spec, n)
        mspec = mk.chain_factors_to_markov(cf)
        truth = window_marginal(mspec, 2, 2)
        n_samples = 20000
        s = sample_gibbs(cf, n_samples, burn_in=1, thin=1, seed=0, n_chains=n_samples)
        freq = marginal(s, (2, 2)).frequency
        assert np.abs(freq - truth).max() <= concentration_bound(n, 1, n_samples, 0.01)

    def test_matches_exact_marginals(self):
        spec = GinzburgLandauSpec(d=8)
        cf = gl_chain_factors(spec, 9)
        mspec = gl_discretize(spec, 9)
        n_samples = 50000
        s = sample_gibbs(cf, n_samples, burn_in=200, thin=2, seed=1, n_chains=64)
        bound = concentration_bound(81, 7, n_samples, 0.05)
        worst = max(
            np.abs(marginal(s, (k, k + 1)).frequency - window_marginal(mspec, k, k + 1)).max()
            for k in range(1, 8)
        )
        assert worst <= 3 * bound

    def test_metadata_recorded(self):
        cf = gl_chain_factors(GinzburgLandauSpec(d=3), 4)
        s = sample_gibbs(cf, 16, burn_in=5, thin=2, seed=3, n_chains=4)
        assert s.meta["burn_in"] == 5 and s.meta["thin"] == 2 and s.meta["n_chains"] == 4

    def test_deterministic_given_seed(self):
        cf = gl_chain_factors(GinzburgLandauSpec(d=3), 4)
        a = sample_gibbs(cf, 32, burn_in=3, thin=1, seed=6, n_chains=8)
        b = sample_gibbs(cf, 32, burn_in=3, thin=1, seed=6, n_chains=8)
        assert np.array_equal(a.values, b.values)


class TestMetropolisHastings:
    def test_acceptance_probability_formula(self):
        spec = GinzburgLandauSpec(d=2, beta=1.7)
        x = np.array([0.3, -0.2])
        y = np.array([0.5, 0.1])
        expect = min(1.0, np.exp(-(gl_energy(spec, y) - gl_energy(spec, x))))
        assert mh_acceptance_probability(spec, x, y) == pytest.approx(expect, rel=1e-12)

    def test_reproducible(self):
        spec = GinzburgLandauSpec(d=3)
        a = sample_mh_continuous(spec, 200, seed=5, burn_in=20, n_chains=4)
        b = sample_mh_continuous(spec, 200, seed=5, burn_in=20, n_chains=4)
        assert np.array_equal(a.values, b.values)

    def test_quartic_well_second_moment(self):
        # d=1 target: compare E[x^2] against Gauss-Legendre quadrature
        spec = GinzburgLandauSpec(d=1)
        from ttrs import gauss_legendre

        z, w = gauss_legendre(spec.a, spec.b, 80)
        dens = np.exp(-gl_energy(spec, z[:, None]))
        truth = float((w * dens * z**2).sum() / (w * dens).sum())
        n_samples = 10**5
        s = sample_mh_continuous(spec, n_samples, seed=6, burn_in=500, thin=2,
                                 n_chains=100)
        x2 = s.values[:, 0] ** 2
        stderr = x2.std() / np.sqrt(n_samples / 4)  # conservative ess margin
        assert abs(x2.mean() - truth) <= 3 * max(stderr, 1e-3)

    def test_samples_stay_in_box(self):
        spec = GinzburgLandauSpec(d=4, a=-2.0, b=2.0)
        s = sample_mh_continuous(spec, 500, seed=7, burn_in=50, n_chains=10, sigma=3.0)
        assert s.values.min() >= -2.0 and s.values.max() <= 2.0


class TestSampleFromTT:
    def test_matches_ancestral_law(self):
        spec = random_markov_spec(4, 3, seed=8)
        tt = markov_to_tt(spec)
        n_samples = 10**5
        s = sample_from_tt(tt, n_samples, seed=9)
        bound = concentration_bound(9, 3, n_samples, 0.05)
        for k in range(1, 4):
            truth = window_marginal(spec, k, k + 1)
            freq = marginal(s, (k, k + 1)).frequency
            assert np.abs(freq - truth).max() <= 2 * bound

    def test_rank_one_draws_independent_sites(self):
        margs = [np.array([0.3, 0.7]), np.array([0.6, 0.4])]
        tt = TensorTrain([m.reshape(1, 2, 1) for m in margs])
        s = sample_from_tt(tt, 50000, seed=10)
        joint = marginal(s, (1, 2)).frequency
        product = np.outer(margs[0], margs[1])
        assert np.abs(joint - product).max() <= 0.01

    def test_scale_invariant(self):
        spec = random_markov_spec(5, 2, seed=11)
        tt = markov_to_tt(spec)
        a = sample_from_tt(tt, 2000, seed=12)
        b = sample_from_tt(tt.scale(7.0), 2000, seed=12)
        assert np.array_equal(a.values, b.values)

    def test_negative_mass_fallback_flagged(self):
        core1 = np.array([0.5, -1.0]).reshape(1, 2, 1)
        core2 = np.array([0.9, 0.1]).reshape(1, 2, 1)
        tt = TensorTrain([core1, core2])
        with pytest.raises(DegenerateError):
            sample_from_tt(tt, 10, seed=13)
        tt2 = TensorTrain([np.array([0.9, -0.1]).reshape(1, 2, 1), core2])
        s = sample_from_tt(tt2, 100, seed=14)
        assert s.meta["clipped_fraction"] > 0
        assert np.all(s.values[:, 0] == 1)


class TestSpecJson:
    def test_round_trip(self):
        spec = random_markov_spec(4, 3, order=2, seed=15)
        back = markov_spec_from_json(markov_spec_to_json(spec))
        assert back.order == spec.order and back.extents == spec.extents
        assert np.allclose(back.initial, spec.initial, atol=0)
        for a, b in zip(back.kernels, spec.kernels):
            assert np.array_equal(a, b)

    def test_homogeneous_constructor(self):
        ker = np.array([[0.9, 0.1], [0.4, 0.6]])
        spec = homogeneous_markov_spec(6, np.array([0.5, 0.5]), ker)
        assert len(spec.kernels) == 5
        assert all(k is spec.kernels[0] for k in spec.kernels)
