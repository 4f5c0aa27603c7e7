import numpy as np
import pytest

from ttrs import (
    ShapeError,
    gaussian_sketch_plan,
    markov_sketch_plan,
    marginal,
    plan_from_json,
    plan_to_json,
    random_markov_spec,
    run_sketching,
    run_sketching_tts,
    sample_ancestral,
    tt_contract_full,
    markov_to_tt,
)

from helpers import random_tt


def empirical_density(samples):
    counts = np.zeros(samples.extents)
    np.add.at(counts, tuple(samples.values[:, j] - 1 for j in range(samples.dims)), 1.0)
    return counts / samples.n_samples


class TestPlans:
    def test_order_one_sizes(self):
        plan = markov_sketch_plan((2,) * 6, 1)
        assert [plan.right_size(k) for k in range(1, 6)] == [2] * 5
        assert [plan.left_size(k) for k in range(1, 6)] == [2] * 5

    def test_order_two_sizes(self):
        plan = markov_sketch_plan((2,) * 6, 2)
        # interior right windows hold two variables, the last only one
        assert [plan.right_size(k) for k in range(1, 6)] == [4, 4, 4, 4, 2]
        assert [plan.left_size(k) for k in range(1, 6)] == [2, 4, 4, 4, 4]

    def test_order_must_stay_below_d(self):
        with pytest.raises(ValueError):
            markov_sketch_plan((2,) * 6, 6)
        with pytest.raises(ValueError):
            markov_sketch_plan((2,) * 3, 0)

    def test_gaussian_plan_deterministic(self):
        a = gaussian_sketch_plan((3,) * 4, ell=4, m=4, seed=42)
        b = gaussian_sketch_plan((3,) * 4, ell=4, m=4, seed=42)
        for x, y in zip(a.left_blocks + a.right_blocks, b.left_blocks + b.right_blocks):
            assert np.array_equal(x, y)

    def test_gaussian_plan_shapes(self):
        plan = gaussian_sketch_plan((2, 3, 4), ell=[5, 6], m=[7, 8], seed=0)
        assert plan.left_blocks[0].shape == (7, 2, 1)
        assert plan.left_blocks[1].shape == (8, 3, 7)
        assert plan.right_blocks[0].shape == (5, 3, 6)
        assert plan.right_blocks[1].shape == (6, 4, 1)

    def test_extent_validation(self):
        plan = markov_sketch_plan((2,) * 4, 1)
        with pytest.raises(ShapeError):
            plan.validate_extents((2, 2, 2))

    def test_json_round_trip(self):
        win = markov_sketch_plan((3,) * 5, 2)
        assert plan_from_json(plan_to_json(win)) == win
        dense = gaussian_sketch_plan((2, 3, 2), ell=3, m=4, seed=1)
        back = plan_from_json(plan_to_json(dense))
        for x, y in zip(dense.left_blocks + dense.right_blocks,
                        back.left_blocks + back.right_blocks):
            assert np.array_equal(x, y)

    def test_window_left_blocks_compose_to_selectors(self):
        # composing the one-hot blocks must reproduce the window indicator
        plan = markov_sketch_plan((2, 3, 2, 3), 2)
        sl = plan.left_block(1)[:, :, 0]
        d = 4
        for k in range(2, d):
            blk = plan.left_block(k)
            sl = np.einsum("bxc,cp->bpx", blk, sl).reshape(blk.shape[0], -1)
        # sl is S_3 over (x1,x2,x3); window is (x2,x3)
        full = sl.reshape(plan.left_size(3), 2, 3, 2)
        for b in range(plan.left_size(3)):
            w2, w3 = np.unravel_index(b, (3, 2))
            expect = np.zeros((2, 3, 2))
            expect[:, w2, w3] = 1.0
            assert np.array_equal(full[b], expect)


class TestWindowSweep:
    def test_outputs_are_window_marginals(self):
        spec = random_markov_spec(6, 2, seed=1)
        s = sample_ancestral(spec, 2000, seed=2)
        plan = markov_sketch_plan(spec.extents, 1)
        phis = run_sketching(s, plan)
        assert phis[0].shape == (2, 2)
        assert phis[2].shape == (2, 2, 2)
        assert phis[5].shape == (2, 2)
        got = phis[2]
        expect = marginal(s, (2, 4)).frequency
        assert np.array_equal(got, expect)

    def test_order_m_windows(self):
        spec = random_markov_spec(6, 2, order=2, seed=3)
        s = sample_ancestral(spec, 1500, seed=4)
        plan = markov_sketch_plan(spec.extents, 2)
        phis = run_sketching(s, plan)
        expect = marginal(s, (1, 5)).frequency.reshape(4, 2, 4)
        assert np.array_equal(phis[2], expect)

    def test_dense_input_matches_samples_in_distribution(self):
        spec = random_markov_spec(5, 2, seed=5)
        s = sample_ancestral(spec, 3000, seed=6)
        plan = markov_sketch_plan(spec.extents, 1)
        from_samples = run_sketching(s, plan)
        from_density = run_sketching(empirical_density(s), plan)
        for a, b in zip(from_samples, from_density):
            assert np.allclose(a, b, atol=1e-13)


class TestDenseSweep:
    def test_matches_direct_contraction(self):
        rng = np.random.default_rng(7)
        p = rng.random((2, 3, 2))
        plan = gaussian_sketch_plan(p.shape, ell=3, m=2, seed=8)
        phis = run_sketching(p, plan)
        # oracle: materialize the right sketches from the block chain
        t2, t3 = plan.right_blocks
        big_t2 = np.einsum("axc,cyg->xya", t2, t3)  # T_2(x2,x3; gamma1)
        big_t3 = t3[:, :, 0].T  # T_3(x3; gamma2)
        bar1 = np.einsum("xyz,yza->xa", p, big_t2)
        assert np.allclose(phis[0], bar1, atol=1e-13)
        s1 = plan.left_blocks[0][:, :, 0]
        bar2 = np.einsum("xyz,za->xya", p, big_t3)
        tilde2 = np.einsum("bx,xya->bya", s1, bar2)
        assert np.allclose(phis[1], tilde2, atol=1e-13)
        s2 = plan.left_blocks[1]
        big_s2 = np.einsum("byc,cx->bxy", s2, s1)  # S_2(beta2; x1,x2)
        tilde3 = np.einsum("bxy,xyz->bz", big_s2, p)
        assert np.allclose(phis[2], tilde3, atol=1e-13)

    def test_sample_sweep_matches_dense_sweep(self):
        spec = random_markov_spec(4, 3, seed=9)
        s = sample_ancestral(spec, 400, seed=10)
        plan = gaussian_sketch_plan(spec.extents, ell=3, m=3, seed=11)
        from_samples, psi_s = run_sketching_tts(s, plan)
        from_density, psi_d = run_sketching_tts(empirical_density(s), plan)
        for a, b in zip(from_samples + psi_s, from_density + psi_d):
            assert np.allclose(a, b, atol=1e-12)

    def test_shapes(self):
        plan = gaussian_sketch_plan((2, 3, 4, 2), ell=5, m=6, seed=12)
        spec = random_markov_spec(4, 2, seed=13)
        rng = np.random.default_rng(14)
        p = rng.random((2, 3, 4, 2))
        phis = run_sketching(p, plan)
        assert phis[0].shape == (2, 5)
        assert phis[1].shape == (6, 3, 5)
        assert phis[2].shape == (6, 4, 5)
        assert phis[3].shape == (6, 2)

    def test_exact_rank_recovery_with_tight_sketches(self):
        # generic random sketches with l = r recover an exact-rank train
        from ttrs import tt_rs

        hits = 0
        for seed in range(10):
            tt = random_tt(4, 3, 2, seed=100 + seed)
            p = tt_contract_full(tt)
            plan = gaussian_sketch_plan((3,) * 4, ell=2, m=3, seed=200 + seed)
            fit, _ = tt_rs(p, 2, plan)
            if np.abs(tt_contract_full(fit) - p).max() <= 1e-8 * np.abs(p).max():
                hits += 1
        assert hits >= 9
