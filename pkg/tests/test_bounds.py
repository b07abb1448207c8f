import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import ortho_group

from blockprior import (
    BlockSpec,
    BoundViolation,
    ShapeError,
    assemble_uncorrelated,
    assemble_with_cross,
    check_limit,
    conservative_prior,
    extrinsic_variance,
    is_psd,
    worst_case,
)
from blockprior.blockmodel import block_slices, joint_from_whitened, sample_whitened

from _gen import random_blocks, random_pd


def unit_blocks(n=2):
    return [BlockSpec.scalar(f"e{i}", 1.0) for i in range(n)]


class TestExtrinsicVariance:
    def test_identity(self):
        assert extrinsic_variance([1.0, 1.0], np.eye(2)) == 2.0

    def test_paper_rho(self):
        sigma = np.array([[1.0, 0.5], [0.5, 1.0]])
        assert extrinsic_variance([1.0, 1.0], sigma) == 3.0

    def test_zero_gradient(self):
        assert extrinsic_variance([0.0, 0.0], np.eye(2)) == 0.0

    def test_shape_error(self):
        with pytest.raises(ShapeError):
            extrinsic_variance([1.0, 1.0, 1.0], np.eye(2))


class TestWorstCase:
    def test_unit_pair(self):
        wc = worst_case([1.0, 1.0], unit_blocks())
        assert wc.value == 4.0 and wc.alpha == 2.0
        np.testing.assert_allclose(wc.achieving_completion.joint, [[1.0, 1.0], [1.0, 1.0]], atol=1e-15)
        # same as maximizing 2 + 2 rho over rho in [-1, 1]
        grid = np.linspace(-1, 1, 201)
        assert wc.value == pytest.approx(max(2 + 2 * grid))

    def test_gradient_on_one_block(self):
        rng = np.random.default_rng(0)
        blocks = [BlockSpec("a", ["x", "y"], random_pd(rng, 2)), BlockSpec.scalar("b", 3.0)]
        a = np.array([0.4, -1.3, 0.0])
        wc = worst_case(a, blocks)
        assert wc.value == pytest.approx(a @ assemble_uncorrelated(blocks) @ a, rel=1e-12)
        assert wc.alpha == pytest.approx(1.0, rel=1e-12)

    def test_zero_gradient_flag(self):
        wc = worst_case([0.0, 0.0], unit_blocks())
        assert wc.value == 0.0 and wc.alpha == 1.0 and wc.degenerate_gradient

    def test_dominates_sampled_completions(self):
        rng = np.random.default_rng(21)
        blocks = [BlockSpec(f"b{i}", [f"p{i}{k}" for k in range(d)], random_pd(rng, d))
                  for i, d in enumerate((2, 3, 1))]
        a = rng.standard_normal(6)
        wc = worst_case(a, blocks)
        joints = joint_from_whitened(blocks, sample_whitened(blocks, 100_000, 5))
        sampled = np.einsum("i,mij,j->m", a, joints, a)
        assert sampled.max() <= wc.value * (1 + 1e-9)
        achieved = extrinsic_variance(a, wc.achieving_completion)
        assert achieved == pytest.approx(wc.value, rel=1e-9)
        assert is_psd(wc.achieving_completion.joint)

    def test_matches_semidefinite_program(self):
        cp = pytest.importorskip("cvxpy")
        rng = np.random.default_rng(33)
        blocks = [BlockSpec(f"b{i}", [f"p{i}{k}" for k in range(d)], random_pd(rng, d))
                  for i, d in enumerate((2, 1, 2))]
        a = rng.standard_normal(5)
        S = cp.Variable((5, 5), symmetric=True)
        cons = [S >> 0]
        for blk, s in zip(blocks, block_slices(blocks)):
            cons.append(S[s, s] == blk.covariance)
        prob = cp.Problem(cp.Maximize(a @ S @ a), cons)
        prob.solve(solver=cp.CLARABEL)
        assert worst_case(a, blocks).value == pytest.approx(prob.value, rel=1e-6)


class TestConservativePrior:
    def test_one_block_unchanged(self):
        blk = [BlockSpec("a", ["x", "y"], [[2.0, 0.3], [0.3, 1.0]])]
        np.testing.assert_array_equal(conservative_prior(blk), blk[0].covariance)

    def test_unit_pair(self):
        np.testing.assert_array_equal(conservative_prior(unit_blocks()), np.diag([2.0, 2.0]))

    def test_three_blocks(self):
        rng = np.random.default_rng(1)
        blocks = [BlockSpec(f"b{i}", [f"p{i}{k}" for k in range(d)], random_pd(rng, d))
                  for i, d in enumerate((1, 3, 2))]
        np.testing.assert_array_equal(conservative_prior(blocks), 3 * assemble_uncorrelated(blocks))


class TestCheckLimit:
    def test_uncorrelated_ratio_one(self):
        rng = np.random.default_rng(4)
        blocks = random_blocks(rng, min_blocks=2)
        a = rng.standard_normal(sum(b.dim for b in blocks))
        rep = check_limit(a, blocks, [assemble_uncorrelated(blocks)])
        assert rep.max_ratio == pytest.approx(1.0, rel=1e-12)

    def test_paper_rho_one_saturates(self):
        c = assemble_with_cross(unit_blocks(), {(0, 1): [[1.0]]})
        rep = check_limit([1.0, 1.0], unit_blocks(), [c])
        assert rep.max_ratio == pytest.approx(2.0, rel=1e-12)
        assert rep.lambda_w_max[0] == pytest.approx(2.0, rel=1e-12)

    def test_random_four_block_sweep(self):
        rng = np.random.default_rng(6)
        blocks = random_blocks(rng, min_blocks=4, max_blocks=4)
        a = rng.standard_normal(sum(b.dim for b in blocks))
        joints = joint_from_whitened(blocks, sample_whitened(blocks, 10_000, 6))
        rep = check_limit(a, blocks, joints)
        assert len(rep.extrinsic) == 10_000
        assert rep.max_ratio <= 4 * (1 + 1e-9)

    def test_violation_raises(self):
        # not a completion: cross term beyond PSD range inflates a^T S a
        bad = np.array([[1.0, 3.0], [3.0, 1.0]])
        with pytest.raises(BoundViolation) as info:
            check_limit([1.0, 1.0], unit_blocks(), bad[None])
        assert info.value.index == 0


class TestProperties:
    def test_cauchy_schwarz_equality_iff_equal_norms(self):
        rng = np.random.default_rng(7)
        blocks = random_blocks(rng, min_blocks=3, max_blocks=3)
        n = sum(b.dim for b in blocks)
        wc0 = worst_case(rng.standard_normal(n), blocks)
        # rescale gradient slices in whitened space to equal norms
        b = np.concatenate([rng.standard_normal(blk.dim) for blk in blocks])
        for s in block_slices(blocks):
            b[s] /= np.linalg.norm(b[s])
        chol = [blk.cholesky for blk in blocks]
        a_eq = np.concatenate([np.linalg.solve(L.T, b[s]) for L, s in zip(chol, block_slices(blocks))])
        assert worst_case(a_eq, blocks).alpha == pytest.approx(3.0, rel=1e-12)
        b[block_slices(blocks)[0]] *= 2.0
        a_ne = np.concatenate([np.linalg.solve(L.T, b[s]) for L, s in zip(chol, block_slices(blocks))])
        assert worst_case(a_ne, blocks).alpha < 3.0 - 1e-6
        assert wc0.alpha <= 3.0 + 1e-9

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_whitening_invariance_under_block_rotation(self, seed):
        rng = np.random.default_rng(seed)
        blocks = random_blocks(rng, min_blocks=2)
        a = rng.standard_normal(sum(b.dim for b in blocks))
        rotated, a_rot = [], a.copy()
        for blk, s in zip(blocks, block_slices(blocks)):
            q = ortho_group.rvs(blk.dim, random_state=rng) if blk.dim > 1 else np.array([[-1.0]])
            rotated.append(BlockSpec(blk.name, blk.labels, q @ blk.covariance @ q.T))
            a_rot[s] = q @ a[s]
        v0, v1 = worst_case(a, blocks).value, worst_case(a_rot, rotated).value
        assert v1 == pytest.approx(v0, rel=1e-9)

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_conservative_prior_dominates_worst_case(self, seed):
        rng = np.random.default_rng(seed)
        blocks = random_blocks(rng)
        a = rng.standard_normal(sum(b.dim for b in blocks))
        wc = worst_case(a, blocks)
        assert extrinsic_variance(a, conservative_prior(blocks)) >= wc.value * (1 - 1e-12)
        assert wc.alpha <= len(blocks) + 1e-9

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_merging_blocks_never_increases_worst_case(self, seed):
        rng = np.random.default_rng(seed)
        blocks = random_blocks(rng, min_blocks=2)
        a = rng.standard_normal(sum(b.dim for b in blocks))
        i = int(rng.integers(0, len(blocks) - 1))
        first, second = blocks[i], blocks[i + 1]
        merged_cov = assemble_uncorrelated([first, second])
        merged = BlockSpec("m", first.labels + second.labels, merged_cov)
        new_blocks = blocks[:i] + [merged] + blocks[i + 2:]
        assert worst_case(a, new_blocks).value <= worst_case(a, blocks).value * (1 + 1e-12)
