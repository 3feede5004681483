import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from isd_bandits.errors import InvalidInputError, InvalidPartitionError
from isd_bandits.subspace import (
    BlockPartition,
    ISDBasis,
    assemble_basis,
    classify_blocks,
    gram,
    joint_block_diagonalize,
    principal_angle_distance,
    projection_distance,
)


def random_orthonormal(p, rng):
    q, r = np.linalg.qr(rng.standard_normal((p, p)))
    return q * np.sign(np.diag(r))


def random_spd(k, rng):
    w = rng.standard_normal((k, k))
    return w @ w.T + 0.1 * np.eye(k)


class TestGram:
    def test_empty_sequence_is_scaled_identity(self):
        np.testing.assert_allclose(gram([], 0.1, p=3), 0.1 * np.eye(3))

    def test_single_vector_rank_one(self):
        np.testing.assert_allclose(gram([[1.0, 0.0]], 0.0), [[1.0, 0.0], [0.0, 0.0]])

    def test_two_vectors_hand_computed(self):
        # (1,1),(1,-1): outer products sum to [[2,0],[0,2]], plus 0.1 I
        out = gram([[1.0, 1.0], [1.0, -1.0]], 0.1)
        np.testing.assert_allclose(out, [[2.1, 0.0], [0.0, 2.1]], atol=1e-12)

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(InvalidInputError):
            gram([[1.0, 0.0], [1.0, 0.0, 0.0]], 0.1)

    def test_negative_reg_rejected(self):
        with pytest.raises(InvalidInputError):
            gram([[1.0]], -0.5)

    def test_empty_without_dimension_rejected(self):
        with pytest.raises(InvalidInputError):
            gram([], 0.1)

    @given(st.integers(0, 6), st.floats(0.01, 5.0), st.floats(0.01, 5.0), st.integers(0, 2**32 - 1))
    @settings(max_examples=40, deadline=None)
    def test_monotone_in_reg(self, n, reg1, extra, seed):
        rng = np.random.default_rng(seed)
        feats = rng.standard_normal((n, 3))
        reg2 = reg1 + extra
        diff = gram(feats, reg2, p=3) - gram(feats, reg1, p=3)
        eig = np.linalg.eigvalsh(diff)
        np.testing.assert_allclose(eig, extra, rtol=1e-9, atol=1e-9)

    def test_eigenvalues_at_least_reg(self):
        rng = np.random.default_rng(3)
        out = gram(rng.standard_normal((20, 4)), 0.3)
        assert np.linalg.eigvalsh(out).min() >= 0.3 - 1e-10


class TestPrincipalAngleDistance:
    def test_identical_subspaces(self):
        rng = np.random.default_rng(0)
        a = random_orthonormal(5, rng)[:, :2]
        assert principal_angle_distance(a, a) == pytest.approx(0.0, abs=1e-12)

    def test_orthogonal_lines(self):
        e1 = np.array([[1.0], [0.0]])
        e2 = np.array([[0.0], [1.0]])
        assert principal_angle_distance(e1, e2) == pytest.approx(1.0)

    def test_rotated_line_matches_sine(self):
        theta = 0.3
        a = np.array([[1.0], [0.0]])
        b = np.array([[np.cos(theta)], [np.sin(theta)]])
        assert principal_angle_distance(a, b) == pytest.approx(np.sin(theta), abs=1e-12)

    def test_agrees_with_projector_norm_oracle(self):
        # independent oracle: largest |eigenvalue| of the projector difference
        rng = np.random.default_rng(42)
        for _ in range(100):
            p = int(rng.integers(2, 8))
            k = int(rng.integers(1, p))
            a = random_orthonormal(p, rng)[:, :k]
            b = random_orthonormal(p, rng)[:, :k]
            direct = np.max(np.abs(np.linalg.eigvalsh(a @ a.T - b @ b.T)))
            assert principal_angle_distance(a, b) == pytest.approx(direct, abs=1e-8)

    def test_complementary_subspaces_same_distance(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            u1 = random_orthonormal(8, rng)
            u2 = random_orthonormal(8, rng)
            d_inv = principal_angle_distance(u1[:, :3], u2[:, :3])
            d_res = principal_angle_distance(u1[:, 3:], u2[:, 3:])
            assert d_inv == pytest.approx(d_res, abs=1e-8)

    def test_rejects_non_orthonormal(self):
        with pytest.raises(InvalidInputError):
            principal_angle_distance(np.array([[2.0], [0.0]]), np.array([[1.0], [0.0]]))

    def test_rejects_shape_mismatch(self):
        rng = np.random.default_rng(1)
        u = random_orthonormal(4, rng)
        with pytest.raises(InvalidInputError):
            principal_angle_distance(u[:, :1], u[:, :2])

    def test_empty_bases(self):
        a = np.zeros((4, 0))
        assert principal_angle_distance(a, a) == 0.0


class TestISDBasis:
    def test_projectors_sum_to_identity(self):
        rng = np.random.default_rng(11)
        for _ in range(10):
            u = random_orthonormal(6, rng)
            basis = ISDBasis(u[:, :2], u[:, 2:])
            total = basis.proj_inv() + basis.proj_res()
            assert np.max(np.abs(total - np.eye(6))) <= 1e-8

    def test_empty_invariant_side_is_valid(self):
        basis = ISDBasis(np.zeros((3, 0)), np.eye(3))
        assert basis.p_inv == 0 and basis.p_res == 3

    def test_rejects_empty_residual_side(self):
        with pytest.raises(InvalidInputError):
            ISDBasis(np.eye(3), np.zeros((3, 0)))

    def test_rejects_non_orthonormal_columns(self):
        u = np.eye(4)
        with pytest.raises(InvalidInputError):
            ISDBasis(2.0 * u[:, :2], u[:, 2:])

    def test_rejects_non_orthogonal_parts(self):
        u = np.eye(4)
        with pytest.raises(InvalidInputError):
            ISDBasis(u[:, :2], u[:, 1:3])


class TestJointBlockDiagonalize:
    def test_isotropic_matrices_give_singletons(self):
        u, blocks = joint_block_diagonalize([np.eye(4), np.eye(4)], rng=0)
        assert sorted(len(b) for b in blocks) == [1, 1, 1, 1]
        assert np.max(np.abs(u.T @ u - np.eye(4))) < 1e-10

    def test_diagonal_matrices_recover_axes(self):
        covs = [np.diag([1.0, 2.0, 3.0]), np.diag([4.0, 5.0, 6.0])]
        u, blocks = joint_block_diagonalize(covs, 1e-8, rng=1)
        assert sorted(len(b) for b in blocks) == [1, 1, 1]
        # U is a signed permutation of the identity
        assert np.max(np.abs(np.abs(u) - np.eye(3)[:, np.argmax(np.abs(u), axis=0)])) < 1e-10

    @pytest.mark.parametrize("seed", range(10))
    def test_constructed_block_families_recovered(self, seed):
        rng = np.random.default_rng(seed)
        q = random_orthonormal(5, rng)
        covs = []
        for _ in range(3):
            block = np.zeros((5, 5))
            block[:2, :2] = random_spd(2, rng)
            block[2:, 2:] = random_spd(3, rng)
            covs.append(q @ block @ q.T)
        u, blocks = joint_block_diagonalize(covs, 1e-8, rng=seed)
        assert sorted(len(b) for b in blocks) == [2, 3]
        for b in blocks:
            target = q[:, :2] if len(b) == 2 else q[:, 2:]
            assert principal_angle_distance(u[:, b], target) <= 1e-6

    def test_off_block_coupling_within_tolerance(self):
        rng = np.random.default_rng(5)
        q = random_orthonormal(4, rng)
        covs = [q @ np.diag([1.0, 2.0, 3.0, 4.0]) @ q.T for _ in range(2)]
        u, blocks = joint_block_diagonalize(covs, 1e-7, rng=5)
        for c in covs:
            d = u.T @ c @ u
            for bi, b1 in enumerate(blocks):
                for b2 in blocks[bi + 1:]:
                    assert np.max(np.abs(d[np.ix_(b1, b2)])) <= 1e-7

    def test_requires_two_matrices(self):
        with pytest.raises(InvalidInputError):
            joint_block_diagonalize([np.eye(3)], rng=0)

    def test_rejects_asymmetric_input(self):
        bad = np.array([[1.0, 2.0], [0.0, 1.0]])
        with pytest.raises(InvalidInputError):
            joint_block_diagonalize([bad, np.eye(2)], rng=0)

    def test_blocks_partition_all_columns(self):
        rng = np.random.default_rng(9)
        covs = [random_spd(6, rng) for _ in range(3)]
        _, blocks = joint_block_diagonalize(covs, rng=9)
        assert sorted(j for b in blocks for j in b) == list(range(6))


def make_window_data(coefs_by_window, u, n, noise, rng):
    """Rewards linear in rotated coordinates with per-window coefficients."""
    windows = []
    for coef in coefs_by_window:
        z = rng.standard_normal((n, u.shape[0]))
        phi = z @ u.T
        r = z @ coef + noise * rng.standard_normal(n)
        windows.append((phi, r))
    return windows


class TestClassifyBlocks:
    def test_noiseless_separation(self):
        rng = np.random.default_rng(2)
        u = random_orthonormal(4, rng)
        coefs = [np.array([1.0, 1.0, 0.5 + 0.25 * w, 0.5 - 0.25 * w]) for w in range(4)]
        windows = make_window_data(coefs, u, 50, 0.0, rng)
        part = classify_blocks([[0, 1], [2, 3]], u, windows, invariance_tol=0.1)
        assert part.labels == ("invariant", "residual")

    def test_all_constant_forces_largest_variance_block_residual(self):
        rng = np.random.default_rng(3)
        u = random_orthonormal(4, rng)
        coefs = [np.array([1.0, 1.0, 0.7, 0.7])] * 4
        windows = make_window_data(coefs, u, 60, 0.01, rng)
        part = classify_blocks([[0, 1], [2, 3]], u, windows, invariance_tol=0.5)
        assert part.labels.count("residual") == 1
        assert any("forcing" in d for d in part.diagnostics)

    def test_reference_dgp_agreement(self):
        # Monte Carlo against known generative labels at T0=8000, m=8.
        from isd_bandits import environments as env
        from isd_bandits import policies as pol

        agree = 0
        for seed in range(20):
            inst = env.sample_instance(10, 3, 5, 8000, 100, 1.0,
                                       np.random.default_rng(1000 + seed))
            log = env.generate_offline_log(inst, np.random.default_rng(2000 + seed))
            params = pol.FitParams(lam=0.1, eta=0.01, sigma=1.0, L=inst.L, M=inst.M)
            fitted = pol.fit_offline(log, "none", None, params,
                                     rng=np.random.default_rng(3000 + seed))
            if fitted.basis.p_inv == inst.p_inv and \
                    projection_distance(fitted.basis.u_inv, inst.basis.u_inv) < 0.5:
                agree += 1
        assert agree >= 19

    def test_singular_block_marked_residual(self):
        u = np.eye(3)
        phi = np.zeros((10, 3))
        phi[:, 0] = np.random.default_rng(0).standard_normal(10)
        windows = [(phi, phi[:, 0]), (phi, phi[:, 0])]
        part = classify_blocks([[0], [1], [2]], u, windows, invariance_tol=0.1)
        assert part.labels[1] == "residual" and part.labels[2] == "residual"
        assert part.diagnostics

    def test_window_too_short_rejected(self):
        u = np.eye(3)
        windows = [(np.ones((1, 3)), np.ones(1))]
        with pytest.raises(InvalidInputError):
            classify_blocks([[0, 1], [2]], u, windows, invariance_tol=0.1)


class TestAssembleBasis:
    def test_identity_stacking(self):
        part = BlockPartition(((0, 1), (2, 3)), ("invariant", "residual"))
        basis = assemble_basis(part, np.eye(4))
        np.testing.assert_allclose(basis.u_inv, np.eye(4)[:, :2])
        np.testing.assert_allclose(basis.u_res, np.eye(4)[:, 2:])

    def test_all_residual_gives_empty_invariant(self):
        part = BlockPartition(((0, 1), (2,)), ("residual", "residual"))
        basis = assemble_basis(part, np.eye(3))
        assert basis.p_inv == 0 and basis.p_res == 3

    def test_no_residual_block_rejected(self):
        part = BlockPartition(((0,), (1,)), ("invariant", "invariant"))
        with pytest.raises(InvalidPartitionError):
            assemble_basis(part, np.eye(2))

    def test_projection_invariant_to_within_label_order(self):
        rng = np.random.default_rng(8)
        u = random_orthonormal(5, rng)
        p1 = BlockPartition(((0, 1), (2,), (3, 4)), ("invariant", "invariant", "residual"))
        p2 = BlockPartition(((2,), (0, 1), (3, 4)), ("invariant", "invariant", "residual"))
        b1 = assemble_basis(p1, u)
        b2 = assemble_basis(p2, u)
        np.testing.assert_allclose(b1.proj_inv(), b2.proj_inv(), atol=1e-12)

    def test_partition_must_cover_columns(self):
        part = BlockPartition(((0,), (1,)), ("invariant", "residual"))
        with pytest.raises(InvalidInputError):
            assemble_basis(part, np.eye(3))


class TestBlockPartition:
    def test_rejects_overlapping_blocks(self):
        with pytest.raises(InvalidInputError):
            BlockPartition(((0, 1), (1, 2)), ("invariant", "residual"))

    def test_rejects_unknown_labels(self):
        with pytest.raises(InvalidInputError):
            BlockPartition(((0,), (1,)), ("fixed", "residual"))

    def test_indices_by_label(self):
        part = BlockPartition(((2, 3), (0, 1)), ("residual", "invariant"))
        assert part.indices("invariant") == [0, 1]
        assert part.indices("residual") == [2, 3]


class TestProjectionDistance:
    def test_matches_principal_angles_when_dims_agree(self):
        rng = np.random.default_rng(12)
        a = random_orthonormal(6, rng)[:, :3]
        b = random_orthonormal(6, rng)[:, :3]
        assert projection_distance(a, b) == pytest.approx(
            principal_angle_distance(a, b), abs=1e-10)

    def test_rank_mismatch_gives_unit_distance(self):
        a = np.eye(4)[:, :3]
        b = np.eye(4)[:, :2]
        assert projection_distance(a, b) == pytest.approx(1.0)
