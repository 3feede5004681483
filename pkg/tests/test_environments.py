import json

import numpy as np
import pytest

from isd_bandits import environments as env
from isd_bandits.errors import InvalidInputError


@pytest.fixture(scope="module")
def instance():
    return env.sample_instance(10, 3, 5, 2000, 100, 1.0, np.random.default_rng(0))


class TestSampleInstance:
    def test_fig2_configuration_shapes(self):
        for p_res in (2, 4, 6, 8):
            inst = env.sample_instance(10, p_res, 5, 2000, 100, 1.0,
                                       np.random.default_rng(p_res))
            assert inst.p == 10 and inst.p_res == p_res and inst.p_inv == 10 - p_res
            assert inst.delta_res_coords_offline.shape == (2000, p_res)
            assert inst.n_actions == 5

    def test_fig3_configuration_shapes(self):
        for p in range(3, 11):
            inst = env.sample_instance(p, 2, 5, 2000, 100, 1.0, np.random.default_rng(p))
            assert inst.p == p and inst.p_res == 2

    def test_coordinates_inside_sampling_box(self, instance):
        assert np.all(instance.beta_inv_coords > 0.5)
        assert np.all(instance.beta_inv_coords < 1.5)
        assert np.all(instance.delta_res_coords_online > 0.5)
        assert np.all(instance.delta_res_coords_online < 1.5)

    def test_parameter_norm_bounded_by_M(self, instance):
        norms = [np.linalg.norm(instance.gamma(t)) for t in range(-instance.T0, 0)]
        norms += [np.linalg.norm(instance.gamma(t)) for t in range(1, instance.T + 1)]
        assert max(norms) <= instance.M + 1e-12

    def test_online_parameter_constant(self, instance):
        g1 = instance.gamma(1)
        for t in (2, 50, instance.T):
            np.testing.assert_array_equal(instance.gamma(t), g1)

    def test_offline_drift_formula(self, instance):
        # position s: init + (-1.5 (s/T0) sin^2(0.25 i s/T0 + i)), entry i in 1..p_res
        T0 = instance.T0
        init = instance.delta_res_coords_offline[0] \
            - (-1.5 * (1 / T0) * np.sin(0.25 * np.arange(1, 4) * 1 / T0 + np.arange(1, 4)) ** 2)
        for s in (1, 17, 1000, T0):
            i = np.arange(1, instance.p_res + 1)
            expected = init - 1.5 * (s / T0) * np.sin(0.25 * i * s / T0 + i) ** 2
            np.testing.assert_allclose(instance.delta_res_coords_offline[s - 1],
                                       expected, atol=1e-12)

    def test_invalid_dimensions_rejected(self):
        with pytest.raises(InvalidInputError):
            env.sample_instance(3, 3, 5, 100, 10, 1.0, np.random.default_rng(0))
        with pytest.raises(InvalidInputError):
            env.sample_instance(3, 0, 5, 100, 10, 1.0, np.random.default_rng(0))

    def test_reward_decomposition_exact(self, instance):
        rng = np.random.default_rng(5)
        for t in (-instance.T0, -3, 1, instance.T):
            phi = rng.standard_normal(instance.p)
            direct = phi @ instance.gamma(t)
            split = (instance.basis.proj_inv() @ phi) @ instance.beta_inv() \
                + (instance.basis.proj_res() @ phi) @ instance.delta_res(t)
            assert direct == pytest.approx(split, abs=1e-10)


class TestFeaturesAt:
    def test_determinism_given_seed_and_round(self, instance):
        a = env.features_at(instance, 5, np.random.default_rng(123))
        b = env.features_at(instance, 5, np.random.default_rng(123))
        np.testing.assert_array_equal(a, b)

    def test_monte_carlo_covariance_matches(self):
        inst = env.sample_instance(4, 2, 2, 50, 10, 0.5, np.random.default_rng(3))
        rng = np.random.default_rng(4)
        draws = np.vstack([env.features_at(inst, 1, rng) for _ in range(50_000)])
        u = np.concatenate([inst.basis.u_inv, inst.basis.u_res], axis=1)
        target = u @ np.diag(inst.cov_spectrum(1)) @ u.T
        sample = draws.T @ draws / draws.shape[0]
        # entrywise within 3 standard errors of a Gaussian fourth-moment bound
        se = 3.0 * np.sqrt((np.outer(np.diag(target), np.diag(target))
                            + target ** 2) / draws.shape[0])
        assert np.all(np.abs(sample - target) <= 3.0 * se + 1e-3)

    def test_zero_residual_block_confines_features(self):
        inst = env.sample_instance(5, 2, 3, 50, 10, 0.0, np.random.default_rng(8))
        degenerate = env.SyntheticInstance(
            basis=inst.basis, beta_inv_coords=inst.beta_inv_coords,
            delta_res_coords_offline=inst.delta_res_coords_offline,
            delta_res_coords_online=inst.delta_res_coords_online,
            v_inv=inst.v_inv, v_res=np.zeros(2), cov_cycles=inst.cov_cycles,
            noise_sigma=0.0, n_actions=3, T0=50, T=10, L=inst.L, M=inst.M)
        feats = env.features_at(degenerate, 1, np.random.default_rng(9))
        residual_part = feats @ degenerate.basis.u_res
        assert np.max(np.abs(residual_part)) <= 1e-10

    def test_norms_clipped_at_L(self, instance):
        rng = np.random.default_rng(10)
        for t in (1, 50):
            feats = env.features_at(instance, t, rng)
            assert np.all(np.linalg.norm(feats, axis=1) <= instance.L + 1e-9)

    def test_out_of_range_round_rejected(self, instance):
        with pytest.raises(InvalidInputError):
            env.features_at(instance, instance.T + 1, np.random.default_rng(0))


class TestReward:
    def test_noiseless_basis_probe(self):
        inst = env.sample_instance(6, 2, 3, 50, 10, 0.0, np.random.default_rng(11))
        for j in range(inst.p_inv):
            got = env.reward(inst, 1, inst.basis.u_inv[:, j], np.random.default_rng(0))
            assert got == pytest.approx(inst.beta_inv_coords[j], abs=1e-12)

    def test_noiseless_orthogonal_feature(self):
        inst = env.sample_instance(6, 2, 3, 50, 10, 0.0, np.random.default_rng(12))
        gamma = inst.gamma(1)
        rng = np.random.default_rng(1)
        phi = rng.standard_normal(6)
        phi -= (phi @ gamma) / (gamma @ gamma) * gamma
        assert env.reward(inst, 1, phi, rng) == pytest.approx(0.0, abs=1e-10)

    def test_noise_is_centered(self):
        inst = env.sample_instance(4, 1, 2, 50, 10, 1.0, np.random.default_rng(13))
        rng = np.random.default_rng(14)
        phi = np.ones(4)
        mean_reward = phi @ inst.gamma(1)
        n = 100_000
        draws = np.array([env.reward(inst, 1, phi, rng) for _ in range(n)])
        assert abs(draws.mean() - mean_reward) <= 3.0 * inst.noise_sigma / np.sqrt(n)


class TestInstantaneousRegret:
    def test_chosen_optimum_has_zero_regret(self, instance):
        feats = env.features_at(instance, 1, np.random.default_rng(20))
        values = feats @ instance.gamma(1)
        best = feats[np.argmax(values)]
        assert env.instantaneous_regret(instance, 1, best, feats) == 0.0

    def test_two_point_gap(self):
        inst = env.sample_instance(2, 1, 2, 10, 5, 0.0, np.random.default_rng(21))
        gamma = inst.gamma(1)
        a = gamma / np.linalg.norm(gamma) ** 2
        feats = np.vstack([a, 0.3 * a])
        assert env.instantaneous_regret(inst, 1, feats[1], feats) == pytest.approx(0.7)

    def test_unknown_choice_rejected(self, instance):
        feats = env.features_at(instance, 1, np.random.default_rng(22))
        with pytest.raises(InvalidInputError):
            env.instantaneous_regret(instance, 1, feats[0] + 1.0, feats)


class TestOfflineLog:
    def test_reference_scale_has_positive_min_eigenvalue(self):
        for seed in range(20):
            inst = env.sample_instance(10, 3, 5, 2000, 10, 1.0, np.random.default_rng(seed))
            log = env.generate_offline_log(inst, np.random.default_rng(100 + seed))
            assert log.lambda0_hat > 0

    def test_single_observation_is_rank_deficient(self):
        inst = env.sample_instance(3, 1, 2, 1, 5, 1.0, np.random.default_rng(30))
        log = env.generate_offline_log(inst, np.random.default_rng(31))
        assert len(log) == 1
        assert log.lambda0_hat == 0.0
        assert log.rank_deficient

    def test_action_frequencies_uniform(self):
        inst = env.sample_instance(3, 1, 4, 100_000, 5, 0.0, np.random.default_rng(32))
        log = env.generate_offline_log(inst, np.random.default_rng(33))
        freq = np.bincount(log.actions, minlength=5)[1:] / len(log)
        bound = 3.0 * np.sqrt(0.25 * (1 - 0.25) / len(log))
        assert np.all(np.abs(freq - 0.25) <= bound)

    def test_block_projections_uncorrelated(self):
        inst = env.sample_instance(6, 2, 3, 100_000, 10, 0.0, np.random.default_rng(34))
        log = env.generate_offline_log(inst, np.random.default_rng(35))
        inv_part = log.features @ inst.basis.u_inv
        res_part = log.features @ inst.basis.u_res
        inv_c = inv_part - inv_part.mean(axis=0)
        res_c = res_part - res_part.mean(axis=0)
        cross = inv_c.T @ res_c / len(log)
        assert np.max(np.abs(cross)) <= 4.0 / np.sqrt(len(log)) * np.sqrt(inst.L)

    def test_bitwise_reproducible(self):
        inst = env.sample_instance(5, 2, 3, 500, 10, 1.0, np.random.default_rng(36))
        log1 = env.generate_offline_log(inst, np.random.default_rng(37))
        log2 = env.generate_offline_log(inst, np.random.default_rng(37))
        np.testing.assert_array_equal(log1.features, log2.features)
        np.testing.assert_array_equal(log1.actions, log2.actions)
        np.testing.assert_array_equal(log1.rewards, log2.rewards)

    def test_csv_round_trip(self, tmp_path, instance):
        log = env.generate_offline_log(
            env.sample_instance(4, 2, 3, 50, 10, 1.0, np.random.default_rng(38)),
            np.random.default_rng(39))
        path = tmp_path / "log.csv"
        log.to_csv(path)
        back = env.OfflineLog.from_csv(path)
        np.testing.assert_array_equal(back.features, log.features)
        np.testing.assert_array_equal(back.actions, log.actions)
        np.testing.assert_array_equal(back.rewards, log.rewards)
        assert back.lambda0_hat == pytest.approx(log.lambda0_hat, abs=1e-12)
        header = path.read_text().splitlines()[0]
        assert header == "t,action,reward,f_1,f_2,f_3,f_4"


class TestHypercube:
    def test_single_coordinate_parameter_values(self):
        inst = env.hypercube_worst_case(1, 4, np.random.default_rng(40))
        assert inst.gamma_vec[0] in (-0.5, 0.5)

    def test_optimal_reward_is_sign_matched_sum(self):
        inst = env.hypercube_worst_case(4, 16, np.random.default_rng(41))
        corners = env.hypercube_candidates(inst, 1, np.random.default_rng(42))
        best = np.max(corners @ inst.gamma_vec)
        assert best == pytest.approx(np.sum(np.abs(inst.gamma_vec)), abs=1e-12)
        assert best == pytest.approx(inst.p / np.sqrt(inst.T), abs=1e-12)

    def test_small_p_enumerates_all_corners(self):
        inst = env.hypercube_worst_case(3, 9, np.random.default_rng(43))
        corners = env.hypercube_candidates(inst, 1, np.random.default_rng(44))
        assert corners.shape == (8, 3)
        assert len({tuple(c) for c in map(tuple, corners)}) == 8

    def test_large_p_uses_axis_pinned_corners(self):
        inst = env.hypercube_worst_case(12, 100, np.random.default_rng(45))
        corners = env.hypercube_candidates(inst, 1, np.random.default_rng(46))
        assert corners.shape == (24, 12)
        for i in range(12):
            assert corners[2 * i, i] == 1.0
            assert corners[2 * i + 1, i] == -1.0
        assert np.all(np.abs(corners) == 1.0)


class TestInstanceConfigJson:
    def test_round_trip(self):
        config = {"p": 10, "p_res": 3, "K": 5, "T0": 2000, "T": 100,
                  "noise_sigma": 1.0, "seed": 7}
        doc = env.instance_config_to_json(config)
        assert env.instance_config_from_json(doc) == config
        assert json.loads(doc)["p"] == 10

    def test_unknown_keys_rejected(self):
        with pytest.raises(InvalidInputError):
            env.instance_config_to_json({"p": 3, "bogus": 1})
