"""RL stack: forward fixtures, GAE oracle, gradient checks, PPO, checkpoints."""

import numpy as np
import pytest

from freeflyer.errors import CheckpointError
from freeflyer.rl.checkpoint import load_checkpoint, save_checkpoint
from freeflyer.rl.nets import (
    Adam,
    MlpParams,
    clip_grad_norm,
    gaussian_log_prob,
    global_grad_norm,
    init_params,
    policy_forward,
)
from freeflyer.rl.ppo import (
    RolloutBuffer,
    compute_gae,
    loss_and_grads,
    policy_gradient,
    surrogate_and_mean_grad,
)
from freeflyer.rl.train import (
    TrainConfig,
    deploy,
    evaluate_policy,
    random_policy_baseline,
    train,
)
from freeflyer.rng import substream
from freeflyer.vecenv import SetpointTask, SetpointVecEnv


def micro_params(obs_dim=1, act_dim=1, hidden=(1,), seed=3, log_std=-0.3):
    return init_params(obs_dim, act_dim, hidden, rng=np.random.default_rng(seed),
                       init_log_std=log_std)


class TestPolicyForward:
    def test_zero_params_zero_outputs(self):
        p = init_params(4, 2, (8, 8))
        for _, a in p.arrays():
            if not a.flags.writeable:
                continue
        zero = p.zeros_like()
        zero.log_std = np.full(2, -0.5)
        mean, log_std, value = policy_forward(zero, np.ones((3, 4)))
        assert np.array_equal(mean, np.zeros((3, 2)))
        assert np.array_equal(value, np.zeros(3))

    def test_hand_computed_two_layer_fixture(self):
        w0 = np.array([[0.5, -0.2], [0.1, 0.3]])
        b0 = np.array([0.05, -0.1])
        w1 = np.array([[1.0], [-0.7]])
        b1 = np.array([0.2])
        p = MlpParams(actor_w=[w0, w1], actor_b=[b0, b1],
                      critic_w=[w0.copy(), w1.copy()], critic_b=[b0.copy(), b1.copy()],
                      log_std=np.array([-0.4]))
        x = np.array([[0.3, -0.6]])
        h = np.tanh(x @ w0 + b0)
        expected = h @ w1 + b1
        mean, _, value = policy_forward(p, x)
        np.testing.assert_allclose(mean, expected, atol=1e-10)
        np.testing.assert_allclose(value, expected[:, 0], atol=1e-10)

    def test_log_prob_matches_closed_form(self):
        rng = np.random.default_rng(4)
        mean = rng.standard_normal((6, 3))
        log_std = np.array([-0.5, 0.1, -1.2])
        actions = mean + np.exp(log_std) * rng.standard_normal((6, 3))
        lp = gaussian_log_prob(actions, mean, log_std)
        for i in range(6):
            ref = 0.0
            for j in range(3):
                s = np.exp(log_std[j])
                ref += (-0.5 * ((actions[i, j] - mean[i, j]) / s) ** 2
                        - np.log(s) - 0.5 * np.log(2 * np.pi))
            assert lp[i] == pytest.approx(ref, abs=1e-10)


class TestComputeGae:
    def test_lambda_zero_collapses_to_delta(self):
        rng = np.random.default_rng(5)
        r = rng.standard_normal((2, 10))
        v = rng.standard_normal((2, 10))
        d = rng.random((2, 10)) < 0.2
        boot = rng.standard_normal(2)
        adv, ret = compute_gae(r, v, d, gamma=0.9, lam=0.0, bootstrap_value=boot)
        for i in range(2):
            for t in range(10):
                nv = v[i, t + 1] if t + 1 < 10 else boot[i]
                delta = r[i, t] + 0.9 * nv * (1 - d[i, t]) - v[i, t]
                assert adv[i, t] == pytest.approx(delta, abs=1e-12)

    def test_monte_carlo_limit(self):
        """gamma = lam = 1 on a single episode: A_t = sum_k>=t r_k - v_t."""
        rng = np.random.default_rng(6)
        r = rng.standard_normal((1, 8))
        v = rng.standard_normal((1, 8))
        d = np.zeros((1, 8), dtype=bool)
        d[0, -1] = True
        adv, _ = compute_gae(r, v, d, gamma=1.0, lam=1.0, bootstrap_value=np.zeros(1))
        for t in range(8):
            assert adv[0, t] == pytest.approx(np.sum(r[0, t:]) - v[0, t], abs=1e-12)

    def test_against_quadratic_oracle(self):
        """Random 20-step fixture vs the O(T^2) double-loop evaluation."""
        rng = np.random.default_rng(7)
        T = 20
        r = rng.standard_normal((3, T))
        v = rng.standard_normal((3, T))
        d = rng.random((3, T)) < 0.15
        boot = rng.standard_normal(3)
        gamma, lam = 0.97, 0.9
        adv, ret = compute_gae(r, v, d, gamma, lam, boot)

        for i in range(3):
            for t in range(T):
                acc = 0.0
                coef = 1.0
                for k in range(t, T):
                    nv = v[i, k + 1] if k + 1 < T else boot[i]
                    delta = r[i, k] + gamma * nv * (1 - d[i, k]) - v[i, k]
                    acc += coef * delta
                    if d[i, k]:
                        break
                    coef *= gamma * lam
                assert adv[i, t] == pytest.approx(acc, abs=1e-12)
                assert ret[i, t] == pytest.approx(acc + v[i, t], abs=1e-12)


class TestGradients:
    def _fixture_batch(self, p, n=16, seed=8):
        rng = np.random.default_rng(seed)
        obs = rng.standard_normal((n, p.obs_dim))
        mean, log_std, _ = policy_forward(p, obs)
        actions = mean + np.exp(log_std) * rng.standard_normal((n, p.act_dim))
        adv = rng.standard_normal(n)
        ret = rng.standard_normal(n)
        lp_old = gaussian_log_prob(actions, mean, log_std) + 0.05 * rng.standard_normal(n)
        return obs, actions, adv, ret, lp_old

    def test_analytic_matches_finite_differences(self):
        """Max relative error < 1e-5 against central differences on a micro-net."""
        p = micro_params(obs_dim=2, act_dim=1, hidden=(2,), seed=11)
        obs, actions, adv, ret, lp_old = self._fixture_batch(p, n=12)
        clip_eps, vc, ec = 0.2, 0.5, 0.01

        loss0, grads, _ = loss_and_grads(p, obs, actions, adv, ret, lp_old, clip_eps, vc, ec)
        grad_map = dict(grads.arrays())

        eps = 1e-6
        worst = 0.0
        for name, arr in p.arrays():
            for idx in np.ndindex(arr.shape):
                orig = arr[idx]
                arr[idx] = orig + eps
                lp, _, _ = loss_and_grads(p, obs, actions, adv, ret, lp_old, clip_eps, vc, ec)
                arr[idx] = orig - eps
                lm, _, _ = loss_and_grads(p, obs, actions, adv, ret, lp_old, clip_eps, vc, ec)
                arr[idx] = orig
                fd = (lp - lm) / (2 * eps)
                scale = max(abs(fd), abs(grad_map[name][idx]), 1e-8)
                worst = max(worst, abs(fd - grad_map[name][idx]) / scale)
        assert worst < 1e-5

    def test_infinite_clip_matches_vpg_direction(self):
        """With clip -> inf the update direction equals the VPG gradient."""
        p = micro_params(obs_dim=3, act_dim=2, hidden=(8,), seed=13)
        obs, actions, adv, ret, lp_old = self._fixture_batch(p, n=64, seed=14)
        # at theta = theta_old the stored log-probs equal the current ones
        mean, log_std, _ = policy_forward(p, obs)
        lp_old = gaussian_log_prob(actions, mean, log_std)

        g_ppo = policy_gradient(p, obs, actions, adv, lp_old, clip_eps=1e9)
        # independent VPG form: grad of -mean(logp * A)
        from freeflyer.rl.nets import backward, forward_with_cache

        mean, value, ac, cc = forward_with_cache(p, obs)
        std = np.exp(p.log_std)
        z = (actions - mean) / std
        up = adv / obs.shape[0]
        d_mean = -(up[:, None] * z / std)
        d_log_std = -np.sum(up[:, None] * (z * z - 1.0), axis=0)
        g_vpg = backward(p, ac, cc, d_mean, np.zeros_like(value), d_log_std)

        a = np.concatenate([g.ravel() for n_, g in g_ppo.arrays() if n_.startswith(("actor", "log_std"))])
        b = np.concatenate([g.ravel() for n_, g in g_vpg.arrays() if n_.startswith(("actor", "log_std"))])
        cosine = a @ b / (np.linalg.norm(a) * np.linalg.norm(b))
        assert cosine > 0.999

    def test_zero_advantages_freeze_policy_gradient(self):
        p = micro_params(obs_dim=2, act_dim=2, hidden=(4,), seed=15)
        obs, actions, _, ret, lp_old = self._fixture_batch(p, n=32, seed=16)
        _, grads, _ = loss_and_grads(p, obs, actions, np.zeros(32), ret, lp_old,
                                     clip_eps=0.2, value_coef=0.5, entropy_coef=0.0)
        for name, g in grads.arrays():
            if name.startswith("actor") or name == "log_std":
                np.testing.assert_allclose(g, 0.0, atol=1e-15)
        assert global_grad_norm(grads) > 0.0  # value branch still moves

    def test_clip_zeroes_adverse_gradient(self):
        ratio = np.array([1.5, 0.5, 1.5, 0.5, 1.0])
        adv = np.array([1.0, -1.0, -1.0, 1.0, 1.0])
        _, grad = surrogate_and_mean_grad(ratio, adv, clip_eps=0.2)
        # rho above 1+eps with positive advantage: clipped, zero gradient
        assert grad[0] == 0.0
        # rho below 1-eps with negative advantage: clipped, zero gradient
        assert grad[1] == 0.0
        # adverse-side ratios with the opposite advantage sign keep gradient
        assert grad[2] != 0.0 and grad[3] != 0.0 and grad[4] != 0.0

    def test_grad_norm_clipping(self):
        p = micro_params()
        g = p.zeros_like()
        g.actor_w[0][:] = 100.0
        clip_grad_norm(g, 0.5)
        assert global_grad_norm(g) == pytest.approx(0.5, rel=1e-9)


class TestCheckpoint:
    def test_round_trip_bit_identical(self, tmp_path):
        p = init_params(6, 6, (64, 64), rng=np.random.default_rng(17))
        path = tmp_path / "p.ffrl"
        save_checkpoint(path, p, {"obs_dim": 6, "act_dim": 6})
        q, meta = load_checkpoint(path)
        for (n1, a1), (n2, a2) in zip(p.arrays(), q.arrays()):
            assert n1 == n2
            assert np.array_equal(a1, a2)
        assert meta["obs_dim"] == 6

    def test_truncated_file_rejected(self, tmp_path):
        p = init_params(4, 2, (8,))
        path = tmp_path / "p.ffrl"
        save_checkpoint(path, p, {})
        blob = path.read_bytes()
        path.write_bytes(blob[: len(blob) // 2])
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_corrupted_checksum_rejected(self, tmp_path):
        p = init_params(4, 2, (8,))
        path = tmp_path / "p.ffrl"
        save_checkpoint(path, p, {})
        blob = bytearray(path.read_bytes())
        blob[30] ^= 0xFF
        path.write_bytes(bytes(blob))
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_shape_mismatch_names_dims(self, tmp_path):
        p = init_params(4, 2, (8,))
        path = tmp_path / "p.ffrl"
        save_checkpoint(path, p, {})
        with pytest.raises(CheckpointError, match="obs dim"):
            load_checkpoint(path, expect_obs_dim=6)


def tiny_train_config(tmp_path, total_steps, **kw):
    defaults = dict(total_steps=total_steps, n_envs=4, rollout_steps=32,
                    minibatch_size=64, eval_episodes=8, seed=0,
                    checkpoint_dir=str(tmp_path / "ckpt"),
                    task=SetpointTask(episode_steps=32))
    defaults.update(kw)
    return TrainConfig(**defaults)


class TestTrain:
    def test_zero_steps_returns_initial(self, tmp_path):
        cfg = tiny_train_config(tmp_path, 0)
        params, curve = train(cfg)
        assert curve == []
        q, _ = load_checkpoint(tmp_path / "ckpt" / "policy_final.ffrl")
        for (_, a), (_, b) in zip(params.arrays(), q.arrays()):
            assert np.array_equal(a, b)

    def test_fixed_seed_reproducible(self, tmp_path):
        cfg1 = tiny_train_config(tmp_path / "a", 256)
        cfg2 = tiny_train_config(tmp_path / "b", 256)
        p1, c1 = train(cfg1)
        p2, c2 = train(cfg2)
        assert c1 == c2
        for (_, a), (_, b) in zip(p1.arrays(), p2.arrays()):
            assert np.array_equal(a, b)
        f1 = (tmp_path / "a" / "ckpt" / "policy_final.ffrl").read_bytes()
        f2 = (tmp_path / "b" / "ckpt" / "policy_final.ffrl").read_bytes()
        assert f1 == f2

    def test_deploy_matches_training_eval(self, tmp_path):
        """Deployed controller reproduces the in-training deterministic eval."""
        cfg = tiny_train_config(tmp_path, 128)
        params, _ = train(cfg)
        ctrl = deploy(tmp_path / "ckpt" / "policy_final.ffrl")

        task = cfg.task
        env1 = SetpointVecEnv(task, n_envs=4, master_seed=77)
        env2 = SetpointVecEnv(task, n_envs=4, master_seed=77)
        obs1 = env1.observations()
        obs2 = env2.observations()
        for _ in range(20):
            mean, _, _ = policy_forward(params, obs1)
            a1 = np.clip(mean, -1.0, 1.0)
            a2 = ctrl.act(obs2)
            assert np.array_equal(a1, a2)
            obs1, _, _ = env1.step(a1)
            obs2, _, _ = env2.step(a2)
            assert np.array_equal(obs1, obs2)


class TestEvaluation:
    def test_random_baseline_deterministic(self):
        task = SetpointTask(episode_steps=64)
        a = random_policy_baseline(task, 8, seed=0)
        b = random_policy_baseline(task, 8, seed=0)
        assert a == b

    def test_eval_uses_terminal_distance(self):
        task = SetpointTask(episode_steps=16)
        p = init_params(6, 6, (8,), rng=np.random.default_rng(1))
        out = evaluate_policy(p, task, 8, seed=0)
        assert np.isfinite(out["mean_final_distance"])
        assert out["mean_final_distance"] > 0.0
