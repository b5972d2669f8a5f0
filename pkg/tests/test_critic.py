"""Multi-source critic: KCS layer, scoring, Wasserstein losses."""

import numpy as np
import pytest

from handpose import autodiff as ad
from handpose.autodiff import Tape, Tensor
from handpose.critic import (
    MultiSourceCritic,
    SingleSourceCritic,
    critic_loss,
    criticize,
    generator_adversarial_loss,
    kcs_bone_matrix,
)
from handpose.graph import build_hand_graph
from handpose.optim import AdamState, adam_step
from handpose.skeleton import N_JOINTS, default_template

from fd_oracle import assert_grads_close, finite_difference

GRAPH = build_hand_graph()
TEMPLATE = default_template()


def make_critic(seed=0, **kwargs) -> MultiSourceCritic:
    return MultiSourceCritic(np.random.default_rng(seed), **kwargs)


class TestKcsBoneMatrix:
    def test_origin_pose_gives_zero_matrix(self):
        out = kcs_bone_matrix(np.zeros((N_JOINTS, 3)), GRAPH)
        assert np.array_equal(out.data, np.zeros((20, 3)))

    def test_translation_invariance(self):
        rng = np.random.default_rng(1)
        pose = np.round(rng.uniform(-80, 80, (N_JOINTS, 3)) * 2**20) / 2**20
        t = np.round(rng.uniform(-50, 50, 3) * 2**20) / 2**20
        assert np.array_equal(kcs_bone_matrix(pose, GRAPH).data,
                              kcs_bone_matrix(pose + t, GRAPH).data)

    def test_rows_match_per_edge_loop(self):
        rng = np.random.default_rng(2)
        pose = rng.uniform(-80, 80, (N_JOINTS, 3))
        got = kcs_bone_matrix(pose, GRAPH).data
        for bone, child in enumerate(range(1, N_JOINTS)):
            assert np.array_equal(got[bone], pose[child] - pose[TEMPLATE.parents[child]])

    def test_differentiable_constant_multiply(self):
        pose = Tensor(np.random.default_rng(3).uniform(-50, 50, (N_JOINTS, 3)),
                      requires_grad=True)
        probe = np.random.default_rng(4).standard_normal((20, 3))
        with Tape() as tape:
            loss = ad.tsum(ad.mul(kcs_bone_matrix(pose, GRAPH), probe))
            tape.backward(loss)
        assert np.allclose(pose.grad, GRAPH.incidence.T @ probe, rtol=0, atol=1e-12)


class TestCriticize:
    def test_zero_weight_critic_scores_zero(self):
        critic = make_critic()
        for _, layer in critic._weight_layers():
            layer.w.data[...] = 0.0
            layer.b.data[...] = 0.0
        rng = np.random.default_rng(5)
        score = criticize(rng.uniform(0, 1, 1024), rng.uniform(-50, 50, (N_JOINTS, 3)),
                          critic, GRAPH)
        assert score.item() == 0.0

    def test_finite_for_large_poses(self):
        critic = make_critic(1)
        rng = np.random.default_rng(6)
        score = criticize(rng.uniform(0, 1, 1024), rng.uniform(-1e3, 1e3, (N_JOINTS, 3)),
                          critic, GRAPH)
        assert np.isfinite(score.item())

    def test_batched_matches_single(self):
        critic = make_critic(2)
        rng = np.random.default_rng(7)
        renders = rng.uniform(0, 1, (4, 1024))
        poses = rng.uniform(-60, 60, (4, N_JOINTS, 3))
        weights = critic.normalized_weights(update=False)
        batched = critic.score(renders, poses, GRAPH, weights).data
        for i in range(4):
            single = criticize(renders[i], poses[i], critic, GRAPH, weights=weights)
            assert np.allclose(batched[i], single.item(), rtol=0, atol=1e-12)

    def test_deterministic(self):
        critic = make_critic(3)
        rng = np.random.default_rng(8)
        render = rng.uniform(0, 1, 1024)
        pose = rng.uniform(-60, 60, (N_JOINTS, 3))
        a = criticize(render, pose, critic, GRAPH).item()
        b = criticize(render, pose, critic, GRAPH).item()
        assert a == b

    @pytest.mark.parametrize("seed", range(10))
    def test_score_gradient_wrt_pose(self, seed):
        critic = make_critic(100 + seed)
        rng = np.random.default_rng(200 + seed)
        render = rng.uniform(0, 1, 1024)
        pose0 = rng.uniform(-60, 60, (N_JOINTS, 3))
        weights = critic.normalized_weights(update=True)

        def build(p):
            return criticize(render, p, critic, GRAPH, weights=weights)

        t = Tensor(pose0.copy(), requires_grad=True)
        with Tape() as tape:
            tape.backward(build(t))
        want = finite_difference(lambda p: build(Tensor(p)).item(), [pose0.copy()])
        assert_grads_close(t.grad, want[0], rtol=1e-4, atol=1e-8)

    def test_gram_bone_branch(self):
        critic = make_critic(4, gram_bones=True)
        rng = np.random.default_rng(9)
        score = criticize(rng.uniform(0, 1, 1024), rng.uniform(-60, 60, (N_JOINTS, 3)),
                          critic, GRAPH)
        assert np.isfinite(score.item())
        assert critic.bone.w.shape == (400, 32)

    def test_single_source_critic(self):
        critic = SingleSourceCritic(np.random.default_rng(10))
        rng = np.random.default_rng(11)
        score = criticize(rng.uniform(0, 1, 1024), rng.uniform(-60, 60, (N_JOINTS, 3)),
                          critic, GRAPH)
        assert np.isfinite(score.item())
        names = [n for n, _ in critic.named_parameters()]
        assert all(not n.startswith(("img", "bone")) for n in names)


class TestWassersteinLosses:
    def test_equal_scores_zero_loss(self):
        s = np.array([0.3, -1.2, 0.8])
        assert critic_loss(s, s).item() == 0.0

    def test_arithmetic(self):
        assert critic_loss(np.array([1.0, 1.0]), np.array([-1.0, -1.0])).item() == -2.0
        assert generator_adversarial_loss(np.array([0.0])).item() == 0.0
        assert generator_adversarial_loss(np.array([2.0, 4.0])).item() == -3.0

    def test_empty_batches_rejected(self):
        with pytest.raises(ValueError, match="nonempty"):
            critic_loss(np.array([]), np.array([1.0]))
        with pytest.raises(ValueError, match="nonempty"):
            generator_adversarial_loss(np.array([]))

    @pytest.mark.parametrize("seed", range(5))
    def test_algebraic_identity(self, seed):
        # critic_loss = -generator_adversarial_loss - mean(real)
        rng = np.random.default_rng(300 + seed)
        real = rng.standard_normal(8)
        fake = rng.standard_normal(8)
        lhs = critic_loss(real, fake).item()
        rhs = -generator_adversarial_loss(fake).item() - real.mean()
        assert lhs == pytest.approx(rhs, rel=1e-12)

    def test_toy_separation_within_200_steps(self):
        # fixed linearly separable toy set: critic must push real above fake
        rng = np.random.default_rng(12)
        critic = make_critic(13)
        renders = rng.uniform(0, 1, (8, 1024))
        real_poses = np.stack([TEMPLATE.rest_positions()] * 8) + rng.normal(0, 2, (8, N_JOINTS, 3))
        fake_poses = real_poses + 40.0  # crude offset fakes
        params = [p for _, p in critic.named_parameters()]
        state = AdamState.for_params(params)
        for _ in range(200):
            with Tape() as tape:
                weights = critic.normalized_weights(update=True)
                real_scores = critic.score(renders, real_poses, GRAPH, weights)
                fake_scores = critic.score(renders, fake_poses, GRAPH, weights)
                loss = critic_loss(real_scores, fake_scores)
                for p in params:
                    p.zero_grad()
                tape.backward(loss)
            adam_step(params, [p.grad for p in params], state, lr=1e-3)
        weights = critic.normalized_weights(update=False)
        gap = (critic.score(renders, real_poses, GRAPH, weights).data.mean()
               - critic.score(renders, fake_poses, GRAPH, weights).data.mean())
        assert gap > 0.0


class TestSpectralContract:
    def test_all_weight_matrices_normalized_after_warmup(self):
        critic = make_critic(14)
        rng = np.random.default_rng(15)
        # inflate weights so normalization has work to do; the wide image
        # branch has near-tied top singular values, so give the single
        # per-step iterations room to converge
        for _, layer in critic._weight_layers():
            layer.w.data[...] *= 5.0
        for _ in range(150):
            weights = critic.normalized_weights(update=True)
        from test_optim import measured_sigma_max
        for name, tensor in weights.items():
            assert measured_sigma_max(tensor.data) <= 1.0 + 1e-2, name

    def test_one_power_iteration_per_step(self):
        critic = make_critic(16)
        states = critic.spectral_states()
        # move the fixed point so an update must change the estimates
        rng = np.random.default_rng(17)
        for _, layer in critic._weight_layers():
            layer.w.data[...] = rng.standard_normal(layer.w.shape)
        before = {n: (s.u.copy(), s.v.copy()) for n, s in states.items()}
        critic.normalized_weights(update=True)
        after_one = {n: (s.u.copy(), s.v.copy()) for n, s in states.items()}
        for n in states:
            assert not np.array_equal(before[n][0], after_one[n][0])
        critic.normalized_weights(update=False)
        for n, s in states.items():
            assert np.array_equal(s.u, after_one[n][0])
            assert np.array_equal(s.v, after_one[n][1])
