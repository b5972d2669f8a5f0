"""Wasserstein critic scoring pose realism from image, pose, and bone inputs.

Every weight matrix is spectrally normalized (power-iteration estimate of
the top singular value, one iteration per training step), which is what
bounds the critic's Lipschitz constant; there is no weight clipping and no
gradient penalty. Scores are unbounded scalars, higher meaning more real.
"""

from __future__ import annotations

from typing import Iterator

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, as_tensor
from .graph import SkeletonGraph
from .graphnet import GcnLayer, gcn_forward
from .losses import bone_vectors
from .optim import SpectralNormState, glorot_uniform, spectral_normalize
from .skeleton import N_BONES

kcs_bone_matrix = bone_vectors  # the KCS layer and the loss module share it

BONE_SCALE = 1.0 / 100.0  # mm -> O(1) branch inputs


class _Linear:
    def __init__(self, rng: np.random.Generator, d_in: int, d_out: int):
        self.w = Tensor(glorot_uniform(rng, d_in, d_out), requires_grad=True)
        self.b = Tensor(np.zeros(d_out), requires_grad=True)

    def named_parameters(self) -> Iterator[tuple[str, Tensor]]:
        yield "w", self.w
        yield "b", self.b


def _apply(x: Tensor, layer: _Linear, weight: Tensor) -> Tensor:
    return ad.add(ad.matmul(x, weight), layer.b)


class MultiSourceCritic:
    """Image branch (MLP), pose branch (two GCN layers + node-mean pooling),
    bone branch (one linear layer), fused by a two-layer decision head.

    With gram_bones=True the bone branch consumes the flattened 20x20 Gram
    matrix of scaled bone vectors instead of the raw 20x3 matrix.
    """

    def __init__(self, rng: np.random.Generator, image_dim: int = 1024,
                 image_hidden: int = 128, image_out: int = 64,
                 pose_hidden: int = 32, bone_out: int = 32,
                 head_hidden: int = 64, gram_bones: bool = False):
        self.gram_bones = gram_bones
        bone_in = N_BONES * N_BONES if gram_bones else N_BONES * 3
        self.img1 = _Linear(rng, image_dim, image_hidden)
        self.img2 = _Linear(rng, image_hidden, image_out)
        self.pose1 = GcnLayer(rng, 3, pose_hidden)
        self.pose2 = GcnLayer(rng, pose_hidden, pose_hidden)
        self.bone = _Linear(rng, bone_in, bone_out)
        fused = image_out + pose_hidden + bone_out
        self.head1 = _Linear(rng, fused, head_hidden)
        self.head2 = _Linear(rng, head_hidden, 1)
        self._spectral = {
            name: SpectralNormState.init(rng, layer.w.shape, matrix=layer.w.data)
            for name, layer in self._weight_layers()
        }

    def _weight_layers(self):
        return (("img1", self.img1), ("img2", self.img2),
                ("pose1", self.pose1), ("pose2", self.pose2),
                ("bone", self.bone), ("head1", self.head1), ("head2", self.head2))

    def named_parameters(self) -> Iterator[tuple[str, Tensor]]:
        for prefix, layer in self._weight_layers():
            for name, p in layer.named_parameters():
                yield f"{prefix}.{name}", p

    def spectral_states(self) -> dict[str, SpectralNormState]:
        return self._spectral

    def normalized_weights(self, update: bool) -> dict[str, Tensor]:
        """Spectrally normalized views of every weight matrix. Call once per
        training step with update=True (one power iteration per weight)."""
        return {name: spectral_normalize(layer.w, self._spectral[name], update=update)
                for name, layer in self._weight_layers()}

    def score(self, renderings, poses, graph: SkeletonGraph,
              weights: dict[str, Tensor]) -> Tensor:
        """Batched critic score: (n, 1024) renderings, (n, 21, 3) poses -> (n,)."""
        renderings = as_tensor(renderings)
        poses = as_tensor(poses)
        h_img = ad.relu(_apply(renderings, self.img1, weights["img1"]))
        f_img = _apply(h_img, self.img2, weights["img2"])

        h_pose = ad.relu(gcn_forward(poses, self.pose1, graph, weight=weights["pose1"]))
        h_pose = gcn_forward(h_pose, self.pose2, graph, weight=weights["pose2"])
        f_pose = ad.tmean(h_pose, axis=-2)

        bones = ad.scale(kcs_bone_matrix(poses, graph), BONE_SCALE)
        if self.gram_bones:
            bones = ad.matmul(bones, ad.transpose_last2(bones))
            flat_dim = N_BONES * N_BONES
        else:
            flat_dim = N_BONES * 3
        f_bone = _apply(ad.reshape(bones, poses.shape[:-2] + (flat_dim,)),
                        self.bone, weights["bone"])

        fused = ad.concat([f_img, f_pose, f_bone], axis=-1)
        h = ad.relu(_apply(fused, self.head1, weights["head1"]))
        out = _apply(h, self.head2, weights["head2"])
        return ad.reshape(out, out.shape[:-1])


class SingleSourceCritic:
    """Ablation baseline: pose branch and decision head only."""

    def __init__(self, rng: np.random.Generator, pose_hidden: int = 32,
                 head_hidden: int = 64):
        self.pose1 = GcnLayer(rng, 3, pose_hidden)
        self.pose2 = GcnLayer(rng, pose_hidden, pose_hidden)
        self.head1 = _Linear(rng, pose_hidden, head_hidden)
        self.head2 = _Linear(rng, head_hidden, 1)
        self._spectral = {
            name: SpectralNormState.init(rng, layer.w.shape, matrix=layer.w.data)
            for name, layer in self._weight_layers()
        }

    def _weight_layers(self):
        return (("pose1", self.pose1), ("pose2", self.pose2),
                ("head1", self.head1), ("head2", self.head2))

    named_parameters = MultiSourceCritic.named_parameters
    spectral_states = MultiSourceCritic.spectral_states
    normalized_weights = MultiSourceCritic.normalized_weights

    def score(self, renderings, poses, graph: SkeletonGraph,
              weights: dict[str, Tensor]) -> Tensor:
        poses = as_tensor(poses)
        h_pose = ad.relu(gcn_forward(poses, self.pose1, graph, weight=weights["pose1"]))
        h_pose = gcn_forward(h_pose, self.pose2, graph, weight=weights["pose2"])
        f_pose = ad.tmean(h_pose, axis=-2)
        h = ad.relu(_apply(f_pose, self.head1, weights["head1"]))
        out = _apply(h, self.head2, weights["head2"])
        return ad.reshape(out, out.shape[:-1])


def criticize(rendering, pose, critic, graph: SkeletonGraph,
              weights: dict[str, Tensor] | None = None) -> Tensor:
    """Score one rendering/pose pair (or a batch). Without precomputed
    normalized weights this uses the current sigma estimates unchanged."""
    if weights is None:
        weights = critic.normalized_weights(update=False)
    rendering = as_tensor(rendering)
    pose = as_tensor(pose)
    single = pose.ndim == 2
    if single:
        rendering = ad.reshape(rendering, (1,) + rendering.shape)
        pose = ad.reshape(pose, (1,) + pose.shape)
    scores = critic.score(rendering, pose, graph, weights)
    return ad.reshape(scores, ()) if single else scores


def critic_loss(real_scores, fake_scores) -> Tensor:
    """Wasserstein critic objective: mean(fake) - mean(real)."""
    real_scores = as_tensor(real_scores)
    fake_scores = as_tensor(fake_scores)
    if real_scores.size == 0 or fake_scores.size == 0:
        raise ValueError("critic_loss requires nonempty score batches")
    return ad.sub(ad.tmean(fake_scores), ad.tmean(real_scores))


def generator_adversarial_loss(fake_scores) -> Tensor:
    """Generator-side Wasserstein term: -mean(fake)."""
    fake_scores = as_tensor(fake_scores)
    if fake_scores.size == 0:
        raise ValueError("generator_adversarial_loss requires a nonempty batch")
    return ad.neg(ad.tmean(fake_scores))
