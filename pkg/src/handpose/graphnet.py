"""Graph-convolutional pose refinement.

A GCN layer is X -> A_hat X W + b with the constant normalized skeleton
adjacency. Res-blocks compose two GCN layers with two layer norms plus a
single-GCN skip path; the refinement network turns a prior pose and a
broadcast image feature into an additive deformation of the prior.
"""

from __future__ import annotations

from typing import Iterator

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, as_tensor
from .graph import SkeletonGraph
from .optim import glorot_uniform
from .skeleton import N_JOINTS

NamedParams = Iterator[tuple[str, Tensor]]

# Pose coordinates are O(100) mm while network features are O(1); the
# refiners consume pose columns divided by this and emit deformations
# multiplied by it, so unit-scale weights move millimeter-scale poses.
POSE_SCALE = 100.0


class GcnLayer:
    def __init__(self, rng: np.random.Generator, d_in: int, d_out: int,
                 zero_init: bool = False):
        self.d_in, self.d_out = d_in, d_out
        w = np.zeros((d_in, d_out)) if zero_init else glorot_uniform(rng, d_in, d_out)
        self.w = Tensor(w, requires_grad=True)
        self.b = Tensor(np.zeros(d_out), requires_grad=True)

    def named_parameters(self) -> NamedParams:
        yield "w", self.w
        yield "b", self.b


def gcn_forward(x, layer: GcnLayer, graph: SkeletonGraph,
                weight: Tensor | None = None) -> Tensor:
    """A_hat @ x @ W + b. `weight` substitutes a transformed W (e.g. a
    spectrally normalized view) without touching the stored parameter."""
    x = as_tensor(x)
    if x.shape[-1] != layer.d_in:
        raise ValueError(f"gcn_forward expects {layer.d_in} input features, got {x.shape}")
    w = layer.w if weight is None else weight
    mixed = ad.matmul(as_tensor(graph.normalized), x)
    return ad.add(ad.matmul(mixed, w), layer.b)


class LayerNorm:
    def __init__(self, dim: int):
        self.gain = Tensor(np.ones(dim), requires_grad=True)
        self.bias = Tensor(np.zeros(dim), requires_grad=True)

    def __call__(self, x) -> Tensor:
        return ad.layer_normalize(x, self.gain, self.bias)

    def named_parameters(self) -> NamedParams:
        yield "gain", self.gain
        yield "bias", self.bias


class GraphResBlock:
    """gcn -> layer norm -> gcn -> layer norm, plus a single-GCN skip."""

    def __init__(self, rng: np.random.Generator, dim: int):
        self.gcn1 = GcnLayer(rng, dim, dim)
        self.norm1 = LayerNorm(dim)
        self.gcn2 = GcnLayer(rng, dim, dim)
        self.norm2 = LayerNorm(dim)
        self.skip = GcnLayer(rng, dim, dim)

    def named_parameters(self) -> NamedParams:
        for child_name, child in (("gcn1", self.gcn1), ("norm1", self.norm1),
                                  ("gcn2", self.gcn2), ("norm2", self.norm2),
                                  ("skip", self.skip)):
            for name, p in child.named_parameters():
                yield f"{child_name}.{name}", p


def _rescale_pose_columns(x, pose_scale: float) -> Tensor:
    """Divide the leading 3 coordinate columns by pose_scale, keep the rest."""
    x = as_tensor(x)
    if pose_scale == 1.0:
        return x
    coords = ad.scale(ad.slice_axis(x, 0, 3), 1.0 / pose_scale)
    return ad.concat([coords, ad.slice_axis(x, 3, x.shape[-1])], axis=-1)


def res_block_forward(x, block: GraphResBlock, graph: SkeletonGraph) -> Tensor:
    x = as_tensor(x)
    h = gcn_forward(x, block.gcn1, graph)
    h = block.norm1(h)
    h = gcn_forward(h, block.gcn2, graph)
    h = block.norm2(h)
    return ad.add(h, gcn_forward(x, block.skip, graph))


class RefinementNet:
    """Stacked Graph Res-blocks mapping (..., 21, in_dim) to (..., 21, 3).

    The output layer starts at zero so training begins from the unchanged
    prior pose. `activation` inserts a relu after the input layer and after
    each residual addition; the res-block composition itself has none.
    """

    def __init__(self, rng: np.random.Generator, in_dim: int, hidden: int,
                 n_blocks: int, activation: bool = True,
                 pose_scale: float = POSE_SCALE):
        self.input = GcnLayer(rng, in_dim, hidden)
        self.blocks = [GraphResBlock(rng, hidden) for _ in range(n_blocks)]
        self.output = GcnLayer(rng, hidden, 3, zero_init=True)
        self.activation = activation
        self.pose_scale = pose_scale

    def forward(self, x, graph: SkeletonGraph) -> Tensor:
        x = _rescale_pose_columns(x, self.pose_scale)
        h = gcn_forward(x, self.input, graph)
        if self.activation:
            h = ad.relu(h)
        for block in self.blocks:
            h = res_block_forward(h, block, graph)
            if self.activation:
                h = ad.relu(h)
        return ad.scale(gcn_forward(h, self.output, graph), self.pose_scale)

    def named_parameters(self) -> NamedParams:
        for name, p in self.input.named_parameters():
            yield f"input.{name}", p
        for i, block in enumerate(self.blocks):
            for name, p in block.named_parameters():
                yield f"block{i}.{name}", p
        for name, p in self.output.named_parameters():
            yield f"output.{name}", p

    def parameter_count(self) -> int:
        return sum(p.size for _, p in self.named_parameters())


def refine(prior, feature, net, graph: SkeletonGraph) -> Tensor:
    """Refined pose = prior + net(prior concat broadcast feature)."""
    prior = as_tensor(prior)
    feature = as_tensor(feature)
    lead = prior.shape[:-2]
    f_dim = feature.shape[-1]
    f_nodes = ad.broadcast_to(ad.reshape(feature, lead + (1, f_dim)),
                              lead + (N_JOINTS, f_dim))
    x = ad.concat([prior, f_nodes], axis=-1)
    return ad.add(prior, net.forward(x, graph))


class FcRefiner:
    """Plain two-layer perceptron over the flattened node features;
    the ablation baseline for the graph network at a matched budget."""

    def __init__(self, rng: np.random.Generator, in_dim: int, hidden: int,
                 pose_scale: float = POSE_SCALE):
        self.in_dim = in_dim
        self.pose_scale = pose_scale
        flat = N_JOINTS * in_dim
        self.w1 = Tensor(glorot_uniform(rng, flat, hidden), requires_grad=True)
        self.b1 = Tensor(np.zeros(hidden), requires_grad=True)
        self.w2 = Tensor(np.zeros((hidden, N_JOINTS * 3)), requires_grad=True)
        self.b2 = Tensor(np.zeros(N_JOINTS * 3), requires_grad=True)

    @staticmethod
    def hidden_for_budget(in_dim: int, budget: int) -> int:
        flat = N_JOINTS * in_dim
        out = N_JOINTS * 3
        return max(1, round((budget - out) / (flat + 1 + out)))

    def forward(self, x, graph: SkeletonGraph) -> Tensor:
        x = _rescale_pose_columns(x, self.pose_scale)
        lead = x.shape[:-2]
        flat = ad.reshape(x, lead + (N_JOINTS * self.in_dim,))
        if len(lead) == 0:
            flat = ad.reshape(flat, (1, N_JOINTS * self.in_dim))
        h = ad.relu(ad.add(ad.matmul(flat, self.w1), self.b1))
        out = ad.add(ad.matmul(h, self.w2), self.b2)
        return ad.scale(ad.reshape(out, lead + (N_JOINTS, 3)), self.pose_scale)

    def named_parameters(self) -> NamedParams:
        yield "w1", self.w1
        yield "b1", self.b1
        yield "w2", self.w2
        yield "b2", self.b2

    def parameter_count(self) -> int:
        return sum(p.size for _, p in self.named_parameters())
