"""Networks of the hand-model module: rendering encoders and the parameter
decoder that feeds forward kinematics."""

from __future__ import annotations

from typing import Iterator, NamedTuple

import numpy as np

from . import autodiff as ad
from . import kinematics
from .autodiff import Tensor, as_tensor
from .optim import glorot_uniform
from .skeleton import SkeletonTemplate

RENDER_DIM = 32 * 32
PARAM_DIM = 33  # theta(20) + beta(6) + c_r(3) + c_t(3) + c_s(1)


class Mlp2:
    """Two-layer perceptron with relu: in_dim -> hidden -> out_dim."""

    def __init__(self, rng: np.random.Generator, in_dim: int, hidden: int, out_dim: int):
        self.w1 = Tensor(glorot_uniform(rng, in_dim, hidden), requires_grad=True)
        self.b1 = Tensor(np.zeros(hidden), requires_grad=True)
        self.w2 = Tensor(glorot_uniform(rng, hidden, out_dim), requires_grad=True)
        self.b2 = Tensor(np.zeros(out_dim), requires_grad=True)

    def __call__(self, x) -> Tensor:
        x = as_tensor(x)
        squeeze = x.ndim == 1
        if squeeze:
            x = ad.reshape(x, (1,) + x.shape)
        h = ad.relu(ad.add(ad.matmul(x, self.w1), self.b1))
        out = ad.add(ad.matmul(h, self.w2), self.b2)
        if squeeze:
            out = ad.reshape(out, out.shape[1:])
        return out

    def named_parameters(self) -> Iterator[tuple[str, Tensor]]:
        yield "w1", self.w1
        yield "b1", self.b1
        yield "w2", self.w2
        yield "b2", self.b2


class DecodedParams(NamedTuple):
    theta: Tensor  # (..., 20) radians, unclamped
    beta: Tensor   # (..., 6) in (0.7, 1.3)
    c_r: Tensor    # (..., 3) axis-angle
    c_t: Tensor    # (..., 3) mm
    c_s: Tensor    # (..., 1) strictly positive


class HandModelNet:
    """Latent encoder plus linear decoder producing hand/camera parameters.

    decode maps 33 raw outputs to theta (raw), beta = 1 + 0.3 tanh(raw),
    c_r and c_t (raw), c_s = exp(raw); zero weights therefore decode to the
    rest pose under the identity camera.
    """

    def __init__(self, rng: np.random.Generator, template: SkeletonTemplate,
                 latent_dim: int = 32, encoder_hidden: int = 128):
        self.template = template
        self.encoder = Mlp2(rng, RENDER_DIM, encoder_hidden, latent_dim)
        self.dec_w = Tensor(glorot_uniform(rng, latent_dim, PARAM_DIM), requires_grad=True)
        self.dec_b = Tensor(np.zeros(PARAM_DIM), requires_grad=True)

    def encode(self, rendering) -> Tensor:
        return self.encoder(rendering)

    def decode_params(self, z) -> DecodedParams:
        z = as_tensor(z)
        squeeze = z.ndim == 1
        if squeeze:
            z = ad.reshape(z, (1,) + z.shape)
        raw = ad.add(ad.matmul(z, self.dec_w), self.dec_b)
        if squeeze:
            raw = ad.reshape(raw, raw.shape[1:])
        theta = ad.slice_axis(raw, 0, 20)
        beta = ad.shift(ad.scale(ad.tanh(ad.slice_axis(raw, 20, 26)), 0.3), 1.0)
        c_r = ad.slice_axis(raw, 26, 29)
        c_t = ad.slice_axis(raw, 29, 32)
        c_s = ad.exp(ad.slice_axis(raw, 32, 33))
        return DecodedParams(theta, beta, c_r, c_t, c_s)

    def prior_pose(self, rendering) -> Tensor:
        """Rendering -> latent -> parameters -> posed 21x3 prior."""
        p = self.decode_params(self.encode(rendering))
        canonical = kinematics.forward_kinematics(p.theta, p.beta, self.template)
        return kinematics.apply_camera(canonical, p.c_r, p.c_t, p.c_s)

    def named_parameters(self) -> Iterator[tuple[str, Tensor]]:
        for name, p in self.encoder.named_parameters():
            yield f"encoder.{name}", p
        yield "decoder.w", self.dec_w
        yield "decoder.b", self.dec_b


def spatial_pooling_basis(n_filters: int, size: int = 32,
                          sigma: float = 2.0) -> np.ndarray:
    """Fixed Gaussian pooling filters on a grid covering the image.

    Used to initialize the feature head's first layer: a random-init
    extractor trained at the refinement stage's small learning rate stays
    near random features, whereas the full-scale counterpart of this head
    starts from pretrained weights. A spatial pooling basis is the
    desk-scale stand-in: features begin as a smoothed downsampling of the
    rendering and remain trainable.
    """
    grid = int(np.ceil(np.sqrt(n_filters)))
    centers = [(r, c)
               for r in np.linspace(2.0, size - 3.0, grid)
               for c in np.linspace(2.0, size - 3.0, grid)][:n_filters]
    rows, cols = np.mgrid[0:size, 0:size]
    basis = np.empty((size * size, n_filters))
    for k, (cr, cc) in enumerate(centers):
        filt = np.exp(-((rows - cr) ** 2 + (cols - cc) ** 2) / (2.0 * sigma ** 2))
        basis[:, k] = (filt / filt.sum()).reshape(-1)
    return basis


# Pooled blob intensities are O(1/30); this gain puts features at O(1).
SPATIAL_GAIN = 30.0


class FeatureHead:
    """Separate encoder head producing the refinement feature vector.

    The first layer starts as a spatial pooling basis (see
    spatial_pooling_basis); the second layer is Glorot random.
    """

    def __init__(self, rng: np.random.Generator, feature_dim: int = 64,
                 encoder_hidden: int = 128):
        self.mlp = Mlp2(rng, RENDER_DIM, encoder_hidden, feature_dim)
        self.mlp.w1.data[...] = SPATIAL_GAIN * spatial_pooling_basis(encoder_hidden)

    def __call__(self, rendering) -> Tensor:
        return self.mlp(rendering)

    def named_parameters(self) -> Iterator[tuple[str, Tensor]]:
        for name, p in self.mlp.named_parameters():
            yield name, p
