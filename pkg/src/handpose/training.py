"""Three-stage training, evaluation, and the ablation harness.

Stage I pretrains the hand-model network alone; stage II trains the full
generator (hand model warm-started, refinement fresh with a zero output
layer); stage III alternates Wasserstein critic updates with generator
updates that include the adversarial term. Everything is deterministic
given (seed, config, dataset): randomness flows only through labeled
streams derived from the master seed.
"""

from __future__ import annotations

import io
import zlib
from dataclasses import dataclass

import numpy as np

from .autodiff import Tape, Tensor, as_tensor
from .checkpoint import AdamSnapshot, Checkpoint, CheckpointError, load_checkpoint
from .config import AblationVariant, TrainConfig
from .critic import MultiSourceCritic, SingleSourceCritic, critic_loss
from .graph import SkeletonGraph, build_hand_graph
from .graphnet import FcRefiner, RefinementNet, refine
from .handnet import FeatureHead, HandModelNet
from .losses import PckCurve, metric_mean_error, metric_pck, pck_csv, total_loss
from .optim import AdamState, adam_step
from .skeleton import default_template
from .synthetic import Dataset, sample_synthetic, to_dataset

CRITIC_DIVERGENCE_LIMIT = 1e6


def _label_code(label: str) -> int:
    return zlib.crc32(label.encode("utf-8"))


def derived_rng(seed: int, label: str) -> np.random.Generator:
    """Independent deterministic stream for one named purpose."""
    return np.random.default_rng(np.random.SeedSequence([seed, _label_code(label)]))


def derived_seed(seed: int, label: str) -> int:
    return int(np.random.SeedSequence([seed, _label_code(label)]).generate_state(1, np.uint64)[0])


# ---------------------------------------------------------------------------
# model construction


@dataclass
class GeneratorNets:
    hand: HandModelNet
    feature: FeatureHead | None
    refiner: RefinementNet | FcRefiner | None

    def named_parameters(self) -> dict[str, Tensor]:
        out = {f"hand.{n}": p for n, p in self.hand.named_parameters()}
        if self.feature is not None:
            out.update({f"feature.{n}": p for n, p in self.feature.named_parameters()})
        if self.refiner is not None:
            out.update({f"refine.{n}": p for n, p in self.refiner.named_parameters()})
        return out

    def forward(self, renderings, graph: SkeletonGraph) -> Tensor:
        prior = self.hand.prior_pose(renderings)
        if self.refiner is None:
            return prior
        return refine(prior, self.feature(renderings), self.refiner, graph)


def gcn_refiner_budget(in_dim: int, hidden: int, n_blocks: int) -> int:
    """Parameter count of the graph refiner, for budget-matched baselines."""
    input_layer = in_dim * hidden + hidden
    per_block = 3 * (hidden * hidden + hidden) + 2 * (2 * hidden)
    output_layer = hidden * 3 + 3
    return input_layer + n_blocks * per_block + output_layer


def build_hand_model(config: TrainConfig) -> HandModelNet:
    rng = derived_rng(config.seed, "init-hand")
    return HandModelNet(rng, default_template(), latent_dim=config.latent_dim,
                        encoder_hidden=config.encoder_hidden)


def build_refinement(config: TrainConfig) -> tuple[FeatureHead | None, RefinementNet | FcRefiner | None]:
    if config.refinement == "none":
        return None, None
    feature = FeatureHead(derived_rng(config.seed, "init-feature"),
                          feature_dim=config.feature_dim,
                          encoder_hidden=config.encoder_hidden)
    rng = derived_rng(config.seed, "init-refine")
    in_dim = 3 + config.feature_dim
    if config.refinement == "gcn":
        refiner = RefinementNet(rng, in_dim, config.hidden_dim, config.res_blocks,
                                activation=config.resblock_activation)
    else:
        budget = gcn_refiner_budget(in_dim, config.hidden_dim, config.res_blocks)
        refiner = FcRefiner(rng, in_dim, FcRefiner.hidden_for_budget(in_dim, budget))
    return feature, refiner


def build_critic(config: TrainConfig):
    if config.critic == "none":
        return None
    rng = derived_rng(config.seed, "init-critic")
    if config.critic == "multi":
        return MultiSourceCritic(rng, gram_bones=config.critic_gram_bones)
    return SingleSourceCritic(rng)


def _load_into(named: dict[str, Tensor], stored: dict[str, np.ndarray],
               source: str) -> None:
    for name, tensor in named.items():
        if name not in stored:
            raise CheckpointError(f"{source}: missing parameter array {name!r}")
        arr = stored[name]
        if arr.shape != tensor.data.shape:
            raise CheckpointError(
                f"{source}: parameter {name!r} has shape {arr.shape}, expected {tensor.data.shape}")
        tensor.data[...] = arr


def _snapshot(named: dict[str, Tensor]) -> dict[str, np.ndarray]:
    return {name: p.data.copy() for name, p in named.items()}


def _adam_snapshot(named: dict[str, Tensor], state: AdamState) -> AdamSnapshot:
    names = list(named)
    return AdamSnapshot(step_count=state.step_count,
                        m={n: m.copy() for n, m in zip(names, state.m)},
                        v={n: v.copy() for n, v in zip(names, state.v)})


def expected_param_names(config: TrainConfig, stage: str) -> set[str]:
    nets = GeneratorNets(build_hand_model(config), None, None)
    if stage in ("II", "III"):
        nets.feature, nets.refiner = build_refinement(config)
    names = set(nets.named_parameters())
    if stage == "III":
        critic = build_critic(config)
        if critic is not None:
            names.update(f"critic.{n}" for n, _ in critic.named_parameters())
    return names


def load_validated_checkpoint(path) -> Checkpoint:
    """Load a checkpoint and verify every parameter its config implies."""
    ckpt = load_checkpoint(path)
    return load_checkpoint(path, expected_params=expected_param_names(ckpt.config, ckpt.stage))


# ---------------------------------------------------------------------------
# training loops


def _minibatch_indices(n: int, batch_size: int, rng: np.random.Generator):
    perm = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield perm[start:start + batch_size]


def _generator_epochs(config: TrainConfig, nets: GeneratorNets, dataset: Dataset,
                      epochs: int, lr: float, shuffle_label: str, stage_name: str,
                      graph: SkeletonGraph) -> AdamState:
    """Train the generator on the non-adversarial objective."""
    weights = config.loss_weights(adversarial=False)
    named = nets.named_parameters()
    plist = list(named.values())
    adam = AdamState.for_params(plist)
    shuffle_rng = derived_rng(config.seed, shuffle_label)
    for epoch in range(epochs):
        for batch_index, idx in enumerate(_minibatch_indices(len(dataset), config.batch_size, shuffle_rng)):
            renders = as_tensor(dataset.renderings[idx])
            gt = as_tensor(dataset.poses3d[idx])
            with Tape() as tape:
                pred = nets.forward(renders, graph)
                loss = total_loss(pred, gt, graph, weights)
                value = loss.item()
                if not np.isfinite(value):
                    raise FloatingPointError(
                        f"non-finite loss in stage {stage_name} epoch {epoch} batch {batch_index}")
                for p in plist:
                    p.zero_grad()
                tape.backward(loss)
            adam_step(plist, [p.grad for p in plist], adam, lr)
    return adam


def stage1_pretrain(config: TrainConfig, dataset: Dataset) -> Checkpoint:
    """Pretrain the hand-model network from random initialization."""
    if len(dataset) == 0:
        raise ValueError("stage I requires a nonempty dataset")
    graph = build_hand_graph()
    nets = GeneratorNets(build_hand_model(config), None, None)
    adam = _generator_epochs(config, nets, dataset, config.stage1_epochs,
                             config.stage1_lr, "shuffle-stage1", "I", graph)
    named = nets.named_parameters()
    return Checkpoint(stage="I", epoch=config.stage1_epochs, config=config,
                      params=_snapshot(named),
                      optimizers={"generator": _adam_snapshot(named, adam)})


def stage2_train_generator(config: TrainConfig, checkpoint_1: Checkpoint,
                           dataset: Dataset) -> Checkpoint:
    """Train the full generator end to end, no critic."""
    if checkpoint_1.stage != "I":
        raise ValueError(f"stage II requires a stage I checkpoint, got {checkpoint_1.stage!r}")
    if config.refinement == "none":
        raise ValueError("stage II requires a refinement module; config says 'none'")
    graph = build_hand_graph()
    hand = build_hand_model(config)
    _load_into({f"hand.{n}": p for n, p in hand.named_parameters()},
               checkpoint_1.params, "stage I checkpoint")
    feature, refiner = build_refinement(config)
    nets = GeneratorNets(hand, feature, refiner)
    adam = _generator_epochs(config, nets, dataset, config.stage2_epochs,
                             config.stage2_lr, "shuffle-stage2", "II", graph)
    named = nets.named_parameters()
    return Checkpoint(stage="II", epoch=config.stage2_epochs, config=config,
                      params=_snapshot(named),
                      optimizers={"generator": _adam_snapshot(named, adam)})


def stage3_adversarial(config: TrainConfig, checkpoint_2: Checkpoint,
                       dataset: Dataset) -> Checkpoint:
    """Adversarial stage: alternate critic and generator updates.

    Real critic samples pair each rendering with its ground-truth pose, fake
    samples pair the same rendering with the generator's refined pose. The
    generator steps every `critic_update_ratio`-th batch.
    """
    if checkpoint_2.stage != "II":
        raise ValueError(f"stage III requires a stage II checkpoint, got {checkpoint_2.stage!r}")
    if config.critic == "none":
        raise ValueError("stage III requires a critic; config says 'none'")
    graph = build_hand_graph()
    hand = build_hand_model(config)
    feature, refiner = build_refinement(config)
    nets = GeneratorNets(hand, feature, refiner)
    _load_into(nets.named_parameters(), checkpoint_2.params, "stage II checkpoint")
    critic = build_critic(config)

    gen_named = nets.named_parameters()
    gen_params = list(gen_named.values())
    gen_adam = AdamState.for_params(gen_params)
    critic_named = {f"critic.{n}": p for n, p in critic.named_parameters()}
    critic_params = list(critic_named.values())
    critic_adam = AdamState.for_params(critic_params)

    weights = config.loss_weights(adversarial=True)
    shuffle_rng = derived_rng(config.seed, "shuffle-stage3")
    for epoch in range(config.stage3_epochs):
        for batch_index, idx in enumerate(_minibatch_indices(len(dataset), config.batch_size, shuffle_rng)):
            renders = as_tensor(dataset.renderings[idx])
            gt = as_tensor(dataset.poses3d[idx])

            # critic update: one power iteration per step, generator frozen
            fake_pose = as_tensor(nets.forward(renders, graph).data)
            with Tape() as tape:
                norm_w = critic.normalized_weights(update=True)
                real_scores = critic.score(renders, gt, graph, norm_w)
                fake_scores = critic.score(renders, fake_pose, graph, norm_w)
                d_loss = critic_loss(real_scores, fake_scores)
                d_value = d_loss.item()
                if not np.isfinite(d_value) or abs(d_value) > CRITIC_DIVERGENCE_LIMIT:
                    raise FloatingPointError(
                        f"critic diverged in stage III epoch {epoch} batch {batch_index}: {d_value}")
                for p in critic_params:
                    p.zero_grad()
                tape.backward(d_loss)
            adam_step(critic_params, [p.grad for p in critic_params], critic_adam,
                      config.critic_lr)

            if (batch_index + 1) % config.critic_update_ratio != 0:
                continue

            # generator update
            with Tape() as tape:
                pred = nets.forward(renders, graph)
                fake_scores = None
                if weights.wass != 0.0:
                    norm_w = critic.normalized_weights(update=False)
                    fake_scores = critic.score(renders, pred, graph, norm_w)
                g_loss = total_loss(pred, gt, graph, weights, fake_scores=fake_scores)
                g_value = g_loss.item()
                if not np.isfinite(g_value):
                    raise FloatingPointError(
                        f"non-finite loss in stage III epoch {epoch} batch {batch_index}")
                for p in gen_params:
                    p.zero_grad()
                tape.backward(g_loss)
            adam_step(gen_params, [p.grad for p in gen_params], gen_adam, config.stage3_lr)

    all_named = dict(gen_named)
    all_named.update(critic_named)
    spectral = {f"critic.{name}": {"u": st.u.copy(), "v": st.v.copy()}
                for name, st in critic.spectral_states().items()}
    return Checkpoint(stage="III", epoch=config.stage3_epochs, config=config,
                      params=_snapshot(all_named),
                      optimizers={"generator": _adam_snapshot(gen_named, gen_adam),
                                  "critic": _adam_snapshot(critic_named, critic_adam)},
                      spectral=spectral)


# ---------------------------------------------------------------------------
# evaluation


@dataclass(frozen=True)
class EvalReport:
    mean_error_mm: float
    pck: PckCurve

    def to_csv(self) -> str:
        return pck_csv(self.pck, self.mean_error_mm)


def models_from_checkpoint(ckpt: Checkpoint) -> GeneratorNets:
    config = ckpt.config
    hand = build_hand_model(config)
    nets = GeneratorNets(hand, None, None)
    if ckpt.stage in ("II", "III") and config.refinement != "none":
        nets.feature, nets.refiner = build_refinement(config)
    _load_into(nets.named_parameters(), ckpt.params, "checkpoint")
    return nets


def predict_poses(nets: GeneratorNets, renderings: np.ndarray,
                  chunk: int = 256) -> np.ndarray:
    """Forward-only batched prediction (no tape)."""
    graph = build_hand_graph()
    out = np.empty((renderings.shape[0], 21, 3))
    for start in range(0, renderings.shape[0], chunk):
        stop = min(start + chunk, renderings.shape[0])
        out[start:stop] = nets.forward(as_tensor(renderings[start:stop]), graph).data
    return out


def evaluate(ckpt: Checkpoint, dataset: Dataset) -> EvalReport:
    """Deterministic forward pass plus metrics over the dataset."""
    nets = models_from_checkpoint(ckpt)
    pred = predict_poses(nets, dataset.renderings)
    mean_error = metric_mean_error(pred, dataset.poses3d)
    pck = metric_pck(pred, dataset.poses3d, ckpt.config.pck_thresholds())
    return EvalReport(mean_error_mm=mean_error, pck=pck)


# ---------------------------------------------------------------------------
# ablation harness


def default_datasets(config: TrainConfig) -> tuple[Dataset, Dataset]:
    """Train/test splits derived from the master seed."""
    train = to_dataset(sample_synthetic(derived_seed(config.seed, "dataset-train"),
                                        config.train_size))
    test = to_dataset(sample_synthetic(derived_seed(config.seed, "dataset-test"),
                                       config.test_size))
    return train, test


def run_ablation(config: TrainConfig, variants: list[AblationVariant],
                 train_ds: Dataset | None = None,
                 test_ds: Dataset | None = None) -> list[dict]:
    """Train each variant on shared data/seed; one row per stage reached."""
    if train_ds is None or test_ds is None:
        generated = default_datasets(config)
        train_ds = generated[0] if train_ds is None else train_ds
        test_ds = generated[1] if test_ds is None else test_ds
    rows = []
    for variant in variants:
        vcfg = variant.apply(config)
        ck1 = stage1_pretrain(vcfg, train_ds)
        rows.append({"variant": variant.name, "stage": "I",
                     "mean_error_mm": evaluate(ck1, test_ds).mean_error_mm})
        if vcfg.refinement == "none":
            continue
        ck2 = stage2_train_generator(vcfg, ck1, train_ds)
        rows.append({"variant": variant.name, "stage": "II",
                     "mean_error_mm": evaluate(ck2, test_ds).mean_error_mm})
        if vcfg.critic == "none":
            continue
        ck3 = stage3_adversarial(vcfg, ck2, train_ds)
        rows.append({"variant": variant.name, "stage": "III",
                     "mean_error_mm": evaluate(ck3, test_ds).mean_error_mm})
    return rows


def ablation_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    buf.write("variant,stage,mean_error_mm\n")
    for row in rows:
        buf.write(f"{row['variant']},{row['stage']},{row['mean_error_mm']!r}\n")
    return buf.getvalue()
