"""Training orchestration: stages, checkpoints, evaluation, ablation."""

import dataclasses
import json

import numpy as np
import pytest

from handpose.checkpoint import (
    Checkpoint,
    CheckpointError,
    CheckpointVersionError,
    load_checkpoint,
    save_checkpoint,
)
from handpose.config import AblationVariant, TrainConfig, parse_config_text, parse_variants_text
from handpose.graph import build_hand_graph
from handpose.synthetic import sample_synthetic, to_dataset
from handpose.training import (
    GeneratorNets,
    _generator_epochs,
    ablation_csv,
    build_hand_model,
    build_refinement,
    default_datasets,
    derived_rng,
    derived_seed,
    evaluate,
    expected_param_names,
    load_validated_checkpoint,
    models_from_checkpoint,
    predict_poses,
    run_ablation,
    stage1_pretrain,
    stage2_train_generator,
    stage3_adversarial,
    _load_into,
)

TINY = TrainConfig(seed=11, train_size=24, test_size=12, batch_size=8,
                   stage1_epochs=2, stage2_epochs=2, stage3_epochs=2,
                   res_blocks=1, hidden_dim=16, encoder_hidden=32,
                   latent_dim=32, feature_dim=16)


@pytest.fixture(scope="module")
def tiny_data():
    train = to_dataset(sample_synthetic(derived_seed(TINY.seed, "dataset-train"), TINY.train_size))
    test = to_dataset(sample_synthetic(derived_seed(TINY.seed, "dataset-test"), TINY.test_size))
    return train, test


@pytest.fixture(scope="module")
def tiny_checkpoints(tiny_data):
    train, _ = tiny_data
    ck1 = stage1_pretrain(TINY, train)
    ck2 = stage2_train_generator(TINY, ck1, train)
    ck3 = stage3_adversarial(TINY, ck2, train)
    return ck1, ck2, ck3


class TestStages:
    def test_smoke_run_emits_finite_losses(self, tiny_data, tiny_checkpoints):
        _, test = tiny_data
        ck1, ck2, ck3 = tiny_checkpoints
        for ck in (ck1, ck2, ck3):
            report = evaluate(ck, test)
            assert np.isfinite(report.mean_error_mm)

    def test_stage_tags_and_epochs(self, tiny_checkpoints):
        ck1, ck2, ck3 = tiny_checkpoints
        assert (ck1.stage, ck2.stage, ck3.stage) == ("I", "II", "III")
        assert ck1.epoch == TINY.stage1_epochs

    def test_stage_tag_mismatch_rejected(self, tiny_data, tiny_checkpoints):
        train, _ = tiny_data
        ck1, ck2, _ = tiny_checkpoints
        with pytest.raises(ValueError, match="stage I checkpoint"):
            stage2_train_generator(TINY, ck2, train)
        with pytest.raises(ValueError, match="stage II checkpoint"):
            stage3_adversarial(TINY, ck1, train)

    def test_determinism_bit_identical(self, tiny_data):
        train, _ = tiny_data
        a = stage1_pretrain(TINY, train)
        b = stage1_pretrain(TINY, train)
        for name in a.params:
            assert np.array_equal(a.params[name], b.params[name]), name

    def test_stage2_with_zero_frozen_refinement_matches_stage1_eval(
            self, tiny_data, tiny_checkpoints):
        # an untrained refinement (zero output layer) evaluates exactly
        # like the stage I checkpoint it wraps
        train, test = tiny_data
        ck1, _, _ = tiny_checkpoints
        hand = build_hand_model(TINY)
        _load_into({f"hand.{n}": p for n, p in hand.named_parameters()},
                   ck1.params, "ck1")
        feature, refiner = build_refinement(TINY)
        nets = GeneratorNets(hand, feature, refiner)
        pred_refined = predict_poses(nets, test.renderings)
        pred_prior = predict_poses(GeneratorNets(hand, None, None), test.renderings)
        assert np.array_equal(pred_refined, pred_prior)

    def test_stage3_disabled_adversarial_matches_generator_only_training(self, tiny_data):
        # lambda_wass = 0 and critic lr = 0: generator trajectory identical
        # to plain stage-II-style training continued from the checkpoint
        train, _ = tiny_data
        cfg = dataclasses.replace(TINY, lambda_wass=0.0, critic_lr=0.0)
        ck1 = stage1_pretrain(cfg, train)
        ck2 = stage2_train_generator(cfg, ck1, train)
        ck3 = stage3_adversarial(cfg, ck2, train)

        hand = build_hand_model(cfg)
        feature, refiner = build_refinement(cfg)
        nets = GeneratorNets(hand, feature, refiner)
        _load_into(nets.named_parameters(), ck2.params, "ck2")
        _generator_epochs(cfg, nets, train, cfg.stage3_epochs, cfg.stage3_lr,
                          "shuffle-stage3", "III", build_hand_graph())
        reference = {name: p.data.copy() for name, p in nets.named_parameters().items()}
        for name, want in reference.items():
            assert np.array_equal(ck3.params[name], want), name

    def test_nonfinite_loss_aborts_with_batch_index(self, tiny_data):
        train, _ = tiny_data
        bad = dataclasses.replace(TINY, stage1_epochs=1)
        broken = dataclasses.replace(
            train, renderings=train.renderings.copy(), poses3d=train.poses3d.copy(),
            poses2d=train.poses2d.copy(), params=train.params.copy())
        broken.poses3d[:, :, :] = np.nan
        with pytest.raises((FloatingPointError, ValueError), match="batch|bone"):
            stage1_pretrain(bad, broken)

    def test_critic_update_ratio(self, tiny_data, tiny_checkpoints):
        # ratio 2: critic steps every batch, generator every second batch
        train, _ = tiny_data
        _, ck2, _ = tiny_checkpoints
        cfg = dataclasses.replace(TINY, critic_update_ratio=2)
        ck3 = stage3_adversarial(cfg, ck2, train)
        batches_per_epoch = -(-len(train) // cfg.batch_size)
        assert ck3.optimizers["critic"].step_count == batches_per_epoch * cfg.stage3_epochs
        assert ck3.optimizers["generator"].step_count == \
            (batches_per_epoch // 2) * cfg.stage3_epochs

    def test_empty_dataset_rejected(self, tiny_data):
        train, _ = tiny_data
        empty = dataclasses.replace(
            train, renderings=train.renderings[:0], poses3d=train.poses3d[:0],
            poses2d=train.poses2d[:0], params=train.params[:0])
        with pytest.raises(ValueError, match="nonempty"):
            stage1_pretrain(TINY, empty)


class TestCheckpointRoundTrip:
    def test_save_load_save_is_byte_identical(self, tiny_checkpoints, tmp_path):
        _, _, ck3 = tiny_checkpoints
        p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
        save_checkpoint(ck3, p1)
        loaded = load_checkpoint(p1)
        save_checkpoint(loaded, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_load_restores_arrays_bit_identically(self, tiny_checkpoints, tmp_path):
        ck1, _, _ = tiny_checkpoints
        path = tmp_path / "ck.json"
        save_checkpoint(ck1, path)
        loaded = load_checkpoint(path)
        for name, arr in ck1.params.items():
            assert np.array_equal(loaded.params[name], arr)
        assert loaded.optimizers["generator"].step_count == ck1.optimizers["generator"].step_count

    def test_unknown_version_rejected(self, tiny_checkpoints, tmp_path):
        ck1, _, _ = tiny_checkpoints
        path = tmp_path / "ck.json"
        save_checkpoint(ck1, path)
        doc = json.loads(path.read_text())
        doc["version"] = 99
        path.write_text(json.dumps(doc))
        with pytest.raises(CheckpointVersionError, match="99"):
            load_checkpoint(path)

    def test_missing_array_reported_by_name(self, tiny_checkpoints, tmp_path):
        ck1, _, _ = tiny_checkpoints
        path = tmp_path / "ck.json"
        save_checkpoint(ck1, path)
        doc = json.loads(path.read_text())
        del doc["params"]["hand.decoder.w"]
        path.write_text(json.dumps(doc))
        with pytest.raises(CheckpointError, match="hand.decoder.w"):
            load_validated_checkpoint(path)

    def test_malformed_json_rejected(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        with pytest.raises(CheckpointError, match="JSON"):
            load_checkpoint(path)

    def test_expected_param_names_by_stage(self):
        names1 = expected_param_names(TINY, "I")
        names3 = expected_param_names(TINY, "III")
        assert all(n.startswith("hand.") for n in names1)
        assert any(n.startswith("critic.") for n in names3)
        assert any(n.startswith("refine.") for n in names3)


class TestEvaluate:
    def test_repeated_evaluation_identical_bytes(self, tiny_data, tiny_checkpoints):
        _, test = tiny_data
        _, ck2, _ = tiny_checkpoints
        a = evaluate(ck2, test).to_csv()
        b = evaluate(ck2, test).to_csv()
        assert a == b

    def test_pck_monotone_and_auc_bounded(self, tiny_data, tiny_checkpoints):
        _, test = tiny_data
        _, _, ck3 = tiny_checkpoints
        report = evaluate(ck3, test)
        assert np.all(np.diff(report.pck.values) >= 0)
        assert 0.0 <= report.pck.auc <= 1.0

    def test_stage1_checkpoint_evaluates_prior_only(self, tiny_data, tiny_checkpoints):
        _, test = tiny_data
        ck1, _, _ = tiny_checkpoints
        nets = models_from_checkpoint(ck1)
        assert nets.refiner is None
        report = evaluate(ck1, test)
        assert np.isfinite(report.mean_error_mm)


class TestAblation:
    def test_single_full_variant_matches_plain_run(self, tiny_data):
        train, test = tiny_data
        rows = run_ablation(TINY, [AblationVariant()], train_ds=train, test_ds=test)
        ck1 = stage1_pretrain(TINY, train)
        ck2 = stage2_train_generator(TINY, ck1, train)
        ck3 = stage3_adversarial(TINY, ck2, train)
        want = [evaluate(ck, test).mean_error_mm for ck in (ck1, ck2, ck3)]
        got = [row["mean_error_mm"] for row in rows]
        assert got == want

    def test_variant_rows_in_order_one_per_stage_reached(self, tiny_data):
        train, test = tiny_data
        variants = [
            AblationVariant(refinement="none", critic="none", name="prior-only"),
            AblationVariant(refinement="fc", critic="none", name="fc-noadv"),
            AblationVariant(name="full"),
        ]
        rows = run_ablation(TINY, variants, train_ds=train, test_ds=test)
        labels = [(r["variant"], r["stage"]) for r in rows]
        assert labels == [("prior-only", "I"),
                          ("fc-noadv", "I"), ("fc-noadv", "II"),
                          ("full", "I"), ("full", "II"), ("full", "III")]

    def test_csv_format(self, tiny_data):
        train, test = tiny_data
        rows = run_ablation(TINY, [AblationVariant(refinement="none", critic="none")],
                            train_ds=train, test_ds=test)
        text = ablation_csv(rows)
        lines = text.strip().splitlines()
        assert lines[0] == "variant,stage,mean_error_mm"
        assert len(lines) == 2

    def test_shared_stage1_between_loss_variants_differs(self, tiny_data):
        # disabling bone losses changes training, hence the numbers
        train, test = tiny_data
        rows = run_ablation(
            TINY,
            [AblationVariant(refinement="none", critic="none", name="with"),
             AblationVariant(refinement="none", critic="none",
                             enable_loss_len=False, enable_loss_dir=False, name="without")],
            train_ds=train, test_ds=test)
        assert rows[0]["mean_error_mm"] != rows[1]["mean_error_mm"]


class TestConfigParsing:
    def test_round_trip_key_values(self):
        text = """
        # training schedule
        seed = 3
        train_size = 64
        stage1_epochs = 5
        stage2_lr = 0.0002
        refinement = fc
        enable_loss_dir = false
        resblock_activation = true
        """
        cfg = parse_config_text(text)
        assert cfg.seed == 3
        assert cfg.train_size == 64
        assert cfg.stage2_lr == 0.0002
        assert cfg.refinement == "fc"
        assert cfg.enable_loss_dir is False
        assert cfg.resblock_activation is True

    def test_unknown_key_rejected(self):
        with pytest.raises(ValueError, match="unknown key"):
            parse_config_text("no_such_key = 5")

    def test_bad_value_rejected(self):
        with pytest.raises(ValueError, match="cannot parse"):
            parse_config_text("seed = abc")

    def test_invalid_choice_rejected(self):
        with pytest.raises(ValueError, match="refinement"):
            parse_config_text("refinement = pixie")

    def test_variants_parsing(self):
        text = """
        # default full model
        name=full
        refinement=fc critic=single loss_len=off
        """
        variants = parse_variants_text(text)
        assert variants[0].name == "full"
        assert variants[1].refinement == "fc"
        assert variants[1].critic == "single"
        assert variants[1].enable_loss_len is False
        assert variants[1].enable_loss_dir is True

    def test_config_dict_round_trip(self):
        cfg = TrainConfig(seed=5, refinement="fc")
        again = TrainConfig.from_dict(cfg.to_dict())
        assert again == cfg

    def test_config_rejects_negative_seed_and_bad_pck_grid(self):
        with pytest.raises(ValueError, match="seed"):
            TrainConfig(seed=-1)
        with pytest.raises(ValueError, match="pck"):
            TrainConfig(pck_min_mm=50.0, pck_max_mm=20.0)


class TestSeedDerivation:
    def test_labeled_streams_differ(self):
        a = derived_rng(7, "dataset-train").standard_normal(4)
        b = derived_rng(7, "dataset-test").standard_normal(4)
        assert not np.array_equal(a, b)

    def test_streams_stable_across_calls(self):
        assert derived_seed(7, "dataset-train") == derived_seed(7, "dataset-train")
        a = derived_rng(7, "shuffle-stage1").permutation(10)
        b = derived_rng(7, "shuffle-stage1").permutation(10)
        assert np.array_equal(a, b)

    def test_default_datasets_sizes(self):
        cfg = dataclasses.replace(TINY, train_size=10, test_size=4)
        train, test = default_datasets(cfg)
        assert len(train) == 10
        assert len(test) == 4
