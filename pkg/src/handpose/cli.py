"""Command-line interface.

Subcommands: generate-data, train, eval, ablate. Every run writes a
manifest JSON next to its output recording content hashes of the config,
input data, and output, so any reported number can be traced to its
inputs. Failures exit nonzero with a one-line JSON error on stderr.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

from .checkpoint import save_checkpoint
from .config import TrainConfig, load_config, load_variants
from .synthetic import read_jsonl, sample_synthetic, write_jsonl
from .training import (
    ablation_csv,
    evaluate,
    load_validated_checkpoint,
    run_ablation,
    stage1_pretrain,
    stage2_train_generator,
    stage3_adversarial,
)


def _sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def _sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _write_manifest(out_path: Path, command: str, *, config: TrainConfig | None = None,
                    inputs: dict[str, Path] | None = None) -> None:
    manifest = {
        "command": command,
        "output": out_path.name,
        "output_sha256": _sha256_file(out_path),
    }
    if config is not None:
        manifest["config_sha256"] = _sha256_text(
            json.dumps(config.to_dict(), sort_keys=True, separators=(",", ":")))
    for name, path in (inputs or {}).items():
        manifest[f"{name}_sha256"] = _sha256_file(Path(path))
    text = json.dumps(manifest, sort_keys=True, separators=(",", ":"))
    Path(str(out_path) + ".manifest.json").write_text(text, encoding="utf-8")


def _cmd_generate_data(args) -> int:
    samples = sample_synthetic(args.seed, args.count)
    out = Path(args.out)
    write_jsonl(samples, out)
    _write_manifest(out, "generate-data")
    print(f"wrote {len(samples)} samples to {out}")
    return 0


def _cmd_train(args) -> int:
    config = load_config(args.config) if args.config else TrainConfig()
    dataset = read_jsonl(args.data)
    inputs = {"data": Path(args.data)}
    if args.stage == 1:
        ckpt = stage1_pretrain(config, dataset)
    else:
        if not args.init_checkpoint:
            raise ValueError(f"--init-checkpoint is required for stage {args.stage}")
        init = load_validated_checkpoint(args.init_checkpoint)
        inputs["init_checkpoint"] = Path(args.init_checkpoint)
        if args.stage == 2:
            ckpt = stage2_train_generator(config, init, dataset)
        else:
            ckpt = stage3_adversarial(config, init, dataset)
    out = Path(args.out)
    save_checkpoint(ckpt, out)
    _write_manifest(out, f"train --stage {args.stage}", config=config, inputs=inputs)
    print(f"stage {ckpt.stage} checkpoint written to {out}")
    return 0


def _cmd_eval(args) -> int:
    ckpt = load_validated_checkpoint(args.checkpoint)
    dataset = read_jsonl(args.data)
    report = evaluate(ckpt, dataset)
    out = Path(args.pck_out)
    out.write_text(report.to_csv(), encoding="utf-8")
    _write_manifest(out, "eval", config=ckpt.config,
                    inputs={"checkpoint": Path(args.checkpoint), "data": Path(args.data)})
    print(f"mean_error_mm={report.mean_error_mm!r} auc={report.pck.auc!r}")
    return 0


def _cmd_ablate(args) -> int:
    config = load_config(args.config) if args.config else TrainConfig()
    variants = load_variants(args.variants)
    rows = run_ablation(config, variants)
    out = Path(args.out)
    out.write_text(ablation_csv(rows), encoding="utf-8")
    _write_manifest(out, "ablate", config=config,
                    inputs={"variants": Path(args.variants)})
    print(f"ablation table with {len(rows)} rows written to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="handpose",
        description="Hand pose estimation pipeline: synthetic data, staged training, evaluation.")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate-data", help="write a synthetic JSONL dataset")
    gen.add_argument("--seed", type=int, required=True)
    gen.add_argument("--count", type=int, required=True)
    gen.add_argument("--out", required=True)
    gen.set_defaults(func=_cmd_generate_data)

    train = sub.add_parser("train", help="run one training stage")
    train.add_argument("--stage", type=int, choices=(1, 2, 3), required=True)
    train.add_argument("--config", default=None, help="key=value config file")
    train.add_argument("--data", required=True, help="training JSONL dataset")
    train.add_argument("--init-checkpoint", default=None,
                       help="previous-stage checkpoint (stages 2 and 3)")
    train.add_argument("--out", required=True, help="checkpoint output path")
    train.set_defaults(func=_cmd_train)

    ev = sub.add_parser("eval", help="evaluate a checkpoint")
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--data", required=True)
    ev.add_argument("--pck-out", required=True, help="CSV output path")
    ev.set_defaults(func=_cmd_eval)

    ab = sub.add_parser("ablate", help="train and evaluate ablation variants")
    ab.add_argument("--config", default=None)
    ab.add_argument("--variants", required=True, help="one variant per line")
    ab.add_argument("--out", required=True, help="CSV output path")
    ab.set_defaults(func=_cmd_ablate)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:
        print(json.dumps({"error": f"{type(exc).__name__}: {exc}"}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
