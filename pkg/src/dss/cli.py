"""Command-line front end.

Every subcommand accepts --config pointing at a JSON file whose keys match
the flag names (dashes as underscores); explicitly passed flags override
file values. Exit codes: 0 success, 2 configuration error, 3 protocol
error, 4 stage/adapter failure.
"""

import argparse
import json
import os
import sys

import numpy as np

from dss.attacks import AttackConfig, build_triplets, load_triplets, save_triplets
from dss.core import (FLOAT_FMT, LabeledExample, load_idx_images,
                      load_idx_labels, load_images_csv)
from dss.dynamics import control_term, stability_residual, vdot
from dss.errors import (ConfigError, ContractError, FormatError, ProtocolError,
                        StageError)
from dss import harness
from dss.inpaint import HarmonicInpainter
from dss.model import (TrainConfig, evaluate_accuracy, load_checkpoint,
                       save_checkpoint, train_classifier)
from dss.monitor import (extract_features, load_detector, load_feature_records,
                         roc_auc, save_detector, save_feature_records,
                         score_batch, train_detector)
from dss.stability import DSSConfig, run_dss, save_trajectory

_DEFAULTS = {
    "epochs": 5, "batch_size": 64, "lr": 0.1, "seed": 0,
    "activation": "tanh", "pool": "avg",
    "method": "fgsm", "eps": 0.3, "alpha": 0.0, "steps": 1,
    "limit": 1000, "index": 0, "loops": 5, "ratio": 0.03,
    "split": 0.8, "view": "both", "count": 100, "control_alpha": 1.0,
}

_INT_KEYS = ("epochs", "batch_size", "seed", "steps", "limit", "index",
             "loops", "count")
_FLOAT_KEYS = ("lr", "eps", "alpha", "ratio", "split", "control_alpha")


def _apply_config_file(args):
    """Fill unset flags from the --config JSON file, then fall back to
    the built-in defaults."""
    values = {}
    if getattr(args, "config", None):
        with open(args.config) as f:
            try:
                values = json.load(f)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{args.config}: {exc}") from exc
        if not isinstance(values, dict):
            raise ConfigError(f"{args.config}: expected a JSON object")
        values.pop("schema", None)
    for key, value in vars(args).items():
        if value is None:
            if key in values:
                setattr(args, key, values[key])
            elif key in _DEFAULTS:
                setattr(args, key, _DEFAULTS[key])
    for key in _INT_KEYS:
        if getattr(args, key, None) is not None:
            try:
                setattr(args, key, int(getattr(args, key)))
            except ValueError as exc:
                raise ConfigError(f"--{key.replace('_', '-')}: {exc}") from exc
    for key in _FLOAT_KEYS:
        if getattr(args, key, None) is not None:
            try:
                setattr(args, key, float(getattr(args, key)))
            except ValueError as exc:
                raise ConfigError(f"--{key.replace('_', '-')}: {exc}") from exc
    return args


def _load_examples(images_path, labels_path, limit):
    images = load_idx_images(images_path)
    labels = load_idx_labels(labels_path)
    if len(images) != len(labels):
        raise ConfigError(f"{len(images)} images vs {len(labels)} labels")
    return [LabeledExample(im, lbl) for im, lbl in zip(images, labels)][:limit]


def _attack_config(args):
    return AttackConfig(method=args.method, epsilon=float(args.eps),
                        step_size=float(args.alpha), iterations=int(args.steps),
                        seed=int(args.seed))


# ---------------------------------------------------------------------------
# subcommand bodies


def cmd_train_model(args):
    examples = _load_examples(args.images, args.labels, args.limit)
    images = np.stack([e.image for e in examples])
    labels = np.array([e.label for e in examples])
    config = TrainConfig(epochs=int(args.epochs), batch_size=int(args.batch_size),
                         learning_rate=float(args.lr), seed=int(args.seed))
    model = train_classifier(images, labels, config,
                             activation=args.activation, pool=args.pool)
    save_checkpoint(model, args.out)
    if args.val_images and args.val_labels:
        val = _load_examples(args.val_images, args.val_labels, args.limit)
        acc = evaluate_accuracy(model, np.stack([e.image for e in val]),
                                np.array([e.label for e in val]))
        print(f"validation accuracy {acc:.4f}")
    print(f"saved model to {args.out}")


def cmd_attack(args):
    model = load_checkpoint(args.model)
    examples = _load_examples(args.images, args.labels, args.limit)
    attack = _attack_config(args)
    result = build_triplets(model, examples, attack, seed=int(args.seed))
    save_triplets(args.out, result, attack)
    print(f"{len(result.triplets)} triplets "
          f"({result.dropped_misclassified} misclassified clean, "
          f"{result.dropped_attack_failed} failed attacks) -> {args.out}")


def cmd_run_dss(args):
    model = load_checkpoint(args.model)
    images = load_images_csv(args.input)
    index = int(args.index)
    if not 0 <= index < len(images):
        raise ConfigError(f"index {index} out of range for {len(images)} images")
    config = DSSConfig(loops=int(args.loops), disrupt_ratio=float(args.ratio))
    restorer = HarmonicInpainter()
    trajectory = run_dss(model, restorer, images[index], config)
    save_trajectory(args.out, trajectory)
    print(f"trajectory of {trajectory.loops} loops -> {args.out}")


def cmd_features(args):
    model = load_checkpoint(args.model)
    triplets, meta = load_triplets(args.triplets)
    config = DSSConfig(loops=int(args.loops), disrupt_ratio=float(args.ratio))
    restorer = HarmonicInpainter()
    records = []
    for i, triplet in enumerate(triplets):
        for cls, image, label in (("clean", triplet.clean.image, 0),
                                  ("noisy", triplet.noisy, 0),
                                  ("adversarial", triplet.adversarial, 1)):
            trajectory = run_dss(model, restorer, image, config)
            records.append(extract_features(
                model, trajectory, example_id=f"{meta['attack']}-{i}-{cls}",
                label=label))
    save_feature_records(args.out, records)
    print(f"{len(records)} feature records -> {args.out}")


def cmd_detect_train(args):
    records = []
    for path in args.features:
        records.extend(load_feature_records(path))
    detector, held_out = train_detector(records, split_seed=int(args.seed),
                                        split=float(args.split))
    save_detector(args.out, detector)
    scores = score_batch(detector, held_out)
    labels = np.array([r.label for r in held_out])
    print(f"held-out AUC {roc_auc(scores, labels).auc:.4f} "
          f"({len(held_out)} records) -> {args.out}")


def cmd_detect_eval(args):
    detector = load_detector(args.detector)
    records = load_feature_records(args.features)
    scores = score_batch(detector, records)
    labels = np.array([r.label for r in records])
    roc = roc_auc(scores, labels)
    if args.roc_out:
        with open(args.roc_out, "w") as f:
            f.write("fpr,tpr\n")
            for fpr, tpr in roc.roc_points:
                f.write(f"{FLOAT_FMT % fpr},{FLOAT_FMT % tpr}\n")
    print(f"AUC {roc.auc:.4f} on {len(records)} records")


def _experiment_config(args, require=True):
    if not getattr(args, "config", None):
        if require:
            raise ConfigError("this subcommand requires --config")
        return None
    overrides = {}
    if getattr(args, "out", None):
        overrides["output_dir"] = args.out
    return harness.load_config(args.config, overrides)


def cmd_sweep(args):
    config = _experiment_config(args)
    values = [float(v) for v in args.values.split(",")]
    if args.parameter == "eps":
        rows = harness.run_intensity_sweep(config, values)
    elif args.parameter == "ratio":
        rows = harness.run_sensitivity(config, values)
    else:
        rows = harness.run_loop_sweep(config, [int(v) for v in values])
    for row in rows:
        print(",".join(f"{v:.4f}" if isinstance(v, float) else str(v)
                       for v in row))


def cmd_generalize(args):
    config = _experiment_config(args)
    result = harness.run_generalization_study(
        config, args.train_attack, args.test_attacks.split(","), args.view)
    for name, auc in result["auc"].items():
        print(f"{name} ({args.view}): AUC {auc:.4f}")
    print(f"average AUC {result['average']:.4f}")


def cmd_ablate(args):
    config = _experiment_config(args)
    table = harness.run_ablation(config)
    for attack, views in table.items():
        for view, auc in views.items():
            print(f"{attack} {view}: AUC {auc:.4f}")


def cmd_diagnose(args):
    model = load_checkpoint(args.model)
    examples = _load_examples(args.images, args.labels, args.count)
    alpha = float(args.control_alpha)
    with open(args.out, "w") as f:
        f.write("id,true,predicted,closed_loop_vdot,residual_l2\n")
        for i, example in enumerate(examples):
            predicted = model.predict(example.image)
            drive = -control_term(model, example.image, predicted, alpha)
            closed = vdot(example.image, example.image, drive +
                          control_term(model, example.image, predicted, alpha))
            residual = stability_residual(model, example.image, predicted,
                                          example.label, alpha)
            f.write(f"{i},{example.label},{predicted},"
                    f"{FLOAT_FMT % closed},"
                    f"{FLOAT_FMT % float(np.linalg.norm(residual.ravel()))}\n")
    print(f"diagnostics for {len(examples)} examples -> {args.out}")


def cmd_fig6(args):
    config = _experiment_config(args)
    model = load_checkpoint(config.model)
    examples = harness.load_dataset(config)
    restorer = harness.make_restorer(config)
    os.makedirs(config.output_dir, exist_ok=True)
    _, _, trajectories = harness.attack_features(
        model, restorer, examples, config.attacks[0], config,
        want_trajectories=True)
    path = os.path.join(config.output_dir, "fig6.csv")
    harness.emit_divergence_report(path, model, trajectories)
    print(f"divergence curves -> {path}")


# ---------------------------------------------------------------------------
# parser


def build_parser():
    parser = argparse.ArgumentParser(
        prog="dss", description="Dynamically stable system adversarial-example "
                                "detection pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, **kwargs):
        p = sub.add_parser(name, **kwargs)
        p.add_argument("--config", help="JSON file supplying flag values")
        p.set_defaults(func=func)
        return p

    p = add("train-model", cmd_train_model, help="train the classifier fixture")
    p.add_argument("--images"), p.add_argument("--labels")
    p.add_argument("--val-images"), p.add_argument("--val-labels")
    p.add_argument("--out", required=True)
    p.add_argument("--epochs"), p.add_argument("--batch-size")
    p.add_argument("--lr"), p.add_argument("--seed"), p.add_argument("--limit")
    p.add_argument("--activation", choices=["tanh", "relu"])
    p.add_argument("--pool", choices=["avg", "max"])

    p = add("attack", cmd_attack, help="build clean/noisy/adversarial triplets")
    p.add_argument("--model"), p.add_argument("--images"), p.add_argument("--labels")
    p.add_argument("--method", choices=["fgsm", "pgd"])
    p.add_argument("--eps"), p.add_argument("--alpha"), p.add_argument("--steps")
    p.add_argument("--seed"), p.add_argument("--limit")
    p.add_argument("--out", required=True)

    p = add("run-dss", cmd_run_dss, help="run one disrupt/restore trajectory")
    p.add_argument("--model"), p.add_argument("--input")
    p.add_argument("--index"), p.add_argument("--loops"), p.add_argument("--ratio")
    p.add_argument("--out", required=True)

    p = add("features", cmd_features, help="extract stability features")
    p.add_argument("--model"), p.add_argument("--triplets")
    p.add_argument("--loops"), p.add_argument("--ratio")
    p.add_argument("--out", required=True)

    p = add("detect-train", cmd_detect_train, help="fit the logistic detector")
    p.add_argument("--features", nargs="+", required=True)
    p.add_argument("--seed"), p.add_argument("--split")
    p.add_argument("--out", required=True)

    p = add("detect-eval", cmd_detect_eval, help="score features with a detector")
    p.add_argument("--detector", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--roc-out")

    p = add("sweep", cmd_sweep, help="AUC sweep over eps, ratio or loops")
    p.add_argument("parameter", choices=["eps", "ratio", "loops"])
    p.add_argument("--values", required=True,
                   help="comma-separated sweep values")
    p.add_argument("--out")

    p = add("generalize", cmd_generalize,
            help="cross-attack detector generalization")
    p.add_argument("--train-attack", required=True)
    p.add_argument("--test-attacks", required=True,
                   help="comma-separated attack names")
    p.add_argument("--view", choices=["pixel", "logit", "both"])
    p.add_argument("--out")

    p = add("ablate", cmd_ablate, help="pixel/logit/both feature ablation")
    p.add_argument("--out")

    p = add("diagnose", cmd_diagnose, help="Lyapunov stability diagnostics")
    p.add_argument("--model"), p.add_argument("--images"), p.add_argument("--labels")
    p.add_argument("--count"), p.add_argument("--control-alpha")
    p.add_argument("--out", required=True)

    p = add("fig6", cmd_fig6, help="per-loop divergence curves")
    p.add_argument("--out")

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args = _apply_config_file(args)
        args.func(args)
    except (ConfigError, FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ProtocolError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (StageError, ContractError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
