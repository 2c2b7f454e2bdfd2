"""Experiment orchestration: config files, the detection pipeline, the
sweep/generalization/ablation/sensitivity studies, and CSV reporting.

Every report artifact is a CSV written with a fixed float format, so a
rerun with the same config and seed reproduces it byte for byte. The
provenance block records the config hash, the seeds, and the ids of the
held-out records so the train/test separation is auditable.
"""

import hashlib
import json
import os
import warnings
from dataclasses import dataclass, field

import numpy as np

from dss import __version__, backend
from dss.attacks import AttackConfig, build_triplets
from dss.core import FLOAT_FMT, load_idx_images, load_idx_labels, LabeledExample
from dss.errors import ConfigError, ProtocolError
from dss.inpaint import HarmonicInpainter
from dss.model import load_checkpoint
from dss.monitor import (extract_features, roc_auc, save_feature_records,
                         score_batch, select_view, train_detector)
from dss.stability import DSSConfig, run_dss

CONFIG_SCHEMA = "dss-config-v1"

_NORM_TO_JSON = {1.0: 1, 2.0: 2, np.inf: "inf"}
_NORM_FROM_JSON = {1: 1.0, 2: 2.0, "inf": np.inf}


@dataclass
class ExperimentConfig:
    images: str
    labels: str
    model: str
    output_dir: str
    attacks: list = field(default_factory=list)
    dss: DSSConfig = field(default_factory=DSSConfig)
    norms: tuple = (1.0, 2.0, np.inf)
    restorer: dict = field(default_factory=lambda: {"max_iterations": 500,
                                                    "tolerance": 1e-5})
    detector: dict = field(default_factory=lambda: {"split": 0.8,
                                                    "weight_decay": 1.0})
    example_limit: int = 1000
    seed: int = 0

    def __post_init__(self):
        if not self.attacks:
            raise ConfigError("at least one attack must be configured")
        if self.example_limit < 1:
            raise ConfigError(f"example_limit must be >= 1, got {self.example_limit}")
        names = [a.name for a in self.attacks]
        if len(set(names)) != len(names):
            raise ConfigError(f"duplicate attack names: {names}")

    def to_dict(self):
        return {
            "schema": CONFIG_SCHEMA,
            "images": self.images,
            "labels": self.labels,
            "model": self.model,
            "output_dir": self.output_dir,
            "attacks": [{"method": a.method, "epsilon": a.epsilon,
                         "step_size": a.step_size, "iterations": a.iterations,
                         "seed": a.seed, "random_start": a.random_start,
                         "name": a.name} for a in self.attacks],
            "dss": {"loops": self.dss.loops,
                    "disrupt_ratio": self.dss.disrupt_ratio,
                    "saliency_abs": self.dss.saliency_abs},
            "norms": [_NORM_TO_JSON[p] for p in self.norms],
            "restorer": dict(self.restorer),
            "detector": dict(self.detector),
            "example_limit": self.example_limit,
            "seed": self.seed,
        }

    def config_hash(self):
        canonical = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(canonical.encode()).hexdigest()


def config_from_dict(data, overrides=None):
    """Build an ExperimentConfig from parsed JSON, with optional overrides."""
    data = dict(data)
    if data.pop("schema", CONFIG_SCHEMA) != CONFIG_SCHEMA:
        raise ConfigError(f"unsupported config schema; expected {CONFIG_SCHEMA}")
    if overrides:
        for key, value in overrides.items():
            if value is not None:
                data[key] = value
    try:
        attacks = [a if isinstance(a, AttackConfig) else AttackConfig(**a)
                   for a in data.pop("attacks", [])]
        dss_raw = data.pop("dss", {})
        dss = dss_raw if isinstance(dss_raw, DSSConfig) else DSSConfig(**dss_raw)
        norms = tuple(_NORM_FROM_JSON[p] for p in data.pop("norms", [1, 2, "inf"]))
    except (TypeError, KeyError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    try:
        return ExperimentConfig(attacks=attacks, dss=dss, norms=norms, **data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path, overrides=None):
    with open(path) as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    return config_from_dict(data, overrides)


def save_config(path, config):
    with open(path, "w") as f:
        json.dump(config.to_dict(), f, indent=2, sort_keys=True)


# ---------------------------------------------------------------------------
# pipeline assembly


def load_dataset(config):
    for path in (config.images, config.labels, config.model):
        if not os.path.exists(path):
            raise ConfigError(f"referenced path does not exist: {path}")
    images = load_idx_images(config.images)
    labels = load_idx_labels(config.labels)
    if len(images) != len(labels):
        raise ConfigError(f"{len(images)} images vs {len(labels)} labels")
    examples = [LabeledExample(im, lbl) for im, lbl in zip(images, labels)]
    return examples[:config.example_limit]


def make_restorer(config):
    return HarmonicInpainter(**config.restorer)


def attack_features(model, restorer, examples, attack, config,
                    want_trajectories=False):
    """Triplets -> DSS trajectories -> feature records for one attack.

    Record ids are '<attack>-<index>-<class>'; labels are 1 for the
    adversarial class, 0 for clean and noisy. Optionally also returns the
    final trajectories grouped by class for divergence reporting.
    """
    result = build_triplets(model, examples, attack, seed=config.seed)
    records = []
    trajectories = {"clean": [], "noisy": [], "adversarial": []}
    for i, triplet in enumerate(result.triplets):
        for cls, image, label in (("clean", triplet.clean.image, 0),
                                  ("noisy", triplet.noisy, 0),
                                  ("adversarial", triplet.adversarial, 1)):
            trajectory = run_dss(model, restorer, image, config.dss)
            records.append(extract_features(
                model, trajectory, norms=config.norms,
                example_id=f"{attack.name}-{i}-{cls}", label=label))
            if want_trajectories:
                trajectories[cls].append(trajectory)
    if want_trajectories:
        return records, result, trajectories
    return records, result


@dataclass
class ExperimentReport:
    auc: dict                # attack name -> held-out AUC
    output_dir: str
    provenance: dict
    roc: dict = field(default_factory=dict)       # attack -> ROCResult
    features: dict = field(default_factory=dict)  # attack -> records


def _write_csv(path, header, rows):
    """Rows of mixed values; floats go through the package float format."""
    with open(path, "w") as f:
        f.write(",".join(header) + "\n")
        for row in rows:
            f.write(",".join(FLOAT_FMT % v if isinstance(v, float) else str(v)
                             for v in row) + "\n")


def emit_divergence_report(path, model, trajectories_by_class):
    """Mean pixel/logit L2 distance from x_0 at each loop, per class."""
    rows = []
    classes = ("clean", "noisy", "adversarial")
    for cls in classes:
        if not trajectories_by_class.get(cls):
            raise ProtocolError(f"divergence report: no trajectories for {cls!r}")
    loops = trajectories_by_class["clean"][0].loops
    for t in range(loops + 1):
        for cls in classes:
            pix, logit = [], []
            for trajectory in trajectories_by_class[cls]:
                x0, xt = trajectory.states[0], trajectory.states[t]
                pix.append(np.linalg.norm((xt - x0).ravel()))
                logit.append(np.linalg.norm(model.forward(xt) - model.forward(x0)))
            rows.append((t, cls, float(np.mean(pix)), float(np.mean(logit))))
    _write_csv(path, ["t", "class", "pix_l2", "logit_l2"], rows)
    return rows


def _provenance(config, extra):
    block = {
        "config": config.to_dict(),
        "config_hash": config.config_hash(),
        "package_version": __version__,
        "compiled_backend": backend.COMPILED,
    }
    block.update(extra)
    return block


def run_detection_experiment(config, model=None, examples=None):
    """The full pipeline: triplets, DSS trajectories, features, detector,
    held-out AUC, and the report directory."""
    os.makedirs(config.output_dir, exist_ok=True)
    if model is None:
        model = load_checkpoint(config.model)
    if examples is None:
        examples = load_dataset(config)
    restorer = make_restorer(config)

    auc_table = {}
    roc_table = {}
    features_table = {}
    held_out_ids = {}
    triplet_counts = {}
    fig6_source = None
    for attack in config.attacks:
        records, result, trajectories = attack_features(
            model, restorer, examples, attack, config, want_trajectories=True)
        features_table[attack.name] = records
        triplet_counts[attack.name] = len(result.triplets)
        save_feature_records(
            os.path.join(config.output_dir, f"features_{attack.name}.csv"), records)
        detector, held_out = train_detector(records, split_seed=config.seed,
                                            **config.detector)
        scores = score_batch(detector, held_out)
        labels = np.array([r.label for r in held_out])
        roc = roc_auc(scores, labels)
        auc_table[attack.name] = roc.auc
        roc_table[attack.name] = roc
        held_out_ids[attack.name] = [r.example_id for r in held_out]
        _write_csv(os.path.join(config.output_dir, f"roc_{attack.name}.csv"),
                   ["fpr", "tpr"], [(float(a), float(b)) for a, b in roc.roc_points])
        if fig6_source is None:
            fig6_source = trajectories
    _write_csv(os.path.join(config.output_dir, "auc.csv"), ["attack", "auc"],
               [(name, auc_table[name]) for name in auc_table])
    emit_divergence_report(os.path.join(config.output_dir, "fig6.csv"),
                           model, fig6_source)

    provenance = _provenance(config, {
        "triplet_counts": triplet_counts,
        "held_out_ids": held_out_ids,
    })
    with open(os.path.join(config.output_dir, "provenance.json"), "w") as f:
        json.dump(provenance, f, indent=2, sort_keys=True)
    return ExperimentReport(auc=auc_table, output_dir=config.output_dir,
                            provenance=provenance, roc=roc_table,
                            features=features_table)


# ---------------------------------------------------------------------------
# studies


def _derived_config(config, subdir, **changes):
    data = config.to_dict()
    data.pop("schema")
    data.update(changes)
    data["output_dir"] = os.path.join(config.output_dir, subdir)
    return config_from_dict(data)


def run_intensity_sweep(config, epsilons, model=None, examples=None):
    """One detection experiment per attack strength; PGD steps scale as eps/4."""
    if len(epsilons) < 2:
        raise ConfigError("intensity sweep needs at least two epsilons")
    if model is None:
        model = load_checkpoint(config.model)
    if examples is None:
        examples = load_dataset(config)
    os.makedirs(config.output_dir, exist_ok=True)
    attack_names = [a.name for a in config.attacks]
    rows = []
    for eps in epsilons:
        attacks = []
        for a in config.attacks:
            fields = dict(a.__dict__)
            fields["epsilon"] = float(eps)
            if a.method == "pgd":
                fields["step_size"] = float(eps) / 4.0
            attacks.append(fields)
        sub = _derived_config(config, f"eps_{eps:g}", attacks=attacks)
        report = run_detection_experiment(sub, model=model, examples=examples)
        rows.append((float(eps),) + tuple(report.auc[n] for n in attack_names))
    path = os.path.join(config.output_dir, "sweep_eps.csv")
    _write_csv(path, ["epsilon"] + [f"auc_{n}" for n in attack_names], rows)
    return rows


def run_sensitivity(config, ratios, model=None, examples=None):
    """Full pipeline per disrupting ratio; the Fig.-7-style AUC-vs-r curve."""
    unique = sorted(set(float(r) for r in ratios))
    if len(unique) != len(ratios):
        warnings.warn("duplicate ratios removed from sensitivity sweep")
    for r in unique:
        if not 0.0 < r < 1.0:
            raise ConfigError(f"disrupt ratio {r} outside (0, 1)")
    if model is None:
        model = load_checkpoint(config.model)
    if examples is None:
        examples = load_dataset(config)
    os.makedirs(config.output_dir, exist_ok=True)
    attack_names = [a.name for a in config.attacks]
    rows = []
    for r in unique:
        sub = _derived_config(config, f"ratio_{r:g}",
                              dss={"loops": config.dss.loops, "disrupt_ratio": r,
                                   "saliency_abs": config.dss.saliency_abs})
        report = run_detection_experiment(sub, model=model, examples=examples)
        rows.append((r,) + tuple(report.auc[n] for n in attack_names))
    path = os.path.join(config.output_dir, "sweep_ratio.csv")
    _write_csv(path, ["ratio"] + [f"auc_{n}" for n in attack_names], rows)
    return rows


def run_loop_sweep(config, loop_counts, model=None, examples=None):
    """AUC as a function of the trajectory length n."""
    unique = sorted(set(int(n) for n in loop_counts))
    if len(unique) < 2:
        raise ConfigError("loop sweep needs at least two loop counts")
    if model is None:
        model = load_checkpoint(config.model)
    if examples is None:
        examples = load_dataset(config)
    os.makedirs(config.output_dir, exist_ok=True)
    attack_names = [a.name for a in config.attacks]
    rows = []
    for n in unique:
        sub = _derived_config(config, f"loops_{n}",
                              dss={"loops": n,
                                   "disrupt_ratio": config.dss.disrupt_ratio,
                                   "saliency_abs": config.dss.saliency_abs})
        report = run_detection_experiment(sub, model=model, examples=examples)
        rows.append((n,) + tuple(report.auc[n2] for n2 in attack_names))
    path = os.path.join(config.output_dir, "sweep_loops.csv")
    _write_csv(path, ["loops"] + [f"auc_{n}" for n in attack_names], rows)
    return rows


def run_generalization_study(config, train_attack, test_attacks, feature_view,
                             model=None, examples=None, features_by_attack=None):
    """Fit on one attack's features (restricted to a view), score the rest.

    When a test attack equals the training attack the score is computed on
    that attack's held-out split, so the degenerate self-check reproduces
    the plain detection experiment's number.
    """
    if model is None:
        model = load_checkpoint(config.model)
    if examples is None:
        examples = load_dataset(config)
    os.makedirs(config.output_dir, exist_ok=True)
    restorer = make_restorer(config)
    by_name = {a.name: a for a in config.attacks}
    for name in [train_attack] + list(test_attacks):
        if name not in by_name:
            raise ConfigError(f"attack {name!r} not in config "
                              f"(have {sorted(by_name)})")

    if features_by_attack is None:
        features_by_attack = {}
    for name in dict.fromkeys([train_attack] + list(test_attacks)):
        if name not in features_by_attack:
            features_by_attack[name], _ = attack_features(
                model, restorer, examples, by_name[name], config)

    train_records = select_view(features_by_attack[train_attack], feature_view)
    detector, held_out = train_detector(train_records, split_seed=config.seed,
                                        **config.detector)
    rows = []
    for name in test_attacks:
        if name == train_attack:
            test_records = held_out
        else:
            test_records = select_view(features_by_attack[name], feature_view)
        scores = score_batch(detector, test_records)
        labels = np.array([r.label for r in test_records])
        rows.append((name, feature_view, roc_auc(scores, labels).auc))
    average = float(np.mean([row[2] for row in rows]))
    _write_csv(os.path.join(config.output_dir, "generalization.csv"),
               ["test_attack", "view", "auc"], rows)
    return {"train_attack": train_attack, "view": feature_view,
            "auc": {name: auc for name, _, auc in rows}, "average": average,
            "features": features_by_attack}


def run_ablation(config, model=None, examples=None, features_by_attack=None):
    """Pixel-only, logit-only and combined detectors on identical splits."""
    if model is None:
        model = load_checkpoint(config.model)
    if examples is None:
        examples = load_dataset(config)
    os.makedirs(config.output_dir, exist_ok=True)
    restorer = make_restorer(config)
    rows = []
    table = {}
    for attack in config.attacks:
        if features_by_attack and attack.name in features_by_attack:
            records = features_by_attack[attack.name]
        else:
            records, _ = attack_features(model, restorer, examples, attack, config)
        table[attack.name] = {}
        for view in ("pixel", "logit", "both"):
            viewed = select_view(records, view)
            detector, held_out = train_detector(viewed, split_seed=config.seed,
                                                **config.detector)
            scores = score_batch(detector, held_out)
            labels = np.array([r.label for r in held_out])
            auc = roc_auc(scores, labels).auc
            rows.append((attack.name, view, auc))
            table[attack.name][view] = auc
    _write_csv(os.path.join(config.output_dir, "ablation.csv"),
               ["attack", "view", "auc"], rows)
    return table
