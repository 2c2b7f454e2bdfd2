"""Adversarial example generation (FGSM and PGD natively, anything else via
an adapter) and clean/noisy/adversarial triplet assembly.

Only L-inf attacks are implemented here; the triplet filter keeps exactly
the cases where the clean input is classified correctly and the attacked
input is not.
"""

import json
import os
from dataclasses import dataclass, field

import numpy as np

from dss.core import (ExampleTriplet, clip_unit, load_images_csv,
                      save_images_csv, uniform_noise)
from dss.errors import ContractError, ProtocolError


@dataclass
class AttackConfig:
    method: str  # "fgsm", "pgd" or "external"
    epsilon: float
    step_size: float = 0.0
    iterations: int = 1
    seed: int = 0
    random_start: bool = True
    name: str = ""

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")
        if self.method == "pgd":
            if self.step_size <= 0 or self.step_size > self.epsilon:
                raise ValueError("pgd requires 0 < step_size <= epsilon")
            if self.iterations < 1:
                raise ValueError("pgd requires iterations >= 1")
        if not self.name:
            self.name = self.method


def fgsm(model, x, label, epsilon):
    """Single signed-gradient step of size epsilon, clipped to [0, 1]."""
    grad = model.input_gradient(x, label)
    return clip_unit(x + epsilon * np.sign(grad))


def pgd(model, x, label, config):
    """Iterated signed-gradient ascent projected onto the epsilon ball.

    Starts from a uniformly random point inside the ball (seeded) unless
    config.random_start is off, in which case it starts at x exactly.
    """
    eps, alpha = config.epsilon, config.step_size
    if config.random_start:
        rng = np.random.default_rng(config.seed)
        cur = clip_unit(x + rng.uniform(-eps, eps, size=x.shape))
    else:
        cur = x.copy()
    for _ in range(config.iterations):
        grad = model.input_gradient(cur, label)
        cur = cur + alpha * np.sign(grad)
        cur = clip_unit(np.clip(cur, x - eps, x + eps))
    return cur


def external_attack(adapter, model, x, label, params=None):
    """Run an adapter (image -> image callable); output is clipped to [0, 1].

    Returns (image, warnings). Out-of-range adapter output is clipped and
    flagged rather than rejected.
    """
    try:
        out = adapter(model, x, label, params or {})
    except Exception as exc:
        raise ContractError(f"attack adapter {adapter!r} failed: {exc}") from exc
    out = np.asarray(out, dtype=np.float64)
    if out.shape != x.shape:
        raise ContractError(
            f"attack adapter {adapter!r} returned shape {out.shape}, expected {x.shape}")
    warnings = []
    if out.min() < 0.0 or out.max() > 1.0:
        warnings.append(f"adapter {getattr(adapter, '__name__', adapter)!r} "
                        "returned out-of-range values; clipped")
        out = clip_unit(out)
    return out, warnings


def run_attack(model, x, label, config, example_seed=None):
    """Dispatch one attack per config; seed may be overridden per example."""
    if config.method == "fgsm":
        return fgsm(model, x, label, config.epsilon)
    if config.method == "pgd":
        cfg = config
        if example_seed is not None:
            cfg = AttackConfig(**{**config.__dict__, "seed": example_seed})
        return pgd(model, x, label, cfg)
    raise ValueError(f"unknown attack method {config.method!r}")


@dataclass
class TripletBuildResult:
    triplets: list
    dropped_misclassified: int = 0
    dropped_attack_failed: int = 0


def build_triplets(model, examples, attack, seed):
    """Assemble filtered clean/noisy/adversarial triplets.

    Keeps an example only if the model classifies the clean image correctly
    and misclassifies the attacked image. Noise matches the attack budget.
    """
    triplets = []
    dropped_mis = 0
    dropped_fail = 0
    for i, example in enumerate(examples):
        if model.predict(example.image) != example.label:
            dropped_mis += 1
            continue
        adv = run_attack(model, example.image, example.label, attack,
                         example_seed=_mix(attack.seed, i))
        if model.predict(adv) == example.label:
            dropped_fail += 1
            continue
        noisy = uniform_noise(example.image, attack.epsilon, _mix(seed, i))
        triplets.append(ExampleTriplet(clean=example, noisy=noisy, adversarial=adv,
                                       attack_name=attack.name,
                                       epsilon=attack.epsilon))
    if not triplets:
        raise ProtocolError(
            f"no usable triplets: {dropped_mis} misclassified clean, "
            f"{dropped_fail} failed attacks out of {len(examples)} examples")
    return TripletBuildResult(triplets, dropped_mis, dropped_fail)


def _mix(seed, index):
    """Stable per-example stream derived from a base seed."""
    return np.random.SeedSequence([int(seed), int(index)]).generate_state(1)[0]


# ---------------------------------------------------------------------------
# triplet store (clean.csv / noisy.csv / adv.csv / meta.json)


def save_triplets(directory, result, attack):
    os.makedirs(directory, exist_ok=True)
    triplets = result.triplets
    save_images_csv(os.path.join(directory, "clean.csv"),
                    [t.clean.image for t in triplets])
    save_images_csv(os.path.join(directory, "noisy.csv"),
                    [t.noisy for t in triplets])
    save_images_csv(os.path.join(directory, "adv.csv"),
                    [t.adversarial for t in triplets])
    meta = {
        "attack": attack.name,
        "method": attack.method,
        "epsilon": attack.epsilon,
        "step_size": attack.step_size,
        "iterations": attack.iterations,
        "seed": attack.seed,
        "labels": [t.clean.label for t in triplets],
        "dropped_misclassified": result.dropped_misclassified,
        "dropped_attack_failed": result.dropped_attack_failed,
    }
    with open(os.path.join(directory, "meta.json"), "w") as f:
        json.dump(meta, f, indent=2, sort_keys=True)


def load_triplets(directory):
    from dss.core import LabeledExample  # local to avoid cycle noise
    with open(os.path.join(directory, "meta.json")) as f:
        meta = json.load(f)
    clean = load_images_csv(os.path.join(directory, "clean.csv"))
    noisy = load_images_csv(os.path.join(directory, "noisy.csv"))
    adv = load_images_csv(os.path.join(directory, "adv.csv"))
    triplets = [
        ExampleTriplet(clean=LabeledExample(c, int(lbl)), noisy=nz, adversarial=ad,
                       attack_name=meta["attack"], epsilon=meta["epsilon"])
        for c, nz, ad, lbl in zip(clean, noisy, adv, meta["labels"])
    ]
    return triplets, meta
