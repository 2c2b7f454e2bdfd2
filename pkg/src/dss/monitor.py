"""Trajectory feature extraction, the logistic-regression detector, and
ROC-AUC scoring.

Feature vectors concatenate, per loop, the p-norms of the pixel-space and
logit-space deviations of both the composed and the generated images from
the original input. Column order is part of the on-disk format: loop-major,
family (pix before logit) second, comp before gen, norm minor.
"""

import json
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from dss.errors import ProtocolError

NORM_NAMES = {1.0: "1", 2.0: "2", np.inf: "inf"}
DEFAULT_NORMS = (1.0, 2.0, np.inf)


@dataclass
class StabilityFeatureRecord:
    example_id: str
    label: int  # 1 = adversarial, 0 = clean or noisy
    features: np.ndarray
    feature_names: list


@dataclass
class Detector:
    weights: np.ndarray
    bias: float
    mean: np.ndarray
    std: np.ndarray
    feature_names: list
    train_config: dict = field(default_factory=dict)


@dataclass
class ROCResult:
    auc: float
    roc_points: list  # (fpr, tpr) pairs, both non-decreasing


def feature_names(loops, norms=DEFAULT_NORMS):
    names = []
    for t in range(1, loops + 1):
        for family in ("pix", "logit"):
            for kind in ("comp", "gen"):
                for p in norms:
                    names.append(f"t{t}_{family}_{kind}_l{NORM_NAMES[p]}")
    return names


def _norm(v, p):
    return float(np.linalg.norm(np.asarray(v).ravel(), ord=p))


def extract_features(model, trajectory, norms=DEFAULT_NORMS, example_id="0",
                     label=0):
    """Norms of per-loop deviations from x_0 in pixel and logit space."""
    if not norms:
        raise ValueError("norms must be nonempty")
    n = trajectory.loops
    if len(trajectory.states) != n + 1:
        raise ValueError("incomplete trajectory")
    x0 = trajectory.states[0]
    logits0 = model.forward(x0)
    values = []
    for t in range(1, n + 1):
        xt = trajectory.states[t]
        xhat = trajectory.generated[t - 1]
        logits_t = model.forward(xt)
        logits_hat = model.forward(xhat)
        for family, comp, gen in (
                ("pix", xt - x0, xhat - x0),
                ("logit", logits_t - logits0, logits_hat - logits0)):
            for kind, diff in (("comp", comp), ("gen", gen)):
                for p in norms:
                    values.append(_norm(diff, p))
    return StabilityFeatureRecord(example_id=example_id, label=label,
                                  features=np.array(values),
                                  feature_names=feature_names(n, norms))


# ---------------------------------------------------------------------------
# detector


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def train_detector(records, split_seed, split=0.8, max_iterations=100,
                   grad_tol=1e-8, weight_decay=1.0):
    """Seeded shuffle, 80/20 split, standardize on the training portion,
    fit L2-regularized logistic regression by Newton's method.

    The penalty 0.5 * weight_decay * ||w||^2 is divided by the training
    count (the bias is unpenalized); the trajectory features are heavily
    correlated, so shrinkage matters for held-out performance and plain
    gradient descent stalls on the resulting ill-conditioned problem.

    Returns (detector, held_out_records); the held-out portion is never
    touched during fitting.
    """
    labels = np.array([r.label for r in records])
    if len(set(labels.tolist())) < 2:
        raise ProtocolError("detector training requires both classes")
    rng = np.random.default_rng(split_seed)
    order = rng.permutation(len(records))
    n_train = int(round(split * len(records)))
    train = [records[i] for i in order[:n_train]]
    held_out = [records[i] for i in order[n_train:]]
    if len(set(r.label for r in train)) < 2:
        raise ProtocolError("training split ended up single-class; reseed")

    x = np.stack([r.features for r in train])
    y = np.array([r.label for r in train], dtype=np.float64)
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    std[std == 0.0] = 1.0
    xs = (x - mean) / std

    n, d = xs.shape
    design = np.hstack([xs, np.ones((n, 1))])
    penalty = np.full(d + 1, weight_decay / n)
    penalty[d] = 0.0  # bias unpenalized
    w = np.zeros(d + 1)
    for _ in range(max_iterations):
        p = _sigmoid(design @ w)
        grad = design.T @ (p - y) / n + penalty * w
        if np.linalg.norm(grad) < grad_tol:
            break
        curvature = p * (1.0 - p)
        hessian = (design.T * curvature) @ design / n + np.diag(penalty)
        hessian[d, d] += 1e-12  # keep the bias row invertible
        w -= np.linalg.solve(hessian, grad)

    detector = Detector(weights=w[:d], bias=float(w[d]), mean=mean, std=std,
                        feature_names=list(train[0].feature_names),
                        train_config={"split_seed": int(split_seed),
                                      "split": split,
                                      "max_iterations": max_iterations,
                                      "weight_decay": weight_decay})
    return detector, held_out


def score(detector, record):
    """Adversarial confidence in (0, 1) for one feature record."""
    if list(record.feature_names) != list(detector.feature_names):
        raise ValueError("feature columns do not match the detector's training "
                         f"columns ({len(record.feature_names)} vs "
                         f"{len(detector.feature_names)})")
    z = (record.features - detector.mean) / detector.std
    return float(_sigmoid(z @ detector.weights + detector.bias))


def score_batch(detector, records):
    return np.array([score(detector, r) for r in records])


# ---------------------------------------------------------------------------
# ROC / AUC


def roc_auc(scores, labels):
    """Mann-Whitney AUC (ties count 1/2) plus the threshold-sweep ROC curve."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape:
        raise ValueError("scores and labels must have equal length")
    pos = labels == 1
    neg = labels == 0
    n_pos, n_neg = int(pos.sum()), int(neg.sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("both classes must be present")
    ranks = stats.rankdata(scores)
    auc = (ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)

    order = np.argsort(-scores, kind="stable")
    points = [(0.0, 0.0)]
    tp = fp = 0
    i = 0
    while i < len(scores):
        j = i
        while j < len(scores) and scores[order[j]] == scores[order[i]]:
            if labels[order[j]] == 1:
                tp += 1
            else:
                fp += 1
            j += 1
        points.append((fp / n_neg, tp / n_pos))
        i = j
    return ROCResult(auc=float(auc), roc_points=points)


# ---------------------------------------------------------------------------
# feature matrix persistence and merging


def save_feature_records(path, records):
    from dss.core import FLOAT_FMT
    with open(path, "w") as f:
        f.write("id,label," + ",".join(records[0].feature_names) + "\n")
        for r in records:
            f.write(f"{r.example_id},{r.label},"
                    + ",".join(FLOAT_FMT % v for v in r.features) + "\n")


def load_feature_records(path):
    with open(path) as f:
        header = f.readline().strip().split(",")
        if header[:2] != ["id", "label"]:
            raise ValueError(f"{path}: expected 'id,label,...' header")
        names = header[2:]
        records = []
        for line in f:
            parts = line.strip().split(",")
            if len(parts) != len(names) + 2:
                raise ValueError(f"{path}: row width mismatch")
            records.append(StabilityFeatureRecord(
                example_id=parts[0], label=int(parts[1]),
                features=np.array([float(v) for v in parts[2:]]),
                feature_names=list(names)))
    return records


def merge_features(ours, external_path):
    """Concatenate externally computed feature columns, aligned by example id."""
    with open(external_path) as f:
        header = f.readline().strip().split(",")
        if header[0] != "id":
            raise ValueError(f"{external_path}: expected 'id,...' header")
        ext_names = header[1:]
        table = {}
        for line in f:
            parts = line.strip().split(",")
            table[parts[0]] = np.array([float(v) for v in parts[1:]])
    missing = [r.example_id for r in ours if r.example_id not in table]
    if missing:
        raise ValueError(
            f"{external_path}: missing ids {missing[:10]}"
            + ("..." if len(missing) > 10 else ""))
    merged = []
    for r in ours:
        merged.append(StabilityFeatureRecord(
            example_id=r.example_id, label=r.label,
            features=np.concatenate([r.features, table[r.example_id]]),
            feature_names=list(r.feature_names) + [f"ext_{n}" for n in ext_names]))
    return merged


def select_view(records, view):
    """Restrict records to pixel-only, logit-only, or both feature families."""
    if view == "both":
        return records
    if view not in ("pixel", "logit"):
        raise ValueError(f"unknown view {view!r}")
    prefix = "pix" if view == "pixel" else "logit"
    out = []
    for r in records:
        keep = [i for i, n in enumerate(r.feature_names)
                if n.split("_")[1] == prefix]
        out.append(StabilityFeatureRecord(
            example_id=r.example_id, label=r.label,
            features=r.features[keep],
            feature_names=[r.feature_names[i] for i in keep]))
    return out


# ---------------------------------------------------------------------------
# detector checkpoint (JSON)


def save_detector(path, detector):
    payload = {
        "format": "dss-detector-v1",
        "weights": detector.weights.tolist(),
        "bias": detector.bias,
        "mean": detector.mean.tolist(),
        "std": detector.std.tolist(),
        "feature_names": detector.feature_names,
        "train_config": detector.train_config,
    }
    with open(path, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True)


def load_detector(path):
    with open(path) as f:
        payload = json.load(f)
    if payload.get("format") != "dss-detector-v1":
        raise ValueError(f"{path}: unsupported detector format")
    return Detector(weights=np.array(payload["weights"]),
                    bias=float(payload["bias"]),
                    mean=np.array(payload["mean"]),
                    std=np.array(payload["std"]),
                    feature_names=payload["feature_names"],
                    train_config=payload.get("train_config", {}))
