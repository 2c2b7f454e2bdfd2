"""The disrupt/restore loop: per-loop saliency, quantile mask, restoration,
composition, and the recorded trajectory.
"""

from dataclasses import dataclass, field

import numpy as np

from dss.errors import StageError
from dss.model import cross_entropy


@dataclass
class DSSConfig:
    loops: int = 5
    disrupt_ratio: float = 0.03
    saliency_abs: bool = False  # rank |G| instead of raw G (comparison flag)

    def __post_init__(self):
        if self.loops < 1:
            raise ValueError(f"loops must be >= 1, got {self.loops}")
        if not 0.0 < self.disrupt_ratio < 1.0:
            raise ValueError(
                f"disrupt_ratio must be in (0, 1), got {self.disrupt_ratio}")


@dataclass
class Trajectory:
    """States x_0..x_n, generated images, masks and state variables."""

    states: list = field(default_factory=list)       # n+1 images
    generated: list = field(default_factory=list)    # n images
    masks: list = field(default_factory=list)        # n binary (H, W) matrices
    state_vars: list = field(default_factory=list)   # n floats

    @property
    def loops(self):
        return len(self.generated)


def saliency(model, x):
    """Loss gradient at the model's own prediction; no ground truth involved."""
    return model.input_gradient(x, model.predict(x))


def disruption_mask(gradient, ratio, use_abs=False):
    """Zero out the floor(ratio * H * W) spatial locations with the smallest
    channel-summed gradient; ties resolve in row-major order.
    """
    gradient = np.asarray(gradient)
    _, h, w = gradient.shape
    k = int(ratio * h * w)
    if k == 0:
        raise ValueError(
            f"ratio {ratio} disrupts zero pixels on a {h}x{w} image")
    scores = gradient.sum(axis=0).ravel()
    if use_abs:
        scores = np.abs(scores)
    order = np.argsort(scores, kind="stable")
    mask = np.ones(h * w, dtype=np.uint8)
    mask[order[:k]] = 0
    return mask.reshape(h, w)


def restore_and_compose(restorer, x_prev, mask):
    """One disruption/restoration step.

    Returns (x_hat, x_next): x_hat is the restorer output on the masked
    image; x_next keeps retained pixels of x_prev bit-exactly and takes
    disrupted pixels from x_hat.
    """
    x_prev = np.asarray(x_prev, dtype=np.float64)
    masked = mask[np.newaxis] * x_prev
    x_hat = np.asarray(restorer(masked, mask), dtype=np.float64)
    if x_hat.shape != x_prev.shape:
        raise StageError("restore", f"restorer {restorer!r} returned shape "
                                    f"{x_hat.shape}, expected {x_prev.shape}")
    keep = mask.astype(bool)
    x_next = x_hat.copy()
    x_next[:, keep] = x_prev[:, keep]
    return x_hat, x_next


def state_variable(model, x_t, x_prev):
    """Change in self-predicted cross-entropy across one loop."""
    loss_t = cross_entropy(model.forward(x_t), model.predict(x_t))
    loss_prev = cross_entropy(model.forward(x_prev), model.predict(x_prev))
    return loss_t - loss_prev


def run_dss(model, restorer, x, config):
    """Run the n-loop disrupt/restore trajectory from x_0 = x."""
    x0 = np.asarray(x, dtype=np.float64)
    trajectory = Trajectory(states=[x0])
    current = x0
    for t in range(1, config.loops + 1):
        try:
            grad = saliency(model, current)
            mask = disruption_mask(grad, config.disrupt_ratio,
                                   use_abs=config.saliency_abs)
            x_hat, x_next = restore_and_compose(restorer, current, mask)
            lt = state_variable(model, x_next, current)
        except Exception as exc:
            raise StageError(f"dss-loop-{t}", str(exc)) from exc
        trajectory.masks.append(mask)
        trajectory.generated.append(x_hat)
        trajectory.states.append(x_next)
        trajectory.state_vars.append(lt)
        current = x_next
    return trajectory


def save_trajectory(directory, trajectory):
    """Dump one trajectory as per-loop CSV files plus the state variables."""
    import os

    from dss.core import FLOAT_FMT, save_images_csv

    os.makedirs(directory, exist_ok=True)
    for t, state in enumerate(trajectory.states):
        save_images_csv(os.path.join(directory, f"state_{t}.csv"), [state])
    for t, gen in enumerate(trajectory.generated, start=1):
        save_images_csv(os.path.join(directory, f"gen_{t}.csv"), [gen])
    for t, mask in enumerate(trajectory.masks, start=1):
        np.savetxt(os.path.join(directory, f"mask_{t}.csv"), mask,
                   fmt="%d", delimiter=",")
    with open(os.path.join(directory, "Lt.csv"), "w") as f:
        f.write("t,L\n")
        for t, lt in enumerate(trajectory.state_vars, start=1):
            f.write(f"{t},{FLOAT_FMT % lt}\n")
