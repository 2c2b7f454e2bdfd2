"""Stability diagnostics for the input dynamics: quadratic energy function,
its derivative along a trajectory, the corrective control term, and the
residual that stays zero for normal inputs but not for attacked ones.
"""

import numpy as np


def lyapunov_v(x, x0):
    """Summed squared deviation from the reference point; zero iff x == x0."""
    x, x0 = np.asarray(x), np.asarray(x0)
    if x.shape != x0.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {x0.shape}")
    d = x - x0
    return float(np.sum(d * d))


def control_term(model, x, predicted_label, alpha):
    """-alpha times the loss gradient at the model's predicted class."""
    return -alpha * model.input_gradient(x, predicted_label)


def stability_residual(model, x, perturb_label, control_label, alpha):
    """alpha * (grad at perturb_label - grad at control_label).

    Exactly zero when the labels agree; nonzero residual is the signature
    of an input whose predicted class disagrees with its original class.
    """
    if perturb_label == control_label:
        return np.zeros_like(np.asarray(x, dtype=np.float64))
    g_perturb = model.input_gradient(x, perturb_label)
    g_control = model.input_gradient(x, control_label)
    return alpha * (g_perturb - g_control)


def vdot(x, x0, xdot):
    """Derivative of the quadratic energy along direction xdot: 2 <x - x0, xdot>."""
    x, x0, xdot = np.asarray(x), np.asarray(x0), np.asarray(xdot)
    if not (x.shape == x0.shape == xdot.shape):
        raise ValueError(
            f"shape mismatch: {x.shape}, {x0.shape}, {xdot.shape}")
    return float(2.0 * np.sum((x - x0) * xdot))
