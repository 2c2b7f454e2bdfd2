"""Restoration of disrupted pixels.

The reference restorer solves the discrete Laplace equation on the
disrupted region (Jacobi iteration, retained pixels as Dirichlet
boundary). Hole pixels start at the mean of their component's boundary
values, so every iterate obeys the discrete maximum principle. A learned
restorer can be substituted through the adapter contract.
"""

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from dss import backend
from dss.core import clip_unit
from dss.errors import ContractError

_NEIGHBORHOOD = np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], dtype=bool)


@dataclass
class HarmonicInpainter:
    """Deterministic Laplace-equation restorer; the default g(.)."""

    max_iterations: int = 500
    tolerance: float = 1e-5

    def __post_init__(self):
        if self.max_iterations < 1 or self.tolerance <= 0:
            raise ValueError(f"invalid solver settings: {self}")

    def __call__(self, masked, mask):
        return harmonic_inpaint(masked, mask, self.max_iterations, self.tolerance)


def harmonic_inpaint(masked, mask, max_iterations=500, tolerance=1e-5):
    """Fill mask==0 pixels of `masked` harmonically, per channel.

    `masked` is (C, H, W) with zeros at disrupted locations; `mask` is
    (H, W) with 1 = retained. Retained pixels pass through bit-identically.
    Hole components with no retained boundary fall back to the global mean
    of retained pixels (0.5 with a warning if nothing is retained).
    """
    masked = np.asarray(masked, dtype=np.float64)
    mask = np.asarray(mask)
    if mask.shape != masked.shape[1:]:
        raise ValueError(f"mask shape {mask.shape} vs image {masked.shape}")
    holes = mask == 0
    if not holes.any():
        return masked.copy()

    out = masked.copy()
    retained = ~holes
    if retained.any():
        global_fill = out[:, retained].mean(axis=1)
    else:
        warnings.warn("mask disrupts every pixel; filling with 0.5")
        global_fill = np.full(out.shape[0], 0.5)

    # Initialize each hole component at its boundary mean; components with
    # no retained neighbor are filled directly and dropped from the solve.
    labels, n_components = ndimage.label(holes, structure=_NEIGHBORHOOD)
    solve = np.zeros_like(holes)
    for comp in range(1, n_components + 1):
        component = labels == comp
        boundary = ndimage.binary_dilation(component, _NEIGHBORHOOD) & retained
        if boundary.any():
            values = out[:, boundary]
            if np.all(values == values[:, :1]):
                # constant Dirichlet data: the solution is that constant,
                # exactly; no iteration (which would re-round) needed
                out[:, component] = values[:, :1]
            else:
                out[:, component] = values.mean(axis=1)[:, np.newaxis]
                solve |= component
        else:
            out[:, component] = global_fill[:, np.newaxis]

    if solve.any():
        solve8 = solve.astype(np.uint8)
        for _ in range(max_iterations):
            out, max_update = backend.jacobi_sweep(out, solve8)
            if max_update < tolerance:
                break
    return clip_unit(out)


def external_restore(adapter, masked, mask):
    """Run a restorer adapter; validates shape and clips to [0, 1]."""
    try:
        out = adapter(masked, mask)
    except Exception as exc:
        raise ContractError(f"restorer adapter {adapter!r} failed: {exc}") from exc
    out = np.asarray(out, dtype=np.float64)
    if out.shape != np.asarray(masked).shape:
        raise ContractError(
            f"restorer adapter {adapter!r} returned shape {out.shape}, "
            f"expected {np.asarray(masked).shape}")
    return clip_unit(out)


class ExternalRestorer:
    """Wraps an adapter callable behind the restorer interface."""

    def __init__(self, adapter):
        self.adapter = adapter

    def __call__(self, masked, mask):
        return external_restore(self.adapter, masked, mask)
