"""Pure-numpy fallback kernels.

Mirrors the compiled extension in ``_kernels.pyx`` operation for operation.
Floating-point evaluation order is kept identical to the compiled versions
so both backends produce the same bits.
"""

import numpy as np

COMPILED = False


def im2col(x, kh, kw):
    """Extract all kh x kw patches of x (N, C, H, W), stride 1, no padding.

    Returns an array of shape (N, C*kh*kw, OH*OW).
    """
    n, c, h, w = x.shape
    oh = h - kh + 1
    ow = w - kw + 1
    windows = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(2, 3))
    # windows: (N, C, OH, OW, kh, kw) -> (N, C, kh, kw, OH, OW)
    cols = windows.transpose(0, 1, 4, 5, 2, 3)
    return np.ascontiguousarray(cols).reshape(n, c * kh * kw, oh * ow)


def col2im(cols, c, h, w, kh, kw):
    """Adjoint of im2col: scatter-add patch columns back onto an (N, C, H, W) grid."""
    n = cols.shape[0]
    oh = h - kh + 1
    ow = w - kw + 1
    patches = cols.reshape(n, c, kh, kw, oh, ow)
    out = np.zeros((n, c, h, w), dtype=cols.dtype)
    for i in range(kh):
        for j in range(kw):
            out[:, :, i:i + oh, j:j + ow] += patches[:, :, i, j]
    return out


def jacobi_sweep(img, holes):
    """One Jacobi relaxation sweep of the discrete Laplace equation.

    img is (C, H, W); holes is an (H, W) uint8 matrix with 1 at pixels to be
    solved for. Each hole pixel is replaced by the mean of its in-bounds
    4-neighbors (values taken from the previous iterate; retained pixels act
    as Dirichlet boundary). Returns (new_img, max_update).
    """
    c, h, w = img.shape
    padded = np.zeros((c, h + 2, w + 2), dtype=img.dtype)
    padded[:, 1:-1, 1:-1] = img
    # up + down + left + right, in that order (matches the compiled kernel)
    s = (padded[:, :-2, 1:-1] + padded[:, 2:, 1:-1]
         + padded[:, 1:-1, :-2] + padded[:, 1:-1, 2:])
    ones = np.zeros((h + 2, w + 2), dtype=img.dtype)
    ones[1:-1, 1:-1] = 1.0
    count = (ones[:-2, 1:-1] + ones[2:, 1:-1]
             + ones[1:-1, :-2] + ones[1:-1, 2:])
    new = img.copy()
    hole = holes.astype(bool)
    for ch in range(c):
        new[ch][hole] = s[ch][hole] / count[hole]
    if not hole.any():
        return new, 0.0
    max_update = float(np.max(np.abs(new[:, hole] - img[:, hole])))
    return new, max_update
