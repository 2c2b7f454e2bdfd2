import subprocess
import sys

import numpy as np

from dss import backend
from dss.backend import py_kernels


def _compiled_or_skip():
    import pytest

    try:
        from dss.backend import _kernels
    except ImportError:
        pytest.skip("compiled backend not built")
    return _kernels


def test_im2col_matches_naive():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((2, 3, 6, 7))
    kh, kw = 3, 2
    cols = py_kernels.im2col(x, kh, kw)
    n, c, h, w = x.shape
    oh, ow = h - kh + 1, w - kw + 1
    assert cols.shape == (n, c * kh * kw, oh * ow)
    for i in range(oh):
        for j in range(ow):
            patch = x[:, :, i:i + kh, j:j + kw].reshape(n, -1)
            assert np.array_equal(cols[:, :, i * ow + j], patch)


def test_col2im_adjoint_of_im2col():
    # <im2col(x), y> == <x, col2im(y)> makes col2im the exact adjoint,
    # which is what the convolution backward pass needs.
    rng = np.random.default_rng(1)
    x = rng.standard_normal((2, 3, 5, 5))
    kh = kw = 3
    cols = py_kernels.im2col(x, kh, kw)
    y = rng.standard_normal(cols.shape)
    lhs = float(np.sum(cols * y))
    back = py_kernels.col2im(y, 3, 5, 5, kh, kw)
    rhs = float(np.sum(x * back))
    assert abs(lhs - rhs) <= 1e-9


def test_jacobi_sweep_averages_neighbors():
    image = np.zeros((1, 3, 3))
    image[0] = [[1.0, 2.0, 3.0], [4.0, 0.0, 6.0], [7.0, 8.0, 9.0]]
    solve = np.zeros((3, 3), dtype=np.uint8)
    solve[1, 1] = 1
    out, max_update = py_kernels.jacobi_sweep(image, solve)
    assert out[0, 1, 1] == (2.0 + 8.0 + 4.0 + 6.0) / 4.0
    assert max_update == out[0, 1, 1]
    # non-solve pixels untouched
    out[0, 1, 1] = 0.0
    assert np.array_equal(out, image)


def test_jacobi_sweep_edge_neighbor_count():
    image = np.zeros((1, 2, 2))
    image[0] = [[0.0, 0.4], [0.8, 0.0]]
    solve = np.zeros((2, 2), dtype=np.uint8)
    solve[0, 0] = 1
    out, _ = py_kernels.jacobi_sweep(image, solve)
    assert out[0, 0, 0] == (0.4 + 0.8) / 2.0  # two in-bounds neighbors


def test_backends_bit_identical():
    kernels = _compiled_or_skip()
    rng = np.random.default_rng(2)
    x = rng.standard_normal((2, 3, 8, 8))
    assert np.array_equal(kernels.im2col(x, 5, 5), py_kernels.im2col(x, 5, 5))
    cols = py_kernels.im2col(x, 5, 5)
    y = rng.standard_normal(cols.shape)
    assert np.array_equal(kernels.col2im(y, 3, 8, 8, 5, 5),
                          py_kernels.col2im(y, 3, 8, 8, 5, 5))
    image = rng.random((1, 16, 16))
    solve = (rng.random((16, 16)) < 0.3).astype(np.uint8)
    a, ua = kernels.jacobi_sweep(image, solve)
    b, ub = py_kernels.jacobi_sweep(image, solve)
    assert np.array_equal(a, b)
    assert ua == ub


def test_env_var_forces_fallback():
    code = ("import os; os.environ['DSS_DISABLE_EXT'] = '1'; "
            "from dss import backend; print(backend.COMPILED)")
    out = subprocess.run([sys.executable, "-c", code],
                         capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "False"


def test_selected_backend_exports():
    assert callable(backend.im2col)
    assert callable(backend.col2im)
    assert callable(backend.jacobi_sweep)
    assert isinstance(backend.COMPILED, bool)
