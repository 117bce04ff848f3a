"""The compiled kernels and the numpy fallback must agree."""
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pvnet.neuralcore import kernels

BACKENDS = kernels.available_backends()
needs_cython = pytest.mark.skipif("cython" not in BACKENDS, reason="compiled extension not built")

shapes = st.tuples(st.integers(1, 3), st.integers(1, 3), st.integers(1, 3).map(lambda k: 2 * k),
                   st.integers(1, 3).map(lambda k: 2 * k), st.integers(0, 2 ** 31))


def test_numpy_backend_always_available():
    assert "numpy" in BACKENDS


def test_compiled_backend_is_default_when_built():
    if "cython" in BACKENDS and os.environ.get("PVNET_PURE_PYTHON", "") in ("", "0"):
        assert kernels.BACKEND == "cython"


def test_env_var_forces_fallback():
    code = "from pvnet.neuralcore import kernels; print(kernels.BACKEND)"
    env = dict(os.environ, PVNET_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"


@needs_cython
@given(shapes)
def test_im2col_col2im_agree(s):
    c, n, h, w, seed = s
    r = np.random.default_rng(seed)
    x = r.standard_normal((c, n, h, w))
    a, b = BACKENDS["numpy"], BACKENDS["cython"]
    np.testing.assert_array_equal(a.im2col3x3(x), b.im2col3x3(x))
    d = r.standard_normal((c, 9, n, h, w))
    np.testing.assert_array_equal(a.col2im3x3(d), b.col2im3x3(d))


@needs_cython
@given(shapes)
def test_maxpool_agree(s):
    c, n, h, w, seed = s
    r = np.random.default_rng(seed)
    x = r.standard_normal((c * n, h, w))
    x[0, 0, :] = 1.0  # ties resolve to the first position in both
    a, b = BACKENDS["numpy"], BACKENDS["cython"]
    oa, ga = a.maxpool2x2_forward(x)
    ob, gb = b.maxpool2x2_forward(x)
    np.testing.assert_array_equal(oa, ob)
    np.testing.assert_array_equal(ga, gb)
    g = r.standard_normal(oa.shape)
    np.testing.assert_array_equal(a.maxpool2x2_backward(g, ga), b.maxpool2x2_backward(g, gb))


@needs_cython
@given(shapes)
def test_prelu_agree(s):
    c, n, h, w, seed = s
    r = np.random.default_rng(seed)
    x = r.standard_normal((c, n * h * w))
    slope = r.uniform(0, 0.5, c)
    g = r.standard_normal(x.shape)
    a, b = BACKENDS["numpy"], BACKENDS["cython"]
    np.testing.assert_array_equal(a.prelu_forward(x, slope), b.prelu_forward(x, slope))
    dxa, dsa = a.prelu_backward(g, x, slope)
    dxb, dsb = b.prelu_backward(g, x, slope)
    np.testing.assert_array_equal(dxa, dxb)
    # Reductions may sum in a different order.
    np.testing.assert_allclose(dsa, dsb, rtol=1e-12, atol=1e-12)


@needs_cython
@given(st.integers(1, 50), st.integers(1, 20), st.integers(0, 2 ** 31))
def test_adam_step_agrees(n, t, seed):
    r = np.random.default_rng(seed)
    p, g, m = r.standard_normal((3, n))
    v = np.abs(r.standard_normal(n))
    c1, c2 = 1 - 0.9 ** t, 1 - 0.999 ** t
    args = (0.9, 0.999, 0.0015 / c1, 1 / np.sqrt(c2), 1e-8)
    out = {}
    for name, b in BACKENDS.items():
        arrs = [a.copy() for a in (p, g, m, v)]
        b.adam_step(*arrs, *args)
        out[name] = arrs
    for x, y in zip(out["numpy"], out["cython"]):
        np.testing.assert_array_equal(x, y)
