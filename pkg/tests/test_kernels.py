import numpy as np
import pytest

from resilient_cs import _kernels
from resilient_cs._kernels import _pykernels

try:
    from resilient_cs._kernels import _ckernels
except ImportError:  # extension not built
    _ckernels = None

needs_ext = pytest.mark.skipif(_ckernels is None, reason="compiled kernels not built")


def test_backend_reported():
    assert _kernels.BACKEND in ("cython", "python")


@pytest.mark.parametrize("k", [1, 3, 5])
def test_im2col_adjoint(k):
    rng = np.random.default_rng(k)
    x = rng.normal(size=(2, 3, 5, 7))
    cols = rng.normal(size=(3 * k * k, 2 * 5 * 7))
    lhs = np.sum(_kernels.im2col(x, k) * cols)
    rhs = np.sum(x * _kernels.col2im(cols, 2, 3, 5, 7, k))
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_im2col_center_row_is_input():
    x = np.random.default_rng(0).normal(size=(1, 1, 4, 4))
    cols = _kernels.im2col(x, 3)
    np.testing.assert_array_equal(cols[4], x.ravel())


def test_gilbert_chain_always_keeps_when_never_entering():
    keep = _kernels.gilbert_chain(np.random.default_rng(0).random(100), 0.0, 1.0, False)
    assert keep.all()


@needs_ext
@pytest.mark.parametrize("k", [1, 3, 5])
def test_compiled_matches_reference_conv_kernels(k):
    rng = np.random.default_rng(10 + k)
    x = rng.normal(size=(3, 2, 6, 9))
    np.testing.assert_array_equal(_ckernels.im2col(x, k), _pykernels.im2col(x, k))
    cols = rng.normal(size=(2 * k * k, 3 * 6 * 9))
    np.testing.assert_array_equal(_ckernels.col2im(cols, 3, 2, 6, 9, k),
                                  _pykernels.col2im(cols, 3, 2, 6, 9, k))


@needs_ext
@pytest.mark.parametrize("start", [False, True])
def test_compiled_matches_reference_gilbert(start):
    u = np.random.default_rng(1).random(50_000)
    np.testing.assert_array_equal(_ckernels.gilbert_chain(u, 0.0139, 0.125, start),
                                  _pykernels.gilbert_chain(u, 0.0139, 0.125, start))
