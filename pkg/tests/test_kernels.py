"""Backend equivalence: the numba and numpy kernel implementations must
agree to float64 reduction-order tolerance on random inputs."""
import numpy as np
import pytest

from spanmatch import kernels as K

pytestmark = pytest.mark.skipif(not K.HAS_NUMBA, reason="numba unavailable")


def _random_inputs(rng, n=17, c=9):
    x = rng.standard_normal((n, c)) * 3.0
    y = rng.standard_normal((n, c))
    gain = rng.standard_normal(c)
    bias = rng.standard_normal(c)
    gold = rng.integers(0, c, size=n).astype(np.int64)
    return x, y, gain, bias, gold


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_backends_agree(seed):
    rng = np.random.default_rng(seed)
    x, y, gain, bias, gold = _random_inputs(rng)
    pairs = [
        ("softmax_rows", (x,)),
        ("softmax_rows_grad", (K._np_softmax_rows(x), y)),
        ("gelu", (x,)),
        ("gelu_grad", (x, y)),
        ("row_l2", (x, y, False)),
        ("row_l2", (x, y, True)),
    ]
    for name, args in pairs:
        a = K._NUMPY_IMPLS[name](*args)
        b = K._NUMBA_IMPLS[name](*args)
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-13, err_msg=name)

    out_np = K._NUMPY_IMPLS["layer_norm_rows"](x, gain, bias, 1e-5)
    out_nb = K._NUMBA_IMPLS["layer_norm_rows"](x, gain, bias, 1e-5)
    for a, b in zip(out_np, out_nb):
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-13)
    dx_np = K._NUMPY_IMPLS["layer_norm_rows_grad"](out_np[1], out_np[2], gain, y)
    dx_nb = K._NUMBA_IMPLS["layer_norm_rows_grad"](out_np[1], out_np[2], gain, y)
    for a, b in zip(dx_np, dx_nb):
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-13)

    loss_np, probs_np = K._NUMPY_IMPLS["softmax_xent"](x, gold)
    loss_nb, probs_nb = K._NUMBA_IMPLS["softmax_xent"](x, gold)
    assert abs(loss_np - loss_nb) < 1e-12
    np.testing.assert_allclose(probs_np, probs_nb, rtol=1e-12, atol=1e-13)
    np.testing.assert_allclose(
        K._NUMPY_IMPLS["softmax_xent_grad"](probs_np, gold, 0.25),
        K._NUMBA_IMPLS["softmax_xent_grad"](probs_np, gold, 0.25),
        rtol=1e-12, atol=1e-13)

    dist = K._NUMPY_IMPLS["row_l2"](x, y, False)
    np.testing.assert_allclose(
        K._NUMPY_IMPLS["row_l2_grad"](x, y, dist, dist, False),
        K._NUMBA_IMPLS["row_l2_grad"](x, y, dist, dist, False),
        rtol=1e-12, atol=1e-13)


def test_adam_update_backends_agree(rng):
    p0 = rng.standard_normal((5, 4))
    g = rng.standard_normal((5, 4))
    states = []
    for impl in (K._NUMPY_IMPLS["adam_update"], K._NUMBA_IMPLS["adam_update"]):
        p = p0.copy()
        m = np.zeros_like(p)
        v = np.zeros_like(p)
        for t in (1, 2, 3):
            impl(p, g, m, v, t, 1e-3, 0.9, 0.999, 1e-8)
        states.append((p, m, v))
    for a, b in zip(states[0], states[1]):
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-15)


def test_backend_selection_roundtrip():
    current = K.active_backend()
    try:
        assert K.use_backend("numpy") == "numpy"
        assert K.active_backend() == "numpy"
        assert K.use_backend("auto") == ("numba" if K.HAS_NUMBA else "numpy")
    finally:
        K.use_backend(current)


def test_unknown_backend_rejected():
    with pytest.raises(ValueError):
        K.use_backend("cuda")
