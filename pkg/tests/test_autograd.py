"""Finite-difference checks for every autograd primitive."""
import numpy as np
import pytest

from tryondit import autograd as ag


def numeric_grad(f, x, eps=1e-6):
    """Central finite differences of a scalar-valued f at x."""
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi = f(x)
        flat[i] = orig - eps
        lo = f(x)
        flat[i] = orig
        gf[i] = (hi - lo) / (2 * eps)
    return g


def check_op(build, shapes, seed, atol=1e-7, rtol=1e-5):
    """Compare autograd and finite-difference gradients of sum(op(inputs))."""
    rng = np.random.default_rng(seed)
    arrays = [rng.standard_normal(s) for s in shapes]
    vars_ = [ag.Var(a.copy(), requires_grad=True) for a in arrays]
    loss = ag.sum_(build(*vars_))
    loss.backward()
    for i, a in enumerate(arrays):
        def f(x, i=i):
            args = [ag.Var(arr) for arr in arrays]
            args[i] = ag.Var(x)
            return float(ag.sum_(build(*args)).data)

        fd = numeric_grad(f, a.copy())
        np.testing.assert_allclose(vars_[i].grad, fd, atol=atol, rtol=rtol)


def test_add_broadcast():
    check_op(lambda a, b: a + b, [(3, 4), (4,)], seed=0)


def test_sub():
    check_op(lambda a, b: a - b, [(2, 5), (2, 5)], seed=1)


def test_mul_broadcast():
    check_op(lambda a, b: a * b, [(2, 3, 4), (3, 4)], seed=2)


def test_div():
    def build(a, b):
        return a / (b * b + 1.0)

    check_op(build, [(4, 3), (4, 3)], seed=3)


def test_pow():
    check_op(lambda a: (a * a + 1.0) ** 1.5, [(5,5)], seed=4)


def test_matmul_2d():
    check_op(lambda a, b: a @ b, [(3, 4), (4, 5)], seed=5)


def test_matmul_batched():
    check_op(lambda a, b: a @ b, [(2, 3, 4), (2, 4, 5)], seed=6)


def test_matmul_broadcast_rhs():
    check_op(lambda a, b: a @ b, [(2, 3, 4), (4, 5)], seed=7)


def test_reshape_transpose():
    def build(a):
        return ag.transpose(ag.reshape(a, (4, 6)), (1, 0)) * 2.0

    check_op(build, [(2, 3, 4)], seed=8)


def test_getitem():
    check_op(lambda a: a[:, 1:3] * 3.0, [(4, 5)], seed=9)


def test_concat():
    check_op(lambda a, b: ag.concat([a, b], axis=1) ** 2.0, [(3, 2), (3, 4)], seed=10)


def test_pad2d():
    check_op(lambda a: ag.pad2d(a, 2) * 1.5, [(1, 2, 3, 3)], seed=11)


def test_sum_axis():
    check_op(lambda a: ag.sum_(a, axis=1) ** 2.0, [(3, 4, 2)], seed=12)


def test_mean_axis_keepdims():
    check_op(lambda a: a - ag.mean(a, axis=-1, keepdims=True), [(3, 5)], seed=13)


@pytest.mark.parametrize(
    "op", [ag.tanh, ag.sigmoid, ag.exp, ag.gelu, ag.silu], ids=lambda f: f.__name__
)
def test_unary_nonlinearities(op):
    check_op(lambda a: op(a * 0.7), [(4, 6)], seed=14)


def test_softmax():
    check_op(lambda a: ag.softmax(a) * np.arange(5.0), [(3, 5)], seed=15)


def test_layernorm():
    check_op(lambda a: ag.layernorm(a) * np.arange(6.0), [(4, 6)], seed=16, atol=1e-6)


def test_rotate_pairs():
    check_op(lambda a: ag.rotate_pairs(a) * np.arange(4.0), [(3, 4)], seed=17)


def test_rotate_pairs_values():
    x = ag.Var(np.array([[1.0, 2.0, 3.0, 4.0]]))
    out = ag.rotate_pairs(x).data
    np.testing.assert_array_equal(out, [[-2.0, 1.0, -4.0, 3.0]])


def test_im2col_matches_loop():
    rng = np.random.default_rng(18)
    x = rng.standard_normal((2, 3, 6, 8))
    cols = ag.im2col(ag.Var(x), kernel=3, stride=2).data
    oh, ow = 2, 3
    for b in range(2):
        idx = 0
        for i in range(oh):
            for j in range(ow):
                patch = x[b, :, 2 * i : 2 * i + 3, 2 * j : 2 * j + 3].reshape(-1)
                np.testing.assert_array_equal(cols[b, idx], patch)
                idx += 1


def test_im2col_grad():
    check_op(lambda a: ag.im2col(a, kernel=2, stride=1) ** 2.0, [(1, 2, 4, 4)], seed=19)


def test_conv2d_grad():
    def build(x, w, b):
        return ag.conv2d(x, w, b, stride=2, padding=1)

    check_op(build, [(2, 3, 6, 6), (4, 3, 3, 3), (4,)], seed=20)


def test_conv2d_matches_direct():
    rng = np.random.default_rng(21)
    x = rng.standard_normal((1, 2, 5, 5))
    w = rng.standard_normal((3, 2, 3, 3))
    b = rng.standard_normal(3)
    out = ag.conv2d(ag.Var(x), ag.Var(w), ag.Var(b), stride=1, padding=1).data
    assert out.shape == (1, 3, 5, 5)
    xp = np.pad(x, [(0, 0), (0, 0), (1, 1), (1, 1)])
    for co in range(3):
        for i in range(5):
            for j in range(5):
                ref = (xp[0, :, i : i + 3, j : j + 3] * w[co]).sum() + b[co]
                assert abs(out[0, co, i, j] - ref) < 1e-10


def test_grad_accumulates_on_reuse():
    x = ag.Var(np.array([2.0, 3.0]), requires_grad=True)
    y = ag.sum_(x * x + x)
    y.backward()
    np.testing.assert_allclose(x.grad, [5.0, 7.0])


def test_backward_requires_scalar():
    x = ag.Var(np.ones(3), requires_grad=True)
    with pytest.raises(ValueError):
        (x * 2.0).backward()


def test_no_grad_tracking_for_constants():
    x = ag.Var(np.ones(3))
    y = x * 2.0
    assert not y.requires_grad and y._backward is None


def test_dtype_preserved():
    x = ag.Var(np.ones((2, 2), dtype=np.float32), requires_grad=True)
    y = ag.sum_(ag.gelu(x @ x + 1.0))
    assert y.dtype == np.float32
    y.backward()
    assert x.grad.dtype == np.float32
