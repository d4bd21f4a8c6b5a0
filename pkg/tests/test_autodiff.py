import numpy as np
import pytest

from knoblab import autodiff as ad
from knoblab.autodiff import (
    Adam,
    ContractError,
    SGD,
    ShapeError,
    Tensor,
    apply_primitive,
    backprop,
    finite_diff_check,
)


def test_mul_square():
    x = Tensor(3.0, requires_grad=True)
    out = ad.mul(x, x)
    assert out.item() == 9.0


def test_backprop_square_gradient():
    x = Tensor(3.0, requires_grad=True)
    grads = backprop(ad.mul(x, x))
    assert grads[x] == pytest.approx(6.0)


def test_backprop_mse_gradient():
    y = Tensor(np.array([2.0]), requires_grad=True)
    grads = backprop(ad.mse(y, np.array([0.0])))
    assert grads[y][0] == pytest.approx(4.0)


def test_pnorm_345():
    x = Tensor(np.array([3.0, 4.0]), requires_grad=True)
    out = ad.pnorm(x, 2)
    assert out.item() == pytest.approx(5.0)
    grads = backprop(out)
    assert grads[x] == pytest.approx([0.6, 0.8])


def test_conv2d_identity_kernel():
    img = np.random.default_rng(0).uniform(size=(1, 1, 6, 6))
    out = ad.conv2d(Tensor(img), Tensor(np.ones((1, 1, 1, 1))), Tensor(np.zeros(1)))
    np.testing.assert_array_equal(out.values, img)


def test_backprop_requires_scalar_root():
    x = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    with pytest.raises(ContractError):
        backprop(ad.mul(x, x))


def test_shape_mismatch_names_kind_and_shapes():
    a = Tensor(np.zeros((2, 3)))
    b = Tensor(np.zeros((4, 5)))
    with pytest.raises(ShapeError, match=r"add.*\(2, 3\).*\(4, 5\)"):
        ad.add(a, b)


def test_nonfinite_forward_raises():
    with pytest.raises(ad.NonFiniteError):
        ad.exp(Tensor(1e6))


def test_apply_primitive_dispatch():
    out = apply_primitive("add", [Tensor(1.0), Tensor(2.0)])
    assert out.item() == 3.0
    with pytest.raises(ContractError):
        apply_primitive("frobnicate", [])


def test_repeated_backprop_identical():
    x = Tensor(np.array([1.0, -2.0, 0.5]), requires_grad=True)

    def build():
        return ad.tsum(ad.mul(ad.tanh(x), x))

    g1 = backprop(build())[x].copy()
    g2 = backprop(build())[x].copy()
    np.testing.assert_array_equal(g1, g2)


def test_adjoint_linearity():
    rng = np.random.default_rng(3)
    x = Tensor(rng.normal(size=5), requires_grad=True)
    a = ad.tsum(ad.exp(x))
    b = ad.pnorm(x, 2)
    g_sum = backprop(ad.add(a, b))[x].copy()
    g_a = backprop(ad.tsum(ad.exp(x)))[x].copy()
    g_b = backprop(ad.pnorm(x, 2))[x].copy()
    np.testing.assert_allclose(g_sum, g_a + g_b, rtol=1e-12)


def _conv_scalar(t):
    x = ad.reshape(ad.mul(t, 1.0), (1, 1, 4, 4))
    w = Tensor(np.linspace(-0.5, 0.5, 9).reshape(1, 1, 3, 3))
    b = Tensor(np.array([0.1]))
    return ad.tsum(ad.tanh(ad.conv2d(x, w, b, stride=1, pad=1)))


def _linear_scalar(t):
    x = ad.reshape(ad.mul(t, 1.0), (2, 3))
    w = Tensor(np.linspace(-1, 1, 6).reshape(3, 2))
    b = Tensor(np.array([0.3, -0.2]))
    return ad.tsum(ad.sigmoid(ad.linear(x, w, b)))


PRIMITIVE_CASES = [
    ("add", lambda t: ad.tsum(ad.add(t, ad.mul(t, 2.0)))),
    ("sub", lambda t: ad.tsum(ad.sub(ad.mul(t, 3.0), t))),
    ("mul", lambda t: ad.tsum(ad.mul(t, t))),
    ("div", lambda t: ad.tsum(ad.div(Tensor(np.ones(6)), ad.add(t, 3.0)))),
    ("scalar-pow", lambda t: ad.tsum(ad.scalar_pow(ad.add(t, 3.0), 1.7))),
    ("exp", lambda t: ad.tsum(ad.exp(t))),
    ("log", lambda t: ad.tsum(ad.log(ad.add(t, 3.0)))),
    ("tanh", lambda t: ad.tsum(ad.tanh(t))),
    ("sigmoid", lambda t: ad.tsum(ad.sigmoid(t))),
    ("relu", lambda t: ad.tsum(ad.relu(t))),
    ("smooth-clamp", lambda t: ad.tsum(ad.smooth_clamp(t, 0.0, 1.0))),
    ("sum", lambda t: ad.tsum(ad.mul(t, t))),
    ("mean", lambda t: ad.tmean(ad.mul(t, 0.7))),
    ("mse", lambda t: ad.mse(t, np.linspace(0, 1, 6))),
    ("p-norm-2", lambda t: ad.pnorm(t, 2)),
    ("p-norm-1", lambda t: ad.pnorm(t, 1)),
    ("matmul-with-bias", _linear_scalar),
    ("conv2d", _conv_scalar),
    ("global-average-pool", lambda t: ad.tsum(ad.global_avg_pool(ad.reshape(ad.mul(t, 1.0), (1, 2, 2, 4))))),
    ("pick", lambda t: ad.mul(ad.pick(t, 2), ad.pick(t, 0))),
]


@pytest.mark.parametrize("kind,fn", PRIMITIVE_CASES, ids=[c[0] for c in PRIMITIVE_CASES])
def test_finite_diff_every_primitive(kind, fn):
    rng = np.random.default_rng(hash(kind) % 2**32)
    for _ in range(5):
        size = 16 if kind in ("conv2d", "global-average-pool") else 6
        point = rng.uniform(-2.0, 2.0, size=size)
        # keep relu/pick probes away from the kink at zero
        point[np.abs(point) < 1e-2] = 0.5
        report = finite_diff_check(fn, point, eps=1e-5)
        # saturated clamp tails have near-zero slope where relative error is
        # meaningless; accept a tiny absolute error there instead
        assert report.max_rel_error < 1e-4 or report.max_abs_error < 1e-9


def test_finite_diff_square():
    report = finite_diff_check(lambda t: ad.mul(ad.pick(t, 0), ad.pick(t, 0)), np.array([3.0]), eps=1e-4)
    assert report.max_rel_error < 1e-6


def test_finite_diff_rejects_bad_eps():
    with pytest.raises(ContractError):
        finite_diff_check(lambda t: ad.tsum(t), np.ones(2), eps=0.0)


def test_sgd_contracts_quadratic():
    x = {"x": Tensor(3.0, requires_grad=True)}
    opt = SGD(lr=0.1)
    for _ in range(50):
        opt.step(x, {"x": 2.0 * x["x"].values})
    assert abs(float(x["x"].values)) < 1e-3


def test_adam_contracts_quadratic():
    x = {"x": Tensor(3.0, requires_grad=True)}
    opt = Adam(lr=0.1)
    for _ in range(200):
        opt.step(x, {"x": 2.0 * x["x"].values})
    assert abs(float(x["x"].values)) < 1e-2


def test_sgd_zero_gradient_no_change():
    x = {"x": Tensor(np.array([1.0, 2.0]), requires_grad=True)}
    SGD(lr=0.5).step(x, {"x": np.zeros(2)})
    np.testing.assert_array_equal(x["x"].values, [1.0, 2.0])


def test_optimizer_rejects_nan_gradient():
    x = {"weights": Tensor(1.0, requires_grad=True)}
    with pytest.raises(ad.OptimizerError, match="weights"):
        SGD(lr=0.1).step(x, {"weights": np.array(np.nan)})


def test_forward_deterministic():
    def run():
        x = Tensor(np.linspace(-1, 1, 10))
        return ad.tsum(ad.sigmoid(ad.mul(ad.exp(x), 0.3))).item()

    assert run() == run()
