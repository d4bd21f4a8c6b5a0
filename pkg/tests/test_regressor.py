import numpy as np
import pytest

from knoblab import autodiff as ad
from knoblab import regressor, worldmodel
from knoblab.autodiff import ContractError, Tensor
from knoblab.regressor import (
    ARCHITECTURE,
    RegressorModel,
    TrainConfig,
    TrainingDivergedError,
    forward_normalized,
    init_model,
    predict,
    predict_graph,
    render_dataset,
    train,
)
from knoblab.synthgen import AttributeVector


def test_init_model_shapes_and_determinism():
    a, b = init_model(64, seed=5), init_model(64, seed=5)
    for name, shape, fan_in in ARCHITECTURE:
        assert a.params[name].shape == shape
        np.testing.assert_array_equal(a.params[name].values, b.params[name].values)
        if fan_in is None:
            assert np.all(a.params[name].values == 0.0)
    c = init_model(64, seed=6)
    assert not np.array_equal(a.params["conv1_w"].values, c.params["conv1_w"].values)


def test_init_model_rejects_odd_resolution():
    with pytest.raises(ContractError):
        init_model(48, seed=0)


def test_forward_shapes(model32):
    x = Tensor(np.random.default_rng(0).uniform(size=(5, 1, 32, 32)))
    out = forward_normalized(model32, x)
    assert out.shape == (5, 1)


def test_predict_requires_matching_resolution(model32):
    with pytest.raises(ContractError):
        predict(model32, np.zeros((64, 64)))


def test_predict_denormalizes(model32):
    img = np.random.default_rng(1).uniform(size=(32, 32))
    norm = forward_normalized(model32, Tensor(img.reshape(1, 1, 32, 32))).item()
    assert predict(model32, img) == pytest.approx(model32.denormalize(norm))
    assert model32.denormalize(model32.normalize(123.4)) == pytest.approx(123.4)


def test_predict_graph_matches_predict(model32):
    img = np.random.default_rng(2).uniform(size=(32, 32))
    node = predict_graph(model32, Tensor(img))
    assert model32.denormalize(node.item()) == pytest.approx(predict(model32, img))


def test_model_gradients_match_finite_differences():
    """Finite-difference check of the loss with respect to conv1 weights."""
    model = init_model(32, seed=1)
    image = Tensor(np.random.default_rng(3).uniform(size=(1, 1, 8, 8)))

    shape = model.params["conv1_w"].shape

    def fn(t):
        trial = RegressorModel(model.resolution, dict(model.params))
        trial.params["conv1_w"] = ad.reshape(ad.mul(t, 1.0), shape)
        p = trial.params
        h = ad.relu(ad.conv2d(image, p["conv1_w"], p["conv1_b"], stride=2, pad=1))
        h = ad.relu(ad.conv2d(h, p["conv2_w"], p["conv2_b"], stride=2, pad=1))
        h = ad.relu(ad.conv2d(h, p["conv3_w"], p["conv3_b"], stride=2, pad=1))
        h = ad.global_avg_pool(h)
        h = ad.relu(ad.linear(h, p["fc1_w"], p["fc1_b"]))
        out = ad.linear(h, p["fc2_w"], p["fc2_b"])
        return ad.mse(out, np.array([[0.3]]))

    point = model.params["conv1_w"].values.ravel()
    report = ad.finite_diff_check(fn, point, eps=1e-5)
    assert report.max_rel_error < 1e-3


def test_train_config_validation():
    with pytest.raises(ContractError):
        TrainConfig(epochs=0)
    with pytest.raises(ContractError):
        TrainConfig(lr=-1.0)
    with pytest.raises(ContractError):
        TrainConfig(optimizer="adagrad")


def test_training_reduces_loss(quick_trained):
    model, manifest, images, metrics = quick_trained
    assert metrics[-1]["train_rmse"] < metrics[0]["train_rmse"]
    assert np.isfinite(metrics[-1]["val_rmse"])


def test_training_deterministic(tiny_manifest):
    images = render_dataset(tiny_manifest.samples, 32)
    cfg = TrainConfig(epochs=2, batch_size=16, lr=1e-2, seed=0)
    m1, _ = train(init_model(32, 0), tiny_manifest, cfg, images=images)
    m2, _ = train(init_model(32, 0), tiny_manifest, cfg, images=images)
    for name in m1.params:
        assert m1.params[name].values.tobytes() == m2.params[name].values.tobytes()


def test_training_divergence_keeps_last_good(tiny_manifest):
    images = render_dataset(tiny_manifest.samples, 32)
    cfg = TrainConfig(epochs=5, batch_size=16, lr=1e6, optimizer="sgd")
    with pytest.raises((TrainingDivergedError, ad.NonFiniteError, ad.OptimizerError)):
        train(init_model(32, 0), tiny_manifest, cfg, images=images)


def test_train_rejects_empty_manifest():
    empty = worldmodel.DatasetManifest(1, 0, [], [])
    with pytest.raises(ContractError):
        train(init_model(32, 0), empty, TrainConfig(epochs=1))


def test_evaluate_perfect_oracle_matches_noise_floor():
    """A stub that predicts oracle stress exactly should leave only label noise."""
    noise_sd = 2.0
    man = worldmodel.synth_dataset(
        worldmodel.make_lots(10, 21), 100, jitter=0.0, noise_sd=noise_sd, master_seed=21
    )
    labels = np.array([s.label for s in man.samples])
    preds = np.array([worldmodel.oracle_stress(s.attrs) for s in man.samples])
    rmse = float(np.sqrt(np.mean((preds - labels) ** 2)))
    assert rmse == pytest.approx(noise_sd, rel=0.15)


def test_evaluate_reports_per_lot(quick_trained):
    model, manifest, images, _ = quick_trained
    stats = regressor.evaluate(model, manifest, "val")
    assert stats["rmse"] >= 0.0 and stats["mae"] >= 0.0
    assert set(stats["per_lot_mean_error"]) <= {l.lot_id for l in manifest.lots}
    with pytest.raises(ContractError):
        regressor.evaluate(model, manifest, "nope")
