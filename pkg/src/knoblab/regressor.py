"""Small CNN predicting peak stress from a rendered grayscale tile.

Fixed architecture: three stride-2 3x3 convs (8/16/32 channels) with relu,
global average pooling, then 32->16->1 dense layers.  Labels are normalized
to [0, 1] over the training range before the MSE loss; predictions are
denormalized on output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import rng
from .autodiff import ContractError, Tensor
from .synthgen import layout_from_seed, render
from .worldmodel import DatasetManifest, SampleRecord

SUPPORTED_RESOLUTIONS = (32, 64, 128)

# (name, shape, fan_in); bias entries have fan_in None and start at zero
ARCHITECTURE = (
    ("conv1_w", (8, 1, 3, 3), 9),
    ("conv1_b", (8,), None),
    ("conv2_w", (16, 8, 3, 3), 72),
    ("conv2_b", (16,), None),
    ("conv3_w", (32, 16, 3, 3), 144),
    ("conv3_b", (32,), None),
    ("fc1_w", (32, 16), 32),
    ("fc1_b", (16,), None),
    ("fc2_w", (16, 1), 16),
    ("fc2_b", (1,), None),
)


class TrainingDivergedError(RuntimeError):
    """Loss became non-finite; carries the last finite-epoch model."""

    def __init__(self, message: str, last_good_model: "RegressorModel"):
        super().__init__(message)
        self.last_good_model = last_good_model


@dataclass
class RegressorModel:
    resolution: int
    params: dict[str, Tensor]
    label_min: float = 0.0
    label_max: float = 1.0

    def normalize(self, y: float) -> float:
        return (y - self.label_min) / (self.label_max - self.label_min)

    def denormalize(self, y: float) -> float:
        return y * (self.label_max - self.label_min) + self.label_min

    def copy(self) -> "RegressorModel":
        return RegressorModel(
            self.resolution,
            {k: Tensor(v.values.copy(), requires_grad=v.requires_grad) for k, v in self.params.items()},
            self.label_min,
            self.label_max,
        )


@dataclass
class TrainConfig:
    epochs: int = 20
    batch_size: int = 32
    lr: float = 3e-3
    seed: int = 0
    optimizer: str = "adam"

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.lr <= 0:
            raise ContractError("epochs, batch_size and lr must be positive")
        if self.optimizer not in ("sgd", "adam"):
            raise ContractError(f"unknown optimizer {self.optimizer!r}")


def init_model(resolution: int, seed: int) -> RegressorModel:
    """He-style scaled initialization from counter-based gaussians."""
    if resolution not in SUPPORTED_RESOLUTIONS:
        raise ContractError(f"unsupported resolution {resolution}; pick one of {SUPPORTED_RESOLUTIONS}")
    params: dict[str, Tensor] = {}
    counter = 0
    for name, shape, fan_in in ARCHITECTURE:
        size = int(np.prod(shape))
        if fan_in is None:
            values = np.zeros(shape)
        else:
            std = math.sqrt(2.0 / fan_in)
            draws = np.array([rng.gaussian(seed, counter + 2 * i) for i in range(size)])
            values = (std * draws).reshape(shape)
        counter += 2 * size
        params[name] = Tensor(values, requires_grad=True)
    return RegressorModel(resolution, params)


def forward_normalized(model: RegressorModel, images: Tensor) -> Tensor:
    """Graph forward pass; images (N,1,H,W) -> normalized predictions (N,1)."""
    p = model.params
    # rendered intensities live in [0.5, 1]; center them before the convs
    h = ad.mul(ad.add(images, -0.5), 2.0)
    h = ad.relu(ad.conv2d(h, p["conv1_w"], p["conv1_b"], stride=2))
    h = ad.relu(ad.conv2d(h, p["conv2_w"], p["conv2_b"], stride=2))
    h = ad.relu(ad.conv2d(h, p["conv3_w"], p["conv3_b"], stride=2))
    h = ad.global_avg_pool(h)
    h = ad.relu(ad.linear(h, p["fc1_w"], p["fc1_b"]))
    return ad.linear(h, p["fc2_w"], p["fc2_b"])


def _as_batch(model: RegressorModel, image) -> Tensor:
    values = image.values if isinstance(image, Tensor) else np.asarray(image, dtype=np.float64)
    if values.shape != (model.resolution, model.resolution):
        raise ContractError(
            f"image shape {values.shape} does not match model resolution {model.resolution}"
        )
    if isinstance(image, Tensor):
        return ad.reshape(image, (1, 1, model.resolution, model.resolution))
    return Tensor(values.reshape(1, 1, model.resolution, model.resolution))


def predict(model: RegressorModel, image) -> float:
    """Denormalized stress prediction for one (H, W) image."""
    out = forward_normalized(model, _as_batch(model, image))
    return model.denormalize(out.item())


def predict_graph(model: RegressorModel, image: Tensor) -> Tensor:
    """Normalized prediction node for a single-image graph (used by the objective)."""
    return forward_normalized(model, _as_batch(model, image))


def render_sample(sample: SampleRecord, resolution: int) -> np.ndarray:
    return render(layout_from_seed(sample.sample_seed), sample.attrs, resolution).values


def render_dataset(samples: list[SampleRecord], resolution: int) -> np.ndarray:
    """(N, 1, H, W) stack of forward renders for every sample."""
    images = np.empty((len(samples), 1, resolution, resolution))
    for i, sample in enumerate(samples):
        images[i, 0] = render_sample(sample, resolution)
    return images


def _batched_predictions(model: RegressorModel, images: np.ndarray, batch: int = 256) -> np.ndarray:
    outs = []
    for start in range(0, len(images), batch):
        out = forward_normalized(model, Tensor(images[start : start + batch]))
        outs.append(out.values[:, 0])
    preds = np.concatenate(outs) if outs else np.empty(0)
    return preds * (model.label_max - model.label_min) + model.label_min


def train(
    model: RegressorModel,
    manifest: DatasetManifest,
    cfg: TrainConfig,
    images: np.ndarray | None = None,
) -> tuple[RegressorModel, list[dict]]:
    """Minimize MSE on normalized labels; returns per-epoch RMSE in stress units.

    ``images`` may carry pre-rendered training+validation tiles in manifest
    order to avoid re-rendering across experiments.
    """
    if not manifest.samples:
        raise ContractError("manifest has no samples")
    train_idx = [i for i, s in enumerate(manifest.samples) if s.split == "train"]
    val_idx = [i for i, s in enumerate(manifest.samples) if s.split == "val"]
    if images is None:
        images = render_dataset(manifest.samples, model.resolution)
    labels = np.array([s.label for s in manifest.samples])

    model.label_min = float(labels[train_idx].min())
    model.label_max = float(labels[train_idx].max())
    if not model.label_max > model.label_min:
        raise ContractError("degenerate label range")
    norm_labels = (labels - model.label_min) / (model.label_max - model.label_min)

    opt = ad.make_optimizer(cfg.optimizer, cfg.lr)
    metrics: list[dict] = []
    last_good = model.copy()
    shuffle = rng.CounterStream(cfg.seed)
    for epoch in range(cfg.epochs):
        # deterministic step decay: thirds of the budget at 1x, 0.3x, 0.1x
        stage = 3 * epoch // max(cfg.epochs, 1)
        opt.lr = cfg.lr * (1.0, 0.3, 0.1)[stage]
        order = list(train_idx)
        shuffle.shuffle(order)
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            x = Tensor(images[batch])
            out = forward_normalized(model, x)
            loss = ad.mse(out, norm_labels[batch][:, None])
            if not np.isfinite(loss.values):
                raise TrainingDivergedError(f"loss diverged at epoch {epoch}", last_good)
            grads = ad.backprop(loss)
            opt.step(model.params, {k: grads.get(t) for k, t in model.params.items()})
        last_good = model.copy()
        last_good.label_min, last_good.label_max = model.label_min, model.label_max

        train_preds = _batched_predictions(model, images[train_idx])
        val_preds = _batched_predictions(model, images[val_idx]) if val_idx else np.empty(0)
        metrics.append(
            {
                "epoch": epoch,
                "train_rmse": float(np.sqrt(np.mean((train_preds - labels[train_idx]) ** 2))),
                "val_rmse": float(np.sqrt(np.mean((val_preds - labels[val_idx]) ** 2))) if val_idx else float("nan"),
            }
        )
    return model, metrics


def evaluate(model: RegressorModel, manifest: DatasetManifest, split: str,
             images: np.ndarray | None = None) -> dict:
    """RMSE, MAE and per-lot mean error on one split, in stress units."""
    samples = manifest.split_samples(split)
    if not samples:
        raise ContractError(f"split {split!r} is empty")
    if images is None:
        images = render_dataset(samples, model.resolution)
    preds = _batched_predictions(model, images)
    labels = np.array([s.label for s in samples])
    err = preds - labels
    per_lot: dict[str, list[float]] = {}
    for e, s in zip(err, samples):
        per_lot.setdefault(s.lot_id, []).append(float(e))
    return {
        "rmse": float(np.sqrt(np.mean(err**2))),
        "mae": float(np.mean(np.abs(err))),
        "per_lot_mean_error": {k: float(np.mean(v)) for k, v in sorted(per_lot.items())},
    }
