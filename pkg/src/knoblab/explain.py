"""Forward sensitivity sweeps and counterfactual attribute optimization.

The counterfactual solves, by projected gradient descent over the four
attributes only,

    J(A') = lambda * (normalized prediction(A') - normalized target)^2
            + mean-per-pixel p-norm distance(image(A), image(A'))

with the candidate clamped into [0, 1]^4 after every step and step-size
halving whenever a step would increase the objective.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import synthgen
from .autodiff import ContractError, Tensor
from .regressor import RegressorModel, predict, predict_graph
from .synthgen import ATTRIBUTE_NAMES, AttributeVector, layout_from_seed, render
from .worldmodel import DatasetManifest

REPORT_SCHEMA_VERSION = 1
_MIN_STEP = 1e-10


@dataclass
class CounterfactualConfig:
    lam: float = 1.0
    norm_order: int = 2
    step_size: float = 0.05
    max_iters: int = 300
    tol: float = 1e-7

    def __post_init__(self):
        if self.lam < 0:
            raise ContractError("lambda must be nonnegative")
        if self.norm_order not in (1, 2):
            raise ContractError("norm order must be 1 or 2")
        if self.step_size <= 0 or self.max_iters < 1 or self.tol <= 0:
            raise ContractError("step size, max iterations and tolerance must be positive")


@dataclass
class CounterfactualReport:
    seed: int
    initial_attrs: AttributeVector
    final_attrs: AttributeVector
    initial_prediction: float
    target: float
    achieved_prediction: float
    objective_trajectory: list[float]
    iterations: int
    converged: bool
    config: CounterfactualConfig

    @property
    def deltas(self) -> np.ndarray:
        return self.final_attrs.as_array() - self.initial_attrs.as_array()

    def to_dict(self) -> dict:
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "seed": self.seed,
            "initial_attrs": dict(zip(ATTRIBUTE_NAMES, self.initial_attrs.as_array().tolist())),
            "final_attrs": dict(zip(ATTRIBUTE_NAMES, self.final_attrs.as_array().tolist())),
            "deltas": dict(zip(ATTRIBUTE_NAMES, self.deltas.tolist())),
            "initial_prediction": self.initial_prediction,
            "target": self.target,
            "achieved_prediction": self.achieved_prediction,
            "objective_trajectory": self.objective_trajectory,
            "iterations": self.iterations,
            "converged": self.converged,
            "config": {
                "lambda": self.config.lam,
                "norm_order": self.config.norm_order,
                "step_size": self.config.step_size,
                "max_iters": self.config.max_iters,
                "tol": self.config.tol,
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


@dataclass
class SweepResult:
    attr_index: int
    grid: list[float]
    predictions: list[float]
    fixed_attrs: AttributeVector

    def to_dict(self) -> dict:
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "attr_index": self.attr_index,
            "attr_name": ATTRIBUTE_NAMES[self.attr_index],
            "grid": self.grid,
            "predictions": self.predictions,
            "fixed_attrs": dict(zip(ATTRIBUTE_NAMES, self.fixed_attrs.as_array().tolist())),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def forward_sweep(
    model: RegressorModel,
    seed: int,
    attrs: AttributeVector,
    attr_index: int,
    grid: list[float],
) -> SweepResult:
    """Predictions along one attribute axis with the other three fixed."""
    if not 0 <= attr_index < 4:
        raise ContractError(f"attribute index {attr_index} out of range 0..3")
    if any(not 0.0 <= g <= 1.0 for g in grid):
        raise ContractError("grid values must lie in [0, 1]")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ContractError("grid must be strictly increasing")
    layout = layout_from_seed(seed)
    preds = [
        predict(model, render(layout, attrs.replace(attr_index, g), model.resolution))
        for g in grid
    ]
    return SweepResult(attr_index, [float(g) for g in grid], preds, attrs)


def objective(
    candidate: AttributeVector,
    seed: int,
    base_attrs: AttributeVector,
    target: float,
    model: RegressorModel,
    cfg: CounterfactualConfig,
    _base_image: np.ndarray | None = None,
) -> tuple[float, np.ndarray]:
    """Objective value and its gradient with respect to the candidate attributes."""
    layout = layout_from_seed(seed)
    if _base_image is None:
        _base_image = render(layout, base_attrs, model.resolution).values
    leaves = [Tensor(v, requires_grad=True) for v in candidate.as_array()]
    image = synthgen.render_tensors(layout, *leaves, model.resolution)

    pred_norm = predict_graph(model, image)
    target_norm = model.normalize(target)
    fit_term = ad.mse(pred_norm, np.array([[target_norm]])) * cfg.lam

    diff = ad.sub(image, Tensor(_base_image))
    pixels = _base_image.size
    dist_term = ad.pnorm(diff, cfg.norm_order) * pixels ** (-1.0 / cfg.norm_order)

    total = ad.add(fit_term, dist_term)
    if not np.isfinite(total.values):
        raise ad.NonFiniteError("objective produced a non-finite value")
    grads = ad.backprop(total)
    grad = np.array([float(grads.get(leaf, 0.0)) for leaf in leaves])
    return total.item(), grad


def counterfactual(
    model: RegressorModel,
    seed: int,
    attrs: AttributeVector,
    target: float,
    cfg: CounterfactualConfig | None = None,
) -> CounterfactualReport:
    """Projected gradient descent on the attributes, initialized at ``attrs``."""
    cfg = cfg or CounterfactualConfig()
    if not np.isfinite(target):
        raise ContractError("target stress must be finite")
    layout = layout_from_seed(seed)
    base_image = render(layout, attrs, model.resolution).values
    initial_prediction = predict(model, base_image)

    current = attrs.as_array()
    value, grad = objective(AttributeVector(*current), seed, attrs, target, model, cfg, base_image)
    trajectory = [value]
    converged = False
    iterations = 0
    for iterations in range(1, cfg.max_iters + 1):
        step = cfg.step_size
        while True:
            trial = np.clip(current - step * grad, 0.0, 1.0)
            trial_value, trial_grad = objective(
                AttributeVector(*trial), seed, attrs, target, model, cfg, base_image
            )
            if trial_value <= value or step < _MIN_STEP:
                break
            step *= 0.5
        if trial_value > value:
            converged = True  # no descent direction left: stationary under projection
            break
        improvement = value - trial_value
        current, value, grad = trial, trial_value, trial_grad
        trajectory.append(value)
        if improvement < cfg.tol:
            converged = True
            break

    final = AttributeVector(*current)
    achieved = predict(model, render(layout, final, model.resolution).values)
    return CounterfactualReport(
        seed=seed,
        initial_attrs=attrs,
        final_attrs=final,
        initial_prediction=initial_prediction,
        target=target,
        achieved_prediction=achieved,
        objective_trajectory=trajectory,
        iterations=iterations,
        converged=converged,
        config=cfg,
    )


def attribute_deltas(report: CounterfactualReport) -> list[tuple[str, float]]:
    """Signed per-attribute changes in the fixed display order."""
    return list(zip(ATTRIBUTE_NAMES, report.deltas.tolist()))


@dataclass
class ShiftStats:
    mean_abs_shift: float
    max_abs_shift: float
    histogram_edges: list[float] = field(default_factory=list)
    histogram_counts: list[int] = field(default_factory=list)


def audit_prediction_shift(model: RegressorModel, manifest: DatasetManifest, bins: int = 20) -> ShiftStats:
    """Prediction difference between per-sample renders and lot-nominal re-renders."""
    if not manifest.samples:
        raise ContractError("manifest has no samples")
    lots = {lot.lot_id: lot for lot in manifest.lots}
    shifts = np.empty(len(manifest.samples))
    for i, sample in enumerate(manifest.samples):
        layout = layout_from_seed(sample.sample_seed)
        p_sample = predict(model, render(layout, sample.attrs, model.resolution))
        p_nominal = predict(model, render(layout, lots[sample.lot_id].attrs, model.resolution))
        shifts[i] = p_sample - p_nominal
    counts, edges = np.histogram(shifts, bins=bins)
    return ShiftStats(
        mean_abs_shift=float(np.mean(np.abs(shifts))),
        max_abs_shift=float(np.max(np.abs(shifts))),
        histogram_edges=[float(e) for e in edges],
        histogram_counts=[int(c) for c in counts],
    )
