"""Command-line entry point for the full workflow.

Exit codes: 0 success, 1 runtime error, 2 usage error.  Attribute flags are
comma-separated 4-tuples in the order size,porosity,dispersity,facetness;
grids are start:stop:count.  KNOBLAB_SEED overrides the default master seed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import explain, persist, regressor, synthgen, worldmodel

DEFAULT_MASTER_SEED = 7


def _default_seed() -> int:
    return int(os.environ.get("KNOBLAB_SEED", DEFAULT_MASTER_SEED))


def _parse_attrs(text: str) -> synthgen.AttributeVector:
    parts = text.split(",")
    if len(parts) != 4:
        raise argparse.ArgumentTypeError("expected 4 comma-separated values: size,porosity,dispersity,facetness")
    try:
        return synthgen.AttributeVector(*(float(p) for p in parts))
    except (ValueError, synthgen.AttributeRangeError) as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _parse_grid(text: str) -> list[float]:
    try:
        start, stop, count = text.split(":")
        grid = np.linspace(float(start), float(stop), int(count))
    except ValueError as exc:
        raise argparse.ArgumentTypeError("expected start:stop:count") from exc
    return [float(g) for g in grid]


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="knoblab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-data", help="generate the synthetic lot world and manifest")
    p.add_argument("--lots", type=int, default=30)
    p.add_argument("--tiles", type=int, default=200)
    p.add_argument("--seed", type=int, default=_default_seed())
    p.add_argument("--jitter", type=float, default=0.02)
    p.add_argument("--noise-sd", type=float, default=1.0)
    p.add_argument("--out", required=True, help="output directory for manifest.json")

    p = sub.add_parser("train", help="train the stress regressor on a manifest")
    p.add_argument("--data", required=True, help="directory containing manifest.json")
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--lr", type=float, default=3e-3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--optimizer", choices=("sgd", "adam"), default="adam")
    p.add_argument("--resolution", type=int, default=64)
    p.add_argument("--out", required=True, help="output checkpoint path (.knob)")

    p = sub.add_parser("predict", help="predict stress for a seed + attribute vector")
    p.add_argument("--model", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--attrs", type=_parse_attrs, required=True)

    p = sub.add_parser("render", help="render a seed + attribute vector to an image file")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--attrs", type=_parse_attrs, required=True)
    p.add_argument("--resolution", type=int, default=64)
    p.add_argument("--out", required=True, help="output path (.pgm or .png)")

    p = sub.add_parser("sweep", help="forward sensitivity sweep over one attribute")
    p.add_argument("--model", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--attrs", type=_parse_attrs, required=True)
    p.add_argument("--index", type=int, required=True, choices=range(4))
    p.add_argument("--grid", type=_parse_grid, default="0.1:0.9:9")
    p.add_argument("--json", dest="json_out", help="write SweepResult JSON here")

    p = sub.add_parser("counterfactual", help="solve for attribute changes toward a target stress")
    p.add_argument("--model", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--attrs", type=_parse_attrs, required=True)
    p.add_argument("--target", type=float, required=True)
    p.add_argument("--lambda", dest="lam", type=float, default=1.0)
    p.add_argument("--norm", type=int, choices=(1, 2), default=2)
    p.add_argument("--step-size", type=float, default=0.05)
    p.add_argument("--max-iters", type=int, default=300)
    p.add_argument("--json", dest="json_out", help="write CounterfactualReport JSON here")

    sub.add_parser("gradcheck", help="run the finite-difference gradient suite")

    p = sub.add_parser("serve", help="start the HTTP service")
    p.add_argument("--model")
    p.add_argument("--data", help="directory containing manifest.json")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)

    return parser


def _cmd_synth_data(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = worldmodel.make_world(args.lots, args.tiles, args.jitter, args.noise_sd, args.seed)
    persist.write_manifest(manifest, out_dir / "manifest.json")
    print(f"wrote {len(manifest.samples)} samples across {len(manifest.lots)} lots to {out_dir / 'manifest.json'}")
    return 0


def _cmd_train(args) -> int:
    manifest = persist.read_manifest(Path(args.data) / "manifest.json")
    model = regressor.init_model(args.resolution, args.seed)
    cfg = regressor.TrainConfig(args.epochs, args.batch_size, args.lr, args.seed, args.optimizer)
    model, metrics = regressor.train(model, manifest, cfg)
    persist.save_model(model, args.out)
    for m in metrics:
        print(f"epoch {m['epoch']:3d}  train RMSE {m['train_rmse']:7.3f}  val RMSE {m['val_rmse']:7.3f}")
    print(f"saved checkpoint to {args.out}")
    return 0


def _cmd_predict(args) -> int:
    model = persist.load_model(args.model)
    image = synthgen.render_edit(args.seed, args.attrs, model.resolution)
    print(json.dumps({"stress": regressor.predict(model, image)}))
    return 0


def _cmd_render(args) -> int:
    fmt = Path(args.out).suffix.lstrip(".").lower() or "pgm"
    image = synthgen.render_edit(args.seed, args.attrs, args.resolution)
    persist.export_image(image, args.out, fmt)
    print(f"wrote {args.resolution}x{args.resolution} {fmt} image to {args.out}")
    return 0


def _cmd_sweep(args) -> int:
    model = persist.load_model(args.model)
    grid = args.grid if isinstance(args.grid, list) else _parse_grid(args.grid)
    result = explain.forward_sweep(model, args.seed, args.attrs, args.index, grid)
    text = result.to_json()
    if args.json_out:
        Path(args.json_out).write_text(text, encoding="utf-8")
    print(text, end="")
    return 0


def _cmd_counterfactual(args) -> int:
    model = persist.load_model(args.model)
    cfg = explain.CounterfactualConfig(
        lam=args.lam, norm_order=args.norm, step_size=args.step_size, max_iters=args.max_iters
    )
    report = explain.counterfactual(model, args.seed, args.attrs, args.target, cfg)
    text = report.to_json()
    if args.json_out:
        Path(args.json_out).write_text(text, encoding="utf-8")
    print(text, end="")
    return 0


def _cmd_gradcheck(args) -> int:
    worst = 0.0
    rng = np.random.default_rng(0)
    checks = [
        ("mul", lambda t: ad.tsum(ad.mul(t, t))),
        ("exp", lambda t: ad.tsum(ad.exp(t))),
        ("tanh", lambda t: ad.tsum(ad.tanh(t))),
        ("sigmoid", lambda t: ad.tsum(ad.sigmoid(t))),
        ("p-norm", lambda t: ad.pnorm(t, 2)),
        ("mse", lambda t: ad.mse(t, np.zeros(t.shape))),
    ]
    for name, fn in checks:
        report = ad.finite_diff_check(fn, rng.uniform(0.5, 1.5, size=8))
        print(f"{name:12s} max relative error {report.max_rel_error:.3e}")
        worst = max(worst, report.max_rel_error)

    layout = synthgen.layout_from_seed(123)

    def render_mean(t):
        img = synthgen.render_tensors(layout, *(ad.pick(t, i) for i in range(4)), 32)
        return ad.tmean(img)

    report = ad.finite_diff_check(render_mean, np.array([0.4, 0.6, 0.3, 0.7]))
    print(f"{'render':12s} max relative error {report.max_rel_error:.3e}")
    worst = max(worst, report.max_rel_error)
    print(f"overall max relative error {worst:.3e}")
    return 0 if worst < 1e-3 else 1


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    manifest_path = str(Path(args.data) / "manifest.json") if args.data else None
    app = create_app(args.model, manifest_path)
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


_COMMANDS = {
    "synth-data": _cmd_synth_data,
    "train": _cmd_train,
    "predict": _cmd_predict,
    "render": _cmd_render,
    "sweep": _cmd_sweep,
    "counterfactual": _cmd_counterfactual,
    "gradcheck": _cmd_gradcheck,
    "serve": _cmd_serve,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ad.AutodiffError, persist.PersistError, synthgen.AttributeRangeError,
            regressor.TrainingDivergedError, OSError, ValueError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
