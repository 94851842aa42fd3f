"""``seetrack`` command line: run | bench | search | eval | init.

Exit status: 0 on success, 2 on validation errors, 1 on I/O errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import statistics
import sys
import time
from pathlib import Path

import numpy as np

from . import container, engine, events, head, metrics, search, sim
from .errors import ArgumentError, SeeError
from .model import ModelSpec, Model, init_float_model, quantize_model

DEFAULT_WINDOW_US = 10_000


# -- shared helpers ----------------------------------------------------------------

def _event_format(path: str, fmt: str | None) -> str:
    if fmt:
        return fmt
    return "csv" if path.lower().endswith((".csv", ".txt")) else "binary"


def voxel_config(model: Model, bins: int | None = None, polarity: str | None = None) -> events.VoxelGridConfig:
    v = model.voxel
    bins = bins or int(v.get("bins", model.spec.input_channels))
    polarity = polarity or v.get("polarity_mode", "merged")
    cfg = events.VoxelGridConfig(model.spec.height, model.spec.width, bins, polarity)
    if cfg.channels != model.spec.input_channels:
        raise ArgumentError(f"voxel grid gives {cfg.channels} channels, model expects {model.spec.input_channels}")
    return cfg


def load_clips(events_path: str, model: Model, fmt: str | None = None, window_us: int | None = None,
               t0: int | None = None, height: int | None = None, width: int | None = None):
    """Parse, slice and voxelize an event file for ``model``; geometry defaults to the model's."""
    h = height or model.spec.height
    w = width or model.spec.width
    if (h, w) != (model.spec.height, model.spec.width):
        raise ArgumentError(f"geometry {h}x{w} does not match model input {model.spec.height}x{model.spec.width}")
    data = Path(events_path).read_bytes()
    ev = events.parse_events(data, _event_format(events_path, fmt), (h, w))
    window = window_us or int(model.voxel.get("window_us", DEFAULT_WINDOW_US))
    start = t0 if t0 is not None else (int(ev["t"][0]) if len(ev) else 0)
    clips = events.slice_clips(ev, window, start, (h, w))
    cfg = voxel_config(model)
    return [events.voxelize(c, cfg) for c in clips]


def format_predictions(preds) -> str:
    lines = ["clip_index,px,py"]
    lines += [f"{i},{px:.6f},{py:.6f}" for i, (px, py) in enumerate(preds)]
    return "\n".join(lines) + "\n"


def read_points_csv(text: str, what: str) -> dict[int, tuple[float, float, bool]]:
    rows = list(csv.DictReader(io.StringIO(text)))
    out = {}
    for n, r in enumerate(rows, start=2):
        try:
            idx = int(r["clip_index"])
            valid = str(r.get("valid", "1") or "1").strip().lower() not in ("0", "false", "no")
            out[idx] = (float(r["px"]), float(r["py"]), valid)
        except (KeyError, TypeError, ValueError) as e:
            raise ArgumentError(f"{what} CSV line {n}: expected clip_index,px,py") from e
    return out


# -- commands ---------------------------------------------------------------------

def cmd_run(args) -> int:
    model = container.load(args.weights)
    clips = load_clips(args.events, model, args.format, args.window_us, args.t0, args.height, args.width)
    preds, _ = head.run_sequence(model, clips)
    _write(args.output, format_predictions(preds))
    return 0


def cmd_bench(args) -> int:
    model = container.load(args.weights)
    clips = load_clips(args.events, model, args.format, args.window_us, args.t0, args.height, args.width)
    dense = args.mode == "dense"
    times = []
    counter = engine.OpCounter()
    preds = []
    for r in range(max(1, args.repeats)):
        c = counter if r == 0 else None
        for x in clips:
            t0 = time.perf_counter()
            p, _ = head.run_sequence(model, [x], dense=dense, counter=c)
            times.append(time.perf_counter() - t0)
            if r == 0:
                preds.extend(p)
    report = {
        "mode": args.mode,
        "clips": len(clips),
        "repeats": max(1, args.repeats),
        "mean_s_per_clip": statistics.fmean(times) if times else 0.0,
        "median_s_per_clip": statistics.median(times) if times else 0.0,
        "macs": counter.macs,
        "macs_per_clip": counter.macs / len(clips) if clips else 0.0,
        "float_ops_backbone": counter.float_ops,
    }
    _write(args.output, json.dumps(report, indent=1, sort_keys=True) + "\n")
    if args.predictions:
        Path(args.predictions).write_text(format_predictions(preds))
    return 0


def cmd_search(args) -> int:
    space = search.SearchSpace.from_dict(_read_json(args.space)) if args.space else search.SearchSpace()
    hw = sim.HwConfig.from_dict(_read_json(args.hw)) if args.hw else sim.HwConfig()
    cands = search.search_run(space, hw, args.cap, search.profile_at(args.density), args.n, args.seed,
                              threads=args.threads)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "candidates.csv").write_text(search.format_candidates(cands))
    specs = {c.spec_hash: c.spec.to_dict() for c in cands}
    (out / "specs.json").write_text(json.dumps(specs, indent=1, sort_keys=True) + "\n")
    acc = None
    if args.accuracy:
        acc = search.read_accuracy_csv(Path(args.accuracy).read_text())
    elif args.synthetic_accuracy:
        acc = {c.spec_hash: search.synthetic_accuracy(c.spec, args.seed) for c in cands}
        (out / "accuracy.csv").write_text(
            "spec_hash,accuracy\n" + "".join(f"{h},{a:.6f}\n" for h, a in acc.items()))
        acc = search.read_accuracy_csv((out / "accuracy.csv").read_text())
    if acc is not None:
        front = search.pareto_front(search.with_accuracy(cands, acc))
        (out / "frontier.csv").write_text(search.format_candidates(front))
    print(f"{len(cands)} feasible candidates written to {out}")
    return 0


def cmd_eval(args) -> int:
    pred = read_points_csv(Path(args.pred).read_text(), "prediction")
    gt = read_points_csv(Path(args.gt).read_text(), "ground-truth")
    if set(pred) != set(gt):
        missing = sorted(set(pred) ^ set(gt))[:5]
        raise ArgumentError(f"clip indices differ between files (e.g. {missing})")
    samples = [metrics.LabeledPrediction((gt[i][0], gt[i][1]), (pred[i][0], pred[i][1]), gt[i][2])
               for i in sorted(gt)]
    ks = [float(k) for k in args.k.split(",") if k.strip()]
    print(metrics.report(samples, ks))
    return 0


def cmd_init(args) -> int:
    spec = ModelSpec.from_dict(_read_json(args.spec))
    rng = np.random.default_rng(args.seed)
    cfg = events.VoxelGridConfig(spec.height, spec.width, args.bins, args.polarity)
    voxel = {**cfg.to_dict(), "window_us": args.window_us}
    model = init_float_model(spec, rng, voxel)
    if args.mode == "int8":
        if not args.calibration:
            raise ArgumentError("int8 weights need --calibration events")
        calib = load_clips(args.calibration, model, window_us=args.window_us)
        model = quantize_model(model, [c for c in calib if c.nnz] or calib)
    container.save(model, args.output)
    return 0


# -- plumbing ---------------------------------------------------------------------

def _read_json(path: str) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise ArgumentError(f"{path}: invalid JSON ({e})") from e


def _write(path: str | None, text: str) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="seetrack", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def clip_flags(sp):
        sp.add_argument("events")
        sp.add_argument("weights")
        sp.add_argument("--format", choices=["binary", "csv"], help="event file format (default: by extension)")
        sp.add_argument("--height", type=int)
        sp.add_argument("--width", type=int)
        sp.add_argument("--window-us", type=int, help="clip length (default: from the weight container)")
        sp.add_argument("--t0", type=int, help="start of the first clip (default: first event)")
        sp.add_argument("-o", "--output", default="-")

    r = sub.add_parser("run", help="predict eye centres, one CSV row per clip")
    clip_flags(r)
    r.set_defaults(func=cmd_run)

    b = sub.add_parser("bench", help="time sparse or dense inference")
    clip_flags(b)
    b.add_argument("--repeats", type=int, default=1)
    b.add_argument("--mode", choices=["sparse", "dense"], default="sparse")
    b.add_argument("--predictions", help="also write the first repeat's predictions here")
    b.set_defaults(func=cmd_bench)

    s = sub.add_parser("search", help="sample subnets and keep the feasible ones")
    s.add_argument("--space", help="search space JSON")
    s.add_argument("--hw", help="hardware config JSON")
    s.add_argument("-n", type=int, default=100)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--cap", type=float, default=float("inf"), help="latency cap in seconds")
    s.add_argument("--density", type=float, default=0.05, help="input density for the latency profile")
    s.add_argument("--threads", type=int, help="worker count (default: SEE_THREADS or 1)")
    s.add_argument("--accuracy", help="CSV spec_hash,accuracy to join; enables frontier.csv")
    s.add_argument("--synthetic-accuracy", action="store_true",
                   help="score candidates with the built-in synthetic accuracy model")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_search)

    e = sub.add_parser("eval", help="p-k accuracy and mean distance")
    e.add_argument("pred")
    e.add_argument("gt")
    e.add_argument("--k", default="5,10", help="comma-separated pixel thresholds")
    e.set_defaults(func=cmd_eval)

    i = sub.add_parser("init", help="write a randomly initialised weight container")
    i.add_argument("--spec", required=True, help="model spec JSON")
    i.add_argument("--seed", type=int, default=0)
    i.add_argument("--bins", type=int, default=3)
    i.add_argument("--polarity", choices=["merged", "split"], default="merged")
    i.add_argument("--window-us", type=int, default=DEFAULT_WINDOW_US)
    i.add_argument("--mode", choices=["int8", "float"], default="int8")
    i.add_argument("--calibration", help="event file used to calibrate activation scales")
    i.add_argument("-o", "--output", required=True)
    i.set_defaults(func=cmd_init)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SeeError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"I/O error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
