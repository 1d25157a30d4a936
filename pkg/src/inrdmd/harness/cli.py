"""Command-line entry point.

Exit codes: 0 success, 1 user error (bad flags, inputs or files), 2 internal error.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import traceback

import numpy as np

from ..autodiff import DivergenceError
from ..data import Grid, TrajectorySet
from ..inr_dmd.training import ABLATIONS, TrainConfig, train_all
from ..numerics import IllConditionedBasisError
from ..solvers.benchmarks import BENCHMARKS, PRESETS, generate_benchmark, preset_config
from .evaluate import evaluate_checkpoint, evaluate_dmd, fit_pooled_dmd
from .export import export_modes, export_spectrum, write_rows
from .io import (CorruptFileError, VersionMismatchError, load_checkpoint, load_dataset,
                 save_checkpoint, save_dataset)
from .timing import time_per_frame

log = logging.getLogger("inrdmd")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _floats(text: str) -> np.ndarray:
    try:
        return np.array([float(v) for v in text.split(",") if v.strip()], dtype=np.float64)
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from None


def _grid_pairs(text: str) -> list[tuple[float, float]]:
    pairs = []
    for item in text.split(";"):
        v = _floats(item)
        if len(v) != 2:
            raise UsageError(f"grid entries are 'alpha,beta' pairs separated by ';', got {item!r}")
        pairs.append((float(v[0]), float(v[1])))
    return pairs


def _overrides(items) -> dict:
    out = {}
    for item in items or []:
        key, sep, val = item.partition("=")
        if not sep:
            raise UsageError(f"--set expects key=value, got {item!r}")
        try:
            out[key] = json.loads(val)
        except json.JSONDecodeError:
            out[key] = val
    return out


def _write_json(path, doc) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)


# --- subcommands --------------------------------------------------------------------

def cmd_generate(a) -> int:
    cfg = preset_config(a.benchmark, a.preset, **_overrides(a.set))
    if a.seed is not None:
        cfg["seed"] = a.seed
    ts = generate_benchmark(a.benchmark, cfg)
    ts.meta["preset"] = a.preset
    save_dataset(ts, a.out)
    print(f"wrote {a.out}: {ts.n_traj} trajectories x {ts.n_time} frames, grid {ts.grid.dims}")
    return 0


def train_config(a) -> TrainConfig:
    kw = dict(n_pairs=a.modes, alpha=a.alpha, beta=a.beta, epochs=a.epochs, seed=a.seed,
              ablation=a.ablate or "none")
    for name in ("batch_size", "window", "phi_width", "phi_layers", "lam_width", "lam_layers",
                 "lr_phi", "lr_lambda", "long_stride"):
        v = getattr(a, name)
        if v is not None:
            kw[name] = v
    return TrainConfig(**kw)


def cmd_train(a) -> int:
    ts = load_dataset(a.data)
    ckpt = train_all(ts, train_config(a))
    ckpt.meta["data"] = os.path.basename(a.data)
    save_checkpoint(ckpt, a.out)
    print(f"wrote {a.out}: {len(ckpt.model.stages)} stages, {ckpt.model.n_params} parameters")
    return 0


def _match_code(ts: TrajectorySet, code: np.ndarray) -> int:
    if code.size != ts.code_dim:
        raise UsageError(f"code has {code.size} entries, dataset codes have {ts.code_dim}")
    d = np.max(np.abs(ts.codes - code), axis=1)
    i = int(np.argmin(d))
    if d[i] > 1e-9 * max(1.0, float(np.max(np.abs(code)))):
        raise UsageError(f"no trajectory in the dataset has code {code.tolist()}")
    return i


def cmd_rollout(a) -> int:
    ckpt = load_checkpoint(a.ckpt)
    ts = load_dataset(a.data)
    i = _match_code(ts, _floats(a.code))
    if not 0 <= a.init_frame < ts.n_time:
        raise UsageError(f"--init-frame must lie in [0, {ts.n_time - 1}]")
    if a.horizon < 0:
        raise UsageError("--horizon must be non-negative")
    fluid = ts.fluid(i)
    u0 = ts.flat(i)[a.init_frame].ravel()
    times = np.arange(a.horizon + 1) * ts.dt
    pred = ckpt.model.forecast(ts.grid.points()[fluid], ts.codes[i], u0, times)
    out = np.zeros((1, len(times), ts.n_channels, ts.grid.size))
    out[0][:, :, fluid] = pred.reshape(len(times), ts.n_channels, -1)
    mask = None if ts.mask is None else ts.mask[i:i + 1]
    res = TrajectorySet(out.reshape((1, len(times), ts.n_channels) + ts.grid.dims), ts.codes[i:i + 1],
                        ts.dt, ts.grid, list(ts.channels), mask, ["forecast"],
                        {"source": os.path.basename(a.data), "trajectory": i,
                         "init_frame": a.init_frame, "t0": a.init_frame * ts.dt})
    save_dataset(res, a.out)
    print(f"wrote {a.out}: {len(times)} frames from frame {a.init_frame} of trajectory {i}")
    return 0


def cmd_eval(a) -> int:
    report = evaluate_checkpoint(load_checkpoint(a.ckpt), load_dataset(a.data), a.split, a.repeats)
    _write_json(a.report, report)
    print(f"aggregate rMSE {report['aggregate_rmse']:.6e} over {len(report['trajectories'])} trajectories")
    return 0


def cmd_dmd(a) -> int:
    ts = load_dataset(a.data)
    model = fit_pooled_dmd(ts, a.rank, a.split)
    _write_json(a.out, model.to_dict())
    msg = f"wrote {a.out}: rank {model.rank}"
    if a.report:
        report = evaluate_dmd(model, ts, a.eval_split)
        _write_json(a.report, report)
        msg += f", {a.eval_split} rMSE {report['aggregate_rmse']:.6e}"
    print(msg)
    return 0


def cmd_sweep(a) -> int:
    ts = load_dataset(a.data)
    rows = []
    for alpha, beta in _grid_pairs(a.alpha_beta_grid):
        path = a.ckpt_template.format(alpha=alpha, beta=beta)
        if os.path.exists(path):
            ckpt = load_checkpoint(path)
        elif a.train_missing:
            a.alpha, a.beta = alpha, beta
            ckpt = train_all(ts, train_config(a))
            save_checkpoint(ckpt, path)
        else:
            raise UsageError(f"missing checkpoint {path} (pass --train-missing to fit it)")
        rep = evaluate_checkpoint(ckpt, ts, a.split, repeats=1)
        rows.append([alpha, beta, rep["aggregate_rmse"], path])
    write_rows(a.out, ["alpha", "beta", "rmse", "checkpoint"], rows)
    print(f"wrote {a.out}: {len(rows)} rows")
    return 0


def cmd_export_modes(a) -> int:
    ckpt = load_checkpoint(a.ckpt)
    if a.data:
        ts = load_dataset(a.data)
        grid, channels = ts.grid, list(ts.channels)
        mask = None if ts.mask is None else ts.mask[_match_code(ts, _floats(a.code))]
    else:
        grid, channels, mask = Grid.from_dict(ckpt.meta["grid"]), ckpt.meta.get("channels"), None
    pts = grid.points() if mask is None else grid.points()[~mask.ravel()]
    names = ["x", "y", "z"][:grid.ndim]
    export_modes(ckpt.model, pts, _floats(a.code), a.out, names, channels)
    msg = f"wrote {a.out}: {len(pts)} points"
    if a.spectrum_out:
        codes = _floats(a.code)[None, :] if not a.codes else [_floats(c) for c in a.codes.split(";")]
        export_spectrum(ckpt.model, codes, a.spectrum_out)
        msg += f"; {a.spectrum_out}: {len(codes)} codes"
    print(msg)
    return 0


def cmd_bench(a) -> int:
    ckpt = load_checkpoint(a.ckpt)
    norm = ckpt.model.normalizer
    grid = Grid.from_dict(ckpt.meta["grid"])
    code = _floats(a.code) if a.code else 0.5 * (norm.code_lo + norm.code_hi)
    pts = grid.points()
    bank = ckpt.model.bank(pts, code)
    omega = ckpt.model.spectrum(code)
    u0 = np.random.default_rng(0).standard_normal(bank.shape[0])
    times = np.arange(a.frames) * norm.dt
    ms = time_per_frame(bank, omega, u0, times, a.repeats)
    print(json.dumps({"cells": grid.size, "rank": int(bank.shape[1]), "frames": a.frames,
                      "per_frame_ms": ms, "n_params": ckpt.model.n_params}))
    return 0


# --- parser -------------------------------------------------------------------------

def _train_flags(p, required: bool) -> None:
    p.add_argument("--modes", type=int, default=2, help="number of mode pairs P")
    if required:
        p.add_argument("--alpha", type=float, default=0.9)
        p.add_argument("--beta", type=float, default=0.1)
    p.add_argument("--epochs", type=int, default=500, help="epochs per stage")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ablate", choices=[x for x in ABLATIONS if x != "none"], default=None)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--window", type=int)
    p.add_argument("--phi-width", type=int)
    p.add_argument("--phi-layers", type=int)
    p.add_argument("--lam-width", type=int)
    p.add_argument("--lam-layers", type=int)
    p.add_argument("--lr-phi", type=float)
    p.add_argument("--lr-lambda", type=float)
    p.add_argument("--long-stride", type=int)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="inrdmd", description="Neural implicit DMD toolkit")
    ap.add_argument("-v", "--verbose", action="store_true", help="log training progress")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", help="simulate a benchmark dataset")
    p.add_argument("--benchmark", required=True, choices=BENCHMARKS)
    p.add_argument("--preset", default="desk", choices=sorted({k for v in PRESETS.values() for k in v}))
    p.add_argument("--seed", type=int)
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a preset entry")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_generate)

    p = sub.add_parser("train", help="fit a model on the training split")
    p.add_argument("--data", required=True)
    _train_flags(p, True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("rollout", help="forecast from one frame of a dataset trajectory")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True, help="dataset holding the initial frame")
    p.add_argument("--code", required=True, help="comma-separated physics code")
    p.add_argument("--init-frame", type=int, default=0)
    p.add_argument("--horizon", type=int, required=True, help="frames to forecast")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_rollout)

    p = sub.add_parser("eval", help="score a checkpoint and write a JSON report")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--report", required=True)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("dmd", help="fit pooled classic DMD")
    p.add_argument("--data", required=True)
    p.add_argument("--rank", type=int, required=True)
    p.add_argument("--split", default="train", help="trajectories to fit on")
    p.add_argument("--out", required=True, help="model JSON")
    p.add_argument("--report", help="optional JSON report on --eval-split")
    p.add_argument("--eval-split", default="test")
    p.set_defaults(fn=cmd_dmd)

    p = sub.add_parser("sweep", help="rMSE over a grid of loss weights")
    p.add_argument("--data", required=True)
    p.add_argument("--ckpt-template", required=True, help="path with {alpha} and {beta} fields")
    p.add_argument("--alpha-beta-grid", default="0,1;0.25,0.75;0.5,0.5;0.75,0.25;1,0")
    p.add_argument("--split", default="test")
    p.add_argument("--train-missing", action="store_true")
    _train_flags(p, False)
    p.add_argument("--out", required=True, help="CSV")
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("export-modes", help="write learned modes and spectra as CSV")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--code", required=True)
    p.add_argument("--data", help="dataset supplying the grid and solid mask")
    p.add_argument("--out", required=True)
    p.add_argument("--spectrum-out")
    p.add_argument("--codes", help="';'-separated codes for the spectrum table")
    p.set_defaults(fn=cmd_export_modes)

    p = sub.add_parser("bench", help="time per-frame inference")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--code")
    p.add_argument("--frames", type=int, default=200)
    p.add_argument("--repeats", type=int, default=5)
    p.set_defaults(fn=cmd_bench)
    return ap


_USER_ERRORS = (UsageError, FileNotFoundError, IsADirectoryError, PermissionError, CorruptFileError,
                VersionMismatchError, KeyError, ValueError, IllConditionedBasisError, DivergenceError)


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s")
    try:
        return args.fn(args)
    except _USER_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception:
        traceback.print_exc()
        return 2


if __name__ == "__main__":
    sys.exit(main())
