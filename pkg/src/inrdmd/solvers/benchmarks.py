"""Benchmark datasets: one trajectory per physics code.

Each benchmark has a ``full`` preset (full resolution) and a ``desk``
preset small enough for a single CPU core.  Any preset key can be
overridden by passing a dict.  Trajectories are independent and can be
produced by a process pool whose size is read from ``NDMD_WORKERS``.
"""
from __future__ import annotations

import copy
import os
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from ..data import Grid, TrajectorySet
from .burgers import GrfSpec, burgers_simulate, grf_sample
from .cst import CstParams, cst_airfoil
from .lbm import LbmConfig, lbm_simulate
from .shear import ShearSpec, ns_vorticity_simulate, shear_initial

BENCHMARKS = ("burgers", "double_shear", "karman", "airfoil")


def _alternate(n: int) -> list:
    return ["train" if i % 2 == 0 else "test" for i in range(n)]


PRESETS = {
    "burgers": {
        "full": dict(codes=np.linspace(0.001, 0.1, 19).tolist(), n=1024, n_modes=512,
                      n_steps=200, T=1.0, ic_seed=0, split="alternate"),
        "full-main": dict(codes=np.linspace(0.001, 0.01, 19).tolist(), n=1024, n_modes=512,
                           n_steps=200, T=1.0, ic_seed=0, split="alternate"),
        "desk": dict(codes=np.linspace(0.001, 0.01, 19).tolist(), n=256, n_modes=128,
                     n_steps=99, T=1.0, ic_seed=0, split="alternate"),
    },
    "double_shear": {
        "full": dict(codes=np.linspace(0.2, 0.4, 21).tolist(), dims=(64, 128), nu=1e-3,
                      t_start=2.0, T=10.0, n_frames=160, seed=0, split="alternate"),
        "full-short": dict(codes=np.linspace(0.2, 0.4, 21).tolist(), dims=(64, 128), nu=1e-3,
                            t_start=0.0, T=8.0, n_frames=160, seed=0, split="alternate"),
        "desk": dict(codes=np.linspace(0.2, 0.4, 5).tolist(), dims=(32, 64), nu=2e-3,
                     t_start=2.0, T=6.0, n_frames=40, seed=0, split="alternate"),
    },
    "karman": {
        "full": dict(codes=list(range(70, 91)), nx=201, ny=51, cy=25.0, radius=5.0,
                      inflow=(0.1, 0.0), nu=0.01, n_frames=200, stride=25, warmup=30000,
                      perturbation=1e-3, split="random", n_test=10, split_seed=0),
        "desk": dict(codes=list(range(36, 43)), nx=101, ny=26, cy=12.5, radius=2.5,
                     inflow=(0.1, 0.0), nu=0.01, n_frames=80, stride=20, warmup=14000,
                     perturbation=1e-3, split=[2, 4]),
    },
    "airfoil": {
        "full": dict(nx=256, ny=128, inflow=(0.1, 0.0), nu=0.01, n_train=27, n_test=16,
                      n_frames=200, stride=25, warmup=20000, samples=101, perturbation=1e-3,
                      seed=0),
        "desk": dict(nx=96, ny=48, inflow=(0.1, 0.0), nu=0.01, n_train=4, n_test=2,
                     n_frames=40, stride=20, warmup=4000, samples=81, perturbation=1e-3,
                     seed=0),
    },
}

AIRFOIL_RANGES = {"A_u0": (0.40, 0.50), "A_l0": (-0.20, -0.10), "theta_cw": (0.0, 10.0)}


def preset_config(name: str, preset: str = "desk", **overrides) -> dict:
    if name not in PRESETS:
        raise KeyError(f"unknown benchmark {name!r}; choose from {', '.join(BENCHMARKS)}")
    if preset not in PRESETS[name]:
        raise KeyError(f"unknown preset {preset!r} for {name}; choose from {', '.join(PRESETS[name])}")
    cfg = copy.deepcopy(PRESETS[name][preset])
    unknown = set(overrides) - set(cfg)
    if unknown:
        raise KeyError(f"unknown config keys for {name}: {sorted(unknown)}")
    cfg.update(overrides)
    return cfg


def _split_labels(spec, n: int) -> list:
    if spec == "alternate":
        return _alternate(n)
    if isinstance(spec, (list, tuple)):
        test = set(int(i) for i in spec)
        return ["test" if i in test else "train" for i in range(n)]
    raise ValueError(f"unsupported split {spec!r}")


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("NDMD_WORKERS", "1")))
    except ValueError:
        return 1


def _map(fn, items):
    items = list(items)
    n = min(_workers(), len(items))
    if n <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


# --- Burgers ----------------------------------------------------------------

def _burgers_one(args):
    nu, u0, cfg = args
    grid = Grid((cfg["n"],), (1.0,), (True,))
    return burgers_simulate(u0, nu, cfg["T"], cfg["n_steps"], grid)


def _burgers(cfg: dict) -> TrajectorySet:
    grid = Grid((cfg["n"],), (1.0,), (True,))
    # one initial condition shared by every viscosity
    u0 = grf_sample(GrfSpec(n_modes=cfg["n_modes"], seed=cfg["ic_seed"]), grid)
    trajs = _map(_burgers_one, [(nu, u0, cfg) for nu in cfg["codes"]])
    fields = np.stack(trajs)[:, :, None, :]
    return TrajectorySet(fields=fields, codes=np.asarray(cfg["codes"])[:, None],
                         dt=cfg["T"] / cfg["n_steps"], grid=grid, channels=["u"],
                         split=_split_labels(cfg["split"], len(cfg["codes"])))


# --- double shear -------------------------------------------------------------

def _shear_grid(cfg) -> Grid:
    return Grid(tuple(cfg["dims"]), (1.0, 2.0), (True, True))


def _shear_one(args):
    i, s, cfg = args
    grid = _shear_grid(cfg)
    om0 = shear_initial(ShearSpec(separation=s, seed=cfg["seed"] + i), grid)
    _, traj = ns_vorticity_simulate(om0, cfg["nu"], cfg["T"], cfg["n_frames"], grid,
                                    t_start=cfg["t_start"])
    return traj


def _double_shear(cfg: dict) -> TrajectorySet:
    grid = _shear_grid(cfg)
    trajs = _map(_shear_one, [(i, s, cfg) for i, s in enumerate(cfg["codes"])])
    dt = (cfg["T"] - cfg["t_start"]) / (cfg["n_frames"] - 1)
    return TrajectorySet(fields=np.stack(trajs)[:, :, None], codes=np.asarray(cfg["codes"])[:, None],
                         dt=dt, grid=grid, channels=["vorticity"],
                         split=_split_labels(cfg["split"], len(cfg["codes"])))


# --- LBM benchmarks -------------------------------------------------------------

def _initial_velocity(cfg: dict):
    """Uniform inflow plus a small transverse bump that breaks the
    up-down symmetry so shedding starts within the warmup."""
    ny, nx = cfg["ny"], cfg["nx"]
    ux = np.full((ny, nx), cfg["inflow"][0])
    uy = np.full((ny, nx), cfg["inflow"][1])
    uy[1:-1] += cfg["perturbation"] * np.sin(np.pi * np.arange(nx) / nx)
    return ux, uy


def _lbm_one(args):
    cfg, cylinder, mask = args
    lc = LbmConfig(nx=cfg["nx"], ny=cfg["ny"], inflow=tuple(cfg["inflow"]), nu=cfg["nu"],
                   cylinder=cylinder, obstacle_mask=mask, n_frames=cfg["n_frames"],
                   stride=cfg["stride"], warmup=cfg["warmup"], u0=_initial_velocity(cfg))
    out = lbm_simulate(lc)
    return out["speed"], out["mask"]


def _lbm_grid(cfg) -> Grid:
    return Grid((cfg["ny"], cfg["nx"]), (cfg["ny"] - 1.0, cfg["nx"] - 1.0), (False, False))


def _karman(cfg: dict) -> TrajectorySet:
    codes = np.asarray(cfg["codes"], dtype=float)
    jobs = [(cfg, (float(cx), cfg["cy"], cfg["radius"]), None) for cx in codes]
    res = _map(_lbm_one, jobs)
    if cfg["split"] == "random":
        rng = np.random.default_rng(cfg["split_seed"])
        split = _split_labels(list(rng.choice(len(codes), cfg["n_test"], replace=False)), len(codes))
    else:
        split = _split_labels(cfg["split"], len(codes))
    return TrajectorySet(fields=np.stack([r[0] for r in res])[:, :, None],
                         codes=codes[:, None], dt=float(cfg["stride"]), grid=_lbm_grid(cfg),
                         channels=["speed"], mask=np.stack([r[1] for r in res]), split=split)


def airfoil_codes(n: int, rng: np.random.Generator) -> np.ndarray:
    """CST codes with the three swept entries drawn uniformly."""
    base = CstParams()
    out = []
    for _ in range(n):
        p = dict(zip(("A_u0", "A_u1", "A_l0", "A_l1", "t_e", "theta_cw"), base.as_code()))
        for k, (lo, hi) in AIRFOIL_RANGES.items():
            p[k] = rng.uniform(lo, hi)
        out.append(CstParams(**p).as_code())
    return np.array(out)


def _airfoil(cfg: dict) -> TrajectorySet:
    rng = np.random.default_rng(cfg["seed"])
    codes = np.vstack([airfoil_codes(cfg["n_train"], rng), airfoil_codes(cfg["n_test"], rng)])
    jobs = []
    for c in codes:
        _, mask = cst_airfoil(CstParams.from_code(c), cfg["samples"], cfg["nx"], cfg["ny"])
        jobs.append((cfg, None, mask))
    res = _map(_lbm_one, jobs)
    split = ["train"] * cfg["n_train"] + ["test"] * cfg["n_test"]
    return TrajectorySet(fields=np.stack([r[0] for r in res])[:, :, None], codes=codes,
                         dt=float(cfg["stride"]), grid=_lbm_grid(cfg), channels=["speed"],
                         mask=np.stack([r[1] for r in res]), split=split)


_BUILDERS = {"burgers": _burgers, "double_shear": _double_shear,
             "karman": _karman, "airfoil": _airfoil}


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.generic):
        return v.item()
    return v


def generate_benchmark(name: str, config: dict | str = "desk") -> TrajectorySet:
    """Simulate every code of benchmark ``name``.

    ``config`` is a preset name or a full config dict (see
    :func:`preset_config`).  The generator config is stored in
    ``meta["generator"]``.
    """
    if name not in _BUILDERS:
        raise KeyError(f"unknown benchmark {name!r}; choose from {', '.join(BENCHMARKS)}")
    cfg = preset_config(name, config) if isinstance(config, str) else dict(config)
    ts = _BUILDERS[name](cfg)
    ts.meta["benchmark"] = name
    ts.meta["generator"] = {k: _jsonable(v) for k, v in cfg.items()}
    return ts
