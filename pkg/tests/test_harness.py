import hashlib
import json
import os
import struct
from pathlib import Path

import jsonschema
import numpy as np
import pytest
import torch

from inrdmd.data import Grid, TrajectorySet
from inrdmd.harness import cli
from inrdmd.harness.evaluate import evaluate_checkpoint, validate_report
from inrdmd.harness.export import export_modes, export_spectrum, read_modes_csv
from inrdmd.harness.io import (CorruptFileError, VersionMismatchError, load_checkpoint,
                               load_dataset, save_checkpoint, save_dataset)
from inrdmd.harness.metrics import aggregate_rmse, rmse
from inrdmd.harness.timing import synthetic_problem, time_per_frame
from inrdmd.inr_dmd.core import loss_long, project
from inrdmd.inr_dmd.training import TrainConfig, train_all
from inrdmd.solvers.benchmarks import generate_benchmark, preset_config

from factories import single_mode_dataset

DATA = Path(__file__).parent / "data"
GOLDEN = DATA / "burgers_tiny.ndmd"
GOLDEN_SHA256 = "e9fc730b93e80b334ba6b453d22b28602e34bf701a77e1eaf3283974f02a6472"
TINY = dict(phi_width=16, phi_layers=2, lam_width=8, lam_layers=2, epochs=3)


@pytest.fixture(scope="module")
def ckpt():
    ts = single_mode_dataset()
    return train_all(ts, TrainConfig(n_pairs=2, **TINY)), ts


def masked_set():
    rng = np.random.default_rng(0)
    mask = np.zeros((2, 3, 4), dtype=bool)
    mask[:, 1, 1] = True
    return TrajectorySet(rng.standard_normal((2, 5, 2, 3, 4)), np.array([[0.1, 2.0], [0.3, 1.0]]),
                         0.25, Grid((3, 4), (2.0, 3.0), (False, True)), ["ux", "uy"], mask,
                         ["train", "test"], {"note": "x"})


# --- metrics ----------------------------------------------------------------------

def test_rmse_identity_zero_and_double():
    u = np.random.default_rng(1).standard_normal((4, 6))
    assert np.all(rmse(u, u).per_step == 0)
    assert np.allclose(rmse(2 * u, u).per_step, 1.0, rtol=1e-15)
    assert np.all(rmse(np.zeros_like(u), u).per_step == 1.0)


def test_rmse_hand_example():
    truth = np.array([[1.0, 2.0], [3.0, 4.0]])
    pred = np.array([[1.0, 1.0], [2.0, 6.0]])
    s = rmse(pred, truth)
    # step 0: 1/5, step 1: (1 + 4)/25
    assert s.per_step.tolist() == [0.2, 0.2]
    assert s.aggregate == pytest.approx(0.2, rel=1e-15)


def test_rmse_mask_and_zero_truth():
    truth = np.array([[0.0, 0.0, 5.0], [1.0, 1.0, 9.0]])
    pred = np.array([[1.0, 1.0, -3.0], [1.0, 2.0, 0.0]])
    s = rmse(pred, truth, mask=np.array([False, False, True]))
    assert s.absolute.tolist() == [True, False]
    assert s.per_step.tolist() == [1.0, 0.5]
    with pytest.raises(ValueError):
        rmse(pred[:1], truth)


def test_aggregate_is_mean_of_trajectory_means():
    a = rmse(np.array([[1.0], [2.0]]), np.array([[1.0], [1.0]]))
    b = rmse(np.array([[3.0]]), np.array([[1.0]]))
    assert aggregate_rmse([a, b]) == pytest.approx((0.5 + 4.0) / 2)
    with pytest.raises(ValueError):
        aggregate_rmse([])


# --- timing -----------------------------------------------------------------------

def test_time_per_frame_single_repeat():
    bank, omega, u0 = synthetic_problem(200, 2)
    ms = time_per_frame(bank, omega, u0, np.arange(10) * 0.1, repeats=1)
    assert ms > 0
    with pytest.raises(ValueError):
        time_per_frame(bank, omega, u0, np.arange(10), repeats=0)


# --- files ------------------------------------------------------------------------

def test_dataset_round_trip_is_bitwise(tmp_path):
    ts = masked_set()
    save_dataset(ts, tmp_path / "d.ndmd")
    back = load_dataset(tmp_path / "d.ndmd")
    assert back.fields.tobytes() == ts.fields.tobytes()
    assert np.array_equal(back.mask, ts.mask) and np.array_equal(back.codes, ts.codes)
    assert (back.grid, back.dt, back.channels, back.split, back.meta) == \
        (ts.grid, ts.dt, ts.channels, ts.split, ts.meta)


def test_payload_is_little_endian(tmp_path):
    ts = masked_set()
    save_dataset(ts, tmp_path / "d.ndmd")
    raw = (tmp_path / "d.ndmd").read_bytes()
    magic, version, n = struct.unpack_from("<4sIQ", raw)
    assert (magic, version) == (b"NDMD", 1)
    first = struct.unpack_from("<d", raw, 16 + n)[0]
    assert first == ts.fields.flat[0]


@pytest.mark.parametrize("cut", [3, 10, 40, -8, -1])
def test_truncated_file_reports_offset(tmp_path, cut):
    save_dataset(masked_set(), tmp_path / "d.ndmd")
    raw = (tmp_path / "d.ndmd").read_bytes()
    (tmp_path / "t.ndmd").write_bytes(raw[:cut])
    with pytest.raises(CorruptFileError) as err:
        load_dataset(tmp_path / "t.ndmd")
    assert 0 <= err.value.offset <= len(raw[:cut])
    assert "offset" in str(err.value)


def test_trailing_bytes_and_bad_magic(tmp_path):
    save_dataset(masked_set(), tmp_path / "d.ndmd")
    raw = (tmp_path / "d.ndmd").read_bytes()
    (tmp_path / "t.ndmd").write_bytes(raw + b"\0")
    with pytest.raises(CorruptFileError) as err:
        load_dataset(tmp_path / "t.ndmd")
    assert err.value.offset == len(raw)
    (tmp_path / "m.ndmd").write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(CorruptFileError):
        load_dataset(tmp_path / "m.ndmd")
    with pytest.raises(CorruptFileError):
        load_checkpoint(tmp_path / "d.ndmd")


def test_version_mismatch(tmp_path):
    save_dataset(masked_set(), tmp_path / "d.ndmd")
    raw = bytearray((tmp_path / "d.ndmd").read_bytes())
    struct.pack_into("<I", raw, 4, 2)
    (tmp_path / "v.ndmd").write_bytes(bytes(raw))
    with pytest.raises(VersionMismatchError) as err:
        load_dataset(tmp_path / "v.ndmd")
    assert (err.value.found, err.value.expected) == (2, 1)


def test_golden_dataset_file():
    assert hashlib.sha256(GOLDEN.read_bytes()).hexdigest() == GOLDEN_SHA256
    ts = load_dataset(GOLDEN)
    assert ts.fields.shape == (3, 6, 1, 16) and ts.codes.ravel().tolist() == [0.001, 0.005, 0.01]
    fresh = generate_benchmark("burgers", preset_config("burgers", "desk", n=16, n_modes=8, n_steps=5,
                                                        codes=[0.001, 0.005, 0.01]))
    assert np.allclose(fresh.fields, ts.fields, rtol=0, atol=1e-13)


def test_golden_file_resaves_identically(tmp_path):
    save_dataset(load_dataset(GOLDEN), tmp_path / "g.ndmd")
    assert (tmp_path / "g.ndmd").read_bytes() == GOLDEN.read_bytes()


def test_checkpoint_round_trip_is_bitwise(tmp_path, ckpt):
    model, ts = ckpt
    save_checkpoint(model, tmp_path / "c.ndmk")
    back = load_checkpoint(tmp_path / "c.ndmk")
    for a, b in zip(model.model.stages, back.model.stages):
        assert a.phi.flat().tobytes() == b.phi.flat().tobytes()
        assert a.lam.flat().tobytes() == b.lam.flat().tobytes()
        assert b.frozen
    assert back.config == model.config and back.history == model.history
    pts, times = ts.grid.points(), np.arange(ts.n_time) * ts.dt
    u0 = ts.flat(0)[0].ravel()
    f1 = model.model.forecast(pts, ts.codes[0], u0, times)
    f2 = back.model.forecast(pts, ts.codes[0], u0, times)
    assert f1.tobytes() == f2.tobytes()
    save_checkpoint(back, tmp_path / "c2.ndmk")
    assert (tmp_path / "c.ndmk").read_bytes() == (tmp_path / "c2.ndmk").read_bytes()


def test_truncated_checkpoint(tmp_path, ckpt):
    save_checkpoint(ckpt[0], tmp_path / "c.ndmk")
    raw = (tmp_path / "c.ndmk").read_bytes()
    (tmp_path / "t.ndmk").write_bytes(raw[:-100])
    with pytest.raises(CorruptFileError) as err:
        load_checkpoint(tmp_path / "t.ndmk")
    assert err.value.offset == len(raw) - 100


# --- exports ----------------------------------------------------------------------

def test_mode_csv_round_trip(tmp_path, ckpt):
    model, ts = ckpt
    pts = ts.grid.points()
    head = export_modes(model.model, pts, ts.codes[1], tmp_path / "m.csv", ["x"], ["u"])
    assert head == ["x", "re_phi1", "im_phi1", "re_phi2", "im_phi2"]
    header, values = read_modes_csv(tmp_path / "m.csv")
    assert header == head
    modes = model.model.primary_modes(pts, ts.codes[1])
    assert np.array_equal(values[:, 0], pts[:, 0])
    assert np.array_equal(values[:, 1::2], modes.real) and np.array_equal(values[:, 2::2], modes.imag)


def test_mode_csv_multichannel_header(tmp_path):
    ts = masked_set()
    ck = train_all(ts, TrainConfig(n_pairs=1, **TINY))
    pts = ts.grid.points()[ts.fluid(0)]
    head = export_modes(ck.model, pts, ts.codes[0], tmp_path / "m.csv", ["x", "y"], ts.channels)
    assert head == ["x", "y", "re_phi1_ux", "im_phi1_ux", "re_phi1_uy", "im_phi1_uy"]
    _, values = read_modes_csv(tmp_path / "m.csv")
    assert values.shape == (11, 6)


def test_spectrum_csv_rows(tmp_path, ckpt):
    model, _ = ckpt
    codes = np.linspace(0, 1, 5)[:, None]
    export_spectrum(model.model, codes, tmp_path / "s.csv")
    header, values = read_modes_csv(tmp_path / "s.csv")
    assert header == ["xi0", "alpha1", "beta1", "alpha2", "beta2"]
    assert values.shape == (5, 5)
    w = model.model.spectrum(codes[3])
    assert values[3, 1] == w[0].real and values[3, 4] == w[1].imag


# --- reports ----------------------------------------------------------------------

def test_report_validates_and_is_consistent(ckpt):
    model, ts = ckpt
    rep = evaluate_checkpoint(model, ts, "train", repeats=1)
    validate_report(rep)
    per = [np.mean(t["per_step"]) for t in rep["trajectories"]]
    assert rep["aggregate_rmse"] == pytest.approx(np.mean(per), rel=1e-15)
    assert rep["n_params"] == model.model.n_params
    bad = dict(rep, aggregate_rmse=-1.0)
    with pytest.raises(jsonschema.ValidationError):
        validate_report(bad)


def test_report_is_reproducible_apart_from_timing(ckpt):
    model, ts = ckpt
    a, b = (evaluate_checkpoint(model, ts, "train", repeats=1) for _ in range(2))
    a.pop("timing"), b.pop("timing")
    assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)


def test_empty_split_is_rejected(ckpt):
    model, ts = ckpt
    with pytest.raises(ValueError):
        evaluate_checkpoint(model, ts, "test")


# --- CLI --------------------------------------------------------------------------

def run(*argv):
    return cli.main([str(a) for a in argv])


def test_cli_usage_errors(capsys):
    assert run("generate", "--benchmark", "nope", "--out", "x") == 1
    assert run("train", "--bogus") == 1
    assert run() == 1
    assert "usage" in capsys.readouterr().err
    assert run("--help") == 0


def test_cli_missing_file_is_user_error(tmp_path):
    assert run("eval", "--ckpt", tmp_path / "none", "--data", GOLDEN, "--report", tmp_path / "r") == 1


def test_cli_internal_error_exit_code(monkeypatch, tmp_path):
    def boom(a):
        raise RuntimeError("unexpected")
    monkeypatch.setattr(cli, "cmd_generate", boom)
    assert run("generate", "--benchmark", "burgers", "--out", tmp_path / "x") == 2


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    data = d / "b.ndmd"
    assert run("generate", "--benchmark", "burgers", "--preset", "desk", "--set", "n=32",
               "--set", "n_modes=16", "--set", "n_steps=19", "--out", data) == 0
    return d, data


def _train(d, data, name, *extra):
    return run("train", "--data", data, "--modes", 2, "--alpha", 0.9, "--beta", 0.1, "--epochs", 3,
               "--seed", 0, "--phi-width", 16, "--phi-layers", 2, "--lam-width", 8, "--lam-layers", 2,
               "--out", d / name, *extra)


def test_cli_train_is_byte_reproducible(workdir):
    d, data = workdir
    assert _train(d, data, "a.ndmk") == 0 and _train(d, data, "b.ndmk") == 0
    assert (d / "a.ndmk").read_bytes() == (d / "b.ndmk").read_bytes()
    ck = load_checkpoint(d / "a.ndmk")
    assert (ck.config.alpha, ck.config.beta, ck.config.n_pairs) == (0.9, 0.1, 2)


def test_cli_ablation_flag(workdir):
    d, data = workdir
    assert _train(d, data, "nc.ndmk", "--ablate", "no-conj") == 0
    assert load_checkpoint(d / "nc.ndmk").config.ablation == "no-conj"
    assert _train(d, data, "bad.ndmk", "--ablate", "nothing") == 1


def test_cli_eval_report(workdir):
    d, data = workdir
    _train(d, data, "e.ndmk")
    for name in ("r1.json", "r2.json"):
        assert run("eval", "--ckpt", d / "e.ndmk", "--data", data, "--report", d / name,
                   "--repeats", 1) == 0
    r1, r2 = (json.loads((d / n).read_text()) for n in ("r1.json", "r2.json"))
    validate_report(r1)
    r1.pop("timing"), r2.pop("timing")
    assert r1 == r2


def test_cli_eval_on_training_data_is_bounded_by_loss(workdir):
    d, data = workdir
    _train(d, data, "t.ndmk")
    assert run("eval", "--ckpt", d / "t.ndmk", "--data", data, "--split", "train", "--repeats", 1,
               "--report", d / "rt.json") == 0
    rep = json.loads((d / "rt.json").read_text())
    ts = load_dataset(data)
    model = load_checkpoint(d / "t.ndmk").model
    bounds = []
    with torch.no_grad():
        for i in ts.indices("train"):
            U = ts.flat(i).reshape(ts.n_time, -1)
            T, N = U.shape
            bank = model.bank_tensor(ts.grid.points(), ts.codes[i])
            omega = torch.from_numpy(model.spectrum(ts.codes[i]))
            long_mse = loss_long(bank, omega, U, ts.dt).item()
            z0 = project(bank, U[0])
            sse0 = float(torch.sum(((bank @ z0).real - torch.from_numpy(U[0])) ** 2))
            # every step error over the smallest frame energy
            bounds.append((sse0 + N * (T - 1) * long_mse) / (T * np.min(np.sum(U ** 2, axis=1))))
    assert rep["aggregate_rmse"] <= np.mean(bounds) * (1 + 1e-9)


def test_cli_dmd_rollout_export_bench(workdir):
    d, data = workdir
    _train(d, data, "x.ndmk")
    assert run("dmd", "--data", data, "--rank", 4, "--out", d / "dmd.json", "--report", d / "dr.json") == 0
    validate_report(json.loads((d / "dr.json").read_text()))
    assert json.loads((d / "dmd.json").read_text())["rank"] == 4
    ts = load_dataset(data)
    code = repr(float(ts.codes[2, 0]))
    assert run("rollout", "--ckpt", d / "x.ndmk", "--data", data, "--code", code, "--init-frame", 3,
               "--horizon", 7, "--out", d / "roll.ndmd") == 0
    roll = load_dataset(d / "roll.ndmd")
    assert roll.fields.shape == (1, 8, 1, 32)
    ck = load_checkpoint(d / "x.ndmk")
    expect = ck.model.forecast(ts.grid.points(), ts.codes[2], ts.fields[2, 3].ravel(), np.arange(8) * ts.dt)
    assert np.array_equal(roll.fields[0, :, 0], expect)
    assert run("rollout", "--ckpt", d / "x.ndmk", "--data", data, "--code", "0.5", "--horizon", 2,
               "--out", d / "r.ndmd") == 1
    assert run("export-modes", "--ckpt", d / "x.ndmk", "--code", code, "--out", d / "m.csv",
               "--spectrum-out", d / "s.csv", "--codes", "0.001;0.003;0.005;0.007;0.009") == 0
    header, values = read_modes_csv(d / "s.csv")
    assert values.shape[0] == 5
    assert run("bench", "--ckpt", d / "x.ndmk", "--frames", 20, "--repeats", 1) == 0


def test_cli_sweep_emits_five_rows(workdir):
    d, data = workdir
    template = str(d / "sw_{alpha}_{beta}.ndmk")
    assert run("sweep", "--data", data, "--ckpt-template", template, "--out", d / "sweep.csv") == 1
    assert run("sweep", "--data", data, "--ckpt-template", template, "--train-missing", "--modes", 1,
               "--epochs", 2, "--phi-width", 16, "--phi-layers", 2, "--lam-width", 8,
               "--lam-layers", 2, "--out", d / "sweep.csv") == 0
    lines = (d / "sweep.csv").read_text().splitlines()
    header, values = lines[0].split(","), lines[1:]
    assert header == ["alpha", "beta", "rmse", "checkpoint"]
    assert [tuple(map(float, r.split(",")[:2])) for r in values] == \
        [(0, 1), (0.25, 0.75), (0.5, 0.5), (0.75, 0.25), (1, 0)]
    assert all(os.path.exists(r.split(",")[3]) for r in values)
