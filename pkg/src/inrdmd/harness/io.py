"""Single-file dataset and checkpoint containers.

Layout (all integers little-endian)::

    magic      4 bytes   b"NDMD" (dataset) or b"NDMK" (checkpoint)
    version    uint32
    meta_len   uint64
    meta       meta_len bytes of UTF-8 JSON
    payload    float64 little-endian values
    [mask]     one byte per cell (datasets with a solid mask only)

Writes go to a temporary file that is renamed into place.
"""
from __future__ import annotations

import json
import os
import struct
import tempfile

import numpy as np
import torch

from ..autodiff import NetworkSpec, ParamSet
from ..data import Grid, TrajectorySet
from ..inr_dmd.core import ModePairNets, Normalizer
from ..inr_dmd.training import Checkpoint, InrDmdModel, TrainConfig

DATASET_MAGIC = b"NDMD"
CHECKPOINT_MAGIC = b"NDMK"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIQ")
_F64 = np.dtype("<f8")


class CorruptFileError(ValueError):
    def __init__(self, path, offset: int, reason: str):
        self.path, self.offset, self.reason = str(path), offset, reason
        super().__init__(f"{path}: corrupt file at byte offset {offset}: {reason}")


class VersionMismatchError(ValueError):
    def __init__(self, path, found: int, expected: int = FORMAT_VERSION):
        self.path, self.found, self.expected = str(path), found, expected
        super().__init__(f"{path}: format version {found} is not supported (expected "
                         f"{expected}); re-create the file with this version or migrate it")


def _atomic_write(path, chunks) -> None:
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    try:
        with os.fdopen(fd, "wb") as fh:
            for c in chunks:
                fh.write(c)
        umask = os.umask(0)
        os.umask(umask)
        os.chmod(tmp, 0o666 & ~umask)  # mkstemp creates 0600
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _pack(magic: bytes, meta: dict, payload: np.ndarray, extra: bytes = b"") -> list:
    blob = json.dumps(meta, sort_keys=True, allow_nan=False).encode("utf-8")
    return [_HEADER.pack(magic, FORMAT_VERSION, len(blob)), blob,
            np.ascontiguousarray(payload, dtype=_F64).tobytes(), extra]


def _unpack(path, magic: bytes) -> tuple[dict, memoryview, int]:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < _HEADER.size:
        raise CorruptFileError(path, len(data), "file shorter than the header")
    found, version, n = _HEADER.unpack_from(data, 0)
    if found != magic:
        raise CorruptFileError(path, 0, f"bad magic {found!r}, expected {magic!r}")
    if version != FORMAT_VERSION:
        raise VersionMismatchError(path, version)
    start = _HEADER.size
    if start + n > len(data):
        raise CorruptFileError(path, len(data), f"metadata needs {n} bytes, file ends early")
    try:
        meta = json.loads(data[start:start + n].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptFileError(path, start, f"unreadable metadata ({exc})") from None
    return meta, memoryview(data), start + n


def _read_f64(path, buf: memoryview, offset: int, count: int) -> tuple[np.ndarray, int]:
    end = offset + 8 * count
    if end > len(buf):
        raise CorruptFileError(path, len(buf), f"payload needs {8 * count} bytes from offset "
                                               f"{offset}, file ends early")
    return np.frombuffer(buf[offset:end], dtype=_F64).astype(np.float64), end


# --- datasets ---------------------------------------------------------------------

def save_dataset(ts: TrajectorySet, path) -> None:
    meta = {
        "kind": "dataset",
        "shape": list(ts.fields.shape),
        "grid": ts.grid.to_dict(),
        "dt": ts.dt,
        "channels": list(ts.channels),
        "code_dim": ts.code_dim,
        "codes": ts.codes.tolist(),
        "has_mask": ts.mask is not None,
        "split": list(ts.split),
        "meta": ts.meta,
    }
    mask = b"" if ts.mask is None else np.ascontiguousarray(ts.mask, dtype=np.uint8).tobytes()
    _atomic_write(path, _pack(DATASET_MAGIC, meta, ts.fields, mask))


def load_dataset(path) -> TrajectorySet:
    meta, buf, off = _unpack(path, DATASET_MAGIC)
    try:
        shape = tuple(int(s) for s in meta["shape"])
        grid = Grid.from_dict(meta["grid"])
        codes = np.asarray(meta["codes"], dtype=np.float64).reshape(shape[0], int(meta["code_dim"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptFileError(path, _HEADER.size, f"incomplete metadata ({exc})") from None
    values, off = _read_f64(path, buf, off, int(np.prod(shape)))
    mask = None
    if meta.get("has_mask"):
        n = shape[0] * grid.size
        if off + n > len(buf):
            raise CorruptFileError(path, len(buf), f"mask needs {n} bytes from offset {off}")
        mask = np.frombuffer(buf[off:off + n], dtype=np.uint8).astype(bool).reshape((shape[0],) + grid.dims)
        off += n
    if off != len(buf):
        raise CorruptFileError(path, off, f"{len(buf) - off} unexpected trailing bytes")
    return TrajectorySet(fields=values.reshape(shape), codes=codes, dt=float(meta["dt"]), grid=grid,
                         channels=list(meta["channels"]), mask=mask, split=list(meta["split"]),
                         meta=dict(meta.get("meta", {})))


# --- checkpoints --------------------------------------------------------------------

def save_checkpoint(ckpt: Checkpoint, path) -> None:
    model = ckpt.model
    stages = [{"phi_spec": st.phi_spec.to_dict(), "lam_spec": st.lam_spec.to_dict(),
               "n_channels": st.n_channels, "conjugate": st.conjugate,
               "phi_count": st.phi.count, "lam_count": st.lam.count} for st in model.stages]
    meta = {
        "kind": "checkpoint",
        "config": ckpt.config.to_dict(),
        "stages": stages,
        "normalizer": model.normalizer.to_dict(),
        "n_channels": model.n_channels,
        "deflation": model.deflation,
        "history": ckpt.history,
        "meta": ckpt.meta,
    }
    flat = [np.concatenate([st.phi.flat(), st.lam.flat()]) for st in model.stages]
    _atomic_write(path, _pack(CHECKPOINT_MAGIC, meta, np.concatenate(flat)))


def _params_from(spec: NetworkSpec, values: np.ndarray) -> ParamSet:
    tensors = []
    for fan_in, fan_out in spec.layer_dims():
        tensors += [torch.zeros(fan_out, fan_in, dtype=torch.float64),
                    torch.zeros(fan_out, dtype=torch.float64)]
    ps = ParamSet(tensors)
    ps.load_flat(values)
    return ps


def load_checkpoint(path) -> Checkpoint:
    meta, buf, off = _unpack(path, CHECKPOINT_MAGIC)
    try:
        specs = [(NetworkSpec(**s["phi_spec"]), NetworkSpec(**s["lam_spec"]), s) for s in meta["stages"]]
        norm = Normalizer.from_dict(meta["normalizer"])
        cfg = TrainConfig.from_dict(meta["config"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptFileError(path, _HEADER.size, f"incomplete metadata ({exc})") from None
    stages = []
    for phi_spec, lam_spec, s in specs:
        if phi_spec.n_params != s["phi_count"] or lam_spec.n_params != s["lam_count"]:
            raise CorruptFileError(path, _HEADER.size, "parameter counts disagree with network specs")
        vals, off = _read_f64(path, buf, off, phi_spec.n_params + lam_spec.n_params)
        phi = _params_from(phi_spec, vals[:phi_spec.n_params])
        lam = _params_from(lam_spec, vals[phi_spec.n_params:])
        stages.append(ModePairNets(phi_spec, lam_spec, phi, lam, int(s["n_channels"]),
                                   bool(s["conjugate"]), frozen=True))
    if off != len(buf):
        raise CorruptFileError(path, off, f"{len(buf) - off} unexpected trailing bytes")
    model = InrDmdModel(stages, norm, int(meta["n_channels"]), bool(meta["deflation"]))
    return Checkpoint(cfg, model, meta.get("history", []), meta.get("meta", {}))
