"""Versioned binary persistence for models, training state, and datasets.

Model file layout (all integers little-endian)::

    b"SFRQ" | u16 version | u32 n | n bytes canonical JSON header
    | u32 entry count | entries | 8-byte blake2b digest of everything before

    entry = u16 name length | utf-8 name | u8 dtype tag | u8 ndim
            | ndim x u32 shape | raw little-endian array bytes

Dataset files share the framing with magic ``b"SFDS"``; each record is
``u16 m | m x f64 frequency | 2m x f64 amplitude (re, im) | f64 sigma
| 2N x f64 noisy sample (re, im)``.  Clean samples are re-synthesized from
the stored mixture on load.
"""

from __future__ import annotations

import datetime as _dt
import hashlib
import json
import math
import struct
from collections import OrderedDict
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from freqest.nets import ModelBundle, build_model, config_from_dict
from freqest.signal import GeneratorConfig, SampleRecord, SinusoidMixture, synthesize

MODEL_MAGIC = b"SFRQ"
DATASET_MAGIC = b"SFDS"
FORMAT_VERSION = 1
DIGEST_SIZE = 8

_DTYPE_TAGS = {0: np.dtype("<f4"), 1: np.dtype("<f8"), 2: np.dtype("<i8")}
_TAG_OF = {np.dtype(np.float32): 0, np.dtype(np.float64): 1, np.dtype(np.int64): 2}

# prefixes of auxiliary entries stored alongside the weights in training-state files
_ADAM_M, _ADAM_V, _BEST = "adam_m:", "adam_v:", "best:"


class IntegrityError(ValueError):
    """A file is truncated, corrupted, or inconsistent with its config."""


def _jsonable(x):
    if isinstance(x, float):
        if math.isfinite(x):
            return x
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    if isinstance(x, (np.floating, np.integer)):
        return _jsonable(x.item())
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    return x


def canonical_json(obj) -> bytes:
    """Sorted keys, no whitespace, shortest round-trip floats, no NaN tokens."""
    return json.dumps(_jsonable(obj), sort_keys=True, separators=(",", ":"), allow_nan=False).encode()


def _digest(data: bytes) -> bytes:
    return hashlib.blake2b(data, digest_size=DIGEST_SIZE).digest()


def _write_framed(path, magic: bytes, header: dict, body: bytes) -> None:
    blob = canonical_json(header)
    out = magic + struct.pack("<HI", FORMAT_VERSION, len(blob)) + blob + body
    Path(path).write_bytes(out + _digest(out))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise IntegrityError("unexpected end of file")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def _read_framed(path, magic: bytes) -> tuple[dict, _Reader]:
    data = Path(path).read_bytes()
    if len(data) < len(magic) + 6 + DIGEST_SIZE or data[: len(magic)] != magic:
        raise IntegrityError(f"{path}: not a {magic.decode()} file")
    payload, digest = data[:-DIGEST_SIZE], data[-DIGEST_SIZE:]
    if _digest(payload) != digest:
        raise IntegrityError(f"{path}: checksum mismatch")
    r = _Reader(payload)
    r.take(len(magic))
    version, n = r.unpack("<HI")
    if version != FORMAT_VERSION:
        raise IntegrityError(f"{path}: unsupported format version {version}")
    try:
        header = json.loads(r.take(n))
    except json.JSONDecodeError as exc:
        raise IntegrityError(f"{path}: bad header") from exc
    return header, r


# --- parameter tables --------------------------------------------------------


def _pack_arrays(arrays: "OrderedDict[str, np.ndarray]") -> bytes:
    parts = [struct.pack("<I", len(arrays))]
    for name, arr in arrays.items():
        arr = np.asarray(arr)
        tag = _TAG_OF.get(arr.dtype)
        if tag is None:
            raise TypeError(f"{name}: unsupported dtype {arr.dtype}")
        raw = name.encode()
        parts.append(struct.pack("<H", len(raw)) + raw)
        parts.append(struct.pack("<BB", tag, arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype=_DTYPE_TAGS[tag]).tobytes())
    return b"".join(parts)


def _unpack_arrays(r: _Reader) -> "OrderedDict[str, np.ndarray]":
    (count,) = r.unpack("<I")
    out: OrderedDict[str, np.ndarray] = OrderedDict()
    for _ in range(count):
        (n,) = r.unpack("<H")
        name = r.take(n).decode()
        tag, ndim = r.unpack("<BB")
        if tag not in _DTYPE_TAGS:
            raise IntegrityError(f"{name}: unknown dtype tag {tag}")
        shape = r.unpack(f"<{ndim}I")
        dt = _DTYPE_TAGS[tag]
        nbytes = dt.itemsize * int(np.prod(shape, dtype=np.int64))
        arr = np.frombuffer(r.take(nbytes), dtype=dt).reshape(shape)
        if name in out:
            raise IntegrityError(f"duplicate entry {name!r}")
        out[name] = arr.astype(dt.newbyteorder("="))
    if r.pos != len(r.data):
        raise IntegrityError("trailing bytes after parameter table")
    return out


def _restore_model(header: dict, arrays: dict):
    try:
        config = config_from_dict(header["config"])
    except (KeyError, TypeError, ValueError) as exc:
        raise IntegrityError(f"invalid config: {exc}") from exc
    weights = {k: v for k, v in arrays.items() if ":" not in k}
    dtypes = {v.dtype for v in weights.values()}
    dtype = dtypes.pop() if len(dtypes) == 1 else np.float32
    model = build_model(config, seed=0, dtype=dtype)
    try:
        model.load_state_dict(weights)
    except (KeyError, ValueError) as exc:
        raise IntegrityError(f"weights do not match config: {exc}") from exc
    return config, model


# --- models ------------------------------------------------------------------


def save_model(path, bundle: ModelBundle) -> None:
    header = {"kind": "model", "config": bundle.config.to_dict(), "metadata": bundle.metadata}
    _write_framed(path, MODEL_MAGIC, header, _pack_arrays(bundle.model.state_dict()))


def load_model(path) -> ModelBundle:
    """Load and validate a model file; training-state files load their latest weights."""
    header, r = _read_framed(path, MODEL_MAGIC)
    arrays = _unpack_arrays(r)
    config, model = _restore_model(header, arrays)
    model.eval()
    return ModelBundle(config, model, header.get("metadata", {}))


# --- training state ----------------------------------------------------------


def save_training_state(path, trainer, epoch: int) -> None:
    """Weights, BN statistics, Adam moments, best weights, and history."""
    model = trainer.model
    arrays: OrderedDict[str, np.ndarray] = OrderedDict(model.state_dict())
    steps = []
    for name, p in model.named_parameters():
        arrays[_ADAM_M + name] = p.adam_m
        arrays[_ADAM_V + name] = p.adam_v
        steps.append(p.adam_step)
    if trainer.best_state is not None:
        for name, arr in trainer.best_state.items():
            arrays[_BEST + name] = arr
    header = {
        "kind": "training_state",
        "config": model.cfg.to_dict(),
        "metadata": {
            "epoch": epoch,
            "adam_steps": steps,
            "history": trainer.history,
            "best_val": trainer.best_val,
            "best_epoch": trainer.best_epoch,
            "initial_loss": trainer.initial_loss,
            "train_config": trainer.cfg.to_dict(),
        },
    }
    _write_framed(path, MODEL_MAGIC, header, _pack_arrays(arrays))


def _float(x) -> float:
    return float(x) if x is not None else math.nan


def load_training_state(path, trainer) -> None:
    """Restore a trainer so that the next epoch continues the saved run."""
    header, r = _read_framed(path, MODEL_MAGIC)
    if header.get("kind") != "training_state":
        raise IntegrityError(f"{path}: not a training-state file")
    if header["config"] != json.loads(canonical_json(trainer.model.cfg.to_dict())):
        raise IntegrityError(f"{path}: network config differs from the resumed run")
    arrays = _unpack_arrays(r)
    meta = header["metadata"]
    model = trainer.model
    model.load_state_dict({k: v for k, v in arrays.items() if ":" not in k})
    for (name, p), step in zip(model.named_parameters(), meta["adam_steps"]):
        p.adam_m = arrays[_ADAM_M + name].astype(p.dtype, copy=True)
        p.adam_v = arrays[_ADAM_V + name].astype(p.dtype, copy=True)
        p.adam_step = int(step)
    best = OrderedDict((k[len(_BEST) :], v.copy()) for k, v in arrays.items() if k.startswith(_BEST))
    trainer.best_state = best or None
    trainer.best_val = _float(meta["best_val"]) if meta["best_val"] != "inf" else math.inf
    trainer.best_epoch = int(meta["best_epoch"])
    trainer.initial_loss = _float(meta["initial_loss"]) if meta["initial_loss"] != "nan" else math.nan
    trainer.history = list(meta["history"])
    trainer.start_epoch = int(meta["epoch"]) + 1


# --- datasets ----------------------------------------------------------------


def save_dataset(path, records: Iterable[SampleRecord], gen: GeneratorConfig, extra: Optional[dict] = None) -> None:
    records = list(records)
    body = [struct.pack("<I", len(records))]
    for rec in records:
        mix = rec.truth
        amps = np.empty(2 * mix.m)
        amps[0::2], amps[1::2] = mix.amplitudes.real, mix.amplitudes.imag
        noisy = np.empty(2 * rec.N)
        noisy[0::2], noisy[1::2] = rec.noisy.real, rec.noisy.imag
        body.append(struct.pack("<H", mix.m))
        body.append(np.concatenate([mix.frequencies, amps, [rec.sigma], noisy]).astype("<f8").tobytes())
    header = {"generator": gen.to_dict(), "n_records": len(records), "N": gen.N, **(extra or {})}
    _write_framed(path, DATASET_MAGIC, header, b"".join(body))


def load_dataset(path) -> tuple[dict, list[SampleRecord]]:
    header, r = _read_framed(path, DATASET_MAGIC)
    N = int(header["N"])
    (count,) = r.unpack("<I")
    if count != header["n_records"]:
        raise IntegrityError("record count disagrees with header")
    records = []
    for _ in range(count):
        (m,) = r.unpack("<H")
        vals = np.frombuffer(r.take(8 * (3 * m + 1 + 2 * N)), dtype="<f8").astype(np.float64)
        freqs = vals[:m]
        amps = vals[m : 3 * m : 2] + 1j * vals[m + 1 : 3 * m : 2]
        sigma = float(vals[3 * m])
        noisy = vals[3 * m + 1 :: 2] + 1j * vals[3 * m + 2 :: 2]
        mix = SinusoidMixture(freqs.copy(), amps)
        records.append(SampleRecord(synthesize(mix, N), noisy, sigma, mix))
    if r.pos != len(r.data):
        raise IntegrityError("trailing bytes after records")
    return header, records


def records_to_jsonl(records: Iterable[SampleRecord]) -> str:
    lines = []
    for rec in records:
        row = {
            "frequencies": rec.truth.frequencies.tolist(),
            "amplitudes_re": rec.truth.amplitudes.real.tolist(),
            "amplitudes_im": rec.truth.amplitudes.imag.tolist(),
            "sigma": rec.sigma,
            "noisy_re": rec.noisy.real.tolist(),
            "noisy_im": rec.noisy.imag.tolist(),
        }
        lines.append(canonical_json(row).decode())
    return "\n".join(lines) + ("\n" if lines else "")


# --- run manifests -----------------------------------------------------------


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


class RunManifest:
    """Command, resolved config, seed, tool version, and timestamps of a run."""

    def __init__(self, command: list, config: dict, seed: Optional[int]):
        from freqest import __version__

        self.record = {
            "command": list(command),
            "config": config,
            "seed": seed,
            "tool_version": __version__,
            "started": _now(),
            "finished": None,
            "exit_status": None,
        }

    def finish(self, path=None, status: int = 0) -> str:
        """Stamp the end time; write to ``path`` if given.  Returns the JSON."""
        self.record["finished"] = _now()
        self.record["exit_status"] = status
        text = json.dumps(_jsonable(self.record), indent=2, sort_keys=True) + "\n"
        if path:
            Path(path).write_text(text)
        return text
