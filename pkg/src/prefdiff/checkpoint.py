"""Binary checkpoint format.

Layout: magic "PCDF", then format_version and header_length as u32
little-endian, then a UTF-8 JSON header, then the parameter payload as
little-endian float64 in the order the header declares. Round-trips are
bit-exact.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .classifier import PreferenceClassifier
from .ddpm import DiffusionModel, NoiseSchedule, make_schedule
from .nn import Mlp

MAGIC = b"PCDF"
FORMAT_VERSION = 1


class CheckpointError(Exception):
    """Malformed or truncated checkpoint bytes."""


def _header_dict(kind: str, net: Mlp, sched: NoiseSchedule, extra: dict) -> dict:
    header = {
        "kind": kind,
        "layer_sizes": list(net.layer_sizes),
        "param_shapes": [list(p.shape) for p in _net_params(net)],
        "schedule": {
            "T": sched.T,
            "beta_start": float(sched.beta[0]),
            "beta_end": float(sched.beta[-1]),
        },
    }
    header.update(extra)
    return header


def _net_params(net: Mlp) -> list[np.ndarray]:
    out = []
    for w, b in zip(net.weights, net.biases):
        out.append(w)
        out.append(b)
    return out


def _write(path: str | Path, header: dict, params: list[np.ndarray]) -> None:
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", FORMAT_VERSION, len(header_bytes)))
        fh.write(header_bytes)
        for p in params:
            fh.write(np.ascontiguousarray(p, dtype="<f8").tobytes())


def _read(path: str | Path) -> tuple[dict, list[np.ndarray]]:
    blob = Path(path).read_bytes()
    if len(blob) < 12:
        raise CheckpointError(f"{path}: truncated before header")
    if blob[:4] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {blob[:4]!r}")
    version, header_len = struct.unpack("<II", blob[4:12])
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {version}")
    if len(blob) < 12 + header_len:
        raise CheckpointError(f"{path}: truncated inside header")
    try:
        header = json.loads(blob[12 : 12 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt header: {exc}") from None
    shapes = [tuple(s) for s in header.get("param_shapes", [])]
    total = sum(int(np.prod(s)) for s in shapes)
    payload = blob[12 + header_len :]
    if len(payload) != 8 * total:
        raise CheckpointError(
            f"{path}: payload is {len(payload)} bytes, header declares {8 * total}"
        )
    params = []
    offset = 0
    for shape in shapes:
        count = int(np.prod(shape))
        arr = np.frombuffer(payload, dtype="<f8", count=count, offset=offset).reshape(shape)
        params.append(arr.astype(float, copy=True))
        offset += 8 * count
    return header, params


def _rebuild_net(header: dict, params: list[np.ndarray]) -> Mlp:
    sizes = [int(s) for s in header["layer_sizes"]]
    weights = params[0::2]
    biases = params[1::2]
    if len(weights) != len(sizes) - 1:
        raise CheckpointError(f"parameter count does not match layer_sizes {sizes}")
    for i, (w, b) in enumerate(zip(weights, biases)):
        if w.shape != (sizes[i], sizes[i + 1]) or b.shape != (sizes[i + 1],):
            raise CheckpointError(f"layer {i}: shapes {w.shape}/{b.shape} do not match {sizes}")
    return Mlp(sizes, list(weights), list(biases))


def _rebuild_schedule(header: dict) -> NoiseSchedule:
    s = header["schedule"]
    return make_schedule(int(s["T"]), float(s["beta_start"]), float(s["beta_end"]))


def save_diffusion(path: str | Path, model: DiffusionModel, seed: int) -> None:
    header = _header_dict(
        "diffusion", model.net, model.schedule, {"data_dim": model.data_dim, "seed": int(seed)}
    )
    _write(path, header, _net_params(model.net))


def save_classifier(
    path: str | Path, clf: PreferenceClassifier, sched: NoiseSchedule, seed: int
) -> None:
    header = _header_dict(
        "classifier",
        clf.trunk,
        sched,
        {"data_dim": clf.data_dim, "time_conditioned": clf.time_conditioned, "seed": int(seed)},
    )
    _write(path, header, _net_params(clf.trunk))


def load_checkpoint(path: str | Path):
    """Load either kind; returns (header, DiffusionModel | PreferenceClassifier)."""
    header, params = _read(path)
    kind = header.get("kind")
    try:
        net = _rebuild_net(header, params)
        if kind == "diffusion":
            sched = _rebuild_schedule(header)
            return header, DiffusionModel(net, sched, int(header["data_dim"]))
        if kind == "classifier":
            sched = _rebuild_schedule(header)
            clf = PreferenceClassifier(
                net, int(header["data_dim"]), sched.T, bool(header["time_conditioned"])
            )
            return header, clf
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"{path}: corrupt header fields: {exc}") from None
    raise CheckpointError(f"{path}: unknown checkpoint kind {kind!r}")


def load_diffusion(path: str | Path) -> tuple[dict, DiffusionModel]:
    header, model = load_checkpoint(path)
    if not isinstance(model, DiffusionModel):
        raise CheckpointError(f"{path}: expected a diffusion checkpoint, got {header.get('kind')!r}")
    return header, model


def load_classifier(path: str | Path) -> tuple[dict, PreferenceClassifier]:
    header, clf = load_checkpoint(path)
    if not isinstance(clf, PreferenceClassifier):
        raise CheckpointError(
            f"{path}: expected a classifier checkpoint, got {header.get('kind')!r}"
        )
    return header, clf
