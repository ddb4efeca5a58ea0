"""Dataset (JSON lines) and checkpoint (JSON) file formats.

Dataset file, UTF-8, one JSON object per line::

    {"format": "powercql-dataset", "version": 1, "grid": {...},
     "reward_bounds": {"NAME": [r_min, r_max], ...}, "reward_range": [-5, 5]}
    {"benchmark": "...", "t": 0, "state": [5 floats], "action_index": 3, ...}
    ...

Checkpoint file, a single JSON document::

    {"format": "powercql-checkpoint", "version": 1, "layer_dims": [5, 10, 10, 16],
     "activation": "relu",
     "layers": [{"in": 5, "out": 10, "weights": [row-major in*out], "bias": [out]}, ...],
     "feature_mean": [5], "feature_std": [5], "grid": {...}, "hyperparams": {...}}

Floats are written with ``repr`` precision, so parameters survive a
round-trip bit for bit.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .core import ActionGrid, Checkpoint, DataError, Dataset, Transition

DATASET_FORMAT = "powercql-dataset"
CHECKPOINT_FORMAT = "powercql-checkpoint"
FORMAT_VERSION = 1


def _dumps(obj) -> str:
    return json.dumps(obj, separators=(",", ":"), allow_nan=False)


def dataset_to_text(ds: Dataset) -> str:
    header = {
        "format": DATASET_FORMAT,
        "version": FORMAT_VERSION,
        "grid": ds.grid.to_dict(),
        "reward_bounds": {k: [lo, hi] for k, (lo, hi) in ds.reward_bounds.items()},
        "reward_range": list(ds.reward_range),
    }
    lines = [_dumps(header)]
    lines.extend(_dumps(tr.to_dict()) for tr in ds.transitions)
    return "\n".join(lines) + "\n"


def write_dataset(ds: Dataset, path) -> None:
    Path(path).write_text(dataset_to_text(ds), encoding="utf-8")


def read_dataset(path) -> Dataset:
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise DataError(f"cannot read dataset {path}: {exc}") from exc
    if not lines:
        raise DataError(f"{path} is empty")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: bad header line: {exc}") from exc
    if header.get("format") != DATASET_FORMAT:
        raise DataError(f"{path}: not a dataset file (format={header.get('format')!r})")
    if header.get("version") != FORMAT_VERSION:
        raise DataError(f"{path}: unsupported dataset version {header.get('version')!r}")
    grid = ActionGrid.from_dict(header["grid"])
    transitions = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from exc
        transitions.append(Transition.from_dict(rec))
    bounds = {k: (float(v[0]), float(v[1])) for k, v in header.get("reward_bounds", {}).items()}
    rng = tuple(float(x) for x in header.get("reward_range", (-5.0, 5.0)))
    return Dataset(transitions, grid, bounds, rng)


def checkpoint_to_dict(ck: Checkpoint) -> dict:
    layers = []
    off = 0
    for fan_in, fan_out in zip(ck.layer_dims[:-1], ck.layer_dims[1:]):
        w = ck.params[off : off + fan_in * fan_out]
        off += fan_in * fan_out
        b = ck.params[off : off + fan_out]
        off += fan_out
        layers.append({"in": fan_in, "out": fan_out, "weights": w.tolist(), "bias": b.tolist()})
    return {
        "format": CHECKPOINT_FORMAT,
        "version": FORMAT_VERSION,
        "layer_dims": list(ck.layer_dims),
        "activation": ck.activation,
        "layers": layers,
        "feature_mean": np.asarray(ck.feature_mean, dtype=float).tolist(),
        "feature_std": np.asarray(ck.feature_std, dtype=float).tolist(),
        "grid": ck.grid.to_dict(),
        "hyperparams": ck.hyperparams,
    }


def checkpoint_from_dict(d: dict) -> Checkpoint:
    if d.get("format") != CHECKPOINT_FORMAT:
        raise DataError(f"not a checkpoint (format={d.get('format')!r})")
    if d.get("version") != FORMAT_VERSION:
        raise DataError(f"unsupported checkpoint version {d.get('version')!r}")
    dims = [int(x) for x in d["layer_dims"]]
    chunks = []
    if len(d["layers"]) != len(dims) - 1:
        raise DataError("layer list does not match layer_dims")
    for k, layer in enumerate(d["layers"]):
        fan_in, fan_out = dims[k], dims[k + 1]
        if (layer["in"], layer["out"]) != (fan_in, fan_out):
            raise DataError(f"layer {k} dims {layer['in']}x{layer['out']} != {fan_in}x{fan_out}")
        w = np.asarray(layer["weights"], dtype=float)
        b = np.asarray(layer["bias"], dtype=float)
        if w.size != fan_in * fan_out or b.size != fan_out:
            raise DataError(f"layer {k} has wrong parameter count")
        chunks += [w, b]
    params = np.concatenate(chunks)
    if not np.all(np.isfinite(params)):
        raise DataError("checkpoint holds non-finite parameters")
    return Checkpoint(
        layer_dims=tuple(dims),
        params=params,
        feature_mean=np.asarray(d["feature_mean"], dtype=float),
        feature_std=np.asarray(d["feature_std"], dtype=float),
        grid=ActionGrid.from_dict(d["grid"]),
        hyperparams=dict(d.get("hyperparams", {})),
        activation=d.get("activation", "relu"),
    )


def write_checkpoint(ck: Checkpoint, path) -> None:
    Path(path).write_text(json.dumps(checkpoint_to_dict(ck), indent=1, allow_nan=False) + "\n", encoding="utf-8")


def read_checkpoint(path) -> Checkpoint:
    try:
        d = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read checkpoint {path}: {exc}") from exc
    try:
        return checkpoint_from_dict(d)
    except (KeyError, TypeError) as exc:
        raise DataError(f"malformed checkpoint {path}: {exc}") from exc
