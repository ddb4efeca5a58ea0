import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from powercql import io
from powercql.core import DEFAULT_GRID, DataError, Dataset, NodeState, Transition, make_action_grid
from powercql.qnet import QNetwork


def test_dataset_file_roundtrip_is_exact(sim_dataset, tmp_path):
    p = tmp_path / "ds.jsonl"
    io.write_dataset(sim_dataset, p)
    back = io.read_dataset(p)
    assert back.transitions == sim_dataset.transitions
    assert back.grid == sim_dataset.grid
    assert back.reward_bounds == sim_dataset.reward_bounds
    # writing the re-read dataset reproduces the same bytes
    assert io.dataset_to_text(back) == p.read_text()


def test_dataset_header_line(sim_dataset, tmp_path):
    p = tmp_path / "ds.jsonl"
    io.write_dataset(sim_dataset, p)
    lines = p.read_text(encoding="utf-8").splitlines()
    head = json.loads(lines[0])
    assert head["format"] == "powercql-dataset" and head["version"] == 1
    assert head["grid"] == {"min_watts": 78.0, "max_watts": 165.0, "count": 16}
    assert len(lines) == len(sim_dataset) + 1
    rec = json.loads(lines[1])
    assert set(rec) == {"benchmark", "t", "state", "action_index", "action_watts", "reward_raw", "reward_norm", "next_state", "terminal"}


@pytest.mark.parametrize(
    "text, match",
    [
        ("", "empty"),
        ("not json\n", "header"),
        ('{"format": "other", "version": 1}\n', "not a dataset"),
        ('{"format": "powercql-dataset", "version": 9, "grid": {}}\n', "version"),
    ],
)
def test_dataset_reader_rejects_bad_files(tmp_path, text, match):
    p = tmp_path / "bad.jsonl"
    p.write_text(text)
    with pytest.raises(DataError, match=match):
        io.read_dataset(p)


def test_dataset_reader_reports_bad_record_line(sim_dataset, tmp_path):
    p = tmp_path / "ds.jsonl"
    text = io.dataset_to_text(sim_dataset).splitlines()
    text[3] = "{broken"
    p.write_text("\n".join(text))
    with pytest.raises(DataError, match=":4:"):
        io.read_dataset(p)


def test_missing_dataset_file(tmp_path):
    with pytest.raises(DataError):
        io.read_dataset(tmp_path / "nope.jsonl")


@given(st.lists(st.floats(-1e3, 1e3, allow_subnormal=True), min_size=5, max_size=5), st.integers(0, 2**32 - 1))
def test_checkpoint_roundtrip_bit_exact(mean, seed):
    net = QNetwork.init(16, seed=seed, feature_mean=mean, feature_std=[1.5, 2, 3, 0.25, 1e-3])
    ck = net.to_checkpoint(DEFAULT_GRID, {"gamma": 0.9, "seed": seed})
    back = io.checkpoint_from_dict(json.loads(json.dumps(io.checkpoint_to_dict(ck))))
    assert back.params.tobytes() == ck.params.tobytes()
    assert back.feature_mean.tobytes() == ck.feature_mean.tobytes()
    assert back.feature_std.tobytes() == ck.feature_std.tobytes()
    assert back.layer_dims == (5, 10, 10, 16) and back.grid == DEFAULT_GRID
    assert back.hyperparams == ck.hyperparams


def test_checkpoint_file_layout(tmp_path):
    net = QNetwork.init(4, hidden=(3,), seed=0)
    ck = net.to_checkpoint(make_action_grid(78, 165, 4))
    p = tmp_path / "ck.json"
    io.write_checkpoint(ck, p)
    d = json.loads(p.read_text())
    assert d["layer_dims"] == [5, 3, 4]
    assert [(lay["in"], lay["out"]) for lay in d["layers"]] == [(5, 3), (3, 4)]
    # row-major (in x out) weights followed by bias, same as the flat vector
    assert d["layers"][0]["weights"] == ck.params[:15].tolist()
    assert d["layers"][0]["bias"] == ck.params[15:18].tolist()
    assert io.read_checkpoint(p).params.tobytes() == ck.params.tobytes()


def test_checkpoint_reader_rejects_corruption(tmp_path):
    ck = QNetwork.init(16, seed=0).to_checkpoint(DEFAULT_GRID)
    d = io.checkpoint_to_dict(ck)
    d["layers"][1]["bias"] = d["layers"][1]["bias"][:-1]
    with pytest.raises(DataError, match="parameter count"):
        io.checkpoint_from_dict(d)
    d = io.checkpoint_to_dict(ck)
    d["layers"][0]["in"] = 4
    with pytest.raises(DataError):
        io.checkpoint_from_dict(d)
    with pytest.raises(DataError, match="not a checkpoint"):
        io.checkpoint_from_dict({"format": "x"})
    p = tmp_path / "ck.json"
    p.write_text('{"format": "powercql-checkpoint", "version": 1}')
    with pytest.raises(DataError, match="malformed"):
        io.read_checkpoint(p)


def test_non_finite_values_are_not_written(tmp_path):
    s = NodeState.zeros()
    tr = Transition("X", 0, s, 0, 78.0, float("inf"), 0.0, s, True)
    with pytest.raises(ValueError):
        io.write_dataset(Dataset([tr], DEFAULT_GRID), tmp_path / "x.jsonl")
