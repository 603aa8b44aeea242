"""
Shared fixtures: toy graphs, tiny synthetic datasets and small configs
"""
import json

import numpy as np
import pytest

from src.collectors import make_synthetic_dataset, save_dataset
from src.config import parse_config
from src.models import SparseGraph

TINY_CONFIG = {
    "seed": 7,
    "target_client": 0,
    "federation": {
        "rounds": 3,
        "clients": 3,
        "hidden": 8,
        "train": {"epochs": 2, "batch": 16, "lr": 0.05},
    },
    "unlearn": {"epochs": 3},
    "virtual": {"vgae_epochs": 10, "z_dim": 4, "hidden": 8, "repair_rounds": 2},
    "sweep": {"param": "tau", "values": [2.0, 5.0], "seeds": 2},
}


@pytest.fixture
def rng():
    return np.random.default_rng(2025)


@pytest.fixture
def path_graph():
    """0 - 1 - 2 - 3"""
    return SparseGraph.from_edges(4, [[0, 1], [1, 2], [2, 3]])


@pytest.fixture
def tiny_dataset():
    return make_synthetic_dataset(n=48, num_classes=2, num_features=6, p_in=0.2, p_out=0.02,
                                  train_per_class=10, seed=3)


@pytest.fixture
def dataset_file(tmp_path, tiny_dataset):
    return save_dataset(tiny_dataset, tmp_path / "data" / "tiny.json")


@pytest.fixture
def write_config(tmp_path, dataset_file):
    """Write a config next to the dataset and parse it"""
    def _write(overrides=None, name="config.json"):
        data = json.loads(json.dumps(TINY_CONFIG))
        data["dataset"] = str(dataset_file)
        data["output_dir"] = str(tmp_path / "out")
        for key, value in (overrides or {}).items():
            data[key] = value
        path = tmp_path / name
        path.write_text(json.dumps(data), encoding="utf-8")
        return path

    return _write


@pytest.fixture
def tiny_config(write_config):
    return parse_config(write_config())
