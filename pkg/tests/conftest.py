"""Shared fixtures: the dataset root resolves to real PhysioNet files when
ECGDENOISE_DATA points at them, otherwise a deterministic synthetic WFDB
dataset is generated once per session."""

from __future__ import annotations

import os
import sys
from dataclasses import dataclass
from pathlib import Path

import pytest
from hypothesis import settings

sys.path.insert(0, str(Path(__file__).parent))

import wfdbgen

settings.register_profile("deterministic", deadline=None, derandomize=True)
settings.load_profile("deterministic")


@dataclass
class Dataset:
    root: Path
    generated: bool
    truth: dict  # record name -> wfdbgen.RecordTruth; empty for real data


@pytest.fixture(scope="session")
def dataset(tmp_path_factory) -> Dataset:
    env = os.environ.get("ECGDENOISE_DATA")
    if env and (Path(env) / "118.hea").exists():
        return Dataset(root=Path(env), generated=False, truth={})
    root = tmp_path_factory.mktemp("wfdb_fixtures")
    truth = wfdbgen.build_dataset(root)
    return Dataset(root=root, generated=True, truth=truth)


@pytest.fixture(scope="session")
def data_root(dataset) -> Path:
    return dataset.root
