import logging
from typing import Any

import pytest

from soft_swim.core.geometry.core import build_swimmer
from soft_swim.core.geometry.model import (
    DesignKind,
    SwimmerDesign,
    SwimmerMesh,
)
from soft_swim.harness.model import RunConfig
from soft_swim.utils.logging import Logger

Logger.setLevel(logging.WARNING)


def merge(base: dict[str, Any], extra: dict[str, Any]) -> dict[str, Any]:
    merged = dict(base)
    for key, value in extra.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = merge(merged[key], value)
        else:
            merged[key] = value
    return merged


# 4x4 cells of a 5 mm carangiform sheet: a few seconds per cycle
TINY = {
    "design": {
        "kind": "CarangiformLike",
        "characteristic_length": 5e-3,
        "mesh_resolution": 1.25e-3,
    },
    "material": {"thickness": 2.5e-4},
    "sim": {
        "dt": 4e-4,
        "n_cycles_max": 2,
        "samples_per_cycle": 5,
        "snapshots": False,
    },
    "flow": {"enabled": False},
    "sweep": {"workers": 1},
}


def tiny_config(**sections: dict[str, Any]) -> RunConfig:
    return RunConfig.model_validate(merge(TINY, sections))


@pytest.fixture
def strip_design() -> SwimmerDesign:
    return SwimmerDesign(
        kind=DesignKind.CARANGIFORM,
        length=2.0,
        width=1.0,
        thickness=0.05,
        L0_over_L=0.5,
        mesh_resolution=0.25,
    )


@pytest.fixture
def strip(strip_design: SwimmerDesign) -> SwimmerMesh:
    return build_swimmer(strip_design)


@pytest.fixture
def tiny() -> RunConfig:
    return tiny_config()
