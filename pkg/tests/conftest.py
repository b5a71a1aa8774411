"""Shared fixtures: procedural rigs and one generated egocentric scene."""

from __future__ import annotations

import numpy as np
import pytest

from evego.data import SceneConfig, generate_synthetic_scene
from evego.events import EventStream, EventWindow, SensorGeometry, validate_stream
from evego.hand_model import make_minimal_rig, make_synthetic_rig


@pytest.fixture(scope="session")
def minimal_rig():
    return make_minimal_rig(seed=0)


@pytest.fixture(scope="session")
def synthetic_rig():
    return make_synthetic_rig(seed=0)


@pytest.fixture(scope="session")
def egocentric_scene(tmp_path_factory):
    """Default scene: moving hand over a scrolling background, built once."""
    out = tmp_path_factory.mktemp("scenes") / "egocentric"
    manifest = generate_synthetic_scene(out, SceneConfig(seed=5))
    return out, manifest


def make_stream(rows, width=346, height=260) -> EventStream:
    """Validated stream from (x, y, t, p) tuples."""
    geometry = SensorGeometry(width=width, height=height)
    if not rows:
        return EventStream.empty(geometry)
    x, y, t, p = (np.array(col) for col in zip(*rows))
    return validate_stream((x, y, t, p), geometry)


def make_window(rows, start, end, width=346, height=260) -> EventWindow:
    return EventWindow(start_t=start, end_t=end, events=make_stream(rows, width, height))
