import numpy as np
import pytest

from glintgaze.scene import CONSISTENT, default_physiology, default_scene, make_target_grid
from glintgaze.simulator import NoiseModel, generate_dataset


@pytest.fixture(scope="session")
def scene():
    return default_scene()


@pytest.fixture(scope="session")
def consistent_eye(scene):
    return default_physiology(scene.camera, pupil_mode=CONSISTENT)


@pytest.fixture(scope="session")
def grid(scene):
    return make_target_grid(scene.grid)


@pytest.fixture(scope="session")
def clean_dataset(scene, consistent_eye, grid):
    return generate_dataset(scene, [consistent_eye], grid, 1, NoiseModel())


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for key in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[key])
