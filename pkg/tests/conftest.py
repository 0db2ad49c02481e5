import os

import pytest

from backend.core.surface_manager import SurfaceManager

DATA_DIR = os.path.join(os.path.dirname(__file__), '..', 'data', 'surfaces')
SCHEDULE_DIR = os.path.join(os.path.dirname(__file__), '..', 'data', 'schedules')


@pytest.fixture(scope='session')
def manager():
    m = SurfaceManager(DATA_DIR)
    m.load_directory()
    return m


@pytest.fixture(scope='session')
def square(manager):
    return manager.resolve('square-torus')


@pytest.fixture(scope='session')
def golden(manager):
    return manager.resolve('golden-sheared-torus')


@pytest.fixture(scope='session')
def pillowcase(manager):
    return manager.resolve('pillowcase')


@pytest.fixture(scope='session')
def origami(manager):
    return manager.resolve('L-origami')


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    for var in ('BSFLAB_SEED', 'BSFLAB_JOBS', 'BSFLAB_CAP', 'BSFLAB_OUT'):
        monkeypatch.delenv(var, raising=False)
