import json

import pytest

from backend import config as settings
from backend.core.errors import ConfigError


def test_defaults():
    cfg = settings.load_config({'surface': 'square-torus', 'experiment': 'flow'})
    assert cfg.eps == '1/8'
    assert cfg.seed == 0
    assert cfg.jobs == 1
    assert cfg.number('cap') == 64
    assert cfg.number('x0') is None


def test_environment_defaults(monkeypatch):
    monkeypatch.setenv('BSFLAB_SEED', '17')
    monkeypatch.setenv('BSFLAB_CAP', '1/2+1/2√5')
    cfg = settings.load_config({'surface': 'square-torus', 'experiment': 'flow'})
    assert cfg.seed == 17
    assert str(cfg.number('cap')) == '1/2+1/2√5'


def test_file_overrides_environment_and_flags_override_file(monkeypatch, tmp_path):
    monkeypatch.setenv('BSFLAB_SEED', '17')
    path = tmp_path / 'run.json'
    path.write_text(json.dumps({'seed': 5, 'trials': 9, 'surface': 'pillowcase'}))
    cfg = settings.load_config({'experiment': 'flow', 'trials': 3, 'surface': None}, str(path))
    assert cfg.seed == 5
    assert cfg.trials == 3
    assert cfg.surface == 'pillowcase'


def test_bad_literal_names_field_and_location(tmp_path):
    path = tmp_path / 'run.json'
    path.write_text(json.dumps({'surface': 'pillowcase', 'experiment': 'flow', 'eps': 'tiny'}))
    with pytest.raises(ConfigError) as info:
        settings.load_config({}, str(path))
    assert info.value.field == 'eps'
    assert info.value.location == str(path)


def test_non_positive_eps():
    with pytest.raises(ConfigError) as info:
        settings.load_config({'surface': 'pillowcase', 'experiment': 'flow', 'eps': '-1/4'})
    assert info.value.field == 'eps'
    assert info.value.location == '<flags>'


def test_unknown_key_is_rejected(tmp_path):
    path = tmp_path / 'run.json'
    path.write_text(json.dumps({'surface': 'pillowcase', 'experiment': 'flow', 'epsilon': '1/4'}))
    with pytest.raises(ConfigError) as info:
        settings.load_config({}, str(path))
    assert info.value.field == 'epsilon'


def test_unknown_experiment():
    with pytest.raises(ConfigError) as info:
        settings.load_config({'surface': 'pillowcase', 'experiment': 'teleport'})
    assert info.value.field == 'experiment'


def test_seed_range():
    with pytest.raises(ConfigError):
        settings.load_config({'surface': 'pillowcase', 'experiment': 'flow', 'seed': 2 ** 64})


def test_unreadable_config_file(tmp_path):
    with pytest.raises(ConfigError):
        settings.read_config_file(str(tmp_path / 'missing.json'))
    bad = tmp_path / 'bad.json'
    bad.write_text('{"seed": ')
    with pytest.raises(ConfigError) as info:
        settings.read_config_file(str(bad))
    assert 'invalid JSON' in str(info.value)
    listed = tmp_path / 'list.json'
    listed.write_text('[1, 2]')
    with pytest.raises(ConfigError):
        settings.read_config_file(str(listed))


def test_seeded_generator_is_reproducible():
    cfg = settings.load_config({'surface': 'pillowcase', 'experiment': 'flow', 'seed': 11})
    assert cfg.rng().integers(1000, size=5).tolist() == cfg.rng().integers(1000, size=5).tolist()
