import json

import pytest

from backend import config as settings
from backend.core.errors import ConfigError
from backend.metrics import experiments


def _cfg(**flags):
    return settings.load_config(flags)


def test_validate_pillowcase(manager):
    result = experiments.run(_cfg(surface='pillowcase', experiment='validate'), manager)
    assert result.passed
    assert result.status == experiments.STATUS_PASS
    assert result.summary['coverDegree'] == 2
    assert result.summary['gaussBonnet']['holds']
    assert sorted(result.detail['k']) == [1, 1, 1, 1, 2]


def test_results_are_cached(manager):
    cfg = _cfg(surface='pillowcase', experiment='validate')
    assert experiments.run(cfg, manager) is experiments.run(cfg, manager)


def test_iet_on_golden_torus(manager):
    result = experiments.run(_cfg(surface='golden-sheared-torus', experiment='iet', iterates=30), manager)
    assert result.summary['rotation']
    assert result.summary['maxDistinctGaps'] <= 3
    assert result.verdict == 'PASS'
    assert result.summary['fubiniTotal'] == result.summary['area']


def test_iet_needs_a_transversal(manager):
    with pytest.raises(ConfigError):
        experiments.run(_cfg(surface='L-origami', experiment='iet'), manager)


def test_axis_under_identity(manager):
    cfg = _cfg(surface='square-torus', experiment='axis', automorphism='identity', iterates=2)
    result = experiments.run(cfg, manager)
    assert result.summary['signature'] == 'elliptic'
    assert result.verdict == 'n/a'
    assert 'distanceLower_tag' in result.detail.columns


def test_json_report_shape(manager):
    cfg = _cfg(surface='pillowcase', experiment='validate', seed=3)
    result = experiments.run(cfg, manager)
    report = json.loads(experiments.to_json(result, cfg))
    assert report['schemaVersion'] == 1
    assert report['seed'] == 3
    assert report['verdict'] == 'PASS'
    assert report['config']['experiment'] == 'validate'


def test_quadnum_encoding():
    from backend.core.numerics import parse
    assert experiments.encode(parse('1/2+1/2√5')) == {'value': '1/2+1/2√5', 'approx': '1.618033988749'}


def test_write_outputs(manager, tmp_path):
    cfg = _cfg(surface='pillowcase', experiment='validate', out=str(tmp_path))
    result = experiments.run(cfg, manager)
    written = experiments.write_outputs(result, cfg)
    assert sorted(written) == [str(tmp_path / 'validate.csv'), str(tmp_path / 'validate.json')]
    assert json.loads((tmp_path / 'validate.json').read_text())['surface'] == 'pillowcase'
    assert (tmp_path / 'validate.csv').read_text().splitlines()[0].startswith('cone,')
