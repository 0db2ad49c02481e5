import json
import os

import pytest

from backend import cli
from tests.conftest import DATA_DIR


@pytest.fixture(autouse=True)
def data_dir(monkeypatch):
    monkeypatch.setenv('BSFLAB_DATA_DIR', DATA_DIR)


def test_validate_writes_reports(tmp_path, capsys):
    status = cli.main(['validate', '--surface', 'pillowcase', '--out', str(tmp_path)])
    assert status == 0
    assert 'validate: PASS' in capsys.readouterr().out
    report = json.loads((tmp_path / 'validate.json').read_text())
    assert report['schemaVersion'] == 1
    assert os.path.exists(tmp_path / 'validate.csv')


def test_surface_file_path(tmp_path, capsys):
    status = cli.main(['validate', '--surface', os.path.join(DATA_DIR, 'L-origami.surf')])
    assert status == 0
    assert json.loads(capsys.readouterr().out)['surface'] == 'L-origami'


def test_unknown_surface_exits_with_error(capsys):
    status = cli.main(['validate', '--surface', 'klein-bottle'])
    assert status == 1
    error = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert error['error'] == 'SurfaceFormatError'


def test_bad_flag_value_is_a_config_error(capsys):
    status = cli.main(['flow', '--surface', 'pillowcase', '--eps', 'small'])
    assert status == 1
    assert 'ConfigError' in capsys.readouterr().err


def test_failing_certificate_exits_with_two(tmp_path):
    schedule = tmp_path / 'schedule.json'
    schedule.write_text(json.dumps({'entries': [{'B': '1', 'eps': '1/2'}, {'B': '2', 'eps': '1/2'}]}))
    status = cli.main(['converge', '--surface', 'pillowcase', '--sequence', 'constant',
                       '--count', '3', '--schedule', str(schedule), '--out', str(tmp_path)])
    assert status == 2
    report = json.loads((tmp_path / 'converge.json').read_text())
    assert report['verdict'] == 'FAIL'


def test_slope_argument():
    args = cli.build_parser().parse_args(['bicorn', '--surface', 'square-torus', '--alpha', '2,-3'])
    assert args.alpha == (2, -3)
    with pytest.raises(SystemExit):
        cli.build_parser().parse_args(['bicorn', '--alpha', 'two'])


@pytest.mark.parametrize('name', ['square-torus', 'golden-sheared-torus', 'pillowcase', 'L-origami'])
def test_every_shipped_surface_validates(name, capsys):
    assert cli.main(['validate', '--surface', name]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report['verdict'] == 'PASS'
    assert all(a['valid'] for a in report['summary']['automorphisms'])
