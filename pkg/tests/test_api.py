import os

import pytest
from fastapi.testclient import TestClient

from tests.conftest import DATA_DIR


@pytest.fixture(scope='module')
def client():
    from backend.main import app
    with TestClient(app) as c:
        yield c


def test_status(client):
    body = client.get('/api/status').json()
    assert body['surfacesLoaded'] >= 4
    assert 'converge' in body['experiments']


def test_catalog(client):
    rows = client.get('/api/surfaces').json()
    names = [r['name'] for r in rows]
    assert 'pillowcase' in names
    assert next(r for r in rows if r['name'] == 'L-origami')['genus'] == 2


def test_surface_detail(client):
    body = client.get('/api/surfaces/pillowcase').json()
    assert body['chi'] == 2
    assert body['coverDegree'] == 2
    assert client.get('/api/surfaces/nowhere').status_code == 404


def test_upload_replaces_surface(client):
    with open(os.path.join(DATA_DIR, 'square-torus.surf'), 'rb') as fh:
        response = client.post('/api/upload', files={'file': ('square-torus.surf', fh, 'text/plain')})
    assert response.status_code == 200
    assert response.json()['name'] == 'square-torus'


def test_bad_upload_is_a_400(client):
    response = client.post('/api/upload', files={'file': ('junk.surf', b'polygon x\n', 'text/plain')})
    assert response.status_code == 400
    assert response.json()['error'] == 'SurfaceFormatError'


def test_export_catalog_csv(client):
    response = client.get('/api/export/surfaces')
    assert response.status_code == 200
    assert response.text.splitlines()[0].startswith('name,')


def test_run_validate(client):
    response = client.post('/api/experiments/validate', json={'surface': 'pillowcase'})
    assert response.status_code == 200
    body = response.json()
    assert body['verdict'] == 'PASS'
    assert body['status'] == 0


def test_invalid_config_is_a_422(client):
    response = client.post('/api/experiments/flow', json={'surface': 'pillowcase', 'eps': '-1'})
    assert response.status_code == 422
    assert response.json()['field'] == 'eps'


def test_unknown_experiment_is_a_404(client):
    assert client.post('/api/experiments/teleport', json={}).status_code == 404


def test_experiment_csv(client):
    response = client.post('/api/experiments/validate/csv', json={'surface': 'pillowcase'})
    assert response.status_code == 200
    assert response.text.startswith('cone,')
