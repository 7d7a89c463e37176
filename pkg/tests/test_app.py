import numpy as np
import pytest

from repositories.tensor_repository import TensorRepository
from services.odeco import random_odeco, to_dense, weyl_pair


def dense_payload(t):
    return TensorRepository.tensor_to_payload(to_dense(t))


def test_index_and_health(client):
    assert client.get('/').get_json()['api_version'] == 'v0'
    response = client.get('/health')
    assert response.status_code == 200
    assert response.get_json()['status'] == 'healthy'


def test_config_is_testing_profile(app):
    assert app.config['TESTING'] is True
    assert app.config['ITER_RESTARTS'] == 10


# ============ TENSORES ============

def test_spectral_norm_endpoint(client):
    values = np.zeros((2, 2, 2))
    values[0, 0, 0] = 3.0
    response = client.post('/v0/tensors/spectral-norm',
                           json={'dims': [2, 2, 2], 'values': values.ravel().tolist(), 'seed': 4})
    assert response.status_code == 200
    body = response.get_json()
    assert body['error'] is None
    record = body['recordsets'][0]
    assert record['norm'] == pytest.approx(3.0)
    assert record['seed'] == 4


def test_decompose_endpoint(client):
    truth = random_odeco((3, 3, 3), 2, [4.0, 1.0], seed=6)
    response = client.post('/v0/tensors/decompose', json={**dense_payload(truth), 'r': 2, 'seed': 0})
    assert response.status_code == 200
    record = response.get_json()['recordsets'][0]
    assert record['complete'] is True
    assert record['odeco']['lambdas'][:2] == pytest.approx([4.0, 1.0], abs=1e-8)
    assert max(record['residuals']) < 1e-8


def test_hosvd_endpoint(client):
    truth = random_odeco((3, 4, 3), 3, [3.0, 2.0, 1.0], seed=7)
    response = client.post('/v0/tensors/hosvd', json=dense_payload(truth))
    assert response.status_code == 200
    assert response.get_json()['recordsets'][0]['lambdas'] == pytest.approx([3.0, 2.0, 1.0], abs=1e-10)


@pytest.mark.parametrize('body, status', [
    ({'dims': [2, 2], 'values': [1, 2, 3]}, 400),
    ({'dims': [2, 2, 2], 'values': [0] * 8}, 400),
    ({'dims': [2, 2, 2], 'values': [0] * 8, 'r': 'dos'}, 400),
    ({'dims': [2, 2, 2], 'values': [1] + [0] * 7, 'r': 1, 'deflation_mode': 'x'}, 400),
])
def test_decompose_errors(client, body, status):
    response = client.post('/v0/tensors/decompose', json=body)
    assert response.status_code == status
    assert response.get_json()['error']


def test_non_json_body(client):
    response = client.post('/v0/tensors/hosvd', data='no es json', content_type='text/plain')
    assert response.status_code == 400
    assert response.get_json()['recordsets'] == []


def test_unknown_route_is_json(client):
    response = client.get('/v0/nada')
    assert response.status_code == 404
    assert response.get_json()['error']


# ============ PERTURBACIÓN ============

def test_verify_endpoint_weyl_pair(client):
    a, b = weyl_pair()
    response = client.post('/v0/perturbation/verify', json={
        'a': TensorRepository.odeco_to_payload(a),
        'b': TensorRepository.odeco_to_payload(b),
        'restarts': 60,
    })
    assert response.status_code == 200
    record = response.get_json()['recordsets'][0]
    assert record['delta'] == pytest.approx(4.0 / np.sqrt(3.0), abs=1e-6)
    assert record['passed'] is True
    assert len(record['rows']) == 2
    assert record['rows'][1]['second_order_resid'] is None


def test_verify_requires_both_tensors(client):
    response = client.post('/v0/perturbation/verify', json={'a': {}})
    assert response.status_code == 400


def test_constants_endpoint(client):
    response = client.post('/v0/perturbation/constants', json={'epsilon': 2.94})
    assert response.status_code == 200
    record = response.get_json()['recordsets'][0]
    assert record['binding'] == 'h4'
    assert record['objective'] == pytest.approx(16.48, abs=0.05)
    bad = client.post('/v0/perturbation/constants', json={'epsilon': 'grande'})
    assert bad.status_code == 400


# ============ EXPERIMENTOS ============

def test_counterexamples_endpoint(client):
    response = client.get('/v0/experiments/counterexamples')
    assert response.status_code == 200
    body = response.get_json()
    assert body['passed'] is True
    names = {record['name'] for record in body['recordsets']}
    assert {'weyl_delta', 'matricization_ratio', 'swapped_matching'} <= names


def test_constants_table_endpoint(client):
    response = client.get('/v0/experiments/constants?p=3')
    body = response.get_json()
    assert response.status_code == 200
    assert 2.7 <= body['summary']['argmin'] <= 3.2
    assert client.get('/v0/experiments/constants?p=tres').status_code == 400
