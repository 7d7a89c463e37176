"""
Tensor Controller
Endpoints de norma espectral, descomposición odeco y HOSVD
"""
from flask import Blueprint, current_app, jsonify

from config import iteration_config, spectral_config
from middleware.error_middleware import handle_domain_errors, json_body
from repositories.tensor_repository import TensorRepository
from services.decompose import decompose_odeco, hosvd
from services.exceptions import InvalidParameterError
from services.odeco import SingularTuple, tuple_residual
from services.tensor_core import spectral_norm_with

tensor_bp = Blueprint('tensors', __name__)
tensor_repository = TensorRepository()


def _optional_int(data: dict, key: str):
    value = data.get(key)
    if value is None:
        return None
    if not isinstance(value, int) or isinstance(value, bool):
        raise InvalidParameterError(f"'{key}' debe ser un entero")
    return value


@tensor_bp.route('/spectral-norm', methods=['POST'])
@handle_domain_errors
def spectral_norm():
    """
    Estima ||T|| con arranques múltiples

    URL: http://{server}:{port}/v0/tensors/spectral-norm

    Body (JSON):
    {
        "dims": [2, 2, 2],
        "values": [1, 0, 0, 0, 0, 0, 0, 0],
        "restarts": 200,
        "seed": 0
    }
    """
    data = json_body()
    tensor = tensor_repository.tensor_from_payload(data)
    cfg = spectral_config(current_app.config, restarts=_optional_int(data, 'restarts'),
                          seed=_optional_int(data, 'seed'))
    estimate, point = spectral_norm_with(tensor, cfg)
    return jsonify({
        'error': None,
        'recordsets': [{
            'norm': estimate,
            'point': [f.tolist() for f in point.factors],
            'restarts': cfg.restarts,
            'seed': cfg.seed,
        }],
    })


@tensor_bp.route('/decompose', methods=['POST'])
@handle_domain_errors
def decompose():
    """
    Descomposición odeco por iteración de gradiente y deflación

    URL: http://{server}:{port}/v0/tensors/decompose

    Body (JSON):
    {
        "dims": [...], "values": [...], "r": 2,
        "restarts": 50, "seed": 0, "deflation_mode": "orthogonal_complement"
    }
    """
    data = json_body()
    tensor = tensor_repository.tensor_from_payload(data)
    r = _optional_int(data, 'r')
    if r is None:
        raise InvalidParameterError("falta 'r'")
    cfg = iteration_config(current_app.config, restarts=_optional_int(data, 'restarts'),
                           deflation_mode=data.get('deflation_mode', 'orthogonal_complement'))
    seed = _optional_int(data, 'seed')
    result = decompose_odeco(tensor, r, cfg, seed=current_app.config['ODECO_SEED'] if seed is None else seed)
    residuals = [
        tuple_residual(tensor, SingularTuple(float(result.odeco.lambdas[k]), result.odeco.component(k)))
        for k in range(result.found)
    ]
    return jsonify({
        'error': None,
        'recordsets': [{
            'requested': result.requested,
            'found': result.found,
            'complete': result.complete,
            'iterations': list(result.iterations),
            'residuals': residuals,
            'odeco': tensor_repository.odeco_to_payload(result.odeco),
        }],
    })


@tensor_bp.route('/hosvd', methods=['POST'])
@handle_domain_errors
def hosvd_endpoint():
    """
    Vectores singulares de las matricizaciones

    URL: http://{server}:{port}/v0/tensors/hosvd
    """
    data = json_body()
    tensor = tensor_repository.tensor_from_payload(data)
    return jsonify({'error': None, 'recordsets': [tensor_repository.odeco_to_payload(hosvd(tensor))]})
