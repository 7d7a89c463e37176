"""
Perturbation Controller
Verificación de cotas entre dos tensores odeco y constantes c_eps
"""
import math
from dataclasses import asdict

from flask import Blueprint, current_app, jsonify

from config import spectral_config
from middleware.error_middleware import handle_domain_errors, json_body
from repositories.tensor_repository import TensorRepository
from services.exceptions import InvalidParameterError
from services.perturb import constants, report_frame, verify_bounds

perturbation_bp = Blueprint('perturbation', __name__)
tensor_repository = TensorRepository()


def clean(record: dict) -> dict:
    """inf y NaN no son JSON válido: se envían como null"""
    out = {}
    for key, value in record.items():
        if isinstance(value, float) and not math.isfinite(value):
            value = None
        elif hasattr(value, 'item'):
            value = value.item()
            if isinstance(value, float) and not math.isfinite(value):
                value = None
        out[key] = value
    return out


def _number(data: dict, key: str, default):
    value = data.get(key, default)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise InvalidParameterError(f"'{key}' debe ser numérico")
    return value


@perturbation_bp.route('/verify', methods=['POST'])
@handle_domain_errors
def verify():
    """
    Contrasta dos tensores odeco con las cotas de perturbación

    URL: http://{server}:{port}/v0/perturbation/verify

    Body (JSON):
    {
        "a": {"dims": [...], "lambdas": [...], "factors": [...]},
        "b": {"dims": [...], "lambdas": [...], "factors": [...]},
        "epsilon": 0.05,
        "restarts": 200,
        "seed": 0
    }
    """
    data = json_body()
    if 'a' not in data or 'b' not in data:
        raise InvalidParameterError("se necesitan los tensores 'a' y 'b'")
    a = tensor_repository.odeco_from_payload(data['a'])
    b = tensor_repository.odeco_from_payload(data['b'])
    epsilon = float(_number(data, 'epsilon', current_app.config['EPSILON']))
    restarts = data.get('restarts')
    seed = data.get('seed')
    cfg = spectral_config(current_app.config,
                          restarts=None if restarts is None else int(_number(data, 'restarts', 0)),
                          seed=None if seed is None else int(_number(data, 'seed', 0)))
    report = verify_bounds(a, b, epsilon, cfg)
    rows = [clean(record) for record in report_frame(report).to_dict('records')]
    return jsonify({
        'error': None,
        'recordsets': [{
            'delta': report.delta,
            'delta_is_estimate': report.delta_is_estimate,
            'epsilon': report.epsilon,
            'c_epsilon': report.c_epsilon,
            'passed': report.passed,
            'violations': report.violations,
            'pi': report.matching.pi.tolist(),
            'rows': rows,
        }],
    })


@perturbation_bp.route('/constants', methods=['POST'])
@handle_domain_errors
def constants_endpoint():
    """
    c_eps y el objetivo max{1+eps, 1/c_eps}

    URL: http://{server}:{port}/v0/perturbation/constants
    Body (JSON): {"epsilon": 2.94, "p": 3}
    """
    data = json_body()
    epsilon = float(_number(data, 'epsilon', current_app.config['EPSILON']))
    p = int(_number(data, 'p', 3))
    return jsonify({'error': None, 'recordsets': [clean(asdict(constants(epsilon, p)))]})
