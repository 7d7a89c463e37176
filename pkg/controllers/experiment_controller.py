"""
Experiment Controller
Contraejemplos y tabla de constantes (los experimentos largos viven en la CLI)
"""
from dataclasses import asdict

from flask import Blueprint, current_app, jsonify, request

from config import iteration_config, spectral_config
from controllers.perturbation_controller import clean
from middleware.error_middleware import handle_domain_errors
from services.exceptions import InvalidParameterError
from services.experiments import ExperimentConfig, constants_table, counterexamples

experiment_bp = Blueprint('experiments', __name__)


@experiment_bp.route('/counterexamples', methods=['GET'])
@handle_domain_errors
def get_counterexamples():
    """
    Comprobaciones cerradas (Weyl, matricización, min-max, 2 x 2, intercambio)

    URL: http://{server}:{port}/v0/experiments/counterexamples
    """
    config = current_app.config
    cfg = ExperimentConfig(
        experiment='counterexamples',
        seed=config['ODECO_SEED'],
        spectral=spectral_config(config),
        iteration=iteration_config(config),
    )
    result = counterexamples(cfg)
    return jsonify({
        'error': None,
        'passed': result.passed,
        'recordsets': [clean(asdict(check)) for check in result.checks],
    })


@experiment_bp.route('/constants', methods=['GET'])
@handle_domain_errors
def get_constants():
    """
    Tabla de c_eps en la malla 0.5..6 paso 0.02

    URL: http://{server}:{port}/v0/experiments/constants?p=3
    """
    raw = request.args.get('p', '3')
    if not raw.isdigit():
        raise InvalidParameterError("'p' debe ser un entero")
    result = constants_table(p=int(raw))
    return jsonify({
        'error': None,
        'summary': clean({key: result.metadata[key] for key in ('argmin', 'objective')}),
        'passed': result.passed,
        'recordsets': [clean(record) for record in result.frame.to_dict('records')],
    })
