"""
Middleware de errores
Traduce las excepciones del dominio a respuestas JSON con el sobre
{'error': ..., 'recordsets': [...]}
"""
import logging
from functools import wraps

from flask import jsonify, request
from werkzeug.exceptions import BadRequest, HTTPException

from services.exceptions import DegeneratePointError, OdecoError, RankDeficientError, TensorFormatError

logger = logging.getLogger(__name__)

UNPROCESSABLE = (DegeneratePointError, RankDeficientError)


def error_response(message: str, status: int):
    return jsonify({'error': message, 'recordsets': []}), status


def status_for(exc: OdecoError) -> int:
    """422 para puntos degenerados y rango deficiente, 400 para el resto."""
    return 422 if isinstance(exc, UNPROCESSABLE) else 400


def handle_domain_errors(f):
    """
    Decorador para endpoints que llaman a los servicios numéricos

    Uso:
        @tensor_bp.route('/decompose', methods=['POST'])
        @handle_domain_errors
        def decompose():
            ...
    """
    @wraps(f)
    def decorated(*args, **kwargs):
        try:
            return f(*args, **kwargs)
        except OdecoError as exc:
            logger.warning("%s en %s: %s", type(exc).__name__, f.__name__, exc)
            return error_response(str(exc), status_for(exc))
        except BadRequest as exc:
            return error_response(exc.description or 'JSON inválido', 400)

    return decorated


def register_error_handlers(app):
    """Respuestas JSON para errores que escapan de los endpoints"""

    @app.errorhandler(OdecoError)
    def handle_odeco_error(exc):
        return error_response(str(exc), status_for(exc))

    @app.errorhandler(HTTPException)
    def handle_http_error(exc):
        return error_response(exc.description or exc.name, exc.code or 500)


def json_body() -> dict:
    """Cuerpo JSON de la petición; un cuerpo ausente o mal formado es un 400"""
    data = request.get_json(silent=True)
    if not isinstance(data, dict):
        raise TensorFormatError('el cuerpo debe ser un objeto JSON')
    return data
