"""
Archivo principal - Index
Aquí se cargan y registran todos los módulos del API
"""
import logging

from flask import Flask
from flask_cors import CORS

from cli import odeco
from config import get_config
from controllers.experiment_controller import experiment_bp
from controllers.perturbation_controller import perturbation_bp
from controllers.tensor_controller import tensor_bp
from middleware.error_middleware import register_error_handlers


def create_app(config_class=None):
    """Factory function para crear la aplicación Flask"""
    app = Flask(__name__)
    app.config.from_object(config_class or get_config())
    app.logger.setLevel(getattr(logging, str(app.config['LOG_LEVEL']).upper(), logging.INFO))
    # CORS sólo para la API v0
    CORS(app, resources={
        r"/v0/*": {
            "origins": "*",
            "methods": ["GET", "POST", "OPTIONS"],
            "allow_headers": ["Content-Type"],
            "expose_headers": ["Content-Type"],
            "max_age": 3600
        }
    })

    # Registrar blueprints (módulos)
    app.register_blueprint(tensor_bp, url_prefix='/v0/tensors')
    app.register_blueprint(perturbation_bp, url_prefix='/v0/perturbation')
    app.register_blueprint(experiment_bp, url_prefix='/v0/experiments')
    register_error_handlers(app)

    # flask --app app odeco ...
    app.cli.add_command(odeco)

    @app.route('/')
    def index():
        return {
            'message': 'Odeco - perturbación de tensores ortogonalmente descomponibles',
            'version': '0.1.0',
            'api_version': 'v0',
            'endpoints': {
                'tensors': '/v0/tensors',
                'perturbation': '/v0/perturbation',
                'experiments': '/v0/experiments',
            }
        }

    @app.route('/health')
    def health():
        return {'status': 'healthy', 'version': 'v0'}, 200

    return app


if __name__ == '__main__':
    app = create_app()
    app.run(debug=app.config['DEBUG'], host='0.0.0.0', port=5000)
