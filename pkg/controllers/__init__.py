"""Controllers package"""
from .experiment_controller import experiment_bp
from .perturbation_controller import perturbation_bp
from .tensor_controller import tensor_bp

__all__ = ['tensor_bp', 'perturbation_bp', 'experiment_bp']
