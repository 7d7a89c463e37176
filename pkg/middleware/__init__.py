"""
Middleware de errores
"""
from .error_middleware import handle_domain_errors, json_body, register_error_handlers

__all__ = ['handle_domain_errors', 'json_body', 'register_error_handlers']
