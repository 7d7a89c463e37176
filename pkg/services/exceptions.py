"""
Excepciones del dominio
Jerarquía única para que controladores y CLI puedan mapear errores
"""


class OdecoError(Exception):
    """Error base de la librería"""


class DimensionMismatchError(OdecoError, ValueError):
    """Las dimensiones de los operandos no coinciden"""


class ModeIndexError(OdecoError, IndexError):
    """Índice de modo fuera de rango"""


class InvalidParameterError(OdecoError, ValueError):
    """Parámetro fuera de su dominio (r, restarts, epsilon, ...)"""


class DegeneratePointError(OdecoError, ArithmeticError):
    """Una contracción se anuló durante la iteración"""


class RankDeficientError(OdecoError, ValueError):
    """Matriz sin rango columna completo"""


class TensorFormatError(OdecoError, ValueError):
    """Archivo o payload con formato inválido"""


class ConstantsError(OdecoError, ValueError):
    """La bisección de h_i no encontró un intervalo válido"""
