"""
Tensor Repository
Lectura y escritura de tensores densos, odeco y CP incoherentes en los
formatos de texto, más la conversión desde y hacia payloads JSON.
"""
import logging
import os
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from services.exceptions import TensorFormatError
from services.incoherent import IncoherentCP
from services.odeco import OdecoTensor
from services.tensor_core import DenseTensor

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"


def _tokens(text: str) -> List[List[str]]:
    """Líneas no vacías partidas en tokens; '#' inicia un comentario."""
    lines = []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            lines.append(line.split())
    return lines


def _ints(tokens: List[str], what: str) -> List[int]:
    try:
        values = [int(tok) for tok in tokens]
    except ValueError as exc:
        raise TensorFormatError(f"cabecera {what} inválida: {' '.join(tokens)}") from exc
    if any(v <= 0 for v in values):
        raise TensorFormatError(f"cabecera {what} con enteros no positivos: {values}")
    return values


def _floats(tokens: List[str], expected: int, what: str) -> np.ndarray:
    if len(tokens) != expected:
        raise TensorFormatError(f"{what}: se esperaban {expected} valores, hay {len(tokens)}")
    try:
        values = np.array([float(tok) for tok in tokens])
    except ValueError as exc:
        raise TensorFormatError(f"{what}: valor no numérico") from exc
    if not np.all(np.isfinite(values)):
        raise TensorFormatError(f"{what}: NaN o Inf no permitidos")
    return values


def _flatten(lines: List[List[str]]) -> List[str]:
    return [tok for line in lines for tok in line]


def _format_row(values) -> str:
    return " ".join(FLOAT_FORMAT % v for v in np.ravel(values))


class TensorRepository:
    """
    Repositorio de archivos de tensores.

    Formato denso:    "p d_1 ... d_p" y luego un valor por línea (row-major).
    Formato odeco:    "p d_1 ... d_p r", los r lambdas en una línea y p
                      bloques d_q x r en row-major.
    Formato CP:       igual que odeco con eta en lugar de lambda.
    Las rutas relativas se resuelven contra base_dir.
    """

    def __init__(self, base_dir: Optional[str] = None):
        self.base_dir = base_dir or "."

    def _path(self, path: str) -> str:
        return path if os.path.isabs(path) else os.path.join(self.base_dir, path)

    def _read(self, path: str) -> List[List[str]]:
        full = self._path(path)
        try:
            with open(full, "r", encoding="utf-8") as fh:
                lines = _tokens(fh.read())
        except OSError as exc:
            raise TensorFormatError(f"no se pudo leer {full}: {exc}") from exc
        if not lines:
            raise TensorFormatError(f"{full} está vacío")
        return lines

    def _write(self, path: str, lines: List[str]) -> str:
        full = self._path(path)
        folder = os.path.dirname(full)
        if folder:
            os.makedirs(folder, exist_ok=True)
        with open(full, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")
        return full

    # ============ TENSOR DENSO ============

    def parse_tensor(self, text: str) -> DenseTensor:
        lines = _tokens(text)
        if not lines:
            raise TensorFormatError("archivo de tensor vacío")
        header = _ints(lines[0], "de tensor")
        p, dims = header[0], header[1:]
        if p < 2 or len(dims) != p:
            raise TensorFormatError(f"cabecera de tensor inconsistente: p = {p}, dims = {dims}")
        values = _floats(_flatten(lines[1:]), int(np.prod(dims)), "tensor")
        return DenseTensor.from_flat(dims, values)

    def read_tensor(self, path: str) -> DenseTensor:
        tensor = self.parse_tensor("\n".join(" ".join(line) for line in self._read(path)))
        logger.info("✓ Tensor cargado: %s", "x".join(map(str, tensor.dims)))
        return tensor

    def write_tensor(self, path: str, t: DenseTensor) -> str:
        lines = [" ".join(map(str, [t.order, *t.dims]))]
        lines.extend(FLOAT_FORMAT % v for v in t.flat())
        return self._write(path, lines)

    # ============ ODECO Y CP ============

    def _parse_components(self, text: str, what: str) -> Tuple[np.ndarray, List[np.ndarray]]:
        lines = _tokens(text)
        if len(lines) < 2:
            raise TensorFormatError(f"archivo {what} incompleto")
        header = _ints(lines[0], what)
        p = header[0]
        if p < 2 or len(header) != p + 2:
            raise TensorFormatError(f"cabecera {what} inconsistente: {header}")
        dims, r = header[1:-1], header[-1]
        weights = _floats(lines[1], r, f"{what}: pesos")
        entries = _floats(_flatten(lines[2:]), r * sum(dims), f"{what}: factores")
        factors = []
        offset = 0
        for d in dims:
            factors.append(entries[offset: offset + d * r].reshape(d, r))
            offset += d * r
        return weights, factors

    def parse_odeco(self, text: str) -> OdecoTensor:
        lambdas, factors = self._parse_components(text, "odeco")
        if lambdas.shape[0] > min(f.shape[0] for f in factors):
            raise TensorFormatError("r excede d_min")
        return OdecoTensor.from_components(lambdas, factors)

    def read_odeco(self, path: str) -> OdecoTensor:
        return self.parse_odeco("\n".join(" ".join(line) for line in self._read(path)))

    def _write_components(self, path: str, weights: np.ndarray, factors) -> str:
        r = weights.shape[0]
        lines = [" ".join(map(str, [len(factors), *[f.shape[0] for f in factors], r]))]
        lines.append(_format_row(weights))
        for f in factors:
            lines.extend(_format_row(row) for row in f)
        return self._write(path, lines)

    def write_odeco(self, path: str, t: OdecoTensor) -> str:
        return self._write_components(path, t.lambdas, t.factors)

    def parse_incoherent(self, text: str) -> IncoherentCP:
        etas, factors = self._parse_components(text, "CP")
        try:
            return IncoherentCP(etas, tuple(factors))
        except ValueError as exc:
            raise TensorFormatError(f"CP inválido: {exc}") from exc

    def read_incoherent(self, path: str) -> IncoherentCP:
        return self.parse_incoherent("\n".join(" ".join(line) for line in self._read(path)))

    def write_incoherent(self, path: str, x: IncoherentCP) -> str:
        return self._write_components(path, x.etas, x.factors)

    # ============ PAYLOADS JSON ============

    @staticmethod
    def tensor_from_payload(payload: Dict[str, Any]) -> DenseTensor:
        """{"dims": [...], "values": [...]} con values plano (row-major) o anidado."""
        if not isinstance(payload, dict) or "dims" not in payload or "values" not in payload:
            raise TensorFormatError("el payload necesita 'dims' y 'values'")
        dims = payload["dims"]
        if not isinstance(dims, list) or not all(isinstance(d, int) and d > 0 for d in dims):
            raise TensorFormatError(f"dims inválidas: {dims}")
        try:
            values = np.asarray(payload["values"], dtype=float).ravel()
        except (TypeError, ValueError) as exc:
            raise TensorFormatError("values no es numérico") from exc
        if values.shape[0] != int(np.prod(dims)):
            raise TensorFormatError(f"se esperaban {int(np.prod(dims))} valores, hay {values.shape[0]}")
        return DenseTensor.from_flat(dims, values)

    @staticmethod
    def tensor_to_payload(t: DenseTensor) -> Dict[str, Any]:
        return {"dims": list(t.dims), "values": t.flat().tolist()}

    @staticmethod
    def odeco_from_payload(payload: Dict[str, Any]) -> OdecoTensor:
        """{"dims": [...], "lambdas": [...], "factors": [d_q x r listas anidadas]}."""
        if not isinstance(payload, dict) or not {"dims", "lambdas", "factors"} <= set(payload):
            raise TensorFormatError("el payload odeco necesita 'dims', 'lambdas' y 'factors'")
        try:
            lambdas = np.asarray(payload["lambdas"], dtype=float).ravel()
            factors = [np.asarray(f, dtype=float) for f in payload["factors"]]
        except (TypeError, ValueError) as exc:
            raise TensorFormatError("payload odeco no numérico") from exc
        dims = list(payload["dims"])
        r = lambdas.shape[0]
        if len(factors) != len(dims) or any(f.shape != (d, r) for f, d in zip(factors, dims)):
            raise TensorFormatError(f"factores incompatibles con dims = {dims} y r = {r}")
        if not (np.all(np.isfinite(lambdas)) and all(np.all(np.isfinite(f)) for f in factors)):
            raise TensorFormatError("NaN o Inf no permitidos")
        return OdecoTensor.from_components(lambdas, factors)

    @staticmethod
    def odeco_to_payload(t: OdecoTensor) -> Dict[str, Any]:
        return {
            "dims": list(t.dims),
            "lambdas": t.lambdas.tolist(),
            "factors": [f.tolist() for f in t.factors],
        }
