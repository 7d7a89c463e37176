"""
Report Repository
Escritura de reportes CSV con pandas. Cada archivo lleva una cabecera de
procedencia ("# clave=valor") con la configuración y la semilla.
"""
import io
import logging
import os
from typing import Any, Dict, Optional, Tuple

import pandas as pd

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"


class ReportRepository:
    """Repositorio de reportes en CSV con precisión doble completa."""

    def __init__(self, base_dir: Optional[str] = None):
        self.base_dir = base_dir or "."

    def _path(self, path: str) -> str:
        return path if os.path.isabs(path) else os.path.join(self.base_dir, path)

    @staticmethod
    def render(frame: pd.DataFrame, metadata: Optional[Dict[str, Any]] = None) -> str:
        """Cabecera de procedencia más el CSV, como texto."""
        buffer = io.StringIO()
        for key, value in (metadata or {}).items():
            buffer.write(f"# {key}={value}\n")
        frame.to_csv(buffer, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
        return buffer.getvalue()

    def write_frame(self, path: str, frame: pd.DataFrame, metadata: Optional[Dict[str, Any]] = None) -> str:
        full = self._path(path)
        folder = os.path.dirname(full)
        if folder:
            os.makedirs(folder, exist_ok=True)
        with open(full, "w", encoding="utf-8", newline="") as fh:
            fh.write(self.render(frame, metadata))
        logger.info("✓ Reporte guardado: %s (%d filas)", full, len(frame))
        return full

    def read_frame(self, path: str) -> Tuple[pd.DataFrame, Dict[str, str]]:
        """Devuelve (DataFrame, metadatos) separando la cabecera de procedencia."""
        full = self._path(path)
        metadata: Dict[str, str] = {}
        body = []
        with open(full, "r", encoding="utf-8") as fh:
            for line in fh:
                if line.startswith("# ") and not body:
                    key, _, value = line[2:].rstrip("\n").partition("=")
                    metadata[key] = value
                else:
                    body.append(line)
        frame = pd.read_csv(io.StringIO("".join(body)))
        return frame, metadata
