# app/db/run_store.py
import json
from fractions import Fraction
from pathlib import Path
from typing import Any, Iterable, List, Optional, Sequence

import numpy as np
from pydantic import BaseModel

from app.core.constants import CSV_DELIMITER, CSV_LINE_END
from app.core.errors import ConfigError, OutputMismatch
from app.core.logging import get_logger
from app.core.precision import format_float
from app.schemas.experiment import RunManifest
from app.schemas.operators import MatrixBlock

logger = get_logger("run_store")


def format_cell(value: Any) -> str:
    """One CSV cell; floats carry 17 significant digits"""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format_float(float(value))
    return str(value)


def to_jsonable(value: Any) -> Any:
    """JSON-safe form of report values; complex numbers become [re, im]"""
    if isinstance(value, BaseModel):
        return to_jsonable(value.model_dump())
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if np.isfinite(value) else format_float(value)
    if isinstance(value, (complex, np.complexfloating)):
        return [to_jsonable(value.real), to_jsonable(value.imag)]
    if isinstance(value, Fraction):
        return str(value)
    if isinstance(value, Path):
        return str(value)
    return value


class RunStore:
    """One output directory per run; every file written is listed in the manifest"""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        if self.root.exists() and not self.root.is_dir():
            raise ConfigError("output path exists and is not a directory", key="--out", value=str(self.root))
        self.root.mkdir(parents=True, exist_ok=True)
        self.outputs: List[str] = []

    def _path(self, name: str) -> Path:
        self.outputs.append(name)
        return self.root / name

    def write_csv(self, name: str, columns: Sequence[str], rows: Iterable[Sequence[Any]],
                  expected_rows: Optional[int] = None) -> Path:
        """Header row plus one line per row; a declared row count is enforced"""
        lines = [CSV_DELIMITER.join(columns)]
        for row in rows:
            if len(row) != len(columns):
                raise OutputMismatch(f"row has {len(row)} cells for {len(columns)} columns", key=name, value=len(row))
            lines.append(CSV_DELIMITER.join(format_cell(cell) for cell in row))
        if expected_rows is not None and len(lines) - 1 != expected_rows:
            raise OutputMismatch(f"wrote {len(lines) - 1} rows, grid declares {expected_rows}", key=name,
                                 value=len(lines) - 1)
        path = self._path(name)
        path.write_text(CSV_LINE_END.join(lines) + CSV_LINE_END, encoding="utf-8", newline="")
        logger.debug("CSV written", file=name, rows=len(lines) - 1)
        return path

    def write_json(self, name: str, data: Any) -> Path:
        path = self._path(name)
        text = json.dumps(to_jsonable(data), sort_keys=True, indent=2, ensure_ascii=False)
        path.write_text(text + "\n", encoding="utf-8", newline="")
        logger.debug("JSON written", file=name)
        return path

    def write_matrix(self, name: str, block: MatrixBlock) -> Path:
        """<name>.json header plus <name>.bin, column-major little-endian complex128"""
        header = dict(block.header())
        header.update({"order": "column-major", "dtype": "complex128", "endianness": "little", "file": f"{name}.bin"})
        self.write_json(f"{name}.json", header)
        path = self._path(f"{name}.bin")
        data = np.asarray(block.matrix, dtype="<c16")
        path.write_bytes(data.tobytes(order="F"))
        return path

    def write_manifest(self, manifest: RunManifest) -> Path:
        manifest.outputs = list(self.outputs)
        path = self.root / "manifest.json"
        text = json.dumps(to_jsonable(manifest), sort_keys=True, indent=2, ensure_ascii=False)
        path.write_text(text + "\n", encoding="utf-8", newline="")
        return path
