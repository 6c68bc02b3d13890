"""
Exports
CSV tables through pandas, schema-checked JSON summaries and the Markdown
run report rendered from a jinja2 template.
"""

import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence

import jsonschema
import numpy as np
import pandas as pd
from jinja2 import Environment, FileSystemLoader

from .errors import ConfigurationError

logger = logging.getLogger(__name__)

PACKAGE_ROOT = Path(__file__).resolve().parent.parent
SCHEMA_DIR = PACKAGE_ROOT / "schemas"
TEMPLATE_DIR = PACKAGE_ROOT / "templates"
FLOAT_FORMAT = "%.10g"
JSON_DIGITS = 12


def to_plain(value: Any, digits: int = JSON_DIGITS) -> Any:
    """JSON-ready copy: numpy scalars unwrapped, floats rounded to `digits` significant digits."""
    if isinstance(value, Mapping):
        return {str(k): to_plain(v, digits) for k, v in value.items()}
    if isinstance(value, (list, tuple, np.ndarray)):
        return [to_plain(v, digits) for v in value]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if not math.isfinite(value):
            return None
        return float(f"{value:.{digits}g}")
    if hasattr(value, "value") and isinstance(getattr(value, "value"), str):
        return value.value
    return value


def write_csv(path: Path, columns: Dict[str, Sequence[Any]], order: Optional[List[str]] = None) -> Path:
    path = Path(path)
    frame = pd.DataFrame({k: np.asarray(v) for k, v in columns.items()})
    if order:
        frame = frame[order]
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    logger.debug(f"Wrote {len(frame)} rows to {path.name}")
    return path


def load_schema(name: str) -> Dict[str, Any]:
    schema_path = SCHEMA_DIR / f"{name}.schema.json"
    if not schema_path.exists():
        raise ConfigurationError(f"no schema shipped for '{name}'")
    with open(schema_path, "r", encoding="utf-8") as f:
        return json.load(f)


def write_json(path: Path, payload: Dict[str, Any], schema: str) -> Path:
    """Round, validate against schemas/<schema>.schema.json, then write sorted and indented."""
    path = Path(path)
    plain = to_plain(payload)
    try:
        jsonschema.validate(instance=plain, schema=load_schema(schema))
    except jsonschema.ValidationError as e:
        raise ConfigurationError(f"{path.name} does not match schema '{schema}': {e.message}") from e
    with open(path, "w", encoding="utf-8") as f:
        f.write(json.dumps(plain, indent=2, sort_keys=True))
        f.write("\n")
    logger.debug(f"Wrote {path.name}")
    return path


def render_report(out_dir: Path, command: str, summary: Dict[str, Any], files: Sequence[Path]) -> Path:
    """Render report.md listing the summary values and the produced files."""
    out_dir = Path(out_dir)
    env = Environment(loader=FileSystemLoader(str(TEMPLATE_DIR)), keep_trailing_newline=True)
    template = env.get_template("report.md.j2")
    rows = []
    for key, value in sorted(to_plain(summary).items()):
        rows.append((key, json.dumps(value, sort_keys=True) if isinstance(value, (dict, list)) else value))
    text = template.render(command=command, rows=rows, files=sorted(Path(f).name for f in files))
    report = out_dir / "report.md"
    report.write_text(text, encoding="utf-8")
    return report
