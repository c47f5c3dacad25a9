import csv
import io
import json
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from src.schemas.run_config import OutputFormat


def _cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple, dict)):
        return json.dumps(value, separators=(",", ":"))
    return str(value)


def render_csv(
    rows: Sequence[Dict[str, Any]],
    columns: Sequence[str],
    meta: Dict[str, Any],
) -> str:
    """
    Render rows as CSV preceded by "# key=value" provenance lines

    Args:
        rows: Row dicts; missing keys become empty cells
        columns: Stable column order
        meta: Run provenance (seed, sizes, command)

    Returns:
        str: CSV text
    """
    buffer = io.StringIO()
    for key, value in meta.items():
        buffer.write(f"# {key}={_cell(value)}\n")
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_cell(row.get(column)) for column in columns])
    return buffer.getvalue()


def render_json(
    rows: Sequence[Dict[str, Any]],
    meta: Dict[str, Any],
    summary: Optional[Dict[str, Any]] = None,
) -> str:
    """Render {"meta", "rows", "summary"} as indented JSON"""
    document = {"meta": meta, "rows": list(rows), "summary": summary or {}}
    return json.dumps(document, indent=2, allow_nan=False) + "\n"


def render(
    fmt: OutputFormat,
    rows: Sequence[Dict[str, Any]],
    columns: Sequence[str],
    meta: Dict[str, Any],
    summary: Optional[Dict[str, Any]] = None,
) -> str:
    """Render in the requested format; CSV carries the summary as meta lines"""
    if OutputFormat(fmt) is OutputFormat.JSON:
        return render_json(rows, meta, summary)
    merged = dict(meta)
    for key, value in (summary or {}).items():
        merged[f"summary.{key}"] = value
    return render_csv(rows, columns, merged)


def write_output(text: str, path: Optional[Path] = None) -> None:
    """Write to path, or to stdout when no path is given"""
    if path is None:
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def write_rows(
    path: Path,
    rows: List[Dict[str, Any]],
    columns: Sequence[str],
    meta: Dict[str, Any],
    fmt: OutputFormat = OutputFormat.CSV,
) -> None:
    """Side outputs (paths, PMFs) in the same format as the main result"""
    write_output(render(fmt, rows, columns, meta), path)
