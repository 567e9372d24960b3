"""Persist result tables with their manifest as ``#``-prefixed header lines.

The files are plain CSV once comment lines are skipped, which keeps them
readable by gnuplot and spreadsheet tools alike.
"""

from __future__ import annotations

import csv
import io
import json
from datetime import datetime
from pathlib import Path
from typing import Any, TextIO

from pydantic import BaseModel

from ..detector import ClickTrain
from ..errors import ConfigSyntaxError, MissingFileError, OutputError
from ..schemas import RESULT_COLUMNS, ResultRow, ResultTable, RunManifest

MANIFEST_TITLE = "# ringqkd result table"
SPECTRUM_MANIFEST_TITLE = "# ringqkd spectrum"
_MANIFEST_FIELDS = ("tool_version", "schema_version", "timestamp", "seed", "config")
CLICK_COLUMNS = ("slot_index", "click", "cause")


def config_echo(config: BaseModel) -> dict[str, Any]:
    """Fully resolved config, defaults expanded, as plain JSON-able data."""

    return json.loads(json.dumps(config.model_dump()))


def _format_cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return f"{value:.12g}"
    if isinstance(value, list):
        return ";".join(str(item) for item in value)
    return str(value)


def manifest_lines(manifest: RunManifest, title: str = MANIFEST_TITLE) -> list[str]:
    config = json.dumps(manifest.config, sort_keys=True, separators=(",", ":"))
    seed = "" if manifest.seed is None else manifest.seed
    return [
        title,
        f"# tool_version: {manifest.tool_version}",
        f"# schema_version: {manifest.schema_version}",
        f"# timestamp: {manifest.timestamp.isoformat()}",
        f"# seed: {seed}",
        f"# config: {config}",
        f"# outputs: {';'.join(manifest.outputs)}",
    ]


def with_output(manifest: RunManifest, path: Path) -> RunManifest:
    """Copy of *manifest* naming *path* among its outputs.

    Only the file name is kept, so the same run written to two directories
    produces the same text.
    """

    if path.name in manifest.outputs:
        return manifest
    return manifest.model_copy(update={"outputs": [*manifest.outputs, path.name]})


def format_results(table: ResultTable, manifest: RunManifest) -> str:
    """Render *table* below its manifest header; rows keep sweep order."""

    buffer = io.StringIO()
    for line in manifest_lines(manifest):
        buffer.write(line + "\n")
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(RESULT_COLUMNS)
    for row in table.rows:
        writer.writerow(row_values(row).values())
    return buffer.getvalue()


def write_results(table: ResultTable, manifest: RunManifest, path: Path) -> Path:
    """Write the table; the manifest lists the file name among its outputs."""

    text = format_results(table, with_output(manifest, path))
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise OutputError(f"cannot write results ({exc.strerror})", str(path)) from exc
    return path


def parse_manifest(lines: list[str]) -> RunManifest:
    """Rebuild a manifest from the ``# key: value`` header of a result file."""

    fields: dict[str, str] = {}
    for line in lines:
        if not line.startswith("# ") or ": " not in line:
            continue
        key, _, value = line[2:].partition(": ")
        fields[key.strip()] = value.strip()
    missing = [name for name in _MANIFEST_FIELDS if name not in fields]
    if missing:
        raise ConfigSyntaxError(
            f"result manifest lacks {', '.join(missing)}", key_path=missing[0]
        )
    try:
        config = json.loads(fields["config"])
    except json.JSONDecodeError as exc:
        raise ConfigSyntaxError(
            f"manifest config is not valid JSON: {exc}", key_path="config"
        ) from exc
    outputs = [item for item in fields.get("outputs", "").split(";") if item]
    return RunManifest(
        tool_version=fields["tool_version"],
        schema_version=int(fields["schema_version"]),
        timestamp=datetime.fromisoformat(fields["timestamp"]),
        seed=int(fields["seed"]) if fields["seed"] else None,
        config=config,
        outputs=outputs,
    )


def read_results(path: Path) -> tuple[RunManifest, list[dict[str, str]]]:
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError as exc:
        raise MissingFileError(f"result file not found: {path}") from exc
    lines = text.splitlines()
    header = [line for line in lines if line.startswith("#")]
    body = [line for line in lines if line and not line.startswith("#")]
    rows = list(csv.DictReader(body))
    return parse_manifest(header), rows


def is_result_file(text: str) -> bool:
    return text.startswith(MANIFEST_TITLE)


class ClickDumpWriter:
    """Stream click trains into one ``slot_index,click,cause`` table.

    Blocks are appended as they arrive, so a long frame never holds its whole
    click train in memory.
    """

    def __init__(self, path: Path) -> None:
        self.path = path
        self.rows_written = 0
        self._handle: TextIO | None = None
        self._writer: Any = None

    def __enter__(self) -> ClickDumpWriter:
        try:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self._handle = self.path.open("w", newline="", encoding="utf-8")
        except OSError as exc:
            message = f"cannot write click train ({exc.strerror})"
            raise OutputError(message, str(self.path)) from exc
        self._writer = csv.writer(self._handle, lineterminator="\n")
        self._writer.writerow(CLICK_COLUMNS)
        return self

    def write(self, train: ClickTrain) -> None:
        if self._writer is None:
            raise OutputError("click dump is not open", str(self.path))
        rows = list(train.rows())
        self._writer.writerows(rows)
        self.rows_written += len(rows)

    def __exit__(self, *exc_info: object) -> None:
        if self._handle is not None:
            self._handle.close()
        self._handle = None
        self._writer = None


def row_values(row: ResultRow) -> dict[str, str]:
    """Cells of *row* exactly as they appear in a written table."""

    data = row.model_dump()
    return {column: _format_cell(data[column]) for column in RESULT_COLUMNS}


__all__ = [
    "CLICK_COLUMNS",
    "ClickDumpWriter",
    "MANIFEST_TITLE",
    "SPECTRUM_MANIFEST_TITLE",
    "config_echo",
    "format_results",
    "is_result_file",
    "manifest_lines",
    "parse_manifest",
    "read_results",
    "row_values",
    "with_output",
    "write_results",
]
