"""Read and write two-column transmission spectra.

Files carry a header naming the abscissa (``detuning_ghz`` or
``wavelength_nm``) followed by ``transmission_db``. Lines starting with ``#``
are comments; written spectra open with a manifest block of them.
"""

from __future__ import annotations

import csv
from collections.abc import Iterable
from pathlib import Path

import numpy as np

from ..errors import ConfigSyntaxError, InputError, MissingFileError, OutputError
from ..optics import MIN_FIT_ROWS, SpectrumAxis, SpectrumTable
from ..schemas import RunManifest
from .results_io import SPECTRUM_MANIFEST_TITLE, manifest_lines, with_output

TRANSMISSION_COLUMN = "transmission_db"


def _iter_data_lines(lines: Iterable[str]) -> Iterable[str]:
    for line in lines:
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        yield stripped


def read_spectrum(path: Path) -> SpectrumTable:
    """Load a spectrum table; malformed content raises ``ConfigSyntaxError``."""

    try:
        with path.open(newline="", encoding="utf-8-sig") as handle:
            reader = csv.reader(_iter_data_lines(handle))
            rows = list(reader)
    except FileNotFoundError as exc:
        raise MissingFileError(f"spectrum file not found: {path}") from exc
    except OSError as exc:
        raise MissingFileError(f"cannot read spectrum file {path}: {exc}") from exc

    if not rows:
        raise ConfigSyntaxError(f"spectrum file {path} is empty")
    header = [cell.strip().lower() for cell in rows[0]]
    axes = {axis.value for axis in SpectrumAxis}
    if len(header) != 2 or header[0] not in axes or header[1] != TRANSMISSION_COLUMN:
        raise ConfigSyntaxError(
            f"unexpected spectrum header {','.join(header)!r}; expected "
            f"detuning_ghz,{TRANSMISSION_COLUMN} or "
            f"wavelength_nm,{TRANSMISSION_COLUMN}",
            key_path="header",
        )

    abscissa: list[float] = []
    transmission: list[float] = []
    for number, row in enumerate(rows[1:], start=2):
        if len(row) != 2:
            raise ConfigSyntaxError(
                f"row {number} of {path} has {len(row)} columns",
                key_path=f"row {number}",
            )
        try:
            abscissa.append(float(row[0]))
            transmission.append(float(row[1]))
        except ValueError as exc:
            raise ConfigSyntaxError(
                f"row {number} of {path} is not numeric: {exc}",
                key_path=f"row {number}",
            ) from exc

    if len(abscissa) < MIN_FIT_ROWS:
        raise InputError(
            f"{path}: spectrum needs at least {MIN_FIT_ROWS} rows, got {len(abscissa)}"
        )
    try:
        return SpectrumTable(
            abscissa=np.array(abscissa),
            transmission_db=np.array(transmission),
            axis=SpectrumAxis(header[0]),
        )
    except InputError as exc:
        raise InputError(f"{path}: {exc}") from exc


def format_spectrum(table: SpectrumTable, manifest: RunManifest | None = None) -> str:
    """Two-column CSV, below a ``#`` manifest block when one is given."""

    lines: list[str] = []
    if manifest is not None:
        lines.extend(manifest_lines(manifest, SPECTRUM_MANIFEST_TITLE))
    lines.append(f"{table.axis.value},{TRANSMISSION_COLUMN}")
    lines.extend(
        f"{x:.12g},{y:.12g}"
        for x, y in zip(table.abscissa, table.transmission_db, strict=True)
    )
    return "\n".join(lines) + "\n"


def write_spectrum(
    table: SpectrumTable, path: Path, manifest: RunManifest | None = None
) -> Path:
    if manifest is not None:
        manifest = with_output(manifest, path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(format_spectrum(table, manifest), encoding="utf-8")
    except OSError as exc:
        raise OutputError(f"cannot write spectrum ({exc.strerror})", str(path)) from exc
    return path


__all__ = ["TRANSMISSION_COLUMN", "format_spectrum", "read_spectrum", "write_spectrum"]
