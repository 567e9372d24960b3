"""Logging configuration that keeps bulk arrays out of log lines."""

from __future__ import annotations

import logging
import sys
from collections.abc import Callable, Mapping, Sequence
from typing import Any

import numpy as np

DIAGNOSTICS_LOGGER = "ringqkd.diagnostics"
DIAGNOSTIC_PREFIX = "diagnostic:"

# Arrays at or below this size are logged verbatim.
_INLINE_ARRAY_LIMIT = 8


def summarize_array(array: np.ndarray) -> str:
    """Return a short description of *array* suitable for a log line."""

    if array.size == 0:
        return f"<array shape={array.shape} empty>"
    if np.iscomplexobj(array):
        magnitude = np.abs(array)
        return (
            f"<array shape={array.shape} dtype={array.dtype} "
            f"|min|={magnitude.min():.6g} |max|={magnitude.max():.6g}>"
        )
    if not np.issubdtype(array.dtype, np.number) and array.dtype != np.bool_:
        return f"<array shape={array.shape} dtype={array.dtype}>"
    return (
        f"<array shape={array.shape} dtype={array.dtype} "
        f"min={array.min():.6g} max={array.max():.6g}>"
    )


def summarize_arrays(value: Any) -> Any:
    """Return a copy of *value* with large numpy arrays replaced by summaries."""

    if isinstance(value, np.ndarray):
        if value.size <= _INLINE_ARRAY_LIMIT:
            return value.tolist()
        return summarize_array(value)

    if isinstance(value, Mapping):
        return {key: summarize_arrays(val) for key, val in value.items()}

    if isinstance(value, Sequence) and not isinstance(value, str | bytes | bytearray):
        summarized = [summarize_arrays(item) for item in value]
        constructor = tuple if isinstance(value, tuple) else list
        try:
            return constructor(summarized)
        except TypeError:
            return list(summarized)

    return value


class _ArraySummaryFilter(logging.Filter):
    """Logging filter that swaps numpy arrays for compact summaries."""

    def filter(self, record: logging.LogRecord) -> bool:
        for attr_name, attr_value in list(record.__dict__.items()):
            if attr_name in {"args", "msg"}:
                continue
            if isinstance(attr_value, np.ndarray | Mapping):
                setattr(record, attr_name, summarize_arrays(attr_value))

        if isinstance(record.msg, np.ndarray | Mapping):
            record.msg = summarize_arrays(record.msg)

        if isinstance(record.args, Mapping):
            record.args = summarize_arrays(record.args)
        elif isinstance(record.args, tuple):
            record.args = tuple(summarize_arrays(arg) for arg in record.args)

        return True


class _DiagnosticFormatter(logging.Formatter):
    def format(self, record: logging.LogRecord) -> str:
        return f"{DIAGNOSTIC_PREFIX} {super().format(record)}"


class _StderrHandler(logging.StreamHandler):  # type: ignore[type-arg]
    """Stream handler bound to whatever ``sys.stderr`` is at emit time."""

    def __init__(self) -> None:
        super().__init__(sys.stderr)

    @property  # type: ignore[override]
    def stream(self) -> Any:
        return sys.stderr

    @stream.setter
    def stream(self, value: Any) -> None:
        pass


_filter_instance = _ArraySummaryFilter()
_configured = False
_original_factory: Callable[..., logging.LogRecord] | None = None


def diagnostics_logger() -> logging.Logger:
    """Return the logger used for warnings addressed to the operator."""

    return logging.getLogger(DIAGNOSTICS_LOGGER)


def _not_diagnostic(record: logging.LogRecord) -> bool:
    return not record.name.startswith(DIAGNOSTICS_LOGGER)


def configure_logging(level: int = logging.WARNING) -> None:
    """Install the array filter and stderr handlers; later calls only set *level*."""

    global _configured
    package_logger = logging.getLogger("ringqkd")
    package_logger.setLevel(level)
    if _configured:
        return

    root_logger = logging.getLogger()
    root_logger.addFilter(_filter_instance)
    for handler in root_logger.handlers:
        handler.addFilter(_filter_instance)

    progress = _StderrHandler()
    progress.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    progress.addFilter(_filter_instance)
    progress.addFilter(_not_diagnostic)
    package_logger.addFilter(_filter_instance)
    package_logger.addHandler(progress)

    handler = _StderrHandler()
    handler.setFormatter(_DiagnosticFormatter("%(message)s"))
    handler.addFilter(_filter_instance)
    diagnostics = diagnostics_logger()
    diagnostics.setLevel(logging.INFO)
    diagnostics.addHandler(handler)

    global _original_factory
    if _original_factory is None:
        _original_factory = logging.getLogRecordFactory()

        def _factory(*args: Any, **kwargs: Any) -> logging.LogRecord:
            assert _original_factory is not None
            record = _original_factory(*args, **kwargs)
            if record.name.startswith("ringqkd"):
                _filter_instance.filter(record)
            return record

        logging.setLogRecordFactory(_factory)

    _configured = True


__all__ = [
    "DIAGNOSTICS_LOGGER",
    "DIAGNOSTIC_PREFIX",
    "configure_logging",
    "diagnostics_logger",
    "summarize_array",
    "summarize_arrays",
]
