"""Shared fixtures for the ringqkd test suite."""

from __future__ import annotations

import json
import logging
from collections.abc import Callable, Iterator
from pathlib import Path
from typing import Any

import pytest

from ringqkd import logging_config
from ringqkd.models import LinkParams, MziModel, RingModel, SpadModel
from ringqkd.optics import fit_ring_params

SOI_FSR_HZ = 120.1e9
SOI_FWHM_HZ = 0.27e9
SOI_EXTINCTION_DB = 23.7


@pytest.fixture(autouse=True)
def restore_logging_state() -> Iterator[None]:
    """Undo handlers, levels and the record factory installed by a test."""

    names = ("ringqkd", logging_config.DIAGNOSTICS_LOGGER)
    loggers = [logging.getLogger(name) for name in names]
    saved = [(log, list(log.handlers), list(log.filters), log.level) for log in loggers]
    root = logging.getLogger()
    root_filters = list(root.filters)
    factory = logging.getLogRecordFactory()
    configured = logging_config._configured
    original_factory = logging_config._original_factory
    yield
    for log, handlers, filters, level in saved:
        log.handlers[:] = handlers
        log.filters[:] = filters
        log.setLevel(level)
    root.filters[:] = root_filters
    logging.setLogRecordFactory(factory)
    logging_config._configured = configured
    logging_config._original_factory = original_factory


@pytest.fixture()
def soi_ring() -> RingModel:
    """The measured SOI ring without its fibre-to-chip excess loss."""

    return fit_ring_params(SOI_FSR_HZ, SOI_FWHM_HZ, SOI_EXTINCTION_DB)


@pytest.fixture()
def lossy_soi_ring() -> RingModel:
    return fit_ring_params(
        SOI_FSR_HZ, SOI_FWHM_HZ, SOI_EXTINCTION_DB, excess_loss_db=16.7
    )


@pytest.fixture()
def ideal_mzi() -> MziModel:
    return MziModel(delay_s=1e-9)


@pytest.fixture()
def reference_spad() -> SpadModel:
    return SpadModel()


@pytest.fixture()
def quiet_spad() -> SpadModel:
    """Detector without dark counts, afterpulses or hold-off."""

    return SpadModel(dark_cps=0.0, afterpulse_prob=0.0, dead_time_s=0.0)


@pytest.fixture()
def reference_link() -> LinkParams:
    return LinkParams()


@pytest.fixture()
def write_config(tmp_path: Path) -> Callable[[Any, str], Path]:
    """Return a helper writing JSON-able data (or raw text) into ``tmp_path``."""

    def _write(data: Any, name: str = "config.json") -> Path:
        path = tmp_path / name
        text = data if isinstance(data, str) else json.dumps(data, indent=2)
        path.write_text(text, encoding="utf-8")
        return path

    return _write
