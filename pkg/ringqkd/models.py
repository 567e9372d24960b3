"""Immutable parameter models for the optical, detector and link layers."""

from __future__ import annotations

import math
from enum import StrEnum

from pydantic import BaseModel, ConfigDict, Field, field_validator


def db_to_ratio(db: float) -> float:
    """Power ratio of *db* decibels, or inf past the float range."""

    try:
        return 10 ** (db / 10)
    except OverflowError:
        return math.inf


class MziPort(StrEnum):
    """Output port of the delay interferometer."""

    CONSTRUCTIVE = "constructive"
    DESTRUCTIVE = "destructive"


class PulseShape(StrEnum):
    """Intensity envelope of one transmitted symbol."""

    RECTANGULAR = "rectangular"
    RAISED_COSINE = "raised_cosine"


class RunMode(StrEnum):
    """Which evaluation paths a scenario runs."""

    ANALYTIC = "analytic"
    MONTE_CARLO = "monte_carlo"
    BOTH = "both"


class ExtinctionSource(StrEnum):
    """Where the analytic path takes its demodulation extinction from.

    ``configured`` uses ``LinkParams.extinction_db``; ``notch`` uses the static
    figure of the demodulator; ``field`` runs a calibration frame through the
    demodulator and measures mark/space contrast.
    """

    CONFIGURED = "configured"
    NOTCH = "notch"
    FIELD = "field"


class DemodModel(StrEnum):
    """How the Monte-Carlo path turns symbols into slot energies."""

    FIELD = "field"
    EXTINCTION = "extinction"


class SweepVariable(StrEnum):
    EXTINCTION_DB = "extinction_db"
    TOTAL_LOSS_DB = "total_loss_db"
    CARRIER_DETUNING_HZ = "carrier_detuning_hz"
    CHANNEL_INDEX = "channel_index"


class ClickCause(StrEnum):
    """Diagnostic origin of a detector click."""

    SIGNAL = "signal"
    DARK = "dark"
    AFTERPULSE = "afterpulse"


class _ParameterModel(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


class RingModel(_ParameterModel):
    """All-pass ring resonator seen from its through port."""

    fsr_hz: float = Field(gt=0)
    t_self: float = Field(gt=0, lt=1)
    a_rt: float = Field(gt=0, le=1)
    resonance_offset_hz: float = 0.0
    excess_loss_db: float = Field(default=0.0, ge=0)

    @field_validator("fsr_hz", "resonance_offset_hz", "excess_loss_db")
    @classmethod
    def _finite(cls, value: float) -> float:
        if not math.isfinite(value):
            raise ValueError("must be finite")
        return value


class MziModel(_ParameterModel):
    """Asymmetric Mach-Zehnder delay interferometer."""

    delay_s: float = Field(gt=0)
    port: MziPort = MziPort.DESTRUCTIVE
    phase_trim_rad: float = 0.0
    excess_loss_db: float = Field(default=0.0, ge=0)

    @field_validator("delay_s", "phase_trim_rad", "excess_loss_db")
    @classmethod
    def _finite(cls, value: float) -> float:
        if not math.isfinite(value):
            raise ValueError("must be finite")
        return value


class SpadModel(_ParameterModel):
    """Free-running single-photon avalanche detector.

    The afterpulse and hold-off defaults are calibration values: together they
    place the QBER-versus-loss optimum near 18 dB, inside the usual
    15-25 dB window.
    """

    eta: float = Field(default=0.1, ge=0, le=1)
    dark_cps: float = Field(default=550.0, ge=0)
    afterpulse_prob: float = Field(default=0.002, ge=0, lt=1)
    detrap_time_s: float = Field(default=10e-6, gt=0)
    dead_time_s: float = Field(default=100e-9, ge=0)

    @field_validator("dark_cps", "detrap_time_s", "dead_time_s")
    @classmethod
    def _finite(cls, value: float) -> float:
        if not math.isfinite(value):
            raise ValueError("must be finite")
        return value


class LinkParams(_ParameterModel):
    """End-to-end optical budget of one DPS link.

    ``total_loss_db`` runs from the transmitter to the SPAD and therefore
    already contains ``demod_insertion_db``.
    """

    mu: float = Field(default=0.1, gt=0)
    symbol_rate_hz: float = Field(default=1e9, gt=0)
    total_loss_db: float = Field(default=23.5, ge=0)
    demod_insertion_db: float = Field(default=16.7, ge=0)
    extinction_db: float = Field(default=18.0, gt=0)

    @field_validator("mu", "symbol_rate_hz", "total_loss_db", "demod_insertion_db")
    @classmethod
    def _finite(cls, value: float) -> float:
        if not math.isfinite(value):
            raise ValueError("must be finite")
        return value

    @property
    def mean_photons_at_detector(self) -> float:
        return self.mu * 10 ** (-self.total_loss_db / 10)


__all__ = [
    "ClickCause",
    "DemodModel",
    "ExtinctionSource",
    "LinkParams",
    "MziModel",
    "MziPort",
    "PulseShape",
    "RingModel",
    "RunMode",
    "SpadModel",
    "SweepVariable",
    "db_to_ratio",
]
