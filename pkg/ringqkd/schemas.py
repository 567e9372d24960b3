"""Pydantic schemas for scenario configs, sweep specs and reported results."""

from __future__ import annotations

import math
from datetime import UTC, datetime
from functools import lru_cache
from typing import Annotated, Any, Literal

from pydantic import (
    BaseModel,
    ConfigDict,
    Discriminator,
    Field,
    Tag,
    ValidationInfo,
    field_validator,
    model_validator,
)

from . import __version__
from .models import (
    DemodModel,
    ExtinctionSource,
    LinkParams,
    MziModel,
    MziPort,
    PulseShape,
    RingModel,
    RunMode,
    SpadModel,
    SweepVariable,
)
from .optics import fit_ring_params

RESULT_SCHEMA_VERSION = 1
MIN_MONTE_CARLO_SLOTS = 10_000


class _ConfigModel(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


@lru_cache(maxsize=64)
def _fitted_ring(
    fsr_hz: float,
    fwhm_hz: float,
    extinction_db: float,
    excess_loss_db: float,
    resonance_offset_hz: float,
) -> RingModel:
    return fit_ring_params(
        fsr_hz,
        fwhm_hz,
        extinction_db,
        excess_loss_db=excess_loss_db,
        resonance_offset_hz=resonance_offset_hz,
    )


class RingDemodulator(_ConfigModel):
    """Ring demodulator described by its measured spectral figures."""

    kind: Literal["mrr"] = "mrr"
    fsr_hz: float = Field(default=120.1e9, gt=0)
    fwhm_hz: float = Field(default=0.27e9, gt=0)
    extinction_db: float = Field(default=23.7, gt=0)
    excess_loss_db: float = Field(default=16.7, ge=0)
    resonance_offset_hz: float = 0.0

    @model_validator(mode="after")
    def _narrower_than_fsr(self) -> RingDemodulator:
        if self.fwhm_hz >= self.fsr_hz:
            raise ValueError("fwhm_hz must be smaller than fsr_hz")
        return self

    def build(self, symbol_rate_hz: float) -> RingModel:
        return _fitted_ring(
            self.fsr_hz,
            self.fwhm_hz,
            self.extinction_db,
            self.excess_loss_db,
            self.resonance_offset_hz,
        )

    def channel_spacing_hz(self, symbol_rate_hz: float) -> float:
        return self.fsr_hz


class MziDemodulator(_ConfigModel):
    """Delay interferometer; the delay defaults to one symbol."""

    kind: Literal["mzi"] = "mzi"
    delay_s: float | None = Field(default=None, gt=0)
    port: MziPort = MziPort.DESTRUCTIVE
    phase_trim_rad: float = 0.0
    excess_loss_db: float = Field(default=0.0, ge=0)

    def build(self, symbol_rate_hz: float) -> MziModel:
        delay = self.delay_s if self.delay_s is not None else 1 / symbol_rate_hz
        return MziModel(
            delay_s=delay,
            port=self.port,
            phase_trim_rad=self.phase_trim_rad,
            excess_loss_db=self.excess_loss_db,
        )

    def channel_spacing_hz(self, symbol_rate_hz: float) -> float:
        return 1 / (self.delay_s if self.delay_s is not None else 1 / symbol_rate_hz)


def _demodulator_tag(value: Any) -> str:
    if isinstance(value, dict):
        return str(value.get("kind", "mrr"))
    return str(getattr(value, "kind", "mrr"))


DemodulatorConfig = Annotated[
    Annotated[RingDemodulator, Tag("mrr")] | Annotated[MziDemodulator, Tag("mzi")],
    Discriminator(_demodulator_tag),
]


class WaveformSettings(_ConfigModel):
    """Field-simulation knobs shared by calibration and Monte-Carlo frames."""

    pulse_shape: PulseShape = PulseShape.RECTANGULAR
    oversampling: int = Field(default=32, ge=16)
    window_fraction: float = Field(default=1.0, gt=0, le=1)
    block_symbols: int = Field(default=4096, ge=256)
    calibration_symbols: int = Field(default=4096, ge=1024)
    extinction_ceiling_db: float = Field(default=60.0, gt=0)


class ScenarioConfig(_ConfigModel):
    """One receiver scenario, evaluated analytically and/or by Monte-Carlo."""

    kind: Literal["scenario"] = "scenario"
    label: str = ""
    demodulator: DemodulatorConfig = Field(default_factory=RingDemodulator)
    link: LinkParams = Field(default_factory=LinkParams)
    spad: SpadModel = Field(default_factory=SpadModel)
    mode: RunMode = RunMode.ANALYTIC
    frame_length: int = Field(default=100_000, ge=1)
    seed: int = Field(default=0, ge=0, lt=2**64)
    carrier_detuning_hz: float = 0.0
    extinction_source: ExtinctionSource = ExtinctionSource.CONFIGURED
    demod_model: DemodModel = DemodModel.EXTINCTION
    f_ec: float = Field(default=1.16, ge=1)
    waveform: WaveformSettings = Field(default_factory=WaveformSettings)

    @field_validator("frame_length")
    @classmethod
    def _long_enough_for_monte_carlo(cls, value: int, info: ValidationInfo) -> int:
        mode = info.data.get("mode", RunMode.ANALYTIC)
        if mode is not RunMode.ANALYTIC and value < MIN_MONTE_CARLO_SLOTS:
            raise ValueError(
                f"must be at least {MIN_MONTE_CARLO_SLOTS} symbols for "
                f"{mode.value} runs"
            )
        return value

    @field_validator("demodulator")
    @classmethod
    def _detects_on_destructive_port(
        cls, value: RingDemodulator | MziDemodulator
    ) -> RingDemodulator | MziDemodulator:
        if isinstance(value, MziDemodulator) and value.port is not MziPort.DESTRUCTIVE:
            raise ValueError("scenarios detect on the destructive MZI port")
        return value

    @field_validator("carrier_detuning_hz")
    @classmethod
    def _finite_detuning(cls, value: float) -> float:
        if not math.isfinite(value):
            raise ValueError("must be finite")
        return value


class SweepSpec(_ConfigModel):
    """A list of values for one variable applied on top of a base scenario."""

    kind: Literal["sweep"] = "sweep"
    variable: SweepVariable
    values: list[float] = Field(min_length=1)
    base: ScenarioConfig = Field(default_factory=ScenarioConfig)
    workers: int = Field(default=4, ge=1)

    @field_validator("values")
    @classmethod
    def _finite_values(cls, values: list[float], info: ValidationInfo) -> list[float]:
        if not all(math.isfinite(value) for value in values):
            raise ValueError("sweep values must be finite")
        if info.data.get("variable") is SweepVariable.CHANNEL_INDEX and not all(
            float(value).is_integer() for value in values
        ):
            raise ValueError("channel_index values must be whole numbers")
        return values


def _document_tag(value: Any) -> str:
    if isinstance(value, dict):
        default = "sweep" if "variable" in value else "scenario"
        return str(value.get("kind", default))
    return str(getattr(value, "kind", "scenario"))


ConfigDocument = Annotated[
    Annotated[ScenarioConfig, Tag("scenario")] | Annotated[SweepSpec, Tag("sweep")],
    Discriminator(_document_tag),
]


class QberBreakdown(BaseModel):
    """Registered error fractions of the analytic model."""

    model_config = ConfigDict(frozen=True)

    qber: float = Field(ge=0, le=0.5)
    e_leak: float = Field(ge=0)
    e_dark: float = Field(ge=0)
    e_afterpulse: float = Field(ge=0)
    raw_rate_cps: float = Field(ge=0)
    signal_rate_cps: float = Field(ge=0)
    afterpulse_rate_cps: float = Field(default=0.0, ge=0)


class KeyRateReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    qber_used: float
    sifted_rate_bps: float = Field(ge=0)
    secure_fraction: float
    secure_rate_bps: float = Field(ge=0)
    secure_bits_per_symbol: float = Field(ge=0)


class LinkBudget(BaseModel):
    """Channel loss left once the demodulator has taken its share."""

    model_config = ConfigDict(frozen=True)

    budget_db: float
    infeasible: bool


class LossOptimum(BaseModel):
    model_config = ConfigDict(frozen=True)

    loss_db: float
    qber: float
    flat_objective: bool
    search_range_db: tuple[float, float]


RESULT_COLUMNS: tuple[str, ...] = (
    "index",
    "variable",
    "value",
    "mode",
    "seed",
    "extinction_db",
    "qber_analytic",
    "qber_mc",
    "qber_mc_sigma",
    "raw_rate_cps",
    "raw_rate_mc_cps",
    "secure_bits_per_symbol",
    "clicks",
    "slots",
    "flags",
    "error",
)


class ResultRow(BaseModel):
    """One evaluated scenario; columns a mode does not produce stay ``None``."""

    index: int = 0
    variable: str = ""
    value: float | None = None
    mode: RunMode = RunMode.ANALYTIC
    seed: int = 0
    extinction_db: float | None = None
    qber_analytic: float | None = None
    qber_mc: float | None = None
    qber_mc_sigma: float | None = None
    raw_rate_cps: float | None = None
    raw_rate_mc_cps: float | None = None
    secure_bits_per_symbol: float | None = None
    clicks: int | None = None
    slots: int | None = None
    flags: list[str] = Field(default_factory=list)
    error: str = ""


class ResultTable(BaseModel):
    variable: str = ""
    rows: list[ResultRow] = Field(default_factory=list)

    def __len__(self) -> int:
        return len(self.rows)


class RunManifest(BaseModel):
    """Everything needed to regenerate a result file."""

    tool_version: str = __version__
    schema_version: int = RESULT_SCHEMA_VERSION
    timestamp: datetime = Field(default_factory=lambda: datetime.now(UTC))
    seed: int | None = None
    config: dict[str, Any]
    outputs: list[str] = Field(default_factory=list)

    @field_validator("timestamp", mode="after")
    @classmethod
    def _as_utc(cls, value: datetime) -> datetime:
        if value.tzinfo is None:
            value = value.replace(tzinfo=UTC)
        return value.astimezone(UTC).replace(microsecond=0)


__all__ = [
    "MIN_MONTE_CARLO_SLOTS",
    "RESULT_COLUMNS",
    "RESULT_SCHEMA_VERSION",
    "ConfigDocument",
    "DemodulatorConfig",
    "KeyRateReport",
    "LinkBudget",
    "LossOptimum",
    "MziDemodulator",
    "QberBreakdown",
    "ResultRow",
    "ResultTable",
    "RingDemodulator",
    "RunManifest",
    "ScenarioConfig",
    "SweepSpec",
    "WaveformSettings",
]
