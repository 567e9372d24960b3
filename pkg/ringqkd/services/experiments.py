"""Scenario runner and sweep engine.

A scenario is evaluated on up to two paths. The analytic path feeds the
demodulation extinction into the closed-form QBER model. The Monte-Carlo path
draws random differential bits, turns them into slot energies (either through
the filtered field or through the extinction alone), attenuates them to the
configured loss and runs the detector simulator over the result.

Design decisions:
- Slot energies are normalised so the mean counted slot carries
  ``mu * 10**(-L/10)`` photons, whatever the demodulator throughput. Both paths
  therefore describe the same total loss.
- The calibration frame behind field-derived extinction is seeded from the
  scenario seed only, so every point of a sweep sees the same frame.
- Sweep points get ``SeedSequence(seed, spawn_key=(index,))`` and are merged
  in sweep order, independent of thread scheduling.
"""

from __future__ import annotations

import logging
import math
import threading
from collections.abc import Callable
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any

import numpy as np
from numpy.typing import NDArray
from pydantic import ValidationError

from ..analysis import qber_analytic, secure_rate
from ..detector import ClickTrain, SpadSimulator
from ..errors import InputError, RingQkdError
from ..field import (
    DemodExtinction,
    SymbolFrame,
    apply_filter,
    counted_slots,
    demod_extinction,
    frame_guard,
    integrate_slots,
    synthesize_field,
)
from ..logging_config import diagnostics_logger
from ..models import (
    DemodModel,
    ExtinctionSource,
    RunMode,
    SweepVariable,
    db_to_ratio,
)
from ..optics import Demodulator, notch_extinction_db, transfer_function
from ..schemas import ResultRow, ResultTable, ScenarioConfig, SweepSpec

logger = logging.getLogger(__name__)

ClickSink = Callable[[ClickTrain], None]

# Below this many counted clicks the binomial error bar is widened.
MIN_CLICKS_FOR_ERROR_BAR = 100


@dataclass(frozen=True)
class MonteCarloOutcome:
    qber: float | None
    sigma: float | None
    raw_rate_cps: float
    clicks: int
    errors: int
    slots: int
    short_frame: bool


class CalibrationCache:
    """Thread-safe memo of calibration frames keyed by their inputs.

    Sweep workers share one instance so a calibration common to all points
    is computed once.
    """

    def __init__(self) -> None:
        self._entries: dict[str, DemodExtinction] = {}
        self._lock = threading.Lock()

    def get(self, key: str) -> DemodExtinction | None:
        with self._lock:
            return self._entries.get(key)

    def set(self, key: str, value: DemodExtinction) -> None:
        with self._lock:
            self._entries[key] = value

    def clear(self) -> None:
        with self._lock:
            self._entries.clear()

    def __len__(self) -> int:
        with self._lock:
            return len(self._entries)


def _calibration_key(config: ScenarioConfig) -> str:
    parts = {
        "demodulator": config.demodulator.model_dump(mode="json"),
        "symbol_rate_hz": config.link.symbol_rate_hz,
        "carrier_detuning_hz": config.carrier_detuning_hz,
        "waveform": config.waveform.model_dump(mode="json"),
        "seed": config.seed,
    }
    return repr(sorted(parts.items()))


def build_demodulator(config: ScenarioConfig) -> Demodulator:
    return config.demodulator.build(config.link.symbol_rate_hz)


def calibrate(
    config: ScenarioConfig, cache: CalibrationCache | None = None
) -> DemodExtinction:
    """Run the scenario's demodulator over its calibration frame."""

    key = _calibration_key(config)
    if cache is not None and (cached := cache.get(key)) is not None:
        return cached

    demodulator = build_demodulator(config)
    waveform = config.waveform
    calibration = demod_extinction(
        transfer_function(demodulator),
        config.link.symbol_rate_hz,
        config.carrier_detuning_hz,
        config.link.mu,
        waveform.calibration_symbols,
        seed=config.seed,
        guard=frame_guard(demodulator, config.link.symbol_rate_hz),
        pulse_shape=waveform.pulse_shape,
        oversampling=waveform.oversampling,
        window_fraction=waveform.window_fraction,
        ceiling_db=waveform.extinction_ceiling_db,
    )
    logger.info(
        "Calibrated %s demodulator: %.3f dB extinction, transmission %.4g",
        config.demodulator.kind,
        calibration.extinction_db,
        calibration.mean_transmission,
    )
    if cache is not None:
        cache.set(key, calibration)
    return calibration


def resolve_extinction(
    config: ScenarioConfig, cache: CalibrationCache | None = None
) -> tuple[float, DemodExtinction | None]:
    """Extinction used by the scenario and the calibration it came from."""

    if config.extinction_source is ExtinctionSource.CONFIGURED:
        return config.link.extinction_db, None
    if config.extinction_source is ExtinctionSource.NOTCH:
        extinction = notch_extinction_db(
            build_demodulator(config), config.carrier_detuning_hz
        )
        if not extinction > 0:
            raise InputError(
                f"carrier at {config.carrier_detuning_hz:.6g} Hz sees no notch "
                f"contrast ({extinction:.3g} dB)"
            )
        return extinction, None
    calibration = calibrate(config, cache)
    return calibration.extinction_db, calibration


def _extinction_energies(
    bits: NDArray[np.int8], mean_photons: float, extinction_db: float
) -> NDArray[np.float64]:
    contrast = db_to_ratio(extinction_db)
    if math.isinf(contrast):
        mark, space = 2 * mean_photons, 0.0
    else:
        mark = 2 * mean_photons * contrast / (1 + contrast)
        space = 2 * mean_photons / (1 + contrast)
    return np.where(bits == 1, mark, space)


def _field_energies(
    bits: NDArray[np.int8],
    config: ScenarioConfig,
    demodulator: Demodulator,
    scale: float,
) -> NDArray[np.float64]:
    waveform = config.waveform
    field = synthesize_field(
        SymbolFrame.from_bits(bits),
        waveform.pulse_shape,
        config.link.mu,
        config.link.symbol_rate_hz,
        waveform.oversampling,
        config.carrier_detuning_hz,
    )
    filtered = apply_filter(field, transfer_function(demodulator))
    slots = integrate_slots(filtered, waveform.window_fraction)
    return np.asarray(slots.energies * scale)


def run_monte_carlo(
    config: ScenarioConfig,
    extinction_db: float,
    seed_sequence: np.random.SeedSequence,
    *,
    calibration: DemodExtinction | None = None,
    reference_qber: float | None = None,
    cache: CalibrationCache | None = None,
    click_sink: ClickSink | None = None,
) -> MonteCarloOutcome:
    """Count clicks and errors over ``frame_length`` symbols in blocks.

    A click in a slot without a pi transition is an error. The binomial error
    bar uses *reference_qber* when given so that it does not shrink to zero
    for a frame without errors. *click_sink* receives each block's clicks.
    """

    link = config.link
    slot_s = 1 / link.symbol_rate_hz
    frame_stream, detector_stream = seed_sequence.spawn(2)
    rng = np.random.default_rng(frame_stream)
    detector = SpadSimulator(config.spad, slot_s, detector_stream)
    target = link.mean_photons_at_detector

    use_field = config.demod_model is DemodModel.FIELD
    demodulator = build_demodulator(config)
    guard = 0
    scale = 0.0
    if use_field:
        calibration = calibration or calibrate(config, cache)
        guard = frame_guard(demodulator, link.symbol_rate_hz)
        # Matches the mean counted energy to the configured total loss.
        if calibration.mean_transmission > 0:
            scale = target / (calibration.mean_transmission * link.mu)

    block = config.waveform.block_symbols
    clicks = errors = total_clicks = 0
    remaining = config.frame_length
    while remaining > 0:
        size = min(block, remaining)
        bits = rng.integers(0, 2, size=size, dtype=np.int8)
        if use_field and size > 2 * guard:
            energies = _field_energies(bits, config, demodulator, scale)
            counted = counted_slots(size, guard)
        elif use_field:
            # Too short to filter without edge effects: feed darkness.
            energies = np.zeros(size)
            counted = np.zeros(size, dtype=bool)
        else:
            energies = _extinction_energies(bits, target, extinction_db)
            counted = np.ones(size, dtype=bool)
        first_slot = detector.position
        fired, causes = detector.process(energies)
        if click_sink is not None:
            click_sink(
                ClickTrain(
                    clicks=fired,
                    causes=causes,
                    slot_duration_s=slot_s,
                    first_slot=first_slot,
                )
            )
        total_clicks += int(np.count_nonzero(fired))
        scored = fired & counted
        clicks += int(np.count_nonzero(scored))
        errors += int(np.count_nonzero(scored & (bits == 0)))
        remaining -= size

    slots = config.frame_length
    raw_rate = total_clicks / (slots * slot_s)
    qber: float | None = errors / clicks if clicks else None
    reference = reference_qber if reference_qber is not None else qber
    sigma: float | None = None
    short_frame = clicks < MIN_CLICKS_FOR_ERROR_BAR
    if clicks:
        p = reference if reference is not None else 0.0
        sigma = math.sqrt(p * (1 - p) / clicks)
        if short_frame:
            sigma = max(sigma, 0.5 / math.sqrt(clicks))
    if short_frame:
        diagnostics_logger().warning(
            "Only %d clicks in %d slots; QBER error bar widened", clicks, slots
        )
    return MonteCarloOutcome(
        qber=qber,
        sigma=sigma,
        raw_rate_cps=raw_rate,
        clicks=clicks,
        errors=errors,
        slots=slots,
        short_frame=short_frame,
    )


def run_scenario(
    config: ScenarioConfig,
    *,
    index: int = 0,
    variable: str = "",
    value: float | None = None,
    seed_sequence: np.random.SeedSequence | None = None,
    cache: CalibrationCache | None = None,
    click_sink: ClickSink | None = None,
) -> ResultRow:
    """Evaluate one scenario on the paths selected by ``config.mode``."""

    sequence = seed_sequence or np.random.SeedSequence(config.seed)
    extinction_db, calibration = resolve_extinction(config, cache)
    link = config.link.model_copy(update={"extinction_db": extinction_db})
    flags: list[str] = []
    if calibration is not None and calibration.saturated:
        flags.append("saturated")

    row: dict[str, Any] = {
        "index": index,
        "variable": variable,
        "value": value,
        "mode": config.mode,
        "seed": config.seed,
        "extinction_db": extinction_db,
    }

    analytic_qber: float | None = None
    if config.mode in (RunMode.ANALYTIC, RunMode.BOTH):
        breakdown = qber_analytic(link, config.spad)
        analytic_qber = breakdown.qber
        report = secure_rate(
            link,
            config.spad,
            breakdown.qber,
            config.f_ec,
            raw_rate_cps=breakdown.raw_rate_cps,
        )
        row.update(
            qber_analytic=breakdown.qber,
            raw_rate_cps=breakdown.raw_rate_cps,
            secure_bits_per_symbol=report.secure_bits_per_symbol,
        )

    if config.mode in (RunMode.MONTE_CARLO, RunMode.BOTH):
        outcome = run_monte_carlo(
            config,
            extinction_db,
            sequence,
            calibration=calibration,
            reference_qber=analytic_qber,
            cache=cache,
            click_sink=click_sink,
        )
        row.update(
            qber_mc=outcome.qber,
            qber_mc_sigma=outcome.sigma,
            raw_rate_mc_cps=outcome.raw_rate_cps,
            clicks=outcome.clicks,
            slots=outcome.slots,
        )
        if outcome.short_frame:
            flags.append("short_frame")
        if config.mode is RunMode.MONTE_CARLO and outcome.qber is not None:
            report = secure_rate(
                link,
                config.spad,
                outcome.qber,
                config.f_ec,
                raw_rate_cps=outcome.raw_rate_cps,
            )
            row["secure_bits_per_symbol"] = report.secure_bits_per_symbol

    row["flags"] = flags
    return ResultRow(**row)


def point_config(spec: SweepSpec, value: float) -> ScenarioConfig:
    """Base scenario with the swept variable set to *value*."""

    base = spec.base
    data = base.model_dump()
    if spec.variable is SweepVariable.EXTINCTION_DB:
        data["link"]["extinction_db"] = value
        data["extinction_source"] = ExtinctionSource.CONFIGURED
    elif spec.variable is SweepVariable.TOTAL_LOSS_DB:
        data["link"]["total_loss_db"] = value
    elif spec.variable is SweepVariable.CARRIER_DETUNING_HZ:
        data["carrier_detuning_hz"] = value
    else:
        spacing = base.demodulator.channel_spacing_hz(base.link.symbol_rate_hz)
        data["carrier_detuning_hz"] = base.carrier_detuning_hz + value * spacing
    return ScenarioConfig.model_validate(data)


def _run_point(
    spec: SweepSpec, index: int, value: float, cache: CalibrationCache
) -> ResultRow:
    base = spec.base
    sequence = np.random.SeedSequence(base.seed, spawn_key=(index,))
    try:
        config = point_config(spec, value)
        return run_scenario(
            config,
            index=index,
            variable=spec.variable.value,
            value=value,
            seed_sequence=sequence,
            cache=cache,
        )
    except (RingQkdError, ValidationError, ValueError, ArithmeticError) as exc:
        message = " ".join(str(exc).split())
        logger.warning(
            "Sweep point %d (%s=%g) failed: %s", index, spec.variable, value, message
        )
        return ResultRow(
            index=index,
            variable=spec.variable.value,
            value=value,
            mode=base.mode,
            seed=base.seed,
            flags=["failed"],
            error=message,
        )


def sweep(spec: SweepSpec, *, cache: CalibrationCache | None = None) -> ResultTable:
    """Evaluate every sweep value; failures are recorded in their row."""

    shared = cache if cache is not None else CalibrationCache()
    with ThreadPoolExecutor(max_workers=spec.workers) as pool:
        futures = [
            pool.submit(_run_point, spec, index, value, shared)
            for index, value in enumerate(spec.values)
        ]
        rows = [future.result() for future in futures]
    failed = sum(1 for row in rows if row.error)
    if failed:
        diagnostics_logger().warning("%d of %d sweep points failed", failed, len(rows))
    return ResultTable(variable=spec.variable.value, rows=rows)


def run_config(
    config: ScenarioConfig | SweepSpec, *, click_sink: ClickSink | None = None
) -> ResultTable:
    """Run a parsed config document of either kind.

    Click dumps are a single-scenario diagnostic; sweeps reject *click_sink*.
    """

    if isinstance(config, SweepSpec):
        if click_sink is not None:
            raise InputError("click dumps need a single scenario, not a sweep")
        return sweep(config)
    return ResultTable(rows=[run_scenario(config, click_sink=click_sink)])


__all__ = [
    "MIN_CLICKS_FOR_ERROR_BAR",
    "ClickSink",
    "CalibrationCache",
    "MonteCarloOutcome",
    "build_demodulator",
    "calibrate",
    "point_config",
    "resolve_extinction",
    "run_config",
    "run_monte_carlo",
    "run_scenario",
    "sweep",
]
