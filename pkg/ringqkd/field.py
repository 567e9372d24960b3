"""Baseband field synthesis, spectral filtering and slot integration."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import InputError
from .logging_config import diagnostics_logger
from .models import PulseShape, db_to_ratio
from .optics import Demodulator, TransferFunction, photon_lifetime_s

logger = logging.getLogger(__name__)

MIN_OVERSAMPLING = 16
DEFAULT_OVERSAMPLING = 32
DEFAULT_EXTINCTION_CEILING_DB = 60.0
MIN_EXTINCTION_FRAME = 1024


@dataclass(frozen=True)
class SymbolFrame:
    """Differential bits and the absolute carrier phases they produce."""

    diff_bits: NDArray[np.int8]
    phases: NDArray[np.float64]

    def __post_init__(self) -> None:
        bits = np.asarray(self.diff_bits, dtype=np.int8)
        phases = np.asarray(self.phases, dtype=float)
        object.__setattr__(self, "diff_bits", bits)
        object.__setattr__(self, "phases", phases)
        if bits.ndim != 1 or bits.shape != phases.shape:
            raise InputError("diff_bits and phases must be 1-D and of equal length")
        if not np.all((bits == 0) | (bits == 1)):
            raise InputError("diff_bits must contain only 0 and 1")
        if bits.size == 0:
            return
        wrapped = np.mod(phases, 2 * np.pi)
        on_grid = np.isclose(wrapped, 0, atol=1e-9) | np.isclose(
            wrapped, np.pi, atol=1e-9
        ) | np.isclose(wrapped, 2 * np.pi, atol=1e-9)
        if not np.all(on_grid):
            raise InputError("phases must be 0 or pi modulo 2*pi")
        steps = np.mod(np.diff(phases) - np.pi * bits[1:], 2 * np.pi)
        consistent = np.isclose(steps, 0, atol=1e-9) | np.isclose(
            steps, 2 * np.pi, atol=1e-9
        )
        if not np.all(consistent):
            raise InputError("phases do not follow the differential bits")

    @classmethod
    def from_bits(cls, diff_bits: ArrayLike) -> SymbolFrame:
        bits = np.asarray(diff_bits, dtype=np.int8)
        phases = np.mod(np.pi * np.cumsum(bits, dtype=np.int64), 2 * np.pi)
        return cls(diff_bits=bits, phases=phases)

    def __len__(self) -> int:
        return int(self.diff_bits.size)

    @property
    def marks(self) -> NDArray[np.bool_]:
        """Slots carrying a pi transition, bright at the destructive port."""

        return np.asarray(self.diff_bits == 1)


def random_frame(length: int, rng: np.random.Generator) -> SymbolFrame:
    return SymbolFrame.from_bits(rng.integers(0, 2, size=length, dtype=np.int8))


@dataclass(frozen=True)
class SampledField:
    """Complex envelope sampled at ``sample_rate_hz``.

    ``|samples|**2`` is in photons per sample. The envelope is referenced to
    the carrier; ``carrier_detuning_hz`` is applied when filtering.
    """

    samples: NDArray[np.complex128]
    sample_rate_hz: float
    symbol_rate_hz: float
    mu: float
    carrier_detuning_hz: float = 0.0

    def __post_init__(self) -> None:
        samples = np.asarray(self.samples, dtype=np.complex128)
        object.__setattr__(self, "samples", samples)
        if samples.ndim != 1:
            raise InputError("samples must be a 1-D array")
        if self.symbol_rate_hz <= 0 or self.sample_rate_hz <= 0:
            raise InputError("sample and symbol rates must be positive")
        if self.sample_rate_hz < MIN_OVERSAMPLING * self.symbol_rate_hz * (1 - 1e-12):
            raise InputError(
                f"sample rate must be at least {MIN_OVERSAMPLING}x the symbol rate"
            )
        if self.mu < 0:
            raise InputError("mu must be non-negative")

    @property
    def oversampling(self) -> int:
        return round(self.sample_rate_hz / self.symbol_rate_hz)

    @property
    def energy(self) -> float:
        return float(np.sum(np.abs(self.samples) ** 2))

    def passband(self) -> NDArray[np.complex128]:
        """Samples with the carrier detuning ramp applied."""

        time = np.arange(self.samples.size) / self.sample_rate_hz
        ramp = np.exp(-2j * np.pi * self.carrier_detuning_hz * time)
        return np.asarray(self.samples * ramp)


@dataclass(frozen=True)
class SlotEnergies:
    """Mean photon number reaching the detector in each symbol slot."""

    energies: NDArray[np.float64]
    slot_duration_s: float

    def __post_init__(self) -> None:
        energies = np.asarray(self.energies, dtype=float)
        object.__setattr__(self, "energies", energies)
        if energies.ndim != 1:
            raise InputError("slot energies must be a 1-D array")
        if not np.all(np.isfinite(energies)) or np.any(energies < 0):
            raise InputError("slot energies must be finite and non-negative")
        if self.slot_duration_s <= 0:
            raise InputError("slot_duration_s must be positive")

    def __len__(self) -> int:
        return int(self.energies.size)

    def scaled(self, factor: float) -> SlotEnergies:
        return replace(self, energies=self.energies * factor)


@dataclass(frozen=True)
class DemodExtinction:
    """Mark/space contrast measured on a filtered calibration frame."""

    extinction_db: float
    saturated: bool
    mark_energy: float
    space_energy: float
    mean_transmission: float


def _pulse_envelope(
    shape: PulseShape, oversampling: int, mu: float
) -> NDArray[np.float64]:
    if shape is PulseShape.RECTANGULAR:
        envelope = np.ones(oversampling)
    else:
        envelope = np.sin(np.pi * (np.arange(oversampling) + 0.5) / oversampling) ** 2
    return np.asarray(envelope * math.sqrt(mu / float(np.sum(envelope**2))))


def synthesize_field(
    frame: SymbolFrame,
    pulse_shape: PulseShape = PulseShape.RECTANGULAR,
    mu: float = 0.1,
    symbol_rate_hz: float = 1e9,
    oversampling: int = DEFAULT_OVERSAMPLING,
    carrier_detuning_hz: float = 0.0,
) -> SampledField:
    """Phase-modulate a constant carrier with *frame*.

    Each symbol carries exactly ``mu`` photons.
    """

    if len(frame) == 0:
        raise InputError("cannot synthesize an empty frame")
    if oversampling < MIN_OVERSAMPLING:
        raise InputError(
            f"oversampling must be at least {MIN_OVERSAMPLING}, got {oversampling}"
        )
    if mu < 0:
        raise InputError("mu must be non-negative")

    envelope = _pulse_envelope(pulse_shape, oversampling, mu)
    symbols = np.exp(1j * frame.phases)
    samples = (symbols[:, None] * envelope[None, :]).ravel()
    return SampledField(
        samples=samples,
        sample_rate_hz=symbol_rate_hz * oversampling,
        symbol_rate_hz=symbol_rate_hz,
        mu=mu,
        carrier_detuning_hz=carrier_detuning_hz,
    )


def apply_filter(field: SampledField, response: TransferFunction) -> SampledField:
    """Multiply the field spectrum by ``response(bin + carrier_detuning)``.

    The transform is circular, so the frame edges see wrapped memory.
    """

    spectrum = np.fft.fft(field.samples)
    # numpy frequencies are the negated physical detuning in this convention
    detuning = -np.fft.fftfreq(field.samples.size, d=1 / field.sample_rate_hz)
    detuning = detuning + field.carrier_detuning_hz
    filtered = np.fft.ifft(spectrum * response(detuning))
    return replace(field, samples=filtered)


def integrate_slots(field: SampledField, window_fraction: float = 1.0) -> SlotEnergies:
    """Sum ``|samples|**2`` over the centred window of every symbol."""

    if not 0 < window_fraction <= 1:
        raise InputError(f"window_fraction must be in (0, 1], got {window_fraction}")
    oversampling = field.oversampling
    if field.samples.size % oversampling:
        raise InputError(
            f"{field.samples.size} samples is not a whole number of "
            f"{oversampling}-sample symbols"
        )
    power = (np.abs(field.samples) ** 2).reshape(-1, oversampling)
    width = max(1, round(window_fraction * oversampling))
    start = (oversampling - width) // 2
    energies = power[:, start : start + width].sum(axis=1)
    return SlotEnergies(energies=energies, slot_duration_s=1 / field.symbol_rate_hz)


def frame_guard(demodulator: Demodulator, symbol_rate_hz: float) -> int:
    """Symbols at each frame edge contaminated by the demodulator memory."""

    memory = photon_lifetime_s(demodulator) * symbol_rate_hz
    return max(1, math.ceil(memory - 1e-9))


def counted_slots(length: int, guard: int) -> NDArray[np.bool_]:
    """Mask of slots used for statistics: both edges of width *guard* dropped."""

    mask = np.ones(length, dtype=bool)
    mask[:guard] = False
    mask[max(guard, length - guard) :] = False
    return mask


def demod_extinction(
    response: TransferFunction,
    symbol_rate_hz: float = 1e9,
    carrier_detuning_hz: float = 0.0,
    mu: float = 0.1,
    frame_length: int = 4096,
    *,
    seed: int | np.random.SeedSequence = 0,
    guard: int = 1,
    pulse_shape: PulseShape = PulseShape.RECTANGULAR,
    oversampling: int = DEFAULT_OVERSAMPLING,
    window_fraction: float = 1.0,
    ceiling_db: float = DEFAULT_EXTINCTION_CEILING_DB,
) -> DemodExtinction:
    """Measure mark over space slot energy through *response*.

    A vanishing space energy reports ``ceiling_db`` with ``saturated`` set.
    """

    if frame_length < MIN_EXTINCTION_FRAME:
        raise InputError(
            f"frame_length must be at least {MIN_EXTINCTION_FRAME}, got {frame_length}"
        )
    rng = np.random.default_rng(seed)
    frame = random_frame(frame_length, rng)
    field = synthesize_field(
        frame, pulse_shape, mu, symbol_rate_hz, oversampling, carrier_detuning_hz
    )
    slots = integrate_slots(apply_filter(field, response), window_fraction)

    counted = counted_slots(frame_length, guard)
    marks = frame.marks
    mark_energy = float(slots.energies[counted & marks].mean())
    space_energy = float(slots.energies[counted & ~marks].mean())
    mean_transmission = float(slots.energies[counted].mean()) / mu if mu > 0 else 0.0

    ceiling_ratio = db_to_ratio(ceiling_db)
    saturated = space_energy <= 0 or mark_energy >= ceiling_ratio * space_energy
    if saturated:
        extinction = ceiling_db
        diagnostics_logger().info(
            "Demodulation extinction saturated at the %.1f dB ceiling", ceiling_db
        )
    else:
        extinction = 10 * math.log10(mark_energy / space_energy)

    logger.debug(
        "Demodulation extinction %.3f dB at carrier detuning %.6g Hz",
        extinction,
        carrier_detuning_hz,
    )
    return DemodExtinction(
        extinction_db=extinction,
        saturated=saturated,
        mark_energy=mark_energy,
        space_energy=space_energy,
        mean_transmission=mean_transmission,
    )


__all__ = [
    "DEFAULT_EXTINCTION_CEILING_DB",
    "DEFAULT_OVERSAMPLING",
    "MIN_EXTINCTION_FRAME",
    "MIN_OVERSAMPLING",
    "DemodExtinction",
    "SampledField",
    "SlotEnergies",
    "SymbolFrame",
    "apply_filter",
    "counted_slots",
    "demod_extinction",
    "frame_guard",
    "integrate_slots",
    "random_frame",
    "synthesize_field",
]
