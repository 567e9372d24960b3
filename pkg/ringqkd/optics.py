"""Transfer functions of the ring and delay-interferometer demodulators.

Frequencies are detunings in Hz relative to the carrier reference. Both
filters follow the optical ``exp(-i*omega*t)`` convention, so a delay of
``tau`` multiplies the spectrum by ``exp(+i*2*pi*f*tau)``.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable
from dataclasses import dataclass
from enum import StrEnum

import numpy as np
from lmfit import Minimizer, Parameters
from numpy.typing import ArrayLike, NDArray
from pydantic import ValidationError
from scipy.optimize import brentq
from scipy.signal import find_peaks

from .errors import FitFailureError, InputError, RingFitError
from .logging_config import diagnostics_logger
from .models import MziModel, MziPort, RingModel, db_to_ratio

logger = logging.getLogger(__name__)

SPEED_OF_LIGHT_M_S = 299_792_458.0
REFERENCE_WAVELENGTH_NM = 1550.0
REFERENCE_FREQUENCY_HZ = SPEED_OF_LIGHT_M_S / (REFERENCE_WAVELENGTH_NM * 1e-9)

# FSR assumed when a measured spectrum shows a single notch and none is given.
DEFAULT_FSR_HZ = 120.1e9

# Fewest spectrum rows a ring fit accepts.
MIN_FIT_ROWS = 8

# Smallest transmission used when converting to dB.
_POWER_FLOOR = 1e-30

Demodulator = RingModel | MziModel
TransferFunction = Callable[[NDArray[np.float64]], NDArray[np.complex128]]


class CouplingRegime(StrEnum):
    UNDER = "under"
    CRITICAL = "critical"
    OVER = "over"


class SpectrumAxis(StrEnum):
    """Abscissa of a spectrum table, named after its column header."""

    DETUNING_GHZ = "detuning_ghz"
    WAVELENGTH_NM = "wavelength_nm"


@dataclass(frozen=True)
class RingFigures:
    """Spectral figures of merit of an all-pass ring."""

    fwhm_hz: float
    extinction_db: float
    finesse: float
    loaded_q: float
    photon_lifetime_s: float
    min_transmission: float
    max_transmission: float
    regime: CouplingRegime


@dataclass(frozen=True)
class SpectrumTable:
    """Measured or generated power transmission versus frequency."""

    abscissa: NDArray[np.float64]
    transmission_db: NDArray[np.float64]
    axis: SpectrumAxis = SpectrumAxis.DETUNING_GHZ

    def __post_init__(self) -> None:
        abscissa = np.asarray(self.abscissa, dtype=float)
        transmission = np.asarray(self.transmission_db, dtype=float)
        object.__setattr__(self, "abscissa", abscissa)
        object.__setattr__(self, "transmission_db", transmission)
        if abscissa.ndim != 1 or abscissa.shape != transmission.shape:
            raise InputError("spectrum columns must be 1-D and of equal length")
        if abscissa.size == 0:
            raise InputError("spectrum has no rows")
        if not (np.all(np.isfinite(abscissa)) and np.all(np.isfinite(transmission))):
            raise InputError("spectrum contains non-finite values")
        steps = np.diff(abscissa)
        if not (np.all(steps > 0) or np.all(steps < 0)):
            raise InputError(f"{self.axis.value} column is not strictly monotone")

    def __len__(self) -> int:
        return int(self.abscissa.size)

    def detuning_hz(self) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        """Return ``(detuning_hz, transmission_db)`` sorted by detuning."""

        if self.axis is SpectrumAxis.WAVELENGTH_NM:
            detuning = detuning_from_wavelength(self.abscissa)
        else:
            detuning = self.abscissa * 1e9
        order = np.argsort(detuning)
        return detuning[order], self.transmission_db[order]


@dataclass(frozen=True)
class RingFit:
    """Outcome of fitting a measured through-port spectrum."""

    model: RingModel
    baseline_db: float
    residual_rms_db: float
    figures: RingFigures
    notch_count: int


def detuning_from_wavelength(wavelength_nm: ArrayLike) -> NDArray[np.float64]:
    """Convert wavelengths to detuning from the 1550 nm reference."""

    wavelength_m = np.asarray(wavelength_nm, dtype=float) * 1e-9
    return np.asarray(SPEED_OF_LIGHT_M_S / wavelength_m - REFERENCE_FREQUENCY_HZ)


def wavelength_from_detuning(detuning_hz: ArrayLike) -> NDArray[np.float64]:
    frequency = np.asarray(detuning_hz, dtype=float) + REFERENCE_FREQUENCY_HZ
    return np.asarray(SPEED_OF_LIGHT_M_S / frequency * 1e9)


def excess_amplitude(excess_loss_db: float) -> float:
    return float(10 ** (-excess_loss_db / 20))


def ring_response(model: RingModel, detuning_hz: ArrayLike) -> NDArray[np.complex128]:
    """Complex through-port amplitude of the ring at *detuning_hz*."""

    detuning = np.asarray(detuning_hz, dtype=float)
    # Reduce modulo one FSR first so shifted grids see identical phases.
    cycle = np.mod(detuning - model.resonance_offset_hz, model.fsr_hz)
    round_trip = np.exp(2j * np.pi * cycle / model.fsr_hz)
    t, a = model.t_self, model.a_rt
    response = (t - a * round_trip) / (1 - t * a * round_trip)
    return np.asarray(response * excess_amplitude(model.excess_loss_db))


def mzi_response(model: MziModel, detuning_hz: ArrayLike) -> NDArray[np.complex128]:
    """Complex amplitude at the selected interferometer output port."""

    detuning = np.asarray(detuning_hz, dtype=float)
    phase = 2 * np.pi * detuning * model.delay_s + model.phase_trim_rad
    interference = np.exp(1j * phase)
    if model.port is MziPort.DESTRUCTIVE:
        response = (1 - interference) / 2
    else:
        response = (1 + interference) / 2
    return np.asarray(response * excess_amplitude(model.excess_loss_db))


def transfer_function(model: Demodulator) -> TransferFunction:
    """Bind *model* into a callable of detuning for field filtering."""

    if isinstance(model, RingModel):
        return lambda detuning: ring_response(model, detuning)
    return lambda detuning: mzi_response(model, detuning)


def response_db(model: Demodulator, detuning_hz: ArrayLike) -> NDArray[np.float64]:
    """Power transmission in dB, including the excess loss."""

    power = np.abs(transfer_function(model)(np.asarray(detuning_hz, dtype=float))) ** 2
    return np.asarray(10 * np.log10(np.maximum(power, _POWER_FLOOR)))


def sample_response(model: Demodulator, detuning_hz: ArrayLike) -> SpectrumTable:
    detuning = np.asarray(detuning_hz, dtype=float)
    return SpectrumTable(
        abscissa=detuning / 1e9,
        transmission_db=response_db(model, detuning),
        axis=SpectrumAxis.DETUNING_GHZ,
    )


def _notch_levels(product: float, mismatch: float) -> tuple[float, float]:
    """Resonant and anti-resonant power of a lossless-normalised ring.

    ``product`` is ``t*a`` and ``mismatch`` is ``(t - a)**2``.
    """

    minimum = mismatch / (1 - product) ** 2
    maximum = (mismatch + 4 * product) / (1 + product) ** 2
    return minimum, maximum


def _fwhm_from_levels(product: float, mismatch: float, fsr_hz: float) -> float:
    minimum, maximum = _notch_levels(product, mismatch)
    half = (minimum + maximum) / 2
    excess = (half * (1 - product) ** 2 - mismatch) / (1 - half)
    cos_half_phase = float(np.clip(1 - excess / (2 * product), -1.0, 1.0))
    return math.acos(cos_half_phase) * fsr_hz / math.pi


def ring_figures(model: RingModel) -> RingFigures:
    """Closed-form FWHM, notch depth and related figures of *model*.

    The FWHM is taken at half depth of the power notch in linear units and the
    extinction is anti-resonant over resonant transmission.
    """

    product = model.t_self * model.a_rt
    mismatch = (model.t_self - model.a_rt) ** 2
    minimum, maximum = _notch_levels(product, mismatch)
    fwhm = _fwhm_from_levels(product, mismatch, model.fsr_hz)
    extinction = math.inf if minimum <= 0 else 10 * math.log10(maximum / minimum)

    if math.isclose(model.t_self, model.a_rt, rel_tol=1e-9):
        regime = CouplingRegime.CRITICAL
    elif model.t_self > model.a_rt:
        regime = CouplingRegime.UNDER
    else:
        regime = CouplingRegime.OVER

    loss = excess_amplitude(model.excess_loss_db) ** 2
    return RingFigures(
        fwhm_hz=fwhm,
        extinction_db=extinction,
        finesse=model.fsr_hz / fwhm,
        loaded_q=REFERENCE_FREQUENCY_HZ / fwhm,
        photon_lifetime_s=1 / (math.pi * fwhm),
        min_transmission=minimum * loss,
        max_transmission=maximum * loss,
        regime=regime,
    )


def fit_ring_params(
    fsr_hz: float,
    fwhm_hz: float,
    extinction_db: float,
    *,
    excess_loss_db: float = 0.0,
    resonance_offset_hz: float = 0.0,
) -> RingModel:
    """Solve for the under-coupled ring matching FWHM and notch depth.

    The under/over-coupled ambiguity is resolved with ``a_rt <= t_self``.
    """

    if not fsr_hz > 0:
        raise InputError(f"fsr_hz must be positive, got {fsr_hz}")
    if not 0 < fwhm_hz < fsr_hz:
        raise InputError(f"fwhm_hz must lie in (0, fsr_hz), got {fwhm_hz}")
    if not extinction_db > 0:
        raise InputError(f"extinction_db must be positive, got {extinction_db}")

    ratio = db_to_ratio(extinction_db)

    def mismatch_for(product: float) -> float:
        if math.isinf(ratio):
            return 0.0
        return (
            4 * product * (1 - product) ** 2
            / (ratio * (1 + product) ** 2 - (1 - product) ** 2)
        )

    def width_error(product: float) -> float:
        return _fwhm_from_levels(product, mismatch_for(product), fsr_hz) - fwhm_hz

    low, high = 1e-9, 1 - 1e-12
    if width_error(low) <= 0:
        raise RingFitError(
            f"FWHM {fwhm_hz:.6g} Hz is too broad for an all-pass ring with "
            f"FSR {fsr_hz:.6g} Hz"
        )
    if width_error(high) >= 0:
        raise RingFitError(f"FWHM {fwhm_hz:.6g} Hz is too narrow to resolve")

    product = float(brentq(width_error, low, high, xtol=1e-15, rtol=1e-15, maxiter=500))
    mismatch = mismatch_for(product)
    t_self = (math.sqrt(mismatch) + math.sqrt(mismatch + 4 * product)) / 2
    a_rt = t_self - math.sqrt(mismatch)
    if not 0 < a_rt <= t_self < 1:
        raise RingFitError(
            f"no physical ring for FWHM {fwhm_hz:.6g} Hz and extinction "
            f"{extinction_db:.6g} dB (t={t_self:.6g}, a={a_rt:.6g})"
        )

    model = RingModel(
        fsr_hz=fsr_hz,
        t_self=t_self,
        a_rt=a_rt,
        resonance_offset_hz=resonance_offset_hz,
        excess_loss_db=excess_loss_db,
    )
    logger.debug(
        "Fitted ring t=%.9f a=%.9f for fwhm=%.6g Hz extinction=%.4g dB",
        t_self,
        a_rt,
        fwhm_hz,
        extinction_db,
    )
    return model


def mzi_extinction_db(model: MziModel) -> float:
    """Mark/space contrast of the interferometer for its bias error.

    Mark and space swap between ports, so both report ``cot^2(trim/2)``.
    """

    half_trim = model.phase_trim_rad / 2
    space = math.sin(half_trim) ** 2
    if space <= 0:
        return math.inf
    return 10 * math.log10(math.cos(half_trim) ** 2 / space)


def spectral_period_hz(model: Demodulator) -> float:
    if isinstance(model, RingModel):
        return model.fsr_hz
    return 1 / model.delay_s


def notch_extinction_db(model: Demodulator, carrier_detuning_hz: float = 0.0) -> float:
    """Static contrast seen by a carrier at *carrier_detuning_hz*.

    Space light sits on the carrier and mark light half a spectral period
    away. An aligned ring reports its notch depth and an MZI ``cot^2(trim/2)``.
    """

    half_period = spectral_period_hz(model) / 2
    points = np.array([carrier_detuning_hz, carrier_detuning_hz + half_period])
    power = np.abs(transfer_function(model)(points)) ** 2
    space, mark = float(power[0]), float(power[1])
    if space <= 0:
        return math.inf
    return 10 * math.log10(mark / space)


def photon_lifetime_s(model: Demodulator) -> float:
    """Memory of the demodulator: ring amplitude lifetime or MZI delay."""

    if isinstance(model, RingModel):
        return ring_figures(model).photon_lifetime_s
    return model.delay_s


def _estimate_notch_width(
    detuning: NDArray[np.float64],
    linear: NDArray[np.float64],
    centre: int,
    level: float,
) -> float:
    left = centre
    while left > 0 and linear[left] < level:
        left -= 1
    right = centre
    while right < linear.size - 1 and linear[right] < level:
        right += 1
    return float(detuning[right] - detuning[left])


def _through_port_db(
    params: Parameters, detuning_ghz: NDArray[np.float64]
) -> NDArray[np.float64]:
    values = params.valuesdict()
    t = 1 - values["kappa_e"]
    a = values["a_rt"]
    phase = 2 * np.pi * (detuning_ghz - values["offset_ghz"]) / values["fsr_ghz"]
    round_trip = np.exp(1j * phase)
    power = np.abs((t - a * round_trip) / (1 - t * a * round_trip)) ** 2
    power_db = 10 * np.log10(np.maximum(power, _POWER_FLOOR))
    return np.asarray(values["baseline_db"] + power_db)


def fit_to_measurement(
    table: SpectrumTable,
    *,
    fsr_hz: float | None = None,
    max_residual_db: float = 1.0,
    min_notch_depth_db: float = 3.0,
) -> RingFit:
    """Least-squares fit of the all-pass magnitude plus a flat baseline.

    The intrinsic coupling is parameterised as ``kappa_e + kappa_excess`` with
    ``kappa_excess >= 0`` so the fit stays on the ``a_rt <= t_self`` branch.
    """

    if len(table) < MIN_FIT_ROWS:
        raise FitFailureError(
            f"spectrum needs at least {MIN_FIT_ROWS} rows to fit, got {len(table)}"
        )
    detuning, measured = table.detuning_hz()
    detuning_ghz = detuning / 1e9
    baseline = float(np.percentile(measured, 90))
    depth = baseline - float(measured.min())
    if depth < min_notch_depth_db:
        raise FitFailureError(
            f"no notch detected: deepest point is {depth:.3g} dB below the baseline"
        )

    notches, _ = find_peaks(-measured, prominence=depth / 2)
    if notches.size == 0:
        notches = np.array([int(np.argmin(measured))])
    fit_fsr = notches.size >= 2
    if fsr_hz is not None:
        fsr_guess = fsr_hz
    elif fit_fsr:
        fsr_guess = float(np.median(np.diff(detuning[notches])))
    else:
        fsr_guess = DEFAULT_FSR_HZ
        diagnostics_logger().warning(
            "Single notch in spectrum and no FSR given; assuming %.6g GHz",
            DEFAULT_FSR_HZ / 1e9,
        )

    deepest = int(np.argmin(measured))
    linear = 10 ** ((measured - baseline) / 10)
    half_level = (1 + linear[deepest]) / 2
    width_guess = _estimate_notch_width(detuning, linear, deepest, half_level)
    width_guess = float(np.clip(width_guess, fsr_guess * 1e-6, fsr_guess / 4))
    try:
        seed_model = fit_ring_params(fsr_guess, width_guess, depth)
    except RingFitError as exc:
        raise FitFailureError(f"cannot seed spectrum fit: {exc}") from exc

    params = Parameters()
    params.add("baseline_db", value=baseline)
    params.add("offset_ghz", value=float(detuning_ghz[deepest]))
    params.add("fsr_ghz", value=fsr_guess / 1e9, min=0, vary=fit_fsr and fsr_hz is None)
    params.add("kappa_e", value=1 - seed_model.t_self, min=1e-9, max=0.999)
    params.add(
        "kappa_excess",
        value=max(seed_model.t_self - seed_model.a_rt, 1e-9),
        min=0,
        max=0.999,
    )
    params.add("a_rt", expr="1 - kappa_e - kappa_excess")

    def residual(
        trial: Parameters, x: NDArray[np.float64], data: NDArray[np.float64]
    ) -> NDArray[np.float64]:
        return _through_port_db(trial, x) - data

    minimizer = Minimizer(residual, params, fcn_args=(detuning_ghz, measured))
    result = minimizer.minimize(method="leastsq")
    values = result.params.valuesdict()
    residuals = residual(result.params, detuning_ghz, measured)
    rms = float(np.sqrt(np.mean(residuals**2)))
    if rms > max_residual_db:
        raise FitFailureError(
            f"fit residual {rms:.3g} dB RMS exceeds {max_residual_db:.3g} dB",
            residual_rms_db=rms,
        )

    baseline_db = float(values["baseline_db"])
    try:
        model = RingModel(
            fsr_hz=float(values["fsr_ghz"]) * 1e9,
            t_self=1 - float(values["kappa_e"]),
            a_rt=float(values["a_rt"]),
            resonance_offset_hz=float(values["offset_ghz"]) * 1e9,
            excess_loss_db=max(0.0, -baseline_db),
        )
    except ValidationError as exc:
        raise FitFailureError(f"fit converged to an unphysical ring: {exc}") from exc

    logger.info(
        "Spectrum fit: %d rows, %d notch(es), residual %.3g dB RMS",
        len(table),
        notches.size,
        rms,
    )
    return RingFit(
        model=model,
        baseline_db=baseline_db,
        residual_rms_db=rms,
        figures=ring_figures(model),
        notch_count=int(notches.size),
    )


__all__ = [
    "DEFAULT_FSR_HZ",
    "MIN_FIT_ROWS",
    "REFERENCE_FREQUENCY_HZ",
    "REFERENCE_WAVELENGTH_NM",
    "SPEED_OF_LIGHT_M_S",
    "CouplingRegime",
    "Demodulator",
    "RingFigures",
    "RingFit",
    "SpectrumAxis",
    "SpectrumTable",
    "TransferFunction",
    "detuning_from_wavelength",
    "excess_amplitude",
    "fit_ring_params",
    "fit_to_measurement",
    "mzi_extinction_db",
    "mzi_response",
    "notch_extinction_db",
    "spectral_period_hz",
    "photon_lifetime_s",
    "response_db",
    "ring_figures",
    "ring_response",
    "sample_response",
    "transfer_function",
    "wavelength_from_detuning",
]
