"""Analytic QBER model, secure-key bound and loss-budget arithmetic."""

from __future__ import annotations

import logging
import math

import numpy as np
from scipy.optimize import brentq, minimize_scalar
from scipy.special import xlogy

from .detector import afterpulse_probability
from .errors import InputError
from .logging_config import diagnostics_logger
from .models import LinkParams, SpadModel, db_to_ratio
from .schemas import KeyRateReport, LinkBudget, LossOptimum, QberBreakdown

logger = logging.getLogger(__name__)

DEFAULT_F_EC = 1.16
FLAT_OBJECTIVE_TOLERANCE = 1e-6
MIN_SEARCH_SPAN_DB = 20.0


def signal_rate_cps(link: LinkParams, spad: SpadModel) -> float:
    """Photon detection rate before dead time: ``mu*Rsym*10^(-L/10)*eta``."""

    return link.mean_photons_at_detector * link.symbol_rate_hz * spad.eta


def _solve_click_rate(signal: float, link: LinkParams, spad: SpadModel) -> float:
    """Registered click rate consistent with its own afterpulse feedback."""

    ceiling = link.symbol_rate_hz

    def registered(rate: float) -> float:
        incident = signal + spad.dark_cps + afterpulse_probability(rate, spad) * rate
        return min(ceiling, incident / (1 + incident * spad.dead_time_s))

    if registered(0.0) <= 0:
        return 0.0
    if registered(ceiling) >= ceiling:
        return ceiling
    return float(brentq(lambda rate: registered(rate) - rate, 0.0, ceiling, xtol=1e-9))


def qber_analytic(link: LinkParams, spad: SpadModel) -> QberBreakdown:
    """Error decomposition of a DPS link with one detector.

    Leakage of space slots, half of the dark counts and half of the
    afterpulses register as errors; all fractions are taken over the incident
    avalanche rate, which dead time thins without bias.
    """

    signal = signal_rate_cps(link, spad)
    rate = _solve_click_rate(signal, link, spad)
    afterpulses = afterpulse_probability(rate, spad) * rate
    incident = signal + spad.dark_cps + afterpulses
    if incident <= 0:
        return QberBreakdown(
            qber=0.0,
            e_leak=0.0,
            e_dark=0.0,
            e_afterpulse=0.0,
            raw_rate_cps=0.0,
            signal_rate_cps=signal,
        )

    contrast = db_to_ratio(link.extinction_db)
    e_leak = signal / (1 + contrast) / incident
    e_dark = spad.dark_cps / 2 / incident
    e_afterpulse = afterpulses / 2 / incident
    return QberBreakdown(
        qber=e_leak + e_dark + e_afterpulse,
        e_leak=e_leak,
        e_dark=e_dark,
        e_afterpulse=e_afterpulse,
        raw_rate_cps=rate,
        signal_rate_cps=signal,
        afterpulse_rate_cps=afterpulses,
    )


def binary_entropy(p: float) -> float:
    return float(-(xlogy(p, p) + xlogy(1 - p, 1 - p)) / math.log(2))


def collision_probability(qber: float) -> float:
    """Eavesdropper collision probability under individual attacks.

    This is ``1 - e**2 - (1 - 6e)**2 / 2`` up to ``e = 1/6``, where the
    quadratic term reaches zero. Past that point the term stays at zero. Left
    unclamped it grows again and reports a positive secure fraction near
    ``e = 0.35``.
    """

    return 1 - qber**2 - max(0.0, 1 - 6 * qber) ** 2 / 2


def secure_fraction(qber: float, f_ec: float = DEFAULT_F_EC) -> float:
    """Secret bits per sifted bit; negative once correction costs exceed it."""

    if not 0 <= qber < 0.5:
        raise InputError(f"qber must lie in [0, 0.5), got {qber}")
    if f_ec < 1:
        raise InputError(f"f_ec must be at least 1, got {f_ec}")
    return -math.log2(collision_probability(qber)) - f_ec * binary_entropy(qber)


def threshold_qber(f_ec: float = DEFAULT_F_EC) -> float:
    """QBER at which the secure fraction reaches zero."""

    return float(brentq(lambda q: secure_fraction(q, f_ec), 1e-9, 1 / 6, xtol=1e-12))


def secure_rate(
    link: LinkParams,
    spad: SpadModel,
    qber: float,
    f_ec: float = DEFAULT_F_EC,
    *,
    raw_rate_cps: float | None = None,
) -> KeyRateReport:
    """Secure key rate; DPS keeps every registered click as a sifted bit."""

    sifted = (
        raw_rate_cps
        if raw_rate_cps is not None
        else qber_analytic(link, spad).raw_rate_cps
    )
    fraction = secure_fraction(qber, f_ec)
    secure = sifted * max(0.0, fraction)
    return KeyRateReport(
        qber_used=qber,
        sifted_rate_bps=sifted,
        secure_fraction=fraction,
        secure_rate_bps=secure,
        secure_bits_per_symbol=secure / link.symbol_rate_hz,
    )


def link_budget(
    total_loss_db: float,
    demod_insertion_db: float,
    receiver_coupling_saving_db: float = 0.0,
) -> LinkBudget:
    """Loss left for the channel once the receiver is accounted for."""

    for name, value in (
        ("total_loss_db", total_loss_db),
        ("demod_insertion_db", demod_insertion_db),
        ("receiver_coupling_saving_db", receiver_coupling_saving_db),
    ):
        if value < 0:
            raise InputError(f"{name} must be non-negative, got {value}")
    # Rounded so decimal inputs give decimal budgets.
    budget = round(total_loss_db - demod_insertion_db + receiver_coupling_saving_db, 9)
    if budget < 0:
        diagnostics_logger().warning(
            "Demodulator loss exceeds the total budget by %.3g dB", -budget
        )
    return LinkBudget(budget_db=budget, infeasible=budget < 0)


def optimal_loss(
    link: LinkParams,
    spad: SpadModel,
    loss_range_db: tuple[float, float] = (5.0, 45.0),
    *,
    grid_points: int = 401,
) -> LossOptimum:
    """Total loss minimising the analytic QBER.

    A dense grid brackets the minimum, then a bounded scalar search refines it.
    """

    low, high = loss_range_db
    if high - low < MIN_SEARCH_SPAN_DB:
        raise InputError(
            f"loss search range must span at least {MIN_SEARCH_SPAN_DB} dB, "
            f"got {low}..{high}"
        )
    if low < 0:
        raise InputError("loss search range must be non-negative")

    def objective(loss_db: float) -> float:
        trial = link.model_copy(update={"total_loss_db": float(loss_db)})
        return qber_analytic(trial, spad).qber

    grid = np.linspace(low, high, grid_points)
    values = np.array([objective(loss) for loss in grid])
    best = int(np.argmin(values))
    if float(values.max() - values.min()) < FLAT_OBJECTIVE_TOLERANCE:
        diagnostics_logger().warning(
            "QBER varies by less than %.0e over %.1f..%.1f dB; no loss optimum",
            FLAT_OBJECTIVE_TOLERANCE,
            low,
            high,
        )
        return LossOptimum(
            loss_db=float(grid[best]),
            qber=float(values[best]),
            flat_objective=True,
            search_range_db=(low, high),
        )

    bracket = (float(grid[max(best - 1, 0)]), float(grid[min(best + 1, grid.size - 1)]))
    result = minimize_scalar(
        objective, bounds=bracket, method="bounded", options={"xatol": 1e-6}
    )
    loss_db, qber = float(result.x), float(result.fun)
    if qber > values[best]:
        loss_db, qber = float(grid[best]), float(values[best])
    logger.info("Loss optimum %.3f dB with QBER %.4f", loss_db, qber)
    return LossOptimum(
        loss_db=loss_db,
        qber=qber,
        flat_objective=False,
        search_range_db=(low, high),
    )


__all__ = [
    "DEFAULT_F_EC",
    "FLAT_OBJECTIVE_TOLERANCE",
    "binary_entropy",
    "collision_probability",
    "link_budget",
    "optimal_loss",
    "qber_analytic",
    "secure_fraction",
    "secure_rate",
    "signal_rate_cps",
    "threshold_qber",
]
