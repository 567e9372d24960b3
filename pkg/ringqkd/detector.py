"""Single-photon avalanche detector: click probabilities and click trains.

The Monte-Carlo model is free running and evaluated once per symbol slot.
Each avalanche arms a hold-off of ``dead_time_s`` and may release one
afterpulse after an exponentially distributed delay. Trap occupancy left by
earlier avalanches raises the afterpulse probability, which is what makes a
detector driven hard degrade super-linearly.
"""

from __future__ import annotations

import heapq
import logging
import math
from collections.abc import Iterator
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import InputError
from .field import SlotEnergies
from .models import ClickCause, SpadModel

logger = logging.getLogger(__name__)

# Cause codes stored in ClickTrain.causes; 0 means no click.
CAUSE_CODES: dict[ClickCause, int] = {
    ClickCause.SIGNAL: 1,
    ClickCause.DARK: 2,
    ClickCause.AFTERPULSE: 3,
}
_CAUSE_BY_CODE = {code: cause for cause, code in CAUSE_CODES.items()}


def click_probability(
    mean_photons: ArrayLike, spad: SpadModel, slot_s: float
) -> NDArray[np.float64]:
    """Probability of at least one primary avalanche in a slot."""

    photons = np.asarray(mean_photons, dtype=float)
    if np.any(photons < 0):
        raise InputError("mean_photons must be non-negative")
    return np.asarray(-np.expm1(-(spad.eta * photons + spad.dark_cps * slot_s)))


def dead_slots(spad: SpadModel, slot_s: float) -> int:
    """Slots blocked by one avalanche, the clicked slot included."""

    return max(1, math.ceil(spad.dead_time_s / slot_s - 1e-9))


def afterpulse_probability(rate_cps: float, spad: SpadModel) -> float:
    """Steady-state chance that an avalanche releases a registered afterpulse.

    Afterpulses released inside the hold-off are lost, and the trap occupancy
    built up by a click rate ``rate_cps`` adds ``rate*tau*exp(-D/tau)``.
    """

    survival = math.exp(-spad.dead_time_s / spad.detrap_time_s)
    occupancy = rate_cps * spad.detrap_time_s * survival
    return min(1.0, spad.afterpulse_prob * survival * (1 + occupancy))


def registered_rate(incident_cps: float, spad: SpadModel) -> float:
    """Non-paralysable dead-time compression of an avalanche rate."""

    return incident_cps / (1 + incident_cps * spad.dead_time_s)


@dataclass(frozen=True)
class ClickTrain:
    """Per-slot detector output; ``causes`` is diagnostic only.

    ``first_slot`` is the frame index of element 0, so the blocks of a long
    run keep their absolute slot numbers.
    """

    clicks: NDArray[np.bool_]
    causes: NDArray[np.int8]
    slot_duration_s: float
    seed: int | None = None
    first_slot: int = 0

    def __post_init__(self) -> None:
        if self.clicks.shape != self.causes.shape:
            raise InputError("clicks and causes must have the same shape")

    def __len__(self) -> int:
        return int(self.clicks.size)

    @property
    def click_count(self) -> int:
        return int(np.count_nonzero(self.clicks))

    @property
    def click_slots(self) -> NDArray[np.intp]:
        return np.flatnonzero(self.clicks)

    def cause_counts(self) -> dict[ClickCause, int]:
        return {
            cause: int(np.count_nonzero(self.causes == code))
            for cause, code in CAUSE_CODES.items()
        }

    def rows(self) -> Iterator[tuple[int, int, str]]:
        """Yield ``(slot_index, click, cause)`` for every clicked slot."""

        for slot in self.click_slots:
            cause = _CAUSE_BY_CODE[int(self.causes[slot])]
            yield self.first_slot + int(slot), 1, cause.value


class SpadSimulator:
    """Streaming click generator that keeps detector state between blocks.

    Two independent streams are spawned from the seed: one drives primary
    avalanches slot by slot, the other the afterpulse draws made per click.
    The primary stream is consumed one uniform per slot, so the outcome does
    not depend on how the caller splits the slots into blocks.
    """

    def __init__(
        self,
        spad: SpadModel,
        slot_s: float,
        seed: int | np.random.SeedSequence,
    ) -> None:
        if slot_s <= 0:
            raise InputError("slot_s must be positive")
        sequence = (
            seed
            if isinstance(seed, np.random.SeedSequence)
            else np.random.SeedSequence(seed)
        )
        primary, afterpulse = sequence.spawn(2)
        self.spad = spad
        self.slot_s = slot_s
        self._primary = np.random.default_rng(primary)
        self._afterpulse = np.random.default_rng(afterpulse)
        self._hold_slots = dead_slots(spad, slot_s)
        self._position = 0
        self._armed_at = 0
        self._occupancy = 0.0
        self._last_click: int | None = None
        self._pending: list[int] = []
        self.clicks = 0

    @property
    def position(self) -> int:
        """Absolute index of the next slot to be processed."""

        return self._position

    def _register(self, slot: int) -> None:
        spad = self.spad
        self._armed_at = slot + self._hold_slots
        self.clicks += 1

        if self._last_click is not None:
            elapsed = (slot - self._last_click) * self.slot_s
            self._occupancy *= math.exp(-elapsed / spad.detrap_time_s)
        self._last_click = slot
        probability = min(1.0, spad.afterpulse_prob * (1 + self._occupancy))
        self._occupancy += 1

        # Both draws happen for every click to keep the stream aligned.
        draw = self._afterpulse.random()
        delay = self._afterpulse.exponential(spad.detrap_time_s)
        if draw < probability and delay >= spad.dead_time_s:
            heapq.heappush(self._pending, slot + max(1, math.ceil(delay / self.slot_s)))

    def process(
        self, mean_photons: ArrayLike
    ) -> tuple[NDArray[np.bool_], NDArray[np.int8]]:
        """Advance over the next slots; return click flags and cause codes."""

        photons = np.asarray(mean_photons, dtype=float)
        count = photons.size
        start = self._position
        end = start + count
        clicks = np.zeros(count, dtype=bool)
        causes = np.zeros(count, dtype=np.int8)

        probability = click_probability(photons, self.spad, self.slot_s)
        dark = self.spad.dark_cps * self.slot_s
        incident = self.spad.eta * photons + dark
        with np.errstate(invalid="ignore", divide="ignore"):
            dark_share = np.where(incident > 0, dark / incident, 0.0)
        uniforms = self._primary.random(count)
        candidates = np.flatnonzero(uniforms < probability)

        index = 0
        while True:
            next_primary = (
                start + int(candidates[index]) if index < candidates.size else end
            )
            next_afterpulse = self._pending[0] if self._pending else end
            slot = min(next_primary, next_afterpulse)
            if slot >= end:
                break
            local = slot - start
            if slot == next_primary:
                index += 1
                if slot == next_afterpulse:
                    heapq.heappop(self._pending)
                if slot < self._armed_at:
                    continue
                dark_click = uniforms[local] < probability[local] * dark_share[local]
                cause = ClickCause.DARK if dark_click else ClickCause.SIGNAL
            else:
                heapq.heappop(self._pending)
                if slot < self._armed_at:
                    continue
                cause = ClickCause.AFTERPULSE
            clicks[local] = True
            causes[local] = CAUSE_CODES[cause]
            self._register(slot)

        self._position = end
        return clicks, causes


def simulate_clicks(
    slots: SlotEnergies, spad: SpadModel, seed: int | np.random.SeedSequence
) -> ClickTrain:
    """One-shot click train for a whole frame of slot energies."""

    simulator = SpadSimulator(spad, slots.slot_duration_s, seed)
    clicks, causes = simulator.process(slots.energies)
    logger.debug("Simulated %d clicks over %d slots", int(clicks.sum()), len(slots))
    return ClickTrain(
        clicks=clicks,
        causes=causes,
        slot_duration_s=slots.slot_duration_s,
        seed=seed if isinstance(seed, int) else None,
    )


__all__ = [
    "CAUSE_CODES",
    "ClickTrain",
    "SpadSimulator",
    "afterpulse_probability",
    "click_probability",
    "dead_slots",
    "registered_rate",
    "simulate_clicks",
]
