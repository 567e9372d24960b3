"""Tests for field synthesis, filtering, slot integration and extinction."""

from __future__ import annotations

import math
from dataclasses import replace

import numpy as np
import pytest

from ringqkd.errors import InputError
from ringqkd.field import (
    SampledField,
    SymbolFrame,
    apply_filter,
    counted_slots,
    demod_extinction,
    frame_guard,
    integrate_slots,
    random_frame,
    synthesize_field,
)
from ringqkd.models import MziModel, PulseShape, RingModel
from ringqkd.optics import transfer_function


def _identity(detuning: np.ndarray) -> np.ndarray:
    return np.ones_like(detuning, dtype=np.complex128)


@pytest.fixture()
def frame() -> SymbolFrame:
    return random_frame(512, np.random.default_rng(3))


def test_from_bits_accumulates_pi_steps() -> None:
    frame = SymbolFrame.from_bits([1, 0, 1, 1])

    np.testing.assert_allclose(frame.phases, [np.pi, np.pi, 0.0, np.pi])
    assert frame.marks.tolist() == [True, False, True, True]


@pytest.mark.parametrize(
    ("bits", "phases"),
    [
        ([0, 2], [0.0, 0.0]),
        ([0, 1], [0.0, 1.0]),
        ([0, 1], [0.0, 0.0]),
        ([0, 1, 0], [0.0, np.pi]),
    ],
    ids=("bad-bit", "off-grid-phase", "inconsistent-step", "length-mismatch"),
)
def test_symbol_frame_rejects_invalid_content(
    bits: list[int], phases: list[float]
) -> None:
    with pytest.raises(InputError):
        SymbolFrame(diff_bits=np.array(bits), phases=np.array(phases))


@pytest.mark.parametrize(
    "shape", [PulseShape.RECTANGULAR, PulseShape.RAISED_COSINE], ids=str
)
def test_each_symbol_carries_mu(frame: SymbolFrame, shape: PulseShape) -> None:
    field = synthesize_field(frame, shape, mu=0.1)

    assert field.energy == pytest.approx(0.1 * len(frame), rel=1e-9)
    np.testing.assert_allclose(integrate_slots(field).energies, 0.1, rtol=1e-9)


def test_constant_phase_frame_concentrates_at_dc() -> None:
    field = synthesize_field(SymbolFrame.from_bits(np.zeros(256, dtype=np.int8)))

    power = np.abs(np.fft.fft(field.samples)) ** 2

    assert power[0] / power.sum() >= 0.99


def test_alternating_phase_frame_moves_energy_to_half_symbol_rate() -> None:
    field = synthesize_field(SymbolFrame.from_bits(np.ones(256, dtype=np.int8)))

    power = np.abs(np.fft.fft(field.samples)) ** 2
    frequency = np.fft.fftfreq(field.samples.size, d=1 / field.sample_rate_hz)
    half_rate = np.abs(np.abs(frequency) - 0.5e9) < 0.125e9
    near_dc = np.abs(frequency) < 0.125e9

    assert power[half_rate].sum() > power[near_dc].sum()


def test_unit_filter_is_identity(frame: SymbolFrame) -> None:
    field = synthesize_field(frame)

    filtered = apply_filter(field, _identity)

    np.testing.assert_allclose(filtered.samples, field.samples, atol=1e-12)


def test_all_pass_filter_conserves_energy(frame: SymbolFrame) -> None:
    field = synthesize_field(frame, PulseShape.RAISED_COSINE)

    filtered = apply_filter(field, lambda f: np.exp(2j * np.pi * f * 1.234e-10))

    assert filtered.energy == pytest.approx(field.energy, rel=1e-9)


def test_filter_is_linear(frame: SymbolFrame, soi_ring: RingModel) -> None:
    field = synthesize_field(frame)
    scaled = replace(field, samples=field.samples * (0.3 - 2j))
    response = transfer_function(soi_ring)

    np.testing.assert_allclose(
        apply_filter(scaled, response).samples,
        apply_filter(field, response).samples * (0.3 - 2j),
        atol=1e-12,
    )


def test_ring_filter_is_passive(frame: SymbolFrame, soi_ring: RingModel) -> None:
    field = synthesize_field(frame)

    filtered = apply_filter(field, transfer_function(soi_ring))

    assert filtered.energy <= field.energy * (1 + 1e-12)


def test_destructive_mzi_suppresses_constant_phase(ideal_mzi: MziModel) -> None:
    field = synthesize_field(SymbolFrame.from_bits(np.zeros(256, dtype=np.int8)))

    filtered = apply_filter(field, transfer_function(ideal_mzi))

    assert filtered.energy < 1e-4 * field.energy


def test_passband_applies_carrier_ramp() -> None:
    field = synthesize_field(
        SymbolFrame.from_bits(np.zeros(4, dtype=np.int8)), carrier_detuning_hz=1e9
    )

    ramp = field.passband() / field.samples
    time = np.arange(field.samples.size) / field.sample_rate_hz

    np.testing.assert_allclose(ramp, np.exp(-2j * np.pi * 1e9 * time), atol=1e-12)


def test_integrate_slots_of_darkness_is_zero() -> None:
    field = SampledField(
        samples=np.zeros(32 * 10),
        sample_rate_hz=32e9,
        symbol_rate_hz=1e9,
        mu=0.1,
    )

    assert np.all(integrate_slots(field).energies == 0)


def test_narrow_window_collects_less(frame: SymbolFrame) -> None:
    field = synthesize_field(frame, PulseShape.RAISED_COSINE)

    full = integrate_slots(field, 1.0).energies.sum()
    narrow = integrate_slots(field, 0.5).energies.sum()

    assert full == pytest.approx(field.energy, rel=1e-9)
    assert narrow < full


def test_integrate_slots_rejects_partial_symbols() -> None:
    field = SampledField(
        samples=np.ones(32 * 10 + 5), sample_rate_hz=32e9, symbol_rate_hz=1e9, mu=0.1
    )

    with pytest.raises(InputError):
        integrate_slots(field)


@pytest.mark.parametrize(
    "kwargs",
    [{"oversampling": 8}, {"mu": -0.1}],
    ids=("undersampled", "negative-mu"),
)
def test_synthesize_field_rejects_bad_settings(
    frame: SymbolFrame, kwargs: dict[str, float]
) -> None:
    with pytest.raises(InputError):
        synthesize_field(frame, **kwargs)  # type: ignore[arg-type]


def test_synthesize_field_rejects_empty_frame() -> None:
    with pytest.raises(InputError):
        synthesize_field(SymbolFrame.from_bits(np.zeros(0, dtype=np.int8)))


def test_frame_guard_covers_demodulator_memory(
    soi_ring: RingModel, ideal_mzi: MziModel
) -> None:
    assert frame_guard(soi_ring, 1e9) == 2
    assert frame_guard(ideal_mzi, 1e9) == 1


def test_counted_slots_drops_both_edges() -> None:
    mask = counted_slots(10, 2)

    assert mask.tolist() == [False, False] + [True] * 6 + [False, False]


def test_ideal_mzi_extinction_saturates(ideal_mzi: MziModel) -> None:
    result = demod_extinction(transfer_function(ideal_mzi), seed=1)

    assert result.saturated
    assert result.extinction_db >= 40
    assert result.mean_transmission == pytest.approx(0.5, abs=0.05)


def test_soi_ring_field_extinction(soi_ring: RingModel) -> None:
    """The ring's memory limits field-level contrast well below its notch depth."""

    result = demod_extinction(
        transfer_function(soi_ring), seed=1, guard=frame_guard(soi_ring, 1e9)
    )

    assert not result.saturated
    assert math.isfinite(result.extinction_db)
    assert 3 < result.extinction_db < 20


def test_ring_extinction_degrades_off_resonance(soi_ring: RingModel) -> None:
    response = transfer_function(soi_ring)

    centred = demod_extinction(response, seed=1, guard=2)
    detuned = demod_extinction(response, carrier_detuning_hz=1e9, seed=1, guard=2)

    assert detuned.extinction_db < centred.extinction_db


def test_ring_extinction_repeats_one_fsr_away(soi_ring: RingModel) -> None:
    response = transfer_function(soi_ring)

    centred = demod_extinction(response, seed=1, guard=2)
    shifted = demod_extinction(
        response, carrier_detuning_hz=soi_ring.fsr_hz, seed=1, guard=2
    )

    assert shifted.extinction_db == pytest.approx(centred.extinction_db, abs=0.1)


def test_demod_extinction_is_deterministic(soi_ring: RingModel) -> None:
    response = transfer_function(soi_ring)

    first = demod_extinction(response, seed=9, guard=2)
    second = demod_extinction(response, seed=9, guard=2)

    assert first == second


def test_demod_extinction_requires_long_frame(soi_ring: RingModel) -> None:
    with pytest.raises(InputError):
        demod_extinction(transfer_function(soi_ring), frame_length=512)
