"""Tests for result tables, manifests, click dumps and spectrum files."""

from __future__ import annotations

from datetime import UTC, datetime
from pathlib import Path

import numpy as np
import pytest

from ringqkd.config import parse_config
from ringqkd.detector import CAUSE_CODES, ClickTrain, simulate_clicks
from ringqkd.errors import ConfigSyntaxError, InputError, MissingFileError, OutputError
from ringqkd.field import SlotEnergies
from ringqkd.models import ClickCause, RingModel, SpadModel
from ringqkd.optics import SpectrumAxis, sample_response
from ringqkd.schemas import RESULT_COLUMNS, ResultRow, ResultTable, RunManifest
from ringqkd.services.experiments import run_config
from ringqkd.tools.results_io import (
    CLICK_COLUMNS,
    MANIFEST_TITLE,
    SPECTRUM_MANIFEST_TITLE,
    ClickDumpWriter,
    config_echo,
    format_results,
    parse_manifest,
    read_results,
    row_values,
    write_results,
)
from ringqkd.tools.spectrum_io import format_spectrum, read_spectrum, write_spectrum

FIXED_TIME = datetime(2024, 5, 1, 12, 0, 0, tzinfo=UTC)


def _manifest(config: dict[str, object] | None = None) -> RunManifest:
    return RunManifest(seed=3, config=config or {}, timestamp=FIXED_TIME)


def test_empty_table_writes_header_only() -> None:
    text = format_results(ResultTable(), _manifest())

    lines = text.splitlines()
    assert lines[0] == MANIFEST_TITLE
    assert lines[-1] == ",".join(RESULT_COLUMNS)
    assert all(line.startswith("#") for line in lines[:-1])


def test_rows_keep_sweep_order(tmp_path: Path) -> None:
    table = ResultTable(
        variable="total_loss_db",
        rows=[
            ResultRow(
                index=i, variable="total_loss_db", value=10.0 + i, qber_analytic=0.01
            )
            for i in range(5)
        ],
    )

    path = write_results(table, _manifest(), tmp_path / "five.csv")
    manifest, rows = read_results(path)

    assert [row["index"] for row in rows] == ["0", "1", "2", "3", "4"]
    assert rows[2]["value"] == "12"
    assert rows[0]["qber_mc"] == ""
    assert manifest.outputs == ["five.csv"]
    assert manifest.timestamp == FIXED_TIME


def test_cells_use_twelve_significant_digits() -> None:
    row = ResultRow(qber_analytic=1 / 3, flags=["short_frame", "saturated"])

    values = row_values(row)

    assert values["qber_analytic"] == "0.333333333333"
    assert values["flags"] == "short_frame;saturated"
    assert values["mode"] == "analytic"
    assert list(values) == list(RESULT_COLUMNS)


def test_manifest_round_trips() -> None:
    config = config_echo(parse_config("paper_keyrate"))
    manifest = RunManifest(
        seed=7, config=config, timestamp=FIXED_TIME, outputs=["a.csv", "b.csv"]
    )

    text = format_results(ResultTable(), manifest)

    assert parse_manifest(text.splitlines()) == manifest


def test_manifest_drops_microseconds() -> None:
    manifest = RunManifest(
        seed=0, config={}, timestamp=datetime(2024, 1, 1, 0, 0, 0, 123456)
    )

    assert manifest.timestamp == datetime(2024, 1, 1, tzinfo=UTC)


def test_manifest_missing_fields_raise() -> None:
    with pytest.raises(ConfigSyntaxError) as excinfo:
        parse_manifest([MANIFEST_TITLE, "# tool_version: 0.1.0"])

    assert excinfo.value.key_path == "schema_version"


def test_rerun_from_manifest_is_identical_but_for_timestamp(tmp_path: Path) -> None:
    """A result file regenerates itself byte for byte apart from the timestamp."""

    spec = parse_config("paper_fig4b")
    first_path = write_results(
        run_config(spec), _manifest(config_echo(spec)), tmp_path / "a" / "loss.csv"
    )

    replayed = parse_config(first_path)
    later = RunManifest(
        seed=3, config=config_echo(replayed), timestamp=datetime(2025, 1, 1, tzinfo=UTC)
    )
    second_path = write_results(
        run_config(replayed), later, tmp_path / "b" / "loss.csv"
    )
    first = first_path.read_text(encoding="utf-8")
    second = second_path.read_text(encoding="utf-8")

    def strip_timestamp(text: str) -> list[str]:
        lines = text.splitlines()
        return [line for line in lines if not line.startswith("# timestamp")]

    assert strip_timestamp(first) == strip_timestamp(second)


def test_read_results_missing_file(tmp_path: Path) -> None:
    with pytest.raises(MissingFileError):
        read_results(tmp_path / "nothing.csv")


def test_write_results_into_a_file_path_fails(tmp_path: Path) -> None:
    blocker = tmp_path / "blocker"
    blocker.write_text("", encoding="utf-8")

    with pytest.raises(OutputError) as excinfo:
        write_results(ResultTable(), _manifest(), blocker / "out.csv")

    assert excinfo.value.path.endswith("out.csv")


def test_click_dump_keeps_absolute_slots_across_blocks(tmp_path: Path) -> None:
    spad = SpadModel(eta=1.0, dark_cps=0.0, afterpulse_prob=0.0, dead_time_s=0.0)
    slots = SlotEnergies(energies=np.array([0.0, 50.0, 0.0]), slot_duration_s=1e-9)
    first = simulate_clicks(slots, spad, seed=0)
    signal = CAUSE_CODES[ClickCause.SIGNAL]
    second = ClickTrain(
        clicks=np.array([True, False]),
        causes=np.array([signal, 0], dtype=np.int8),
        slot_duration_s=1e-9,
        first_slot=3,
    )

    with ClickDumpWriter(tmp_path / "clicks.csv") as dump:
        dump.write(first)
        dump.write(second)

    lines = (tmp_path / "clicks.csv").read_text(encoding="utf-8").splitlines()
    assert lines == [",".join(CLICK_COLUMNS), "1,1,signal", "3,1,signal"]
    assert dump.rows_written == 2


def test_click_dump_into_a_file_path_fails(tmp_path: Path) -> None:
    blocker = tmp_path / "blocker"
    blocker.write_text("", encoding="utf-8")

    with pytest.raises(OutputError) as excinfo:
        with ClickDumpWriter(blocker / "clicks.csv"):
            pass

    assert excinfo.value.path.endswith("clicks.csv")


def test_same_run_in_two_directories_writes_the_same_text(tmp_path: Path) -> None:
    table = ResultTable(rows=[ResultRow(qber_analytic=0.02)])

    first = write_results(table, _manifest(), tmp_path / "a" / "run.csv")
    second = write_results(table, _manifest(), tmp_path / "b" / "run.csv")

    assert first.read_text(encoding="utf-8") == second.read_text(encoding="utf-8")


def test_written_spectrum_carries_a_manifest(
    tmp_path: Path, soi_ring: RingModel
) -> None:
    table = sample_response(soi_ring, np.linspace(-1e9, 1e9, 21))
    manifest = RunManifest(config={"from_ghz": -1.0}, timestamp=FIXED_TIME)

    path = write_spectrum(table, tmp_path / "ring.csv", manifest)

    lines = path.read_text(encoding="utf-8").splitlines()
    header = [line for line in lines if line.startswith("#")]
    assert lines[0] == SPECTRUM_MANIFEST_TITLE
    assert parse_manifest(header) == manifest.model_copy(
        update={"outputs": ["ring.csv"]}
    )
    assert len(read_spectrum(path)) == 21


def test_spectrum_file_round_trip(tmp_path: Path, soi_ring: RingModel) -> None:
    table = sample_response(soi_ring, np.linspace(-1e9, 1e9, 201))

    path = write_spectrum(table, tmp_path / "ring.csv")
    loaded = read_spectrum(path)

    assert loaded.axis is SpectrumAxis.DETUNING_GHZ
    np.testing.assert_allclose(loaded.abscissa, table.abscissa, rtol=1e-11)
    np.testing.assert_allclose(
        loaded.transmission_db, table.transmission_db, rtol=1e-11
    )
    assert format_spectrum(loaded) == format_spectrum(table)


def test_spectrum_reader_skips_comments(tmp_path: Path) -> None:
    rows = "\n".join(f"{1550 + i * 0.01:.2f},{-i * 0.1:.1f}" for i in range(10))
    path = tmp_path / "wl.csv"
    path.write_text(
        f"# measured 2024-05-01\nwavelength_nm,transmission_db\n{rows}\n",
        encoding="utf-8",
    )

    table = read_spectrum(path)

    assert table.axis is SpectrumAxis.WAVELENGTH_NM
    assert len(table) == 10


@pytest.mark.parametrize(
    ("content", "error"),
    [
        ("frequency,power\n1,2\n", ConfigSyntaxError),
        ("detuning_ghz,transmission_db\n1,abc\n", ConfigSyntaxError),
        ("detuning_ghz,transmission_db\n1,2,3\n", ConfigSyntaxError),
        ("", ConfigSyntaxError),
        (
            "detuning_ghz,transmission_db\n"
            + "\n".join(f"{x},0" for x in (0, 1, 2, 3, 2.5, 5, 6, 7)),
            InputError,
        ),
        (
            "detuning_ghz,transmission_db\n"
            + "\n".join(f"{x},0" for x in (0, 1, 2, 3, 4)),
            InputError,
        ),
    ],
    ids=(
        "bad-header",
        "not-numeric",
        "extra-column",
        "empty",
        "non-monotone",
        "too-short",
    ),
)
def test_spectrum_reader_rejects_malformed_files(
    tmp_path: Path, content: str, error: type[Exception]
) -> None:
    path = tmp_path / "bad.csv"
    path.write_text(content, encoding="utf-8")

    with pytest.raises(error):
        read_spectrum(path)


def test_spectrum_reader_missing_file(tmp_path: Path) -> None:
    with pytest.raises(MissingFileError):
        read_spectrum(tmp_path / "absent.csv")
