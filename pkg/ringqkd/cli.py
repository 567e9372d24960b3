"""Command-line entry point.

Usage
-----
ringqkd fit spectrum.csv [--fsr-ghz 120.1]
ringqkd respond paper_keyrate --from -1 --to 1 --step 0.001 [--out ring.csv]
ringqkd simulate paper_keyrate [--mode both] [--seed 7] [--out row.csv] [--clicks c.csv]
ringqkd sweep paper_fig2c [--out extinction.csv]
ringqkd keyrate --qber 0.013 --loss 26.6
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from collections.abc import Sequence
from pathlib import Path
from typing import Any

import numpy as np
from pydantic import ValidationError

from . import __version__
from .analysis import link_budget, secure_rate, threshold_qber
from .config import (
    parse_config,
    parse_config_data,
    preset_names,
    resolve_config_path,
    resolve_output_path,
    with_overrides,
)
from .errors import (
    ConfigSyntaxError,
    FitFailureError,
    InvariantViolationError,
    MissingFileError,
    OutputError,
    RingFitError,
    RingQkdError,
    UnknownKeyError,
)
from .logging_config import configure_logging, diagnostics_logger
from .models import LinkParams, RunMode, SpadModel
from .optics import fit_to_measurement, sample_response
from .schemas import RunManifest, ScenarioConfig, SweepSpec
from .services.experiments import run_config
from .tools.results_io import (
    ClickDumpWriter,
    config_echo,
    format_results,
    with_output,
    write_results,
)
from .tools.spectrum_io import format_spectrum, read_spectrum, write_spectrum

logger = logging.getLogger(__name__)

EXIT_CODES: dict[type[RingQkdError], int] = {
    MissingFileError: 3,
    ConfigSyntaxError: 4,
    UnknownKeyError: 5,
    InvariantViolationError: 6,
    RingFitError: 7,
    FitFailureError: 7,
    OutputError: 8,
    RingQkdError: 9,
}

_MODE_ALIASES = {"analytic": "analytic", "mc": "monte_carlo", "both": "both"}

_EPILOG = """exit codes:
  2  usage error
  3  config or spectrum file missing
  4  config or spectrum syntax error
  5  unknown config key (strict mode)
  6  config value violates an invariant
  7  ring fit failed
  8  output could not be written
  9  other simulation error
"""


def exit_code_for(exc: RingQkdError) -> int:
    for cls in type(exc).__mro__:
        if cls in EXIT_CODES:
            return EXIT_CODES[cls]
    return EXIT_CODES[RingQkdError]


def _output_path(out: Path | None) -> Path | None:
    return None if out is None else resolve_output_path(out)


def _emit(text: str, path: Path | None) -> None:
    if path is None:
        sys.stdout.write(text)
        return
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise OutputError(f"cannot write output ({exc.strerror})", str(path)) from exc


def _emit_json(
    payload: dict[str, Any], manifest: RunManifest, out: Path | None
) -> None:
    path = _output_path(out)
    if path is not None:
        manifest = with_output(manifest, path)
    document = {"manifest": manifest.model_dump(mode="json"), **payload}
    _emit(json.dumps(document, indent=2) + "\n", path)


def _cmd_fit(args: argparse.Namespace) -> int:
    fsr_hz = args.fsr_ghz * 1e9 if args.fsr_ghz is not None else None
    table = read_spectrum(args.spectrum)
    fit = fit_to_measurement(
        table, fsr_hz=fsr_hz, max_residual_db=args.max_residual_db
    )
    manifest = RunManifest(
        config={
            "spectrum": str(args.spectrum),
            "fsr_hz": fsr_hz,
            "max_residual_db": args.max_residual_db,
        }
    )
    _emit_json(
        {
            "model": fit.model.model_dump(),
            "baseline_db": fit.baseline_db,
            "residual_rms_db": fit.residual_rms_db,
            "notch_count": fit.notch_count,
            "figures": dataclasses.asdict(fit.figures),
        },
        manifest,
        args.out,
    )
    return 0


def _load_demodulator_scenario(name: str, strict: bool) -> ScenarioConfig:
    path = resolve_config_path(name)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigSyntaxError(
            f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}",
            key_path=f"line {exc.lineno}",
        ) from exc
    if isinstance(data, dict) and data.get("kind") in {"mrr", "mzi"}:
        data = {"kind": "scenario", "demodulator": data}
    config = parse_config_data(data, strict=strict, source=str(path))
    return config.base if isinstance(config, SweepSpec) else config


def _cmd_respond(args: argparse.Namespace) -> int:
    scenario = _load_demodulator_scenario(args.config, args.strict)
    demodulator = scenario.demodulator.build(scenario.link.symbol_rate_hz)
    stop_ghz = args.to_ghz + args.step_ghz / 2
    detuning_ghz = np.arange(args.from_ghz, stop_ghz, args.step_ghz)
    table = sample_response(demodulator, detuning_ghz * 1e9)
    manifest = RunManifest(
        config={
            "demodulator": config_echo(scenario.demodulator),
            "symbol_rate_hz": scenario.link.symbol_rate_hz,
            "from_ghz": args.from_ghz,
            "to_ghz": args.to_ghz,
            "step_ghz": args.step_ghz,
        }
    )
    path = _output_path(args.out)
    if path is None:
        sys.stdout.write(format_spectrum(table, manifest))
    else:
        write_spectrum(table, path, manifest)
    return 0


def _run_and_write(
    config: ScenarioConfig | SweepSpec,
    out: Path | None,
    clicks: Path | None = None,
) -> int:
    seed = config.base.seed if isinstance(config, SweepSpec) else config.seed
    manifest = RunManifest(seed=seed, config=config_echo(config))
    click_path = _output_path(clicks)
    if click_path is None:
        table = run_config(config)
    else:
        with ClickDumpWriter(click_path) as dump:
            table = run_config(config, click_sink=dump.write)
        logger.info("Wrote %d clicks to %s", dump.rows_written, click_path)
        manifest = with_output(manifest, click_path)
    path = _output_path(out)
    if path is None:
        sys.stdout.write(format_results(table, manifest))
    else:
        write_results(table, manifest, path)
        logger.info("Wrote %d rows to %s", len(table), path)
    return 0


def _load_run_config(
    args: argparse.Namespace, expected: type[ScenarioConfig] | type[SweepSpec]
) -> ScenarioConfig | SweepSpec:
    config = parse_config(args.config, strict=args.strict)
    if not isinstance(config, expected):
        raise InvariantViolationError(
            f"{args.config}: expected a {expected.model_fields['kind'].default} "
            f"config, got {config.kind}",
            key_path="kind",
        )
    mode = _MODE_ALIASES[args.mode] if args.mode else None
    return with_overrides(config, seed=args.seed, mode=mode)


def _cmd_simulate(args: argparse.Namespace) -> int:
    config = _load_run_config(args, ScenarioConfig)
    analytic = isinstance(config, ScenarioConfig) and config.mode is RunMode.ANALYTIC
    if args.clicks is not None and analytic:
        raise InvariantViolationError(
            "--clicks needs a Monte-Carlo run; pass --mode mc or --mode both",
            key_path="mode",
        )
    return _run_and_write(config, args.out, args.clicks)


def _cmd_sweep(args: argparse.Namespace) -> int:
    return _run_and_write(_load_run_config(args, SweepSpec), args.out)


def _cmd_keyrate(args: argparse.Namespace) -> int:
    if not 0 <= args.qber < 0.5:
        raise InvariantViolationError(
            f"qber must lie in [0, 0.5), got {args.qber}", key_path="qber"
        )
    try:
        link = LinkParams(
            mu=args.mu,
            symbol_rate_hz=args.symbol_rate,
            total_loss_db=args.loss,
            demod_insertion_db=args.demod_insertion,
        )
        spad = SpadModel(
            eta=args.eta,
            dark_cps=args.dark_cps,
            afterpulse_prob=args.afterpulse_prob,
        )
    except ValidationError as exc:
        first = exc.errors()[0]
        key_path = ".".join(str(part) for part in first["loc"])
        raise InvariantViolationError(
            f"{key_path}: {first['msg']}", key_path=key_path
        ) from exc
    report = secure_rate(link, spad, args.qber, args.f_ec)
    budget = link_budget(args.loss, args.demod_insertion, args.coupling_saving)
    manifest = RunManifest(
        config={
            "qber": args.qber,
            "f_ec": args.f_ec,
            "coupling_saving_db": args.coupling_saving,
            "link": config_echo(link),
            "spad": config_echo(spad),
        }
    )
    _emit_json(
        {
            **report.model_dump(),
            "threshold_qber": threshold_qber(args.f_ec),
            "link_budget_db": budget.budget_db,
            "link_budget_infeasible": budget.infeasible,
        },
        manifest,
        args.out,
    )
    return 0


def _add_run_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("config", help="Config file, result file or preset name")
    parser.add_argument("--seed", type=int, help="Override the config seed")
    parser.add_argument(
        "--mode", choices=sorted(_MODE_ALIASES), help="Override the run mode"
    )
    parser.add_argument("--out", type=Path, help="Result table path (default: stdout)")
    parser.add_argument(
        "--strict", action="store_true", help="Reject unknown config keys"
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ringqkd",
        description="Simulate DPS-QKD links demodulated by a micro-ring resonator.",
        epilog=_EPILOG + f"\npresets: {', '.join(preset_names())}",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument(
        "--version", action="version", version=f"%(prog)s {__version__}"
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="Log progress")
    commands = parser.add_subparsers(dest="command", required=True)

    fit = commands.add_parser("fit", help="Fit a ring model to a measured spectrum")
    fit.add_argument("spectrum", type=Path)
    fit.add_argument("--fsr-ghz", type=float, help="Known FSR; fitted otherwise")
    fit.add_argument("--max-residual-db", type=float, default=1.0)
    fit.add_argument("--out", type=Path)
    fit.set_defaults(handler=_cmd_fit)

    respond = commands.add_parser("respond", help="Tabulate a demodulator response")
    respond.add_argument("config", help="Demodulator, scenario or preset")
    respond.add_argument("--from", dest="from_ghz", type=float, required=True)
    respond.add_argument("--to", dest="to_ghz", type=float, required=True)
    respond.add_argument("--step", dest="step_ghz", type=float, required=True)
    respond.add_argument("--out", type=Path)
    respond.add_argument("--strict", action="store_true")
    respond.set_defaults(handler=_cmd_respond)

    simulate = commands.add_parser("simulate", help="Run one scenario")
    _add_run_options(simulate)
    simulate.add_argument(
        "--clicks", type=Path, help="Dump clicked slots as slot_index,click,cause"
    )
    simulate.set_defaults(handler=_cmd_simulate)

    sweep = commands.add_parser("sweep", help="Run a sweep")
    _add_run_options(sweep)
    sweep.set_defaults(handler=_cmd_sweep)

    keyrate = commands.add_parser("keyrate", help="Secure key rate at a given QBER")
    keyrate.add_argument("--qber", type=float, required=True)
    keyrate.add_argument("--loss", type=float, required=True, help="Total loss (dB)")
    keyrate.add_argument("--mu", type=float, default=0.1)
    keyrate.add_argument("--symbol-rate", type=float, default=1e9)
    keyrate.add_argument("--eta", type=float, default=0.1)
    keyrate.add_argument("--dark-cps", type=float, default=550.0)
    keyrate.add_argument("--afterpulse-prob", type=float, default=0.002)
    keyrate.add_argument("--f-ec", type=float, default=1.16)
    keyrate.add_argument("--demod-insertion", type=float, default=0.0)
    keyrate.add_argument("--coupling-saving", type=float, default=0.0)
    keyrate.add_argument("--out", type=Path)
    keyrate.set_defaults(handler=_cmd_keyrate)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(logging.INFO if args.verbose else logging.WARNING)

    bad_range = args.command == "respond" and (
        args.step_ghz <= 0 or args.to_ghz < args.from_ghz
    )
    if bad_range:
        parser.error("respond needs --step > 0 and --to >= --from")

    try:
        return int(args.handler(args))
    except RingQkdError as exc:
        code = exit_code_for(exc)
        diagnostics_logger().error("%s", exc)
        return code


__all__ = ["EXIT_CODES", "build_parser", "exit_code_for", "main"]
