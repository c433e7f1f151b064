"""Command-line interface.

Exit status: 0 success, 2 invalid input, 3 no convergence, 64 usage error.
Set GAGBIAS_LOG (e.g. ``INFO``) to get progress messages on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Sequence

from . import __version__
from .diagnostics import breslow_day, lrt_crime_margins
from .em import FitConfig, fit_em
from .errors import GagBiasError, NotConverged, ValidationError
from .fileio import (
    digest,
    emit_json,
    emit_result_json,
    format_observed_csv,
    params_from_document,
    parse_observed_csv,
    parse_result_json,
    parse_strata_csv,
)
from .jackknife import SamplingUnitSeries, jackknife_variance
from .model import Crime, ObservedTable
from .shrinkage import PriorSpec, fit_emb, fit_prior
from .simulate import SimConfig, sample_observed, sample_units

log = logging.getLogger("gagbias")

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NOT_CONVERGED = 3
EXIT_USAGE = 64


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise UsageError(message)


class _Inputs:
    """Reads input files and keeps their bytes for the input digest."""

    def __init__(self):
        self.blobs: list[bytes] = []

    def read(self, path: str) -> bytes:
        try:
            data = Path(path).read_bytes()
        except OSError as exc:
            raise ValidationError(f"cannot read {path}: {exc.strerror}") from None
        self.blobs.append(data)
        return data

    def observed(self, path: str) -> ObservedTable | SamplingUnitSeries:
        p = Path(path)
        if p.is_dir():
            files = sorted(p.glob("*.csv"))
            if not files:
                raise ValidationError(f"no .csv files in directory {path}")
            tables = []
            for f in files:
                table = parse_observed_csv(self.read(str(f)))
                if isinstance(table, SamplingUnitSeries):
                    raise ValidationError(f"{f}: per-unit files must not carry a unit column")
                tables.append(table)
            return SamplingUnitSeries(tuple(tables), tuple(f.stem for f in files))
        return parse_observed_csv(self.read(path))

    def table(self, path: str) -> ObservedTable:
        data = self.observed(path)
        return data.pooled if isinstance(data, SamplingUnitSeries) else data

    def json(self, path: str) -> dict:
        try:
            return json.loads(self.read(path))
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: invalid JSON ({exc})") from None

    @property
    def digest(self) -> str:
        return digest(b"".join(self.blobs))


def _config(args) -> FitConfig:
    if args.reference:
        return FitConfig.reference(omega_mode=args.omega, max_iterations=args.max_iter)
    return FitConfig(tolerance=args.tol, max_iterations=args.max_iter, omega_mode=args.omega)


def _prior(args, inputs: _Inputs, config: FitConfig) -> PriorSpec:
    if args.prior_data:
        return fit_prior(inputs.table(args.prior_data), config,
                         provenance=f"EM fit to {Path(args.prior_data).name}")
    return PriorSpec.from_dict(inputs.json(args.prior))


def _write(data: bytes, out: str | None) -> None:
    if out:
        Path(out).write_bytes(data)
    else:
        sys.stdout.buffer.write(data)
        sys.stdout.flush()


def cmd_fit(args) -> int:
    inputs = _Inputs()
    table = inputs.table(args.data)
    fit = fit_em(table, _config(args))
    log.info("EM converged in %d iterations", fit.iterations)
    _write(emit_result_json(fit, observed=table, input_digest=inputs.digest), args.out)
    return EXIT_OK


def cmd_fit_eb(args) -> int:
    inputs = _Inputs()
    table = inputs.table(args.data)
    config = _config(args)
    prior = _prior(args, inputs, config)
    fit = fit_emb(table, prior, config)
    log.info("EMB converged in %d iterations", fit.iterations)
    _write(emit_result_json(fit, observed=table, prior=prior, input_digest=inputs.digest), args.out)
    return EXIT_OK


def cmd_prior(args) -> int:
    inputs = _Inputs()
    prior = fit_prior(inputs.table(args.data), _config(args),
                      provenance=f"EM fit to {Path(args.data).name}")
    _write(prior.dumps().encode(), args.out)
    return EXIT_OK


def cmd_jackknife(args) -> int:
    inputs = _Inputs()
    series = inputs.observed(args.data)
    if not isinstance(series, SamplingUnitSeries):
        raise ValidationError("jackknife needs a unit column or a directory of per-unit files")
    config = _config(args)
    prior = None
    if args.method == "emb":
        if not (args.prior_data or args.prior):
            raise ValidationError("--method emb needs --prior-data or --prior")
        prior = _prior(args, inputs, config)
    result = jackknife_variance(series, args.method, prior, config, workers=args.workers)
    log.info("jackknife over %d units, mean %.1f iterations", len(series), result.mean_iterations)
    _write(emit_result_json(result, observed=series.pooled, prior=prior,
                            input_digest=inputs.digest), args.out)
    return EXIT_OK


def cmd_simulate(args) -> int:
    inputs = _Inputs()
    params = params_from_document(inputs.json(args.params))
    if args.units:
        tables = sample_units(params, args.n, args.units, args.seed)
        labels = tuple(f"u{i + 1:02d}" for i in range(args.units))
        data = SamplingUnitSeries(tuple(tables), labels) if args.units > 1 else tables[0]
    else:
        data = sample_observed(SimConfig(params, args.n, args.seed))
    _write(format_observed_csv(data).encode(), args.out)
    return EXIT_OK


def cmd_breslow_day(args) -> int:
    inputs = _Inputs()
    result = breslow_day(parse_strata_csv(inputs.read(args.strata)), tarone=args.tarone)
    _write(emit_result_json(result, input_digest=inputs.digest), args.out)
    return EXIT_OK


def cmd_lrt(args) -> int:
    inputs = _Inputs()
    a, b = inputs.table(args.data_a), inputs.table(args.data_b)
    config = FitConfig(tolerance=args.tol, max_iterations=args.max_iter)
    result = lrt_crime_margins(a, b, config)
    _write(emit_result_json(result, input_digest=inputs.digest), args.out)
    return EXIT_OK


def format_report(doc: dict) -> str:
    rates = doc.get("rates")
    if not rates or "fitted" not in rates:
        raise ValidationError("result document has no rates section")
    fitted = rates["fitted"]
    original = rates.get("observed", {})
    lines = [
        f"Rates per 1000 interviews ({doc.get('method', 'em').upper()} fit)",
        f"{'crime':<20}{'original':>12}{'fitted':>12}",
    ]
    for crime in Crime:
        o = original.get(crime.label)
        o_txt = f"{o:12.2f}" if o is not None else f"{'-':>12}"
        lines.append(f"{crime.label:<20}{o_txt}{fitted[crime.label]:12.2f}")
    return "\n".join(lines) + "\n"


def cmd_report(args) -> int:
    inputs = _Inputs()
    try:
        doc = parse_result_json(inputs.read(args.result))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{args.result}: invalid JSON ({exc})") from None
    _write(format_report(doc).encode(), args.out)
    return EXIT_OK


def _fit_options(p: argparse.ArgumentParser, tol: bool = True) -> None:
    p.add_argument("--omega", choices=("independence", "saturated"), default="independence")
    if tol:
        p.add_argument("--tol", type=float, default=1e-10, help="convergence tolerance (default 1e-10)")
    p.add_argument("--max-iter", type=int, default=10000)
    p.add_argument("--reference", action="store_true",
                   help="reference settings: uniform omega start, absolute-change stop at 1e-4")


def _prior_options(p: argparse.ArgumentParser, required: bool) -> None:
    group = p.add_mutually_exclusive_group(required=required)
    group.add_argument("--prior-data", help="observed CSV of the earlier period; fitted by EM")
    group.add_argument("--prior", help="PriorSpec JSON")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gagbias", description="Gag-factor response-bias fits for collapsed survey tables.")
    parser.add_argument("--version", action="version", version=f"gagbias {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fit", help="EM fit")
    p.add_argument("--data", required=True)
    _fit_options(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("fit-eb", help="EMB fit with a prior from an earlier period")
    p.add_argument("--data", required=True)
    _prior_options(p, required=True)
    _fit_options(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_fit_eb)

    p = sub.add_parser("prior", help="write a PriorSpec JSON from an EM fit")
    p.add_argument("--data", required=True)
    _fit_options(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_prior)

    p = sub.add_parser("jackknife", help="delete-one jackknife over sampling units")
    p.add_argument("--data", required=True, help="CSV with a unit column, or a directory of per-unit CSVs")
    p.add_argument("--method", choices=("em", "emb"), default="em")
    _prior_options(p, required=False)
    p.add_argument("--workers", type=int, default=None)
    _fit_options(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_jackknife)

    p = sub.add_parser("simulate", help="seeded multinomial draw as observed CSV")
    p.add_argument("--params", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--units", type=int, default=0, help="draw this many units of size n each")
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("diagnose", help="homogeneity diagnostics")
    dsub = p.add_subparsers(dest="diagnostic", required=True, parser_class=_Parser)
    d = dsub.add_parser("breslow-day")
    d.add_argument("--strata", required=True)
    d.add_argument("--tarone", action="store_true")
    d.add_argument("--out")
    d.set_defaults(func=cmd_breslow_day)
    d = dsub.add_parser("lrt")
    d.add_argument("--data-a", required=True)
    d.add_argument("--data-b", required=True)
    d.add_argument("--tol", type=float, default=1e-10)
    d.add_argument("--max-iter", type=int, default=10000)
    d.add_argument("--out")
    d.set_defaults(func=cmd_lrt)

    p = sub.add_parser("report", help="rates table from a result JSON")
    p.add_argument("--result", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    level = os.environ.get("GAGBIAS_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError:
        return EXIT_USAGE
    try:
        return args.func(args)
    except NotConverged as exc:
        print(f"gagbias: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    except (ValidationError, ValueError) as exc:
        print(f"gagbias: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except GagBiasError as exc:
        print(f"gagbias: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
