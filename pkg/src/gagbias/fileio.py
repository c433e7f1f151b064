"""CSV ingestion and JSON result documents."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from importlib import resources
from typing import Iterable

import numpy as np

from . import __version__
from .diagnostics import Stratum2x2, TestResult
from .em import FitResult
from .errors import (
    BadEnum,
    BadHeader,
    BadNumber,
    DuplicateCell,
    InvalidParameters,
    MissingCell,
    ResultSerializationError,
    ValidationError,
)
from .jackknife import JackknifeResult, SamplingUnitSeries
from .model import (
    OBSERVED_CELLS,
    Crime,
    IndependenceOmega,
    Mode,
    ModelParams,
    ObservedTable,
    SaturatedOmega,
    Spouse,
    crime_rates,
    observed_index,
    observed_rates,
    validate_observed,
)
from .shrinkage import PriorSpec, ShrinkageRecord

__all__ = [
    "parse_observed_csv",
    "read_observed_csv",
    "format_observed_csv",
    "parse_strata_csv",
    "load_fixture",
    "load_strata_fixture",
    "digest",
    "result_document",
    "emit_result_json",
    "emit_json",
    "parse_result_json",
    "params_from_document",
    "params_to_dict",
]

OBSERVED_HEADER = ("mode", "crime", "spouse", "count")
STRATA_HEADER = ("stratum", "a", "b", "c", "d")
_MODES = {m.label: m for m in Mode}
_CRIMES = {c.label: c for c in Crime}
_SPOUSES = {"present": Spouse.PRESENT, "absent": Spouse.ABSENT, "na": None}


def _text(data: bytes | str) -> str:
    if isinstance(data, bytes):
        try:
            return data.decode("utf-8-sig")
        except UnicodeDecodeError as exc:
            raise ValidationError(f"input is not UTF-8: {exc}") from None
    return data


def _rows(text: str) -> Iterable[tuple[int, list[str]]]:
    reader = csv.reader(io.StringIO(text))
    for row in reader:
        if not row or all(not cell.strip() for cell in row):
            continue
        yield reader.line_num, [cell.strip() for cell in row]


def _number(raw: str, line: int, what: str = "count") -> float:
    try:
        value = float(raw)
    except ValueError:
        raise BadNumber(f"{what} {raw!r} is not a number", (line,)) from None
    if not math.isfinite(value) or value < 0:
        raise BadNumber(f"{what} {raw!r} must be finite and >= 0", (line,))
    return value


def _cell_name(mode: Mode, crime: Crime, spouse: Spouse | None) -> str:
    return f"({mode.label}, {crime.label}, {spouse.label if spouse else 'na'})"


def parse_observed_csv(data: bytes | str) -> ObservedTable | SamplingUnitSeries:
    """Parse ``mode,crime,spouse,count[,unit]`` rows.

    Without a ``unit`` column the result is one ObservedTable; with it, a
    SamplingUnitSeries with units in order of first appearance.
    """
    rows = iter(_rows(_text(data)))
    try:
        header_line, header = next(rows)
    except StopIteration:
        raise BadHeader("empty file; expected header mode,crime,spouse,count[,unit]") from None
    header = [h.lower() for h in header]
    has_unit = tuple(header) == OBSERVED_HEADER + ("unit",)
    if tuple(header) != OBSERVED_HEADER and not has_unit:
        raise BadHeader(
            f"expected header mode,crime,spouse,count[,unit], got {','.join(header)}",
            (header_line,),
        )

    units: dict[str, dict[int, tuple[float, int]]] = {}
    for line, row in rows:
        if len(row) != len(header):
            raise BadHeader(f"expected {len(header)} fields, got {len(row)}", (line,))
        mode_s, crime_s, spouse_s, count_s = (v.lower() for v in row[:4])
        unit = row[4] if has_unit else ""
        if mode_s not in _MODES:
            raise BadEnum(f"unknown mode {row[0]!r}", (line,))
        if crime_s not in _CRIMES:
            raise BadEnum(f"unknown crime {row[1]!r}", (line,))
        if spouse_s not in _SPOUSES:
            raise BadEnum(f"unknown spouse state {row[2]!r}", (line,))
        mode, crime, spouse = _MODES[mode_s], _CRIMES[crime_s], _SPOUSES[spouse_s]
        if (spouse is None) != (mode is Mode.TELEPHONE):
            raise BadEnum(
                f"spouse must be 'na' exactly for telephone rows, got {row[2]!r} for {mode.label}",
                (line,),
            )
        count = _number(count_s, line)
        cells = units.setdefault(unit, {})
        idx = observed_index(mode, crime, spouse)
        if idx in cells:
            first = cells[idx][1]
            where = f" in unit {unit!r}" if has_unit else ""
            raise DuplicateCell(f"duplicate cell {_cell_name(mode, crime, spouse)}{where}", (first, line))
        cells[idx] = (count, line)

    if not units:
        units[""] = {}
    tables = []
    for unit, cells in units.items():
        for idx, (mode, crime, spouse) in enumerate(OBSERVED_CELLS):
            if idx not in cells:
                where = f" in unit {unit!r}" if has_unit else ""
                raise MissingCell(f"missing cell {_cell_name(mode, crime, spouse)}{where}")
        vec = np.array([cells[i][0] for i in range(len(OBSERVED_CELLS))])
        tables.append(validate_observed(ObservedTable.from_vector(vec)))

    if has_unit:
        return SamplingUnitSeries(tuple(tables), tuple(units))
    return tables[0]


def read_observed_csv(path) -> ObservedTable | SamplingUnitSeries:
    with open(path, "rb") as fh:
        return parse_observed_csv(fh.read())


def _fmt(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(float(x))


def format_observed_csv(data: ObservedTable | SamplingUnitSeries) -> str:
    if isinstance(data, SamplingUnitSeries):
        pairs = list(zip(data.labels, data.units))
        header = ",".join(OBSERVED_HEADER + ("unit",))
    else:
        pairs = [(None, data)]
        header = ",".join(OBSERVED_HEADER)
    lines = [header]
    for label, table in pairs:
        vec = table.as_vector()
        for (mode, crime, spouse), x in zip(OBSERVED_CELLS, vec):
            row = [mode.label, crime.label, spouse.label if spouse else "na", _fmt(x)]
            if label is not None:
                row.append(label)
            lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def parse_strata_csv(data: bytes | str) -> list[Stratum2x2]:
    rows = iter(_rows(_text(data)))
    try:
        header_line, header = next(rows)
    except StopIteration:
        raise BadHeader("empty file; expected header stratum,a,b,c,d") from None
    if tuple(h.lower() for h in header) != STRATA_HEADER:
        raise BadHeader(f"expected header stratum,a,b,c,d, got {','.join(header)}", (header_line,))
    strata = []
    seen: dict[str, int] = {}
    for line, row in rows:
        if len(row) != 5:
            raise BadHeader(f"expected 5 fields, got {len(row)}", (line,))
        label = row[0]
        if label in seen:
            raise DuplicateCell(f"duplicate stratum {label!r}", (seen[label], line))
        seen[label] = line
        a, b, c, d = (_number(v, line, "cell") for v in row[1:])
        strata.append(Stratum2x2(a, b, c, d, label))
    return strata


def load_fixture(name: str) -> ObservedTable:
    """Bundled observed table: ``table2``, ``table3``, ``table9`` or ``table12``."""
    return parse_observed_csv(resources.files("gagbias.data").joinpath(f"{name}.csv").read_bytes())


def load_strata_fixture(name: str = "table8") -> list[Stratum2x2]:
    return parse_strata_csv(resources.files("gagbias.data").joinpath(f"{name}.csv").read_bytes())


def digest(data: bytes) -> str:
    return "sha256:" + hashlib.sha256(data).hexdigest()


def params_to_dict(params: ModelParams) -> dict:
    doc = {
        "pi": params.pi,
        "tau": params.tau,
        "rho": params.rho,
        "delta": params.delta,
        "omega": [[float(v) for v in row] for row in params.omega.matrix],
        "omega_model": params.omega.kind,
    }
    if isinstance(params.omega, IndependenceOmega):
        doc["crime"] = [float(v) for v in params.omega.crime]
        doc["spouse"] = [float(v) for v in params.omega.spouse]
    return doc


def params_from_document(doc: dict) -> ModelParams:
    """ModelParams from a result document or a bare parameter object."""
    p = doc.get("params", doc)
    try:
        if "crime" in p and "spouse" in p and p.get("omega_model", "independence") == "independence":
            omega = IndependenceOmega(p["crime"], p["spouse"])
        elif p.get("omega_model") == "independence":
            m = np.asarray(p["omega"], dtype=float)
            omega = IndependenceOmega(m.sum(axis=1), m.sum(axis=0))
        else:
            omega = SaturatedOmega(p["omega"])
        return ModelParams(pi=p["pi"], tau=p["tau"], rho=p["rho"], delta=p["delta"], omega=omega)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ValidationError):
            raise
        raise InvalidParameters(f"malformed parameter document: {exc!r}") from None


def _fit_section(fit: FitResult) -> dict:
    doc = {
        "method": fit.method,
        "params": params_to_dict(fit.params),
        "iterations": fit.iterations,
        "converged": fit.converged,
        "loglik": fit.loglik,
        "final_change": fit.metric,
        "pseudo_counts": fit.pseudo_counts.as_dict(),
        "unidentified": sorted(fit.unidentified),
        "diagnostics": list(fit.diagnostics),
    }
    if fit.config is not None:
        doc["config"] = {
            "tolerance": fit.config.tolerance,
            "max_iterations": fit.config.max_iterations,
            "omega_mode": fit.config.omega_mode,
            "criterion": fit.config.criterion,
            "init": {"gag": fit.config.init.gag, "omega": fit.config.init.omega},
        }
    if fit.shrinkage:
        doc["shrinkage"] = [r.to_dict() for r in fit.shrinkage]
    return doc


def result_document(
    result: FitResult | JackknifeResult | TestResult,
    *,
    observed: ObservedTable | None = None,
    prior: PriorSpec | None = None,
    input_digest: str | None = None,
) -> dict:
    if isinstance(result, JackknifeResult):
        doc = _fit_section(result.point)
        doc["jackknife"] = {
            "units": list(result.labels),
            "variances": dict(result.variance),
            "replicates": [dict(r) for r in result.replicates],
            "replicate_iterations": list(result.iterations),
        }
        fit = result.point
    elif isinstance(result, FitResult):
        doc = _fit_section(result)
        fit = result
    elif isinstance(result, TestResult):
        doc = {"test": result.to_dict()}
        fit = None
    else:
        raise TypeError(f"cannot serialize {type(result).__name__}")

    if fit is not None:
        rates = {"fitted": crime_rates(fit.params.omega).as_dict()}
        if observed is not None:
            rates["observed"] = observed_rates(observed).as_dict()
        doc["rates"] = rates
    if prior is not None:
        doc["prior"] = prior.to_dict()
    doc["tool"] = {"name": "gagbias", "version": __version__}
    if input_digest is not None:
        doc["input_digest"] = input_digest
    return doc


def emit_json(doc: dict) -> bytes:
    try:
        text = json.dumps(doc, sort_keys=True, indent=2, allow_nan=False)
    except ValueError as exc:
        raise ResultSerializationError(f"result contains a non-finite number: {exc}") from None
    return (text + "\n").encode("utf-8")


def emit_result_json(result, **context) -> bytes:
    """Canonical JSON (sorted keys, full-precision floats); NaN is rejected."""
    return emit_json(result_document(result, **context))


def parse_result_json(data: bytes | str) -> dict:
    doc = json.loads(_text(data))
    if "shrinkage" in doc:
        doc["shrinkage_records"] = [ShrinkageRecord.from_dict(r) for r in doc["shrinkage"]]
    return doc
