"""Gag-factor response-bias model: cell layout, probabilities and collapse.

Two interview circumstances can suppress a report: a spouse being present
(affects rape and domestic violence only) and a telephone interview (affects
every crime except personal larceny).  When both apply, spouse presence takes
precedence.  The latent *complete* table therefore has 30 cells

    mode x crime x report status x spouse presence

of which the survey only records the 15 *observed* cells: gagged reports show
up as "no crime", and spouse presence is unknown for telephone interviews.

Parameters
----------
pi
    probability of a telephone interview.
tau
    probability that a phone-gaggable crime is reported over the phone.
rho, delta
    probability that rape / domestic violence is reported with the spouse
    present.
omega
    joint distribution of crime category and spouse presence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum, IntEnum

import numpy as np

from .errors import (
    EmptyTable,
    InvalidCell,
    InvalidParameters,
    NegativeCell,
    NonFiniteCell,
)

__all__ = [
    "Crime",
    "Spouse",
    "Mode",
    "Status",
    "CompleteCellId",
    "COMPLETE_CELLS",
    "OBSERVED_CELLS",
    "ObservedTable",
    "CompleteTable",
    "IndependenceOmega",
    "SaturatedOmega",
    "ModelParams",
    "RateReport",
    "validate_observed",
    "cell_probability",
    "complete_probabilities",
    "collapse",
    "observed_probabilities",
    "crime_rates",
    "observed_rates",
]


class Crime(IntEnum):
    RAPE = 1
    DOMESTIC_VIOLENCE = 2
    OTHER_ASSAULT = 3
    PERSONAL_LARCENY = 4
    NO_CRIME = 5

    @property
    def label(self) -> str:
        return self.name.lower()


class Spouse(IntEnum):
    PRESENT = 1
    ABSENT = 2

    @property
    def label(self) -> str:
        return self.name.lower()


class Mode(IntEnum):
    PERSONAL = 1
    TELEPHONE = 2

    @property
    def label(self) -> str:
        return self.name.lower()


class Status(Enum):
    REPORTED = 1
    GAGGED_SPOUSE = 2
    GAGGED_PHONE = 3


SPOUSE_GAGGED = (Crime.RAPE, Crime.DOMESTIC_VIOLENCE)
PHONE_GAGGED = (Crime.RAPE, Crime.DOMESTIC_VIOLENCE, Crime.OTHER_ASSAULT)


def _is_valid(mode: Mode, crime: Crime, status: Status, spouse: Spouse) -> bool:
    if status is Status.REPORTED:
        return True
    if status is Status.GAGGED_SPOUSE:
        return crime in SPOUSE_GAGGED and spouse is Spouse.PRESENT
    return mode is Mode.TELEPHONE and crime in PHONE_GAGGED


@dataclass(frozen=True)
class CompleteCellId:
    """One cell of the latent table; construction rejects impossible cells."""

    mode: Mode
    crime: Crime
    status: Status
    spouse: Spouse

    def __post_init__(self):
        try:
            mode, crime = Mode(self.mode), Crime(self.crime)
            status, spouse = Status(self.status), Spouse(self.spouse)
        except ValueError as exc:
            raise InvalidCell(str(exc)) from None
        if not _is_valid(mode, crime, status, spouse):
            raise InvalidCell(
                f"impossible cell: {mode.label}/{crime.label}/"
                f"{status.name.lower()}/spouse {spouse.label}"
            )
        object.__setattr__(self, "mode", mode)
        object.__setattr__(self, "crime", crime)
        object.__setattr__(self, "status", status)
        object.__setattr__(self, "spouse", spouse)

    @property
    def label(self) -> str:
        return (
            f"{self.mode.label}/{self.crime.label}/"
            f"{self.status.name.lower()}/{self.spouse.label}"
        )


def _enumerate_cells() -> tuple[CompleteCellId, ...]:
    cells = []
    for mode in Mode:
        for crime in Crime:
            for status in Status:
                for spouse in Spouse:
                    if _is_valid(mode, crime, status, spouse):
                        cells.append(CompleteCellId(mode, crime, status, spouse))
    return tuple(cells)


COMPLETE_CELLS: tuple[CompleteCellId, ...] = _enumerate_cells()
CELL_INDEX: dict[CompleteCellId, int] = {c: i for i, c in enumerate(COMPLETE_CELLS)}

# Observed layout: personal (crime, spouse) row-major, then telephone by crime.
OBSERVED_CELLS: tuple[tuple[Mode, Crime, Spouse | None], ...] = tuple(
    [(Mode.PERSONAL, c, s) for c in Crime for s in Spouse]
    + [(Mode.TELEPHONE, c, None) for c in Crime]
)
N_OBSERVED = len(OBSERVED_CELLS)


def observed_index(mode: Mode, crime: Crime, spouse: Spouse | None = None) -> int:
    if Mode(mode) is Mode.PERSONAL:
        if spouse is None:
            raise InvalidCell("personal cells need a spouse state")
        return (Crime(crime) - 1) * 2 + (Spouse(spouse) - 1)
    if spouse is not None:
        raise InvalidCell("telephone cells carry no spouse state")
    return 10 + Crime(crime) - 1


def observed_label(index: int) -> str:
    mode, crime, spouse = OBSERVED_CELLS[index]
    if spouse is None:
        return f"({mode.label}, {crime.label})"
    return f"({mode.label}, {crime.label}, {spouse.label})"


def _target(cell: CompleteCellId) -> int:
    # Gagged reports are recorded as "no crime"; phone interviews lose spouse state.
    crime = cell.crime if cell.status is Status.REPORTED else Crime.NO_CRIME
    if cell.mode is Mode.PERSONAL:
        return observed_index(Mode.PERSONAL, crime, cell.spouse)
    return observed_index(Mode.TELEPHONE, crime)


OBSERVED_OF = np.array([_target(c) for c in COMPLETE_CELLS], dtype=np.intp)

# Index arrays used by the vectorized probability map.
_MODE = np.array([c.mode == Mode.TELEPHONE for c in COMPLETE_CELLS])
_CRIME = np.array([c.crime - 1 for c in COMPLETE_CELLS], dtype=np.intp)
_SPOUSE = np.array([c.spouse - 1 for c in COMPLETE_CELLS], dtype=np.intp)
_STATUS = np.array([c.status.value for c in COMPLETE_CELLS])
_HAS_SPOUSE_GAG = np.array(
    [c.crime in SPOUSE_GAGGED and c.spouse is Spouse.PRESENT for c in COMPLETE_CELLS]
)
_HAS_PHONE_GAG = np.array(
    [c.mode is Mode.TELEPHONE and c.crime in PHONE_GAGGED for c in COMPLETE_CELLS]
)


def _frozen(values, shape) -> np.ndarray:
    arr = np.array(values, dtype=float).reshape(shape)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ObservedTable:
    """The 15 recorded cells. Counts are real-valued to admit survey weights."""

    personal: np.ndarray  # (5, 2): crime x spouse
    telephone: np.ndarray  # (5,): crime

    def __post_init__(self):
        try:
            object.__setattr__(self, "personal", _frozen(self.personal, (5, 2)))
            object.__setattr__(self, "telephone", _frozen(self.telephone, (5,)))
        except ValueError as exc:
            raise ValueError(f"bad observed table shape: {exc}") from None

    @classmethod
    def from_vector(cls, values) -> "ObservedTable":
        v = np.asarray(values, dtype=float).ravel()
        if v.shape != (N_OBSERVED,):
            raise ValueError(f"expected {N_OBSERVED} observed cells, got {v.size}")
        return cls(v[:10].reshape(5, 2), v[10:])

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.personal.ravel(), self.telephone])

    @property
    def total(self) -> float:
        return float(self.personal.sum() + self.telephone.sum())

    def crime_totals(self) -> np.ndarray:
        return self.personal.sum(axis=1) + self.telephone

    def __add__(self, other: "ObservedTable") -> "ObservedTable":
        return ObservedTable.from_vector(self.as_vector() + other.as_vector())

    def scaled(self, factor: float) -> "ObservedTable":
        return ObservedTable.from_vector(self.as_vector() * factor)

    def __repr__(self):
        return f"ObservedTable(total={self.total:g})"


def validate_observed(table: ObservedTable) -> ObservedTable:
    """Check every cell is finite and non-negative and the total is positive."""
    for i, x in enumerate(table.as_vector()):
        if not math.isfinite(x):
            raise NonFiniteCell(observed_label(i), float(x))
        if x < 0:
            raise NegativeCell(observed_label(i), float(x))
    if table.total <= 0:
        raise EmptyTable()
    return table


@dataclass(frozen=True, eq=False)
class CompleteTable:
    """Counts (or probabilities) over the 30 latent cells, in COMPLETE_CELLS order."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.array(self.values, dtype=float).ravel()
        if arr.shape != (len(COMPLETE_CELLS),):
            raise ValueError(f"expected {len(COMPLETE_CELLS)} cells, got {arr.size}")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @classmethod
    def from_mapping(cls, mapping: dict[CompleteCellId, float]) -> "CompleteTable":
        values = np.zeros(len(COMPLETE_CELLS))
        for cell, value in mapping.items():
            values[CELL_INDEX[cell]] = value
        return cls(values)

    def __getitem__(self, cell: CompleteCellId) -> float:
        return float(self.values[CELL_INDEX[cell]])

    @property
    def total(self) -> float:
        return float(self.values.sum())

    def joint(self) -> np.ndarray:
        """Crime x spouse totals, summed over mode and report status."""
        out = np.zeros((5, 2))
        np.add.at(out, (_CRIME, _SPOUSE), self.values)
        return out

    def telephone_total(self) -> float:
        return float(self.values[_MODE].sum())

    def __repr__(self):
        return f"CompleteTable(total={self.total:g})"


_SIMPLEX_TOL = 1e-9


def _check_simplex(name: str, values: np.ndarray) -> None:
    if not np.all(np.isfinite(values)):
        raise InvalidParameters(f"{name} has non-finite entries")
    if np.any(values < -_SIMPLEX_TOL) or np.any(values > 1 + _SIMPLEX_TOL):
        raise InvalidParameters(f"{name} entries must lie in [0, 1]")
    if abs(values.sum() - 1.0) > _SIMPLEX_TOL:
        raise InvalidParameters(f"{name} must sum to 1 (sums to {values.sum()!r})")


@dataclass(frozen=True, eq=False)
class IndependenceOmega:
    """omega(i, j) = crime[i] * spouse[j]."""

    crime: np.ndarray
    spouse: np.ndarray

    kind = "independence"

    def __post_init__(self):
        object.__setattr__(self, "crime", _frozen(self.crime, (5,)))
        object.__setattr__(self, "spouse", _frozen(self.spouse, (2,)))
        _check_simplex("crime distribution", self.crime)
        _check_simplex("spouse distribution", self.spouse)

    @property
    def matrix(self) -> np.ndarray:
        return np.outer(self.crime, self.spouse)

    def omega(self, crime: int, spouse: int) -> float:
        return float(self.crime[Crime(crime) - 1] * self.spouse[Spouse(spouse) - 1])


@dataclass(frozen=True, eq=False)
class SaturatedOmega:
    """Unrestricted 5 x 2 joint distribution of crime and spouse presence."""

    table: np.ndarray

    kind = "saturated"

    def __post_init__(self):
        object.__setattr__(self, "table", _frozen(self.table, (5, 2)))
        _check_simplex("omega", self.table.ravel())

    @property
    def matrix(self) -> np.ndarray:
        return np.array(self.table)

    def omega(self, crime: int, spouse: int) -> float:
        return float(self.table[Crime(crime) - 1, Spouse(spouse) - 1])


OmegaModel = IndependenceOmega | SaturatedOmega


@dataclass(frozen=True, eq=False)
class ModelParams:
    pi: float
    tau: float
    rho: float
    delta: float
    omega: OmegaModel

    def __post_init__(self):
        for name in ("pi", "tau", "rho", "delta"):
            value = float(getattr(self, name))
            if not (0.0 <= value <= 1.0):
                raise InvalidParameters(f"{name}={value!r} outside [0, 1]")
            object.__setattr__(self, name, value)
        if not isinstance(self.omega, (IndependenceOmega, SaturatedOmega)):
            raise InvalidParameters("omega must be IndependenceOmega or SaturatedOmega")

    def spouse_report_prob(self, crime: int, spouse: int) -> float:
        """Probability of reporting given the spouse state (1 unless gaggable)."""
        if Spouse(spouse) is Spouse.PRESENT:
            if Crime(crime) is Crime.RAPE:
                return self.rho
            if Crime(crime) is Crime.DOMESTIC_VIOLENCE:
                return self.delta
        return 1.0

    def monitored(self) -> np.ndarray:
        """The probabilities watched by the convergence rule."""
        return np.concatenate(
            [[self.pi, self.tau, self.rho, self.delta], self.omega.matrix.ravel()]
        )

    def as_flat(self) -> dict[str, float]:
        out = {"pi": self.pi, "tau": self.tau, "rho": self.rho, "delta": self.delta}
        m = self.omega.matrix
        for c in Crime:
            for s in Spouse:
                out[f"omega[{c.label},{s.label}]"] = float(m[c - 1, s - 1])
        return out

    def replace(self, **changes) -> "ModelParams":
        fields = dict(pi=self.pi, tau=self.tau, rho=self.rho, delta=self.delta, omega=self.omega)
        fields.update(changes)
        return ModelParams(**fields)


def cell_probability(params: ModelParams, cell: CompleteCellId) -> float:
    """Probability of a single latent cell."""
    if not isinstance(cell, CompleteCellId):
        cell = CompleteCellId(*cell)
    w = params.omega.omega(cell.crime, cell.spouse)
    g = params.spouse_report_prob(cell.crime, cell.spouse)
    mode_p = params.pi if cell.mode is Mode.TELEPHONE else 1.0 - params.pi

    if cell.status is Status.GAGGED_SPOUSE:
        return mode_p * (1.0 - g) * w
    if cell.mode is Mode.PERSONAL:
        return mode_p * g * w
    if cell.status is Status.GAGGED_PHONE:
        return mode_p * g * (1.0 - params.tau) * w
    if cell.crime in PHONE_GAGGED:
        return mode_p * params.tau * g * w
    return mode_p * w


def complete_probabilities(params: ModelParams) -> CompleteTable:
    """All 30 latent cell probabilities (vectorized; sums to 1)."""
    w = params.omega.matrix[_CRIME, _SPOUSE]
    g = np.where(_CRIME == 0, params.rho, params.delta)
    g = np.where(_HAS_SPOUSE_GAG, g, 1.0)
    mode_p = np.where(_MODE, params.pi, 1.0 - params.pi)
    tau = np.where(_STATUS == Status.GAGGED_PHONE.value, 1.0 - params.tau, params.tau)
    phone = np.where(_HAS_PHONE_GAG, tau, 1.0)
    spouse = np.where(_STATUS == Status.GAGGED_SPOUSE.value, 1.0 - g, g)
    # Phone factor never applies to spouse-gagged cells (spouse gag dominates).
    phone = np.where(_STATUS == Status.GAGGED_SPOUSE.value, 1.0, phone)
    return CompleteTable(mode_p * spouse * phone * w)


def collapse(complete: CompleteTable) -> ObservedTable:
    """Sum latent cells into the 15 recorded cells."""
    observed = np.bincount(OBSERVED_OF, weights=complete.values, minlength=N_OBSERVED)
    return ObservedTable.from_vector(observed)


def observed_probabilities(params: ModelParams) -> np.ndarray:
    """Probability vector over the 15 observed cells (OBSERVED_CELLS order)."""
    return collapse(complete_probabilities(params)).as_vector()


@dataclass(frozen=True)
class RateReport:
    """Incidents per 1000 interviews for each crime category."""

    rates: tuple[float, ...]
    basis: str  # "observed-raw" or "model-fitted"

    def as_dict(self) -> dict[str, float]:
        return {c.label: r for c, r in zip(Crime, self.rates)}

    def __getitem__(self, crime) -> float:
        if isinstance(crime, str):
            return self.as_dict()[crime]
        return self.rates[Crime(crime) - 1]


def crime_rates(omega: OmegaModel) -> RateReport:
    per_crime = 1000.0 * omega.matrix.sum(axis=1)
    return RateReport(tuple(float(r) for r in per_crime), "model-fitted")


def observed_rates(table: ObservedTable) -> RateReport:
    validate_observed(table)
    per_crime = 1000.0 * table.crime_totals() / table.total
    return RateReport(tuple(float(r) for r in per_crime), "observed-raw")
