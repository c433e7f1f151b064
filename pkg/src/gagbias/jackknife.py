"""Delete-one jackknife over sampling units (e.g. survey quarters)."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from .em import FitConfig, FitResult, fit_em
from .errors import IndexOutOfRange, NotConverged, ReplicateNotConverged, ValidationError
from .model import ObservedTable, validate_observed
from .shrinkage import PriorSpec, fit_emb

__all__ = [
    "SamplingUnitSeries",
    "JackknifeResult",
    "leave_one_out_tables",
    "delete_one_variance",
    "jackknife_variance",
]


@dataclass(frozen=True)
class SamplingUnitSeries:
    units: tuple[ObservedTable, ...]
    labels: tuple[str, ...] = ()

    def __post_init__(self):
        units = tuple(self.units)
        if len(units) < 2:
            raise ValidationError("a jackknife needs at least two sampling units")
        labels = tuple(self.labels) or tuple(str(i + 1) for i in range(len(units)))
        if len(labels) != len(units):
            raise ValueError("one label per unit required")
        for u in units:
            validate_observed(u)
        object.__setattr__(self, "units", units)
        object.__setattr__(self, "labels", labels)

    def __len__(self):
        return len(self.units)

    @property
    def pooled(self) -> ObservedTable:
        return ObservedTable.from_vector(np.sum([u.as_vector() for u in self.units], axis=0))


def leave_one_out_tables(series: SamplingUnitSeries, i: int) -> ObservedTable:
    """Pooled table with unit ``i`` removed."""
    if not 0 <= i < len(series):
        raise IndexOutOfRange(f"unit index {i} out of range for {len(series)} units")
    # Summing the remaining units avoids tiny negative cells from subtraction.
    rest = [u.as_vector() for j, u in enumerate(series.units) if j != i]
    return ObservedTable.from_vector(np.sum(rest, axis=0))


def delete_one_variance(point: float, replicates: Sequence[float]) -> float:
    """((S - 1) / S) * sum (m_i - m)^2, with m the full-data estimate."""
    reps = np.asarray(replicates, dtype=float)
    s = reps.size
    if s < 2:
        raise ValueError("need at least two replicates")
    return float((s - 1) / s * np.sum((reps - point) ** 2))


@dataclass(frozen=True)
class JackknifeResult:
    point: FitResult
    replicates: tuple[dict[str, float], ...]
    variance: dict[str, float]
    labels: tuple[str, ...]
    iterations: tuple[int, ...]

    @property
    def mean_iterations(self) -> float:
        return float(np.mean(self.iterations))


def _fit(table: ObservedTable, method: str, prior: PriorSpec | None, config: FitConfig) -> FitResult:
    if method == "emb":
        return fit_emb(table, prior, config)
    return fit_em(table, config)


def _replicate(args):
    series, i, method, prior, config = args
    return _fit(leave_one_out_tables(series, i), method, prior, config)


def jackknife_variance(
    series: SamplingUnitSeries,
    method: Literal["em", "emb"] = "em",
    prior: PriorSpec | None = None,
    config: FitConfig | None = None,
    workers: int | None = None,
) -> JackknifeResult:
    """Jackknife variances of every fitted probability.

    The same prior is reused for every replicate under ``method="emb"``.
    ``workers > 1`` fits replicates in a process pool; results do not depend
    on it.
    """
    if method not in ("em", "emb"):
        raise ValueError(f"unknown method {method!r}")
    if method == "emb" and prior is None:
        raise ValueError("method 'emb' needs a PriorSpec")
    config = config or FitConfig()

    point = _fit(series.pooled, method, prior, config)
    jobs = [(series, i, method, prior, config) for i in range(len(series))]
    fits: list[FitResult] = []
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_replicate, job) for job in jobs]
            for i, fut in enumerate(futures):
                try:
                    fits.append(fut.result())
                except NotConverged as exc:
                    raise ReplicateNotConverged(i, series.labels[i], exc) from exc
    else:
        for i, job in enumerate(jobs):
            try:
                fits.append(_replicate(job))
            except NotConverged as exc:
                raise ReplicateNotConverged(i, series.labels[i], exc) from exc

    m = point.params.as_flat()
    reps = tuple(f.params.as_flat() for f in fits)
    variance = {k: delete_one_variance(m[k], [r[k] for r in reps]) for k in m}
    return JackknifeResult(
        point=point,
        replicates=reps,
        variance=variance,
        labels=series.labels,
        iterations=tuple(f.iterations for f in fits),
    )
