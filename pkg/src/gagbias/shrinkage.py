"""Empirical-Bayes shrinkage of the gag parameters and the EMB fit.

Each gag parameter is a binomial proportion with pseudo-counts ``x`` of total
``n``.  Under a Dirichlet prior with mean ``lam`` and strength ``k`` the
posterior mean is

    P* = n / (n + k) * x / n  +  k / (n + k) * lam

and the risk-minimizing plug-in strength is

    k_hat = (n^2 - sum x_i^2) / sum (x_i - n lam_i)^2.

EMB inserts this shrinkage (the B-step) after every M-step, for rho, delta and
tau only; pi and omega stay at their MLEs.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .em import FitConfig, FitResult, PseudoCounts, fit_em, iterate
from .errors import EmptySample, InvalidParameters
from .model import ModelParams, ObservedTable

__all__ = [
    "PriorSpec",
    "ShrinkageRecord",
    "fit_prior",
    "khat",
    "shrink",
    "b_step",
    "fit_emb",
]


@dataclass(frozen=True)
class PriorSpec:
    """Prior means for the gag parameters, usually from an earlier period."""

    lambda_tau: float
    lambda_rho: float
    lambda_delta: float
    provenance: str = ""

    def __post_init__(self):
        for name in ("lambda_tau", "lambda_rho", "lambda_delta"):
            value = float(getattr(self, name))
            if not 0.0 <= value <= 1.0:
                raise InvalidParameters(f"{name}={value!r} outside [0, 1]")
            object.__setattr__(self, name, value)

    def mean(self, parameter: str) -> float:
        return getattr(self, f"lambda_{parameter}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "PriorSpec":
        try:
            return cls(
                lambda_tau=doc["lambda_tau"],
                lambda_rho=doc["lambda_rho"],
                lambda_delta=doc["lambda_delta"],
                provenance=doc.get("provenance", ""),
            )
        except (KeyError, TypeError) as exc:
            raise InvalidParameters(f"malformed prior document: {exc}") from None

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    @classmethod
    def loads(cls, text: str | bytes) -> "PriorSpec":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class ShrinkageRecord:
    parameter: str
    n: float
    k_hat: float  # may be math.inf
    weight: float  # k_hat / (n + k_hat)
    flagged: bool = False  # zero pseudo-sample; estimate fell back to the prior mean

    def to_dict(self) -> dict:
        return {
            "parameter": self.parameter,
            "n": self.n,
            "k_hat": None if math.isinf(self.k_hat) else self.k_hat,
            "weight": self.weight,
            "flagged": self.flagged,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ShrinkageRecord":
        k = doc["k_hat"]
        return cls(doc["parameter"], doc["n"], math.inf if k is None else k,
                   doc["weight"], doc.get("flagged", False))


def _as_counts(x, lam) -> tuple[np.ndarray, np.ndarray, float]:
    x = np.asarray(x, dtype=float)
    lam = np.asarray(lam, dtype=float)
    if x.shape != lam.shape or x.ndim != 1:
        raise ValueError("counts and prior means must be 1-d of equal length")
    if np.any(x < 0) or not np.all(np.isfinite(x)):
        raise ValueError("counts must be finite and non-negative")
    n = float(x.sum())
    if n <= 0:
        raise EmptySample("shrinkage needs a positive sample size")
    return x, lam, n


def khat(x, lam) -> float:
    """Risk-minimizing Dirichlet strength; ``math.inf`` when x/n equals lam."""
    x, lam, n = _as_counts(x, lam)
    num = n * n - float(np.sum(x * x))
    den = float(np.sum((x - n * lam) ** 2))
    if den == 0.0:
        return math.inf
    return max(num, 0.0) / den


def shrink(x, lam, k: float) -> np.ndarray:
    """Posterior mean: convex combination of x/n and lam with weight k/(n+k)."""
    x, lam, n = _as_counts(x, lam)
    if k < 0 or math.isnan(k):
        raise ValueError("k must be non-negative")
    if math.isinf(k):
        return lam.copy()
    w = k / (n + k)
    return (1.0 - w) * (x / n) + w * lam


def b_step(
    pseudo_counts: PseudoCounts, prior: PriorSpec
) -> tuple[float, float, float, tuple[ShrinkageRecord, ...]]:
    """Shrink rho, delta and tau toward the prior means.

    Returns ``(rho*, delta*, tau*, records)``.
    """
    estimates = {}
    records = []
    for name in ("rho", "delta", "tau"):
        hit, miss = pseudo_counts.pair(name)
        lam = prior.mean(name)
        n = hit + miss
        if n <= 0:
            estimates[name] = lam
            records.append(ShrinkageRecord(name, 0.0, math.inf, 1.0, flagged=True))
            continue
        x, lam_vec = (hit, miss), (lam, 1.0 - lam)
        k = khat(x, lam_vec)
        estimates[name] = float(shrink(x, lam_vec, k)[0])
        weight = 1.0 if math.isinf(k) else k / (n + k)
        records.append(ShrinkageRecord(name, n, k, weight))
    return estimates["rho"], estimates["delta"], estimates["tau"], tuple(records)


def fit_prior(prior_observed: ObservedTable, config: FitConfig | None = None,
              provenance: str = "") -> PriorSpec:
    """Prior means taken from an EM fit to an earlier period."""
    fit = fit_em(prior_observed, config)
    p = fit.params
    if not provenance:
        provenance = f"EM fit, {fit.iterations} iterations, total {prior_observed.total:g}"
    return PriorSpec(lambda_tau=p.tau, lambda_rho=p.rho, lambda_delta=p.delta,
                     provenance=provenance)


def fit_emb(observed: ObservedTable, prior: PriorSpec,
            config: FitConfig | None = None) -> FitResult:
    """Fit by EMB: E-step, M-step, then shrink rho/delta/tau every iteration."""

    def bayes(counts: PseudoCounts, mle: ModelParams):
        rho, delta, tau, records = b_step(counts, prior)
        return mle.replace(rho=rho, delta=delta, tau=tau), records

    return iterate(observed, config or FitConfig(), method="emb", after_m_step=bayes)
