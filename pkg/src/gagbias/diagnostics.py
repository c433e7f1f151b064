"""Pre-analysis checks: odds-ratio homogeneity across periods and a
likelihood-ratio test of shared crime margins."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .em import (
    FitConfig,
    FitResult,
    PseudoCounts,
    convergence_metric,
    e_step,
    fit_em,
    initial_params,
    m_step,
    observed_loglik,
)
from .errors import DegenerateStrata, NoAdmissibleRoot, NotConverged, ValidationError
from .model import IndependenceOmega, ModelParams, ObservedTable, validate_observed

__all__ = [
    "Stratum2x2",
    "TestResult",
    "chi2_upper_tail",
    "mh_common_odds_ratio",
    "breslow_day",
    "lrt_crime_margins",
]

_EPS = 1e-300
_MAX_TERMS = 10_000


@dataclass(frozen=True)
class Stratum2x2:
    """One 2x2 table laid out as

        a  b      (event: exposed, unexposed)
        c  d      (no event: exposed, unexposed)
    """

    a: float
    b: float
    c: float
    d: float
    label: str = ""

    def __post_init__(self):
        for name in "abcd":
            value = float(getattr(self, name))
            if not math.isfinite(value) or value < 0:
                raise ValidationError(f"stratum {self.label!r}: cell {name}={value!r} must be finite and >= 0")
            object.__setattr__(self, name, value)
        if self.n <= 0:
            raise DegenerateStrata(f"stratum {self.label!r} is empty")

    @property
    def n(self) -> float:
        return self.a + self.b + self.c + self.d

    def swapped_columns(self) -> "Stratum2x2":
        return Stratum2x2(self.b, self.a, self.d, self.c, self.label)


@dataclass(frozen=True)
class TestResult:
    statistic: float
    df: int
    p_value: float

    __test__ = False  # not a pytest class

    def to_dict(self) -> dict:
        return {"statistic": self.statistic, "df": self.df, "p_value": self.p_value}


def _lower_series(a: float, x: float) -> float:
    # Regularized lower incomplete gamma P(a, x), valid for x < a + 1.
    term = 1.0 / a
    total = term
    ap = a
    for _ in range(_MAX_TERMS):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * 1e-16:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _upper_fraction(a: float, x: float) -> float:
    # Regularized upper incomplete gamma Q(a, x) by modified Lentz, x >= a + 1.
    b = x + 1.0 - a
    c = 1.0 / _EPS
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_TERMS):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _EPS:
            d = _EPS
        c = b + an / c
        if abs(c) < _EPS:
            c = _EPS
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h


def chi2_upper_tail(x: float, df: int) -> float:
    """P(X >= x) for X ~ chi-square(df)."""
    if df < 1:
        raise ValueError("df must be >= 1")
    if x < 0 or math.isnan(x):
        raise ValueError("x must be >= 0")
    if x == 0:
        return 1.0
    if math.isinf(x):
        return 0.0
    a, half = df / 2.0, x / 2.0
    if half == 0.0:
        return 1.0  # x is subnormal
    if half < a + 1.0:
        q = 1.0 - _lower_series(a, half)
    else:
        q = _upper_fraction(a, half)
    return min(1.0, max(0.0, q))


def _check_strata(strata: Sequence[Stratum2x2], minimum: int) -> list[Stratum2x2]:
    strata = list(strata)
    if len(strata) < minimum:
        raise DegenerateStrata(f"need at least {minimum} strata, got {len(strata)}")
    return strata


def mh_common_odds_ratio(strata: Sequence[Stratum2x2]) -> float:
    """Mantel-Haenszel pooled odds ratio."""
    strata = _check_strata(strata, 1)
    num = sum(s.a * s.d / s.n for s in strata)
    den = sum(s.b * s.c / s.n for s in strata)
    if den == 0 or num == 0:
        raise DegenerateStrata("Mantel-Haenszel sums vanish; common odds ratio undefined")
    return num / den


def _expected_a(s: Stratum2x2, odds: float) -> float:
    # Solve A (n - r1 - c1 + A) = R (r1 - A)(c1 - A) within the margins.
    r1, c1, n = s.a + s.b, s.a + s.c, s.n
    lo, hi = max(0.0, r1 + c1 - n), min(r1, c1)
    if hi - lo <= 0:
        return lo
    qa = 1.0 - odds
    qb = n - r1 - c1 + odds * (r1 + c1)
    qc = -odds * r1 * c1
    if abs(qa) < 1e-15:
        roots = [-qc / qb]
    else:
        disc = qb * qb - 4.0 * qa * qc
        if disc < 0:
            raise NoAdmissibleRoot(f"stratum {s.label!r}: negative discriminant")
        q = -0.5 * (qb + math.copysign(math.sqrt(disc), qb))
        roots = [q / qa, qc / q] if q != 0 else [0.0]
    slack = 1e-9 * max(1.0, hi)
    for root in roots:
        if lo - slack <= root <= hi + slack:
            return min(max(root, lo), hi)
    raise NoAdmissibleRoot(f"stratum {s.label!r}: no root in [{lo}, {hi}]")


def breslow_day(strata: Sequence[Stratum2x2], tarone: bool = False) -> TestResult:
    """Breslow-Day chi-square test that all strata share one odds ratio.

    df = number of strata - 1.  ``tarone=True`` applies Tarone's correction.
    """
    strata = _check_strata(strata, 2)
    odds = mh_common_odds_ratio(strata)
    stat = 0.0
    resid_sum = 0.0
    var_sum = 0.0
    for s in strata:
        r1, c1, n = s.a + s.b, s.a + s.c, s.n
        e = _expected_a(s, odds)
        cells = (e, r1 - e, c1 - e, n - r1 - c1 + e)
        if min(cells) <= 0:
            # a fixed margin leaves nothing to test in this stratum
            continue
        var = 1.0 / sum(1.0 / v for v in cells)
        stat += (s.a - e) ** 2 / var
        resid_sum += s.a - e
        var_sum += var
    if tarone and var_sum > 0:
        stat -= resid_sum**2 / var_sum
    df = len(strata) - 1
    return TestResult(stat, df, chi2_upper_tail(max(stat, 0.0), df))


def _fit_shared_crime(tables: Sequence[ObservedTable], config: FitConfig) -> tuple[list[ModelParams], float]:
    """EM for several periods sharing one crime distribution.

    Everything else (pi, gag parameters, spouse distribution) is per period.
    """
    params = [initial_params(t, config) for t in tables]
    total = sum(t.total for t in tables)
    crime = sum(t.crime_totals() for t in tables) / total
    params = [p.replace(omega=IndependenceOmega(crime, p.omega.spouse)) for p in params]

    metric = math.inf
    for it in range(1, config.max_iterations + 1):
        completes = [e_step(t, p) for t, p in zip(tables, params)]
        crime = sum(c.joint().sum(axis=1) for c in completes) / total
        new = []
        for c, p in zip(completes, params):
            mle = m_step(c, "independence", previous=p, default_gag=config.init.gag)
            new.append(mle.replace(omega=IndependenceOmega(crime, mle.omega.spouse)))
        metric = sum(convergence_metric(o, n, config.criterion) for o, n in zip(params, new))
        params = new
        if metric < config.tolerance:
            break
    if not metric < config.tolerance:
        counts = PseudoCounts.from_complete(e_step(tables[0], params[0]))
        stalled = FitResult(params[0], it, False, -math.inf, counts, metric=metric, method="shared-crime")
        raise NotConverged(stalled)
    loglik = sum(observed_loglik(t, p) for t, p in zip(tables, params))
    return params, loglik


def lrt_crime_margins(
    period_a: ObservedTable,
    period_b: ObservedTable,
    config: FitConfig | None = None,
) -> TestResult:
    """G^2 comparing a shared crime distribution (model A) with one per
    period (model B).  df = 4.

    Both models use the independence omega; the default tolerance is 1e-10
    so that the statistic is not dominated by stopping error.
    """
    validate_observed(period_a)
    validate_observed(period_b)
    if config is None:
        config = FitConfig(tolerance=1e-10)
    elif config.omega_mode != "independence":
        raise ValueError("the crime-margin test is defined for the independence omega")

    _, loglik_a = _fit_shared_crime([period_a, period_b], config)
    loglik_b = fit_em(period_a, config).loglik + fit_em(period_b, config).loglik
    g2 = 2.0 * (loglik_b - loglik_a)
    df = 4
    return TestResult(g2, df, chi2_upper_tail(max(g2, 0.0), df))
