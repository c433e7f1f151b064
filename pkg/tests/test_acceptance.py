"""Acceptance criteria, one test per criterion.

Criteria 1, 3 and 4 use ``FitConfig.reference()``, the early-stopped settings
that reproduce the published tables; the fully converged values are printed
alongside for comparison.  Run with ``-s`` to see the detail lines.
"""

import numpy as np
import pytest

from gagbias import (
    FitConfig,
    NotConverged,
    SamplingUnitSeries,
    SimConfig,
    breslow_day,
    collapse,
    complete_probabilities,
    crime_rates,
    e_step,
    fit_em,
    fit_emb,
    jackknife_variance,
    khat,
    lrt_crime_margins,
    observed_probabilities,
    sample_observed,
    sample_units,
    shrink,
)
from gagbias.fileio import load_strata_fixture

from .helpers import random_params

TIGHT = FitConfig(tolerance=1e-10)

TABLE9_OMEGA = np.array([
    [0.000577, 0.001964],
    [0.001374, 0.004676],
    [0.002475, 0.008421],
    [0.000255, 0.000868],
    [0.222448, 0.756942],
])
TABLE11_OMEGA = np.array([
    [0.000367, 0.001211],
    [0.000766, 0.002528],
    [0.001474, 0.004863],
    [0.000135, 0.000446],
    [0.229860, 0.758346],
])
UNWEIGHTED_RATES = [1.35, 2.91, 5.64, 0.60, 989.50]
WEIGHTED_RATES = [1.60, 3.33, 6.37, 0.58, 988.12]


def report(label, got, want=None):
    tail = "" if want is None else f"  (target {want})"
    print(f"  {label}: {got}{tail}")


def gag(params):
    return {k: round(getattr(params, k), 6) for k in ("pi", "rho", "delta", "tau")}


def test_criterion_1(table9, reference):
    fit = fit_em(table9, reference)
    tight = fit_em(table9, TIGHT)
    report("reference", gag(fit.params), "pi 0.76 rho 0.14 delta 0.07 tau 0.53")
    report("converged", gag(tight.params))
    diff = np.abs(fit.params.omega.matrix - TABLE9_OMEGA).max()
    report("max omega diff", f"{diff:.2e}", "1e-5")
    report("converged max omega diff", f"{np.abs(tight.params.omega.matrix - TABLE9_OMEGA).max():.2e}")
    p = fit.params
    assert [p.pi, p.rho, p.delta, p.tau] == pytest.approx([0.76, 0.14, 0.07, 0.53], abs=0.005)
    assert diff <= 1e-5


def test_criterion_2(table2, table3):
    fit = fit_em(table2, TIGHT)
    ref = fit_em(table2, FitConfig.reference())
    weighted = fit_em(table3, FitConfig.reference())
    report("converged", gag(fit.params), "rho 0.16 delta 0.09 tau 0.61")
    report("reference", gag(ref.params))
    report("weighted data, reference", gag(weighted.params))
    report("weighted data, max omega diff", f"{np.abs(weighted.params.omega.matrix - TABLE11_OMEGA).max():.2e}")
    diff = np.abs(fit.params.omega.matrix - TABLE11_OMEGA).max()
    report("max omega diff", f"{diff:.2e}", "1e-5")
    p = fit.params
    assert [p.rho, p.delta, p.tau] == pytest.approx([0.16, 0.09, 0.61], abs=0.005)
    assert diff <= 1e-5


def test_criterion_3(fit10, table2, prior9):
    p = fit10.params
    records = {r.parameter: r for r in fit10.shrinkage}
    tight = fit_emb(table2, prior9, TIGHT)
    report("reference", gag(p), "pi 0.72 rho 0.14 delta 0.08 tau 0.63")
    report("converged", gag(tight.params))
    report("omega(rape, present)", round(p.omega.omega(1, 1), 7), 0.000326)
    for name, rec in records.items():
        report(f"{name}: n, k_hat, weight", (round(rec.n, 2), round(rec.k_hat, 2), round(rec.weight, 5)))
    assert [p.rho, p.delta, p.tau, p.pi] == pytest.approx([0.14, 0.08, 0.63, 0.72], abs=0.005)
    assert p.omega.omega(1, 1) == pytest.approx(0.000326, abs=1e-5)
    assert records["tau"].weight == pytest.approx(0.0058, abs=0.002)
    assert records["rho"].weight == pytest.approx(0.88, abs=0.01)
    assert records["delta"].weight == pytest.approx(0.36, abs=0.01)
    assert records["tau"].n == pytest.approx(3708, rel=0.02)
    assert records["delta"].n == pytest.approx(404, rel=0.02)
    assert records["rho"].n == pytest.approx(193, rel=0.02)


def test_criterion_4(fit10, fit13):
    unweighted = crime_rates(fit10.params.omega).rates
    weighted = crime_rates(fit13.params.omega).rates
    report("unweighted rates", np.round(unweighted, 4).tolist(), UNWEIGHTED_RATES)
    report("weighted rates", np.round(weighted, 4).tolist(), WEIGHTED_RATES)
    np.testing.assert_allclose(unweighted, UNWEIGHTED_RATES, atol=0.01)
    np.testing.assert_allclose(weighted, WEIGHTED_RATES, atol=0.01)


def test_criterion_5():
    rape = breslow_day(load_strata_fixture("table8"))
    dv = breslow_day(load_strata_fixture("table8_dv"))
    report("rape", (round(rape.statistic, 6), rape.df, round(rape.p_value, 6)), "0.2649, 1, 0.6068")
    report("domestic violence p", round(dv.p_value, 6), 0.3049)
    assert rape.statistic == pytest.approx(0.2649, abs=0.001)
    assert rape.df == 1
    assert rape.p_value == pytest.approx(0.6068, abs=0.001)
    assert dv.p_value == pytest.approx(0.3049, abs=0.002)


def test_criterion_6(table9, table2):
    result = lrt_crime_margins(table9, table2)
    report("G2, df", (round(result.statistic, 3), result.df), "> 500, 4")
    assert result.df == 4
    assert result.statistic > 500


def test_criterion_7(fit10):
    rng = np.random.default_rng(7)

    # e-step conservation
    worst = 0.0
    for _ in range(1000):
        params = random_params(rng, saturated=bool(rng.integers(2)))
        x = sample_observed(SimConfig(params, int(rng.integers(1, 10**6)), int(rng.integers(2**32))))
        if x.total == 0:
            continue
        back = collapse(e_step(x, params)).as_vector()
        worst = max(worst, np.max(np.abs(back - x.as_vector()) / np.maximum(x.as_vector(), 1.0)))
    report("e-step conservation, worst relative error", f"{worst:.1e}")
    assert worst <= 1e-9

    # loglik monotone
    drops = []
    for seed in range(20):
        x = sample_observed(SimConfig(random_params(rng), 50_000, seed))
        try:
            fit = fit_em(x, FitConfig(tolerance=1e-10, max_iterations=500))
        except NotConverged as exc:  # slow near-unidentified draws; the trace still counts
            fit = exc.result
        trace = np.array(fit.loglik_trace)
        drops.append(float(np.max(trace[:-1] - trace[1:], initial=-np.inf)))
    report("largest loglik decrease", f"{max(drops):.1e}")
    assert max(drops) <= 1e-9

    # probability maps normalize
    sums = []
    for _ in range(200):
        params = random_params(rng, saturated=bool(rng.integers(2)))
        sums += [complete_probabilities(params).total, observed_probabilities(params).sum()]
    report("max normalization error", f"{np.max(np.abs(np.array(sums) - 1)):.1e}")
    np.testing.assert_allclose(sums, 1.0, atol=1e-12)

    # shrinkage is a convex combination and stays on the simplex
    for _ in range(500):
        x = rng.integers(0, 200, 2).astype(float) + 0.5
        lam = rng.dirichlet([1, 1])
        k = khat(x, lam)
        est = shrink(x, lam, k)
        w = k / (x.sum() + k) if np.isfinite(k) else 1.0
        np.testing.assert_allclose(est, w * lam + (1 - w) * x / x.sum(), atol=1e-12)
        assert est.sum() == pytest.approx(1.0, abs=1e-12) and np.all(est >= 0)

    # identical units give zero jackknife variance
    unit = sample_observed(SimConfig(fit10.params, 50_000, 3))
    jk = jackknife_variance(SamplingUnitSeries((unit,) * 4), config=TIGHT)
    report("identical-unit jackknife variance", max(jk.variance.values()))
    assert max(jk.variance.values()) <= 1e-20

    # simulator recovery at n = 1e6
    keys = ("rho", "delta", "tau")
    truth = np.array([getattr(fit10.params, k) for k in keys])
    fits = np.array([
        [getattr(fit_em(sample_observed(SimConfig(fit10.params, 10**6, s)), TIGHT).params, k) for k in keys]
        for s in range(100, 125)
    ])
    se = fits.std(axis=0, ddof=1)
    held = fit_em(sample_observed(SimConfig(fit10.params, 10**6, 99)), TIGHT).params
    z = np.abs([getattr(held, k) for k in keys] - truth) / se
    report("held-out recovery |z| (rho, delta, tau)", np.round(z, 2).tolist(), "<= 3")
    assert np.all(z <= 3)


def test_criterion_8(table2, table9, fit9, fit10, prior9):
    # Informational only: the published jackknife variances need per-quarter
    # data and the published iteration means depend on an unstated start.
    tight_em = fit_em(table2, TIGHT)
    tight_emb = fit_emb(table2, prior9, TIGHT)
    report("iterations, reference EM (1993-97)", fit9.iterations)
    report("iterations, reference EMB (1998-2004)", fit10.iterations)
    report("iterations, tol 1e-10 EM / EMB (1998-2004)", (tight_em.iterations, tight_emb.iterations))

    units = SamplingUnitSeries(tuple(sample_units(fit10.params, 20_000, 28, seed=17)))
    em = jackknife_variance(units, "em", config=TIGHT)
    emb = jackknife_variance(units, "emb", prior9, TIGHT)
    report("simulated 28-quarter jackknife variance rho, EM / EMB",
           (f"{em.variance['rho']:.2e}", f"{emb.variance['rho']:.2e}"))
    report("mean replicate iterations, EM / EMB", (round(em.mean_iterations, 1), round(emb.mean_iterations, 1)))
    assert tight_em.converged and tight_emb.converged
    assert len(em.replicates) == len(emb.replicates) == 28
    assert all(v >= 0 for v in (*em.variance.values(), *emb.variance.values()))
