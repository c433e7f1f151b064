"""Gag-factor response-bias models for collapsed survey tables.

Fits by EM or by EMB (EM with empirical-Bayes shrinkage of the gag
parameters), with delete-one jackknife variances and homogeneity checks.
"""

__version__ = "0.1.0"

from .diagnostics import Stratum2x2, TestResult, breslow_day, chi2_upper_tail, lrt_crime_margins, mh_common_odds_ratio
from .em import FitConfig, FitResult, InitPolicy, PseudoCounts, e_step, fit_em, m_step, observed_loglik
from .errors import (
    EmptyTable,
    GagBiasError,
    NotConverged,
    ReplicateNotConverged,
    ResultSerializationError,
    ValidationError,
)
from .fileio import emit_result_json, load_fixture, parse_observed_csv, parse_result_json
from .jackknife import JackknifeResult, SamplingUnitSeries, jackknife_variance
from .model import (
    CompleteCellId,
    CompleteTable,
    Crime,
    IndependenceOmega,
    Mode,
    ModelParams,
    ObservedTable,
    SaturatedOmega,
    Spouse,
    Status,
    cell_probability,
    collapse,
    complete_probabilities,
    crime_rates,
    observed_probabilities,
    observed_rates,
)
from .shrinkage import PriorSpec, b_step, fit_emb, fit_prior, khat, shrink
from .simulate import SimConfig, sample_complete, sample_observed, sample_units
