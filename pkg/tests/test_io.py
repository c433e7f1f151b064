import dataclasses
import json
import math

import numpy as np
import pytest

from gagbias import FitConfig, PriorSpec, SamplingUnitSeries, b_step, fit_em, jackknife_variance
from gagbias.em import PseudoCounts
from gagbias.diagnostics import TestResult
from gagbias.errors import (
    BadEnum,
    BadHeader,
    BadNumber,
    DuplicateCell,
    EmptyTable,
    MissingCell,
    ResultSerializationError,
)
from gagbias.fileio import (
    emit_result_json,
    format_observed_csv,
    load_fixture,
    load_strata_fixture,
    params_from_document,
    params_to_dict,
    parse_observed_csv,
    parse_result_json,
    parse_strata_csv,
    result_document,
)

HEADER = "mode,crime,spouse,count\n"


def _rows(table):
    return format_observed_csv(table).splitlines()[1:]


class TestFixtures:
    @pytest.mark.parametrize(
        "name,total",
        [("table2", 571348), ("table3", 571348), ("table9", 406037), ("table12", 406037)],
    )
    def test_totals(self, name, total):
        assert load_fixture(name).total == pytest.approx(total, abs=0.05)

    def test_table2_crime_totals(self):
        np.testing.assert_array_equal(load_fixture("table2").crime_totals(), [449, 948, 2366, 341, 567244])

    def test_table8_totals(self):
        early, late = load_strata_fixture("table8")
        assert early.n == 99235  # personal interviews, 1993-97
        assert late.n == 159009  # personal interviews, 1998-2004
        assert early.n == load_fixture("table9").personal.sum()
        assert late.n == load_fixture("table2").personal.sum()

    def test_dv_strata_from_observed_tables(self):
        early, late = load_strata_fixture("table8_dv")
        t9, t2 = load_fixture("table9"), load_fixture("table2")
        assert (early.a, early.b) == tuple(t9.personal[1])
        assert (late.a, late.b) == tuple(t2.personal[1])
        assert early.n == t9.personal.sum()

    def test_weighted_cells_verbatim(self):
        t3 = load_fixture("table3")
        assert t3.personal[1, 1] == 492.70
        assert t3.telephone[4] == 407890.86


class TestParseObserved:
    def test_round_trip(self, table3):
        again = parse_observed_csv(format_observed_csv(table3))
        np.testing.assert_array_equal(again.as_vector(), table3.as_vector())

    def test_bytes_with_bom(self, table2):
        data = "\ufeff" + format_observed_csv(table2)
        assert parse_observed_csv(data.encode()).total == 571348

    def test_row_order_free(self, table2):
        rows = _rows(table2)[::-1]
        again = parse_observed_csv(HEADER + "\n".join(rows))
        np.testing.assert_array_equal(again.as_vector(), table2.as_vector())

    def test_missing_cell(self, table2):
        rows = [r for r in _rows(table2) if not r.startswith("telephone,no_crime")]
        with pytest.raises(MissingCell, match=r"telephone, no_crime, na"):
            parse_observed_csv(HEADER + "\n".join(rows))

    def test_duplicate_cell_lines(self, table2):
        rows = _rows(table2)
        rows.append(rows[2])
        with pytest.raises(DuplicateCell) as info:
            parse_observed_csv(HEADER + "\n".join(rows))
        assert info.value.lines == (4, 17)

    @pytest.mark.parametrize(
        "bad,exc,line",
        [
            ("phone,rape,na,1", BadEnum, 2),
            ("telephone,murder,na,1", BadEnum, 2),
            ("telephone,rape,present,1", BadEnum, 2),
            ("personal,rape,na,1", BadEnum, 2),
            ("telephone,rape,na,abc", BadNumber, 2),
            ("telephone,rape,na,-3", BadNumber, 2),
            ("telephone,rape,na,nan", BadNumber, 2),
            ("telephone,rape,na", BadHeader, 2),
        ],
    )
    def test_bad_rows(self, bad, exc, line):
        with pytest.raises(exc) as info:
            parse_observed_csv(HEADER + bad + "\n")
        assert info.value.lines == (line,)
        assert f"line {line}" in str(info.value)

    def test_bad_header(self):
        with pytest.raises(BadHeader):
            parse_observed_csv("mode,crime,count\n")
        with pytest.raises(BadHeader):
            parse_observed_csv("")

    def test_empty_table(self, table2):
        with pytest.raises(EmptyTable):
            parse_observed_csv(format_observed_csv(table2.scaled(0.0)))

    def test_units(self, table2, table9):
        series = SamplingUnitSeries((table9, table2), ("early", "late"))
        text = format_observed_csv(series)
        assert text.splitlines()[0] == "mode,crime,spouse,count,unit"
        parsed = parse_observed_csv(text)
        assert isinstance(parsed, SamplingUnitSeries)
        assert parsed.labels == ("early", "late")
        np.testing.assert_array_equal(parsed.pooled.as_vector(), (table9 + table2).as_vector())

    def test_unit_missing_cell(self, table2):
        lines = format_observed_csv(SamplingUnitSeries((table2, table2), ("a", "b"))).splitlines()
        with pytest.raises(MissingCell, match="unit 'b'"):
            parse_observed_csv("\n".join(lines[:-1]))


class TestStrata:
    def test_parse(self):
        strata = parse_strata_csv("stratum,a,b,c,d\nx,1,2,3,4.5\ny,5,6,7,8\n")
        assert [s.label for s in strata] == ["x", "y"]
        assert strata[0].d == 4.5

    def test_duplicate(self):
        with pytest.raises(DuplicateCell) as info:
            parse_strata_csv("stratum,a,b,c,d\nx,1,2,3,4\nx,5,6,7,8\n")
        assert info.value.lines == (2, 3)

    def test_bad_number(self):
        with pytest.raises(BadNumber):
            parse_strata_csv("stratum,a,b,c,d\nx,1,2,three,4\n")


class TestResultJson:
    def test_round_trip_params(self, fit10, table2, prior9):
        data = emit_result_json(fit10, observed=table2, prior=prior9)
        doc = parse_result_json(data)
        params = params_from_document(doc)
        np.testing.assert_array_equal(params.monitored(), fit10.params.monitored())
        assert doc["method"] == "emb"
        assert doc["prior"]["lambda_rho"] == prior9.lambda_rho
        assert [r.parameter for r in doc["shrinkage_records"]] == ["rho", "delta", "tau"]

    def test_rates_section(self, fit10, table2):
        doc = parse_result_json(emit_result_json(fit10, observed=table2))
        assert doc["rates"]["fitted"]["rape"] == pytest.approx(1.35, abs=0.005)
        assert doc["rates"]["observed"]["rape"] == pytest.approx(0.79, abs=0.005)

    def test_canonical(self, fit10):
        data = emit_result_json(fit10)
        doc = json.loads(data)
        assert data == (json.dumps(doc, sort_keys=True, indent=2) + "\n").encode()
        assert emit_result_json(fit10) == data

    def test_full_precision(self, fit10):
        doc = json.loads(emit_result_json(fit10))
        for key, value in fit10.params.as_flat().items():
            if key.startswith("omega"):
                continue
            assert doc["params"][key] == value

    def test_nan_rejected(self, fit10):
        bad = TestResult(float("nan"), 1, 0.5)
        with pytest.raises(ResultSerializationError):
            emit_result_json(bad)

    def test_jackknife_document(self, table2):
        series = SamplingUnitSeries((table2, table2.scaled(0.5), table2.scaled(2.0)))
        result = jackknife_variance(series, config=FitConfig(tolerance=1e-10))
        doc = parse_result_json(emit_result_json(result, observed=series.pooled))
        assert set(doc["jackknife"]["variances"]) == set(result.variance)
        assert len(doc["jackknife"]["replicates"]) == 3

    def test_saturated_params(self, table2):
        fit = fit_em(table2, FitConfig(tolerance=1e-8, omega_mode="saturated"))
        params = params_from_document(params_to_dict(fit.params))
        assert params.omega.kind == "saturated"
        np.testing.assert_array_equal(params.omega.matrix, fit.params.omega.matrix)

    def test_input_digest(self, fit10):
        doc = result_document(fit10, input_digest="sha256:abc")
        assert doc["input_digest"] == "sha256:abc"
        assert doc["tool"]["name"] == "gagbias"

    def test_infinite_k_hat_is_null(self, fit10):
        _, _, _, records = b_step(PseudoCounts(0, 0, 1, 3, 10, 10), PriorSpec(0.5, 0.2, 0.25))
        fit = dataclasses.replace(fit10, shrinkage=records)
        doc = parse_result_json(emit_result_json(fit))
        assert doc["shrinkage"][0]["k_hat"] is None
        assert doc["shrinkage"][1]["k_hat"] is None
        assert math.isinf(doc["shrinkage_records"][0].k_hat)
        assert doc["shrinkage_records"][0].flagged
