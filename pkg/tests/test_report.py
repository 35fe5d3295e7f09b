import numpy as np
import pandas as pd
import pytest

from p2gsim import report
from p2gsim.errors import IncompleteTrace, ScenarioMismatch, UnknownView, WindowOutOfRange
from p2gsim.report import CaseDelta, compare_cases, emit_plotdata, summarize_seasonal
from p2gsim.results import ResultSet


def constant_trace(mw=1.0, hours=24, start="2023-07-19", step_s=900.0):
    n = int(hours * 3600 / step_s)
    ts = pd.date_range(start, periods=n, freq=f"{int(step_s)}s").strftime("%Y-%m-%dT%H:%M:%S")
    steps = np.arange(n)
    sy = pd.DataFrame({"step": steps, "timestamp": ts, "step_s": step_s, "load_mw": mw,
                       "gen_mw": 0.0, "lumped_surplus_mw": 0.0, "lumped_rpf_mw": 0.0,
                       "withdrawal_kg_s": 0.0, "sng_kg_s": 0.0, "citygate_import_kg_s": 0.0,
                       "linepack_kg": 0.0, "linepack_start_kg": 0.0})
    tr = pd.DataFrame({"step": steps, "transformer": "T", "load_mw": mw, "res_mw": 0.0,
                       "surplus_mw": 0.0, "rpf_mw": 0.0})
    pl = pd.DataFrame({"step": steps, "plant": 1, "el_kw": 1000.0 * mw, "sng_kw": 0.0})
    meta = {"case": "reference", "config_hash": "h", "steps": n, "non_heating_months": [4, 5, 6, 7, 8, 9]}
    return ResultSet(meta, {"system": sy, "transformers": tr, "plants": pl})


def test_rectangle_integration():
    s = summarize_seasonal(constant_trace())
    assert s.value("non_heating", "plants.1.el_gwh") == pytest.approx(0.024, abs=1e-15)
    assert s.value("year", "transformers.T.demand_gwh") == pytest.approx(0.024, abs=1e-15)
    assert s.value("heating", "plants.total.el_gwh") == 0.0


def test_seasons_partition_year(four_weeks):
    s = summarize_seasonal(four_weeks["runs"]["reference"])
    for group, ents in s.cells["year"].items():
        for ent, metrics in ents.items():
            for m, v in metrics.items():
                h = s.cells["heating"][group][ent][m]
                nh = s.cells["non_heating"][group][ent][m]
                assert v == h + nh


def test_surplus_concentrated_on_tr3(four_weeks):
    s = summarize_seasonal(four_weeks["runs"]["reference"])
    surplus = {t: s.value("year", f"transformers.{t}.surplus_gwh") for t in ("TR1", "TR2", "TR3")}
    share = surplus["TR3"] / sum(surplus.values())
    assert 0.55 <= share <= 0.7


def test_identical_inputs_zero_deltas(summer_ref):
    s = summarize_seasonal(summer_ref)
    deltas = compare_cases(s, s)
    assert deltas and all(d.delta in (0.0, None) for d in deltas)
    assert {d.metric for d in deltas if d.headline} == set(report.HEADLINE)


def cells(value):
    return {"plants": {"total": {"sng_gwh": value}}}


def summary(value, h="h", months=(4, 5, 6, 7, 8, 9)):
    return report.SeasonalSummary("x", h, months, {s: cells(value) for s in report.SEASONS})


def test_delta_examples():
    d = [x for x in compare_cases(summary(2.01), summary(1.42)) if x.season == "non_heating"][0]
    assert d.delta == pytest.approx(-0.2935, abs=1e-4)
    d = compare_cases(summary(1.35), summary(2.03))[0]
    assert d.delta == pytest.approx(0.5037, abs=1e-4)
    assert d.ratio == pytest.approx(1.50, abs=0.01)
    z = compare_cases(summary(0.0), summary(1.0))[0]
    assert isinstance(z, CaseDelta) and not z.defined


def test_mismatched_scenarios():
    with pytest.raises(ScenarioMismatch):
        compare_cases(summary(1.0), summary(1.0, h="other"))
    with pytest.raises(ScenarioMismatch):
        compare_cases(summary(1.0), summary(1.0, months=(5, 6, 7, 8)))


def test_incomplete_trace():
    tr = constant_trace()
    tr.meta["steps"] = 200
    with pytest.raises(IncompleteTrace):
        summarize_seasonal(tr)


def test_pressure_view(summer_ref):
    df = emit_plotdata(summer_ref, "pressure")
    assert list(df.columns) == ["timestamp", "node_id", "pressure_barg"]
    assert df.pressure_barg.max() <= 5.02
    assert len(df) == 96 * 70


def test_buffer_view(summer_ref):
    df = emit_plotdata(summer_ref, "buffer")
    assert df.soc.between(0, 1).all()


def test_transformer_view_matches_trace(winter_ref):
    df = emit_plotdata(winter_ref, "transformer")
    tr = winter_ref["transformers"]
    assert np.array_equal(df.power_mw.to_numpy(), tr.power_mw.to_numpy())
    rpf = df.groupby("transformer").rpf_mw.sum()
    assert rpf["TR3"] > 0 and rpf["TR3"] == rpf.max()


def test_window_and_errors(summer_ref):
    df = emit_plotdata(summer_ref, "balance", ("2023-07-19T12:00", "2023-07-19T13:00"))
    assert len(df) == 5
    with pytest.raises(UnknownView):
        emit_plotdata(summer_ref, "heatmap")
    with pytest.raises(WindowOutOfRange):
        emit_plotdata(summer_ref, "balance", ("2023-07-18T12:00", "2023-07-19T13:00"))
