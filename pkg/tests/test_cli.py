import json

import pytest

from p2gsim.cli import main


@pytest.fixture(scope="module")
def traces(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    for case in ("reference", "lpgn"):
        assert main(["run", "--scenario", "summer_day.json", "--case", case,
                     "--out", str(d / case)]) == 0
    return d


def test_summarize_and_compare(traces, capsys):
    capsys.readouterr()
    assert main(["summarize", "--trace", str(traces / "reference"), "--json"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["case"] == "reference"
    assert main(["compare", "--ref", str(traces / "reference"),
                 "--variant", str(traces / "lpgn")]) == 0
    out = capsys.readouterr().out
    assert "plants.total.sng_gwh" in out


def test_plotdata_to_file(traces, tmp_path):
    out = tmp_path / "p.csv"
    assert main(["plotdata", "--trace", str(traces / "reference"), "--view", "pressure",
                 "--from", "2023-07-19T12:00", "--to", "2023-07-19T18:00", "--out", str(out)]) == 0
    assert out.read_text().splitlines()[0] == "timestamp,node_id,pressure_barg"


@pytest.mark.parametrize("argv", [
    ["plotdata", "--trace", "{ref}", "--view", "heatmap"],
    ["plotdata", "--trace", "{ref}", "--view", "balance", "--from", "2020-01-01", "--to", "2020-01-02"],
    ["summarize", "--trace", "{missing}"],
    ["run", "--scenario", "no_such.json", "--out", "{tmp}"],
    ["compare", "--ref", "{ref}", "--variant", "{other}"],
])
def test_validation_errors_exit_2(traces, tmp_path, argv, capsys):
    other = tmp_path / "other"
    main(["run", "--scenario", "winter_day.json", "--out", str(other), "--no-detail"])
    fill = {"ref": str(traces / "reference"), "missing": str(tmp_path / "nothing"),
            "tmp": str(tmp_path / "o"), "other": str(other)}
    assert main([a.format(**fill) for a in argv]) == 2
    assert "error" in capsys.readouterr().err


def test_simulation_fault_exit_3(tmp_path, monkeypatch):
    from p2gsim import dispatch
    from p2gsim.errors import NegativeMass

    def boom(*a, **k):
        raise NegativeMass("forced")

    monkeypatch.setattr(dispatch.gas, "advance", boom)
    assert main(["run", "--scenario", "summer_day.json", "--out", str(tmp_path / "f")]) == 3
    assert (tmp_path / "f" / "meta.json").exists()


def test_calibrate_prints_efficiency(capsys):
    assert main(["calibrate", "--scenario", "winter_day.json"]) == 0
    from p2gsim.scenario import calibrate, load_scenario
    eta = float(capsys.readouterr().out)
    # one day includes draining the initial buffer charge, so no chain-efficiency bound here
    assert eta == pytest.approx(calibrate(load_scenario("winter_day.json")), abs=1e-10)
