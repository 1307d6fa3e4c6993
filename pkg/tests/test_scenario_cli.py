import csv
import io
import json
import subprocess
import sys

import pytest

from builders import document, vehicle
from cevsim import cli
from cevsim.scenario import DEMOS, ScenarioError, build, demo_path, load, validate, validate_document
from cevsim.simulator import InternalError, Metrics, Simulation


def write(tmp_path, doc, name="scenario.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc), encoding="utf-8")
    return path


class TestValidate:
    @pytest.mark.parametrize("name", DEMOS)
    def test_bundled_demos_are_clean(self, name):
        assert validate(demo_path(name)) == []
        load(demo_path(name))

    def test_unknown_cell(self):
        [diag] = validate_document(document([vehicle(cell="cell-x")]))
        assert diag.path == "vehicles[0].cell"
        assert "car1" in diag.message and "cell-x" in diag.message

    def test_repetition_set_without_one(self):
        doc = document([vehicle()])
        doc["radio"] = {"repetition_set": [2, 4]}
        [diag] = validate_document(doc)
        assert diag.path == "radio"
        assert "repetition_set must contain 1" in diag.message

    def test_unreadable(self, tmp_path):
        [diag] = validate(tmp_path / "missing.json")
        assert "cannot read" in diag.message

    def test_unparseable(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{nope", encoding="utf-8")
        assert len(validate(path)) == 1

    def test_schema_errors_carry_path(self):
        doc = document([vehicle()])
        doc["vehicles"][0]["ue_category"] = "Cat9"
        [diag] = validate_document(doc)
        assert diag.path == "vehicles[0].ue_category"

    @pytest.mark.parametrize(
        "trace, fragment",
        [
            ([[5, 130.0]], "time 0"),
            ([[0, 130.0], [0, 140.0]], "increasing"),
            ([[0, -1.0]], ""),
        ],
    )
    def test_bad_traces(self, trace, fragment):
        diags = validate_document(document([vehicle(trace=trace)]))
        assert diags and fragment in diags[0].message

    def test_duplicate_vehicle_ids(self):
        doc = document([vehicle(), vehicle(imsi="262010000000002")])
        assert any("car1" in d.message for d in validate_document(doc))

    def test_imsi_without_home_network(self):
        doc = document([vehicle(imsi="999990000000001")])
        assert validate_document(doc)

    def test_scripted_event_unknown_service(self):
        doc = document([vehicle(scripted_events=[{"time": 100, "action": "send", "service": "nope"}])])
        [diag] = validate_document(doc)
        assert "nope" in diag.message

    def test_build_raises_with_all_diagnostics(self):
        doc = document([vehicle(cell="cell-x")])
        doc["radio"] = {"repetition_set": [2, 4]}
        with pytest.raises(ScenarioError) as info:
            build(doc)
        assert len(info.value.diagnostics) == 2


class TestCli:
    def test_run_json_report(self, tmp_path, capsys):
        path = write(tmp_path, document([vehicle(trace=((0, 130.0), (5000, 150.6)))]))
        assert cli.main(["run", str(path), "--report", "json"]) == 0
        report = json.loads(capsys.readouterr().out)
        assert report["services"]["car1/battery-monitor"]["delivery_ratio"] == 1.0
        ledger = report["cells"]["cell-a"]
        assert set(ledger) == {"subframes_used", "subframes_used_ce", "transmissions"}
        assert ledger["subframes_used"] == 6 * 32

    def test_json_round_trip(self, tmp_path, capsys):
        path = write(tmp_path, document([vehicle(trace=((0, 130.0), (5000, 150.6)))]))
        cli.main(["run", str(path), "--report", "json"])
        _, metrics = Simulation(load(path)).run()
        assert Metrics.from_dict(json.loads(capsys.readouterr().out)) == metrics

    def test_csv_report(self, tmp_path, capsys):
        path = write(tmp_path, document([vehicle()]))
        assert cli.main(["run", str(path), "--report", "csv"]) == 0
        rows = list(csv.reader(io.StringIO(capsys.readouterr().out)))
        assert rows[0] == ["section", "entity", "metric", "value"]
        assert ["services", "car1/battery-monitor", "delivery_ratio", "1.0"] in rows

    def test_human_report_uses_one_decimal_db(self, tmp_path, capsys):
        path = write(tmp_path, document([vehicle()]))
        assert cli.main(["run", str(path)]) == 0
        out = capsys.readouterr().out
        assert "normal MCL 140.7 dB, hysteresis 3.0 dB" in out

    def test_event_log_csv(self, tmp_path, capsys):
        path = write(tmp_path, document([vehicle()]))
        log_path = tmp_path / "log.csv"
        assert cli.main(["run", str(path), "--log", str(log_path), "--report", "json"]) == 0
        rows = list(csv.reader(log_path.open(encoding="utf-8", newline="")))
        log, _ = Simulation(load(path)).run()
        assert rows[0] == ["time_ms", "node", "category", "detail"]
        assert len(rows) - 1 == len(log)
        assert rows[1] == ["0", "sim", "sim", "start"]

    def test_validate_exit_codes(self, tmp_path, capsys):
        good = write(tmp_path, document([vehicle()]), "good.json")
        bad = write(tmp_path, document([vehicle(cell="cell-x")]), "broken.json")
        assert cli.main(["validate", str(good)]) == 0
        assert cli.main(["validate", str(bad)]) == 2
        err = capsys.readouterr().err
        assert err.startswith("error: vehicles[0].cell:")

    def test_run_invalid_exits_2(self, tmp_path, capsys):
        bad = write(tmp_path, document([vehicle(cell="cell-x")]))
        assert cli.main(["run", str(bad)]) == 2
        assert capsys.readouterr().out == ""

    def test_runtime_error_exits_3(self, tmp_path, capsys, monkeypatch):
        def boom(self):
            raise InternalError("queue corrupted")

        monkeypatch.setattr(Simulation, "run", boom)
        path = write(tmp_path, document([vehicle()]))
        assert cli.main(["run", str(path)]) == 3
        assert "queue corrupted" in capsys.readouterr().err

    def test_demo_garage_with_and_without_ce(self, capsys):
        ratios = {}
        for name in ("garage-parked", "garage-parked-no-ce"):
            assert cli.main(["demo", name, "--report", "json"]) == 0
            report = json.loads(capsys.readouterr().out)
            ratios[name] = report["services"]["car1/battery-monitor"]["delivery_ratio"]
        assert ratios == {"garage-parked": 1.0, "garage-parked-no-ce": 0.0}

    def test_module_entry_point(self):
        proc = subprocess.run(
            [sys.executable, "-m", "cevsim", "demo", "restricted", "--report", "json"],
            capture_output=True,
            text=True,
            check=False,
        )
        assert proc.returncode == 0
        assert "car-restricted/battery-monitor" in json.loads(proc.stdout)["services"]
