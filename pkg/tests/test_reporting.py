import json
import os
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from cflforge.reporting import (
    ReportError,
    compare_runs,
    emit_plots,
    render_figures,
    write_csvs,
)


def fake_report(name, seed, acc, fgt, scenario="domain_rotate"):
    t = len(acc)
    return {
        "name": name,
        "scenario": scenario,
        "seed": seed,
        "config": {},
        "baseline_accuracy": [25.0] * t,
        "accuracy_matrix": [[50.0] * t for _ in range(t)],
        "avg_accuracy": acc,
        "avg_forgetting": fgt,
        "bwt": 0.0,
        "fwt": 0.0,
        "final_acc": acc[-1],
        "final_fgt": fgt[-1],
        "comm": {},
    }


def write_fake_reports(tmp_path, specs):
    paths = []
    for i, rep in enumerate(specs):
        path = tmp_path / f"r{i}.json"
        path.write_text(json.dumps(rep))
        paths.append(str(path))
    return paths


class TestEmitPlots:
    def test_single_seed_single_polyline_no_band(self, tmp_path):
        paths = write_fake_reports(
            tmp_path, [fake_report("solo", 0, [70.0, 60.0], [None, 12.0])]
        )
        out = emit_plots(paths, str(tmp_path / "plots"))
        for svg_path in out:
            root = ET.parse(svg_path).getroot()
            ns = "{http://www.w3.org/2000/svg}"
            polylines = root.findall(f"{ns}polyline")
            polygons = root.findall(f"{ns}polygon")
            assert len(polylines) == 1
            assert len(polygons) == 0

    def test_one_polyline_and_legend_entry_per_method(self, tmp_path):
        reports = [
            fake_report("fedavg", 0, [70.0, 60.0], [None, 12.0]),
            fake_report("fedavg", 1, [71.0, 61.0], [None, 11.0]),
            fake_report("hooked", 0, [72.0, 69.0], [None, 4.0]),
            fake_report("hooked", 1, [73.0, 70.0], [None, 3.0]),
        ]
        out = emit_plots(write_fake_reports(tmp_path, reports), str(tmp_path / "plots"))
        for svg_path in out:
            root = ET.parse(svg_path).getroot()
            ns = "{http://www.w3.org/2000/svg}"
            assert len(root.findall(f"{ns}polyline")) == 2
            assert len(root.findall(f"{ns}polygon")) == 2  # min/max bands
            legend = [t.text for t in root.findall(f"{ns}text")]
            assert "fedavg" in legend and "hooked" in legend

    def test_no_reports_rejected(self, tmp_path):
        with pytest.raises(ReportError):
            emit_plots([], str(tmp_path))

    def test_malformed_report_rejected(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{\"name\": \"x\"}")
        with pytest.raises(ReportError):
            emit_plots([str(bad)], str(tmp_path / "plots"))


class TestCompareRuns:
    def test_self_comparison_zero_delta(self, tmp_path):
        paths = write_fake_reports(
            tmp_path, [fake_report("only", 0, [70.0, 65.0], [None, 5.0])]
        )
        text = compare_runs(paths, "only")
        row = text.strip().splitlines()[1].split(",")
        assert float(row[6]) == 0.0 and float(row[7]) == 0.0

    def test_stats_match_hand_computation(self, tmp_path):
        reports = [
            fake_report("a", 0, [60.0], [None]),
            fake_report("a", 1, [70.0], [None]),
            fake_report("a", 2, [80.0], [None]),
            fake_report("base", 0, [50.0], [None]),
        ]
        paths = write_fake_reports(tmp_path, reports)
        text = compare_runs(paths, "base")
        lines = {ln.split(",")[0]: ln.split(",") for ln in text.strip().splitlines()[1:]}
        assert float(lines["a"][2]) == pytest.approx(70.0)
        assert float(lines["a"][3]) == pytest.approx(np.std([60, 70, 80]))
        assert float(lines["a"][6]) == pytest.approx(20.0)

    def test_row_order_stable(self, tmp_path):
        reports = [
            fake_report("zeta", 0, [60.0], [None]),
            fake_report("alpha", 0, [70.0], [None]),
        ]
        paths = write_fake_reports(tmp_path, reports)
        a = compare_runs(paths, "alpha")
        b = compare_runs(list(reversed(paths)), "alpha")
        assert a == b
        names = [ln.split(",")[0] for ln in a.strip().splitlines()[1:]]
        assert names == sorted(names)

    def test_scenario_mismatch_rejected(self, tmp_path):
        reports = [
            fake_report("a", 0, [60.0], [None]),
            fake_report("b", 0, [60.0], [None], scenario="class_il"),
        ]
        paths = write_fake_reports(tmp_path, reports)
        with pytest.raises(ReportError, match="scenario"):
            compare_runs(paths, "a")

    def test_unknown_baseline_rejected(self, tmp_path):
        paths = write_fake_reports(tmp_path, [fake_report("a", 0, [60.0], [None])])
        with pytest.raises(ReportError, match="baseline"):
            compare_runs(paths, "nope")

    def test_csv_written(self, tmp_path):
        paths = write_fake_reports(tmp_path, [fake_report("a", 0, [60.0], [None])])
        out = tmp_path / "cmp.csv"
        text = compare_runs(paths, "a", csv_path=str(out))
        assert out.read_text() == text


class TestFiguresAndCsv:
    def test_figures_rendered(self, tmp_path):
        reports = [
            fake_report("m", 0, [70.0, 60.0], [None, 12.0]),
            fake_report("m", 1, [72.0, 63.0], [None, 10.0]),
        ]
        paths = render_figures(reports, str(tmp_path))
        assert all(os.path.exists(p) and os.path.getsize(p) > 0 for p in paths)
        assert {os.path.basename(p) for p in paths} == {
            "accuracy_curve_m.png",
            "forgetting_curve_m.png",
        }

    def test_csv_layout(self, tmp_path):
        reports = [fake_report("m", 0, [70.0, 60.0], [None, 12.0])]
        paths = write_csvs(reports, str(tmp_path))
        lines = open(paths["metrics"]).read().splitlines()
        assert lines[0] == "seed,after_task,avg_accuracy,avg_forgetting"
        assert lines[1] == "0,0,70,"
        assert lines[2] == "0,1,60,12"
