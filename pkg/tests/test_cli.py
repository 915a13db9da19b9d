import csv
import json
import shutil
from pathlib import Path

import pytest

from incabs.cli import BadSlice, main, parse_slice
from incabs.funcs import instantiate_builtin, parse_function_spec

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def write_config(tmp_path, **doc):
    doc.setdefault("out_dir", str(tmp_path / "out"))
    path = tmp_path / f"{doc.get('name', 'case')}.json"
    path.write_text(json.dumps(doc))
    return path


def rastrigin(tmp_path, d, ppd, **extra):
    return write_config(tmp_path, name=f"r{d}", function={"builtin": "rastrigin", "params": {"d": d}},
                        points_per_dim=ppd, **extra)


def test_affine_config_exact(tmp_path, capsys):
    shutil.copy(CONFIGS / "affine.dsl", tmp_path)
    doc = json.loads((CONFIGS / "affine.json").read_text())
    doc["out_dir"] = str(tmp_path / "out")
    path = write_config(tmp_path, **doc)
    assert main(["abstract", str(path)]) == 0
    report = json.loads((tmp_path / "out" / "report.json").read_text())
    assert report["passed"]
    for m in report["methods"]:
        assert m["status"] == "ok" and abs(m["theta"]) <= 1e-9
    assert "theta=" in capsys.readouterr().out


def test_cap_below_grid_reports_na(tmp_path):
    path = rastrigin(tmp_path, 3, 5, budget=50, memory_cap=60)
    assert main(["abstract", str(path)]) == 3
    report = json.loads((tmp_path / "out" / "report.json").read_text())
    statuses = {m["method"]: m["status"] for m in report["methods"]}
    assert statuses["incremental"] == "ok" and statuses["onestep"] != "ok"
    assert report["method_comparison"]["theta_onestep"] is None
    assert "N/A" in (tmp_path / "out" / "report.txt").read_text()


@pytest.mark.parametrize("doc", [
    {"function": {"builtin": "rastrigin", "params": {"d": 1}}, "points_per_dim": 5, "method": "both"},
    {"function": {"builtin": "rastrigin", "params": {"d": 1}}, "points_per_dim": 5, "budget": 4, "memory_cap": 3},
    {"function": {"builtin": "rastrigin"}, "points_per_dim": 5, "budget": 4, "colour": "red"},
    {"function": {"dsl_text": "f0 = x0"}, "points_per_dim": 5, "budget": 4},
    {"function": {"builtin": "nope"}, "points_per_dim": 5, "budget": 4},
])
def test_config_errors_exit_1(tmp_path, doc, capsys):
    assert main(["abstract", str(write_config(tmp_path, **doc))]) == 1
    assert "error" in capsys.readouterr().err


def test_missing_config_exits_1(tmp_path):
    assert main(["abstract", str(tmp_path / "absent.json")]) == 1


def test_budget_below_minimum_exits_1(tmp_path):
    assert main(["abstract", str(rastrigin(tmp_path, 2, 11, budget=4))]) == 1


def test_artifacts_are_byte_identical(tmp_path):
    outs = []
    for run in ("a", "b"):
        path = rastrigin(tmp_path, 2, 21, budget=60, out_dir=str(tmp_path / run), plot={"slice": "x1=0"})
        assert main(["abstract", str(path)]) == 0
        outs.append(tmp_path / run)
    names = sorted(p.name for p in outs[0].iterdir())
    assert names == sorted(p.name for p in outs[1].iterdir())
    assert "plot_incremental.csv" in names and "abstraction_onestep.json" in names
    for name in names:
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes(), name


def test_plot_data_slice(tmp_path):
    path = rastrigin(tmp_path, 2, 51, method="onestep")
    assert main(["abstract", str(path)]) == 0
    csv_path = tmp_path / "slice.csv"
    assert main(["plot-data", str(path), str(tmp_path / "out" / "abstraction_onestep.json"),
                 "--plot-slice", "x1=0", "--output", str(csv_path)]) == 0
    rows = list(csv.reader(csv_path.open()))
    assert rows[0] == ["x0", "f0", "upper_f0", "lower_f0"]
    assert len(rows) == 52
    for row in rows[1:]:
        f, up, lo = map(float, row[1:])
        assert lo - 1e-6 <= f <= up + 1e-6


def test_plot_data_increments(tmp_path):
    path = rastrigin(tmp_path, 1, 41, budget=8, method="incremental")
    assert main(["abstract", str(path)]) == 0
    csv_path = tmp_path / "inc.csv"
    assert main(["plot-data", str(path), str(tmp_path / "out" / "abstraction_incremental.json"),
                 "--increments", "1,3,5,7", "--output", str(csv_path)]) == 0
    rows = list(csv.reader(csv_path.open()))
    groups = [c for c in rows[0] if c.startswith("upper_k")]
    assert groups == ["upper_k1_f0", "upper_k3_f0", "upper_k5_f0", "upper_k7_f0"]
    k1 = rows[0].index("upper_k1_f0")
    assert any(r[k1] == "" for r in rows[1:]) and any(r[k1] != "" for r in rows[1:])


def test_plot_data_bad_increment(tmp_path):
    path = rastrigin(tmp_path, 1, 11, method="onestep")
    assert main(["abstract", str(path)]) == 0
    assert main(["plot-data", str(path), str(tmp_path / "out" / "abstraction_onestep.json"),
                 "--increments", "2", "--output", str(tmp_path / "x.csv")]) == 1


def test_parse_slice():
    spec = parse_function_spec("states: 2\ninputs: 1\nf0 = x0*u0\nf1 = x1")
    assert parse_slice("x1=0, u0=2.5", spec) == {1: 0.0, 2: 2.5}
    assert parse_slice("", spec) == {}
    for bad in ("x2=0", "x1", "x1=a", "x0=1,x1=2,u0=3", "x1=0,x1=1", "y0=1"):
        with pytest.raises(BadSlice):
            parse_slice(bad, spec)
    with pytest.raises(BadSlice):
        parse_slice("x0=0", instantiate_builtin("rastrigin", {"d": 1}))


def test_mesh_info(tmp_path, capsys):
    path = rastrigin(tmp_path, 2, 51, budget=50)
    assert main(["mesh-info", str(path)]) == 0
    out = capsys.readouterr().out
    assert "s_max: 2601" in out and "planned increments" in out


def test_verify_subcommand(tmp_path, capsys):
    path = rastrigin(tmp_path, 2, 21, budget=60)
    assert main(["abstract", str(path)]) == 0
    saved = tmp_path / "out" / "abstraction_incremental.json"
    assert main(["verify", str(path), str(saved)]) == 0
    assert "PASS" in capsys.readouterr().out
    doc = json.loads(saved.read_text())
    doc["h_upper"]["data"] = [v - 5.0 for v in doc["h_upper"]["data"]]
    doc["raw"]["h_upper"]["data"] = [v - 5.0 for v in doc["raw"]["h_upper"]["data"]]
    saved.write_text(json.dumps(doc))
    assert main(["verify", str(path), str(saved)]) == 2
    other = rastrigin(tmp_path, 2, 11, budget=60)
    assert main(["verify", str(other), str(saved)]) == 1


def test_bench_heuristics(tmp_path, capsys):
    assert main(["bench", "heuristics", "--out-dir", str(tmp_path), "--workers", "3"]) == 0
    text = (tmp_path / "heuristics.txt").read_text()
    assert "center" in text and "corner" in text
    summary = json.loads((tmp_path / "heuristics.json").read_text())
    assert all(v["passed"] for v in summary.values())
    assert "seconds" in capsys.readouterr().out
